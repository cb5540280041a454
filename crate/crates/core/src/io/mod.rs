//! File formats: correspondence datasets, TOML configuration and reports.

pub mod config;
pub mod dataset;
pub mod report;

use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
