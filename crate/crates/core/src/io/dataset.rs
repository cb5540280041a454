//! Line-oriented correspondence files.
//!
//! ```text
//! collimcal-dataset 1
//! role test
//! frame 1280 1024
//! units px m
//! seed 42
//! scenario-sha256 0f3a...
//! columns id u v xt yt
//! 0 102.53 87.1 -0.05 -0.05
//! ...
//! end
//! ```
//!
//! Floats are written in the shortest decimal form that parses back to the
//! same bits. See `docs/formats.md` for the full grammar.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::Vector2;

use crate::attitude::PlanarCorrespondence;
use crate::geometry::{CameraIntrinsics, CameraModel, DistortionCoefficients, ImageFrame, PixelPoint, Point3};

pub const DATASET_MAGIC: &str = "collimcal-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct DatasetError {
    pub line: usize,
    pub message: String,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, DatasetError> {
    Err(DatasetError {
        line,
        message: message.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraRole {
    Reference,
    Test,
}

impl CameraRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            CameraRole::Reference => "reference",
            CameraRole::Test => "test",
        }
    }
}

/// Record layout after the mandatory `id u v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Columns {
    Pixel,
    /// `X Y Z`, meters.
    Point,
    /// `xt yt`, meters on the reticle plane.
    Target,
}

impl Columns {
    fn header(&self) -> &'static str {
        match self {
            Columns::Pixel => "id u v",
            Columns::Point => "id u v x y z",
            Columns::Target => "id u v xt yt",
        }
    }

    fn width(&self) -> usize {
        match self {
            Columns::Pixel => 3,
            Columns::Point => 6,
            Columns::Target => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetRecord {
    pub id: u32,
    pub pixel: PixelPoint,
    pub point: Option<Point3>,
    pub target: Option<Vector2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub role: CameraRole,
    pub frame: ImageFrame,
    pub seed: Option<u64>,
    pub scenario_sha256: Option<String>,
    /// Known parameters of the camera that took the image (reference role).
    pub camera: Option<CameraModel>,
    pub columns: Columns,
    pub records: Vec<DatasetRecord>,
}

/// Shortest round-trip decimal.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

impl DatasetFile {
    pub fn pixels(&self) -> Vec<(u32, PixelPoint)> {
        self.records.iter().map(|r| (r.id, r.pixel)).collect()
    }

    /// Records with reticle coordinates.
    pub fn planar(&self) -> Option<Vec<PlanarCorrespondence>> {
        self.records
            .iter()
            .map(|r| {
                r.target.map(|target| PlanarCorrespondence {
                    id: r.id,
                    pixel: r.pixel,
                    target,
                })
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let f = fmt_f64;
        writeln!(s, "{DATASET_MAGIC} {DATASET_VERSION}").unwrap();
        writeln!(s, "role {}", self.role.as_str()).unwrap();
        writeln!(s, "frame {} {}", self.frame.width, self.frame.height).unwrap();
        writeln!(s, "units px m").unwrap();
        match self.seed {
            Some(seed) => writeln!(s, "seed {seed}").unwrap(),
            None => writeln!(s, "seed none").unwrap(),
        }
        writeln!(s, "scenario-sha256 {}", self.scenario_sha256.as_deref().unwrap_or("none")).unwrap();
        if let Some(c) = &self.camera {
            let (k, d) = (c.intrinsics, c.distortion);
            writeln!(
                s,
                "camera {} {} {} {} {} {}",
                f(k.fx),
                f(k.fy),
                f(k.u0),
                f(k.v0),
                f(d.k1),
                f(d.k2)
            )
            .unwrap();
        }
        writeln!(s, "columns {}", self.columns.header()).unwrap();
        for r in &self.records {
            write!(s, "{} {} {}", r.id, f(r.pixel.u), f(r.pixel.v)).unwrap();
            match (self.columns, r.point, r.target) {
                (Columns::Point, Some(p), _) => {
                    write!(s, " {} {} {}", f(p.x), f(p.y), f(p.z)).unwrap()
                }
                (Columns::Target, _, Some(t)) => write!(s, " {} {}", f(t.x), f(t.y)).unwrap(),
                _ => {}
            }
            s.push('\n');
        }
        s.push_str("end\n");
        s
    }
}

fn parse_num<T: FromStr>(tok: &str, line: usize, what: &str) -> Result<T, DatasetError> {
    tok.parse()
        .or_else(|_| err(line, format!("cannot parse {what} from {tok:?}")))
}

fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64, DatasetError> {
    let v: f64 = parse_num(tok, line, what)?;
    if v.is_finite() {
        Ok(v)
    } else {
        err(line, format!("{what} is not finite"))
    }
}

impl FromStr for DatasetFile {
    type Err = DatasetError;

    fn from_str(text: &str) -> Result<Self, DatasetError> {
        // Blank lines and `#` comments are skipped.
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut next = |expect: &str| -> Result<(usize, Vec<&str>), DatasetError> {
            match lines.next() {
                Some((n, l)) => Ok((n, l.split_whitespace().collect())),
                None => err(0, format!("unexpected end of file, expected {expect}")),
            }
        };

        let (n, head) = next("header")?;
        if head.first() != Some(&DATASET_MAGIC) || head.len() != 2 {
            return err(n, format!("expected '{DATASET_MAGIC} <version>'"));
        }
        let version: u32 = parse_num(head[1], n, "schema version")?;
        if version != DATASET_VERSION {
            return err(n, format!("unsupported schema version {version}"));
        }

        let (n, role) = next("role")?;
        let role = match role.as_slice() {
            ["role", "reference"] => CameraRole::Reference,
            ["role", "test"] => CameraRole::Test,
            _ => return err(n, "expected 'role reference' or 'role test'"),
        };

        let (n, frame) = next("frame")?;
        let frame = match frame.as_slice() {
            ["frame", w, h] => ImageFrame::new(parse_num(w, n, "width")?, parse_num(h, n, "height")?)
                .or_else(|e| err(n, e.to_string()))?,
            _ => return err(n, "expected 'frame <width> <height>'"),
        };

        let (n, units) = next("units")?;
        if units != ["units", "px", "m"] {
            return err(n, "expected 'units px m'");
        }

        let (n, seed) = next("seed")?;
        let seed = match seed.as_slice() {
            ["seed", "none"] => None,
            ["seed", v] => Some(parse_num(v, n, "seed")?),
            _ => return err(n, "expected 'seed <u64|none>'"),
        };

        let (n, digest) = next("scenario-sha256")?;
        let scenario_sha256 = match digest.as_slice() {
            ["scenario-sha256", "none"] => None,
            ["scenario-sha256", h]
                if h.len() == 64 && h.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()) =>
            {
                Some(h.to_string())
            }
            _ => return err(n, "expected 'scenario-sha256 <64 lowercase hex digits|none>'"),
        };

        let (mut n, mut toks) = next("columns")?;
        let mut camera = None;
        if toks.first() == Some(&"camera") {
            if toks.len() != 7 {
                return err(n, "expected 'camera fx fy u0 v0 k1 k2'");
            }
            let v: Vec<f64> = toks[1..]
                .iter()
                .zip(["fx", "fy", "u0", "v0", "k1", "k2"])
                .map(|(t, w)| parse_f64(t, n, w))
                .collect::<Result<_, _>>()?;
            let k = CameraIntrinsics::new(v[0], v[1], v[2], v[3]).or_else(|e| err(n, e.to_string()))?;
            camera = Some(CameraModel::new(k, DistortionCoefficients::new(v[4], v[5])));
            (n, toks) = next("columns")?;
        }
        let columns = match toks.as_slice() {
            ["columns", "id", "u", "v"] => Columns::Pixel,
            ["columns", "id", "u", "v", "x", "y", "z"] => Columns::Point,
            ["columns", "id", "u", "v", "xt", "yt"] => Columns::Target,
            _ => {
                return err(
                    n,
                    "expected 'columns id u v', 'columns id u v x y z' or 'columns id u v xt yt'",
                )
            }
        };

        let mut records = vec![];
        let mut seen = BTreeSet::new();
        loop {
            let (n, toks) = next("'end'")?;
            if toks == ["end"] {
                break;
            }
            if toks.len() != columns.width() {
                return err(
                    n,
                    format!("expected {} fields, found {}", columns.width(), toks.len()),
                );
            }
            let id: u32 = parse_num(toks[0], n, "id")?;
            if !seen.insert(id) {
                return err(n, format!("duplicate id {id}"));
            }
            let pixel = PixelPoint::new(parse_f64(toks[1], n, "u")?, parse_f64(toks[2], n, "v")?);
            let mut rec = DatasetRecord {
                id,
                pixel,
                point: None,
                target: None,
            };
            match columns {
                Columns::Pixel => {}
                Columns::Point => {
                    rec.point = Some(Point3::new(
                        parse_f64(toks[3], n, "x")?,
                        parse_f64(toks[4], n, "y")?,
                        parse_f64(toks[5], n, "z")?,
                    ))
                }
                Columns::Target => {
                    rec.target = Some(Vector2::new(
                        parse_f64(toks[3], n, "xt")?,
                        parse_f64(toks[4], n, "yt")?,
                    ))
                }
            }
            records.push(rec);
        }
        if let Some((n, _)) = lines.next() {
            return err(n, "content after 'end'");
        }
        Ok(DatasetFile {
            role,
            frame,
            seed,
            scenario_sha256,
            camera,
            columns,
            records,
        })
    }
}
