"""Independent reference values frozen into the Rust tests.

Uses OpenCV's projectPoints (radial k1, k2 model) and scipy's rotation
utilities; nothing here shares code with the crate.
"""
import math

import cv2
import numpy as np
from scipy.spatial.transform import Rotation

np.set_printoptions(precision=17)

# Lens used throughout the oracle values.
fx, fy, u0, v0, k1, k2 = 2679.5, 2678.9, 625.40, 514.64, -0.2553, 1.5709
K = np.array([[fx, 0, u0], [0, fy, v0], [0, 0, 1.0]])
dist = np.array([k1, k2, 0.0, 0.0])

# distort((1000, 700)): ideal pixel -> normalized ray at unit depth -> projectPoints.
x = (1000 - u0) / fx
y = (700 - v0) / fy
img, _ = cv2.projectPoints(np.array([[x, y, 1.0]]), np.zeros(3), np.zeros(3), K, dist)
print("distort_lens", repr(img[0, 0, 0]), repr(img[0, 0, 1]))

# project: 5 deg about axis (1, 2, 3)/norm, t = (0.1, -0.05, 2), point (0.3, -0.2, 1.5).
axis = np.array([1.0, 2.0, 3.0]) / math.sqrt(14.0)
rvec = axis * math.radians(5.0)
tvec = np.array([0.1, -0.05, 2.0])
pts = np.array([[0.3, -0.2, 1.5], [-0.25, 0.1, 0.5], [0.0, 0.0, 3.0]])
img, _ = cv2.projectPoints(pts, rvec, tvec, K, dist)
for p, q in zip(pts, img[:, 0, :]):
    print("project_lens", p.tolist(), repr(q[0]), repr(q[1]))

# Rodrigues matrix for the same rvec (scipy).
print("rodrigues", Rotation.from_rotvec(rvec).as_matrix().tolist())

# Euler: R = Rz Ry Rx with the device attitude angles (extrinsic xyz in scipy).
ang = [-1.5324, -0.0632, -0.4851]
R = Rotation.from_euler("xyz", ang, degrees=True).as_matrix()
print("euler_device_matrix", R.tolist())

# Far target direction.
X, Y, Z = 1749.8, 19.3, 3671.8
print("far_target_yaw", repr(math.degrees(math.atan2(X, Z))))
print("far_target_pitch", repr(math.degrees(math.atan2(-Y, math.hypot(X, Z)))))

print("nominal_12_4.5", repr(1000 * 12 / 4.5), "nominal_20_4.5", repr(1000 * 20 / 4.5))
