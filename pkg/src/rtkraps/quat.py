"""Unit quaternion helpers.

Convention: q = [w, x, y, z], Hamilton product, and ``dcm_from_quat(q)``
is the matrix R such that rotating a vector by q gives R @ v.  With this
pairing, ``dcm_from_quat(quat_mult(a, b)) == dcm_from_quat(a) @ dcm_from_quat(b)``.
"""

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def normalize(q):
    n = np.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    return q / n


def quat_mult(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_from_rotvec(rv):
    angle = np.sqrt(rv[0] * rv[0] + rv[1] * rv[1] + rv[2] * rv[2])
    if angle < 1e-12:
        # second-order series keeps the map smooth through zero
        half = 0.5 - angle * angle / 48.0
        return normalize(np.array([1.0 - angle * angle / 8.0,
                                   half * rv[0], half * rv[1], half * rv[2]]))
    half_angle = 0.5 * angle
    s = np.sin(half_angle) / angle
    return np.array([np.cos(half_angle), s * rv[0], s * rv[1], s * rv[2]])


def rotvec_from_quat(q):
    w, x, y, z = normalize(q)
    if w < 0.0:  # shortest arc
        w, x, y, z = -w, -x, -y, -z
    vnorm = np.sqrt(x * x + y * y + z * z)
    if vnorm < 1e-12:
        return 2.0 * np.array([x, y, z])
    angle = 2.0 * np.arctan2(vnorm, w)
    return (angle / vnorm) * np.array([x, y, z])


def dcm_from_quat(q):
    w, x, y, z = q
    return np.array([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ])


def quat_from_dcm(R):
    """Inverse of dcm_from_quat (Shepperd's method, w >= 0)."""
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    else:
        i = int(np.argmax([R[0, 0], R[1, 1], R[2, 2]]))
        if i == 0:
            s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
            q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s,
                          (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
        elif i == 1:
            s = np.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2]) * 2.0
            q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s,
                          0.25 * s, (R[1, 2] + R[2, 1]) / s])
        else:
            s = np.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2]) * 2.0
            q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s,
                          (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    if q[0] < 0.0:
        q = -q
    return normalize(q)


def skew(v):
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])
