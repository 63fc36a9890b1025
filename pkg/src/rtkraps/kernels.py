"""Hot numeric kernels for strapdown propagation.

The per-IMU-sample mechanization and 15-state transition/noise accumulation
dominate runtime (hundreds of samples per GNSS epoch, millions per Monte
Carlo batch), so this module is compiled with numba when available.

Backend selection: set ``RTKRAPS_BACKEND=numpy`` in the environment to force
the plain-numpy fallback (same source, not jitted).  Default is numba when
importable.  ``benchmarks/bench_kernels.py`` compares the two.

Error-state ordering everywhere: [dp(3), dv(3), dtheta(3), dba(3), dbg(3)],
attitude error dtheta multiplicative in the body frame.
"""

import os

import numpy as np

from .constants import OMEGA_E, WGS84_A, WGS84_J2, WGS84_MU

_requested = os.environ.get("RTKRAPS_BACKEND", "numba").lower()
if _requested not in ("numba", "numpy"):
    raise RuntimeError(
        "RTKRAPS_BACKEND must be 'numba' or 'numpy', got %r" % _requested)

NUMBA_ENABLED = False
if _requested == "numba":
    try:
        from numba import njit as _njit
        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False


def backend():
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return "numba" if NUMBA_ENABLED else "numpy"


def _jit(func):
    if NUMBA_ENABLED:
        return _njit(cache=True)(func)
    return func


@_jit
def gravitation_ecef(p):
    """Gravitational acceleration (mu + J2) at ECEF position, no centrifugal."""
    x, y, z = p[0], p[1], p[2]
    r2 = x * x + y * y + z * z
    r = np.sqrt(r2)
    k = 1.5 * WGS84_J2 * (WGS84_A * WGS84_A) / r2
    zr2 = z * z / r2
    c = -WGS84_MU / (r2 * r)
    g = np.empty(3)
    g[0] = c * x * (1.0 + k * (1.0 - 5.0 * zr2))
    g[1] = c * y * (1.0 + k * (1.0 - 5.0 * zr2))
    g[2] = c * z * (1.0 + k * (3.0 - 5.0 * zr2))
    return g


@_jit
def gravity_ecef(p):
    """Plumb-bob gravity: gravitation plus centrifugal (rotating ECEF)."""
    g = gravitation_ecef(p)
    w2 = OMEGA_E * OMEGA_E
    g[0] += w2 * p[0]
    g[1] += w2 * p[1]
    return g


@_jit
def _quat_mult(a, b):
    out = np.empty(4)
    out[0] = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
    out[1] = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2]
    out[2] = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1]
    out[3] = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]
    return out


@_jit
def _quat_from_rotvec(rv):
    angle = np.sqrt(rv[0] * rv[0] + rv[1] * rv[1] + rv[2] * rv[2])
    out = np.empty(4)
    if angle < 1e-12:
        half = 0.5 - angle * angle / 48.0
        out[0] = 1.0 - angle * angle / 8.0
        out[1] = half * rv[0]
        out[2] = half * rv[1]
        out[3] = half * rv[2]
    else:
        half_angle = 0.5 * angle
        s = np.sin(half_angle) / angle
        out[0] = np.cos(half_angle)
        out[1] = s * rv[0]
        out[2] = s * rv[1]
        out[3] = s * rv[2]
    n = np.sqrt(out[0] ** 2 + out[1] ** 2 + out[2] ** 2 + out[3] ** 2)
    for i in range(4):
        out[i] /= n
    return out


@_jit
def _dcm_from_quat(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    m = np.empty((3, 3))
    m[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    m[0, 1] = 2.0 * (x * y - w * z)
    m[0, 2] = 2.0 * (x * z + w * y)
    m[1, 0] = 2.0 * (x * y + w * z)
    m[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    m[1, 2] = 2.0 * (y * z - w * x)
    m[2, 0] = 2.0 * (x * z - w * y)
    m[2, 1] = 2.0 * (y * z + w * x)
    m[2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return m


@_jit
def _quat_normalize(q):
    n = np.sqrt(q[0] ** 2 + q[1] ** 2 + q[2] ** 2 + q[3] ** 2)
    out = np.empty(4)
    for i in range(4):
        out[i] = q[i] / n
    return out


@_jit
def propagate_interval(p0, v0, q0, ba, bg, f_arr, w_arr, dts, qc_diag,
                       gravity_on, earth_rot_on, with_stm):
    """Advance the nav state over a block of IMU samples.

    p0, v0 (3,) ECEF; q0 (4,) [w,x,y,z] quaternion rotating ECEF to body;
    ba, bg (3,) bias estimates; f_arr, w_arr (N,3) raw specific force /
    angular rate; dts (N,) per-sample integration periods; qc_diag (15,)
    continuous-time process noise PSDs on the error-state diagonal.

    Per step: explicit-Euler velocity, trapezoidal position, exact quaternion
    exponential attitude; first-order F = I + A*dt and trapezoidal noise
    Qd = 0.5*dt*(F Qc F' + Qc), accumulated as Phi <- F Phi, Q <- F Q F' + Qd.

    Returns (p, v, q, Phi, Q); Phi/Q are identity/zero when with_stm is False.
    """
    p = p0.copy()
    v = v0.copy()
    q = q0.copy()
    n15 = 15
    Phi = np.eye(n15)
    Q = np.zeros((n15, n15))
    n = f_arr.shape[0]
    fb = np.empty(3)
    wb = np.empty(3)
    for k in range(n):
        dt = dts[k]
        for i in range(3):
            fb[i] = f_arr[k, i] - ba[i]
            wb[i] = w_arr[k, i] - bg[i]
        M = _dcm_from_quat(q)  # C_e^b
        # coordinate acceleration in ECEF
        ae = np.dot(M.T, fb)
        if gravity_on:
            g = gravitation_ecef(p)
            for i in range(3):
                ae[i] += g[i]
        if earth_rot_on:
            w2 = OMEGA_E * OMEGA_E
            ae[0] += w2 * p[0] + 2.0 * OMEGA_E * v[1]
            ae[1] += w2 * p[1] - 2.0 * OMEGA_E * v[0]

        if with_stm:
            # exact Jacobian of the discrete step below:
            #   da = B dx with B = [Gp, -2[wx], -C_b^e [fb x], -C_b^e, 0]
            #   dp+ = dp + dt dv + dt^2/2 da ; dv+ = dv + dt da
            #   dth+ = E (dth - dt dbg - dt [M w_ie x] dth), E = Exp(-w_eb dt)
            B = np.zeros((3, n15))
            if gravity_on:
                # central-term gravitation gradient mu/r^3 (3 rr' - I)
                r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2]
                r = np.sqrt(r2)
                c = WGS84_MU / (r2 * r)
                for i in range(3):
                    for j in range(3):
                        B[i, j] = c * (3.0 * p[i] * p[j] / r2 - (1.0 if i == j else 0.0))
            if earth_rot_on:
                w2 = OMEGA_E * OMEGA_E
                B[0, 0] += w2
                B[1, 1] += w2
                B[0, 4] += 2.0 * OMEGA_E
                B[1, 3] -= 2.0 * OMEGA_E
            S = np.empty((3, 3))
            S[0, 0] = 0.0
            S[0, 1] = -fb[2]
            S[0, 2] = fb[1]
            S[1, 0] = fb[2]
            S[1, 1] = 0.0
            S[1, 2] = -fb[0]
            S[2, 0] = -fb[1]
            S[2, 1] = fb[0]
            S[2, 2] = 0.0
            MS = np.dot(M.T, S)
            for i in range(3):
                for j in range(3):
                    B[i, 6 + j] = -MS[i, j]
                    B[i, 9 + j] = -M[j, i]

            F = np.eye(n15)
            for i in range(3):
                F[i, 3 + i] = dt
                for j in range(n15):
                    F[i, j] += 0.5 * dt * dt * B[i, j]
                    F[3 + i, j] += dt * B[i, j]
            # attitude block
            web = np.empty(3)
            for i in range(3):
                web[i] = wb[i] - (M[i, 2] * OMEGA_E if earth_rot_on else 0.0)
            rv = np.empty(3)
            for i in range(3):
                rv[i] = -web[i] * dt
            E = _dcm_from_quat(_quat_from_rotvec(rv))
            G = np.eye(3)
            if earth_rot_on:
                # -dt [ (M w_ie) x ]
                mw0 = M[0, 2] * OMEGA_E
                mw1 = M[1, 2] * OMEGA_E
                mw2 = M[2, 2] * OMEGA_E
                G[0, 1] += dt * mw2
                G[0, 2] -= dt * mw1
                G[1, 0] -= dt * mw2
                G[1, 2] += dt * mw0
                G[2, 0] += dt * mw1
                G[2, 1] -= dt * mw0
            EG = np.dot(E, G)
            for i in range(3):
                for j in range(3):
                    F[6 + i, 6 + j] = EG[i, j]
                    F[6 + i, 12 + j] = -dt * E[i, j]

            # trapezoidal Qd = 0.5 dt (F Qc F' + Qc), Qc diagonal
            FQc = F * qc_diag
            Qd = 0.5 * dt * (np.dot(FQc, F.T))
            for i in range(n15):
                Qd[i, i] += 0.5 * dt * qc_diag[i]
            Phi = np.dot(F, Phi)
            Q = np.dot(np.dot(F, Q), F.T) + Qd

        # state advance
        v_new = np.empty(3)
        for i in range(3):
            v_new[i] = v[i] + ae[i] * dt
        for i in range(3):
            p[i] = p[i] + 0.5 * (v[i] + v_new[i]) * dt
        v = v_new
        # attitude: body rate relative to ECEF
        if earth_rot_on:
            for i in range(3):
                wb[i] -= M[i, 2] * OMEGA_E
        rv = np.empty(3)
        for i in range(3):
            rv[i] = -wb[i] * dt
        q = _quat_normalize(_quat_mult(_quat_from_rotvec(rv), q))

    Q = 0.5 * (Q + Q.T)
    return p, v, q, Phi, Q
