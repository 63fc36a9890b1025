"""Strapdown INS mechanization in ECEF and error-state covariance propagation.

Navigation state: position, velocity (ECEF), quaternion rotating ECEF to the
body/IMU frame, accelerometer and gyroscope biases.  The 15-dim error state is
ordered [dp, dv, dtheta, dba, dbg] with the attitude error dtheta multiplicative
in the body frame: C_e^b(true) = Exp(-[dtheta x]) C_e^b(est).
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels, quat

ERR_DIM = 15
DP = slice(0, 3)
DV = slice(3, 6)
DTH = slice(6, 9)
DBA = slice(9, 12)
DBG = slice(12, 15)


class FilterDivergenceError(RuntimeError):
    """Covariance lost positive semidefiniteness beyond tolerance."""


@dataclass
class EarthModel:
    """Toggles for gravity and Earth rotation; test mode turns both off."""
    gravity: bool = True
    earth_rotation: bool = True


WGS84 = EarthModel(True, True)
TEST_MODE = EarthModel(False, False)


@dataclass
class NavState:
    t: float
    p: np.ndarray
    v: np.ndarray
    q_eb: np.ndarray
    b_a: np.ndarray
    b_g: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.q_eb = np.asarray(self.q_eb, dtype=float)
        self.b_a = np.asarray(self.b_a, dtype=float)
        self.b_g = np.asarray(self.b_g, dtype=float)

    def copy(self):
        return NavState(self.t, self.p.copy(), self.v.copy(),
                        self.q_eb.copy(), self.b_a.copy(), self.b_g.copy())

    def validate(self):
        for a in (self.p, self.v, self.q_eb, self.b_a, self.b_g):
            if not np.all(np.isfinite(a)):
                raise ValueError("non-finite NavState component")
        n = np.linalg.norm(self.q_eb)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"quaternion norm {n} violates unit invariant")


@dataclass
class ImuSample:
    """One IMU reading, timestamped at the end of its integration interval."""
    t: float
    f_b: np.ndarray
    w_b: np.ndarray

    def __post_init__(self):
        self.f_b = np.asarray(self.f_b, dtype=float)
        self.w_b = np.asarray(self.w_b, dtype=float)


@dataclass
class ImuNoiseSpec:
    """Continuous-time spectral densities, SI units (sqrt-PSD).

    accel_noise: (m/s^2)/sqrt(Hz); gyro_noise: (rad/s)/sqrt(Hz);
    accel_bias_rw, gyro_bias_rw: random-walk drive densities for the biases.
    """
    accel_noise: float = 1.5e-3
    gyro_noise: float = 2.4e-4
    accel_bias_rw: float = 1.0e-4
    gyro_bias_rw: float = 1.0e-5

    def __post_init__(self):
        for v in (self.accel_noise, self.gyro_noise,
                  self.accel_bias_rw, self.gyro_bias_rw):
            if v < 0:
                raise ValueError("noise densities must be non-negative")

    def qc_diag(self):
        d = np.zeros(ERR_DIM)
        d[DV] = self.accel_noise ** 2
        d[DTH] = self.gyro_noise ** 2
        d[DBA] = self.accel_bias_rw ** 2
        d[DBG] = self.gyro_bias_rw ** 2
        return d


@dataclass
class StmAccumulator:
    """Accumulated error-state transition and process noise between epochs."""
    Phi: np.ndarray = field(default_factory=lambda: np.eye(ERR_DIM))
    Q: np.ndarray = field(default_factory=lambda: np.zeros((ERR_DIM, ERR_DIM)))

    def reset(self):
        self.Phi = np.eye(ERR_DIM)
        self.Q = np.zeros((ERR_DIM, ERR_DIM))


def _check_inputs(nav, sample, dt):
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    nav.validate()
    if not (np.all(np.isfinite(sample.f_b)) and np.all(np.isfinite(sample.w_b))):
        raise ValueError("non-finite IMU sample")


def mechanize(nav: NavState, sample: ImuSample, dt: float,
              earth: EarthModel = WGS84) -> NavState:
    """Advance the nav state by dt using one bias-corrected IMU sample."""
    _check_inputs(nav, sample, dt)
    p, v, q, _, _ = kernels.propagate_interval(
        nav.p, nav.v, nav.q_eb, nav.b_a, nav.b_g,
        sample.f_b.reshape(1, 3), sample.w_b.reshape(1, 3),
        np.array([float(dt)]), np.zeros(ERR_DIM),
        earth.gravity, earth.earth_rotation, False)
    return NavState(nav.t + dt, p, v, q, nav.b_a.copy(), nav.b_g.copy())


def accumulate_stm(acc: StmAccumulator, nav: NavState, sample: ImuSample,
                   noise: ImuNoiseSpec, dt: float,
                   earth: EarthModel = WGS84) -> StmAccumulator:
    """Fold one IMU period into the accumulated (Phi, Q).

    F_d = I + A*dt with A the error dynamics Jacobian at the current nav
    state; Q_d trapezoidal.  Composition: Phi <- F_d Phi, Q <- F_d Q F_d' + Q_d.
    """
    _check_inputs(nav, sample, dt)
    _, _, _, F, Qd = kernels.propagate_interval(
        nav.p, nav.v, nav.q_eb, nav.b_a, nav.b_g,
        sample.f_b.reshape(1, 3), sample.w_b.reshape(1, 3),
        np.array([float(dt)]), noise.qc_diag(),
        earth.gravity, earth.earth_rotation, True)
    return StmAccumulator(F @ acc.Phi, F @ acc.Q @ F.T + Qd)


def propagate_covariance(P_plus: np.ndarray, acc: StmAccumulator,
                         divergence_tol: float = 1e-6) -> np.ndarray:
    """P- = Phi P+ Phi' + Q, symmetrized; raises on indefinite results."""
    P = acc.Phi @ P_plus @ acc.Phi.T + acc.Q
    P = 0.5 * (P + P.T)
    w = np.linalg.eigvalsh(P)
    if w[0] < -divergence_tol * max(np.trace(P), 1.0):
        raise FilterDivergenceError(
            f"covariance eigenvalue {w[0]:.3e} below tolerance")
    return P


def apply_correction(nav: NavState, dx: np.ndarray) -> NavState:
    """Apply an error-state estimate: additive except multiplicative attitude."""
    dx = np.asarray(dx, dtype=float)
    if dx.shape != (ERR_DIM,):
        raise ValueError(f"error state must have shape ({ERR_DIM},)")
    if not np.all(np.isfinite(dx)):
        raise ValueError("non-finite correction")
    dth = dx[DTH]
    if np.linalg.norm(dth) > np.pi / 2:
        raise ValueError("attitude correction exceeds pi/2: linearization invalid")
    q = quat.normalize(quat.quat_mult(quat.quat_from_rotvec(-dth), nav.q_eb))
    return NavState(nav.t, nav.p + dx[DP], nav.v + dx[DV], q,
                    nav.b_a + dx[DBA], nav.b_g + dx[DBG])


def error_between(nav_a: NavState, nav_b: NavState) -> np.ndarray:
    """Error state dx with apply_correction(nav_b, dx) == nav_a (exact)."""
    dx = np.empty(ERR_DIM)
    dx[DP] = nav_a.p - nav_b.p
    dx[DV] = nav_a.v - nav_b.v
    dq = quat.quat_mult(nav_a.q_eb, quat.quat_conj(nav_b.q_eb))
    dx[DTH] = -quat.rotvec_from_quat(dq)
    dx[DBA] = nav_a.b_a - nav_b.b_a
    dx[DBG] = nav_a.b_g - nav_b.b_g
    return dx


def propagate_block(nav: NavState, f_arr: np.ndarray, w_arr: np.ndarray,
                    dts: np.ndarray, noise: ImuNoiseSpec,
                    earth: EarthModel = WGS84, with_stm: bool = True):
    """Batched propagation over an IMU block via the hot kernel.

    Equivalent to chaining mechanize/accumulate_stm sample by sample.
    Returns (NavState, StmAccumulator).
    """
    f_arr = np.ascontiguousarray(f_arr, dtype=float)
    w_arr = np.ascontiguousarray(w_arr, dtype=float)
    dts = np.ascontiguousarray(dts, dtype=float)
    if np.any(dts <= 0):
        raise ValueError("all sample periods must be positive")
    p, v, q, Phi, Q = kernels.propagate_interval(
        nav.p, nav.v, nav.q_eb, nav.b_a, nav.b_g, f_arr, w_arr, dts,
        noise.qc_diag(), earth.gravity, earth.earth_rotation, with_stm)
    out = NavState(nav.t + float(np.sum(dts)), p, v, q,
                   nav.b_a.copy(), nav.b_g.copy())
    return out, StmAccumulator(Phi, Q)
