"""Single- and double-differenced GNSS observables, Jacobians, and noise.

Measurement row order is fixed to [code, doppler, phase] per satellite,
stacked in the DdEpoch satellite order.  Augmented-state column order is
[dp(3), dv(3), dtheta(3), dba(3), dbg(3), dN(m)].
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .ins import ERR_DIM

ROWS_PER_SAT = 3  # code, doppler, phase


@dataclass
class SatObs:
    """One satellite's observables at one receiver.

    doppler is stored as range-rate [m/s], positive when the range is
    increasing, with satellite velocity and clock drift already compensated
    (the `compensated` flag records this).
    """
    sat_id: str
    constellation: str
    code: float              # pseudorange [m]
    phase_cycles: float      # carrier phase [cycles]
    doppler: float           # range-rate [m/s]
    sat_pos: np.ndarray      # ECEF [m]
    sat_vel: np.ndarray      # ECEF [m/s]
    elevation: float         # [rad]
    wavelength: float        # [m]
    compensated: bool = True

    def __post_init__(self):
        self.sat_pos = np.asarray(self.sat_pos, dtype=float)
        self.sat_vel = np.asarray(self.sat_vel, dtype=float)
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if not -np.pi / 2 < self.elevation <= np.pi / 2:
            raise ValueError("elevation out of range")
        if self.code <= 0:
            raise ValueError("pseudorange must be positive")


@dataclass
class EpochPair:
    """Rover and base observation lists for one epoch, plus surveyed base."""
    t: float
    rover: list
    base: list
    p_base: np.ndarray

    def __post_init__(self):
        self.p_base = np.asarray(self.p_base, dtype=float)


@dataclass
class SdObservation:
    """Between-receiver single difference; receiver clock terms remain."""
    sat_id: str
    constellation: str
    code: float       # [m]
    phase: float      # [m] (wavelength-scaled)
    doppler: float    # [m/s]
    sat_pos: np.ndarray
    elevation: float
    wavelength: float


@dataclass
class DdEpoch:
    """Double-differenced epoch against one pivot satellite.

    Arrays indexed by the ordered non-pivot satellite list; sigma arrays are
    filled by attach_noise.
    """
    t: float
    constellation: str
    pivot_id: str
    pivot_pos: np.ndarray
    pivot_elevation: float
    sat_ids: list
    sat_pos: np.ndarray       # (m, 3)
    elevations: np.ndarray    # (m,)
    wavelengths: np.ndarray   # (m,)
    code: np.ndarray          # (m,) DD code [m]
    phase: np.ndarray         # (m,) DD phase [m]
    doppler: np.ndarray       # (m,) DD doppler [m/s]
    sigma: np.ndarray = field(default=None)  # (3m,) row-ordered std devs

    @property
    def m(self):
        return len(self.sat_ids)

    def validate(self):
        if self.pivot_id in self.sat_ids:
            raise ValueError("pivot must be excluded from the satellite list")
        if self.sigma is not None and np.any(self.sigma <= 0):
            raise ValueError("all measurement sigmas must be positive")


def empty_dd():
    return DdEpoch(0.0, "", "", np.zeros(3), 0.0, [], np.zeros((0, 3)),
                   np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0),
                   np.zeros(0), np.zeros(0))


@dataclass
class NoiseModel:
    """Elevation-dependent single-difference noise: sigma(el) = zenith / sin(el)^exponent."""
    zenith_code: float = 0.3       # [m]
    zenith_phase: float = 0.003    # [m]
    zenith_doppler: float = 0.05   # [m/s]
    exponent: float = 1.0

    def __post_init__(self):
        if not self.zenith_phase < self.zenith_code:
            raise ValueError("phase noise must be well below code noise")
        for v in (self.zenith_code, self.zenith_phase, self.zenith_doppler):
            if v <= 0:
                raise ValueError("zenith sigmas must be positive")


def geometric_range(p_r, p_s):
    return float(np.linalg.norm(np.asarray(p_r) - np.asarray(p_s)))


def los_vector(p_r, p_s):
    """Unit line-of-sight from the satellite to the receiver: (p_r - p_s)/|..|."""
    d = np.asarray(p_r, dtype=float) - np.asarray(p_s, dtype=float)
    n = np.linalg.norm(d)
    if n == 0.0:
        raise ValueError("receiver and satellite positions coincide")
    return d / n


def elevation_sigma(el, zenith_sigma, exponent=1.0):
    """Elevation-mapped standard deviation, monotone nonincreasing in el."""
    return zenith_sigma / np.sin(el) ** exponent


def single_difference(rov: SatObs, base: SatObs, p_b) -> SdObservation:
    """Rover-minus-base difference with the base geometric range restored."""
    if rov.sat_id != base.sat_id or rov.constellation != base.constellation:
        raise ValueError("single difference requires matching satellites")
    r_b = geometric_range(p_b, base.sat_pos)
    lam = rov.wavelength
    return SdObservation(
        sat_id=rov.sat_id,
        constellation=rov.constellation,
        code=rov.code - (base.code - r_b),
        phase=lam * rov.phase_cycles - (lam * base.phase_cycles - r_b),
        doppler=rov.doppler - base.doppler,
        sat_pos=rov.sat_pos,
        elevation=rov.elevation,
        wavelength=lam,
    )


def select_pivot(sats) -> str:
    """Highest-elevation satellite; ties broken by lowest sat_id."""
    if not sats:
        raise ValueError("cannot select a pivot from an empty list")
    best = max(sats, key=lambda s: (s.elevation, _neg_id(s.sat_id)))
    return best.sat_id


def _neg_id(sat_id):
    # sortable inverse of the id for tie-breaks inside max()
    return tuple(-ord(c) for c in sat_id)


def double_difference(sd, pivot_id) -> DdEpoch:
    """Subtract the pivot single difference from every other satellite's."""
    ids = [s.sat_id for s in sd]
    if pivot_id not in ids:
        raise ValueError(f"pivot {pivot_id!r} not present")
    if len(sd) < 2:
        return empty_dd()
    piv = sd[ids.index(pivot_id)]
    rest = [s for s in sd if s.sat_id != pivot_id]
    return DdEpoch(
        t=0.0,
        constellation=piv.constellation,
        pivot_id=pivot_id,
        pivot_pos=piv.sat_pos.copy(),
        pivot_elevation=piv.elevation,
        sat_ids=[s.sat_id for s in rest],
        sat_pos=np.array([s.sat_pos for s in rest]),
        elevations=np.array([s.elevation for s in rest]),
        wavelengths=np.array([s.wavelength for s in rest]),
        code=np.array([s.code - piv.code for s in rest]),
        phase=np.array([s.phase - piv.phase for s in rest]),
        doppler=np.array([s.doppler - piv.doppler for s in rest]),
    )


def build_noise(dd: DdEpoch, nm: NoiseModel) -> np.ndarray:
    """Per-measurement DD variances: satellite variance plus pivot variance.

    Returns a strictly positive (3m,) vector in [code, doppler, phase] row
    order; cross-correlation from the shared pivot is deliberately ignored.
    """
    var = np.empty(ROWS_PER_SAT * dd.m)
    for zen, k in ((nm.zenith_code, 0), (nm.zenith_doppler, 1), (nm.zenith_phase, 2)):
        s_sat = elevation_sigma(dd.elevations, zen, nm.exponent)
        s_piv = elevation_sigma(dd.pivot_elevation, zen, nm.exponent)
        var[k::ROWS_PER_SAT] = s_sat ** 2 + s_piv ** 2
    return var


def attach_noise(dd: DdEpoch, nm: NoiseModel) -> DdEpoch:
    return replace(dd, sigma=np.sqrt(build_noise(dd, nm)))


def predict_residuals(chi_prior, dd: DdEpoch) -> np.ndarray:
    """Observed minus predicted DD measurements at the prior state.

    chi_prior exposes .p, .v (ECEF) and .amb (float DD ambiguities, cycles).
    """
    m = dd.m
    if m == 0:
        return np.zeros(0)
    p = np.asarray(chi_prior.p, dtype=float)
    v = np.asarray(chi_prior.v, dtype=float)
    amb = np.asarray(chi_prior.amb, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("non-finite prior position")
    d_s = p[None, :] - dd.sat_pos
    r_s = np.linalg.norm(d_s, axis=1)
    u_s = d_s / r_s[:, None]
    d_o = p - dd.pivot_pos
    r_o = np.linalg.norm(d_o)
    u_o = d_o / r_o
    pred_code = r_s - r_o
    pred_phase = pred_code + dd.wavelengths * amb
    pred_dopp = (u_s - u_o[None, :]) @ v
    res = np.empty(ROWS_PER_SAT * m)
    res[0::3] = dd.code - pred_code
    res[1::3] = dd.doppler - pred_dopp
    res[2::3] = dd.phase - pred_phase
    return res


def build_jacobian(chi_prior, dd: DdEpoch) -> np.ndarray:
    """Measurement matrix over [nav error(15), ambiguities(m)].

    Per satellite: code row [(u_s-u_o)', 0...], doppler row [0, (u_s-u_o)',
    0...], phase row [(u_s-u_o)', 0..., lambda*e_s]; attitude and bias blocks
    are zero (antenna and IMU co-located).
    """
    m = dd.m
    if m == 0:
        return np.zeros((0, ERR_DIM))
    p = np.asarray(chi_prior.p, dtype=float)
    u_s = (p[None, :] - dd.sat_pos)
    u_s /= np.linalg.norm(u_s, axis=1)[:, None]
    u_o = los_vector(p, dd.pivot_pos)
    du = u_s - u_o[None, :]
    H = np.zeros((ROWS_PER_SAT * m, ERR_DIM + m))
    H[0::3, 0:3] = du
    H[1::3, 3:6] = du
    H[2::3, 0:3] = du
    H[np.arange(2, 3 * m, 3), ERR_DIM + np.arange(m)] = dd.wavelengths
    return H


def match_epoch(pair: EpochPair):
    """Per-constellation lists of (rover, base) SatObs matched by id."""
    base_by_key = {(o.sat_id, o.constellation): o for o in pair.base}
    groups = {}
    for rov in pair.rover:
        key = (rov.sat_id, rov.constellation)
        if key in base_by_key:
            groups.setdefault(rov.constellation, []).append((rov, base_by_key[key]))
    return groups


def build_dd_epochs(pair: EpochPair, nm: NoiseModel, elev_cutoff=np.deg2rad(10.0)):
    """Full SD -> pivot -> DD -> noise pipeline, one DdEpoch per constellation.

    Constellations with fewer than 2 usable satellites are dropped (their
    measurement update is skipped).
    """
    out = []
    for _, obs_pairs in sorted(match_epoch(pair).items()):
        sd = [single_difference(r, b, pair.p_base) for r, b in obs_pairs
              if r.elevation >= elev_cutoff]
        if len(sd) < 2:
            continue
        pivot = select_pivot(sd)
        dd = double_difference(sd, pivot)
        if dd.m == 0:
            continue
        dd.t = pair.t
        out.append(attach_noise(dd, nm))
    return out


def ls_fix(dds, p0, iters=10):
    """Instantaneous least-squares position/velocity from DD code and doppler.

    Gauss-Newton for position starting at p0 (the surveyed base is a good
    start); velocity follows from a linear solve.  Returns (p, v, cov_p,
    cov_v); raises when the stacked geometry is rank deficient.
    """
    p = np.asarray(p0, dtype=float).copy()

    class _Chi:
        def __init__(self, p, v, m):
            self.p, self.v, self.amb = p, v, np.zeros(m)

    for _ in range(iters):
        rows, rhs, wts = [], [], []
        for dd in dds:
            chi = _Chi(p, np.zeros(3), dd.m)
            res = predict_residuals(chi, dd)
            H = build_jacobian(chi, dd)
            rows.append(H[0::3, 0:3])
            rhs.append(res[0::3])
            wts.append(1.0 / dd.sigma[0::3] ** 2)
        A = np.vstack(rows)
        b = np.concatenate(rhs)
        w = np.concatenate(wts)
        N = (A * w[:, None]).T @ A
        if np.linalg.matrix_rank(N) < 3:
            raise np.linalg.LinAlgError("code geometry rank deficient")
        dp = np.linalg.solve(N, (A * w[:, None]).T @ b)
        p += dp
        if np.linalg.norm(dp) < 1e-6:
            break
    cov_p = np.linalg.inv(N)

    rows, rhs, wts = [], [], []
    for dd in dds:
        chi = _Chi(p, np.zeros(3), dd.m)
        res = predict_residuals(chi, dd)
        H = build_jacobian(chi, dd)
        rows.append(H[1::3, 3:6])
        rhs.append(res[1::3])
        wts.append(1.0 / dd.sigma[1::3] ** 2)
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    w = np.concatenate(wts)
    N = (A * w[:, None]).T @ A
    v = np.linalg.solve(N, (A * w[:, None]).T @ b)
    cov_v = np.linalg.inv(N)
    return p, v, cov_p, cov_v
