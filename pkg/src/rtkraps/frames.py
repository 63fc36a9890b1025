"""Geodetic frame conversions: ECEF <-> geodetic <-> local ENU."""

import numpy as np

from .constants import WGS84_A, WGS84_E2


def lla_to_ecef(lat, lon, h):
    """Geodetic lat/lon [rad], height [m] to ECEF [m]."""
    sl, cl = np.sin(lat), np.cos(lat)
    n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * sl * sl)
    return np.array([
        (n + h) * cl * np.cos(lon),
        (n + h) * cl * np.sin(lon),
        (n * (1.0 - WGS84_E2) + h) * sl,
    ])


def ecef_to_lla(p):
    """ECEF [m] to geodetic lat/lon [rad], height [m] (iterative, <1e-9 rad)."""
    x, y, z = p
    lon = np.arctan2(y, x)
    rho = np.hypot(x, y)
    lat = np.arctan2(z, rho * (1.0 - WGS84_E2))
    for _ in range(6):
        sl = np.sin(lat)
        n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * sl * sl)
        h = rho / np.cos(lat) - n
        lat = np.arctan2(z, rho * (1.0 - WGS84_E2 * n / (n + h)))
    sl = np.sin(lat)
    n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * sl * sl)
    h = rho / np.cos(lat) - n
    return lat, lon, h


def enu_rotation(p_ref):
    """Rows are the local East/North/Up axes in ECEF: v_enu = C @ v_ecef."""
    lat, lon, _ = ecef_to_lla(np.asarray(p_ref, dtype=float))
    sl, cl = np.sin(lat), np.cos(lat)
    so, co = np.sin(lon), np.cos(lon)
    return np.array([
        [-so, co, 0.0],
        [-sl * co, -sl * so, cl],
        [cl * co, cl * so, sl],
    ])


def ecef_to_enu(p, p_ref):
    return enu_rotation(p_ref) @ (np.asarray(p) - np.asarray(p_ref))


def enu_to_ecef(v_enu, p_ref):
    return enu_rotation(p_ref).T @ np.asarray(v_enu) + np.asarray(p_ref)
