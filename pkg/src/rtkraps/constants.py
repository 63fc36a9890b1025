"""Physical and geodetic constants (WGS-84, GPS L1)."""

import numpy as np

# WGS-84 ellipsoid / gravity field
WGS84_A = 6378137.0                 # semi-major axis [m]
WGS84_F = 1.0 / 298.257223563       # flattening
WGS84_B = WGS84_A * (1.0 - WGS84_F)
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)
WGS84_MU = 3.986004418e14           # gravitational parameter [m^3/s^2]
WGS84_J2 = 1.082627e-3              # second zonal harmonic
OMEGA_E = 7.292115e-5               # Earth rotation rate [rad/s]

SPEED_OF_LIGHT = 299792458.0        # [m/s]
GPS_L1_FREQ = 1575.42e6             # [Hz]
GPS_L1_WAVELENGTH = SPEED_OF_LIGHT / GPS_L1_FREQ  # ~0.1903 m

OMEGA_IE_E = np.array([0.0, 0.0, OMEGA_E])  # Earth rate vector, ECEF
