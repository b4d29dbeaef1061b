"""Physical constants and unit helpers (SI unless noted)."""

import numpy as np

AVOGADRO = 6.02214076e23  # mol^-1, exact (SI 2019)

# 128 deg YX LiNbO3 Rayleigh-wave velocity, m/s
SAW_VELOCITY_LINBO3 = 3979.0

# Energies are in h*MHz and times in us, so 2*pi*f[MHz]*t[us] is a phase in rad.
TWO_PI = 2.0 * np.pi


def dbm_to_mw(p_dbm):
    return 10.0 ** (np.asarray(p_dbm, dtype=float) / 10.0)


def mw_to_dbm(p_mw):
    return 10.0 * np.log10(np.asarray(p_mw, dtype=float))
