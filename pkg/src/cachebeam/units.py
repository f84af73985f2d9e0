"""Small unit conversion helpers (dB, dBm, bits)."""

import numpy as np


def db_to_lin(x_db):
    """Power ratio in dB to linear scale."""
    return np.power(10.0, np.asarray(x_db, dtype=float) / 10.0)


def lin_to_db(x):
    """Linear power ratio to dB. Zero maps to -inf."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


def dbm_to_watt(x_dbm):
    return np.power(10.0, (np.asarray(x_dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(x_w):
    return lin_to_db(x_w) + 30.0


def amplitude_from_db(loss_db):
    """Amplitude attenuation factor for a power loss given in dB."""
    return np.power(10.0, -np.asarray(loss_db, dtype=float) / 20.0)


def shannon_rate(bandwidth_hz, sinr_lin):
    """Achievable rate in bit/s for a given linear SINR."""
    return bandwidth_hz * np.log2(1.0 + np.asarray(sinr_lin, dtype=float))
