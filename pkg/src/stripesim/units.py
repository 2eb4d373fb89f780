"""Physical constants and dB helpers shared by the simulator modules."""

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s
THERMAL_NOISE_DBM_PER_HZ = -174.0  # kT at 290 K


def db_to_lin(x_db):
    """dB (or dBm) to linear power ratio (or mW). -inf maps to 0."""
    return np.power(10.0, np.asarray(x_db, dtype=float) / 10.0)


def lin_to_db(x_lin):
    """Linear power to dB; zero maps to -inf without a warning."""
    x = np.asarray(x_lin, dtype=float)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


def power_sum_db(*terms_db: float) -> float:
    """Non-coherent sum of powers given in dB/dBm."""
    return float(lin_to_db(sum(float(db_to_lin(t)) for t in terms_db)))
