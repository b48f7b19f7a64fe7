"""
dB / dBm conversions. Everything inside the engines is linear (mW, ratios);
these are only used at the config and report boundary.
"""
import math


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    if mw <= 0:
        raise ValueError(f"Power must be positive to express in dBm, got {mw}")
    return 10.0 * math.log10(mw)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(ratio: float) -> float:
    if ratio <= 0:
        raise ValueError(f"Ratio must be positive to express in dB, got {ratio}")
    return 10.0 * math.log10(ratio)
