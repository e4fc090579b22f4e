"""Unit conversions and seed derivation shared by all modules.

Everything inside the package is SI (Hz, s, W, m). dB, dBm and the
fiber-datasheet units (ps/nm/km, dB/km) only appear at the edges.
"""
from __future__ import annotations

import zlib

import numpy as np
from scipy.constants import c as C_LIGHT

__all__ = [
    "C_LIGHT",
    "db_to_lin",
    "lin_to_db",
    "dbm_to_w",
    "w_to_dbm",
    "child_seed",
]


def db_to_lin(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def lin_to_db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(x, dtype=float))


def dbm_to_w(p_dbm):
    return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)


def w_to_dbm(p_w):
    return lin_to_db(p_w) + 30.0


def child_seed(seed: int, *keys) -> int:
    """Derive an independent 32-bit seed from ``seed`` and a key path.

    String keys are hashed with CRC32 so that e.g. ``child_seed(7, "noise", 3)``
    is stable across interpreter runs (unlike ``hash``).
    """
    entropy = [int(seed) & 0xFFFFFFFF]
    for k in keys:
        if isinstance(k, str):
            entropy.append(zlib.crc32(k.encode()))
        else:
            entropy.append(int(k) & 0xFFFFFFFF)
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])
