"""Input validation helpers shared by every module.

All checks raise ``ValueError`` (or ``TypeError`` for wrong kinds) with a
message naming the offending argument, in the spirit of
``sklearn.utils.validation``.
"""
import numbers
import os

import numpy as np

INT32_MAX = 2**31 - 1


def check_int(value, name, minimum=None, maximum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ValueError(f"{name} must be <= {maximum}, got {value}")
    return value


def is_prime(n):
    """Deterministic trial division; fine for the moduli used here."""
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def check_prime(p, name="p"):
    p = check_int(p, name, minimum=3)
    if not is_prime(p):
        raise ValueError(f"{name}={p} is not prime")
    return p


def check_probability(p, name="p"):
    p = float(p)
    if not (0.0 < p <= 1.0) or not np.isfinite(p):
        raise ValueError(f"{name} must lie in (0, 1], got {p}")
    return p


def check_array_1d(values, name, length=None, dtype=float):
    arr = np.asarray(values, dtype=dtype)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ValueError(f"{name} must have length {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def make_rng(seed, *stream):
    """Counter-based generator keyed by ``seed`` and an integer stream path.

    Distinct stream paths give statistically independent generators, so a
    trial's draws never depend on which worker ran it or in what order.
    """
    seed = check_int(seed, "seed", minimum=0)
    key = tuple(check_int(s, "stream", minimum=0) for s in stream)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def n_workers(default=None):
    env = os.environ.get("MULTIFORM_THREADS")
    if env:
        return max(1, int(env))
    if default is not None:
        return max(1, int(default))
    return os.cpu_count() or 1
