"""Random sparse selectors and the centered kernels built from them.

``r(x) = s(x) / (N p) - 1 / N`` on ``[-N, N]`` with independent Bernoulli(p)
selectors ``s``, and zero elsewhere.  Products of shifted copies of ``r``
are the kernels that appear after repeated degree reduction.
"""
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_int, check_probability, make_rng


@dataclass(frozen=True)
class SelectorModel:
    """Block selector model on ``[-N, N]``.

    Give either ``p`` directly or ``gamma`` with ``p = density * N**-gamma``
    (clamped to ``(0, 1]``).  ``density`` defaults to 1, the pure power law.
    """

    N: int
    p: float = None
    gamma: float = None
    density: float = 1.0
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        check_int(self.N, "N", minimum=1)
        if (self.p is None) == (self.gamma is None):
            raise ValueError("give exactly one of p or gamma")
        if self.p is None:
            if self.gamma < 0:
                raise ValueError(f"gamma must be >= 0, got {self.gamma}")
            p = float(self.density) * float(self.N) ** (-float(self.gamma))
            object.__setattr__(self, "p", min(1.0, max(p, np.finfo(float).tiny)))
        check_probability(self.p)
        if self.N * self.p < 1.0 - 1e-12:
            raise ValueError(f"need N p >= 1, got N={self.N}, p={self.p}")

    def rng(self, *extra):
        return make_rng(self.seed, self.stream_id, *extra)


@dataclass(frozen=True, eq=False)
class SignedMeasure:
    """Real function on the integer window ``[-W, W]``, zero outside.

    ``values[k]`` is the value at ``x = k - W``.  ``shifts`` records the
    shift tuple when the measure is a product of shifted copies of ``r``.
    """

    half_width: int
    values: np.ndarray
    shifts: tuple = field(default=(0,))

    def __post_init__(self):
        W = check_int(self.half_width, "half_width", minimum=0)
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (2 * W + 1,):
            raise ValueError(f"values must have shape ({2 * W + 1},), got {vals.shape}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, half_width):
        return cls(half_width, np.zeros(2 * half_width + 1), shifts=())

    @classmethod
    def from_dict(cls, entries, half_width=None):
        if half_width is None:
            half_width = max((abs(k) for k in entries), default=0)
        vals = np.zeros(2 * half_width + 1)
        for x, v in entries.items():
            if abs(x) > half_width:
                raise ValueError(f"key {x} outside window [-{half_width}, {half_width}]")
            vals[x + half_width] = v
        return cls(half_width, vals, shifts=())

    @classmethod
    def point_mass(cls, at=0, weight=1.0, half_width=None):
        return cls.from_dict({at: weight}, half_width)

    @property
    def xs(self):
        return np.arange(-self.half_width, self.half_width + 1)

    def __call__(self, x):
        """Vectorized lookup; zero outside the window."""
        x = np.asarray(x)
        inside = np.abs(x) <= self.half_width
        idx = np.where(inside, x + self.half_width, 0)
        return np.where(inside, self.values[idx], 0.0)

    def to_dict(self):
        nz = np.flatnonzero(self.values)
        return {int(k - self.half_width): float(self.values[k]) for k in nz}

    def norm(self, q=2):
        a = np.abs(self.values)
        if q == np.inf:
            return float(a.max(initial=0.0))
        return float(np.sum(a**q) ** (1.0 / q))

    def scaled(self, c):
        return SignedMeasure(self.half_width, self.values * c, self.shifts)

    def __neg__(self):
        return self.scaled(-1.0)

    def widened(self, half_width):
        if half_width < self.half_width:
            raise ValueError("cannot shrink a measure's window")
        pad = half_width - self.half_width
        return SignedMeasure(half_width, np.pad(self.values, pad), self.shifts)

    def is_zero(self):
        return not np.any(self.values)


def sample_selectors(model, rng=None):
    """Boolean selector vector on ``[-N, N]`` drawn from the model's stream."""
    rng = model.rng() if rng is None else rng
    return rng.random(2 * model.N + 1) < model.p


def sample_r(model, rng=None):
    """Centered kernel ``r = s / (N p) - 1 / N`` on ``[-N, N]``."""
    s = sample_selectors(model, rng)
    vals = s / (model.N * model.p) - 1.0 / model.N
    if model.p == 1.0:
        # avoid 1/N - 1/N rounding residue
        vals = np.where(s, 0.0, vals)
    return SignedMeasure(model.N, vals, shifts=(0,))


def check_shifts(shifts):
    shifts = tuple(int(z) for z in shifts)
    if len(set(shifts)) != len(shifts):
        raise ValueError(f"shifts must be pairwise distinct, got {shifts}")
    if not shifts:
        raise ValueError("need at least one shift")
    return shifts


def shifted_product(r, shifts, normalized=False, N=None):
    """``rho(x) = prod_i r(x + z_i)``, optionally times ``N^{K-1}``.

    The result lives on the intersection of the shifted windows.  Shifts
    compose with any shifts already recorded on ``r``.
    """
    shifts = check_shifts(shifts)
    W = r.half_width
    lo = -W - min(shifts)
    hi = W - max(shifts)
    if lo > hi:
        return SignedMeasure(0, np.zeros(1), shifts=tuple(shifts))
    width = max(abs(lo), abs(hi))
    xs = np.arange(-width, width + 1)
    vals = np.ones(xs.shape)
    for z in shifts:
        vals = vals * r(xs + z)
    if normalized:
        n = r.half_width if N is None else N
        vals = vals * float(n) ** (len(shifts) - 1)
    base = r.shifts if r.shifts else (0,)
    composed = tuple(b + z for z in shifts for b in base)
    return SignedMeasure(width, vals, shifts=composed)


def r_moment(q, N, p):
    """Exact ``E[r(x)^q]`` for ``|x| <= N``."""
    check_int(q, "q", minimum=0)
    hit = 1.0 / (N * p) - 1.0 / N
    miss = -1.0 / N
    if p == 1.0:
        return 1.0 if q == 0 else 0.0
    if q == 1:
        return 0.0
    return p * hit**q + (1.0 - p) * miss**q


def centered_selector_moment(m, p):
    """Exact ``E[(s - p)^m]`` for ``s ~ Bernoulli(p)``."""
    return p * (1.0 - p) ** m + (1.0 - p) * (-p) ** m


def expected_product_l2(r_half_width, shifts, N, p):
    """Exact ``E ||prod_i r(. + z_i)||_2^2``; the shifted values are independent at each x."""
    shifts = check_shifts(shifts)
    W = r_half_width
    count = max(0, (W - max(shifts)) - (-W - min(shifts)) + 1)
    return count * r_moment(2, N, p) ** len(shifts)


def l1_upper(r, model):
    """Deterministic bound ``(Np)^{-1} #{s=1} + (2N+1)/N`` on ``||r||_1``."""
    # hits carry a value >= 0, misses exactly -1/N
    hits = int(np.count_nonzero(r.values > -0.5 / model.N))
    return hits / (model.N * model.p) + (2 * model.N + 1) / model.N
