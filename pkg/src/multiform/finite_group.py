"""Exact Fourier analysis on G = Z_p^d x Z_p and the quadratic obstruction.

Functions on the group are dense complex arrays of shape ``(p,) * (d + 1)``;
axis ``k`` carries coordinate ``x_{k+1}`` so the last axis is the "height"
coordinate ``x_{d+1}``.  Flattening in C order gives the row-major layout.

The measure ``mu`` lives on the paraboloid ``x_{d+1} = |x'|^2`` and has
nonzero Fourier coefficients of modulus exactly ``p^{-d/2}`` (Gauss sums),
so the bilinear form against ``nu = mu - m`` is small.  The three phase
functions from :func:`obstruction_witness` show that the trilinear form
``sum f(x) g(y) h(x+y) nu(x-y)`` enjoys no such smallness.
"""
from dataclasses import dataclass

import numpy as np

from ._validation import check_int, check_prime, make_rng

# above this many points the transform is done axis by axis
NAIVE_DFT_MAX = 10**4


@dataclass(frozen=True)
class GroupSpec:
    p: int
    d: int

    def __post_init__(self):
        check_prime(self.p, "p")
        check_int(self.d, "d", minimum=1)
        if self.p ** (self.d + 1) > np.iinfo(np.int64).max // 4:
            raise ValueError("group too large for 64-bit indexing")

    @property
    def shape(self):
        return (self.p,) * (self.d + 1)

    @property
    def order(self):
        return self.p ** (self.d + 1)

    def coords(self):
        """Array of shape (order, d+1): every group element, row-major."""
        grids = np.indices(self.shape).reshape(self.d + 1, -1)
        return grids.T.copy()

    def flat_index(self, coords):
        return np.ravel_multi_index(tuple(np.mod(coords, self.p).T), self.shape)


@dataclass(frozen=True, eq=False)
class GroupFunction:
    spec: GroupSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.size != self.spec.order:
            raise ValueError(
                f"expected {self.spec.order} values for {self.spec}, got {vals.size}"
            )
        object.__setattr__(self, "values", vals.reshape(self.spec.shape))

    @property
    def flat(self):
        return self.values.reshape(-1)

    def norm(self, q=2):
        a = np.abs(self.flat)
        if q == np.inf:
            return float(a.max())
        return float(np.sum(a**q) ** (1.0 / q))

    def total(self):
        return complex(self.flat.sum())

    def __add__(self, other):
        _check_same(self, other)
        return GroupFunction(self.spec, self.values + other.values)

    def __sub__(self, other):
        _check_same(self, other)
        return GroupFunction(self.spec, self.values - other.values)

    def __mul__(self, c):
        return GroupFunction(self.spec, self.values * c)

    __rmul__ = __mul__


def _check_same(*fs):
    spec = fs[0].spec
    for f in fs[1:]:
        if f.spec != spec:
            raise ValueError(f"group mismatch: {spec} vs {f.spec}")


def _squared_norm_residue(spec):
    """|x'|^2 mod p for every element, shaped like the group."""
    idx = np.indices(spec.shape)
    return np.sum(idx[:-1] ** 2, axis=0) % spec.p


def build_mu(spec):
    """Normalized surface measure of the paraboloid ``x_{d+1} = |x'|^2``."""
    q = _squared_norm_residue(spec)
    height = np.indices(spec.shape)[-1]
    vals = np.where(height == q, float(spec.p) ** (-spec.d), 0.0)
    return GroupFunction(spec, vals)


def build_uniform(spec):
    """Constant function with the same total mass as ``build_mu``."""
    return GroupFunction(spec, np.full(spec.shape, float(spec.p) ** (-spec.d - 1)))


def build_nu(spec):
    return build_mu(spec) - build_uniform(spec)


def delta(spec, at=None):
    vals = np.zeros(spec.shape, dtype=complex)
    vals[tuple(at) if at is not None else (0,) * (spec.d + 1)] = 1.0
    return GroupFunction(spec, vals)


def character(spec, xi, sign=-1):
    """x -> exp(sign * 2 pi i xi.x / p), phase reduced mod p before scaling."""
    xi = np.asarray(xi, dtype=np.int64)
    idx = np.indices(spec.shape)
    dot = np.tensordot(xi, idx, axes=1) % spec.p
    return GroupFunction(spec, np.exp(sign * 2j * np.pi * dot / spec.p))


def _phase_table(p):
    k = np.arange(p)
    return np.exp(-2j * np.pi * (np.outer(k, k) % p) / p)


def dft_naive(f):
    """Direct O(|G|^2) sum; used for small groups and as a test oracle."""
    spec = f.spec
    coords = spec.coords()
    table = np.exp(-2j * np.pi * np.arange(spec.p) / spec.p)
    out = np.empty(spec.order, dtype=complex)
    flat = f.flat
    for k, xi in enumerate(coords):
        out[k] = np.sum(flat * table[(coords @ xi) % spec.p])
    return GroupFunction(spec, out)


def dft(f):
    """Fourier transform ``sum_x f(x) exp(-2 pi i xi.x / p)`` (unnormalized)."""
    spec = f.spec
    if spec.order <= NAIVE_DFT_MAX:
        return dft_naive(f)
    # one length-p transform per coordinate axis; exact for a product of cyclic groups
    table = _phase_table(spec.p)
    vals = f.values
    for axis in range(spec.d + 1):
        vals = np.moveaxis(np.tensordot(table, vals, axes=([1], [axis])), 0, axis)
    return GroupFunction(spec, vals)


def max_nonzero_fourier(f):
    spec = f.spec
    mags = np.abs(dft(f).flat)
    return float(mags[1:].max()) if spec.order > 1 else 0.0


def max_fourier(f):
    return float(np.abs(dft(f).flat).max())


def obstruction_witness(spec):
    """Unimodular ``(f, g, h)`` whose product is constant on ``supp nu(x-y)``."""
    p = spec.p
    q = _squared_norm_residue(spec)
    t = np.indices(spec.shape)[-1]
    h = np.exp(2j * np.pi * q / p)
    f = np.exp(2j * np.pi * ((t - 2 * q) % p) / p)
    g = np.exp(2j * np.pi * ((-t - 2 * q) % p) / p)
    return GroupFunction(spec, f), GroupFunction(spec, g), GroupFunction(spec, h)


def witness_phase(spec, x, y):
    """Integer phase Phi(x, y) mod p of f(x) g(y) h(x+y) for the witness."""
    x = np.asarray(x)
    y = np.asarray(y)
    p = spec.p
    sq = lambda v: np.sum(v[..., :-1] ** 2, axis=-1)
    phi = sq(x + y) + x[..., -1] - y[..., -1] - 2 * sq(x) - 2 * sq(y)
    return phi % p


def trilinear_form(f, g, h, kernel):
    """``sum_{x,y} f(x) g(y) h(x+y) kernel(x-y)`` over the whole group.

    Re-indexed by ``u = x - y``; rows with ``kernel(u) = 0`` are skipped.
    """
    _check_same(f, g, h, kernel)
    spec = f.spec
    coords = spec.coords()
    ff, gf, hf, kf = f.flat, g.flat, h.flat, kernel.flat
    re = []
    im = []
    for k in np.flatnonzero(kf):
        u = coords[k]
        inner = np.sum(gf * ff[spec.flat_index(coords + u)] * hf[spec.flat_index(2 * coords + u)])
        term = kf[k] * inner
        re.append(term.real)
        im.append(term.imag)
    return complex(np.sum(re), np.sum(im))


def bilinear_form(f, g, kernel):
    """``sum_{x,y} f(x) g(y) kernel(x-y)``."""
    _check_same(f, g, kernel)
    spec = f.spec
    coords = spec.coords()
    ff, gf, kf = f.flat, g.flat, kernel.flat
    total = 0j
    for k in np.flatnonzero(kf):
        total += kf[k] * np.sum(gf * ff[spec.flat_index(coords + coords[k])])
    return complex(total)


def bilinear_bound_check(spec, trials=100, seed=0):
    """Ratio ``|B(f,g)| / (|f|_2 |g|_2)`` for the kernel ``nu`` on random and extremal inputs.

    Returns a dict with the largest ratio over Gaussian pairs, the ratio at
    the extremal characters, and the exact bound ``p^{-d/2}``.
    """
    nu = build_nu(spec)
    rng = make_rng(seed, 0)
    bound = float(spec.p) ** (-spec.d / 2)
    ratios = []
    for _ in range(trials):
        f = GroupFunction(spec, rng.standard_normal(spec.order) + 1j * rng.standard_normal(spec.order))
        g = GroupFunction(spec, rng.standard_normal(spec.order) + 1j * rng.standard_normal(spec.order))
        ratios.append(abs(bilinear_form(f, g, nu)) / (f.norm() * g.norm()))
    nu_hat = np.abs(dft(nu).flat)
    k = int(np.argmax(nu_hat))
    xi = spec.coords()[k]
    f_ext = character(spec, xi, sign=-1)
    g_ext = character(spec, xi, sign=+1)
    extremal = abs(bilinear_form(f_ext, g_ext, nu)) / (f_ext.norm() * g_ext.norm())
    return {
        "bound": bound,
        "max_ratio": float(max(ratios)) if ratios else 0.0,
        "extremal_ratio": float(extremal),
        "holds": bool(max(ratios, default=0.0) <= bound * (1 + 1e-9)),
        "trials": trials,
    }


def obstruction_report(spec):
    """Summary of the obstruction for one group."""
    mu = build_mu(spec)
    f, g, h = obstruction_witness(spec)
    value = trilinear_form(f, g, h, build_nu(spec))
    norm_product = f.norm(2) * g.norm(2) * h.norm(np.inf)
    return {
        "p": spec.p,
        "d": spec.d,
        "gauss_max": max_nonzero_fourier(mu),
        "expected": float(spec.p) ** (-spec.d / 2),
        "trilinear_value": [value.real, value.imag],
        "norm_product": norm_product,
        "ratio": abs(value) / norm_product,
    }
