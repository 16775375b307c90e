"""Multilinear operators built from a kernel and a family of linear forms.

Operator semantics (``apply_T``)::

    T(f, g_1..g_M)(x) = sum_y f(y) rho(L_0(x, y)) prod_j g_j(L_j(x, y))

with ``f`` on ``[-A N, A N]`` and, by default, every ``g_j`` on the same
window (``g_window="box"``); ``g_window="range"`` lets ``g_j`` live on the
whole range of ``L_j`` over the box.  Scalar semantics (``scalar_form``)::

    T(f_1..f_M, rho) = sum_{(x, y) in [-A N, A N]^2} rho(L_0(x, y)) prod_j f_j(L_j(x, y))

A factor whose form evaluates off the integers is zero.

The norm estimators here are lower bounds obtained by alternating ascent;
``op_norm_bruteforce`` is the exact oracle for tiny instances.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from ._validation import check_int, make_rng
from .linear_forms import FormFamily, check_family
from .random_measure import SignedMeasure

POWER_TOL = 1e-10
POWER_MAXITER = 500
ASCENT_TOL = 1e-12
# dense matrices below this many entries
DENSE_MAX = 4_000_000
BRUTEFORCE_CAP = 2**20
EXACT_SVD_MAX = 250_000


@dataclass(frozen=True, eq=False)
class MultilinearInstance:
    family: FormFamily
    kernel: SignedMeasure
    N: int
    A: int = 1
    g_window: str = "box"

    def __post_init__(self):
        check_int(self.N, "N", minimum=1)
        check_int(self.A, "A", minimum=1)
        if self.g_window not in ("box", "range"):
            raise ValueError(f"g_window must be 'box' or 'range', got {self.g_window!r}")
        if not isinstance(self.family, FormFamily):
            object.__setattr__(self, "family", FormFamily(self.family))
        check_family(self.family, operator=False)

    @property
    def M(self):
        return self.family.M

    @property
    def half_width(self):
        return self.A * self.N

    def scaled(self, c):
        return MultilinearInstance(self.family, self.kernel.scaled(c), self.N, self.A, self.g_window)

    @cached_property
    def layout(self):
        return _OperatorLayout.build(self)


@dataclass(eq=False)
class _OperatorLayout:
    """Nonzero kernel entries of the operator in coordinate form."""

    x_half: int
    y_half: int
    g_half: list
    rows: np.ndarray
    cols: np.ndarray
    w: np.ndarray
    gidx: list = field(default_factory=list)

    @property
    def shape(self):
        return (2 * self.x_half + 1, 2 * self.y_half + 1)

    @classmethod
    def build(cls, inst):
        check_family(inst.family, operator=True)
        L0 = inst.family.kernel
        Wy = inst.half_width
        Wk = inst.kernel.half_width
        Wx = (L0.den * Wk + abs(L0.b) * Wy) // abs(L0.a)
        X, Y = np.meshgrid(np.arange(-Wx, Wx + 1), np.arange(-Wy, Wy + 1), indexing="ij")
        u, ok = L0.evaluate_grid(X, Y)
        w = np.where(ok, inst.kernel(np.where(ok, u, 0)), 0.0)
        keep = w != 0
        if inst.g_window == "box":
            g_half = [Wy] * inst.M
        else:
            g_half = [L.max_abs(Wx, Wy) for L in inst.family.functions]
        gidx = []
        for L, Wg in zip(inst.family.functions, g_half):
            t, okj = L.evaluate_grid(X, Y)
            keep &= okj & (np.abs(t) <= Wg)
            gidx.append(t + Wg)
        rows, cols = np.nonzero(keep)
        return cls(
            x_half=int(Wx),
            y_half=int(Wy),
            g_half=[int(h) for h in g_half],
            rows=rows,
            cols=cols,
            w=w[rows, cols],
            gidx=[g[rows, cols] for g in gidx],
        )

    def weights(self, gs):
        out = self.w.astype(np.result_type(self.w, *gs))
        for g, idx in zip(gs, self.gidx):
            out = out * g[idx]
        return out

    def matrix(self, weights, dense=None):
        nx, ny = self.shape
        if dense is None:
            dense = nx * ny <= DENSE_MAX
        if dense:
            K = np.zeros((nx, ny), dtype=weights.dtype)
            K[self.rows, self.cols] = weights
            return K
        return sp.csr_matrix((weights, (self.rows, self.cols)), shape=(nx, ny))


def _as_vec(values, half_width, name, dtype=float):
    arr = np.asarray(values, dtype=dtype)
    if arr.shape != (2 * half_width + 1,):
        raise ValueError(f"{name} must have shape ({2 * half_width + 1},), got {arr.shape}")
    return arr


def g_half_widths(instance):
    return list(instance.layout.g_half)


def apply_T(instance, f, gs):
    """Evaluate ``T(f, g_1..g_M)`` on the output window ``[-Wx, Wx]``.

    ``g_j`` is indexed by ``[-G_j, G_j]`` with ``G_j`` from :func:`g_half_widths`.
    """
    lay = instance.layout
    if len(gs) != instance.M:
        raise ValueError(f"expected {instance.M} functions g, got {len(gs)}")
    dtype = np.result_type(np.asarray(f), *[np.asarray(g) for g in gs], float)
    f = _as_vec(f, lay.y_half, "f", dtype)
    gs = [_as_vec(g, h, f"g_{j + 1}", dtype) for j, (g, h) in enumerate(zip(gs, lay.g_half))]
    contrib = lay.weights(gs) * f[lay.cols]
    nx = lay.shape[0]
    if np.iscomplexobj(contrib):
        return np.bincount(lay.rows, contrib.real, nx) + 1j * np.bincount(lay.rows, contrib.imag, nx)
    return np.bincount(lay.rows, contrib, nx)


def output_window(instance):
    return instance.layout.x_half


class ScalarEvaluator:
    """Precomputed grid for repeated evaluation of one scalar form.

    Kernel and function arrays may be swapped between calls as long as the
    kernel keeps its half-width; this is what the degree-reduction loop needs.
    """

    def __init__(self, instance, grid=None):
        self.instance = instance
        W = instance.half_width
        self.W = W
        if grid is None:
            X, Y = np.meshgrid(np.arange(-W, W + 1), np.arange(-W, W + 1), indexing="ij")
            mask = np.ones(X.shape, dtype=bool)
        else:
            X, Y, mask = grid
        self.X, self.Y, self.mask = X, Y, mask
        Wk = instance.kernel.half_width
        u, ok = instance.family.kernel.evaluate_grid(X, Y)
        self.k_ok = ok & mask & (np.abs(u) <= Wk)
        self.k_idx = np.where(self.k_ok, u + Wk, 0)
        self.f_ok = []
        self.f_idx = []
        for L in instance.family.functions:
            t, ok = L.evaluate_grid(X, Y)
            inside = ok & (np.abs(t) <= W)
            self.f_ok.append(inside)
            self.f_idx.append(np.where(inside, t + W, 0))

    def terms(self, kernel_values, fs):
        term = np.where(self.k_ok, kernel_values[self.k_idx], 0.0)
        for f, ok, idx in zip(fs, self.f_ok, self.f_idx):
            term = term * np.where(ok, f[idx], 0.0)
        return term

    def __call__(self, kernel_values, fs):
        return float(np.sum(self.terms(kernel_values, fs)))


def scalar_form(instance, fs, grid=None):
    """Exact double sum of the scalar form over the window (or a supplied grid).

    ``grid`` is ``(X, Y, mask)`` as returned by ``CoordinateChange.grid``.
    Functions are indexed by ``[-A N, A N]`` and vanish outside it.
    """
    if len(fs) != instance.M:
        raise ValueError(f"expected {instance.M} functions, got {len(fs)}")
    W = instance.half_width
    fs = [_as_vec(f, W, f"f_{j + 1}") for j, f in enumerate(fs)]
    return ScalarEvaluator(instance, grid)(instance.kernel.values, fs)


# ---------------------------------------------------------------- bilinear


def fourier_symbol_grid(kernel, n_points):
    """``|rho_hat(2 pi k / n)|`` for ``k = 0..n-1`` with ``rho_hat(xi) = sum rho(x) e^{-i xi x}``."""
    if n_points < kernel.values.size:
        raise ValueError("grid must have at least as many points as the kernel support window")
    return np.abs(np.fft.fft(kernel.values, n=n_points))


def bilinear_norm_report(kernel, oversample=8):
    """Grid supremum of ``|rho_hat|`` with an a-priori bound on the grid error."""
    check_int(oversample, "oversample", minimum=4)
    W = kernel.half_width
    n = oversample * (2 * W + 1)
    if kernel.is_zero():
        return {"value": 0.0, "grid_points": n, "grid_error": 0.0}
    mags = fourier_symbol_grid(kernel, n)
    # |d/dxi rho_hat| <= sum |x| |rho(x)|; nearest grid point is within pi / n
    slope = float(np.sum(np.abs(kernel.xs) * np.abs(kernel.values)))
    return {"value": float(mags.max()), "grid_points": n, "grid_error": slope * np.pi / n}


def bilinear_norm_exact(kernel, oversample=8):
    """l2 -> l2 norm of convolution with ``kernel`` on Z, via the sup of its symbol."""
    return bilinear_norm_report(kernel, oversample)["value"]


def convolution_matrix(kernel, half_width):
    """Explicit matrix of ``f -> rho * f`` for ``f`` on ``[-half_width, half_width]``."""
    Wk = kernel.half_width
    x = np.arange(-(Wk + half_width), Wk + half_width + 1)
    y = np.arange(-half_width, half_width + 1)
    return kernel(x[:, None] - y[None, :])


def power_iteration(K, v0=None, tol=POWER_TOL, maxiter=POWER_MAXITER, rng=None):
    """Top singular pair of ``K`` by power iteration on ``K^H K``.

    Returns ``(sigma, v)`` with ``sigma = |K v|``; started from ``v0`` the
    value never decreases.
    """
    n = K.shape[1]
    if v0 is None:
        rng = np.random.default_rng(0) if rng is None else rng
        v0 = rng.standard_normal(n)
    v = np.asarray(v0, dtype=np.result_type(K.dtype, np.asarray(v0).dtype, float)).copy()
    nv = np.linalg.norm(v)
    if nv == 0:
        return 0.0, v
    v /= nv
    Kv = K @ v
    sigma = float(np.linalg.norm(Kv))
    for _ in range(maxiter):
        if sigma == 0:
            break
        w = K.conj().T @ Kv
        nw = np.linalg.norm(w)
        if nw == 0:
            break
        v_new = w / nw
        Kv_new = K @ v_new
        s_new = float(np.linalg.norm(Kv_new))
        if s_new < sigma:
            break
        done = s_new - sigma <= tol * s_new
        v, Kv, sigma = v_new, Kv_new, s_new
        if done:
            break
    return sigma, v


def convolution_matrix_norm(kernel, half_width, **kw):
    K = convolution_matrix(kernel, half_width)
    return power_iteration(K, np.ones(K.shape[1]), **kw)[0]


# ---------------------------------------------------------------- ascent


def _top_singular(K):
    if sp.issparse(K) or K.size > EXACT_SVD_MAX:
        return None
    return float(np.linalg.norm(K, 2)) if K.size else 0.0


def _coefficients(lay, gs, j, pair):
    """Coefficient of ``g_j(t)`` in ``<u, T(f, g)>``; ``pair`` = u[rows] * f[cols] * w."""
    c = pair
    for i, (g, idx) in enumerate(zip(gs, lay.gidx)):
        if i != j:
            c = c * g[idx]
    size = 2 * lay.g_half[j] + 1
    if np.iscomplexobj(c):
        return np.bincount(lay.gidx[j], c.real, size) + 1j * np.bincount(lay.gidx[j], c.imag, size)
    return np.bincount(lay.gidx[j], c, size)


@dataclass
class AscentResult:
    value: float
    f: np.ndarray
    gs: list
    history: list
    restart: int = 0


def _ascent_real(lay, gs, f, iters):
    history = []
    best = -np.inf
    for _ in range(iters):
        K = lay.matrix(lay.weights(gs))
        sigma, f = power_iteration(K, f)
        history.append(sigma)
        if sigma == 0:
            break
        u = (K @ f) / sigma
        pair = u[lay.rows] * f[lay.cols] * lay.w
        for j in range(len(gs)):
            c = _coefficients(lay, gs, j, pair)
            gs[j] = np.where(c > 0, 1.0, np.where(c < 0, -1.0, gs[j]))
            # objective <u, T(f, g)> after this half-step
            history.append(float(np.dot(_coefficients(lay, gs, j, pair), gs[j])))
        if sigma - best <= ASCENT_TOL * max(abs(sigma), 1e-300):
            break
        best = sigma
    K = lay.matrix(lay.weights(gs))
    exact = _top_singular(K)
    if exact is None:
        exact, f = power_iteration(K, f)
    return exact, f, gs, history


def _polish_flips(lay, gs, value, max_rounds=50):
    """Single sign flips of relevant ``g_j`` entries, kept only when the exact norm grows."""
    relevant = [np.unique(idx) for idx in lay.gidx]
    for _ in range(max_rounds):
        improved = False
        for j, rel in enumerate(relevant):
            for t in rel:
                gs[j][t] = -gs[j][t]
                v = _top_singular(lay.matrix(lay.weights(gs), dense=True))
                if v > value * (1 + ASCENT_TOL):
                    value, improved = v, True
                else:
                    gs[j][t] = -gs[j][t]
        if not improved:
            break
    return value, gs


POLISH_MAX_COORDS = 64


def op_norm_lower(instance, restarts=20, iters=200, seed=0, init=None, polish=None):
    """Lower bound for ``sup |T(f, g)|_2`` over ``|f|_2 <= 1``, ``|g_j|_inf <= 1``.

    Alternates an exact top-singular-vector step in ``f`` with a sign step
    in each ``g_j``; every half-step is nondecreasing.  Restart 0 starts
    from ``g = 1`` (or ``init``), the others from random signs.  ``polish``
    then tries single sign flips until none helps; by default it runs when
    there are at most ``POLISH_MAX_COORDS`` relevant entries and the matrix
    is small enough for an exact SVD.
    """
    lay = instance.layout
    if polish is None:
        coords = sum(np.unique(idx).size for idx in lay.gidx)
        polish = coords <= POLISH_MAX_COORDS and lay.shape[0] * lay.shape[1] <= EXACT_SVD_MAX
    best = None
    for k in range(restarts):
        rng = make_rng(seed, k)
        if k == 0:
            gs = [np.ones(2 * h + 1) for h in lay.g_half] if init is None else [g.copy() for g in init]
        else:
            gs = [rng.choice([-1.0, 1.0], size=2 * h + 1) for h in lay.g_half]
        f0 = rng.standard_normal(lay.shape[1])
        value, f, gs, hist = _ascent_real(lay, gs, f0, iters)
        if polish and value > 0:
            value, gs = _polish_flips(lay, gs, value)
            hist.append(value)
            f = np.linalg.svd(lay.matrix(lay.weights(gs), dense=True))[2][0]
        if best is None or value > best.value:
            best = AscentResult(value, f, gs, hist, k)
    if best is None:
        raise ValueError("restarts must be >= 1")
    return best


def _bruteforce_plan(lay):
    relevant = [np.unique(idx) for idx in lay.gidx]
    bits = sum(max(len(r) - 1, 0) for r in relevant)
    return relevant, bits


def op_norm_bruteforce(instance, cap=BRUTEFORCE_CAP, chunk=4096):
    """Exact ``||T||_op`` (real scalars) by exhausting sign vectors ``g_j``.

    Only values of ``g_j`` that meet a nonzero kernel entry matter, and a
    global sign flip of one ``g_j`` leaves the norm unchanged, so
    ``2^{sum_j (n_j - 1)}`` patterns suffice.
    """
    lay = instance.layout
    if lay.w.size == 0:
        return 0.0
    relevant, bits = _bruteforce_plan(lay)
    if 2**bits > cap:
        raise ValueError(f"{2**bits} sign patterns exceed the cap of {cap}")
    rr, rows = np.unique(lay.rows, return_inverse=True)
    cc, cols = np.unique(lay.cols, return_inverse=True)
    # position of each entry's g_j value inside relevant[j]
    pos = [np.searchsorted(rel, idx) for rel, idx in zip(relevant, lay.gidx)]
    offsets = np.cumsum([0] + [max(len(r) - 1, 0) for r in relevant])
    best = 0.0
    total = 2**bits
    for start in range(0, total, chunk):
        k = np.arange(start, min(total, start + chunk), dtype=np.int64)
        B = np.where((k[:, None] >> np.arange(bits)) & 1, -1.0, 1.0) if bits else np.ones((k.size, 0))
        S = np.ones((k.size, lay.w.size))
        for j, (rel, pj) in enumerate(zip(relevant, pos)):
            signs = np.concatenate([np.ones((k.size, 1)), B[:, offsets[j]:offsets[j + 1]]], axis=1)
            S *= signs[:, pj]
        mats = np.zeros((k.size, rr.size, cc.size))
        mats[:, rows, cols] = S * lay.w
        best = max(best, float(np.linalg.norm(mats, 2, axis=(1, 2)).max()))
    return best


# ---------------------------------------------------------------- maximal


def _row_sup(A, f, y, n_grid):
    """Per-row best frequency index and value of ``|sum_y e^{-i xi y} A[x,y] f(y)|``."""
    S = np.fft.fft(A * f[None, :], n=n_grid, axis=1)
    k = np.argmax(np.abs(S), axis=1)
    return k, np.abs(S[np.arange(S.shape[0]), k])


def _ascent_maximal(lay, gs, f, n_grid, iters):
    y = np.arange(-lay.y_half, lay.y_half + 1)
    history = []
    best = -np.inf
    A = lay.matrix(lay.weights(gs), dense=True)
    f = f / np.linalg.norm(f)
    k, vals = _row_sup(A, f, y, n_grid)
    value = float(np.linalg.norm(vals))
    history.append(value)
    kept = (value, f, [g.copy() for g in gs])
    for _ in range(iters):
        phase = np.exp(-2j * np.pi * np.outer(k, y) / n_grid)
        K = A * phase
        sigma, f = power_iteration(K, f)
        if sigma == 0:
            break
        u = (K @ f) / sigma
        pair = np.conj(u[lay.rows]) * phase[lay.rows, lay.cols] * f[lay.cols] * lay.w
        for j in range(len(gs)):
            c = _coefficients(lay, gs, j, pair)
            mag = np.abs(c)
            gs[j] = np.where(mag > 0, np.conj(c) / np.where(mag > 0, mag, 1.0), gs[j])
        A = lay.matrix(lay.weights(gs), dense=True)
        k, vals = _row_sup(A, f, y, n_grid)
        value = float(np.linalg.norm(vals))
        history.append(value)
        if value > kept[0]:
            kept = (value, f, [g.copy() for g in gs])
        if value - best <= ASCENT_TOL * max(value, 1e-300):
            break
        best = value
    return kept[0], kept[1], kept[2], history


def maximal_norm_lower(instance, xi_grid=None, restarts=10, iters=200, seed=0, real_start=True):
    """Lower bound for ``||T*||_op`` with ``T* = sup_xi |T(e_xi f, g)|``.

    The frequency is chosen per output point from a grid of ``xi_grid``
    equally spaced values; ``f`` is complex and each ``g_j`` unimodular.
    With ``real_start`` the first restart begins at the real ascent's
    witness, so the result is never below :func:`op_norm_lower` with the
    same seed.
    """
    lay = instance.layout
    W = instance.half_width
    n_grid = 8 * W if xi_grid is None else int(xi_grid)
    if n_grid < 4 * W or n_grid < lay.shape[1]:
        raise ValueError(f"xi_grid must be >= max(4 A N, 2 A N + 1), got {n_grid}")
    best = None
    starts = []
    if real_start:
        real = op_norm_lower(instance, restarts=max(1, restarts), iters=iters, seed=seed)
        starts.append(([g.astype(complex) for g in real.gs], real.f.astype(complex)))
    for k in range(len(starts), restarts):
        rng = make_rng(seed, 10_000 + k)
        gs = [np.exp(2j * np.pi * rng.random(2 * h + 1)) for h in lay.g_half]
        f = rng.standard_normal(lay.shape[1]) + 1j * rng.standard_normal(lay.shape[1])
        starts.append((gs, f / np.linalg.norm(f)))
    for k, (gs, f) in enumerate(starts):
        value, f, gs, hist = _ascent_maximal(lay, gs, f, n_grid, iters)
        if best is None or value > best.value:
            best = AscentResult(value, f, gs, hist, k)
    return best


def maximal_value(instance, f, gs, xi_grid):
    """``|T*(f, g)|_2`` on the frequency grid, for given inputs."""
    lay = instance.layout
    y = np.arange(-lay.y_half, lay.y_half + 1)
    A = lay.matrix(lay.weights([np.asarray(g, dtype=complex) for g in gs]), dense=True)
    _, vals = _row_sup(A, np.asarray(f, dtype=complex), y, xi_grid)
    return float(np.linalg.norm(vals))
