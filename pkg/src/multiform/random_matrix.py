"""Fully independent random kernels ``r(x, y) = (N p)^{-1} (s(x, y) - p)``.

Scalar forms ``T(f_1..f_M) = sum_{x,y} r(x, y) prod_j f_j(L_j(x, y))`` over
``[-N, N]^2`` with every ``f_j`` supported on ``[-N, N]``, their
restricted weak-type norms, row sums, concentration of
``X_E = sum_{(x,y) in E} (s - p)`` and the spectral norm of ``r``.
"""
from dataclasses import dataclass
from math import fsum

import numpy as np
import scipy.sparse as sp
from scipy import stats
from scipy.sparse.linalg import LinearOperator, svds

from ._validation import check_int, check_probability, make_rng
from .linear_forms import FormFamily

WEAK_MAX_SIZE = 12
WEAK_MAX_M = 3
# bit budget of the pruned weak-norm enumeration
WEAK_MAX_BITS = 24
# below this p samples are kept as sparse selector coordinates
SPARSE_P = 0.1


@dataclass(frozen=True)
class MatrixModel:
    """Pair-indexed selector model; ``p`` or ``gamma`` as for the one-variable model."""

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

    @property
    def size(self):
        return 2 * self.N + 1

    def rng(self, *extra):
        return make_rng(self.seed, self.stream_id, *extra)


@dataclass(frozen=True, eq=False)
class MatrixSample:
    """One draw; ``selectors`` is a dense bool array or a CSR matrix of ones."""

    N: int
    p: float
    selectors: object

    @property
    def size(self):
        return 2 * self.N + 1

    @property
    def scale(self):
        return 1.0 / (self.N * self.p)

    @property
    def values(self):
        """Dense ``r`` on ``[-N, N]^2``, rows indexed by ``x``."""
        s = self.selectors.toarray() if sp.issparse(self.selectors) else self.selectors
        if self.p == 1.0:
            return np.zeros(s.shape)
        return (s.astype(float) - self.p) * self.scale

    def operator(self):
        """``r`` as a linear operator: sparse selectors minus a rank-one shift."""
        S = self.selectors
        if not sp.issparse(S):
            S = np.asarray(S, dtype=np.float32)
        St = S.T
        n, p, c = self.size, self.p, self.scale

        # keep products in float32 so the 0/1 matrix is never upcast
        def mv(v):
            v = np.asarray(v).reshape(-1)
            return c * ((S @ v.astype(np.float32)).astype(float) - p * v.sum())

        def rmv(v):
            v = np.asarray(v).reshape(-1)
            return c * ((St @ v.astype(np.float32)).astype(float) - p * v.sum())

        return LinearOperator((n, n), matvec=mv, rmatvec=rmv, dtype=float)


def sample_matrix(model, rng=None, sparse=None):
    """Independent Bernoulli(p) selector for every pair in ``[-N, N]^2``."""
    rng = model.rng() if rng is None else rng
    n = model.size
    sparse = model.p < SPARSE_P if sparse is None else sparse
    if not sparse:
        return MatrixSample(model.N, model.p, rng.random((n, n)) < model.p)
    # a Binomial count of uniformly placed ones is the same law as n^2 Bernoullis
    k = int(rng.binomial(n * n, model.p))
    flat = rng.choice(n * n, size=k, replace=False)
    S = sp.csr_matrix((np.ones(k, dtype=np.float32), (flat // n, flat % n)), shape=(n, n))
    return MatrixSample(model.N, model.p, S)


# ---------------------------------------------------------------- forms


class FormLayout:
    """For each ``L_j``, the index of ``L_j(x, y)`` in ``[-N, N]`` or -1 if it misses."""

    def __init__(self, family, N):
        family = family if isinstance(family, FormFamily) else FormFamily.parse(family)
        if family.M < 2:
            raise ValueError("need at least two function slots")
        self.family = family
        self.N = N
        x = np.arange(-N, N + 1)
        X, Y = np.meshgrid(x, x, indexing="ij")
        self.idx = []
        for L in family.functions:
            t, ok = L.evaluate_grid(X, Y)
            inside = ok & (np.abs(t) <= N)
            self.idx.append(np.where(inside, t + N, -1))

    @property
    def M(self):
        return self.family.M

    def weights(self, fs):
        out = np.ones(self.idx[0].shape)
        for f, idx in zip(fs, self.idx):
            f = np.asarray(f, dtype=float)
            out = out * np.where(idx >= 0, f[np.maximum(idx, 0)], 0.0)
        return out

    def fiber_constant(self):
        """Largest number of cells sharing one ``(L_1, L_2)`` value pair."""
        a, b = self.idx[0], self.idx[1]
        ok = (a >= 0) & (b >= 0)
        n = 2 * self.N + 1
        counts = np.bincount((a[ok] * n + b[ok]).ravel(), minlength=n * n)
        return int(counts.max(initial=0))

    def tensor(self, values):
        """``Q[t_1, ..., t_M] = sum of values over cells with L_j = t_j``."""
        n = 2 * self.N + 1
        ok = np.all([i >= 0 for i in self.idx], axis=0)
        Q = np.zeros((n,) * self.M)
        np.add.at(Q, tuple(i[ok] for i in self.idx), values[ok])
        return Q


def _layout(family, N):
    return family if isinstance(family, FormLayout) else FormLayout(family, N)


def matrix_form(sample, family, fs):
    """Exact ``sum_{x,y} r(x, y) prod_j f_j(L_j(x, y))``; each ``f_j`` on ``[-N, N]``."""
    lay = _layout(family, sample.N)
    if len(fs) != lay.M:
        raise ValueError(f"expected {lay.M} functions, got {len(fs)}")
    n = sample.size
    for j, f in enumerate(fs):
        if np.shape(f) != (n,):
            raise ValueError(f"f_{j + 1} must have shape ({n},)")
    return fsum((sample.values * lay.weights(fs)).ravel())


def averaging_form(family, N, fs):
    """Nonrandom ``A(f) = N^{-1} sum_{x,y} prod_j f_j(L_j(x, y))``."""
    lay = _layout(family, N)
    return fsum(lay.weights(fs).ravel()) / N


def selector_form(sample, family, fs):
    """``(N p)^{-1} sum s prod f_j``, which equals ``T + A`` and is monotone in nonnegative inputs."""
    lay = _layout(family, sample.N)
    s = sample.selectors.toarray() if sp.issparse(sample.selectors) else sample.selectors
    return fsum((s * lay.weights(fs)).ravel()) * sample.scale


def indicator(size, members):
    v = np.zeros(size)
    v[list(members)] = 1.0
    return v


# ---------------------------------------------------------------- weak norm


def _bit_rows(codes, n):
    return ((codes[:, None] >> np.arange(n)) & 1).astype(float)


def _check_weak(sample, lay):
    if sample.size > WEAK_MAX_SIZE or lay.M > WEAK_MAX_M:
        raise ValueError(f"weak norm enumeration needs 2N+1 <= {WEAK_MAX_SIZE} and M <= {WEAK_MAX_M}")
    bits = sample.size * (lay.M - 1)
    if bits > WEAK_MAX_BITS:
        raise ValueError(f"2^{bits} set tuples exceed the enumeration cap 2^{WEAK_MAX_BITS}")


def weak_norm_bruteforce(sample, family, min_product=0, chunk=1 << 12):
    """``sup |E_1|^{-1/2} |E_2|^{-1/2} |T(E_1..E_M)|`` over nonempty ``E_1, E_2``.

    Every set except ``E_2`` is enumerated.  With the others fixed the form
    is linear in ``1_{E_2}`` with coefficients ``c``, so the best ``E_2`` of
    each size ``k`` collects the ``k`` largest or the ``k`` smallest
    entries of ``c``.  ``min_product`` restricts to ``|E_1| |E_2| >= min_product``.
    Returns ``(value, witness)`` with witness a list of index lists.
    """
    lay = _layout(family, sample.N)
    _check_weak(sample, lay)
    n, M = sample.size, lay.M
    Q = lay.tensor(sample.values)
    # slot 2 last so contraction leaves the E_2 coefficients
    Q = np.moveaxis(Q, 1, -1)
    others = M - 1
    total = 1 << (n * others)
    mask = (1 << n) - 1
    best, wit = 0.0, None
    ks = np.arange(1, n + 1)
    for start in range(0, total, chunk):
        codes = np.arange(start, min(total, start + chunk), dtype=np.int64)
        sets = [_bit_rows((codes >> (n * i)) & mask, n) for i in range(others)]
        e1 = sets[0].sum(axis=1)
        live = e1 > 0
        if not live.any():
            continue
        c = np.einsum("ks,s...->k...", sets[0], Q)
        for S in sets[1:]:
            c = np.einsum("ku,ku...->k...", S, c)
        order = np.argsort(c, axis=1)
        cs = np.take_along_axis(c, order, axis=1)
        low = np.cumsum(cs, axis=1)
        high = np.cumsum(cs[:, ::-1], axis=1)
        vals = np.maximum(np.abs(low), np.abs(high)) / np.sqrt(np.maximum(e1, 1)[:, None] * ks[None, :])
        allowed = live[:, None] & (e1[:, None] * ks[None, :] >= min_product)
        vals = np.where(allowed, vals, -1.0)
        i, k = np.unravel_index(int(np.argmax(vals)), vals.shape)
        if vals[i, k] > best:
            best = float(vals[i, k])
            top = order[i, ::-1][: k + 1] if abs(high[i, k]) >= abs(low[i, k]) else order[i, : k + 1]
            picked = [np.flatnonzero(S[i]).tolist() for S in sets]
            wit = [picked[0], sorted(top.tolist())] + picked[1:]
    return best, wit


def weak_norm_unpruned(sample, family):
    """Same supremum with ``E_2`` enumerated too; the oracle for tiny windows."""
    lay = _layout(family, sample.N)
    n, M = sample.size, lay.M
    if n * M > 20:
        raise ValueError("unpruned enumeration is for tiny windows only")
    Q = lay.tensor(sample.values)
    B = _bit_rows(np.arange(1 << n, dtype=np.int64), n)
    sizes = B.sum(axis=1)
    V = Q
    for _ in range(M):
        # contract the leading value axis; the new set axis goes last
        V = np.tensordot(V, B, axes=([0], [1]))
    # V has shape (2^n,) * M with axis j the set E_{j+1}
    denom = np.sqrt(np.multiply.outer(sizes, sizes))
    denom = denom.reshape(denom.shape + (1,) * (M - 2))
    with np.errstate(invalid="ignore", divide="ignore"):
        R = np.where(denom > 0, np.abs(V) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(R.max())


# ---------------------------------------------------------------- concentration


def bernstein_bound(lam, sigma):
    """``2 exp(-lam^2 sigma^2 / (2 sigma^2 + (2/3) lam sigma))`` for summands bounded by 1."""
    lam = np.asarray(lam, dtype=float)
    if sigma == 0:
        return np.where(lam > 0, 0.0, 2.0)
    return 2.0 * np.exp(-(lam**2) * sigma**2 / (2 * sigma**2 + (2.0 / 3.0) * lam * sigma))


def sample_X(model, E_size, trials, rng, method="binomial", E=None):
    """Draws of ``X_E = sum_E (s - p)``.

    ``binomial`` uses that the law depends on ``|E|`` only; ``direct`` sums
    sampled selectors over the explicit cell mask ``E``.
    """
    if method == "binomial":
        return rng.binomial(E_size, model.p, size=trials) - E_size * model.p
    if method == "direct":
        E = np.asarray(E, dtype=bool)
        out = np.empty(trials)
        for t in range(trials):
            s = rng.random(E.shape) < model.p
            out[t] = np.count_nonzero(s & E) - E_size * model.p
        return out
    raise ValueError(f"unknown method {method!r}")


def chernoff_tail_check(model, E=None, lambdas=(1.0, 2.0, 3.0), trials=100_000, seed=0, method="binomial"):
    """Empirical ``P(|X_E| > lam sigma)`` against the Bernstein bound, with ``sigma^2 = |E| p (1 - p)``.

    ``E`` is a boolean cell mask on ``[-N, N]^2`` (default: the full square).
    A tail passes when it is below the bound up to four binomial standard errors.
    """
    check_int(trials, "trials", minimum=1)
    n = model.size
    E = np.ones((n, n), dtype=bool) if E is None else np.asarray(E, dtype=bool)
    size = int(E.sum())
    if size < 1:
        raise ValueError("E must be nonempty")
    sigma = float(np.sqrt(size * model.p * (1 - model.p)))
    X = sample_X(model, size, trials, make_rng(seed, 4), method, E)
    rows = []
    for lam in lambdas:
        tail = float(np.mean(np.abs(X) > lam * sigma))
        se = float(np.sqrt(max(tail * (1 - tail), 1.0 / trials) / trials))
        bound = float(bernstein_bound(lam, sigma))
        rows.append({"lambda": float(lam), "tail": tail, "tail_se": se, "bound": bound,
                     "holds": bool(tail - 4 * se <= bound)})
    mean = float(X.mean())
    var = float(X.var(ddof=1)) if trials > 1 else float("nan")
    # SE of the sample variance from the fourth central moment of the binomial
    mu4 = size * model.p * (1 - model.p) * (1 + 3 * (size - 2) * model.p * (1 - model.p))
    var_se = float(np.sqrt(max(mu4 - sigma**4, 0.0) / trials))
    return {
        "E_size": size,
        "sigma": sigma,
        "rows": rows,
        "mean": mean,
        "mean_ok": bool(abs(mean) <= 4 * sigma / np.sqrt(trials) + 1e-12),
        "variance": var,
        "variance_ok": bool(abs(var - sigma**2) <= 4 * var_se + 1e-12),
        "holds": bool(all(r["holds"] for r in rows)),
    }


# ---------------------------------------------------------------- row sums


def row_abs_sums(model, trials, rng, single_row=False):
    """Draws of ``sup_x sum_y |r(x, y)|`` (or one fixed row), sampled exactly.

    A row with ``k`` selected cells has ``sum |r| = (k (1 - p) + (n - k) p) / (N p)``
    and ``k ~ Binomial(n, p)`` independently across rows.
    """
    n = model.size
    p = model.p
    rows = 1 if single_row else n
    k = rng.binomial(n, p, size=(trials, rows))
    sums = (k * (1 - p) + (n - k) * p) / (model.N * p)
    return sums.max(axis=1)


def row_sum_sup(N_list, gamma, trials, seed=0, density=1.0, single_row=False):
    """``E sup_x sum_y |r|`` across ``N`` with two growth fits.

    ``loglog`` regresses ``log2 mean`` on ``log2 N`` (sublinear means slope < 1);
    ``vs_log`` regresses ``mean`` on ``log2 N``, whose slope is the constant
    in an ``O(log N)`` bound.
    """
    rows = []
    for i, N in enumerate(N_list):
        model = MatrixModel(N, gamma=gamma, density=density, seed=seed)
        draws = row_abs_sums(model, trials, make_rng(seed, 5, i), single_row)
        rows.append({"N": int(N), "p": model.p, "mean": float(draws.mean()),
                     "stderr": float(draws.std(ddof=1) / np.sqrt(trials)) if trials > 1 else float("nan")})
    logN = np.log2([r["N"] for r in rows])
    means = np.array([r["mean"] for r in rows])
    out = {"rows": rows}
    if len(rows) >= 3:
        ll = stats.linregress(logN, np.log2(means))
        lin = stats.linregress(logN, means)
        t = stats.t.ppf(0.975, len(rows) - 2)
        out["loglog"] = {"slope": ll.slope, "ci": [ll.slope - t * ll.stderr, ll.slope + t * ll.stderr]}
        out["vs_log"] = {"slope": lin.slope, "ci": [lin.slope - t * lin.stderr, lin.slope + t * lin.stderr]}
        out["per_log"] = (means / np.log2(2 + np.array([r["N"] for r in rows]))).tolist()
    return out


# ---------------------------------------------------------------- split lemma


def _all_sets(n):
    return _bit_rows(np.arange(1 << n, dtype=np.int64), n)


def split_bound_check(sample, family, eta=0.5, n_tuples=200, seed=0):
    """Exact checks of the facts behind the large-set reduction on a small sample.

    * ``A`` and ``T + A`` never decrease when one ``E_j`` grows by a point.
    * ``A(E) <= A(E_1, E_2, 1, ...) <= C N^{-1} |E_1| |E_2|`` with ``C`` the
      largest ``(L_1, L_2)`` fiber.
    * ``|T(f)| <= 2 A(|f_1|, |f_2|, 1..) + T(|f_1|, |f_2|, 1..)`` for ``|f_j| <= 1``.
    * Replacing ``E_M`` by its complement in the range of ``L_M`` keeps at least
      half of the ``E_M``-free count.
    * ``sup*`` (sets with ``|E_1| |E_2| >= N^{2 - eta}``) is at most the full weak norm.
    """
    lay = _layout(family, sample.N)
    N, n, M = sample.N, sample.size, lay.M
    rng = make_rng(seed, 6)
    C = lay.fiber_constant()
    full = [np.ones(n)] * M
    ok_cells = np.all([i >= 0 for i in lay.idx], axis=0)
    fails = []
    A_full = averaging_form(lay, N, full)
    if abs(A_full - ok_cells.sum() / N) > 1e-12 * max(1.0, A_full):
        fails.append("full sets")
    # complement within the values L_M actually takes on lattice points of the box
    LM = lay.family.functions[-1]
    x = np.arange(-N, N + 1)
    X, Y = np.meshgrid(x, x, indexing="ij")
    t, okM = LM.evaluate_grid(X, Y)
    rest = np.all([i >= 0 for i in lay.idx[:-1]], axis=0) & okM
    for _ in range(n_tuples):
        sets = [(rng.random(n) < rng.uniform(0.2, 0.9)).astype(float) for _ in range(M)]
        sets[0][rng.integers(n)] = 1.0
        sets[1][rng.integers(n)] = 1.0
        a = averaging_form(lay, N, sets)
        st = selector_form(sample, lay, sets)
        for j in range(M):
            grown = [s.copy() for s in sets]
            off = np.flatnonzero(grown[j] == 0)
            if off.size:
                grown[j][rng.choice(off)] = 1.0
                if averaging_form(lay, N, grown) < a - 1e-12 or selector_form(sample, lay, grown) < st - 1e-12:
                    fails.append(f"monotonicity slot {j + 1}")
        a12 = averaging_form(lay, N, sets[:2] + [np.ones(n)] * (M - 2))
        if a > a12 + 1e-12 or a12 > C * sets[0].sum() * sets[1].sum() / N + 1e-12:
            fails.append("averaging bound")
        fs = [s * rng.uniform(-1, 1, n) for s in sets]
        lhs = abs(matrix_form(sample, lay, fs))
        absf = [np.abs(fs[0]), np.abs(fs[1])] + [np.ones(n)] * (M - 2)
        rhs = 2 * averaging_form(lay, N, absf) + matrix_form(sample, lay, absf)
        if lhs > rhs + 1e-9 * max(1.0, rhs):
            fails.append("pointwise bound")
        # E_M-free count and its split by E_M versus the complement of E_M in range(L_M)
        base = rest.copy()
        for S, idx in zip(sets[:-1], lay.idx[:-1]):
            base &= S[np.maximum(idx, 0)] > 0
        inE = base & (lay.idx[-1] >= 0)
        inE[inE] = sets[-1][lay.idx[-1][inE]] > 0
        kept, comp = int(inE.sum()), int(base.sum() - inE.sum())
        if 2 * max(kept, comp) < base.sum():
            fails.append("complement")
    out = {"fiber_constant": C, "averaging_full": A_full, "failures": sorted(set(fails)), "holds": not fails}
    if n * (M - 1) <= WEAK_MAX_BITS and n <= WEAK_MAX_SIZE and M <= WEAK_MAX_M:
        thr = N ** (2 - eta)
        weak, _ = weak_norm_bruteforce(sample, lay)
        star, _ = weak_norm_bruteforce(sample, lay, min_product=thr)
        out.update({"weak": weak, "sup_star": star, "threshold": thr})
        if star > weak + 1e-12:
            out["holds"] = False
            out["failures"].append("sup* exceeds weak norm")
    return out


# ---------------------------------------------------------------- spectral


def spectral_norm(sample, tol=1e-6):
    """Largest singular value of ``r``; dense SVD for small windows, ARPACK otherwise."""
    if sample.p == 1.0:
        return 0.0
    if sample.size <= 200:
        return float(np.linalg.norm(sample.values, 2))
    s = svds(sample.operator(), k=1, ncv=20, tol=tol, return_singular_vectors=False,
             random_state=np.random.default_rng(0))
    return float(s[0])


def spectral_trial(N, gamma, seed, cell, trial, density=1.0):
    model = MatrixModel(N, gamma=gamma, density=density, seed=seed)
    return spectral_norm(sample_matrix(model, make_rng(seed, 7, cell, trial)))
