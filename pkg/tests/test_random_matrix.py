import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.linalg import svds
from hypothesis import given, settings, strategies as st

from multiform._validation import make_rng
from multiform.linear_forms import FormFamily, evaluate
from multiform.random_matrix import (
    MatrixModel,
    MatrixSample,
    averaging_form,
    bernstein_bound,
    chernoff_tail_check,
    indicator,
    matrix_form,
    row_abs_sums,
    row_sum_sup,
    sample_matrix,
    selector_form,
    spectral_norm,
    split_bound_check,
    weak_norm_bruteforce,
    weak_norm_unpruned,
)

FAM2 = FormFamily.parse("1,-1; 1,0; 0,1")
FAM3 = FormFamily.parse("1,-1; 1,0; 0,1; 1,1")


def test_model_checks():
    assert MatrixModel(8, gamma=0.5).p == pytest.approx(8**-0.5)
    assert MatrixModel(8, gamma=0.0, density=0.5).p == 0.5
    with pytest.raises(ValueError):
        MatrixModel(8)
    with pytest.raises(ValueError):
        MatrixModel(8, p=0.5, gamma=0.1)
    with pytest.raises(ValueError):
        MatrixModel(8, p=0.05)


def test_p_one_is_zero():
    smp = sample_matrix(MatrixModel(5, p=1.0))
    assert np.all(smp.values == 0)
    assert spectral_norm(smp) == 0.0


def test_deterministic():
    m = MatrixModel(6, p=0.4, seed=3)
    np.testing.assert_array_equal(sample_matrix(m).values, sample_matrix(m).values)
    m = MatrixModel(200, p=0.02, seed=3)
    a, b = sample_matrix(m), sample_matrix(m)
    assert (a.selectors != b.selectors).nnz == 0


def test_sparse_sampling_law():
    # the count of ones is Binomial(n^2, p) on both routes
    N, p = 60, 0.05
    n = 2 * N + 1
    counts = [sample_matrix(MatrixModel(N, p=p), make_rng(1, t), sparse=True).selectors.nnz for t in range(200)]
    dense = [int(sample_matrix(MatrixModel(N, p=p), make_rng(2, t), sparse=False).selectors.sum()) for t in range(200)]
    sd = np.sqrt(n * n * p * (1 - p) / 200)
    assert abs(np.mean(counts) - n * n * p) <= 4 * sd
    assert abs(np.mean(dense) - n * n * p) <= 4 * sd


def test_row_counts_mean():
    N, p = 50, 0.2
    smp = sample_matrix(MatrixModel(N, p=p, seed=4))
    rows = smp.selectors.sum(axis=1)
    n = smp.size
    assert abs(rows.mean() - n * p) <= 4 * np.sqrt(p * (1 - p))


def test_form_matches_double_loop():
    N = 8
    rng = make_rng(5)
    smp = sample_matrix(MatrixModel(N, p=0.3, seed=5))
    fs = [rng.standard_normal(2 * N + 1) for _ in range(3)]
    r = smp.values
    total = 0.0
    for x in range(-N, N + 1):
        for y in range(-N, N + 1):
            term = r[x + N, y + N]
            for L, f in zip(FAM3.functions, fs):
                t = evaluate(L, x, y)
                term *= f[t + N] if t is not None and abs(t) <= N else 0.0
            total += term
    assert matrix_form(smp, FAM3, fs) == pytest.approx(total, rel=1e-10, abs=1e-12)


def test_form_shape_checks():
    smp = sample_matrix(MatrixModel(3, p=0.5))
    with pytest.raises(ValueError):
        matrix_form(smp, FAM2, [np.ones(7)])
    with pytest.raises(ValueError):
        matrix_form(smp, FAM2, [np.ones(7), np.ones(6)])


def test_selector_is_t_plus_a():
    N = 5
    smp = sample_matrix(MatrixModel(N, p=0.4, seed=6))
    rng = make_rng(6)
    fs = [rng.uniform(0, 1, 2 * N + 1) for _ in range(3)]
    lhs = selector_form(smp, FAM3, fs)
    rhs = matrix_form(smp, FAM3, fs) + averaging_form(FAM3, N, fs)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_weak_norm_zero_matrix():
    smp = sample_matrix(MatrixModel(2, p=1.0))
    v, _ = weak_norm_bruteforce(smp, FAM2)
    assert v == 0.0


def test_weak_norm_singleton_lower_bound():
    smp = sample_matrix(MatrixModel(2, p=0.5, seed=7))
    v, wit = weak_norm_bruteforce(smp, FAM2)
    # E_1 = {x}, E_2 = {y} picks out one entry
    assert v >= np.abs(smp.values).max() - 1e-12
    E = [indicator(5, w) for w in wit]
    assert abs(matrix_form(smp, FAM2, E)) / np.sqrt(E[0].sum() * E[1].sum()) == pytest.approx(v, rel=1e-12)


def test_weak_norm_beats_random_tuples():
    smp = sample_matrix(MatrixModel(2, p=0.5, seed=8))
    v, _ = weak_norm_bruteforce(smp, FAM3)
    rng = make_rng(8)
    for _ in range(300):
        sets = [(rng.random(5) < 0.5).astype(float) for _ in range(3)]
        if sets[0].sum() == 0 or sets[1].sum() == 0:
            continue
        assert abs(matrix_form(smp, FAM3, sets)) / np.sqrt(sets[0].sum() * sets[1].sum()) <= v + 1e-12


@pytest.mark.parametrize("fam,seed", [(FAM2, 9), (FAM2, 10), (FAM3, 11), (FormFamily.parse("1,-1; 1,1; 1,-1"), 12)])
def test_pruned_equals_unpruned(fam, seed):
    smp = sample_matrix(MatrixModel(2, p=0.5, seed=seed))
    v, _ = weak_norm_bruteforce(smp, fam)
    assert v == pytest.approx(weak_norm_unpruned(smp, fam), rel=1e-12)


def test_weak_norm_caps():
    with pytest.raises(ValueError):
        weak_norm_bruteforce(sample_matrix(MatrixModel(7, p=0.5)), FAM2)


def test_bernstein_bound():
    assert float(bernstein_bound(0.0, 3.0)) == 2.0
    assert float(bernstein_bound(0.0, 0.0)) == 2.0
    assert float(bernstein_bound(1.0, 0.0)) == 0.0
    vals = bernstein_bound(np.linspace(0, 5, 11), 2.0)
    assert np.all(np.diff(vals) < 0)


def test_chernoff_full_square():
    rep = chernoff_tail_check(MatrixModel(16, p=0.25), trials=50_000, seed=1)
    assert rep["holds"] and rep["mean_ok"] and rep["variance_ok"]
    assert rep["E_size"] == 33**2


def test_chernoff_direct_matches_binomial():
    model = MatrixModel(4, p=0.5)
    E = make_rng(2).random((9, 9)) < 0.4
    a = chernoff_tail_check(model, E, trials=4000, seed=3, method="direct")
    b = chernoff_tail_check(model, E, trials=4000, seed=3, method="binomial")
    assert a["E_size"] == b["E_size"] == int(E.sum())
    assert a["holds"] and b["holds"] and a["mean_ok"] and a["variance_ok"]
    for ra, rb in zip(a["rows"], b["rows"]):
        assert abs(ra["tail"] - rb["tail"]) <= 4 * np.hypot(ra["tail_se"], rb["tail_se"])


def test_chernoff_rejects_empty():
    with pytest.raises(ValueError):
        chernoff_tail_check(MatrixModel(2, p=0.5), np.zeros((5, 5), bool), trials=10)


def test_row_sums_exact_at_p_one():
    draws = row_abs_sums(MatrixModel(4, p=1.0), 10, make_rng(0))
    np.testing.assert_allclose(draws, 0.0)


def test_row_sums_match_dense():
    N, p = 6, 0.5
    model = MatrixModel(N, p=p)
    fast = row_abs_sums(model, 4000, make_rng(1))
    slow = [np.abs(sample_matrix(model, make_rng(2, t)).values).sum(axis=1).max() for t in range(4000)]
    se = np.hypot(fast.std(), np.std(slow)) / np.sqrt(4000)
    assert abs(fast.mean() - np.mean(slow)) <= 4 * se


def test_single_row_mean():
    # E sum_y |r(x, y)| = 2 (2N+1)(1-p) / N
    N, p = 32, 0.25
    draws = row_abs_sums(MatrixModel(N, p=p), 20_000, make_rng(3), single_row=True)
    exact = 2 * (2 * N + 1) * (1 - p) / N
    assert abs(draws.mean() - exact) <= 4 * draws.std() / np.sqrt(draws.size)


def test_row_sum_growth_sublinear():
    out = row_sum_sup([16, 32, 64, 128, 256], 0.3, 400, seed=4)
    assert out["loglog"]["ci"][1] < 1.0
    assert len(out["per_log"]) == 5


@pytest.mark.parametrize("fam,N", [(FAM2, 3), (FAM3, 2), (FormFamily.parse("1,-1; 1,1; 1,-1; 1,0"), 2)])
def test_split_bound(fam, N):
    rep = split_bound_check(sample_matrix(MatrixModel(N, p=0.5, seed=N)), fam, n_tuples=60, seed=N)
    assert rep["holds"], rep["failures"]
    assert rep["fiber_constant"] >= 1


def test_spectral_dense_vs_arpack():
    smp = sample_matrix(MatrixModel(60, p=0.2, seed=5))
    dense = float(np.linalg.norm(smp.values, 2))
    big = MatrixSample(smp.N, smp.p, sp.csr_matrix(smp.selectors.astype(np.float32)))
    arp = svds(big.operator(), k=1, return_singular_vectors=False, random_state=np.random.default_rng(0))[0]
    assert arp == pytest.approx(dense, rel=1e-5)
    assert spectral_norm(smp) == pytest.approx(dense, rel=1e-12)


def test_spectral_large_route():
    # 2N+1 > 200 goes through ARPACK; compare with the dense norm
    smp = sample_matrix(MatrixModel(120, p=0.05, seed=6))
    assert sp.issparse(smp.selectors)
    assert spectral_norm(smp) == pytest.approx(float(np.linalg.norm(smp.values, 2)), rel=1e-5)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.floats(0.34, 1.0), st.integers(0, 1000))
def test_selector_monotone(N, p, seed):
    p = max(p, 1 / N)
    smp = sample_matrix(MatrixModel(N, p=p, seed=seed))
    rng = make_rng(seed, 1)
    n = smp.size
    fs = [rng.uniform(0, 1, n) for _ in range(3)]
    base = selector_form(smp, FAM3, fs)
    for j in range(3):
        up = [f.copy() for f in fs]
        up[j] = up[j] + rng.uniform(0, 1, n)
        assert selector_form(smp, FAM3, up) >= base - 1e-12
