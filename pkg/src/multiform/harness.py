"""Seeded parameter scans over ``(N, gamma)`` with log-log exponent fits.

Every trial draws from its own stream keyed by ``(seed, cell, trial)`` and
results are stored by index, so a scan is bit-for-bit reproducible for
any number of worker threads (``MULTIFORM_THREADS``).
"""
import csv
import io
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from ._validation import check_int, make_rng, n_workers
from .linear_forms import FormFamily, check_family
from .operator import MultilinearInstance, bilinear_norm_exact, maximal_norm_lower, op_norm_lower
from .random_matrix import spectral_trial
from .random_measure import SelectorModel, sample_r

ESTIMATORS = ("bilinear_exact", "ascent", "maximal", "matrix_spectral")


@dataclass
class ScanConfig:
    N_list: list
    gamma_list: list
    estimator: str = "bilinear_exact"
    family: str = None
    M: int = None
    trials: int = 10
    restarts: int = 5
    iters: int = 50
    seed: int = 0
    density: float = 1.0
    oversample: int = 8

    def __post_init__(self):
        self.N_list = [check_int(n, "N", minimum=1) for n in self.N_list]
        if any(b <= a for a, b in zip(self.N_list, self.N_list[1:])):
            raise ValueError("N_list must be strictly increasing")
        self.gamma_list = [float(g) for g in self.gamma_list]
        check_int(self.trials, "trials", minimum=10)
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if self.estimator in ("ascent", "maximal"):
            if self.family is None:
                raise ValueError(f"estimator {self.estimator} needs a family")
            fam = check_family(FormFamily.parse(self.family), operator=True)
            if self.M is not None and self.M != fam.M:
                raise ValueError(f"M={self.M} does not match the family's {fam.M} forms")
            self.M = fam.M

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def reference_slope(self, gamma):
        """Predicted decay exponent ``-(1 - gamma) / 2`` for the estimators that have one."""
        if self.estimator in ("bilinear_exact", "matrix_spectral"):
            return -(1.0 - gamma) / 2.0
        return None

    def decay_threshold(self):
        """Largest gamma with predicted decay: ``2^{-M}`` for ascent, ``2^{-M-1}`` for maximal."""
        if self.estimator == "ascent":
            return 2.0 ** (-self.M)
        if self.estimator == "maximal":
            return 2.0 ** (-self.M - 1)
        return 1.0


@dataclass
class ExponentFitResult:
    slope: float
    intercept: float
    ci: tuple
    stderr: float
    n_points: int
    excluded: int = 0
    note: str = ""

    @property
    def defined(self):
        return np.isfinite(self.slope)


def fit_exponent(N, means, level=0.95):
    """OLS of ``log2 mean`` on ``log2 N`` with a t-based confidence interval.

    Nonpositive means are dropped with a warning.  Fewer than two usable
    points leave the slope undefined (nan); two points give a slope with
    an undefined interval.
    """
    N = np.asarray(N, dtype=float)
    means = np.asarray(means, dtype=float)
    keep = (means > 0) & np.isfinite(means)
    excluded = int((~keep).sum())
    if excluded:
        warnings.warn(f"excluding {excluded} nonpositive means from the fit", RuntimeWarning, stacklevel=2)
    x, y = np.log2(N[keep]), np.log2(means[keep])
    n = x.size
    if n < 2 or np.ptp(x) == 0:
        return ExponentFitResult(float("nan"), float("nan"), (float("nan"), float("nan")), float("nan"),
                                 n, excluded, "slope undefined: fewer than two distinct N")
    res = stats.linregress(x, y)
    if n < 3:
        return ExponentFitResult(res.slope, res.intercept, (float("nan"), float("nan")), float("nan"),
                                 n, excluded, "interval undefined: two points")
    t = stats.t.ppf(0.5 + level / 2, n - 2)
    se = float(res.stderr)
    return ExponentFitResult(float(res.slope), float(res.intercept), (res.slope - t * se, res.slope + t * se),
                             se, n, excluded)


@dataclass
class ScanResult:
    config: ScanConfig
    rows: list
    fits: dict = field(default_factory=dict)

    def to_csv(self):
        buf = io.StringIO()
        cols = ["N", "gamma", "p", "mean", "median", "stderr", "trials"]
        w = csv.DictWriter(buf, fieldnames=cols)
        w.writeheader()
        for r in self.rows:
            w.writerow({c: r[c] for c in cols})
        return buf.getvalue()

    def summary(self):
        return {
            "config": asdict(self.config),
            "fits": {str(g): f for g, f in self.fits.items()},
        }

    def to_json(self):
        return json.dumps(self.summary(), indent=2, default=_json_default)

    def plot_data(self):
        return [{"gamma": r["gamma"], "log2_N": float(np.log2(r["N"])),
                 "log2_mean": float(np.log2(r["mean"])) if r["mean"] > 0 else None} for r in self.rows]


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o)}")


def _trial_value(cfg, N, gamma, cell, trial):
    seed = cfg.seed
    if cfg.estimator == "matrix_spectral":
        return spectral_trial(N, gamma, seed, cell, trial, density=cfg.density)
    model = SelectorModel(N, gamma=gamma, density=cfg.density, seed=seed)
    r = sample_r(model, make_rng(seed, 8, cell, trial))
    if cfg.estimator == "bilinear_exact":
        return bilinear_norm_exact(r, cfg.oversample)
    inst = MultilinearInstance(FormFamily.parse(cfg.family), r, N)
    if cfg.estimator == "ascent":
        return op_norm_lower(inst, restarts=cfg.restarts, iters=cfg.iters, seed=trial).value
    return maximal_norm_lower(inst, restarts=cfg.restarts, iters=cfg.iters, seed=trial).value


def run_scan(cfg, workers=None):
    """Run every ``(N, gamma)`` cell and fit one slope per gamma."""
    cells = [(N, g) for g in cfg.gamma_list for N in cfg.N_list]
    tasks = [(c, t) for c in range(len(cells)) for t in range(cfg.trials)]
    workers = n_workers(workers)

    def run(task):
        c, t = task
        N, g = cells[c]
        return _trial_value(cfg, N, g, c, t)

    if workers == 1:
        values = [run(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            values = list(ex.map(run, tasks))
    values = np.asarray(values, dtype=float).reshape(len(cells), cfg.trials)
    rows = []
    for (N, g), v in zip(cells, values):
        rows.append({
            "N": N,
            "gamma": g,
            "p": SelectorModel(N, gamma=g, density=cfg.density).p,
            "mean": float(v.mean()),
            "median": float(np.median(v)),
            "stderr": float(v.std(ddof=1) / np.sqrt(v.size)),
            "trials": int(v.size),
        })
    result = ScanResult(cfg, rows)
    for g in cfg.gamma_list:
        sel = [r for r in rows if r["gamma"] == g]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            fit = fit_exponent([r["N"] for r in sel], [r["mean"] for r in sel])
        ref = cfg.reference_slope(g)
        entry = asdict(fit)
        entry["reference_slope"] = ref
        entry["decay_predicted"] = bool(g < cfg.decay_threshold())
        entry["decay_observed"] = bool(fit.defined and np.isfinite(fit.ci[1]) and fit.ci[1] < 0)
        result.fits[g] = entry
    return result
