"""Command line entry point: ``multiform <subcommand> ...``."""
import argparse
import csv
import hashlib
import json
import sys

import numpy as np

from ._validation import make_rng
from .finite_group import GroupSpec, bilinear_bound_check, obstruction_report
from .harness import ScanConfig, run_scan
from .linear_forms import FormFamily, LinearForm, change_of_variables
from .operator import MultilinearInstance, maximal_norm_lower, op_norm_lower
from .random_matrix import (
    MatrixModel,
    chernoff_tail_check,
    matrix_form,
    row_sum_sup,
    sample_matrix,
    weak_norm_bruteforce,
)
from .random_measure import SelectorModel, sample_r
from .reduction import exceptional_set, verify_cs_step, verify_exceptional_bound, z_range
from .trace import (
    TraceConfig,
    expected_trace_exact,
    matrix_trace_exact,
    matrix_trace_monte_carlo,
    oracle_comparison,
    trace_monte_carlo,
)

DEFAULT_MATRIX_FORMS = ["1,0", "0,1", "1,1", "1,-1", "1,2"]


def _dump(obj, out=None):
    json.dump(obj, out or sys.stdout, indent=2, default=_plain)
    (out or sys.stdout).write("\n")


def _plain(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o)}")


def _selector_model(a):
    if a.p is not None:
        return SelectorModel(a.n, p=a.p, seed=a.seed)
    return SelectorModel(a.n, gamma=a.gamma, density=a.density, seed=a.seed)


def _witness_hash(f, gs):
    h = hashlib.sha1()
    for v in [f] + list(gs):
        h.update(np.round(np.asarray(v), 10).tobytes())
    return h.hexdigest()[:12]


def cmd_obstruction(a):
    spec = GroupSpec(a.p, a.d)
    rep = obstruction_report(spec)
    if a.bilinear_trials:
        rep["bilinear"] = bilinear_bound_check(spec, a.bilinear_trials, a.seed)
    _dump(rep)


def cmd_sample(a):
    r = sample_r(_selector_model(a))
    w = csv.writer(sys.stdout)
    w.writerow(["x", "value"])
    for x, v in zip(r.xs, r.values):
        w.writerow([int(x), repr(float(v))])


def cmd_norm(a):
    fam = FormFamily.parse(a.family)
    w = csv.writer(sys.stdout)
    w.writerow(["trial", "estimate", "witness_hash"])
    for t in range(a.trials):
        model = SelectorModel(a.n, gamma=a.gamma, density=a.density, seed=a.seed)
        r = sample_r(model, make_rng(a.seed, 8, 0, t))
        inst = MultilinearInstance(fam, r, a.n)
        if a.maximal:
            res = maximal_norm_lower(inst, restarts=a.restarts, iters=a.iters, seed=t)
        else:
            res = op_norm_lower(inst, restarts=a.restarts, iters=a.iters, seed=t)
        w.writerow([t, repr(float(res.value)), _witness_hash(res.f, res.gs)])


def _normalized(fam, N):
    """Family with ``L_1 = x`` and ``L_2 = y``; only unimodular rewrites are accepted."""
    if fam.forms[1] == LinearForm(1, 0) and fam.forms[2] == LinearForm(0, 1):
        return fam, 1
    chg = change_of_variables(fam)
    if chg.lam != 1 or abs(chg.det) != 1:
        raise SystemExit(f"family {fam} needs a non-unimodular change of variables")
    return chg.family, chg.A


def cmd_reduce_check(a):
    fam, A = _normalized(FormFamily.parse(a.family), a.n)
    out = []
    for t in range(a.trials):
        rng = make_rng(a.seed, 9, t)
        r = sample_r(SelectorModel(a.n, gamma=a.gamma, density=a.density, seed=a.seed), rng)
        inst = MultilinearInstance(fam, r, a.n, A)
        W = inst.half_width
        fs = [rng.standard_normal(2 * W + 1) for _ in range(fam.M)]
        cs = verify_cs_step(inst, fs)
        B = exceptional_set(r.shifts, fam.kernel, z_range(inst))
        ex = verify_exceptional_bound(inst, fs, B)
        out.append({"trial": t, "lhs2": cs["lhs2"], "rhs": cs["rhs"], "B_size": len(B),
                    "holds": cs["holds"] and ex["holds"]})
    _dump(out)


def cmd_trace_oracle(a):
    if a.matrix:
        rep = matrix_trace_exact(a.n, a.p, a.q)
        mean, se = matrix_trace_monte_carlo(a.n, a.p, a.q, a.trials, a.seed)
        out = oracle_comparison(rep["exact"], mean, se)
        out["histogram"] = rep["histogram"]
    else:
        cfg = TraceConfig(a.n, a.p, a.q)
        mean, se = trace_monte_carlo(cfg, a.trials, a.seed)
        out = oracle_comparison(expected_trace_exact(cfg), mean, se)
    _dump(out)


def _matrix_family(a):
    if a.family:
        return FormFamily.parse(a.family)
    return FormFamily.parse("; ".join(["1,-1"] + DEFAULT_MATRIX_FORMS[: a.m]))


def cmd_matrix(a):
    model = MatrixModel(a.n, gamma=a.gamma, density=a.density, seed=a.seed)
    if a.mode == "chernoff":
        _dump(chernoff_tail_check(model, trials=a.trials, seed=a.seed))
        return
    if a.mode == "rowsum":
        Ns = [2**k for k in range(2, int(np.log2(a.n)) + 1)]
        _dump(row_sum_sup(Ns, a.gamma, a.trials, a.seed, a.density))
        return
    if a.mode == "scaling":
        Ns = [2**k for k in range(max(2, int(np.log2(a.n)) - 4), int(np.log2(a.n)) + 1)]
        cfg = ScanConfig(Ns, [a.gamma], estimator="matrix_spectral", trials=max(a.trials, 10),
                         seed=a.seed, density=a.density)
        res = run_scan(cfg)
        _dump({"rows": res.rows, "fits": {str(k): v for k, v in res.fits.items()}})
        return
    fam = _matrix_family(a)
    w = csv.writer(sys.stdout)
    if a.mode == "form":
        w.writerow(["trial", "value"])
    else:
        w.writerow(["trial", "weak_norm", "witness"])
    for t in range(a.trials):
        rng = make_rng(a.seed, 10, t)
        smp = sample_matrix(model, rng)
        if a.mode == "form":
            fs = [rng.choice([-1.0, 1.0], size=smp.size) for _ in range(fam.M)]
            w.writerow([t, repr(matrix_form(smp, fam, fs))])
        else:
            v, wit = weak_norm_bruteforce(smp, fam)
            w.writerow([t, repr(v), json.dumps(wit)])


def cmd_scan(a):
    with open(a.config) as fh:
        cfg = ScanConfig.from_dict(json.load(fh))
    res = run_scan(cfg)
    if a.csv:
        with open(a.csv, "w") as fh:
            fh.write(res.to_csv())
    else:
        sys.stdout.write(res.to_csv())
    if a.summary:
        with open(a.summary, "w") as fh:
            fh.write(res.to_json() + "\n")
    else:
        sys.stdout.write(res.to_json() + "\n")
    if a.emit_plot_data:
        with open(a.emit_plot_data, "w") as fh:
            json.dump(res.plot_data(), fh, indent=2)


def _kernel_args(sp, gamma=True):
    sp.add_argument("--n", type=int, required=True)
    if gamma:
        sp.add_argument("--gamma", type=float, default=0.0)
    sp.add_argument("--density", type=float, default=1.0, help="p = density * N^-gamma")
    sp.add_argument("--seed", type=int, default=0)


def build_parser():
    ap = argparse.ArgumentParser(prog="multiform", description="Random multilinear form experiments.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("obstruction", help="quadratic obstruction on Z_p^d x Z_p")
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--bilinear-trials", type=int, default=0)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_obstruction)

    sp = sub.add_parser("sample", help="draw one centered kernel r as CSV")
    _kernel_args(sp)
    sp.add_argument("--p", type=float, default=None, help="overrides gamma")
    sp.set_defaults(fn=cmd_sample)

    sp = sub.add_parser("norm", help="operator norm lower bounds per trial")
    sp.add_argument("--family", required=True)
    _kernel_args(sp)
    sp.add_argument("--trials", type=int, default=1)
    sp.add_argument("--restarts", type=int, default=20)
    sp.add_argument("--iters", type=int, default=200)
    sp.add_argument("--maximal", action="store_true")
    sp.set_defaults(fn=cmd_norm)

    sp = sub.add_parser("reduce-check", help="verify the Cauchy-Schwarz reduction on random instances")
    sp.add_argument("--family", required=True)
    _kernel_args(sp)
    sp.add_argument("--trials", type=int, default=1)
    sp.set_defaults(fn=cmd_reduce_check)

    sp = sub.add_parser("trace-oracle", help="exact expected trace against Monte Carlo")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--trials", type=int, default=10_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--matrix", action="store_true", help="independent-entry model")
    sp.set_defaults(fn=cmd_trace_oracle)

    sp = sub.add_parser("matrix", help="independent-entry random kernels")
    _kernel_args(sp)
    sp.add_argument("--m", type=int, default=2)
    sp.add_argument("--family", default=None)
    sp.add_argument("--mode", choices=["form", "weak", "chernoff", "rowsum", "scaling"], default="form")
    sp.add_argument("--trials", type=int, default=10)
    sp.set_defaults(fn=cmd_matrix)

    sp = sub.add_parser("scan", help="parameter scan from a JSON config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--csv", default=None)
    sp.add_argument("--summary", default=None)
    sp.add_argument("--emit-plot-data", default=None)
    sp.set_defaults(fn=cmd_scan)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.fn(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
