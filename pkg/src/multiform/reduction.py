"""Cauchy-Schwarz degree reduction of scalar multilinear forms.

For a form normalized so that ``L_1(x, y) = x`` and ``L_2(x, y) = y``::

    T(f, rho) = sum_{x,y} rho(L_0(x,y)) f_1(x) f_2(y) prod_{j>2} f_j(L_j(x,y))

Cauchy-Schwarz in ``x`` followed by ``y' = y + z`` gives

    |T|^2 <= |f_1|_2^2 sum_z T^z(f_2^z, ..., f_M^z, rho^z)

with ``rho^z(u) = rho(u) rho(u + L_0(0, z))`` and
``f_j^z(u) = f_j(u) f_j(u + L_j(0, z))``.  Each ``T^z`` has one function
fewer.  When ``rho`` is a product of shifted copies of ``r`` the shifts of
``rho^z`` are the old shifts together with their translates by
``L_0(0, z)``; the exceptional set collects the ``z`` where the two lists
collide.
"""
from dataclasses import dataclass

import numpy as np

from .linear_forms import FormFamily, LinearForm, change_of_variables
from .operator import MultilinearInstance, ScalarEvaluator
from .random_measure import SignedMeasure

REL_SLACK = 1e-9


def _check_normalized(instance):
    fam = instance.family
    if fam.M < 2:
        raise ValueError("degree reduction needs M >= 2")
    if fam.forms[1] != LinearForm(1, 0) or fam.forms[2] != LinearForm(0, 1):
        raise ValueError("apply change_of_variables first: need L_1 = x and L_2 = y")
    if not all(f.integral for f in fam.forms):
        raise ValueError("reduction needs integral forms")


def _shift_values(values, half_width, c):
    """``u -> v(u + c)`` on the same window, zero where ``u + c`` leaves it."""
    out = np.zeros_like(values)
    n = values.size
    if abs(c) >= n:
        return out
    if c >= 0:
        out[: n - c] = values[c:]
    else:
        out[-c:] = values[: n + c]
    return out


def product_kernel(kernel, c):
    """``rho^c(u) = rho(u) rho(u + c)`` with the shift tuple updated."""
    vals = kernel.values * _shift_values(kernel.values, kernel.half_width, c)
    shifts = tuple(kernel.shifts) + tuple(s + c for s in kernel.shifts)
    return SignedMeasure(kernel.half_width, vals, shifts)


def product_function(values, half_width, c):
    return values * _shift_values(values, half_width, c)


@dataclass(frozen=True, eq=False)
class ReductionStep:
    parent: MultilinearInstance
    z: int
    child: MultilinearInstance
    child_fs: list
    exceptional: bool


def exceptional_set(shifts, L0, z_range):
    """``{z in z_range : z_i = z_j + L_0(0, z) for some i, j}``.

    ``z_range`` is an inclusive ``(lo, hi)`` pair.
    """
    if L0.b == 0:
        raise ValueError("L_0(0, z) must be injective in z (b != 0)")
    lo, hi = z_range
    out = set()
    for zi in shifts:
        for zj in shifts:
            num = L0.den * (zi - zj)
            if num % L0.b == 0:
                z = num // L0.b
                if lo <= z <= hi:
                    out.add(z)
    return out


def z_range(instance):
    W = instance.half_width
    return (-2 * W, 2 * W)


def reduce(parent, fs, z):
    """One Cauchy-Schwarz step at shift ``z``; the child drops the slot ``f_1``."""
    _check_normalized(parent)
    lo, hi = z_range(parent)
    if not lo <= z <= hi:
        raise ValueError(f"z={z} outside the valid range [{lo}, {hi}]")
    W = parent.half_width
    fam = parent.family
    rho_z = product_kernel(parent.kernel, fam.kernel.at_shift(z))
    child_fs = [product_function(np.asarray(f, dtype=float), W, L.at_shift(z))
                for L, f in zip(fam.forms[2:], fs[1:])]
    child_family = FormFamily((fam.kernel,) + fam.forms[2:])
    child = MultilinearInstance(child_family, rho_z, parent.N, parent.A)
    B = exceptional_set(parent.kernel.shifts, fam.kernel, (lo, hi))
    return ReductionStep(parent, int(z), child, child_fs, z in B)


class _Reducer:
    """All ``T^z`` for one parent, sharing the grid bookkeeping."""

    def __init__(self, parent, fs):
        _check_normalized(parent)
        self.parent = parent
        self.fs = [np.asarray(f, dtype=float) for f in fs]
        self.W = parent.half_width
        child_family = FormFamily((parent.family.kernel,) + parent.family.forms[2:])
        self.child_eval = ScalarEvaluator(MultilinearInstance(child_family, parent.kernel, parent.N, parent.A))

    def child_value(self, z):
        fam = self.parent.family
        rho = self.parent.kernel
        rho_z = rho.values * _shift_values(rho.values, rho.half_width, fam.kernel.at_shift(z))
        child_fs = [product_function(f, self.W, L.at_shift(z)) for L, f in zip(fam.forms[2:], self.fs[1:])]
        return self.child_eval(rho_z, child_fs)


def fiber_sums(parent, fs):
    """``S(x) = sum_y rho(L_0) f_2(y) prod_{j>2} f_j(L_j)``: the inner sum before Cauchy-Schwarz."""
    _check_normalized(parent)
    ev = ScalarEvaluator(parent)
    fs = [np.asarray(f, dtype=float) for f in fs]
    ones = np.ones_like(fs[0])
    terms = ev.terms(parent.kernel.values, [ones] + fs[1:])
    return terms.sum(axis=1)


def verify_cs_step(parent, fs):
    """Both sides of the Cauchy-Schwarz reduction, computed exactly.

    ``signed_sum`` is ``sum_z T^z`` (equal to ``sum_x S(x)^2``); ``abs_sum`` is
    ``sum_z |T^z|``.  The chain checked is
    ``lhs2 <= |f_1|^2 signed_sum <= |f_1|^2 abs_sum``.
    """
    _check_normalized(parent)
    ev = ScalarEvaluator(parent)
    fs = [np.asarray(f, dtype=float) for f in fs]
    lhs = ev(parent.kernel.values, fs)
    red = _Reducer(parent, fs)
    lo, hi = z_range(parent)
    zs = np.arange(lo, hi + 1)
    tz = np.array([red.child_value(int(z)) for z in zs])
    f1 = float(np.sum(fs[0] ** 2))
    S = fiber_sums(parent, fs)
    direct = float(np.sum(S**2))
    signed = float(np.sum(tz))
    abs_sum = float(np.sum(np.abs(tz)))
    rhs = f1 * abs_sum
    lhs2 = lhs**2
    scale = max(lhs2, rhs, 1e-300)
    return {
        "lhs": lhs,
        "lhs2": lhs2,
        "f1_norm2": f1,
        "signed_sum": signed,
        "direct_square": direct,
        "abs_sum": abs_sum,
        "rhs": rhs,
        "cs_gap": f1 * signed - lhs2,
        "holds": bool(lhs2 <= f1 * signed + REL_SLACK * scale and f1 * signed <= rhs + REL_SLACK * scale),
        "identity_error": abs(signed - direct) / max(abs(direct), 1e-300),
        "z": zs,
        "T_z": tz,
    }


def tight_witness(parent, fs):
    """Replace ``f_1`` by the fiber sums so Cauchy-Schwarz in ``x`` is an equality."""
    S = fiber_sums(parent, fs)
    return [S] + [np.asarray(f, dtype=float) for f in fs[1:]]


def verify_exceptional_bound(parent, fs, B=None):
    """Crude bound ``|T^z| <= |f_2|_2^2 prod_{j>2} |f_j|_inf^2 |rho|_2^2`` on ``z in B``.

    Each link of the chain is reported separately:
    ``|T^z| <= |f_2^z|_1 prod |f_j^z|_inf sup_y sum_x |rho^z(L_0)|``
    ``<= |f_2|_2^2 prod |f_j|_inf^2 |rho^z|_1 <= ... |rho|_2^2``.
    """
    _check_normalized(parent)
    fam = parent.family
    L0 = fam.kernel
    if L0.a == 0:
        raise ValueError("need x -> L_0(x, y) injective (a != 0)")
    lo, hi = z_range(parent)
    if B is None:
        B = exceptional_set(parent.kernel.shifts, L0, (lo, hi))
    fs = [np.asarray(f, dtype=float) for f in fs]
    W = parent.half_width
    red = _Reducer(parent, fs)
    rho = parent.kernel
    rho_l2 = float(np.sum(rho.values**2))
    crude_f = float(np.sum(fs[1] ** 2)) * float(np.prod([np.max(np.abs(f), initial=0.0) ** 2 for f in fs[2:]]))
    bound = crude_f * rho_l2
    rows = []
    ok = True
    for z in sorted(int(b) for b in B if lo <= b <= hi):
        t = red.child_value(z)
        c = L0.at_shift(z)
        rz = product_kernel(rho, c)
        f2z = product_function(fs[1], W, z)
        fjz = [product_function(f, W, L.at_shift(z)) for L, f in zip(fam.forms[3:], fs[2:])]
        link1 = float(np.sum(np.abs(f2z))) * float(np.prod([np.max(np.abs(f), initial=0.0) for f in fjz])) * rz.norm(1)
        link2 = crude_f * rz.norm(1)
        slack = REL_SLACK * max(bound, 1e-300)
        holds = abs(t) <= link1 + slack and link1 <= link2 + slack and link2 <= bound + slack
        ok &= holds
        rows.append({"z": z, "T_z": t, "link1": link1, "link2": link2, "bound": bound, "holds": bool(holds)})
    return {"B": sorted(int(b) for b in B), "rows": rows, "bound": bound, "holds": bool(ok)}


def reduction_path(instance, fs, zs):
    """Apply ``len(zs)`` reductions, re-normalizing coordinates in between.

    Between steps the child family ``(L_0; y; L_3; ...)`` is rewritten so
    its first two function forms become the axes.  Only unimodular
    rewrites are supported (functions transport without dilation); the
    window grows by the rewrite's factor as the form is re-read on the
    enlarged box.  Returns the list of :class:`ReductionStep`.
    """
    steps = []
    inst, cur = instance, [np.asarray(f, dtype=float) for f in fs]
    for k, z in enumerate(zs):
        step = reduce(inst, cur, z)
        steps.append(step)
        if k == len(zs) - 1:
            break
        child, cfs = step.child, step.child_fs
        if child.M < 2:
            raise ValueError("path longer than the degree allows")
        chg = change_of_variables(child.family, child.A)
        if chg.lam != 1 or abs(chg.det) != 1:
            raise ValueError("only unimodular coordinate changes are supported along a path")
        W_new = chg.A * child.N
        pad = W_new - child.half_width
        cfs = [np.pad(f, pad) for f in cfs]
        inst = MultilinearInstance(chg.family, child.kernel, child.N, chg.A)
        cur = cfs
    return steps
