"""Rational linear forms ``(a x + b y) / den`` on Z^2 and families of them.

A family is ``(L_0, L_1, ..., L_M)`` where ``L_0`` feeds the kernel and the
rest feed the functions.  Evaluation at a point where ``den`` does not
divide ``a x + b y`` returns ``None``; callers treat that factor as zero.
"""
from collections import namedtuple
from dataclasses import dataclass
from fractions import Fraction
from math import gcd

import numpy as np

from ._validation import INT32_MAX, check_int

# grid evaluation runs in int64; keep every intermediate below this
_INT64_SAFE = 2**62


@dataclass(frozen=True)
class LinearForm:
    a: int
    b: int
    den: int = 1

    def __post_init__(self):
        a = check_int(self.a, "a", -INT32_MAX, INT32_MAX)
        b = check_int(self.b, "b", -INT32_MAX, INT32_MAX)
        den = check_int(self.den, "den", 1, INT32_MAX)
        if a == 0 and b == 0:
            raise ValueError("the zero form is not allowed")
        g = gcd(gcd(a, b), den)
        object.__setattr__(self, "a", a // g)
        object.__setattr__(self, "b", b // g)
        object.__setattr__(self, "den", den // g)

    @classmethod
    def parse(cls, text):
        """``"a,b"`` or ``"a,b/den"``."""
        text = text.strip()
        num, _, den = text.partition("/")
        a, b = (int(t) for t in num.split(","))
        return cls(a, b, int(den) if den else 1)

    def __str__(self):
        s = f"{self.a},{self.b}"
        return s if self.den == 1 else f"{s}/{self.den}"

    def pretty(self, names=("x", "y")):
        parts = []
        for c, v in ((self.a, names[0]), (self.b, names[1])):
            if c == 0:
                continue
            mag = "" if abs(c) == 1 else str(abs(c))
            sign = "-" if c < 0 else ("+" if parts else "")
            parts.append(f"{sign}{mag}{v}")
        body = "".join(parts)
        return body if self.den == 1 else f"({body})/{self.den}"

    @property
    def integral(self):
        return self.den == 1

    def __call__(self, x, y):
        return evaluate(self, x, y)

    def at_shift(self, z):
        """``L(0, z)``: the amount by which the form moves when ``y -> y + z``."""
        return evaluate(self, 0, z)

    def proportional_to(self, other):
        return self.a * other.b - self.b * other.a == 0

    def max_abs(self, half_width_x, half_width_y=None):
        """Largest ``|L(x, y)|`` over the box, rounded down."""
        hy = half_width_x if half_width_y is None else half_width_y
        return (abs(self.a) * half_width_x + abs(self.b) * hy) // self.den

    def evaluate_grid(self, X, Y):
        """Vectorized evaluation; returns ``(values, ok)`` with ok False off the integers."""
        X = np.asarray(X, dtype=np.int64)
        Y = np.asarray(Y, dtype=np.int64)
        bound = abs(self.a) * int(np.abs(X).max(initial=0)) + abs(self.b) * int(np.abs(Y).max(initial=0))
        if bound >= _INT64_SAFE:
            raise OverflowError(f"evaluating {self} on this grid overflows int64")
        num = self.a * X + self.b * Y
        if self.den == 1:
            return num, np.ones(num.shape, dtype=bool)
        ok = num % self.den == 0
        return num // self.den, ok


def evaluate(form, x, y):
    """Exact value of ``form`` at integers ``(x, y)``, or ``None`` if not an integer."""
    num = form.a * int(x) + form.b * int(y)
    if abs(num) >= _INT64_SAFE:
        raise OverflowError(f"{form} at ({x}, {y}) leaves the 64-bit range")
    q, rem = divmod(num, form.den)
    return q if rem == 0 else None


X_AXIS = LinearForm(1, 0)
Y_AXIS = LinearForm(0, 1)

FamilyViolation = namedtuple("FamilyViolation", ["i", "j", "reason"])


@dataclass(frozen=True)
class FormFamily:
    forms: tuple

    def __post_init__(self):
        forms = tuple(f if isinstance(f, LinearForm) else LinearForm(*f) for f in self.forms)
        if not forms:
            raise ValueError("a family needs at least the kernel form L_0")
        object.__setattr__(self, "forms", forms)

    @classmethod
    def parse(cls, text):
        """``"a,b/den; a,b/den; ..."`` with ``L_0`` first."""
        return cls(tuple(LinearForm.parse(t) for t in text.split(";") if t.strip()))

    def __str__(self):
        return "; ".join(str(f) for f in self.forms)

    @property
    def M(self):
        return len(self.forms) - 1

    @property
    def kernel(self):
        return self.forms[0]

    @property
    def functions(self):
        return self.forms[1:]

    def max_coefficient_sum(self):
        return max(Fraction(abs(f.a) + abs(f.b), f.den) for f in self.forms)


def validate_family(family, operator=True):
    """Return ``None`` if the family is admissible, else the first violation.

    Every pair of forms must be non-proportional.  With ``operator=True``
    (the default) the family drives
    ``T(f, g_1..g_M)(x) = sum_y f(y) r(L_0) prod g_j(L_j)``, where the output
    variable ``x`` and the input variable ``y`` act as two extra forms, so no
    ``L_j`` may be proportional to either axis.  Scalar forms, such as the
    normalized families of the degree reduction, pass ``operator=False``.
    """
    forms = family.forms
    for i in range(len(forms)):
        for j in range(i + 1, len(forms)):
            if forms[i].proportional_to(forms[j]):
                return FamilyViolation(i, j, f"L_{i} and L_{j} are proportional")
    if operator:
        for i, f in enumerate(forms):
            if f.proportional_to(X_AXIS):
                return FamilyViolation(i, "x", f"L_{i} is proportional to (x,y) -> x")
            if f.proportional_to(Y_AXIS):
                return FamilyViolation(i, "y", f"L_{i} is proportional to (x,y) -> y")
    return None


def check_family(family, operator=True):
    v = validate_family(family, operator=operator)
    if v is not None:
        raise ValueError(f"inadmissible family {family}: {v.reason}")
    return family


def _lcm(a, b):
    return a * b // gcd(a, b)


@dataclass(frozen=True)
class CoordinateChange:
    """``(u, v) = lam * (L_1(x, y), L_2(x, y))`` with the rewritten family.

    ``matrix`` is the integer matrix ``P`` with ``(u, v) = P (x, y)``.
    The new family has ``L_1 = u``, ``L_2 = v``; functions in those slots are
    dilated by ``lam`` (see :meth:`transport`).  ``A`` is the grown window
    factor: ``|u|, |v| <= A N`` whenever ``|x|, |y| <= A_old N``.
    """

    original: FormFamily
    family: FormFamily
    lam: int
    matrix: tuple
    A_old: int
    A: int

    @property
    def det(self):
        (p, q), (r, s) = self.matrix
        return p * s - q * r

    def forward(self, x, y):
        (p, q), (r, s) = self.matrix
        return p * x + q * y, r * x + s * y

    def inverse(self, u, v):
        """``(x, y, ok)``: preimage and whether it is a lattice point."""
        (p, q), (r, s) = self.matrix
        det = self.det
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        xn = s * u - q * v
        yn = -r * u + p * v
        ok = (xn % det == 0) & (yn % det == 0)
        return xn // det, yn // det, ok

    def contains(self, u, v):
        return self.inverse(u, v)[2]

    def grid(self, N):
        """New box with the mask selecting images of the old box's lattice points."""
        W = self.A * N
        U, V = np.meshgrid(np.arange(-W, W + 1), np.arange(-W, W + 1), indexing="ij")
        X, Y, ok = self.inverse(U, V)
        Wold = self.A_old * N
        mask = ok & (np.abs(X) <= Wold) & (np.abs(Y) <= Wold)
        return U, V, mask

    def transport(self, values, half_width):
        """``f'(u) = f(u / lam)`` when ``lam | u`` else 0, on ``[-A N, A N]``."""
        values = np.asarray(values)
        new_w = half_width * self.lam
        out = np.zeros(2 * new_w + 1, dtype=values.dtype)
        out[:: self.lam] = values
        return out


def change_of_variables(family, A=1):
    """Rewrite a scalar-form family so that ``L_1 = u`` and ``L_2 = v``."""
    check_int(A, "A", minimum=1)
    if family.M < 2:
        raise ValueError("change of variables needs at least two function slots")
    L1, L2 = family.forms[1], family.forms[2]
    if L1.proportional_to(L2):
        raise ValueError(f"L_1 = {L1} and L_2 = {L2} are proportional")
    lam = _lcm(L1.den, L2.den)
    P = ((L1.a * lam // L1.den, L1.b * lam // L1.den), (L2.a * lam // L2.den, L2.b * lam // L2.den))
    (p, q), (r, s) = P
    det = p * s - q * r
    adj = ((s, -q), (-r, p))
    new_forms = []
    for j, f in enumerate(family.forms):
        if j == 1:
            new_forms.append(LinearForm(1, 0))
        elif j == 2:
            new_forms.append(LinearForm(0, 1))
        else:
            a = f.a * adj[0][0] + f.b * adj[1][0]
            b = f.a * adj[0][1] + f.b * adj[1][1]
            den = f.den * det
            if den < 0:
                a, b, den = -a, -b, -den
            new_forms.append(LinearForm(a, b, den))
    growth = max(abs(p) + abs(q), abs(r) + abs(s))
    new_A = A * growth
    return CoordinateChange(family, FormFamily(tuple(new_forms)), lam, P, A, new_A)
