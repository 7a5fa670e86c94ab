"""Pointwise nonlinearities of the elliptic systems solved on the disk.

Every family is written as ``scale_i * Delta_g w_i = F_i(w; data)`` where
``Delta_g`` is the hyperbolic Laplacian of :mod:`todadisk.grid` and ``data``
holds pointwise coefficients such as ``Q = |q|^2_g``.  A family supplies
``F``, its Jacobian ``dF_i/dw_j`` and the constant solution at q = 0.

Only the independent weights are stored.  For the real Toda systems these
are ``w_1..w_n`` with ``n = r // 2``; the remaining weights follow from
``w_i + w_{r+1-i} = 0`` and ``w_{n+1} = -(2n+1-r) w_n``.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigurationError

LN2 = math.log(2.0)


def _exp(x):
    with np.errstate(over="ignore", under="ignore"):
        return np.exp(x)


class EquationFamily:
    """Base class; subclasses define n_fields, rhs, jac and constants."""

    name = "abstract"
    n_fields = 1
    q_order = None

    @property
    def scales(self):
        return np.ones(self.n_fields)

    def data(self, q, z):
        """Pointwise coefficients at the complex points z."""
        return {"Q": q.norm_sq(z)}

    def rhs(self, W, d):
        raise NotImplementedError

    def jac(self, W, d):
        raise NotImplementedError

    def constants(self):
        raise NotImplementedError

    def describe(self):
        return {"family": self.name}


# Toda systems ------------------------------------------------------------------


class _TodaChain(EquationFamily):
    """Shared f-field bookkeeping for the cyclic and subcyclic systems."""

    def __init__(self, r):
        self.r = int(r)
        self.n = self.r // 2
        self.n_fields = self.n
        # f_n = exp(-(2n+2-r) w_n); the exponent is 2 for even r, 1 for odd r
        self.tail = 2 * self.n + 2 - self.r

    def describe(self):
        return {"family": self.name, "rank": self.r}

    def _chain(self, W):
        """f_1..f_n from the weights (index 0 is filled in by the caller)."""
        n = self.n
        f = [None] * (n + 1)
        for i in range(1, n):
            f[i] = _exp(-W[i - 1] + W[i])
        f[n] = _exp(-self.tail * W[n - 1])
        return f

    def f_fields(self, W, d):
        """f_0..f_n (f_0 carries the differential)."""
        f = self._chain(W)
        f[0] = self._f0(W, d)
        return f

    def _df(self, f, i):
        """Nonzero partial derivatives of f_i as {field index: array}."""
        n = self.n
        if i == 0:
            return self._df0(f)
        if i < n:
            return {i - 1: -f[i], i: f[i]}
        return {n - 1: -self.tail * f[n]}

    def rhs(self, W, d):
        f = self.f_fields(W, d)
        return np.array([self._row(f, i) for i in range(1, self.n + 1)])

    def jac(self, W, d):
        f = self.f_fields(W, d)
        m = np.shape(W)[1]
        J = np.zeros((self.n, self.n, m))
        for i in range(1, self.n + 1):
            for sign, k in self._row_terms(i):
                for col, val in self._df(f, k).items():
                    J[i - 1, col] += sign * val
        return J

    def _row(self, f, i):
        out = self._row_const(i)
        for sign, k in self._row_terms(i):
            out = out + sign * f[k]
        return out

    def constants(self):
        return fuchsian_constants(self.r, self.name)["w"]


class CyclicToda(_TodaChain):
    """Delta w_i = f_{i-1} - f_i + (r+1-2i)/4 with f_0 = exp(2 w_1) |q|^2."""

    name = "cyclic"

    def __init__(self, r):
        if int(r) != r or r < 2:
            raise ConfigurationError("cyclic rank must be an integer >= 2")
        super().__init__(r)
        self.q_order = self.r

    def _f0(self, W, d):
        return d["Q"] * _exp(2.0 * W[0])

    def _df0(self, f):
        return {0: 2.0 * f[0]}

    def _row_terms(self, i):
        return [(1.0, i - 1), (-1.0, i)]

    def _row_const(self, i):
        return (self.r + 1 - 2 * i) / 4.0


class SubcyclicToda(_TodaChain):
    """Reduced variant Toda system driven by an (r-1)-differential.

    Rows: f_0 - f_1 + (r-1)/4, then f_0 + f_1 - f_2 + (r-3)/4, then the
    ordinary chain f_{i-1} - f_i + (r+1-2i)/4, with f_0 = exp(w_1 + w_2)|q|^2.
    """

    name = "subcyclic"

    def __init__(self, r):
        if int(r) != r or r < 3:
            raise ConfigurationError("subcyclic rank must be an integer >= 3")
        super().__init__(r)
        self.q_order = self.r - 1

    def _f0(self, W, d):
        if self.n >= 2:
            return d["Q"] * _exp(W[0] + W[1])
        # r = 3: w_2 is the middle weight, identically zero
        return d["Q"] * _exp(W[0])

    def _df0(self, f):
        if self.n >= 2:
            return {0: f[0], 1: f[0]}
        return {0: f[0]}

    def _row_terms(self, i):
        if i == 1:
            return [(1.0, 0), (-1.0, 1)]
        if i == 2:
            return [(1.0, 0), (1.0, 1), (-1.0, 2)]
        return [(1.0, i - 1), (-1.0, i)]

    def _row_const(self, i):
        if i == 1:
            return (self.r - 1) / 4.0
        if i == 2:
            return (self.r - 3) / 4.0
        return (self.r + 1 - 2 * i) / 4.0


def fuchsian_constants(r, kind="cyclic"):
    """Constant solution at q = 0.

    Returns a dict with ``f`` (f_0..f_n, f_0 = 0) and ``w`` (w_1..w_n).  The
    f-values solve the constant chain with zero Laplacian; the weights are
    recovered by telescoping f_i = exp(-w_i + w_{i+1}) down from
    f_n = exp(-(2n+2-r) w_n).
    """
    r = int(r)
    if kind not in ("cyclic", "subcyclic"):
        raise ConfigurationError(f"no Fuchsian constants for kind {kind!r}")
    if r < (2 if kind == "cyclic" else 3):
        raise ConfigurationError(f"rank {r} too small for {kind}")
    n = r // 2
    # With f_0 = 0 every row i reads f_i = f_{i-1} + (r+1-2i)/4 (the subcyclic
    # row 2, f_2 = f_0 + f_1 + (r-3)/4, is the same recursion), so both
    # families share f_i = i(r-i)/4.
    f = np.zeros(n + 1)
    for i in range(1, n + 1):
        f[i] = f[i - 1] + (r + 1 - 2 * i) / 4.0
    w = np.zeros(n)
    tail = 2 * n + 2 - r
    w[n - 1] = -math.log(f[n]) / tail
    for i in range(n - 1, 0, -1):
        w[i - 1] = w[i] - math.log(f[i])
    return {"f": f, "w": w}


# single equations ---------------------------------------------------------------


class Vortex(EquationFamily):
    """Delta w = -kappa (exp(a w)|q|^2 - exp(-b w)) + c, i.e. -c K_g with K_g = -1."""

    name = "vortex"
    n_fields = 1

    def __init__(self, a, b, c, kappa, q_order=None):
        if not (a > 0 and b > 0 and c > 0):
            raise ConfigurationError("vortex parameters a, b, c must be positive")
        if not kappa < 0:
            raise ConfigurationError("vortex parameter kappa must be negative")
        self.a, self.b, self.c, self.kappa = float(a), float(b), float(c), float(kappa)
        self.q_order = q_order

    def describe(self):
        return {"family": self.name, "a": self.a, "b": self.b, "c": self.c, "kappa": self.kappa}

    def rhs(self, W, d):
        w = W[0]
        return np.array([-self.kappa * (d["Q"] * _exp(self.a * w) - _exp(-self.b * w)) + self.c])

    def jac(self, W, d):
        w = W[0]
        return np.array([[-self.kappa * (self.a * d["Q"] * _exp(self.a * w) + self.b * _exp(-self.b * w))]])

    def constants(self):
        return np.array([-math.log(self.c / -self.kappa) / self.b])


class Wang(EquationFamily):
    """Affine sphere equation for the Blaschke metric exp(w) g_D.

    Written with the Laplace-Beltrami operator, 4 Delta_g w = 2e^w - 4|q|^2 e^{-2w} - 2,
    which is the normalisation in which the Blaschke metric has curvature
    -1 + 2|q|^2 e^{-3w}.
    """

    name = "wang"
    n_fields = 1
    q_order = 3

    @property
    def scales(self):
        return np.array([4.0])

    def rhs(self, W, d):
        w = W[0]
        return np.array([2.0 * _exp(w) - 4.0 * d["Q"] * _exp(-2.0 * w) - 2.0])

    def jac(self, W, d):
        w = W[0]
        return np.array([[2.0 * _exp(w) + 8.0 * d["Q"] * _exp(-2.0 * w)]])

    def constants(self):
        return np.array([0.0])


class MaximalRank1(EquationFamily):
    """Maximal surfaces with a rank-one normal bundle, driven by a quartic differential.

    Unknowns: ``u`` with |1|^2_h = 2 lambda exp(-2u) (so the induced metric is
    4 exp(-2u) g_D) and ``v`` = log of the normal-bundle metric.  With
    S = |q_4|_g = sqrt(|q_4|^2_g) the scalar Hitchin equations read

        Delta u = 1/4 - exp(-2u) + (S/4) exp(2u) cosh v
        Delta v = S exp(2u) sinh v

    The first is the average of the IK and IK^{-1} blocks, the second the
    normal-bundle block.  v = 0 is forced by the second equation; at q_4 = 0
    the first one is the rank-2 Toda equation at q = 0, solved by u = ln 2.
    """

    name = "maximal"
    n_fields = 2
    q_order = 4

    def data(self, q, z):
        return {"S": np.sqrt(q.norm_sq(z))}

    def rhs(self, W, d):
        u, v = W
        e = d["S"] * _exp(2.0 * u)
        return np.array([0.25 - _exp(-2.0 * u) + 0.25 * e * np.cosh(v), e * np.sinh(v)])

    def jac(self, W, d):
        u, v = W
        e = d["S"] * _exp(2.0 * u)
        ch, sh = np.cosh(v), np.sinh(v)
        return np.array(
            [
                [2.0 * _exp(-2.0 * u) + 0.5 * e * ch, 0.25 * e * sh],
                [2.0 * e * sh, e * ch],
            ]
        )

    def constants(self):
        return np.array([LN2, 0.0])


class G2Constrained(EquationFamily):
    """Rank-7 subcyclic system restricted to w_1 = w_2 + w_3 + ln 2.

    This is the gauge-independent form of h_1 = 2 h_2 h_3.  The unknowns are
    (w_2, w_3); with f_1 = exp(-w_3)/2 the f_1 and f_3 equations coincide and
    the w_1 row equals the sum of the two rows that are solved.
    """

    name = "g2"
    n_fields = 2
    q_order = 6

    def weights(self, W):
        w2, w3 = W
        return np.array([w2 + w3 + LN2, w2, w3])

    def f_fields(self, W, d):
        w2, w3 = W
        f3 = _exp(-w3)
        return [2.0 * d["Q"] * _exp(2.0 * w2 + w3), 0.5 * f3, _exp(-w2 + w3), f3]

    def rhs(self, W, d):
        f0, f1, f2, f3 = self.f_fields(W, d)
        return np.array([f0 + f1 - f2 + 1.0, f2 - f3 + 0.5])

    def jac(self, W, d):
        f0, f1, f2, f3 = self.f_fields(W, d)
        return np.array(
            [
                [2.0 * f0 + f2, f0 - f1 - f2],
                [-f2, f2 + f3],
            ]
        )

    def constants(self):
        w = fuchsian_constants(7, "subcyclic")["w"]
        return w[1:].copy()


def make_family(kind, rank=None, vortex=None):
    """Factory used by problems and configs."""
    if kind == "cyclic":
        return CyclicToda(rank)
    if kind == "subcyclic":
        return SubcyclicToda(rank)
    if kind == "vortex":
        if vortex is None:
            raise ConfigurationError("vortex kind needs parameters a, b, c, kappa")
        a, b, c, kappa = vortex
        return Vortex(a, b, c, kappa, q_order=rank)
    if kind == "wang":
        return Wang()
    if kind == "maximal":
        return MaximalRank1()
    if kind == "g2":
        return G2Constrained()
    raise ConfigurationError(f"unknown kind {kind!r}")
