"""Hyperbolic background metric and holomorphic differentials on the unit disk.

Conventions used everywhere in the package:

* the Poincare metric is ``lambda(z) |dz|^2`` with ``lambda = 4 / (1 - |z|^2)^2``,
  which has Gaussian curvature -1;
* ``Delta_g = (1/lambda) d_z d_zbar = (1/(4 lambda)) (d_xx + d_yy)``;
* the pointwise norm of an r-differential ``q(z) dz^r`` is
  ``|q|^2_g = |q(z)|^2 / lambda^r``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError

__all__ = [
    "HyperbolicBackground",
    "RDifferential",
    "eval_hyperbolic_density",
    "eval_q_norm_sq",
    "sup_q_norm",
]


def _check_disk(z):
    z = np.asarray(z)
    if np.any(np.abs(z) >= 1.0):
        raise DomainError("point outside the open unit disk")
    return z


def eval_hyperbolic_density(z):
    """Conformal factor 4/(1-|z|^2)^2 of the Poincare metric.

    Accepts scalars or arrays; raises DomainError if any |z| >= 1.
    """
    z = _check_disk(z)
    val = 4.0 / (1.0 - np.abs(z) ** 2) ** 2
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class HyperbolicBackground:
    """The Poincare disk metric, K = -1."""

    curvature: float = -1.0

    def density(self, z):
        return eval_hyperbolic_density(z)

    def density_radial(self, rho):
        rho = np.asarray(rho, dtype=float)
        if np.any(np.abs(rho) >= 1.0):
            raise DomainError("radius outside the open unit disk")
        return 4.0 / (1.0 - rho**2) ** 2


def _as_coeffs(values, name):
    arr = np.asarray(values, dtype=complex).ravel()
    if arr.size == 0:
        raise ConfigurationError(f"{name} must have at least one coefficient")
    return arr


def _root_centroids(coeffs, radius=1e-3):
    """Roots of an ascending-order polynomial with nearby roots merged.

    A root of multiplicity m is split by rounding into m roots at distance
    ~eps^(1/m); the centroid of the cluster is accurate to ~eps.
    """
    roots = np.roots(coeffs[::-1])
    out, used = [], np.zeros(len(roots), dtype=bool)
    for k in range(len(roots)):
        if used[k]:
            continue
        near = ~used & (np.abs(roots - roots[k]) < radius)
        used |= near
        out.append(roots[near].mean())
    return np.array(out)


def _trim(c):
    # drop trailing (highest degree) exact zeros but keep at least one entry
    k = len(c)
    while k > 1 and c[k - 1] == 0:
        k -= 1
    return c[:k]


@dataclass(frozen=True, eq=False)
class RDifferential:
    """A holomorphic r-differential q(z) dz^r with q a rational function.

    Coefficients are stored in ascending degree order.  The denominator is
    normalised to be monic and must not vanish in the open unit disk; zeros
    on the unit circle are allowed and model differentials that are unbounded
    with respect to the hyperbolic metric.
    """

    order: int
    numerator: np.ndarray
    denominator: np.ndarray = field(default_factory=lambda: np.array([1.0 + 0j]))

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise ConfigurationError("order must be a positive integer")
        num = _trim(_as_coeffs(self.numerator, "numerator"))
        den = _trim(_as_coeffs(self.denominator, "denominator"))
        if den[-1] == 0:
            raise ConfigurationError("denominator is identically zero")
        num = num / den[-1]
        den = den / den[-1]
        if len(den) > 1 and np.any(np.abs(_root_centroids(den)) < 1.0 - 1e-10):
            # roots on the circle itself are permitted, up to rounding
            raise ConfigurationError("denominator has a zero inside the unit disk")
        num.setflags(write=False)
        den.setflags(write=False)
        object.__setattr__(self, "order", int(self.order))
        object.__setattr__(self, "numerator", num)
        object.__setattr__(self, "denominator", den)

    # construction helpers -------------------------------------------------

    @classmethod
    def zero(cls, order):
        return cls(order, [0.0])

    @classmethod
    def monomial(cls, order, coeff=1.0, power=0):
        """c * z^m dz^r."""
        num = np.zeros(power + 1, dtype=complex)
        num[power] = coeff
        return cls(order, num)

    @classmethod
    def boundary_pole(cls, order, pole_order, coeff=1.0, at=1.0):
        """c * (at - z)^(-pole_order) dz^r with |at| = 1."""
        if abs(abs(at) - 1.0) > 1e-12:
            raise ConfigurationError("boundary pole must lie on the unit circle")
        den = np.polynomial.polynomial.polypow([at, -1.0], pole_order)
        return cls(order, [coeff], den)

    def scaled(self, t):
        """The differential t*q, used by amplitude continuation."""
        return RDifferential(self.order, self.numerator * t, self.denominator)

    # evaluation -------------------------------------------------------------

    @property
    def is_zero(self):
        return bool(np.all(self.numerator == 0))

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        pv = np.polynomial.polynomial.polyval
        return pv(z, self.numerator) / pv(z, self.denominator)

    def norm_sq(self, z):
        """|q|^2 with respect to the Poincare metric, |q(z)|^2 / lambda^r."""
        z = _check_disk(z)
        val = np.abs(self(z)) ** 2 * ((1.0 - np.abs(z) ** 2) / 2.0) ** (2 * self.order)
        return float(val) if np.ndim(val) == 0 else val

    def monomial_form(self):
        """Return (c, m) if q = c z^m dz^r, else None.  q = 0 gives (0, 0)."""
        if self.is_zero:
            return 0j, 0
        if len(self.denominator) != 1:
            return None
        nz = np.flatnonzero(self.numerator)
        if len(nz) != 1:
            return None
        m = int(nz[0])
        return complex(self.numerator[m]), m

    # serialisation --------------------------------------------------------

    def to_json(self):
        pair = lambda c: [float(c.real), float(c.imag)]  # noqa: E731
        return {
            "order": self.order,
            "numerator": [pair(c) for c in self.numerator],
            "denominator": [pair(c) for c in self.denominator],
        }

    @classmethod
    def from_json(cls, obj):
        try:
            order = obj["order"]
            num = [complex(re, im) for re, im in obj["numerator"]]
            den = [complex(re, im) for re, im in obj.get("denominator", [[1.0, 0.0]])]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"malformed differential: {exc}") from exc
        if not isinstance(order, int) or isinstance(order, bool):
            raise ConfigurationError("differential 'order' must be an integer")
        return cls(order, num, den)

    def __eq__(self, other):
        if not isinstance(other, RDifferential):
            return NotImplemented
        return (
            self.order == other.order
            and np.array_equal(self.numerator, other.numerator)
            and np.array_equal(self.denominator, other.denominator)
        )

    def __hash__(self):
        return hash((self.order, self.numerator.tobytes(), self.denominator.tobytes()))

    def __repr__(self):
        return f"RDifferential(order={self.order}, numerator={self.numerator.tolist()}, denominator={self.denominator.tolist()})"


def eval_q_norm_sq(q: RDifferential, z):
    """Hyperbolic norm squared |q(z)|^2 / lambda(z)^r."""
    return q.norm_sq(z)


def sup_q_norm(q: RDifferential, grid):
    """Maximum of |q|^2_g over all nodes of a DiskGrid.

    The value only describes the truncated disk |z| <= grid.R; reports that
    use it always carry R next to it.
    """
    return float(np.max(q.norm_sq(grid.z)))
