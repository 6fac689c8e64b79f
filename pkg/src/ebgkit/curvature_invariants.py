"""Quadratic curvature invariants and small-ball series in exact rationals.

Series are written ``vol = (Omega_{d-1}/d) t^d (1 + c2 t^2 + c4 t^4 + O(t^6))``.
The exact volume uses the classical fourth-order small-ball expansion; the BG,
enhanced-BG and scalar-matched model series follow from expanding ``sn`` and
the sphere moment identities
``<X^mu X^nu> = delta/d`` and ``<X^4> = (delta delta + ...)/(d(d+2))``.

All coefficients are :class:`fractions.Fraction`; floats are converted
exactly (as binary fractions) on entry.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
import itertools
import math
from typing import Callable, Optional, Sequence

import numpy as np

from ._sn import sn
from .model_spaces import ProductSpace, ricci_spectrum

__all__ = [
    "RiemannInvariants",
    "SmallBallSeries",
    "decompose",
    "product_invariants",
    "gray_series",
    "bound_series",
    "series_gap",
    "fit_series",
    "riemann_invariants_fd",
    "polar_product_metric",
    "SERIES_KINDS",
]

SERIES_KINDS = ("volume", "BG", "eBG", "H-of-R")


def _q(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def _fmt(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True)
class RiemannInvariants:
    """``R``, ``Ric_{mu nu} Ric^{mu nu}``, ``Riem^2`` and ``box R`` in dimension ``d``."""

    d: int
    R: Fraction
    ric2: Fraction
    riem2: Fraction
    boxR: Fraction = Fraction(0)

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("dimension must be >= 2")
        for name in ("R", "ric2", "riem2", "boxR"):
            object.__setattr__(self, name, _q(getattr(self, name)))
        if self.ric2 < 0 or self.riem2 < 0:
            raise ValueError("squared invariants must be nonnegative")

    def _need_d3(self):
        if self.d < 3:
            raise ValueError("the S/E/C decomposition needs d >= 3")

    @property
    def s2(self) -> Fraction:
        """Squared norm of the pure-trace part, ``2 R^2/(d(d-1))``."""
        return 2 * self.R**2 / (self.d * (self.d - 1))

    @property
    def e2(self) -> Fraction:
        """Squared norm of the traceless-Ricci part."""
        self._need_d3()
        d = self.d
        return 4 * self.ric2 / (d - 2) - 4 * self.R**2 / (d * (d - 2))

    @property
    def c2(self) -> Fraction:
        """Squared norm of the Weyl part."""
        self._need_d3()
        d = self.d
        return self.riem2 - 4 * self.ric2 / (d - 2) + 2 * self.R**2 / ((d - 1) * (d - 2))

    def to_json(self) -> dict:
        out = {"d": self.d, "R": _fmt(self.R), "ric2": _fmt(self.ric2),
               "riem2": _fmt(self.riem2), "boxR": _fmt(self.boxR)}
        if self.d >= 3:
            out.update(s2=_fmt(self.s2), e2=_fmt(self.e2), c2=_fmt(self.c2))
        return out


def decompose(d: int, R, ric2, riem2, boxR=0) -> RiemannInvariants:
    """Validated invariants with the S/E/C split; ``d >= 3``."""
    if d < 3:
        raise ValueError("decompose needs d >= 3")
    inv = RiemannInvariants(d, R, ric2, riem2, boxR)
    tol = Fraction(1, 10**12)
    if min(inv.s2, inv.e2, inv.c2) < -tol:
        raise ValueError("invariants are inconsistent: a squared part is negative")
    return inv


def product_invariants(space: ProductSpace) -> RiemannInvariants:
    """Sum of per-factor contributions ``n(n-1)k``, ``n(n-1)^2 k^2``, ``2n(n-1)k^2``."""
    R = ric2 = riem2 = Fraction(0)
    for f in space.factors:
        n, k = f.dim, _q(f.curvature)
        R += n * (n - 1) * k
        ric2 += n * (n - 1) ** 2 * k**2
        riem2 += 2 * n * (n - 1) * k**2
    return RiemannInvariants(space.total_dim, R, ric2, riem2)


@dataclass(frozen=True)
class SmallBallSeries:
    """``(Omega_{d-1}/d) t^d (1 + c2 t^2 + c4 t^4)``."""

    d: int
    kind: str
    c2: Fraction
    c4: Fraction

    def to_json(self) -> dict:
        return {"d": self.d, "kind": self.kind, "c2": _fmt(self.c2), "c4": _fmt(self.c4)}

    def evaluate(self, t):
        from ._sn import sphere_area
        t = np.asarray(t, dtype=float)
        c2, c4 = float(self.c2), float(self.c4)
        return sphere_area(self.d - 1) / self.d * t**self.d * (1 + c2 * t**2 + c4 * t**4)


def gray_series(inv: RiemannInvariants) -> SmallBallSeries:
    """Exact volume to fourth order."""
    d = inv.d
    c2 = -inv.R / (6 * (d + 2))
    c4 = (5 * inv.R**2 + 8 * inv.ric2 - 3 * inv.riem2 - 18 * inv.boxR) / (360 * (d + 2) * (d + 4))
    return SmallBallSeries(d, "volume", c2, c4)


def bound_series(kind: str, inv: RiemannInvariants,
                 lambda_min=None) -> SmallBallSeries:
    """Series of the BG bound, the enhanced bound, or the scalar-matched model ball.

    ``lambda_min`` (smallest Ricci eigenvalue) is required for ``"BG"`` only.
    """
    d = inv.d
    if kind == "BG":
        if lambda_min is None:
            raise ValueError("BG series needs lambda_min")
        lam = _q(lambda_min)
        c2 = -d * lam / (6 * (d + 2))
        c4 = d * (5 * d - 7) * lam**2 / (360 * (d - 1) * (d + 4))
    elif kind == "eBG":
        c2 = -inv.R / (6 * (d + 2))
        c4 = (5 * d - 7) * (inv.R**2 + 2 * inv.ric2) / (360 * (d - 1) * (d + 2) * (d + 4))
    elif kind == "H-of-R":
        c2 = -inv.R / (6 * (d + 2))
        c4 = (5 * d - 7) * inv.R**2 / (360 * (d - 1) * d * (d + 4))
    elif kind == "volume":
        return gray_series(inv)
    else:
        raise ValueError(f"unknown series kind {kind!r}; expected one of {SERIES_KINDS}")
    return SmallBallSeries(d, kind, c2, c4)


def series_gap(upper: str, lower: str, inv: RiemannInvariants,
               lambda_min=None) -> Fraction:
    """``c4(upper) - c4(lower)``, e.g. ``series_gap("eBG", "volume", inv)``."""
    a = bound_series(upper, inv, lambda_min)
    b = bound_series(lower, inv, lambda_min)
    return a.c4 - b.c4


def ebg_volume_gap_formula(inv: RiemannInvariants) -> Fraction:
    """``(d(d+1) E^2 + 6(d-1) C^2) / (720 (d-1)(d+2)(d+4))`` (homogeneous, ``box R = 0``)."""
    d = inv.d
    return (d * (d + 1) * inv.e2 + 6 * (d - 1) * inv.c2) / (720 * (d - 1) * (d + 2) * (d + 4))


def volume_scalar_model_gap_formula(inv: RiemannInvariants) -> Fraction:
    """``((2d-7) E^2 - 3 C^2) / (360 (d+2)(d+4))``, the ``t^4`` gap of volume over the scalar model."""
    d = inv.d
    return ((2 * d - 7) * inv.e2 - 3 * inv.c2) / (360 * (d + 2) * (d + 4))


__all__ += ["ebg_volume_gap_formula", "volume_scalar_model_gap_formula"]


def fit_series(t, values, d: int) -> tuple[float, float]:
    """Least-squares ``(c2, c4)`` from ``values ~ (Omega/d) t^d (1 + c2 t^2 + c4 t^4 + c6 t^6)``."""
    from ._sn import sphere_area
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float) / (sphere_area(d - 1) / d * t**d) - 1.0
    A = np.column_stack([t**2, t**4, t**6])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0]), float(coef[1])


# --------------------------------------------------------------------------
# finite-difference oracle


def riemann_invariants_fd(metric: Callable[[np.ndarray], np.ndarray], point: Sequence[float],
                          h: float = 1e-4) -> tuple[float, float, float]:
    """``(R, Ric^2, Riem^2)`` at ``point`` by central differences of the metric.

    Uses ``R^a_{bcd} = d_c G^a_{db} - d_d G^a_{cb} + G^a_{ce} G^e_{db} - G^a_{de} G^e_{cb}``
    and ``Ric_{bd} = R^a_{bad}``; the sign convention makes the unit sphere
    positively curved.
    """
    x0 = np.asarray(point, dtype=float)
    n = x0.size
    eye = np.eye(n)
    g = metric(x0)
    ginv = np.linalg.inv(g)
    dg = np.array([(metric(x0 + h * eye[k]) - metric(x0 - h * eye[k])) / (2 * h)
                   for k in range(n)])
    ddg = np.empty((n, n, n, n))
    for k in range(n):
        ddg[k, k] = (metric(x0 + h * eye[k]) - 2 * g + metric(x0 - h * eye[k])) / h**2
        for l in range(k + 1, n):
            e = h * (eye[k] + eye[l])
            f = h * (eye[k] - eye[l])
            val = (metric(x0 + e) - metric(x0 + f) - metric(x0 - f) + metric(x0 - e)) / (4 * h * h)
            ddg[k, l] = ddg[l, k] = val

    # lowered Christoffels G_{d b c} = (d_b g_dc + d_c g_db - d_d g_bc)/2, index order [d, b, c]
    low = 0.5 * (np.einsum("bdc->dbc", dg) + np.einsum("cdb->dbc", dg) - dg)
    gamma = np.einsum("ad,dbc->abc", ginv, low)
    # derivative index first: dlow[l, d, b, c]
    dlow = 0.5 * (np.einsum("lbdc->ldbc", ddg) + np.einsum("lcdb->ldbc", ddg) - ddg)
    dginv = -np.einsum("ae,lef,fd->lad", ginv, dg, ginv)
    dgamma = np.einsum("lad,dbc->labc", dginv, low) + np.einsum("ad,ldbc->labc", ginv, dlow)

    riem = (np.einsum("cadb->abcd", dgamma) - np.einsum("dacb->abcd", dgamma)
            + np.einsum("ace,edb->abcd", gamma, gamma) - np.einsum("ade,ecb->abcd", gamma, gamma))
    ric = np.einsum("abad->bd", riem)
    R = float(np.einsum("bd,bd->", ginv, ric))
    ric_up = ginv @ ric @ ginv
    ric2 = float(np.einsum("ab,ab->", ric, ric_up))
    riem_low = np.einsum("ae,ebcd->abcd", g, riem)
    riem_up = np.einsum("ae,bf,cg,dh,efgh->abcd", ginv, ginv, ginv, ginv, riem_low)
    riem2 = float(np.einsum("abcd,abcd->", riem_low, riem_up))
    return R, ric2, riem2


def _sn_smooth(k: float, r):
    # unclamped sn, for metric coefficients inside the chart
    if k > 0:
        return math.sin(math.sqrt(k) * r) / math.sqrt(k)
    if k < 0:
        return math.sinh(math.sqrt(-k) * r) / math.sqrt(-k)
    return r


def polar_product_metric(space: ProductSpace) -> Callable[[np.ndarray], np.ndarray]:
    """Metric of a product space in geodesic polar coordinates on each factor.

    A factor of dimension ``n`` and curvature ``k`` uses ``(r, theta_1, ...,
    theta_{n-1})`` with ``dr^2 + sn(k, r)^2 dOmega_{n-1}^2``, the round metric
    in hyperspherical angles.  One-dimensional factors use a line coordinate.
    """
    layout = []
    for (a, _), f in zip(space.blocks, space.factors):
        layout.append((a, f.dim, f.curvature))

    def metric(x: np.ndarray) -> np.ndarray:
        g = np.zeros((space.total_dim, space.total_dim))
        for a, n, k in layout:
            g[a, a] = 1.0
            if n == 1:
                continue
            w = _sn_smooth(k, x[a]) ** 2
            for i in range(1, n):
                g[a + i, a + i] = w
                w *= math.sin(x[a + i]) ** 2
        return g

    return metric


def spectrum_lambda_min(space: ProductSpace) -> Fraction:
    return _q(ricci_spectrum(space).lambda_min)


__all__ += ["spectrum_lambda_min"]
