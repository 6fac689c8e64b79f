"""Homogeneous model spaces built from constant-curvature factors.

A :class:`ProductSpace` is a Riemannian product of simply connected
constant-curvature factors (spheres, Euclidean spaces, hyperbolic spaces).
Geodesics in such products never turn, so their curvature data along a
geodesic is fixed by the departure direction, and their ball volumes can be
computed exactly by convolving the factor volumes.  Those exact volumes are
the ground truth the bounds are checked against.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
import math
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate

from ._sn import conjugate_time, radial_power_integral, sn, sphere_area

__all__ = [
    "SpaceFactor",
    "ProductSpace",
    "RicciSpectrum",
    "Direction",
    "ricci_spectrum",
    "scalar_curvature",
    "ricci_quadratic_form",
    "exact_ball_volume",
    "model_ball_volume",
    "scalar_matched_curvature",
]

SHELL_EPSABS = 1e-12
SHELL_EPSREL = 1e-10


@dataclass(frozen=True)
class SpaceFactor:
    """A simply connected factor of dimension ``dim`` and sectional curvature ``curvature``."""

    dim: int
    curvature: float = 0.0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"factor dimension must be a positive integer, got {self.dim!r}")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "curvature", float(self.curvature))
        if not math.isfinite(self.curvature):
            raise ValueError("factor curvature must be finite")
        if self.dim == 1 and self.curvature != 0.0:
            raise ValueError("a 1-dimensional factor has no sectional curvature; use curvature 0")

    @property
    def ricci_eigenvalue(self) -> float:
        return (self.dim - 1) * self.curvature

    @property
    def symbol(self) -> str:
        letter = "R" if self.curvature == 0 else ("H" if self.curvature < 0 else "S")
        if self.curvature in (0.0, 1.0, -1.0):
            return f"{letter}{self.dim}"
        return f"{letter}{self.dim}[{self.curvature:g}]"

    def sphere_area(self, r):
        """Area of the distance-``r`` sphere inside this factor (0 past the cut point)."""
        r = np.asarray(r, dtype=float)
        if self.dim == 1:
            out = np.where(r > 0, 2.0, 0.0)
        else:
            out = sphere_area(self.dim - 1) * sn(self.curvature, r) ** (self.dim - 1)
        return float(out) if np.ndim(out) == 0 else out

    def ball_volume(self, r):
        """Volume of the distance-``r`` ball inside this factor; saturates for spheres."""
        r_arr = np.atleast_1d(np.asarray(r, dtype=float))
        if self.dim == 1:
            out = 2.0 * r_arr
        elif self.curvature == 0.0:
            out = sphere_area(self.dim - 1) * r_arr**self.dim / self.dim
        else:
            order = np.argsort(r_arr)
            vals = radial_power_integral(self.curvature, self.dim - 1, r_arr[order])[0]
            out = np.empty_like(r_arr)
            out[order] = sphere_area(self.dim - 1) * vals
        return float(out[0]) if np.ndim(r) == 0 else out

    @property
    def diameter(self) -> float:
        """Largest distance reached from a point; ``inf`` unless spherical."""
        return float(conjugate_time(self.curvature))


@dataclass(frozen=True)
class ProductSpace:
    """An ordered product of :class:`SpaceFactor` objects."""

    factors: tuple[SpaceFactor, ...]
    name: str | None = None

    def __post_init__(self):
        factors = tuple(
            f if isinstance(f, SpaceFactor) else SpaceFactor(**f) for f in self.factors
        )
        if not factors:
            raise ValueError("a product space needs at least one factor")
        object.__setattr__(self, "factors", factors)
        if self.total_dim < 2:
            raise ValueError(f"total dimension must be >= 2, got {self.total_dim}")

    @classmethod
    def of(cls, *pairs: tuple[int, float], name: str | None = None) -> "ProductSpace":
        """``ProductSpace.of((2, -1), (2, 0))`` is H^2 x R^2."""
        return cls(tuple(SpaceFactor(d, k) for d, k in pairs), name=name)

    @property
    def total_dim(self) -> int:
        return sum(f.dim for f in self.factors)

    @property
    def label(self) -> str:
        return self.name or "x".join(f.symbol for f in self.factors)

    @property
    def blocks(self) -> tuple[tuple[int, int], ...]:
        """Coordinate ranges ``(start, stop)`` of each factor in a tangent vector."""
        out, start = [], 0
        for f in self.factors:
            out.append((start, start + f.dim))
            start += f.dim
        return tuple(out)

    def to_record(self) -> dict:
        rec = {"factors": [{"dim": f.dim, "curvature": f.curvature} for f in self.factors]}
        if self.name:
            rec["name"] = self.name
        return rec

    @classmethod
    def from_record(cls, record: dict | Sequence) -> "ProductSpace":
        if isinstance(record, dict):
            return cls(tuple(SpaceFactor(**f) for f in record["factors"]), name=record.get("name"))
        return cls(tuple(SpaceFactor(**f) for f in record))

    @cached_property
    def _shell_factors(self) -> tuple[SpaceFactor, ...]:
        # R^a x R^b = R^(a+b) exactly; curved factors first so the innermost
        # ball volume is the flat closed form whenever possible.
        flat = sum(f.dim for f in self.factors if f.curvature == 0.0)
        curved = [f for f in self.factors if f.curvature != 0.0]
        curved.sort(key=lambda f: (f.curvature > 0, f.dim, f.curvature))
        if flat:
            curved.append(SpaceFactor(flat, 0.0))
        return tuple(curved)


@dataclass(frozen=True)
class RicciSpectrum:
    """Eigenvalues of the Ricci form with multiplicities, sorted ascending."""

    eigenvalues: tuple[tuple[float, int], ...]

    def __post_init__(self):
        merged: dict[float, int] = {}
        for value, mult in self.eigenvalues:
            value = float(value)
            if not math.isfinite(value):
                raise ValueError("Ricci eigenvalues must be finite")
            if int(mult) != mult or mult < 1:
                raise ValueError(f"multiplicity must be a positive integer, got {mult!r}")
            merged[value] = merged.get(value, 0) + int(mult)
        pairs = tuple(sorted(merged.items()))
        object.__setattr__(self, "eigenvalues", pairs)
        if self.dim < 2:
            raise ValueError(f"spectrum dimension must be >= 2, got {self.dim}")

    @classmethod
    def from_values(cls, values: Iterable[float]) -> "RicciSpectrum":
        return cls(tuple((float(v), 1) for v in values))

    @classmethod
    def isotropic(cls, d: int, value: float) -> "RicciSpectrum":
        return cls(((float(value), int(d)),))

    @property
    def dim(self) -> int:
        return sum(m for _, m in self.eigenvalues)

    @property
    def values(self) -> np.ndarray:
        return np.repeat([v for v, _ in self.eigenvalues], [m for _, m in self.eigenvalues])

    @property
    def distinct(self) -> np.ndarray:
        return np.array([v for v, _ in self.eigenvalues])

    @property
    def multiplicities(self) -> np.ndarray:
        return np.array([m for _, m in self.eigenvalues])

    @property
    def lambda_min(self) -> float:
        return self.eigenvalues[0][0]

    @property
    def lambda_max(self) -> float:
        return self.eigenvalues[-1][0]

    @property
    def is_isotropic(self) -> bool:
        return len(self.eigenvalues) == 1

    @property
    def scalar(self) -> float:
        return float(sum(v * m for v, m in self.eigenvalues))


@dataclass(frozen=True)
class Direction:
    """A unit tangent vector."""

    components: tuple[float, ...]

    def __post_init__(self):
        comps = tuple(float(c) for c in self.components)
        norm2 = math.fsum(c * c for c in comps)
        if abs(norm2 - 1.0) > 1e-12:
            raise ValueError(f"direction is not unit length (|X|^2 = {norm2!r})")
        object.__setattr__(self, "components", comps)

    @classmethod
    def normalized(cls, components: Iterable[float]) -> "Direction":
        v = np.asarray(list(components), dtype=float)
        n = np.linalg.norm(v)
        if n == 0:
            raise ValueError("cannot normalise the zero vector")
        v = v / n
        # one renormalisation pass keeps |X|^2 within 1e-12 of 1
        v = v / math.sqrt(math.fsum(v * v))
        return cls(tuple(v))

    @property
    def dim(self) -> int:
        return len(self.components)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.components, dtype=dtype)


def ricci_spectrum(space: ProductSpace) -> RicciSpectrum:
    """Each factor of dimension n and curvature k contributes (n-1)k with multiplicity n."""
    return RicciSpectrum(tuple((f.ricci_eigenvalue, f.dim) for f in space.factors))


def scalar_curvature(spectrum: RicciSpectrum) -> float:
    return spectrum.scalar


def ricci_quadratic_form(spectrum: RicciSpectrum, x: Direction | Sequence[float]) -> float:
    """Evaluate sum_mu lambda_mu (X^mu)^2 in the eigenbasis of ``spectrum``."""
    comps = np.asarray(x, dtype=float)
    if comps.shape != (spectrum.dim,):
        raise ValueError(f"direction has {comps.size} components, spectrum has dimension {spectrum.dim}")
    if not isinstance(x, Direction):
        Direction(tuple(comps))
    return float(np.dot(spectrum.values, comps * comps))


def model_ball_volume(d: int, k: float, t: float) -> float:
    """Volume of the radius-``t`` ball in the d-dimensional space of constant sectional curvature ``k``."""
    if d < 2:
        raise ValueError(f"model space dimension must be >= 2, got {d}")
    if t < 0:
        raise ValueError("radius must be nonnegative")
    return SpaceFactor(d, k).ball_volume(float(t))


def scalar_matched_curvature(d: int, scalar: float) -> float:
    """Sectional curvature of the maximally symmetric d-space with scalar curvature ``scalar``."""
    return scalar / (d * (d - 1))


def _product_ball_volume(factors: Sequence[SpaceFactor], t: float,
                         epsabs: float, epsrel: float) -> float:
    if t <= 0.0:
        return 0.0
    if len(factors) == 1:
        return factors[0].ball_volume(t)
    first, rest = factors[0], factors[1:]

    # tau = t sin(phi) puts the shell integral on a smooth, finite interval
    phi_max = math.pi / 2
    if first.diameter < t:
        phi_max = math.asin(first.diameter / t)

    def integrand(phi: float) -> float:
        r = t * math.cos(phi)
        return (first.sphere_area(t * math.sin(phi))
                * _product_ball_volume(rest, r, epsabs, epsrel) * r)

    points = []
    for f in rest:
        if f.diameter < t:
            phi_sat = math.acos(f.diameter / t)
            if 0.0 < phi_sat < phi_max:
                points.append(phi_sat)
    value, _ = integrate.quad(integrand, 0.0, phi_max, epsabs=epsabs, epsrel=epsrel,
                              limit=200, points=points or None)
    return value


def exact_ball_volume(space: ProductSpace, t: float, *,
                      epsabs: float = SHELL_EPSABS, epsrel: float = SHELL_EPSREL) -> float:
    """Exact volume of the radius-``t`` geodesic ball in ``space``.

    A product ball is the set ``{d_1^2 + d_2^2 <= t^2}``, so its volume is the
    shell integral ``int_0^t Area_1(tau) Vol_rest(sqrt(t^2 - tau^2)) dtau``.
    Products of three or more factors recurse on the rest.  Factor areas vanish
    past a sphere's cut point and factor volumes saturate there.
    """
    if t < 0:
        raise ValueError("radius must be nonnegative")
    return _product_ball_volume(space._shell_factors, float(t), epsabs, epsrel)
