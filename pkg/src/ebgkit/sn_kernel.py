"""Bishop-Gromov and enhanced Bishop-Gromov bounds for a Ricci spectrum.

Both bounds are built from the comparison function ``sn``.  The BG bound uses
the smallest Ricci eigenvalue for every direction.  The enhanced bound averages
``sn(Ric(X, X)/(d-1), t)^(d-1)`` over unit directions ``X``.

Averages over the unit sphere reduce to averages over the simplex.  When ``X``
is uniform on S^(d-1), the squared components grouped by eigenvalue block
follow a Dirichlet law with parameters ``multiplicity/2``.  With at most three
distinct eigenvalues that law is integrated with a tensor Gauss-Jacobi rule,
doubling nodes until converged.  With more, a seeded Monte Carlo sample is
used.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import roots_jacobi

from ._sn import conjugate_time, radial_power_integral, sn, sphere_area
from .model_spaces import ProductSpace, RicciSpectrum, exact_ball_volume, ricci_spectrum

__all__ = [
    "sn",
    "sphere_area",
    "conjugate_time",
    "QuadratureError",
    "SphereQuadrature",
    "BoundCurve",
    "dirichlet_expectation",
    "sphere_average",
    "sphere_average_error",
    "bg_area",
    "bg_bound",
    "ebg_area",
    "ebg_bound",
    "bound_curve",
    "beam_asymptotics",
    "single_axis_spectrum",
]

MAX_EXACT_BLOCKS = 3
_MC_CHUNK = 4096


class QuadratureError(RuntimeError):
    """Sphere quadrature failed to reach its tolerance."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved relative change {achieved:.3g})")
        self.achieved = achieved


@dataclass(frozen=True)
class SphereQuadrature:
    """How sphere averages are evaluated.

    ``mode`` is ``"exact-reduced"`` or ``"monte-carlo"``.  ``nodes`` is the
    starting Gauss-Jacobi order per simplex coordinate, doubled up to
    ``max_nodes`` until successive estimates agree to ``rtol``.  Monte Carlo
    draws ``samples`` points from a generator seeded with ``seed``; it is also
    the fallback for spectra with more than three distinct eigenvalues.
    """

    mode: str = "exact-reduced"
    nodes: int = 32
    seed: int = 0
    samples: int = 1_000_000
    rtol: float = 1e-10
    max_nodes: int = 1024

    def __post_init__(self):
        if self.mode not in ("exact-reduced", "monte-carlo"):
            raise ValueError(f"unknown sphere quadrature mode {self.mode!r}")
        if self.nodes < 8:
            raise ValueError("nodes must be >= 8")
        if self.samples < 8:
            raise ValueError("samples must be >= 8")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @classmethod
    def from_record(cls, record: Optional[dict]) -> "SphereQuadrature":
        return cls(**(record or {}))

    def to_record(self) -> dict:
        return {"mode": self.mode, "nodes": self.nodes, "seed": self.seed,
                "samples": self.samples, "rtol": self.rtol, "max_nodes": self.max_nodes}


@dataclass
class BoundCurve:
    """Sampled volume / eBG / BG curves on an ascending time grid."""

    times: np.ndarray
    ebg: np.ndarray
    bg: np.ndarray
    volume: Optional[np.ndarray] = None
    ebg_area: Optional[np.ndarray] = None
    bg_area: Optional[np.ndarray] = None
    area: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be a strictly ascending 1-d grid")
        for name in ("ebg", "bg", "volume", "ebg_area", "bg_area", "area"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=float)
            if arr.shape != self.times.shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {self.times.shape}")
            if np.any(arr < 0):
                raise ValueError(f"{name} has negative entries")
            setattr(self, name, arr)

    def columns(self) -> dict[str, np.ndarray]:
        cols = {"t": self.times}
        for name in ("volume", "ebg", "bg"):
            arr = getattr(self, name)
            if arr is not None:
                cols[name] = arr
        cols.update(self.extra)
        return cols


# --------------------------------------------------------------------------
# simplex rules


@lru_cache(maxsize=64)
def _beta_rule(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    # Gauss-Jacobi for the Beta(a, b) law on [0, 1], weights summing to 1
    x, w = roots_jacobi(n, b - 1.0, a - 1.0)
    return 0.5 * (1.0 + x), w / w.sum()


def _stick_breaking_rule(alphas: Sequence[float], n: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Jacobi rule for Dirichlet(alphas); returns (points (K, m), weights (K,))."""
    m = len(alphas)
    if m == 1:
        return np.ones((1, 1)), np.ones(1)
    points = np.ones((1, 0))
    weights = np.ones(1)
    remaining = np.ones(1)
    for i in range(m - 1):
        x, w = _beta_rule(n, float(alphas[i]), float(sum(alphas[i + 1:])))
        share = remaining[:, None] * x[None, :]
        points = np.concatenate(
            [np.repeat(points, x.size, axis=0), share.reshape(-1, 1)], axis=1)
        remaining = (remaining[:, None] * (1.0 - x)[None, :]).ravel()
        weights = (weights[:, None] * w[None, :]).ravel()
    points = np.concatenate([points, remaining[:, None]], axis=1)
    return points, weights


def _apply(g: Callable[[np.ndarray], np.ndarray], points: np.ndarray) -> np.ndarray:
    out = np.asarray(g(points), dtype=float)
    if out.shape[:1] != (points.shape[0],):
        raise ValueError("integrand must return one row per simplex point")
    return out


def _mc_moments(alphas, g, quad: SphereQuadrature) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(quad.seed)
    total = None
    total_sq = None
    drawn = 0
    while drawn < quad.samples:
        size = min(_MC_CHUNK, quad.samples - drawn)
        pts = rng.dirichlet(np.asarray(alphas, dtype=float), size=size)
        vals = _apply(g, pts)
        s, s2 = vals.sum(axis=0), (vals * vals).sum(axis=0)
        total = s if total is None else total + s
        total_sq = s2 if total_sq is None else total_sq + s2
        drawn += size
    mean = total / drawn
    var = np.maximum(total_sq / drawn - mean * mean, 0.0)
    return mean, np.sqrt(var / (drawn - 1))


def dirichlet_expectation(alphas: Sequence[float], g: Callable[[np.ndarray], np.ndarray],
                          quad: SphereQuadrature):
    """Expectation of ``g(w)`` for ``w ~ Dirichlet(alphas)``.

    ``g`` receives an array of simplex points of shape ``(K, m)`` and returns
    an array whose first axis has length ``K``.
    """
    alphas = tuple(float(a) for a in alphas)
    if len(alphas) == 1:
        out = _apply(g, np.ones((1, 1)))[0]
        return float(out) if out.ndim == 0 else out
    if quad.mode == "monte-carlo" or len(alphas) > MAX_EXACT_BLOCKS:
        mean, _ = _mc_moments(alphas, g, quad)
        return float(mean) if mean.ndim == 0 else mean

    n = quad.nodes
    cap = quad.max_nodes if len(alphas) == 2 else max(quad.nodes, quad.max_nodes // 8)
    prev = None
    change = math.inf
    while True:
        pts, w = _stick_breaking_rule(alphas, n)
        est = np.tensordot(w, _apply(g, pts), axes=(0, 0))
        if prev is not None:
            scale = np.max(np.abs(est))
            change = float(np.max(np.abs(est - prev)) / scale) if scale > 0 else 0.0
            if change <= quad.rtol:
                break
        if 2 * n > cap:
            raise QuadratureError(
                f"Gauss-Jacobi sphere rule did not converge by {n} nodes", change)
        prev, n = est, 2 * n
    return float(est) if np.ndim(est) == 0 else est


# --------------------------------------------------------------------------
# sphere averages and bounds


def _ricci_values(spectrum: RicciSpectrum, points: np.ndarray) -> np.ndarray:
    x = points @ spectrum.distinct
    # the form is a convex combination of eigenvalues; keep rounding inside the hull
    return np.clip(x, spectrum.lambda_min, spectrum.lambda_max)


def _alphas(spectrum: RicciSpectrum) -> tuple[float, ...]:
    return tuple(0.5 * m for m in spectrum.multiplicities)


def sphere_average(spectrum: RicciSpectrum, f: Callable[[np.ndarray], np.ndarray],
                   quad: SphereQuadrature = SphereQuadrature()):
    """Normalised average of ``f(Ric(X, X))`` over unit directions ``X``."""
    return dirichlet_expectation(_alphas(spectrum), lambda p: f(_ricci_values(spectrum, p)), quad)


def sphere_average_error(spectrum: RicciSpectrum, f: Callable[[np.ndarray], np.ndarray],
                         quad: SphereQuadrature) -> tuple[float, float]:
    """Monte Carlo estimate of :func:`sphere_average` with its standard error."""
    mean, err = _mc_moments(_alphas(spectrum), lambda p: f(_ricci_values(spectrum, p)), quad)
    return float(mean), float(err)


def _as_times(t) -> tuple[np.ndarray, np.ndarray, bool]:
    arr = np.asarray(t, dtype=float)
    scalar = arr.ndim == 0
    flat = np.atleast_1d(arr)
    if np.any(flat < 0):
        raise ValueError("radius must be nonnegative")
    order = np.argsort(flat, kind="stable")
    return flat, order, scalar


def _restore(values: np.ndarray, order: np.ndarray, scalar: bool):
    out = np.empty_like(values)
    out[order] = values
    return float(out[0]) if scalar else out


def bg_area(spectrum: RicciSpectrum, t):
    """Area of the radius-t sphere in the model space of curvature lambda_min/(d-1)."""
    d = spectrum.dim
    flat, _, scalar = _as_times(t)
    out = sphere_area(d - 1) * sn(spectrum.lambda_min / (d - 1), flat) ** (d - 1)
    return float(out[0]) if scalar else out


def bg_bound(spectrum: RicciSpectrum, t):
    """Bishop-Gromov volume bound: integral of :func:`bg_area` from 0 to t."""
    d = spectrum.dim
    flat, order, scalar = _as_times(t)
    vals = radial_power_integral(spectrum.lambda_min / (d - 1), d - 1, flat[order])[0]
    return _restore(sphere_area(d - 1) * vals, order, scalar)


def ebg_area(spectrum: RicciSpectrum, t, quad: SphereQuadrature = SphereQuadrature()):
    """Enhanced-BG area: Omega_{d-1} <sn(Ric(X,X)/(d-1), t)^(d-1)>_X."""
    d = spectrum.dim
    flat, _, scalar = _as_times(t)

    def g(points):
        k = _ricci_values(spectrum, points) / (d - 1)
        return sn(k[:, None], flat[None, :]) ** (d - 1)

    out = sphere_area(d - 1) * np.atleast_1d(dirichlet_expectation(_alphas(spectrum), g, quad))
    return float(out[0]) if scalar else out


def ebg_bound(spectrum: RicciSpectrum, t, quad: SphereQuadrature = SphereQuadrature()):
    """Enhanced-BG volume bound: integral of :func:`ebg_area` from 0 to t."""
    d = spectrum.dim
    flat, order, scalar = _as_times(t)
    ts = flat[order]

    def g(points):
        k = _ricci_values(spectrum, points) / (d - 1)
        return radial_power_integral(k, d - 1, ts)

    vals = sphere_area(d - 1) * np.atleast_1d(dirichlet_expectation(_alphas(spectrum), g, quad))
    return _restore(vals, order, scalar)


def bound_curve(source: ProductSpace | RicciSpectrum, times,
                quad: SphereQuadrature = SphereQuadrature(), *,
                with_volume: bool = True, with_areas: bool = True) -> BoundCurve:
    """Sample BG, eBG and (for product spaces) the exact volume on ``times``."""
    times = np.asarray(times, dtype=float)
    if isinstance(source, ProductSpace):
        spectrum = ricci_spectrum(source)
        volume = (np.array([exact_ball_volume(source, float(t)) for t in times])
                  if with_volume else None)
    else:
        spectrum, volume = source, None
    curve = BoundCurve(times=times, ebg=ebg_bound(spectrum, times, quad),
                       bg=bg_bound(spectrum, times), volume=volume)
    if with_areas:
        curve.ebg_area = ebg_area(spectrum, times, quad)
        curve.bg_area = bg_area(spectrum, times)
    return curve


def single_axis_spectrum(d: int) -> RicciSpectrum:
    """One Ricci eigenvalue -(d-1) (unit hyperbolic value), the rest zero."""
    return RicciSpectrum(((-(d - 1.0), 1), (0.0, d - 1)))


def beam_asymptotics(d: int, t: float) -> tuple[float, float]:
    """Large-radius beam width and eBG/BG ratio for :func:`single_axis_spectrum`.

    ``phi_max^2 = (d-2)/((d-1) t)`` is the angle from the negative axis that
    dominates the angular integral.  The ratio is the leading large-t value
    ``(2/Omega_{d-1}) (2 pi/((d-1) t))^((d-1)/2)``.
    """
    if d < 3:
        raise ValueError("beam asymptotics need d >= 3")
    if t <= 0:
        raise ValueError("t must be positive")
    phi_max = math.sqrt((d - 2) / ((d - 1) * t))
    ratio = 2.0 / sphere_area(d - 1) * (2.0 * math.pi / ((d - 1) * t)) ** (0.5 * (d - 1))
    return phi_max, ratio
