"""Operator Jacobi fields along geodesics of product spaces.

Along a unit-speed geodesic with tangent ``X`` the normal Jacobi tensor obeys
``J'' = -R_X J`` with ``R_X v = R(v, X) X``, ``J(0) = 0`` and ``J'(0) = id``.
In a product of constant-curvature factors, with ``c_i^2`` the share of
``|X|^2`` in factor ``i``, the eigenvalues of ``R_X`` on the normal space are
``k_i c_i^2`` (multiplicity ``n_i - 1``) and 0 (multiplicity ``m - 1`` for
``m`` factors).  They stay constant along the geodesic, so ``det J`` is a
product of ``sn`` factors.  The dense matrix path is integrated anyway to
check that shortcut.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from ._sn import conjugate_time, sn, sphere_area
from .jacobi_engine import MARGIN_TOL, CheckReport
from .model_spaces import (Direction, ProductSpace, exact_ball_volume, model_ball_volume,
                           ricci_spectrum)
from .sn_kernel import (SphereQuadrature, _stick_breaking_rule, dirichlet_expectation, ebg_area,
                        ebg_bound)

__all__ = [
    "CurvatureOperator",
    "OperatorJacobiTrajectory",
    "ExpansionChain",
    "curvature_operator",
    "factor_weights",
    "solve_operator_jacobi",
    "expansion_chain",
    "det_jacobi_closed_form",
    "total_area",
    "ratio_monotonicity",
    "geodesic_ricci_values",
    "liouville_histogram_check",
    "write_trajectory_csv",
]

CONJUGATE_TOL = 1e-10


@dataclass(frozen=True)
class CurvatureOperator:
    """Eigenvalues of ``R_X`` on the normal space, optionally with a full matrix.

    ``matrix`` is ``R_X`` written in some orthonormal frame of the normal
    space; when absent the operator is diagonal in its eigenframe.
    """

    diag: tuple[float, ...]
    matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        diag = tuple(float(x) for x in self.diag)
        object.__setattr__(self, "diag", diag)
        if self.matrix is not None:
            mat = np.asarray(self.matrix, dtype=float)
            if mat.shape != (len(diag), len(diag)):
                raise ValueError("matrix shape does not match the number of eigenvalues")
            if not np.allclose(mat, mat.T, atol=1e-12):
                raise ValueError("curvature operator must be symmetric")
            object.__setattr__(self, "matrix", mat)

    @property
    def dim(self) -> int:
        return len(self.diag)

    @property
    def ricci(self) -> float:
        """``Ric(X, X)``, the trace of the operator."""
        return math.fsum(self.diag)

    def as_matrix(self) -> np.ndarray:
        return np.diag(self.diag) if self.matrix is None else self.matrix

    @classmethod
    def isotropic(cls, d: int, k: float) -> "CurvatureOperator":
        return cls((float(k),) * (d - 1))


def factor_weights(space: ProductSpace, direction) -> np.ndarray:
    """Squared norms ``c_i^2`` of the direction's components in each factor."""
    x = np.asarray(direction, dtype=float)
    if x.shape != (space.total_dim,):
        raise ValueError(f"direction has {x.size} components, space has dimension {space.total_dim}")
    return np.array([float(np.dot(x[a:b], x[a:b])) for a, b in space.blocks])


def _normal_frame(x: np.ndarray, rng: Optional[np.random.Generator]) -> np.ndarray:
    """Orthonormal basis (columns) of the complement of ``x``, randomly rotated if asked."""
    d = x.size
    q, _ = np.linalg.qr(np.column_stack([x, np.eye(d)]))
    frame = q[:, 1:d]
    if rng is not None:
        rot, _ = np.linalg.qr(rng.standard_normal((d - 1, d - 1)))
        frame = frame @ rot
    return frame


def curvature_operator(space: ProductSpace, direction: Direction | Sequence[float], *,
                       frame_seed: Optional[int] = None) -> CurvatureOperator:
    """``R_X`` for a unit direction ``X`` in a product space.

    The matrix is assembled from the factor curvature tensors
    ``R_i(v, X)X = k_i (|X_i|^2 v_i - <v_i, X_i> X_i)`` and written in an
    orthonormal frame of ``X^perp`` (rotated at random when ``frame_seed`` is
    given).  ``diag`` holds the closed-form eigenvalues.
    """
    x = np.asarray(direction, dtype=float)
    if not isinstance(direction, Direction):
        Direction(tuple(x))
    c2 = factor_weights(space, x)
    d = space.total_dim
    full = np.zeros((d, d))
    diag = []
    for (a, b), f, w in zip(space.blocks, space.factors, c2):
        xi = x[a:b]
        full[a:b, a:b] = f.curvature * (w * np.eye(b - a) - np.outer(xi, xi))
        diag += [f.curvature * w] * (f.dim - 1)
    diag += [0.0] * (len(space.factors) - 1)
    rng = None if frame_seed is None else np.random.default_rng(frame_seed)
    frame = _normal_frame(x, rng)
    mat = frame.T @ full @ frame
    return CurvatureOperator(tuple(sorted(diag)), 0.5 * (mat + mat.T))


def det_jacobi_closed_form(space: ProductSpace, c2, t):
    """``prod_i sn(k_i c_i^2, t)^(n_i - 1) * t^(m - 1)``, broadcasting over rows of ``c2``."""
    c2 = np.asarray(c2, dtype=float)
    t = np.asarray(t, dtype=float)
    out = t ** (len(space.factors) - 1)
    for i, f in enumerate(space.factors):
        if f.dim > 1:
            out = out * sn(f.curvature * c2[..., i], t) ** (f.dim - 1)
    return out


# --------------------------------------------------------------------------
# dense operator integration


@dataclass
class OperatorJacobiTrajectory:
    """Samples of ``J``, ``J'`` and ``det J`` up to the first conjugate point."""

    times: np.ndarray
    J: np.ndarray
    Jprime: np.ndarray
    detJ: np.ndarray
    curvature: Callable[[float], np.ndarray]
    conjugate_time: Optional[float] = None

    @property
    def dim(self) -> int:
        return self.J.shape[1]


def _rk4_step(R: Callable[[float], np.ndarray], t: float, J: np.ndarray, P: np.ndarray,
              h: float) -> tuple[np.ndarray, np.ndarray]:
    r0, rm, r1 = R(t), R(t + 0.5 * h), R(t + h)
    k1j, k1p = P, -r0 @ J
    k2j, k2p = P + 0.5 * h * k1p, -rm @ (J + 0.5 * h * k1j)
    k3j, k3p = P + 0.5 * h * k2p, -rm @ (J + 0.5 * h * k2j)
    k4j, k4p = P + h * k3p, -r1 @ (J + h * k3j)
    return (J + h / 6.0 * (k1j + 2 * k2j + 2 * k3j + k4j),
            P + h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p))


def _focus_indicator(J: np.ndarray) -> float:
    # smallest eigenvalue of the symmetric part; catches even-multiplicity focal points
    return float(np.linalg.eigvalsh(0.5 * (J + J.T))[0])


def solve_operator_jacobi(op: CurvatureOperator | Callable[[float], np.ndarray],
                          horizon: float, step: float) -> OperatorJacobiTrajectory:
    """Classical RK4 for ``J'' = -R J`` from ``J(0) = 0, J'(0) = id``.

    ``op`` is a :class:`CurvatureOperator` or a function ``t -> R(t)``.
    Integration halts at the first conjugate point, located by bisection on
    the sub-step RK4 update to ``1e-10``.
    """
    if horizon <= 0 or step <= 0:
        raise ValueError("horizon and step must be positive")
    if step > horizon:
        raise ValueError("step exceeds the horizon")
    if callable(op):
        R = op
        n = np.asarray(R(0.0)).shape[0]
    else:
        mat = op.as_matrix()
        n = mat.shape[0]
        R = lambda t: mat  # noqa: E731
    steps = int(math.ceil(horizon / step - 1e-9))
    grid = np.linspace(0.0, horizon, steps + 1)
    J, P = np.zeros((n, n)), np.eye(n)
    Js, Ps = [J], [P]
    conj = None
    for a, b in zip(grid[:-1], grid[1:]):
        Jn, Pn = _rk4_step(R, a, J, P, b - a)
        if _focus_indicator(Jn) <= 0.0:
            lo, hi = 0.0, b - a
            while hi - lo > CONJUGATE_TOL:
                mid = 0.5 * (lo + hi)
                if _focus_indicator(_rk4_step(R, a, J, P, mid)[0]) > 0.0:
                    lo = mid
                else:
                    hi = mid
            conj = a + hi
            break
        J, P = Jn, Pn
        Js.append(J)
        Ps.append(P)
    Js, Ps = np.array(Js), np.array(Ps)
    times = grid[:len(Js)]
    return OperatorJacobiTrajectory(times, Js, Ps, np.linalg.det(Js), R, conj)


@dataclass
class ExpansionChain:
    """Expansion data along a trajectory (``t > 0`` samples only).

    ``u = tr(U)/(d-1)`` with ``U = J' J^-1``; ``kappa_eff = u' + u^2`` with
    ``u'`` from the trace of the Riccati equation ``U' + U^2 + R = 0``;
    ``shear_gap = tr(U^2) - tr(U)^2/(d-1) >= 0`` is the Cauchy-Schwarz drop.
    """

    times: np.ndarray
    u: np.ndarray
    kappa_eff: np.ndarray
    ricci: np.ndarray
    shear_gap: np.ndarray
    detJ: np.ndarray

    dim: int

    @property
    def riccati_margin(self) -> np.ndarray:
        """``-Ric/(d-1) - kappa_eff``; nonnegative when the inequality holds."""
        return -self.ricci / self.dim - self.kappa_eff


def expansion_chain(traj: OperatorJacobiTrajectory) -> ExpansionChain:
    """``u``, ``kappa_eff`` and the Cauchy-Schwarz gap at every sample with ``t > 0``."""
    keep = traj.times > 0
    if not np.all(traj.detJ[keep] > 0):
        raise ValueError("det J must be positive on the sampled range")
    n = traj.dim
    ts = traj.times[keep]
    U = traj.Jprime[keep] @ np.linalg.inv(traj.J[keep])
    trU = np.trace(U, axis1=1, axis2=2)
    trU2 = np.einsum("tij,tji->t", U, U)
    trR = np.array([np.trace(traj.curvature(t)) for t in ts])
    u = trU / n
    kappa = trU**2 / n**2 - trU2 / n - trR / n
    return ExpansionChain(ts, u, kappa, trR, trU2 - trU**2 / n, traj.detJ[keep], n)


def write_trajectory_csv(path, traj: OperatorJacobiTrajectory) -> None:
    """Write ``t, detJ, u, kappa_eff`` rows (``t > 0``) with 17 significant digits."""
    chain = expansion_chain(traj)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "detJ", "u", "kappa_eff"])
        for row in zip(chain.times, chain.detJ, chain.u, chain.kappa_eff):
            w.writerow([f"{v:.17g}" for v in row])


# --------------------------------------------------------------------------
# sphere-averaged quantities


def _factor_alphas(space: ProductSpace) -> tuple[float, ...]:
    return tuple(0.5 * f.dim for f in space.factors)


def total_area(space: ProductSpace, t, quad: SphereQuadrature = SphereQuadrature()):
    """``Omega_{d-1}`` times the direction average of ``det J_X(t)``.

    The factor shares ``c_i^2`` of a uniform unit direction are
    Dirichlet(``n_i/2``).  Directions past their own conjugate time contribute
    0 (the ``sn`` clamp).
    """
    flat = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(flat < 0):
        raise ValueError("radius must be nonnegative")
    d = space.total_dim

    def g(points):
        return det_jacobi_closed_form(space, points[:, None, :], flat[None, :])

    if len(space.factors) == 1:
        vals = np.atleast_1d(g(np.ones((1, 1)))[0])
    else:
        vals = np.atleast_1d(dirichlet_expectation(_factor_alphas(space), g, quad))
    out = sphere_area(d - 1) * vals
    return float(out[0]) if np.ndim(t) == 0 else out


def _ratio_report(name: str, ratio: np.ndarray) -> CheckReport:
    scale = float(max(np.max(np.abs(ratio)), 1.0))
    upper = float(np.min(1.0 - ratio)) / scale
    steps = np.diff(ratio, axis=-1)
    mono = float(np.min(-steps)) / scale if steps.size else 0.0
    margin = min(upper, mono)
    return CheckReport(name, margin, margin >= -MARGIN_TOL,
                       trials=int(np.prod(ratio.shape[:-1])) if ratio.ndim > 1 else 1,
                       details={"upper": upper, "monotone": mono})


def ratio_monotonicity(space: ProductSpace, k_ref: float, grid,
                       quad: SphereQuadrature = SphereQuadrature(), *,
                       direction_nodes: int = 8) -> list[CheckReport]:
    """Bishop-Gromov ratio checks for area and volume.

    * per direction: ``det J_X(t) / sn(k_ref, t)^(d-1)`` is at most 1 and nonincreasing;
    * ball: ``vol(t) / V_{k_ref}(t)`` is at most 1 and nonincreasing;
    * averaged area: ``TA(t) / eBG_area(t)`` is at most 1 and nonincreasing, the
      denominator averaging ``sn^(d-1)`` over the law of ``Ric(X, X)/(d-1)``;
    * averaged volume: ``vol(t) / eBG(t)``, same statement.

    Requires ``k_ref <= lambda_min/(d-1)`` and a grid short of ``pi/sqrt(k_ref)``.
    """
    grid = np.asarray(grid, dtype=float)
    d = space.total_dim
    spec = ricci_spectrum(space)
    if k_ref > spec.lambda_min / (d - 1) + 1e-15:
        raise ValueError("k_ref must not exceed lambda_min/(d-1)")
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be positive and strictly increasing")
    if np.max(grid) >= conjugate_time(k_ref):
        raise ValueError("grid reaches the conjugate time of the reference space")

    m = len(space.factors)
    if m > 1:
        pts, _ = _stick_breaking_rule(_factor_alphas(space), direction_nodes)
        pts = np.vstack([pts, np.eye(m)])
    else:
        pts = np.ones((1, 1))
    det = det_jacobi_closed_form(space, pts[:, None, :], grid[None, :])
    model = sn(k_ref, grid) ** (d - 1)
    reports = [_ratio_report("ratio-direction", det / model[None, :])]

    vol = np.array([exact_ball_volume(space, float(t)) for t in grid])
    model_vol = np.array([model_ball_volume(d, k_ref, float(t)) for t in grid])
    reports.append(_ratio_report("ratio-ball", vol / model_vol))
    reports.append(_ratio_report("ratio-averaged-area",
                                 total_area(space, grid, quad) / ebg_area(spec, grid, quad)))
    reports.append(_ratio_report("ratio-averaged-volume", vol / ebg_bound(spec, grid, quad)))
    return reports


# --------------------------------------------------------------------------
# geodesic flow in conformal charts


def _geodesic_rhs(curvatures: np.ndarray, blocks, n_samples: int, d: int):
    # each factor in the chart g = 4 delta / (1 + k |x|^2)^2 (flat factors: g = delta)
    def rhs(_t, y):
        y = y.reshape(n_samples, 2 * d)
        x, v = y[:, :d], y[:, d:]
        acc = np.zeros_like(x)
        for (a, b), k in zip(blocks, curvatures):
            if k == 0.0:
                continue
            xi, vi = x[:, a:b], v[:, a:b]
            r2 = np.sum(xi * xi, axis=1, keepdims=True)
            grad = -2.0 * k * xi / (1.0 + k * r2)
            gv = np.sum(grad * vi, axis=1, keepdims=True)
            vv = np.sum(vi * vi, axis=1, keepdims=True)
            acc[:, a:b] = -2.0 * gv * vi + vv * grad
        return np.concatenate([v, acc], axis=1).ravel()
    return rhs


def geodesic_ricci_values(space: ProductSpace, directions: np.ndarray, t: float) -> np.ndarray:
    """``Ric(gamma'(t), gamma'(t))`` for geodesics leaving the chart origin along ``directions``.

    The geodesic equations are integrated numerically (DOP853) in conformal
    charts, and the Ricci form is evaluated with the chart metric at time ``t``.
    Nonflat factors must stay inside their chart: ``t`` below ``pi/sqrt(k)``
    for spheres.
    """
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    n, d = dirs.shape
    if d != space.total_dim:
        raise ValueError("directions have the wrong dimension")
    curv = np.array([f.curvature for f in space.factors])
    conformal = np.ones(d)
    for (a, b), k in zip(space.blocks, curv):
        if k != 0.0:
            conformal[a:b] = 0.5  # g = 4 delta at the origin
    y0 = np.concatenate([np.zeros((n, d)), dirs * conformal], axis=1).ravel()
    if t == 0:
        y = y0.reshape(n, 2 * d)
    else:
        sol = solve_ivp(_geodesic_rhs(curv, space.blocks, n, d), (0.0, t), y0,
                        method="DOP853", rtol=1e-11, atol=1e-12)
        if not sol.success:
            raise RuntimeError(sol.message)
        y = sol.y[:, -1].reshape(n, 2 * d)
    x, v = y[:, :d], y[:, d:]
    out = np.zeros(n)
    for (a, b), f in zip(space.blocks, space.factors):
        vi = v[:, a:b]
        vv = np.sum(vi * vi, axis=1)
        if f.curvature != 0.0:
            r2 = np.sum(x[:, a:b] ** 2, axis=1)
            vv = vv * 4.0 / (1.0 + f.curvature * r2) ** 2
        out += (f.dim - 1) * f.curvature * vv
    return out


def liouville_histogram_check(space: ProductSpace, t: float, *, samples: int = 400,
                              seed: int = 0, bins: int = 20) -> CheckReport:
    """The law of ``Ric(X, X)`` is the same at time ``t`` as at time 0.

    Directions are uniform on the unit sphere.  The report's margin is minus
    the largest change of any single Ricci-form value (which is what keeps the
    two histograms identical); the histograms over ``[lambda_min, lambda_max]``
    are compared bin by bin.
    """
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((samples, space.total_dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    v0 = geodesic_ricci_values(space, dirs, 0.0)
    vt = geodesic_ricci_values(space, dirs, t)
    spec = ricci_spectrum(space)
    lo, hi = spec.lambda_min, spec.lambda_max
    if hi == lo:
        hi = lo + 1.0
    # interior bin edges are shifted off the data's symmetric points
    edges = np.linspace(lo - 1e-6, hi + 1e-6, bins + 1)
    h0, _ = np.histogram(v0, edges)
    ht, _ = np.histogram(vt, edges)
    drift = float(np.max(np.abs(vt - v0)))
    scale = max(abs(lo), abs(hi), 1.0)
    same = bool(np.array_equal(h0, ht))
    return CheckReport("liouville-histogram", -drift / scale, same and drift / scale <= 1e-8,
                       trials=samples, details={"histogram_0": h0.tolist(),
                                                "histogram_t": ht.tolist()})
