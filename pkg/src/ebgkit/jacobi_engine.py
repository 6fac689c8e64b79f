"""Scalar Jacobi equations ``j'' = kappa(t) j`` with impulsive coefficients.

A :class:`KappaSchedule` is a piecewise-constant level plus Dirac impulses.
Solutions start from ``j(0) = 0, j'(0) = 1`` and stick at zero after their
first interior zero.  Across an impulse of weight ``a`` at time ``s`` the
solution is continuous and ``j'`` jumps by ``a j(s)``.

On each cell where the level is constant the solver takes classical RK4 steps
(or, with ``method="exact"``, the exact constant-coefficient propagator).
Many schedules are solved at once on the union of their breakpoints.

The checks at the bottom of the module exercise the monotonicity lemma, the
pairwise and many-trajectory shuffling results, the "constant is best"
comparison of total solutions and the product property of the averaged
schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
import itertools
import math
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "KappaSchedule",
    "JacobiSolution",
    "JacobiBatch",
    "ScheduleFamily",
    "CheckReport",
    "solve_jacobi",
    "solve_jacobi_batch",
    "two_impulse_solution",
    "merge_minmax",
    "average_schedule",
    "sort_family",
    "is_monotone_family",
    "tot_functional",
    "tot_curve",
    "verify_monotonicity",
    "verify_late_start",
    "verify_shuffling",
    "verify_sorting",
    "verify_total_solution",
    "sum_coefficient_identity",
    "product_average_check",
    "refinement_deficits",
    "random_schedule",
    "random_ordered_pair",
    "random_monotone_family",
    "random_shuffle",
    "exact_two_impulse_gap",
    "monotonicity_suite",
    "late_start_suite",
    "shuffling_suite",
    "sorting_suite",
    "total_solution_suite",
    "product_average_suite",
    "two_impulse_identity_suite",
    "refinement_suite",
]

MARGIN_TOL = 1e-9
ROOT_TOL = 1e-12
IMPULSE_RANGE = 3.0
LEVEL_RANGE = 4.0
_TIME_EPS = 1e-12


# --------------------------------------------------------------------------
# schedules


def _pairs(items, what: str) -> tuple[tuple[float, float], ...]:
    out = []
    for t, v in items:
        t, v = float(t), float(v)
        if not (math.isfinite(t) and math.isfinite(v)):
            raise ValueError(f"{what} entries must be finite, got ({t!r}, {v!r})")
        out.append((t, v))
    return tuple(out)


@dataclass(frozen=True)
class KappaSchedule:
    """``kappa(t) = level(t) + sum_i w_i delta(t - s_i)``.

    ``levels`` lists ``(t_start, level)`` cells; each level holds from its
    start to the next start, the first cell starts at 0.  ``impulses`` lists
    ``(time, weight)`` with strictly increasing positive times.  The stored
    form is canonical: equal neighbouring levels are merged and zero-weight
    impulses dropped, so equal functions compare equal.
    """

    levels: tuple[tuple[float, float], ...] = ((0.0, 0.0),)
    impulses: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        levels = _pairs(self.levels, "smooth level")
        impulses = _pairs(self.impulses, "impulse")
        if not levels or levels[0][0] != 0.0:
            raise ValueError("the first smooth cell must start at t = 0")
        starts = [t for t, _ in levels]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("smooth cell starts must be strictly increasing")
        times = [t for t, _ in impulses]
        if times and times[0] <= 0.0:
            raise ValueError("impulse times must be strictly positive")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("impulse times must be strictly increasing")
        merged = [levels[0]]
        for t, v in levels[1:]:
            if v != merged[-1][1]:
                merged.append((t, v))
        object.__setattr__(self, "levels", tuple(merged))
        object.__setattr__(self, "impulses", tuple((t, w) for t, w in impulses if w != 0.0))

    @classmethod
    def constant(cls, level: float) -> "KappaSchedule":
        return cls(((0.0, level),))

    @classmethod
    def impulsive(cls, *impulses: tuple[float, float]) -> "KappaSchedule":
        return cls(((0.0, 0.0),), tuple(impulses))

    @classmethod
    def from_samples(cls, times: Sequence[float], values: Sequence[float],
                     impulses: Iterable[tuple[float, float]] = ()) -> "KappaSchedule":
        """Cells ``[times[i], times[i+1])`` carrying ``values[i]``; ``times[0]`` must be 0."""
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.shape != values.shape:
            raise ValueError("times and values must have the same length")
        if np.any(np.isnan(values)):
            raise ValueError("sampled smooth part contains NaN")
        return cls(tuple(zip(times.tolist(), values.tolist())), tuple(impulses))

    @classmethod
    def from_record(cls, record: dict) -> "KappaSchedule":
        smooth = record.get("smooth") or [(0.0, 0.0)]
        return cls(tuple(tuple(p) for p in smooth),
                   tuple(tuple(p) for p in record.get("impulses", ())))

    def to_record(self) -> dict:
        return {"smooth": [list(p) for p in self.levels],
                "impulses": [list(p) for p in self.impulses]}

    @property
    def cell_starts(self) -> np.ndarray:
        return np.array([t for t, _ in self.levels])

    @property
    def cell_levels(self) -> np.ndarray:
        return np.array([v for _, v in self.levels])

    def level_at(self, t):
        """Smooth level at ``t`` (right-continuous at cell edges)."""
        idx = np.searchsorted(self.cell_starts, np.asarray(t, dtype=float), side="right") - 1
        out = self.cell_levels[np.maximum(idx, 0)]
        return float(out) if np.ndim(out) == 0 else out

    def impulse_weight(self, t: float) -> float:
        for s, w in self.impulses:
            if s == t:
                return w
        return 0.0

    def breakpoints(self) -> list[float]:
        return [t for t, _ in self.levels[1:]] + [t for t, _ in self.impulses]

    def dominates(self, other: "KappaSchedule", *, start: float = 0.0) -> bool:
        """``self >= other`` as measures on ``[start, inf)``."""
        edges = sorted(set([start] + [t for t, _ in self.levels if t > start]
                           + [t for t, _ in other.levels if t > start]))
        if np.any(self.level_at(edges) < other.level_at(edges)):
            return False
        times = {t for t, _ in self.impulses} | {t for t, _ in other.impulses}
        return all(self.impulse_weight(t) >= other.impulse_weight(t)
                   for t in times if t >= start)


def _union_edges(schedules: Sequence[KappaSchedule]) -> list[float]:
    return sorted({t for s in schedules for t, _ in s.levels})


def _level_table(schedules: Sequence[KappaSchedule]) -> tuple[list[float], np.ndarray]:
    edges = _union_edges(schedules)
    table = np.array([s.level_at(edges) for s in schedules]).reshape(len(schedules), -1)
    return edges, table


def merge_minmax(k1: KappaSchedule, k2: KappaSchedule) -> tuple[KappaSchedule, KappaSchedule]:
    """Pointwise max and min of two schedules.

    Smooth parts are compared cell by cell on the common refinement; atoms are
    compared time by time (a missing atom has weight 0).
    """
    edges, table = _level_table((k1, k2))
    hi = np.max(table, axis=0)
    lo = np.min(table, axis=0)
    times = sorted({t for t, _ in k1.impulses} | {t for t, _ in k2.impulses})
    w1 = [k1.impulse_weight(t) for t in times]
    w2 = [k2.impulse_weight(t) for t in times]
    kmax = KappaSchedule(tuple(zip(edges, hi.tolist())),
                         tuple((t, max(a, b)) for t, a, b in zip(times, w1, w2)))
    kmin = KappaSchedule(tuple(zip(edges, lo.tolist())),
                         tuple((t, min(a, b)) for t, a, b in zip(times, w1, w2)))
    return kmax, kmin


def average_schedule(schedules: Sequence[KappaSchedule],
                     weights: Optional[Sequence[float]] = None) -> KappaSchedule:
    """Weighted average ``sum_i w_i kappa_i`` (uniform weights by default)."""
    n = len(schedules)
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    edges, table = _level_table(schedules)
    levels = w @ table
    times = sorted({t for s in schedules for t, _ in s.impulses})
    imps = tuple((t, float(sum(wi * s.impulse_weight(t) for wi, s in zip(w, schedules))))
                 for t in times)
    return KappaSchedule(tuple(zip(edges, levels.tolist())), imps)


# --------------------------------------------------------------------------
# solver


@dataclass
class JacobiSolution:
    """One sampled trajectory.  ``jprime`` holds right limits at impulse times."""

    times: np.ndarray
    j: np.ndarray
    jprime: np.ndarray
    first_zero: Optional[float] = None
    diagnostics: tuple[str, ...] = ()

    @property
    def stuck(self) -> bool:
        return self.first_zero is not None

    def value_at(self, s: float) -> float:
        idx = int(np.argmin(np.abs(self.times - s)))
        if abs(self.times[idx] - s) > _TIME_EPS * max(1.0, abs(s)):
            raise ValueError(f"t = {s} is not a sample time of this solution")
        return float(self.j[idx])


@dataclass
class JacobiBatch:
    """Trajectories of several schedules on a shared output grid."""

    times: np.ndarray
    j: np.ndarray
    jprime: np.ndarray
    first_zero: np.ndarray
    diagnostics: list[tuple[str, ...]] = field(default_factory=list)

    def __len__(self) -> int:
        return self.j.shape[0]

    def __getitem__(self, i: int) -> JacobiSolution:
        fz = self.first_zero[i]
        return JacobiSolution(self.times, self.j[i], self.jprime[i],
                              None if np.isnan(fz) else float(fz), self.diagnostics[i])


def _propagator(kappa: np.ndarray, h, method: str) -> tuple[np.ndarray, np.ndarray]:
    """``(c, s)`` with ``j(h) = c j + s p`` and ``p(h) = c p + kappa s j``."""
    if method == "rk4":
        x = h * h * kappa
        return 1.0 + x / 2.0 + x * x / 24.0, h * (1.0 + x / 6.0)
    x = h * h * kappa
    c = np.empty(np.broadcast(kappa, h).shape)
    s = np.empty_like(c)
    x = np.broadcast_to(x, c.shape)
    hb = np.broadcast_to(h, c.shape)
    small = np.abs(x) < 1e-4
    xs, hs = x[small], hb[small]
    c[small] = 1.0 + xs / 2.0 + xs * xs / 24.0 + xs**3 / 720.0
    s[small] = hs * (1.0 + xs / 6.0 + xs * xs / 120.0 + xs**3 / 5040.0)
    pos = ~small & (x > 0)
    r = np.sqrt(x[pos])
    c[pos] = np.cosh(r)
    s[pos] = hb[pos] * np.sinh(r) / r
    neg = ~small & (x < 0)
    r = np.sqrt(-x[neg])
    c[neg] = np.cos(r)
    s[neg] = hb[neg] * np.sin(r) / r
    return c, s


def _zero_in_step(j, p, kappa, h, method) -> np.ndarray:
    # j > 0 at the left end, <= 0 at h: bisect the step polynomial
    lo = np.zeros_like(j)
    hi = np.full_like(j, h)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        c, s = _propagator(kappa, mid, method)
        pos = c * j + s * p > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
        if np.max(hi - lo) <= ROOT_TOL:
            break
    return hi


def _output_grid(start: float, horizon: float, step: float,
                 sample_times: Iterable[float]) -> np.ndarray:
    n = max(1, int(math.ceil((horizon - start) / step - 1e-9)))
    grid = np.linspace(start, horizon, n + 1)
    extra = [t for t in sample_times if start <= t <= horizon]
    if extra:
        grid = np.unique(np.concatenate([grid, extra]))
    return grid


def solve_jacobi_batch(schedules: Sequence[KappaSchedule], horizon: float, step: float, *,
                       start: float = 0.0, initial: Optional[tuple] = None,
                       sample_times: Iterable[float] = (), method: str = "rk4") -> JacobiBatch:
    """Solve every schedule on a common output grid from ``start`` to ``horizon``.

    ``initial`` is ``(j0, p0)`` (scalars or per-schedule arrays); the default
    is the standard ``(0, 1)``.  Impulses exactly at ``start`` are not applied:
    the initial state is taken as the right limit there.
    """
    if horizon <= start:
        raise ValueError("horizon must exceed the start time")
    if step <= 0:
        raise ValueError("step must be positive")
    if step > horizon - start:
        raise ValueError("step exceeds the integration range")
    if method not in ("rk4", "exact"):
        raise ValueError(f"unknown method {method!r}")
    m = len(schedules)
    if m == 0:
        raise ValueError("no schedules to solve")
    for sch in schedules:
        if np.any(np.isnan(sch.cell_levels)):
            raise ValueError("smooth part contains NaN")

    out_t = _output_grid(start, horizon, step, sample_times)
    breaks = {t for s in schedules for t in s.breakpoints() if start < t < horizon}
    nodes = np.unique(np.concatenate([out_t, np.fromiter(breaks, float, len(breaks))]))
    # split any node gap longer than the step (only possible with extra samples)
    widths = np.diff(nodes)
    n_sub = np.maximum(1, np.ceil(widths / step - 1e-9).astype(int))
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    kappa = np.array([s.level_at(mids) for s in schedules]).reshape(m, -1)

    node_index = {float(t): i for i, t in enumerate(nodes)}
    kicks: dict[int, list[tuple[int, float]]] = {}
    for mi, sch in enumerate(schedules):
        for t, w in sch.impulses:
            if start < t <= horizon:
                kicks.setdefault(node_index[t], []).append((mi, w))
    out_index = np.searchsorted(nodes, out_t)

    if initial is None:
        j = np.zeros(m)
        p = np.ones(m)
    else:
        j = np.broadcast_to(np.asarray(initial[0], dtype=float), (m,)).copy()
        p = np.broadcast_to(np.asarray(initial[1], dtype=float), (m,)).copy()
        if np.any(j < 0):
            raise ValueError("initial j must be nonnegative")
    first_zero = np.full(m, np.nan)
    alive = ~((j == 0) & (p <= 0))
    first_zero[~alive] = start
    j[~alive] = 0.0
    p[~alive] = 0.0

    js = np.empty((m, out_t.size))
    ps = np.empty((m, out_t.size))
    oi = 0
    if out_index[0] == 0:
        js[:, 0], ps[:, 0] = j, p
        oi = 1
    for k in range(nodes.size - 1):
        h_full = widths[k]
        h = h_full / n_sub[k]
        c, s = _propagator(kappa[:, k], h, method)
        for sub in range(n_sub[k]):
            j_new = c * j + s * p
            p_new = c * p + s * kappa[:, k] * j
            hit = alive & (j_new <= 0.0)
            if np.any(hit):
                tau = _zero_in_step(j[hit], p[hit], kappa[hit, k], h, method)
                first_zero[hit] = nodes[k] + sub * h + tau
                j_new[hit] = 0.0
                p_new[hit] = 0.0
                alive &= ~hit
            j, p = j_new, p_new
        for mi, w in kicks.get(k + 1, ()):
            p[mi] += w * j[mi]
        if oi < out_t.size and out_index[oi] == k + 1:
            js[:, oi], ps[:, oi] = j, p
            oi += 1

    diagnostics = []
    for mi, sch in enumerate(schedules):
        notes = []
        fz = first_zero[mi]
        if not np.isnan(fz):
            for t, _ in sch.impulses:
                if abs(t - fz) <= 1e-9:
                    notes.append(f"impulse at t={t:.12g} coincides with the zero crossing; "
                                 "the stick rule takes precedence")
        diagnostics.append(tuple(notes))
    return JacobiBatch(out_t, js, ps, first_zero, diagnostics)


def solve_jacobi(schedule: KappaSchedule, horizon: float, step: float, **kwargs) -> JacobiSolution:
    """Solve one schedule; see :func:`solve_jacobi_batch` for keyword options."""
    return solve_jacobi_batch([schedule], horizon, step, **kwargs)[0]


def two_impulse_solution(a, b, t):
    """Closed-form ``j(t)`` for ``kappa = a delta(t-1) + b delta(t-2)``, with the stick rule.

    Works with floats or :class:`fractions.Fraction` (exact arithmetic).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t <= 1:
        return t
    # on [1, 2]: j = t + a (t - 1), zero where (1 + a) t = a
    if a < -1 and a / (1 + a) <= 2:
        t0 = a / (1 + a)
        if t >= t0:
            return 0 * t
    if t <= 2:
        return t + a * (t - 1)
    j2 = 2 + a
    slope = 1 + a + b * j2
    if slope < 0:
        t0 = 2 + j2 / (-slope)
        if t >= t0:
            return 0 * t
    return t + a * (t - 1) + b * j2 * (t - 2)


# --------------------------------------------------------------------------
# families and shuffles


@dataclass(frozen=True)
class ScheduleFamily:
    """Weighted schedules plus an optional step-function shuffle.

    ``shuffle`` entries ``(s_k, perm_k)`` mean that on ``(s_k, s_{k+1}]``
    trajectory ``i`` follows member ``perm_k[i]``.  Before the first entry (and
    at ``t = 0``) every trajectory follows its own member.
    """

    members: tuple[KappaSchedule, ...]
    weights: Optional[tuple[float, ...]] = None
    shuffle: tuple[tuple[float, tuple[int, ...]], ...] = ()

    def __post_init__(self):
        members = tuple(self.members)
        n = len(members)
        if n == 0:
            raise ValueError("a family needs at least one member")
        w = (1.0 / n,) * n if self.weights is None else tuple(float(x) for x in self.weights)
        if len(w) != n or any(x < 0 for x in w) or abs(math.fsum(w) - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative, one per member, and sum to 1")
        shuffle = tuple((float(t), tuple(int(i) for i in perm)) for t, perm in self.shuffle)
        times = [t for t, _ in shuffle]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("shuffle times must be strictly increasing")
        for t, perm in shuffle:
            if sorted(perm) != list(range(n)):
                raise ValueError(f"shuffle at t={t} is not a permutation of {n} members")
            if t == 0.0 and perm != tuple(range(n)):
                raise ValueError("the shuffle at t = 0 must be the identity")
            if t < 0:
                raise ValueError("shuffle times must be nonnegative")
            if any(w[i] != w[perm[i]] for i in range(n)):
                raise ValueError("shuffles must preserve the member weights")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "shuffle", shuffle)

    @property
    def size(self) -> int:
        return len(self.members)

    def unshuffled(self) -> "ScheduleFamily":
        return ScheduleFamily(self.members, self.weights)

    def with_shuffle(self, shuffle) -> "ScheduleFamily":
        return ScheduleFamily(self.members, self.weights, tuple(shuffle))

    def realized(self) -> tuple[KappaSchedule, ...]:
        """The schedule each trajectory actually follows under the shuffle."""
        if not self.shuffle:
            return self.members
        n = self.size
        spans = [(0.0, self.shuffle[0][0], tuple(range(n)))]
        for k, (t, perm) in enumerate(self.shuffle):
            stop = self.shuffle[k + 1][0] if k + 1 < len(self.shuffle) else math.inf
            spans.append((t, stop, perm))
        out = []
        for i in range(n):
            levels: list[tuple[float, float]] = []
            imps: list[tuple[float, float]] = []
            for a, b, perm in spans:
                if b <= a:
                    continue
                src = self.members[perm[i]]
                levels.append((a, src.level_at(a)))
                levels += [(t, v) for t, v in src.levels if a < t < b]
                # impulses on (a, b]; the first span also owns t in (0, b]
                imps += [(t, w) for t, w in src.impulses if a < t <= b]
            out.append(KappaSchedule(tuple(levels), tuple(imps)))
        return tuple(out)


def is_monotone_family(members: Sequence[KappaSchedule]) -> bool:
    """Whether the members are totally ordered as measures (a monotone family)."""
    for a, b in itertools.combinations(members, 2):
        if not (a.dominates(b) or b.dominates(a)):
            return False
    return True


def sort_family(family: ScheduleFamily) -> ScheduleFamily:
    """Reorder coefficients so member ``i`` follows the ``i``-th largest at every time.

    Built from pairwise :func:`merge_minmax` exchanges (odd-even transposition
    sort), so it is a composition of shuffles.  Needs uniform weights, since
    only then is every pointwise permutation measure preserving.
    """
    if len(set(family.weights)) > 1:
        raise ValueError("sorting a family requires uniform weights")
    members = list(family.realized())
    n = len(members)
    for rnd in range(n):
        for i in range(rnd % 2, n - 1, 2):
            members[i], members[i + 1] = merge_minmax(members[i], members[i + 1])
    return ScheduleFamily(tuple(members), family.weights)


def tot_curve(family: ScheduleFamily, p: float, horizon: float, step: float, *,
              method: str = "rk4") -> tuple[np.ndarray, np.ndarray]:
    """``(times, Tot(t, p))`` with ``Tot = sum_i w_i j_i(t)^p``."""
    if p < 1 or not math.isfinite(p):
        raise ValueError("p must satisfy 1 <= p < inf")
    batch = solve_jacobi_batch(family.realized(), horizon, step, method=method)
    w = np.asarray(family.weights)
    return batch.times, w @ batch.j**p


def tot_functional(family: ScheduleFamily, s: float, p: float, *,
                   horizon: Optional[float] = None, step: float = 0.01,
                   method: str = "rk4") -> float:
    """Total solution ``Tot(s, p) = sum_i w_i j_i(s)^p``."""
    horizon = s if horizon is None else horizon
    if s > horizon or s < 0:
        raise ValueError("s must lie within the solved horizon")
    if p < 1 or not math.isfinite(p):
        raise ValueError("p must satisfy 1 <= p < inf")
    if s == 0:
        return 0.0
    batch = solve_jacobi_batch(family.realized(), horizon, min(step, horizon),
                               sample_times=(s,), method=method)
    idx = int(np.argmin(np.abs(batch.times - s)))
    return float(np.asarray(family.weights) @ batch.j[:, idx] ** p)


# --------------------------------------------------------------------------
# checks


@dataclass
class CheckReport:
    """Outcome of one check.

    ``min_margin`` is the smallest margin divided by its curve scale, so the
    check passes when it is at least ``-MARGIN_TOL``.  ``passed`` is ``None``
    for skipped or exploratory checks.
    """

    check: str
    min_margin: float
    passed: Optional[bool]
    trials: int = 1
    diagnostic: str = ""
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"check": self.check, "min_margin": self.min_margin, "pass": self.passed,
                "trials": self.trials, "diagnostic": self.diagnostic}

    @classmethod
    def combine(cls, check: str, reports: Sequence["CheckReport"]) -> "CheckReport":
        ran = [r for r in reports if r.passed is not None]
        skipped = len(reports) - len(ran)
        diag = f"{skipped} trial(s) skipped" if skipped else ""
        if not ran:
            return cls(check, math.nan, None, len(reports), diag or "no trials")
        margin = min(r.min_margin for r in ran)
        return cls(check, margin, all(r.passed for r in ran), len(reports), diag)


def _relative_margin(diff: np.ndarray, scale: float) -> float:
    scale = max(scale, np.finfo(float).tiny)
    return float(np.min(diff) / scale)


def _report(check: str, diff, scale, trials=1, **details) -> CheckReport:
    margin = _relative_margin(np.asarray(diff), scale)
    return CheckReport(check, margin, margin >= -MARGIN_TOL, trials, details=details)


def verify_monotonicity(k1: KappaSchedule, k2: KappaSchedule, horizon: float, step: float, *,
                        method: str = "rk4") -> CheckReport:
    """``kappa_1 >= kappa_2`` everywhere implies ``j_1 >= j_2`` everywhere."""
    if not k1.dominates(k2):
        return CheckReport("monotonicity", math.nan, None,
                           diagnostic="precondition not met: kappa_1 >= kappa_2 fails")
    b = solve_jacobi_batch([k1, k2], horizon, step, method=method)
    return _report("monotonicity", b.j[0] - b.j[1], float(np.max(b.j[0])))


def verify_late_start(k1: KappaSchedule, k2: KappaSchedule, start: float,
                      state1: tuple[float, float], state2: tuple[float, float],
                      horizon: float, step: float, *, method: str = "rk4") -> CheckReport:
    """Monotonicity from a later time: ordered states and coefficients stay ordered."""
    (j1, p1), (j2, p2) = state1, state2
    ordered_state = j1 >= j2 >= 0 and (j2 == 0 or p1 * j2 >= p2 * j1)
    if not (ordered_state and k1.dominates(k2, start=start)):
        return CheckReport("monotonicity-late-start", math.nan, None,
                           diagnostic="precondition not met at the start time")
    b = solve_jacobi_batch([k1, k2], horizon, step, start=start,
                           initial=([j1, j2], [p1, p2]), method=method)
    return _report("monotonicity-late-start", b.j[0] - b.j[1], float(np.max(b.j[0])))


def _eras(j1, j2, jmin) -> np.ndarray:
    z1, z2, zm = j1 <= 0, j2 <= 0, jmin <= 0
    era = np.zeros(j1.shape, dtype=int)
    era[zm] = 1
    era[zm & (z1 | z2)] = 2
    era[zm & z1 & z2] = 3
    return era


def verify_shuffling(k1: KappaSchedule, k2: KappaSchedule, p: float, horizon: float,
                     step: float, *, method: str = "rk4") -> CheckReport:
    """``j_max^p + j_min^p >= j_1^p + j_2^p`` on the whole grid.

    The report's details hold the smallest relative margin in each era of the
    argument: all positive, ``j_min`` stuck, one of ``j_1, j_2`` stuck too,
    all three stuck.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    kmax, kmin = merge_minmax(k1, k2)
    b = solve_jacobi_batch([kmax, kmin, k1, k2], horizon, step, method=method)
    jmax, jmin, j1, j2 = b.j
    lhs = jmax**p + jmin**p
    rhs = j1**p + j2**p
    scale = float(max(np.max(lhs), np.max(rhs)))
    diff = lhs - rhs
    era = _eras(j1, j2, jmin)
    per_era = {}
    for e in range(4):
        sel = era == e
        if np.any(sel):
            per_era[e] = _relative_margin(diff[sel], scale)
    # ordering of the shuffled pair around the originals
    duck = np.minimum(jmax - np.maximum(j1, j2), np.minimum(j1, j2) - jmin)
    rep = _report(f"shuffling-p{p:g}", diff, scale, eras=per_era,
                  ordering=_relative_margin(duck, float(np.max(jmax))))
    return rep


def verify_sorting(family: ScheduleFamily, p: float, horizon: float, step: float, *,
                   method: str = "rk4") -> CheckReport:
    """Sorted family maximises ``sum_i j_i^p`` on the grid."""
    sorted_family = sort_family(family)
    b = solve_jacobi_batch(sorted_family.members + family.realized(), horizon, step,
                           method=method)
    n = family.size
    lhs = (b.j[:n] ** p).sum(axis=0)
    rhs = (b.j[n:] ** p).sum(axis=0)
    return _report(f"sorting-p{p:g}", lhs - rhs, float(max(lhs.max(), rhs.max())))


def verify_total_solution(family: ScheduleFamily, p: float, horizon: float, step: float, *,
                          method: str = "rk4") -> CheckReport:
    """``Tot(s, p, F_0) >= Tot(s, p, F_sigma)`` at every grid time for a monotone family."""
    if not is_monotone_family(family.members):
        return CheckReport(f"total-solution-p{p:g}", math.nan, None,
                           diagnostic="precondition not met: family is not monotone")
    base = family.unshuffled()
    b = solve_jacobi_batch(base.members + family.realized(), horizon, step, method=method)
    n = family.size
    w = np.asarray(family.weights)
    t0 = w @ b.j[:n] ** p
    ts = w @ b.j[n:] ** p
    return _report(f"total-solution-p{p:g}", t0 - ts, float(max(t0.max(), ts.max())))


def sum_coefficient_identity(k1: KappaSchedule, k2: KappaSchedule, horizon: float,
                             step: float, *, method: str = "rk4") -> float:
    """Largest mismatch in the coefficient of ``j_1 + j_2`` (and of the max/min pair).

    ``(j_1'' + j_2'')/(j_1 + j_2)`` is compared with
    ``(k_1 + k_2)/2 + (k_1 - k_2)/2 (j_1 - j_2)/(j_1 + j_2)`` on grid points
    where all four solutions are positive.  Grid points at cell edges are
    skipped, since the level is ambiguous there.
    """
    kmax, kmin = merge_minmax(k1, k2)
    b = solve_jacobi_batch([k1, k2, kmax, kmin], horizon, step, method=method)
    t = b.times
    edges = set(k1.breakpoints()) | set(k2.breakpoints())
    keep = np.all(b.j > 0, axis=0) & np.array([x not in edges for x in t])
    worst = 0.0
    for a, c, ja, jc in ((k1, k2, b.j[0], b.j[1]), (kmax, kmin, b.j[2], b.j[3])):
        ka, kc = a.level_at(t), c.level_at(t)
        s = ja + jc
        lhs = (ka * ja + kc * jc) / np.where(keep, s, 1.0)
        rhs = (ka + kc) / 2 + (ka - kc) / 2 * (ja - jc) / np.where(keep, s, 1.0)
        if np.any(keep):
            worst = max(worst, float(np.max(np.abs(lhs - rhs)[keep])))
    return worst


def product_average_check(family: ScheduleFamily, horizon: float, step: float, *,
                          method: str = "rk4") -> CheckReport:
    """The averaged schedule beats the weighted geometric mean of the members.

    With ``kappa_av = sum_i w_i kappa_i`` this checks
    ``j_av >= prod_i j_i^{w_i}``, i.e. ``j_av^n >= prod_i j_i`` for ``n``
    equally weighted members.  The margin is ``1 - prod_i j_i^{w_i} / j_av``,
    taken over grid points where every member is positive.
    """
    members = family.realized()
    avg = average_schedule(members, family.weights)
    b = solve_jacobi_batch((avg,) + tuple(members), horizon, step, method=method)
    jav, js = b.j[0], b.j[1:]
    keep = np.all(js > 0, axis=0)
    keep[0] = False
    if not np.any(keep):
        return CheckReport("product-average", math.nan, None,
                           diagnostic="no grid point with all members positive")
    w = np.asarray(family.weights)
    log_gm = w @ np.log(js[:, keep])
    with np.errstate(divide="ignore"):
        log_av = np.log(jav[keep])
    margin = 1.0 - np.exp(log_gm - log_av)
    return CheckReport("product-average", float(np.min(margin)),
                       bool(np.min(margin) >= -MARGIN_TOL))


def refinement_deficits(family: ScheduleFamily, jump_times: Sequence[float],
                        perms: Sequence[Sequence[int]], p: float, horizon: float,
                        levels: Sequence[int], step: float, *,
                        method: str = "rk4") -> tuple[float, list[float]]:
    """Deficits of step approximations to a shuffle with given jump times.

    The target shuffle switches to ``perms[k]`` at ``jump_times[k]``.  The
    approximation with ``N`` cells samples it at the right end of each cell
    ``((i-1) h, i h]``, ``h = horizon / N``, and holds that permutation on the
    cell.  Returns the exact deficit ``Tot(F_0) - Tot(F_sigma)`` at ``horizon``
    and the deficits for each ``N`` in ``levels``.
    """
    n = family.size
    ident = tuple(range(n))

    def perm_at(t: float) -> tuple[int, ...]:
        out = ident
        for s, perm in zip(jump_times, perms):
            if s < t:
                out = tuple(perm)
        return out

    def deficit(shuffle) -> float:
        shuffled = family.with_shuffle(shuffle)
        b = solve_jacobi_batch(family.members + shuffled.realized(), horizon, step,
                               method=method)
        w = np.asarray(family.weights)
        return float(w @ b.j[:n, -1] ** p - w @ b.j[n:, -1] ** p)

    exact = deficit([(s, tuple(perm)) for s, perm in zip(jump_times, perms)])
    approx = []
    for N in levels:
        h = horizon / N
        shuffle = [(i * h, perm_at((i + 1) * h)) for i in range(1, N)]
        first = perm_at(h)
        if first != ident:
            raise ValueError("the first cell must be unshuffled")
        approx.append(deficit(shuffle))
    return exact, approx


# --------------------------------------------------------------------------
# random generators (impulse weights U[-3, 3], levels U[-4, 4])


def random_schedule(rng: np.random.Generator, horizon: float, *, cells: int = 3,
                    impulses: int = 2, smooth: bool = True) -> KappaSchedule:
    """A random schedule with ``cells`` smooth cells and ``impulses`` atoms in ``(0, horizon)``."""
    if smooth and cells > 0:
        starts = np.concatenate([[0.0], np.sort(rng.uniform(0.0, horizon, cells - 1))])
        lv = rng.uniform(-LEVEL_RANGE, LEVEL_RANGE, cells)
    else:
        starts, lv = np.array([0.0]), np.array([0.0])
    times = np.sort(rng.uniform(0.0, horizon, impulses)) if impulses else np.empty(0)
    weights = rng.uniform(-IMPULSE_RANGE, IMPULSE_RANGE, times.size)
    return KappaSchedule(tuple(zip(starts.tolist(), lv.tolist())),
                         tuple(zip(times.tolist(), weights.tolist())))


def random_ordered_pair(rng: np.random.Generator, horizon: float, **kwargs
                        ) -> tuple[KappaSchedule, KappaSchedule]:
    """``(k1, k2)`` with ``k1 >= k2``: ``k1`` adds nonnegative level and impulse increments."""
    k2 = random_schedule(rng, horizon, **kwargs)
    bump = random_schedule(rng, horizon, **kwargs)
    levels = [(t, abs(v) * rng.uniform(0.0, 0.5)) for t, v in bump.levels]
    bump = KappaSchedule(tuple(levels), tuple((t, abs(w)) for t, w in bump.impulses))
    edges = _union_edges((k2, bump))
    lv = k2.level_at(edges) + bump.level_at(edges)
    times = sorted({t for t, _ in k2.impulses} | {t for t, _ in bump.impulses})
    imps = tuple((t, k2.impulse_weight(t) + bump.impulse_weight(t)) for t in times)
    return KappaSchedule(tuple(zip(edges, np.atleast_1d(lv).tolist())), imps), k2


def random_monotone_family(rng: np.random.Generator, n: int, horizon: float, *,
                           constant: bool = False) -> ScheduleFamily:
    """Ordered offsets ``c_1 > ... > c_n`` plus one shared random schedule.

    Every pair differs by a constant, so the family is monotone.
    """
    offsets = np.sort(rng.uniform(-LEVEL_RANGE, LEVEL_RANGE, n))[::-1]
    shared = (KappaSchedule() if constant
              else random_schedule(rng, horizon, cells=3, impulses=2))
    members = []
    for c in offsets:
        members.append(KappaSchedule(tuple((t, v + c) for t, v in shared.levels),
                                     shared.impulses))
    return ScheduleFamily(tuple(members))


def random_shuffle(rng: np.random.Generator, n: int, horizon: float, cells: int
                   ) -> tuple[tuple[float, tuple[int, ...]], ...]:
    """Uniform random permutations on the cells ``((i-1) h, i h]``, identity on the first."""
    h = horizon / cells
    return tuple((i * h, tuple(int(x) for x in rng.permutation(n))) for i in range(1, cells))


def exact_two_impulse_gap(a: Fraction, b: Fraction, A: Fraction, B: Fraction, t: Fraction):
    """``j_AB + j_ab - j_Ab - j_aB`` at ``t`` in exact arithmetic."""
    return (two_impulse_solution(A, B, t) + two_impulse_solution(a, b, t)
            - two_impulse_solution(A, b, t) - two_impulse_solution(a, B, t))


# --------------------------------------------------------------------------
# randomized suites; each trial draws from default_rng([seed, trial])

SUITE_CHUNK = 64


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial])


def _solve_groups(groups: Sequence[Sequence[KappaSchedule]], horizon: float, step: float,
                  method: str) -> list[np.ndarray]:
    """Solve each group of schedules; groups are batched in chunks on a shared grid."""
    out: list[np.ndarray] = []
    for start in range(0, len(groups), SUITE_CHUNK):
        chunk = groups[start:start + SUITE_CHUNK]
        flat = [s for g in chunk for s in g]
        b = solve_jacobi_batch(flat, horizon, step, method=method)
        pos = 0
        for g in chunk:
            out.append(b.j[pos:pos + len(g)])
            pos += len(g)
    return out


def _suite_report(check: str, margins: list[float], skipped: int = 0) -> CheckReport:
    diag = f"{skipped} trial(s) skipped: precondition not met" if skipped else ""
    if not margins:
        return CheckReport(check, math.nan, None, skipped, diag or "no trials")
    m = float(min(margins))
    return CheckReport(check, m, m >= -MARGIN_TOL, len(margins) + skipped, diag)


def monotonicity_suite(trials: int, seed: int, *, horizon: float = 5.0, step: float = 0.01,
                       method: str = "rk4") -> CheckReport:
    """Random ordered pairs with mixed impulsive and piecewise-constant parts."""
    pairs = [random_ordered_pair(_trial_rng(seed, i), horizon) for i in range(trials)]
    margins = []
    for j in _solve_groups(pairs, horizon, step, method):
        margins.append(_relative_margin(j[0] - j[1], float(np.max(j[0]))))
    return _suite_report("monotonicity", margins)


def late_start_suite(trials: int, seed: int, *, horizon: float = 5.0, step: float = 0.01,
                     method: str = "rk4") -> CheckReport:
    """Ordered states at a start time ``T`` with ordered coefficients after ``T``.

    ``T`` is drawn from multiples of 1/4 in ``[1/2, horizon/2]`` so trials
    sharing a start are solved together.
    """
    by_start: dict[float, list] = {}
    starts = np.arange(0.5, horizon / 2 + 1e-9, 0.25)
    for i in range(trials):
        rng = _trial_rng(seed, i)
        k1, k2 = random_ordered_pair(rng, horizon)
        start = float(rng.choice(starts))
        j2 = float(rng.uniform(0.1, 2.0))
        j1 = j2 + float(rng.uniform(0.0, 1.0))
        p2 = float(rng.uniform(-2.0, 2.0))
        # p1/j1 >= p2/j2
        p1 = j1 * (p2 / j2 + float(rng.uniform(0.0, 1.0)))
        by_start.setdefault(start, []).append((k1, k2, j1, p1, j2, p2))
    margins, skipped = [], 0
    for start in sorted(by_start):
        cases = [c for c in by_start[start] if c[0].dominates(c[1], start=start)]
        skipped += len(by_start[start]) - len(cases)
        if not cases:
            continue
        b = solve_jacobi_batch([s for c in cases for s in c[:2]], horizon, step, start=start,
                               initial=([x for c in cases for x in (c[2], c[4])],
                                        [x for c in cases for x in (c[3], c[5])]),
                               method=method)
        for k in range(len(cases)):
            j1, j2 = b.j[2 * k], b.j[2 * k + 1]
            margins.append(_relative_margin(j1 - j2, float(np.max(j1))))
    return _suite_report("monotonicity-late-start", margins, skipped)


def shuffling_suite(trials: int, seed: int, p_list: Sequence[float] = (1, 2, 3, 5), *,
                    horizon: float = 5.0, step: float = 0.01, method: str = "rk4"
                    ) -> list[CheckReport]:
    """Pairwise shuffling for every ``p``; details count how often each era occurred."""
    groups = []
    for i in range(trials):
        rng = _trial_rng(seed, i)
        k1 = random_schedule(rng, horizon)
        k2 = random_schedule(rng, horizon)
        groups.append((*merge_minmax(k1, k2), k1, k2))
    sols = _solve_groups(groups, horizon, step, method)
    reports = []
    for p in p_list:
        margins = []
        era_margin = {e: math.inf for e in range(4)}
        for jmax, jmin, j1, j2 in sols:
            lhs, rhs = jmax**p + jmin**p, j1**p + j2**p
            scale = float(max(lhs.max(), rhs.max()))
            diff = lhs - rhs
            margins.append(_relative_margin(diff, scale))
            era = _eras(j1, j2, jmin)
            for e in np.unique(era):
                era_margin[int(e)] = min(era_margin[int(e)],
                                         _relative_margin(diff[era == e], scale))
        rep = _suite_report(f"shuffling-p{p:g}", margins)
        rep.details["eras"] = {e: v for e, v in era_margin.items() if math.isfinite(v)}
        reports.append(rep)
    return reports


def sorting_suite(trials: int, seed: int, p_list: Sequence[float] = (1, 2, 5), *,
                  sizes: Sequence[int] = (3, 4, 5), horizon: float = 4.0, step: float = 0.01,
                  method: str = "rk4") -> list[CheckReport]:
    """Random families of a few members: the sorted family maximises ``sum j_i^p``."""
    groups, sizes_used = [], []
    for i in range(trials):
        rng = _trial_rng(seed, i)
        n = int(sizes[i % len(sizes)])
        fam = ScheduleFamily(tuple(random_schedule(rng, horizon) for _ in range(n)))
        groups.append(sort_family(fam).members + fam.members)
        sizes_used.append(n)
    sols = _solve_groups(groups, horizon, step, method)
    reports = []
    for p in p_list:
        margins = []
        for n, j in zip(sizes_used, sols):
            lhs = (j[:n] ** p).sum(axis=0)
            rhs = (j[n:] ** p).sum(axis=0)
            margins.append(_relative_margin(lhs - rhs, float(max(lhs.max(), rhs.max()))))
        reports.append(_suite_report(f"sorting-p{p:g}", margins))
    return reports


def total_solution_suite(trials: int, seed: int, p_list: Sequence[float] = (1, 2, 3, 5), *,
                         max_members: int = 8, max_cells: int = 16, horizon: float = 3.0,
                         step: float = 0.01, method: str = "rk4") -> list[CheckReport]:
    """Monotone families (n <= 8) against random step shuffles on N <= 16 uniform cells."""
    groups, sizes_used, weights = [], [], []
    for i in range(trials):
        rng = _trial_rng(seed, i)
        n = int(rng.integers(2, max_members + 1))
        cells = int(rng.integers(2, max_cells + 1))
        fam = random_monotone_family(rng, n, horizon, constant=bool(i % 2))
        shuffled = fam.with_shuffle(random_shuffle(rng, n, horizon, cells))
        groups.append(fam.members + shuffled.realized())
        sizes_used.append(n)
        weights.append(np.asarray(fam.weights))
    sols = _solve_groups(groups, horizon, step, method)
    reports = []
    for p in p_list:
        margins = []
        for n, w, j in zip(sizes_used, weights, sols):
            t0, ts = w @ j[:n] ** p, w @ j[n:] ** p
            margins.append(_relative_margin(t0 - ts, float(max(t0.max(), ts.max()))))
        reports.append(_suite_report(f"total-solution-p{p:g}", margins))
    return reports


def product_average_suite(trials: int, seed: int, *, members: int = 4, horizon: float = 2.0,
                          step: float = 0.01, method: str = "rk4") -> CheckReport:
    """Random constant families: ``j_av^n >= prod_i j_i`` while all members are positive."""
    margins = []
    for i in range(trials):
        rng = _trial_rng(seed, i)
        fam = ScheduleFamily(tuple(KappaSchedule.constant(float(v))
                                   for v in rng.uniform(-LEVEL_RANGE, LEVEL_RANGE, members)))
        rep = product_average_check(fam, horizon, step, method=method)
        if rep.passed is not None:
            margins.append(rep.min_margin)
    return _suite_report("product-average", margins, trials - len(margins))


def two_impulse_identity_suite(trials: int, seed: int) -> CheckReport:
    """``j_AB + j_ab - j_Ab - j_aB = (A - a)(B - b)(t - 2)`` in exact rationals, pre-zero.

    Coefficients are drawn from ``[-1/2, 3]`` in steps of 1/8, which keeps all
    four trajectories positive on ``[0, 5]``.  Returns the largest absolute
    mismatch as ``-min_margin`` (0 when every identity holds exactly).
    """
    rng = np.random.default_rng(seed)
    worst = Fraction(0)
    for _ in range(trials):
        a, b, A, B = (Fraction(int(x), 8) for x in rng.integers(-4, 25, 4))
        for t in (Fraction(1, 2), Fraction(3, 2), Fraction(2), Fraction(5, 2), Fraction(5)):
            gap = exact_two_impulse_gap(a, b, A, B, t)
            expected = (A - a) * (B - b) * (t - 2) if t >= 2 else Fraction(0)
            worst = max(worst, abs(gap - expected))
    return CheckReport("two-impulse-identity", 0.0 - float(worst), worst == 0, trials)


def refinement_suite(trials: int, seed: int, *, p: float = 2.0, horizon: float = 2.0,
                     levels: Sequence[int] = (8, 16, 32, 64, 128), step: float = 0.01,
                     method: str = "rk4") -> CheckReport:
    """Step approximations of a one-switch shuffle approach its deficit monotonically.

    Each trial takes a monotone family and a shuffle that switches to a random
    permutation at a random time.  Under dyadic refinement the cell holding the
    switch shrinks, and the distance from the approximate deficit to the exact
    one must not grow.  The margin is the smallest decrease of that distance
    relative to the exact deficit's scale.
    """
    margins = []
    for i in range(trials):
        rng = _trial_rng(seed, i)
        n = int(rng.integers(2, 5))
        fam = random_monotone_family(rng, n, horizon, constant=bool(i % 2))
        switch = float(rng.uniform(horizon / min(levels) + 1e-6, horizon * 0.95))
        perm = tuple(int(x) for x in rng.permutation(n))
        exact, approx = refinement_deficits(fam, (switch,), (perm,), p, horizon, levels, step,
                                            method=method)
        err = np.abs(np.asarray(approx) - exact)
        scale = max(abs(exact), float(err.max()), np.finfo(float).tiny)
        margins.append(float(np.min(err[:-1] - err[1:]) / scale))
    return _suite_report("shuffle-refinement", margins)
