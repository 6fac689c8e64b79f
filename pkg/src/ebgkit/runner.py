"""Scenario-driven batch runs: bound curves, series, Jacobi suites, asymptotics.

A scenario is a JSON object::

    {
      "name": "default",
      "seed": 20240611,
      "spaces": [{"name": "H2xR2", "factors": [{"dim": 2, "curvature": -1}, ...]}, ...],
      "t_grid": {"start": 0.1, "stop": 10.0, "points": 991},
      "quadrature": {"mode": "exact-reduced", "nodes": 32},
      "jacobi": {"horizon": 5.0, "step": 0.01, "trials": 1000, "p_list": [1, 2, 3, 5]},
      "random_spectra": {"count": 50, "dim": 4, "samples": 512},
      "asymptotics": {"d": 4, "t_min": 50, "t_max": 200, "points": 16, "t_check": 100},
      "outputs": "out"
    }

Every check becomes one report entry ``{name, kind, trials, min_margin, pass,
diagnostic}``.  ``kind`` is ``"proved"`` for inequalities and identities that
hold as theorems, ``"numeric"`` for agreement with a formula, and
``"exploratory"`` for probes without a verdict.  Entries are sorted by name
and serialised with sorted keys, so equal inputs give byte-identical reports.
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import jacobi_engine as je
from .bounds_monotonicity import (additive_gap_check, area_ratio_check, empirical_ratio_probe,
                                  multiplicative_gap_check, scalar_model_crossing)
from .curvature_invariants import (bound_series, ebg_volume_gap_formula, fit_series,
                                   product_invariants, volume_scalar_model_gap_formula)
from .geodesic_ball import (curvature_operator, det_jacobi_closed_form, expansion_chain,
                            factor_weights, liouville_histogram_check, ratio_monotonicity,
                            solve_operator_jacobi)
from .model_spaces import (Direction, ProductSpace, RicciSpectrum, exact_ball_volume,
                           model_ball_volume, ricci_spectrum, scalar_matched_curvature)
from .sn_kernel import (BoundCurve, SphereQuadrature, beam_asymptotics, bg_bound, bound_curve,
                        conjugate_time, ebg_bound, single_axis_spectrum)

__all__ = ["Scenario", "ScenarioError", "Report", "default_scenario", "load_scenario",
           "run_bounds", "run_series", "run_jacobi_lab", "run_asymptotics", "run_verify",
           "write_csv"]


class ScenarioError(ValueError):
    """Raised for malformed scenario files."""


DEFAULT_SPACES = [
    {"name": "H2xR2", "factors": [{"dim": 2, "curvature": -1.0}, {"dim": 2, "curvature": 0.0}]},
    {"name": "H3xR2", "factors": [{"dim": 3, "curvature": -1.0}, {"dim": 2, "curvature": 0.0}]},
    {"name": "S2xR2", "factors": [{"dim": 2, "curvature": 1.0}, {"dim": 2, "curvature": 0.0}]},
    {"name": "R4", "factors": [{"dim": 4, "curvature": 0.0}]},
]


@dataclass
class Scenario:
    name: str
    seed: int
    spaces: list[ProductSpace]
    t_start: float
    t_stop: float
    t_points: int
    quadrature: SphereQuadrature
    jacobi: dict
    random_spectra: dict
    asymptotics: dict
    outputs: str = "out"

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_stop, self.t_points)

    @classmethod
    def from_dict(cls, raw: dict, *, seed: Optional[int] = None) -> "Scenario":
        if not isinstance(raw, dict):
            raise ScenarioError("scenario must be a JSON object")
        base = default_scenario_dict()
        merged = {**base, **raw}
        try:
            spaces = [ProductSpace.from_record(s) for s in merged["spaces"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"invalid space declaration: {exc}") from exc
        if not spaces:
            raise ScenarioError("scenario declares no spaces")
        names = [s.label for s in spaces]
        if len(set(names)) != len(names):
            raise ScenarioError("space names must be unique")
        grid = merged["t_grid"]
        try:
            t_start, t_stop, points = float(grid["start"]), float(grid["stop"]), int(grid["points"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"invalid t_grid: {exc}") from exc
        if t_start < 0 or points < 2 or t_stop <= t_start:
            raise ScenarioError("t_grid needs 0 <= start < stop and points >= 2")
        if seed is None:
            seed = merged.get("seed")
        jac = {**base["jacobi"], **merged.get("jacobi", {})}
        qraw = dict(merged.get("quadrature", {}))
        needs_seed = qraw.get("mode") == "monte-carlo" or int(jac.get("trials", 0)) > 0
        if seed is None and needs_seed:
            raise ScenarioError("a seed is required for Monte Carlo or randomised trials")
        seed = int(seed or 0)
        if not 0 <= seed < 2**64:
            raise ScenarioError("seed must lie in [0, 2^64)")
        qraw.setdefault("seed", seed)
        try:
            quad = SphereQuadrature.from_record(qraw)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"invalid quadrature settings: {exc}") from exc
        return cls(name=str(merged.get("name", "scenario")), seed=seed, spaces=spaces,
                   t_start=t_start, t_stop=t_stop, t_points=points, quadrature=quad,
                   jacobi=jac,
                   random_spectra={**base["random_spectra"], **merged.get("random_spectra", {})},
                   asymptotics={**base["asymptotics"], **merged.get("asymptotics", {})},
                   outputs=str(merged.get("outputs", "out")))


def default_scenario_dict() -> dict:
    return {
        "name": "default",
        "seed": 20240611,
        "spaces": DEFAULT_SPACES,
        "t_grid": {"start": 0.1, "stop": 10.0, "points": 991},
        "quadrature": {"mode": "exact-reduced", "nodes": 32},
        "jacobi": {"horizon": 5.0, "step": 0.01, "trials": 1000, "p_list": [1, 2, 3, 5],
                   "operator_directions": 4},
        "random_spectra": {"count": 50, "dim": 4, "samples": 512, "low": -3.0, "high": 1.0},
        "asymptotics": {"d": 4, "t_min": 50.0, "t_max": 200.0, "points": 16, "t_check": 100.0},
        "outputs": "out",
    }


def default_scenario(seed: Optional[int] = None) -> Scenario:
    return Scenario.from_dict(default_scenario_dict(), seed=seed)


def load_scenario(path, seed: Optional[int] = None) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario {path} is not valid JSON: {exc}") from exc
    return Scenario.from_dict(raw, seed=seed)


# --------------------------------------------------------------------------
# report


def _finite_or_none(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass
class Report:
    entries: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def add(self, name: str, kind: str, min_margin, passed, trials: int = 1,
            diagnostic: str = "", **extra):
        entry = {"name": name, "kind": kind, "trials": int(trials),
                 "min_margin": _finite_or_none(min_margin),
                 "pass": None if passed is None else bool(passed),
                 "diagnostic": diagnostic}
        for key, val in extra.items():
            entry[key] = val
        self.entries[name] = entry

    def add_check(self, name: str, report, kind: str = "proved"):
        self.add(name, kind, report.min_margin, report.passed,
                 getattr(report, "trials", 1), getattr(report, "diagnostic", ""))

    @property
    def failed(self) -> list[str]:
        return [n for n, e in sorted(self.entries.items())
                if e["kind"] == "proved" and e["pass"] is False]

    def to_json(self, scenario: Scenario) -> str:
        doc = {"scenario": scenario.name, "seed": scenario.seed,
               "entries": [self.entries[k] for k in sorted(self.entries)],
               "outputs": {k: self.outputs[k] for k in sorted(self.outputs)},
               "failed": self.failed}
        return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"

    def write(self, out_dir, scenario: Scenario) -> Path:
        path = Path(out_dir) / "report.json"
        path.write_text(self.to_json(scenario), encoding="utf-8")
        return path


# --------------------------------------------------------------------------
# CSV


def _safe_name(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", label)


def write_csv(path, columns: dict[str, np.ndarray]) -> None:
    """RFC 4180 CSV with a header row and 17 significant digits; rejects NaN/inf."""
    names = list(columns)
    data = np.column_stack([np.asarray(columns[n], dtype=float) for n in names])
    if not np.all(np.isfinite(data)):
        bad = [n for n in names if not np.all(np.isfinite(columns[n]))]
        raise ValueError(f"non-finite values in columns {bad}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(names)
        for row in data:
            w.writerow([f"{v:.17g}" for v in row])


def _ensure_dir(out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ScenarioError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise ScenarioError(f"output directory {out} is not writable")
    return out


# --------------------------------------------------------------------------
# bounds


def _positive_tail(curve: BoundCurve) -> BoundCurve:
    keep = curve.times > 0
    if np.all(keep):
        return curve
    pick = lambda a: None if a is None else a[keep]  # noqa: E731
    return BoundCurve(curve.times[keep], curve.ebg[keep], curve.bg[keep], pick(curve.volume),
                      pick(curve.ebg_area), pick(curve.bg_area))


def _space_curve(space: ProductSpace, times: np.ndarray, quad: SphereQuadrature) -> BoundCurve:
    curve = bound_curve(space, times, quad)
    d = space.total_dim
    k = scalar_matched_curvature(d, ricci_spectrum(space).scalar)
    hr = np.array([model_ball_volume(d, k, float(t)) for t in times])
    curve.extra = {"hr": hr}
    for col in ("volume", "ebg", "bg"):
        curve.extra[f"asinh_{col}"] = np.arcsinh(getattr(curve, col))
    curve.extra["asinh_hr"] = np.arcsinh(hr)
    return curve


def _gap_entries(report: Report, prefix: str, curve: BoundCurve, probe: bool = True):
    curve = _positive_tail(curve)
    checks = [("additive-gap", additive_gap_check), ("multiplicative-gap", multiplicative_gap_check),
              ("area-ratio", area_ratio_check)]
    for tag, fn in checks:
        try:
            r = fn(curve)
        except ValueError as exc:
            report.add(f"{prefix}/{tag}", "proved", None, None, diagnostic=f"skipped: {exc}")
            continue
        report.add(f"{prefix}/{tag}", "proved", r.min_margin, r.passed)
    if probe and curve.volume is not None:
        try:
            r = empirical_ratio_probe(curve)
            report.add(f"{prefix}/ebg-volume-ratio-probe", "exploratory", r.min_margin, None,
                       diagnostic=r.diagnostic)
        except ValueError as exc:
            report.add(f"{prefix}/ebg-volume-ratio-probe", "exploratory", None, None,
                       diagnostic=f"skipped: {exc}")


def _ordering_entry(report: Report, prefix: str, curve: BoundCurve):
    scale = max(float(np.max(curve.bg)), np.finfo(float).tiny)
    low = float(np.min(curve.ebg - curve.volume)) / scale
    high = float(np.min(curve.bg - curve.ebg)) / scale
    m = min(low, high)
    report.add(f"{prefix}/ordering", "proved", m, m >= -je.MARGIN_TOL,
               trials=curve.times.size)


def run_bounds(scenario: Scenario, out_dir, report: Optional[Report] = None) -> Report:
    """One CSV per space (t, volume, ebg, bg, hr, asinh columns) plus gap checks."""
    out = _ensure_dir(out_dir)
    report = report or Report()
    times = scenario.times
    for space in scenario.spaces:
        curve = _space_curve(space, times, scenario.quadrature)
        fname = f"{_safe_name(space.label)}.csv"
        write_csv(out / fname, curve.columns())
        report.outputs[space.label] = fname
        prefix = f"bounds/{space.label}"
        _ordering_entry(report, prefix, curve)
        _gap_entries(report, prefix, curve)
    _random_spectra(scenario, report)
    return report


def _random_spectra(scenario: Scenario, report: Report):
    cfg = scenario.random_spectra
    count = int(cfg["count"])
    if count <= 0:
        return
    rng = np.random.default_rng([scenario.seed, 4])
    quad = SphereQuadrature(mode="monte-carlo", samples=int(cfg["samples"]),
                            seed=scenario.seed)
    times = scenario.times[scenario.times > 0]
    worst = {"additive-gap": math.inf, "multiplicative-gap": math.inf, "area-ratio": math.inf}
    skipped = ""
    for _ in range(count):
        spec = RicciSpectrum.from_values(rng.uniform(cfg["low"], cfg["high"], int(cfg["dim"])))
        curve = bound_curve(spec, times, quad)
        for tag, fn in (("additive-gap", additive_gap_check),
                        ("multiplicative-gap", multiplicative_gap_check),
                        ("area-ratio", area_ratio_check)):
            try:
                worst[tag] = min(worst[tag], fn(curve).min_margin)
            except ValueError as exc:
                skipped = f"skipped: {exc}"
    for tag, m in worst.items():
        if skipped:
            report.add(f"random-spectra/{tag}", "proved", None, None, count, skipped)
        else:
            report.add(f"random-spectra/{tag}", "proved", m, m >= -je.MARGIN_TOL, count)


# --------------------------------------------------------------------------
# series


FIT_TIMES = np.linspace(0.01, 0.1, 40)
FIT_RTOL = 1e-4


def _fit_curves(space: ProductSpace, quad: SphereQuadrature) -> dict[str, np.ndarray]:
    spec = ricci_spectrum(space)
    d = space.total_dim
    k = scalar_matched_curvature(d, spec.scalar)
    return {
        "volume": np.array([exact_ball_volume(space, float(t), epsabs=0.0, epsrel=1e-13)
                            for t in FIT_TIMES]),
        "BG": bg_bound(spec, FIT_TIMES),
        "eBG": ebg_bound(spec, FIT_TIMES, quad),
        "H-of-R": np.array([model_ball_volume(d, k, float(t)) for t in FIT_TIMES]),
    }


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b) if b != 0 else abs(a)


def run_series(scenario: Scenario, out_dir, report: Optional[Report] = None) -> Report:
    """Exact small-ball series per space in ``series.json`` and coefficient checks."""
    out = _ensure_dir(out_dir)
    report = report or Report()
    doc = {}
    for space in scenario.spaces:
        d = space.total_dim
        if d < 3:
            report.add(f"series/{space.label}", "proved", None, None,
                       diagnostic="skipped: series checks need d >= 3")
            continue
        inv = product_invariants(space)
        lam = Fraction(ricci_spectrum(space).lambda_min)
        series = {k: bound_series(k, inv, lam) for k in ("volume", "BG", "eBG", "H-of-R")}
        gap_ebg = series["eBG"].c4 - series["volume"].c4
        gap_hr = series["volume"].c4 - series["H-of-R"].c4
        doc[space.label] = {"invariants": inv.to_json(),
                            "series": {k: s.to_json() for k, s in series.items()},
                            "gap_ebg_minus_volume": f"{gap_ebg.numerator}/{gap_ebg.denominator}",
                            "gap_volume_minus_hr": f"{gap_hr.numerator}/{gap_hr.denominator}"}
        prefix = f"series/{space.label}"
        exact_ok = (series["eBG"].c2 == series["volume"].c2 and gap_ebg >= 0
                    and gap_ebg == ebg_volume_gap_formula(inv)
                    and gap_hr == volume_scalar_model_gap_formula(inv))
        report.add(f"{prefix}/exact-identities", "proved", 0.0 if exact_ok else -1.0, exact_ok)
        report.add(f"{prefix}/volume-minus-hr-sign", "exploratory", float(gap_hr), None,
                   diagnostic=f"c4 gap {gap_hr.numerator}/{gap_hr.denominator}")

        worst = 0.0
        for kind, values in _fit_curves(space, scenario.quadrature).items():
            c2, c4 = fit_series(FIT_TIMES, values, d)
            s = series[kind]
            for fitted, exact in ((c2, s.c2), (c4, s.c4)):
                worst = max(worst, _rel(fitted, float(exact)) if exact != 0 else abs(fitted))
        report.add(f"{prefix}/fitted-coefficients", "numeric", FIT_RTOL - worst,
                   worst <= FIT_RTOL, diagnostic=f"max relative error {worst:.3e}")
    path = out / "series.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    report.outputs["series"] = "series.json"
    return report


# --------------------------------------------------------------------------
# Jacobi suites


def run_jacobi_lab(scenario: Scenario, out_dir=None, report: Optional[Report] = None, *,
                   inject_reversed: bool = False) -> Report:
    """Randomised Jacobi-comparison suites.

    With ``inject_reversed`` a pair with ``kappa_1 < kappa_2`` is fed to the
    monotonicity check; the entry must come back skipped, not failed.
    """
    report = report or Report()
    cfg = scenario.jacobi
    trials, seed = int(cfg["trials"]), scenario.seed
    horizon, step = float(cfg["horizon"]), float(cfg["step"])
    p_list = tuple(cfg["p_list"])
    if trials > 0:
        suites = [je.monotonicity_suite(trials, seed, horizon=horizon, step=step),
                  je.late_start_suite(trials, seed + 1, horizon=horizon, step=step),
                  *je.shuffling_suite(trials, seed + 2, p_list, horizon=horizon, step=step),
                  *je.sorting_suite(trials, seed + 3, p_list),
                  *je.total_solution_suite(trials, seed + 4, p_list),
                  je.product_average_suite(max(trials // 5, 1), seed + 5),
                  je.two_impulse_identity_suite(max(trials // 10, 1), seed + 6),
                  je.refinement_suite(max(trials // 30, 1), seed + 7)]
        for r in suites:
            report.add_check(f"jacobi/{r.check}", r)
    if inject_reversed:
        lo, hi = je.KappaSchedule.constant(-1.0), je.KappaSchedule.constant(0.5)
        r = je.verify_monotonicity(lo, hi, horizon, step)
        report.add_check("jacobi/monotonicity-injected-reversed", r)
    _operator_entries(scenario, report)
    return report


def _operator_entries(scenario: Scenario, report: Report):
    count = int(scenario.jacobi.get("operator_directions", 0))
    if count <= 0:
        return
    rng = np.random.default_rng([scenario.seed, 6])
    det_worst, ric_worst, trials = 0.0, math.inf, 0
    for space in scenario.spaces:
        for _ in range(count):
            x = Direction.normalized(rng.standard_normal(space.total_dim))
            op = curvature_operator(space, x, frame_seed=int(rng.integers(2**32)))
            c2 = factor_weights(space, x)
            focus = min((conjugate_time(f.curvature * w) for f, w in zip(space.factors, c2)
                         if f.dim > 1), default=math.inf)
            horizon = min(3.0, 0.95 * focus)
            traj = solve_operator_jacobi(op, horizon, 0.005)
            keep = traj.times > 0
            exact = det_jacobi_closed_form(space, c2, traj.times[keep])
            det_worst = max(det_worst, float(np.max(np.abs(traj.detJ[keep] / exact - 1.0))))
            chain = expansion_chain(traj)
            scale = max(1.0, float(np.max(np.abs(chain.ricci))) / chain.dim)
            ric_worst = min(ric_worst, float(np.min(chain.riccati_margin)) / scale)
            trials += 1
    report.add("operator/det-closed-form", "numeric", 1e-8 - det_worst, det_worst <= 1e-8, trials,
               diagnostic=f"max relative error {det_worst:.3e}")
    report.add("operator/riccati-chain", "proved", ric_worst, ric_worst >= -je.MARGIN_TOL, trials)


# --------------------------------------------------------------------------
# asymptotics


def asymptotic_table(cfg: dict, quad: SphereQuadrature) -> dict[str, np.ndarray]:
    d = int(cfg["d"])
    spec = single_axis_spectrum(d)
    t = np.geomspace(float(cfg["t_min"]), float(cfg["t_max"]), int(cfg["points"]))
    ratio = ebg_bound(spec, t, quad) / bg_bound(spec, t)
    beam = np.array([beam_asymptotics(d, float(s))[1] for s in t])
    return {"t": t, "ebg_over_bg": ratio, "beam_ratio": beam}


def run_asymptotics(scenario: Scenario, out_dir, report: Optional[Report] = None) -> Report:
    """Large-radius decay of eBG/BG for a single negative Ricci eigenvalue."""
    out = _ensure_dir(out_dir)
    report = report or Report()
    cfg = scenario.asymptotics
    d = int(cfg["d"])
    table = asymptotic_table(cfg, scenario.quadrature)
    write_csv(out / "asymptotics.csv", table)
    report.outputs["asymptotics"] = "asymptotics.csv"
    slope = float(np.polyfit(np.log(table["t"]), np.log(table["ebg_over_bg"]), 1)[0])
    target = -(d - 1) / 2
    report.add("asymptotics/slope", "numeric", 0.05 - abs(slope - target),
               abs(slope - target) <= 0.05, diagnostic=f"slope {slope:.6f}, expected {target}")
    spec = single_axis_spectrum(d)
    tc = float(cfg["t_check"])
    q = float(ebg_bound(spec, tc, scenario.quadrature) / bg_bound(spec, tc))
    beam = beam_asymptotics(d, tc)[1]
    err = abs(beam / q - 1.0)
    report.add("asymptotics/beam-ratio", "numeric", 0.1 - err, err <= 0.1,
               diagnostic=f"quadrature {q:.6e}, beam formula {beam:.6e}")
    return report


# --------------------------------------------------------------------------
# verify


def run_verify(scenario: Scenario, out_dir, *, inject_reversed: bool = False) -> Report:
    """Everything above plus the geodesic-ball ratio and Liouville checks."""
    report = run_bounds(scenario, out_dir)
    run_series(scenario, out_dir, report)
    run_jacobi_lab(scenario, out_dir, report, inject_reversed=inject_reversed)
    run_asymptotics(scenario, out_dir, report)
    for space in scenario.spaces:
        d = space.total_dim
        spec = ricci_spectrum(space)
        k_ref = spec.lambda_min / (d - 1)
        # short of every focal point, where the direction integrand loses smoothness
        focus = min(conjugate_time(k_ref), *(conjugate_time(f.curvature) for f in space.factors))
        stop = min(scenario.t_stop, 0.95 * focus)
        grid = np.linspace(0.05, stop, 60)
        for r in ratio_monotonicity(space, k_ref, grid, scenario.quadrature):
            report.add_check(f"ball/{space.label}/{r.check}", r)
        if len(space.factors) > 1:
            r = liouville_histogram_check(space, 2.0, samples=200, seed=scenario.seed % 2**32)
            report.add_check(f"ball/{space.label}/{r.check}", r, kind="numeric")
    # first sign change of vol - H[R], where the scalar model overtakes the volume
    for space in scenario.spaces:
        try:
            root = scalar_model_crossing(space, (1.0, max(scenario.t_stop, 20.0)))
        except ValueError:
            continue
        report.add(f"series/{space.label}/scalar-model-crossing", "exploratory", None, None,
                   diagnostic=f"root {root:.10f}")
    report.write(out_dir, scenario)
    return report
