"""Verification runs over weights x functions x p x grid, and their artifacts.

A run is split into independent cells (one check family for one weight,
function and p); cells may execute concurrently but their rows are merged in
a fixed order, sorted by family, ids, p and then y, so the CSV and JSON
output is byte-identical across runs.

Each row compares a ``value`` against a ``threshold`` through a relation:
``<=`` for normalized residuals, ``<`` / ``>`` for sign conclusions.  Rows
whose precondition fails are kept with a ``skipped`` flag and do not count
in pass rates.
"""
from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import io
import json
import math
import os
import platform
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .calculus import (
    Context,
    PreconditionFailed,
    QFunction,
    RootsUndefined,
    abc_frame,
    abc_frame_extended,
    residual_B_derivative,
    residual_C_derivative,
    residual_E1,
    residual_E2,
    residual_hCB,
    residual_hF,
    residual_quadratic_at_phiM,
    residual_rootF2_system,
)
from .functions import (
    FUNCTION_IDS,
    MEAN_TOL,
    MeanProfile,
    make_function,
    mean_profile,
    synthetic_profile,
)
from .means import (
    ANCHOR_CUTOFF,
    TAIL_RTOL,
    Flag,
    WeightedMean,
    anchor_limit,
    auxiliary_example_check,
    diagnostics,
    log_ratio_second,
    ratio,
    ratio_first_derivative,
    unit_anchor_patch,
)
from .numerics import DEFAULT_BUDGET, INNER_TOL, OUTER_TOL, NumericsError
from .weights import (
    WEIGHT_IDS,
    Anchor,
    InvalidParameter,
    UnknownId,
    Weight,
    make_weight,
    theorem_condition_residual,
)

__all__ = [
    "CHECK_FAMILIES",
    "DEFAULT_TOLERANCES",
    "ConfigInvalid",
    "IoError",
    "Grid",
    "RunConfig",
    "Row",
    "Series",
    "FamilySummary",
    "ConvexityReport",
    "run",
    "default_config",
    "emit_csv",
    "emit_json",
    "emit_svg_plot",
    "report_to_dict",
    "PLOT_QUANTITIES",
    "CSV_COLUMNS",
]

CHECK_FAMILIES = (
    "lemma31",
    "lemma32",
    "lemma33",
    "lemma34",
    "thm_signs",
    "hip_inequality",
    "aux_example",
    "golden_weights",
)

# Relative thresholds.  "-numeric" keys apply to identities whose one side
# is a numerical derivative (outer derivative in the E1 identity, the root
# branches in the hF residuals).
DEFAULT_TOLERANCES = {
    "lemma31": 1e-8,
    "lemma31-numeric": 1e-7,
    "lemma32": 1e-8,
    "lemma33": 1e-7,
    "lemma34": 1e-8,
    "thm_signs": 1e-8,
    "thm_signs-anchor": 1e-4,
    "thm_signs-worked": 1e-6,
    "hip_inequality": 1e-10,
    "hip_inequality-closed": 1e-8,
    "hip_inequality-closed-derivative": 1e-6,
    "golden_weights": 1e-9,
}

ANCHOR_CLUSTER = (1e-2, 3e-2, 1e-1, 3e-1)
AUX_GRID = (0.1, 3.0, 20)
SYNTHETIC_Q = "synthetic-q"
CSV_COLUMNS = ("check_family", "weight_id", "function_id", "p", "y", "value", "threshold", "pass", "flags")
PLOT_QUANTITIES = ("ratio", "log_ratio_d2", "M", "logM")


class ConfigInvalid(ValueError):
    pass


class IoError(OSError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class Grid:
    lo: float = 0.05
    hi: float = 20.0
    points: int = 60
    log_spaced: bool = True

    def values(self) -> np.ndarray:
        if self.log_spaced:
            return np.geomspace(self.lo, self.hi, self.points)
        return np.linspace(self.lo, self.hi, self.points)

    @classmethod
    def parse(cls, text: str) -> "Grid":
        """``lo:hi:n`` or ``lo:hi:n:log`` / ``lo:hi:n:lin``."""
        parts = text.split(":")
        if len(parts) not in (3, 4):
            raise ConfigInvalid(f"grid must be lo:hi:n[:log], got {text!r}")
        try:
            lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise ConfigInvalid(f"bad grid {text!r}") from exc
        log = True
        if len(parts) == 4:
            if parts[3] not in ("log", "lin"):
                raise ConfigInvalid(f"grid spacing must be 'log' or 'lin', got {parts[3]!r}")
            log = parts[3] == "log"
        return cls(lo, hi, n, log)


@dataclass(frozen=True)
class RunConfig:
    """What to verify.

    ``lemma_functions`` / ``lemma_p`` narrow the (costly) lemma families to a
    subset of ``function_ids`` / ``p_values``; ``None`` means all of them.
    ``anchor_cluster`` adds the points ``1`` and ``1 +- {0.01, 0.03, 0.1, 0.3}`` for
    unit-anchored weights.
    """

    weight_ids: tuple = WEIGHT_IDS
    function_ids: tuple = FUNCTION_IDS
    p_values: tuple = (2.0, 3.0, 4.0)
    grid: Grid = Grid()
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    checks: tuple = CHECK_FAMILIES
    lemma_functions: Optional[tuple] = None
    lemma_p: Optional[tuple] = None
    anchor_cluster: bool = True
    threads: Optional[int] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("weight_ids", "function_ids", "p_values", "checks"):
            if not len(getattr(self, name)):
                raise ConfigInvalid(f"{name} must not be empty")
        try:
            for wid in self.weight_ids:
                make_weight(wid)
            for fid in self.function_ids:
                make_function(fid)
        except (UnknownId, InvalidParameter) as exc:
            raise ConfigInvalid(str(exc.args[0] if exc.args else exc)) from exc
        for p in self.p_values:
            if not (isinstance(p, (int, float)) and math.isfinite(p) and p >= 2):
                raise ConfigInvalid(f"p must be a finite number >= 2, got {p!r}")
        g = self.grid
        if not (g.lo > 0 and g.lo < g.hi and g.points >= 2 and math.isfinite(g.hi)):
            raise ConfigInvalid(f"invalid grid {g}")
        unknown = set(self.checks) - set(CHECK_FAMILIES)
        if unknown:
            raise ConfigInvalid(f"unknown check families: {sorted(unknown)}")
        bad_tol = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if bad_tol:
            raise ConfigInvalid(f"unknown tolerance families: {sorted(bad_tol)}")
        for k, v in self.tolerances.items():
            if not (isinstance(v, (int, float)) and v > 0):
                raise ConfigInvalid(f"tolerance {k} must be positive, got {v!r}")
        if self.lemma_functions is not None and not set(self.lemma_functions) <= set(self.function_ids):
            raise ConfigInvalid("lemma_functions must be a subset of function_ids")
        if self.lemma_p is not None and not set(self.lemma_p) <= set(self.p_values):
            raise ConfigInvalid("lemma_p must be a subset of p_values")
        if self.threads is not None and self.threads < 1:
            raise ConfigInvalid("threads must be >= 1")

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["tolerances"] = {k: self.tol(k) for k in sorted(DEFAULT_TOLERANCES)}
        d.pop("threads")
        for k in ("weight_ids", "function_ids", "p_values", "checks", "lemma_functions", "lemma_p"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigInvalid("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigInvalid(f"unknown config keys: {sorted(extra)}")
        kw = dict(data)
        try:
            if "grid" in kw:
                g = kw["grid"]
                kw["grid"] = Grid.parse(g) if isinstance(g, str) else Grid(**g)
            for k in ("weight_ids", "function_ids", "checks", "lemma_functions"):
                if kw.get(k) is not None:
                    kw[k] = tuple(str(v) for v in kw[k])
            for k in ("p_values", "lemma_p"):
                if kw.get(k) is not None:
                    kw[k] = tuple(float(v) for v in kw[k])
            if "tolerances" in kw:
                kw["tolerances"] = {**DEFAULT_TOLERANCES, **{k: float(v) for k, v in kw["tolerances"].items()}}
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigInvalid):
                raise
            raise ConfigInvalid(f"malformed config: {exc}") from exc
        return cls(**kw)


def default_config(**overrides) -> RunConfig:
    """The configuration ``verify`` runs: every check on the default grid.

    The lemma identities are checked for the first two catalogue functions and
    p in {2, 4}; everything else uses all functions and p in {2, 3, 4}.
    """
    base = dict(lemma_functions=("cayley-1", "cayley-2"), lemma_p=(2.0, 4.0))
    base.update(overrides)
    return RunConfig(**base)


# ---------------------------------------------------------------------------
# rows and reports


_RELATIONS = {
    "<=": lambda v, t: v <= t,
    "<": lambda v, t: v < t,
    ">": lambda v, t: v > t,
}


@dataclass(frozen=True)
class Row:
    check_family: str
    weight_id: Optional[str]
    function_id: Optional[str]
    p: Optional[float]
    y: Optional[float]
    quantity: str
    value: Optional[float]
    threshold: float
    relation: str
    passed: bool
    flags: tuple = ()

    @property
    def skipped(self) -> bool:
        return "skipped" in self.flags

    def sort_key(self):
        return (
            CHECK_FAMILIES.index(self.check_family),
            self.weight_id or "",
            self.function_id or "",
            -1.0 if self.p is None else self.p,
            -1.0 if self.y is None else self.y,
            self.quantity,
        )


def _row(family, wid, fid, p, y, quantity, value, threshold, relation, flags=()) -> Row:
    value = None if value is None else float(value)
    ok = value is not None and math.isfinite(value) and _RELATIONS[relation](value, threshold)
    flags = tuple(flags)
    if value is not None and not math.isfinite(value):
        flags += ("nonfinite",)
        value = None
    return Row(family, wid, fid, None if p is None else float(p), None if y is None else float(y),
               quantity, value, float(threshold), relation, bool(ok), flags)


def _skip(family, wid, fid, p, y, quantity, threshold, relation, reason) -> Row:
    return Row(family, wid, fid, None if p is None else float(p), None if y is None else float(y),
               quantity, None, float(threshold), relation, False, ("skipped", reason))


@dataclass(frozen=True)
class Series:
    quantity: str
    label: str
    y: tuple
    values: tuple


@dataclass(frozen=True)
class FamilySummary:
    total: int
    skipped: int
    passed: int
    failed: int
    worst: Optional[Row]

    @property
    def pass_rate(self) -> Optional[float]:
        n = self.total - self.skipped
        return None if n == 0 else self.passed / n


@dataclass(frozen=True)
class ConvexityReport:
    config: dict
    rows: tuple
    summary: dict
    series: tuple
    environment: dict

    @property
    def all_passed(self) -> bool:
        return all(s.failed == 0 for s in self.summary.values())


def _margin(r: Row) -> float:
    # how far inside the threshold a row is; relative for residual rows
    if r.relation == "<=":
        return (r.threshold - r.value) / r.threshold
    if r.relation == "<":
        return r.threshold - r.value
    return r.value - r.threshold


def _summarize(rows: Sequence[Row]) -> dict:
    out = {}
    for fam in CHECK_FAMILIES:
        rs = [r for r in rows if r.check_family == fam]
        if not rs:
            continue
        live = [r for r in rs if not r.skipped]
        failed = [r for r in live if not r.passed]
        worst = None
        if failed:
            worst = failed[0]
        elif live:
            worst = min(live, key=_margin)
        out[fam] = FamilySummary(
            total=len(rs), skipped=len(rs) - len(live), passed=len(live) - len(failed),
            failed=len(failed), worst=worst,
        )
    return out


def _environment() -> dict:
    return {
        "package": __version__,
        "float": "IEEE-754 binary64",
        "eps": float(np.finfo(float).eps),
        "quadrature_budget": DEFAULT_BUDGET,
        "inner_tolerance": dataclasses.asdict(INNER_TOL),
        "outer_tolerance": dataclasses.asdict(OUTER_TOL),
        "mean_tolerance": dataclasses.asdict(MEAN_TOL),
        "anchor_cutoff": ANCHOR_CUTOFF,
        "tail_truncation_rtol": TAIL_RTOL,
        "numpy": np.__version__,
        "python": platform.python_version(),
    }


# ---------------------------------------------------------------------------
# cells


@dataclass(frozen=True)
class _Cell:
    family: str
    weight_id: Optional[str]
    function_id: Optional[str]
    p: Optional[float]
    work: Callable[[], tuple]

    def key(self):
        return (
            CHECK_FAMILIES.index(self.family), self.weight_id or "", self.function_id or "",
            -1.0 if self.p is None else self.p,
        )


class _Profiles:
    """One shared (cached) mean profile per (function, p)."""

    def __init__(self):
        import threading

        self._lock = threading.Lock()
        self._store: dict = {}

    def get(self, fid: str, p: float) -> MeanProfile:
        with self._lock:
            key = (fid, float(p))
            if key not in self._store:
                self._store[key] = mean_profile(make_function(fid), float(p))
            return self._store[key]


def _synthetic_q_context() -> Context:
    q = QFunction(lambda y: 1.0 + y * y, lambda y: 2.0 * y, lambda y: 2.0 + 0.0 * y)
    prof = synthetic_profile(
        lambda y: 2.0 + np.exp(-y), lambda y: -np.exp(-y), lambda y: np.exp(-y), lambda y: -np.exp(-y)
    )
    return Context(make_weight("unit-exp"), prof, q)


def _grid_for(cfg: RunConfig, w: Optional[Weight]) -> np.ndarray:
    ys = cfg.grid.values()
    if cfg.anchor_cluster and w is not None and w.anchor is Anchor.UNIT:
        extra = [1.0] + [1.0 + s * d for d in ANCHOR_CLUSTER for s in (-1.0, 1.0)]
        ys = np.union1d(ys, [v for v in extra if v > 0])
    return np.asarray(ys, dtype=float)


_LEMMA_QUANTITIES = {
    "lemma31": (
        ("E2", lambda c, y: residual_E2(c, y), "lemma31"),
        ("E1", lambda c, y: residual_E1(c, y), "lemma31-numeric"),
        ("rootF2_line1", lambda c, y: residual_rootF2_system(c, y)[0], "lemma31"),
        ("rootF2_line2", lambda c, y: residual_rootF2_system(c, y)[1], "lemma31"),
    ),
    "lemma32": (
        ("B_derivative", lambda c, y: residual_B_derivative(c, y), "lemma32"),
        ("C_derivative", lambda c, y: residual_C_derivative(c, y), "lemma32"),
    ),
    "lemma33": (
        ("hF1", lambda c, y: residual_hF(c, y, 1), "lemma33"),
        ("hF2", lambda c, y: residual_hF(c, y, 2), "lemma33"),
    ),
    "lemma34": (("hCB", lambda c, y: residual_hCB(c, y), "lemma34"),),
}


def _lemma_rows(cfg, family, ctx, ys, wid, fid, p) -> list:
    rows = []
    for y in ys:
        for name, fn, tkey in _LEMMA_QUANTITIES[family]:
            tol = cfg.tol(tkey)
            try:
                res = fn(ctx, float(y))
            except (RootsUndefined, PreconditionFailed) as exc:
                reason = "RootsUndefined" if isinstance(exc, RootsUndefined) else "PreconditionFailed"
                rows.append(_skip(family, wid, fid, p, y, name, tol, "<=", reason))
                continue
            except NumericsError as exc:
                rows.append(_row(family, wid, fid, p, y, name, math.nan, tol, "<=", ("error:" + type(exc).__name__,)))
                continue
            rows.append(_row(family, wid, fid, p, y, name, res.normalized, tol, "<="))
    return rows


def _golden_rows(cfg, w: Weight) -> list:
    """A and E1 against the closed forms, plus sign-only facts.

    ``A`` / ``E1`` rows evaluate the definitions in extended precision;
    ``*_binary64`` rows check the working-precision frame, whose rounding
    floor is set by the largest summand rather than by the golden value.
    """
    fam = "golden_weights"
    tol = cfg.tol(fam)
    const = synthetic_profile(lambda y: 1.0 + 0.0 * y, lambda y: 0.0 * y, lambda y: 0.0 * y)
    ctx = Context(w, const)
    rows = []
    for y in cfg.grid.values():
        y = float(y)
        ext = abc_frame_extended(w, y)
        fr = abc_frame(ctx, y)
        for name, gold in (("A", w.golden_A), ("E1", w.golden_E1), ("E2", w.golden_E2)):
            if gold is None:
                continue
            g = float(gold(y))
            rows.append(_row(fam, w.id, None, None, y, name, abs(getattr(ext, name) - g) / max(1.0, abs(g)),
                             tol, "<="))
            scale = max(1.0, abs(g), fr.A_scale if name == "A" else fr.E1_scale)
            rows.append(_row(fam, w.id, None, None, y, name + "_binary64", abs(getattr(fr, name) - g) / scale,
                             tol, "<="))
        for name, sign in sorted(w.golden_signs.items()):
            rel = ">" if sign > 0 else "<"
            comp = getattr(ext, name)
            if comp == 0.0:
                # the strict sign lies below the smallest double (phi ~ exp(-e^y))
                rows.append(_skip(fam, w.id, None, None, y, name + "_sign", 0.0, rel, "Underflow"))
            else:
                rows.append(_row(fam, w.id, None, None, y, name + "_sign", comp, 0.0, rel))
    return rows


def _hypothesis_rows(cfg, w: Weight) -> list:
    """Weight-only theorem hypotheses: the curvature condition and (origin) the limit at 0."""
    fam = "thm_signs"
    rows = []
    tol = cfg.tol(fam)
    for y in _grid_for(cfg, w):
        f, f1, f2, f3 = (float(v) for v in w.derivatives(float(y)))
        terms = (f1 * f1 * f2, f * f1 * f3, 2.0 * f * f2 * f2)
        val = float(theorem_condition_residual(w, float(y))) / max(1e-300, max(abs(t) for t in terms))
        # equality holds for power weights; rounding may push it just above 0
        rows.append(_row(fam, w.id, None, None, y, "condition_iii", val, tol, "<="))
    if w.family == "origin":
        rows.append(_row(fam, w.id, None, None, None, "origin_ratio_limit", w.origin_ratio_limit, 1.0, "<"))
    return rows


def _thm_rows(cfg, w: Weight, fid, p, prof) -> tuple:
    fam = "thm_signs"
    wm = WeightedMean(w, prof, p=p)
    ys = _grid_for(cfg, w)
    diags = diagnostics(wm, ys)
    rows = []
    tol = cfg.tol(fam)
    for d in diags:
        flags = tuple(sorted(f.value for f in d.flags))
        if Flag.DEGENERATE in d.flags:
            for q in ("ratio_d1", "log_ratio_d2", "quadratic"):
                rows.append(_row(fam, w.id, fid, p, d.y, q, math.nan, 0.0, "<", flags))
            continue
        rows.append(_row(fam, w.id, fid, p, d.y, "ratio_d1", d.ratio_d1, 0.0, "<", flags))
        rows.append(_row(fam, w.id, fid, p, d.y, "log_ratio_d2", d.log_ratio_d2, 0.0, ">", flags))
        if Flag.NEAR_ANCHOR in d.flags:
            # phi vanishes at the anchor and the quadratic with it; the anchor rows cover this point
            rows.append(_skip(fam, w.id, fid, p, d.y, "quadratic", 0.0, "<", "NearAnchor"))
        else:
            rows.append(_row(fam, w.id, fid, p, d.y, "quadratic", d.quadratic, 0.0, "<", flags))
        if Flag.NEAR_ANCHOR not in d.flags:
            agree = abs(d.log_ratio_d2 - d.quotient) / max(1.0, abs(d.quotient))
            rows.append(_row(fam, w.id, fid, p, d.y, "log_ratio_routes", agree, tol, "<=", flags))
        if w.family == "tail-flat":
            if d.h_minus_CB is None:
                rows.append(_skip(fam, w.id, fid, p, d.y, "h_minus_CB", 0.0, "<", "PreconditionFailed"))
            else:
                rows.append(_row(fam, w.id, fid, p, d.y, "h_minus_CB", d.h_minus_CB, 0.0, "<", flags))
                route = d.B * d.h_minus_CB / (d.h * d.h * float(w(d.y)) ** 2)
                agree = abs(route - d.log_ratio_d2) / max(1.0, abs(d.log_ratio_d2))
                rows.append(_row(fam, w.id, fid, p, d.y, "thm55_route", agree, tol, "<=", flags))
        res = residual_quadratic_at_phiM(wm.context(), d.y)
        rows.append(_row(fam, w.id, fid, p, d.y, "quadratic_at_phiM", res.normalized, tol, "<=", flags))
    if w.anchor is Anchor.UNIT:
        rows.extend(_anchor_rows(cfg, wm, fid, p))
    series = (
        Series("ratio", f"{w.id} | {fid} | p={p:g}", tuple(d.y for d in diags), tuple(d.ratio for d in diags)),
        Series("log_ratio_d2", f"{w.id} | {fid} | p={p:g}", tuple(d.y for d in diags),
               tuple(d.log_ratio_d2 for d in diags)),
    )
    return rows, series


def _rel(a, b) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def _anchor_rows(cfg, wm: WeightedMean, fid, p) -> list:
    """Values at the unit anchor against the closed forms, and continuity just outside."""
    fam = "thm_signs"
    w, prof = wm.w, wm.prof
    tol_a = cfg.tol("thm_signs-anchor")
    tol_w = cfg.tol("thm_signs-worked")
    M0, M1 = float(prof.M(1.0)), float(prof.M1(1.0))
    rows = [
        _row(fam, w.id, fid, p, 1.0, "anchor_ratio", _rel(ratio(wm, 1.0), M0), tol_w, "<="),
        _row(fam, w.id, fid, p, 1.0, "anchor_ratio_d1", _rel(ratio_first_derivative(wm, 1.0), 0.5 * M1), tol_w, "<="),
        _row(fam, w.id, fid, p, 1.0, "anchor_log_ratio_d2", _rel(log_ratio_second(wm, 1.0), anchor_limit(wm)),
             tol_w, "<="),
    ]
    patch = unit_anchor_patch(wm)
    ys = np.array([1.0 - 2.0 * ANCHOR_CUTOFF, 1.0 + 2.0 * ANCHOR_CUTOFF])
    outside = diagnostics(wm, ys)
    for d in outside:
        rows.append(_row(fam, w.id, fid, p, d.y, "anchor_continuity_ratio", _rel(d.ratio, float(patch.ratio(d.y))),
                         tol_a, "<="))
        rows.append(_row(fam, w.id, fid, p, d.y, "anchor_continuity_ratio_d1",
                         _rel(d.ratio_d1, float(patch.ratio_d1(d.y))), tol_a, "<="))
        rows.append(_row(fam, w.id, fid, p, d.y, "anchor_continuity_log_ratio_d2",
                         _rel(d.log_ratio_d2, float(patch.log_ratio_d2(d.y))), tol_a, "<="))
    return rows


def _hip_rows(cfg, fid, p, prof) -> tuple:
    fam = "hip_inequality"
    tol = cfg.tol(fam)
    ys = cfg.grid.values()
    M, M1, M2 = (np.asarray(g(ys), dtype=float) for g in (prof.M, prof.M1, prof.M2))
    rows = []
    for i, y in enumerate(ys):
        rows.append(_row(fam, None, fid, p, y, "M", M[i], 0.0, ">"))
        rows.append(_row(fam, None, fid, p, y, "M1", M1[i], 0.0, "<"))
        rows.append(_row(fam, None, fid, p, y, "M2", M2[i], 0.0, ">"))
        rows.append(_row(fam, None, fid, p, y, "hip", (M1[i] ** 2 - M2[i] * M[i]) / (M2[i] * M[i]), tol, "<="))
    f = make_function(fid)
    if f.closed_form_M is not None and f.closed_form_M(p, 1.0) is not None:
        cf = [np.asarray(v, dtype=float) for v in f.closed_form_M(p, ys)[:3]]
        keys = ("hip_inequality-closed", "hip_inequality-closed-derivative", "hip_inequality-closed-derivative")
        for name, got, exact, key in zip(("M_closed", "M1_closed", "M2_closed"), (M, M1, M2), cf, keys):
            for i, y in enumerate(ys):
                rows.append(_row(fam, None, fid, p, y, name, _rel(got[i], exact[i]), cfg.tol(key), "<="))
    label = f"{fid} | p={p:g}"
    with np.errstate(divide="ignore"):
        series = (
            Series("M", label, tuple(float(v) for v in ys), tuple(float(v) for v in M)),
            Series("logM", label, tuple(float(v) for v in ys), tuple(float(v) for v in np.log(M))),
        )
    return rows, series


def _aux_rows(cfg) -> list:
    fam = "aux_example"
    lo, hi, n = AUX_GRID
    rows = []
    for d in auxiliary_example_check(np.linspace(lo, hi, n)):
        rows.append(_row(fam, "tail-doubleexp", "exp-square", None, d.y, "ratio_d1", d.ratio_d1, 0.0, ">"))
        rows.append(_row(fam, "tail-doubleexp", "exp-square", None, d.y, "log_ratio_d2", d.log_ratio_d2, 0.0, ">"))
        rows.append(_row(fam, "tail-doubleexp", "exp-square", None, d.y, "E1", d.E1, 0.0, "<"))
    return rows


def _cells(cfg: RunConfig, profiles: _Profiles) -> list:
    cells = []
    weights = sorted(cfg.weight_ids)
    functions = sorted(cfg.function_ids)
    ps = sorted(float(p) for p in cfg.p_values)
    lemma_fs = functions if cfg.lemma_functions is None else sorted(cfg.lemma_functions)
    lemma_ps = ps if cfg.lemma_p is None else sorted(float(p) for p in cfg.lemma_p)

    def cell(family, wid, fid, p, work):
        cells.append(_Cell(family, wid, fid, p, work))

    for family in ("lemma31", "lemma32", "lemma33", "lemma34"):
        if family not in cfg.checks:
            continue
        for wid in weights:
            w = make_weight(wid)
            for fid in lemma_fs:
                for p in lemma_ps:
                    def work(family=family, w=w, fid=fid, p=p):
                        ctx = Context(w, profiles.get(fid, p))
                        return _lemma_rows(cfg, family, ctx, _grid_for(cfg, w), w.id, fid, p), ()
                    cell(family, wid, fid, p, work)
        # the general-q context is independent of the catalogue selection
        def synth(family=family):
            ctx = _synthetic_q_context()
            return _lemma_rows(cfg, family, ctx, cfg.grid.values(), "unit-exp", SYNTHETIC_Q, None), ()
        cell(family, "unit-exp", SYNTHETIC_Q, None, synth)

    if "thm_signs" in cfg.checks:
        for wid in weights:
            w = make_weight(wid)
            if w.family is None:
                continue
            cell("thm_signs", wid, None, None, lambda w=w: (_hypothesis_rows(cfg, w), ()))
            for fid in functions:
                for p in ps:
                    cell("thm_signs", wid, fid, p,
                         lambda w=w, fid=fid, p=p: _thm_rows(cfg, w, fid, p, profiles.get(fid, p)))

    if "hip_inequality" in cfg.checks:
        for fid in functions:
            for p in ps:
                cell("hip_inequality", None, fid, p, lambda fid=fid, p=p: _hip_rows(cfg, fid, p, profiles.get(fid, p)))

    if "aux_example" in cfg.checks:
        cell("aux_example", "tail-doubleexp", "exp-square", None, lambda: (_aux_rows(cfg), ()))

    if "golden_weights" in cfg.checks:
        for wid in weights:
            cell("golden_weights", wid, None, None, lambda w=make_weight(wid): (_golden_rows(cfg, w), ()))
    return cells


def _thread_count(cfg: RunConfig) -> int:
    try:
        cpus = len(os.sched_getaffinity(0))
    except AttributeError:  # not on every platform
        cpus = os.cpu_count() or 1
    n = cfg.threads or min(4, cpus)
    env = os.environ.get("HARDYMEANS_THREADS")
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError as exc:
            raise ConfigInvalid(f"HARDYMEANS_THREADS must be an integer, got {env!r}") from exc
    return max(1, n)


def run(config: RunConfig, progress: Optional[Callable[[str], None]] = None) -> ConvexityReport:
    """Evaluate every selected check; rows come back in a fixed order."""
    config.validate()
    profiles = _Profiles()
    cells = sorted(_cells(config, profiles), key=_Cell.key)
    n = _thread_count(config)

    def execute(c: _Cell):
        try:
            return c.work()
        except NumericsError as exc:
            row = _row(c.family, c.weight_id, c.function_id, c.p, None, "cell", math.nan, 0.0, "<=",
                       ("error:" + type(exc).__name__,))
            return [row], ()

    if n == 1:
        results = [execute(c) for c in cells]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(execute, cells))  # map keeps submission order
    rows, series = [], []
    for c, (rs, ss) in zip(cells, results):
        if progress is not None:
            progress(f"{c.family} {c.weight_id or '-'} {c.function_id or '-'} {'-' if c.p is None else f'{c.p:g}'}")
        rows.extend(rs)
        series.extend(ss)
    rows.sort(key=Row.sort_key)
    series.sort(key=lambda s: (PLOT_QUANTITIES.index(s.quantity), s.label))
    return ConvexityReport(
        config=config.to_dict(),
        rows=tuple(rows),
        summary=_summarize(rows),
        series=tuple(series),
        environment=_environment(),
    )


# ---------------------------------------------------------------------------
# artifacts


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def _csv_flags(r: Row) -> str:
    return ";".join((r.quantity, "rel=" + r.relation) + r.flags)


def emit_csv(report: ConvexityReport, path) -> None:
    """One line per row; ``flags`` carries the quantity, the relation and any flags."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in report.rows:
        writer.writerow([
            r.check_family, _fmt(r.weight_id), _fmt(r.function_id), _fmt(r.p), _fmt(r.y),
            _fmt(r.value), _fmt(r.threshold), _fmt(r.passed), _csv_flags(r),
        ])
    _write(path, buf.getvalue())


def _row_dict(r: Row) -> dict:
    d = dataclasses.asdict(r)
    d["flags"] = list(r.flags)
    d["pass"] = d.pop("passed")
    return d


def report_to_dict(report: ConvexityReport) -> dict:
    summary = {}
    for fam, s in report.summary.items():
        summary[fam] = {
            "total": s.total, "skipped": s.skipped, "passed": s.passed, "failed": s.failed,
            "pass_rate": s.pass_rate, "worst": None if s.worst is None else _row_dict(s.worst),
        }
    return {
        "config": report.config,
        "environment": report.environment,
        "all_passed": report.all_passed,
        "summary": summary,
        "rows": [_row_dict(r) for r in report.rows],
        "series": [dataclasses.asdict(s) | {"y": list(s.y), "values": list(s.values)} for s in report.series],
    }


def _clean(obj):
    # JSON has no inf/nan; the report never needs them as numbers
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def emit_json(report: ConvexityReport, path) -> None:
    """The report as JSON; floats use the shortest round-trip representation."""
    text = json.dumps(_clean(report_to_dict(report)), indent=1, sort_keys=True, allow_nan=False)
    _write(path, text + "\n")


def _write(path, text: str) -> None:
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2", "#7f7f7f",
            "#bcbd22")


def emit_svg_plot(report: ConvexityReport, quantity: str, path) -> None:
    """Plot ``quantity`` against y (log-x), one polyline per series."""
    if quantity not in PLOT_QUANTITIES:
        raise ValueError(f"quantity must be one of {PLOT_QUANTITIES}")
    series = [s for s in report.series if s.quantity == quantity]
    _write(path, _svg(series, quantity))


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list:
    if not hi > lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


def _svg(series: Iterable[Series], quantity: str) -> str:
    W, H = 760, 460
    left, right, top, bottom = 70, 220, 30, 50
    pw, ph = W - left - right, H - top - bottom
    pts = [(x, v) for s in series for x, v in zip(s.y, s.values) if x > 0 and v is not None and math.isfinite(v)]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
        'font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{left + pw / 2:.1f}" y="18" text-anchor="middle" font-size="13">{quantity} against y</text>',
    ]
    if not pts:
        out.append(f'<text x="{left + pw / 2:.1f}" y="{top + ph / 2:.1f}" text-anchor="middle">no data</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"
    lx = [math.log10(x) for x, _ in pts]
    vs = [v for _, v in pts]
    x0, x1 = min(lx), max(lx)
    y0, y1 = min(vs), max(vs)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def X(x):
        return left + (math.log10(x) - x0) / (x1 - x0) * pw

    def Y(v):
        return top + (1.0 - (v - y0) / (y1 - y0)) * ph

    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>')
    for d in range(math.ceil(x0), math.floor(x1) + 1):
        xx = left + (d - x0) / (x1 - x0) * pw
        out.append(f'<line x1="{xx:.2f}" y1="{top}" x2="{xx:.2f}" y2="{top + ph}" stroke="#ddd"/>')
        out.append(f'<text x="{xx:.2f}" y="{top + ph + 16}" text-anchor="middle">1e{d}</text>')
    for t in _nice_ticks(y0, y1):
        yy = Y(t)
        out.append(f'<line x1="{left}" y1="{yy:.2f}" x2="{left + pw}" y2="{yy:.2f}" stroke="#eee"/>')
        out.append(f'<text x="{left - 6}" y="{yy + 4:.2f}" text-anchor="end">{t:.4g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{H - 12}" text-anchor="middle">y (log scale)</text>')
    for k, s in enumerate(series):
        color = _PALETTE[k % len(_PALETTE)]
        path = [f"{X(x):.2f},{Y(v):.2f}" for x, v in zip(s.y, s.values)
                if x > 0 and v is not None and math.isfinite(v)]
        if path:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.4" points="{" ".join(path)}"/>')
        ly = top + 12 + 14 * k
        if ly < top + ph:
            out.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 28}" y2="{ly - 4}" '
                       f'stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{left + pw + 32}" y="{ly}">{_escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
