"""Monte Carlo coverage and interval-length studies."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .design import PreparedDesign, RegressionData, hck_feasible, prepare_design
from .dgp import generate
from .exceptions import ManyCovError
from .inference import bootstrap_ci, gaussian_ci
from .regression import fit_partialled
from .rng import Stream
from .variance import ALL_KINDS, EstimatorKind, SingularPolicy, compute_meat, sandwich

REPORT_VERSION = "1.0"
METHODS = ("gaussian", "bootstrap")


@dataclass(frozen=True)
class CellSummary:
    kind: EstimatorKind
    method: str
    coverage: float | None
    avg_length: float | None
    failures: int
    n_valid: int

    def as_dict(self) -> dict:
        return {
            "kind": str(self.kind),
            "method": self.method,
            "coverage": self.coverage,
            "avg_length": self.avg_length,
            "failures": self.failures,
            "n_valid": self.n_valid,
        }


@dataclass(frozen=True)
class SimulationReport:
    """Coverage (over non-failed replications), average length and failure counts."""

    cells: list[CellSummary]
    S: int
    spec: dict
    seed: int
    level: float
    design_summary: dict = field(default_factory=dict)

    def cell(self, kind: EstimatorKind | str, method: str = "gaussian") -> CellSummary:
        kind = EstimatorKind.parse(kind)
        for c in self.cells:
            if c.kind is kind and c.method == method:
                return c
        raise KeyError((str(kind), method))

    def coverage(self, kind, method: str = "gaussian") -> float | None:
        return self.cell(kind, method).coverage

    def as_dict(self) -> dict:
        return {
            "S": self.S,
            "seed": self.seed,
            "level": self.level,
            "spec": dict(self.spec),
            "cells": [c.as_dict() for c in self.cells],
            "design_summary": dict(self.design_summary),
        }

    @classmethod
    def from_dict(cls, d: dict) -> SimulationReport:
        cells = [
            CellSummary(
                EstimatorKind.parse(c["kind"]), c["method"], c["coverage"],
                c["avg_length"], int(c["failures"]), int(c["n_valid"]),
            )
            for c in d["cells"]
        ]
        return cls(cells, int(d["S"]), dict(d["spec"]), int(d["seed"]), float(d["level"]),
                   dict(d.get("design_summary", {})))

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True, allow_nan=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["kind", "method", "coverage", "avg_length", "failures", "n_valid"])
        for c in self.cells:
            writer.writerow([
                str(c.kind), c.method,
                "" if c.coverage is None else repr(c.coverage),
                "" if c.avg_length is None else repr(c.avg_length),
                c.failures, c.n_valid,
            ])
        return buf.getvalue()


@dataclass(frozen=True)
class _RepOutcome:
    # per (kind, method): (covered, length) or None when failed
    results: dict
    n: int
    K_effective: int
    mcal: float
    dropped: int


def _one_replication(
    spec,
    r: int,
    seed: int,
    kinds: tuple[EstimatorKind, ...],
    methods: tuple[str, ...],
    level: float,
    singular: SingularPolicy,
    drop_singletons: bool,
    bootstrap_B: int,
    bootstrap_same_rank: bool,
    fixed: PreparedDesign | None,
    fixed_rows: np.ndarray | None,
) -> _RepOutcome:
    rep_stream = Stream(seed, spec.name, "rep", r)
    failed = {(k, m): None for k in kinds for m in methods}
    if fixed is not None:
        raw = generate(spec, Stream(seed, spec.name), error_stream=rep_stream)
        data = RegressionData(raw.y[fixed_rows], raw.X[fixed_rows], fixed.data.W)
        prep = fixed
    else:
        data = generate(spec, rep_stream)
        try:
            prep = prepare_design(data, drop_singletons=drop_singletons)
        except ManyCovError:
            return _RepOutcome(failed, data.n, -1, math.nan, 0)
        data = prep.data
    rep = prep.rep
    try:
        fit = fit_partialled(data, rep)
    except ManyCovError:
        return _RepOutcome(failed, data.n, rep.K_effective, rep.mcal, int(prep.dropped_rows.size))

    truth = spec.beta
    results = {}
    for kind in kinds:
        for method in methods:
            if method == "gaussian":
                try:
                    omega = sandwich(fit, compute_meat(fit, kind, singular=singular)).omega_mat
                    ci = gaussian_ci(fit.beta_hat, omega, fit.n, level, 0, kind)
                except ManyCovError:
                    results[(kind, method)] = None
                    continue
            else:
                ci = bootstrap_ci(
                    data, fit, kind, bootstrap_B, level, rep_stream.child("bootstrap", str(kind)),
                    singular=singular, require_same_rank=bootstrap_same_rank,
                    drop_singletons=drop_singletons,
                )
            results[(kind, method)] = None if ci.failed else (ci.covers(truth), ci.length)
    return _RepOutcome(results, fit.n, rep.K_effective, rep.mcal, int(prep.dropped_rows.size))


def run_monte_carlo(
    spec,
    S: int,
    estimators: Iterable[EstimatorKind | str] = ALL_KINDS,
    methods: Iterable[str] = ("gaussian",),
    level: float = 0.95,
    seed: int | None = None,
    *,
    threads: int = 1,
    singular: SingularPolicy = "raise",
    drop_singletons: bool = True,
    bootstrap_B: int = 199,
    bootstrap_same_rank: bool = True,
) -> SimulationReport:
    """Repeat generate -> fit -> interval ``S`` times and tabulate coverage.

    Replication ``r`` draws from the stream ``(seed, model, "rep", r)``, so the
    report is identical for any ``threads``. Estimator failures inside a
    replication are counted per cell and never abort the run. With
    ``spec.fixed_design`` the design is drawn once and only errors vary.
    ``drop_singletons`` removes observations with unit nuisance leverage
    before fitting (they carry no information about the coefficient).
    """
    if S < 1:
        raise ValueError("S must be at least 1")
    kinds = tuple(dict.fromkeys(EstimatorKind.parse(k) for k in estimators))
    if not kinds:
        raise ValueError("at least one estimator is required")
    methods = tuple(dict.fromkeys(methods))
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; expected one of {METHODS}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    seed = spec.seed if seed is None else int(seed)

    fixed = fixed_rows = None
    if getattr(spec, "fixed_design", False):
        first = generate(spec, Stream(seed, spec.name), error_stream=Stream(seed, spec.name, "rep", 0))
        fixed = prepare_design(first, drop_singletons=drop_singletons)
        fixed_rows = np.setdiff1d(np.arange(first.n), fixed.dropped_rows)

    def work(r: int) -> _RepOutcome:
        return _one_replication(
            spec, r, seed, kinds, methods, level, singular, drop_singletons,
            bootstrap_B, bootstrap_same_rank, fixed, fixed_rows,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(work, range(S)))
    else:
        outcomes = [work(r) for r in range(S)]

    cells = []
    for kind in kinds:
        for method in methods:
            vals = [o.results.get((kind, method)) for o in outcomes]
            ok = [v for v in vals if v is not None]
            if ok:
                cov = float(np.mean([v[0] for v in ok]))
                length = float(np.mean([v[1] for v in ok]))
            else:
                cov = length = None
            cells.append(CellSummary(kind, method, cov, length, len(vals) - len(ok), len(ok)))

    mcal = np.array([o.mcal for o in outcomes], dtype=np.float64)
    finite = np.isfinite(mcal)
    summary = {
        "mean_n": float(np.mean([o.n for o in outcomes])),
        "mean_K_effective": float(np.mean([o.K_effective for o in outcomes])),
        "mean_M_n": float(mcal[finite].mean()) if finite.any() else None,
        "share_M_n_below_half": float(np.mean([hck_feasible(m) for m in mcal[finite]])) if finite.any() else None,
        "mean_dropped_rows": float(np.mean([o.dropped for o in outcomes])),
        "singular_policy": singular,
        "drop_singletons": drop_singletons,
    }
    return SimulationReport(cells, S, spec.as_dict(), seed, level, summary)
