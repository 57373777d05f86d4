"""Command-line front end: ``manycov {regress,diagnose,simulate}``.

Exit codes: 0 success (an infeasible estimator is reported in its row),
2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .design import (
    DEFAULT_MAX_N,
    RegressionData,
    leverage_diagnostics,
    prepare_design,
)
from .dgp import Model1Spec, PanelSpec, PlmSpec
from .exceptions import (
    CollinearityError,
    DesignError,
    DesignTooLargeError,
    HCKInfeasibleError,
    ManyCovError,
)
from .inference import bootstrap_ci, gaussian_ci, p_value, t_statistic
from .regression import fit_partialled
from .simulation import REPORT_VERSION, run_monte_carlo
from .variance import ALL_KINDS, EstimatorKind, compute_meat, sandwich

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
MISSING_TOKENS = {"", "na", "nan", "null", "."}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


@dataclass
class ParsedCsv:
    data: RegressionData
    w_names: list[str]
    x_names: list[str]
    rows_read: int
    rows_dropped_missing: int


@dataclass
class CliConfig:
    subcommand: str
    input: str | None = None
    y: str | None = None
    x: list[str] = field(default_factory=list)
    w: list[str] = field(default_factory=list)
    factor: list[str] = field(default_factory=list)
    interact: list[str] = field(default_factory=list)
    estimators: list[EstimatorKind] = field(default_factory=lambda: list(ALL_KINDS))
    level: float = 0.95
    bootstrap_b: int = 0
    seed: int = 0
    format: str = "text"
    memory_cap: int = DEFAULT_MAX_N
    hck_singular: str = "raise"
    drop_singletons: bool = False
    intercept: bool | None = None  # None: add a constant only when factors are absorbed
    threads: int = 1

    def validate(self) -> None:
        if not 0.0 < self.level < 1.0:
            raise UsageError(f"--level must lie in (0, 1), got {self.level}")
        if self.subcommand in ("regress", "diagnose"):
            if not self.input:
                raise UsageError("--input is required")
            if not self.y:
                raise UsageError("exactly one --y column is required")
            if not self.x:
                raise UsageError("at least one --x column is required")
            roles = [self.y, *self.x, *self.w, *self.factor]
            if len(set(roles)) != len(roles):
                raise UsageError("y, x, w and factor columns must be disjoint")
        if self.bootstrap_b and self.bootstrap_b < 100:
            raise UsageError("--bootstrap-b must be 0 (off) or at least 100")


def _split_list(value: str | None) -> list[str]:
    if not value:
        return []
    return [v.strip() for v in value.split(",") if v.strip()]


def _parse_estimators(value: str | None) -> list[EstimatorKind]:
    names = _split_list(value)
    if not names or names == ["all"]:
        return list(ALL_KINDS)
    try:
        return list(dict.fromkeys(EstimatorKind.parse(n) for n in names))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _is_missing(cell: str | None) -> bool:
    return cell is None or cell.strip().lower() in MISSING_TOKENS


def _dummies(labels: list[str], name: str) -> tuple[np.ndarray, list[str]]:
    """Indicator columns for every observed level but the first (reference)."""
    levels = list(dict.fromkeys(labels))
    codes = np.array([levels.index(v) for v in labels]) if labels else np.empty(0, int)
    mat = (codes[:, None] == np.arange(1, len(levels))[None, :]).astype(np.float64)
    return mat, [f"{name}={lvl}" for lvl in levels[1:]]


def parse_csv(
    path: str | Path,
    y: str,
    x: list[str],
    w: list[str] = (),
    factors: list[str] = (),
    interactions: list[str] = (),
    intercept: bool = False,
) -> ParsedCsv:
    """Read an RFC-4180 CSV (header row, UTF-8) into regression arrays.

    Rows with a missing value in any used column are dropped. Each factor is
    expanded to one dummy per observed level except the first; ``"a:b"``
    interactions are products of the two factors' dummies. With ``intercept``
    a constant column ``_const`` leads ``W``; reference-level coding needs it
    for the dummies to span the full set of level indicators.
    """
    interactions = list(interactions)
    pairs = []
    for spec in interactions:
        parts = spec.split(":")
        if len(parts) != 2 or not all(parts):
            raise UsageError(f"interaction {spec!r} must have the form colA:colB")
        pairs.append(tuple(parts))
    factor_cols = list(dict.fromkeys([*factors, *(c for p in pairs for c in p)]))
    numeric = [y, *x, *w]
    used = list(dict.fromkeys([*numeric, *factor_cols]))
    try:
        handle = open(path, newline="", encoding="utf-8-sig")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from None
    with handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        absent = [c for c in used if c not in header]
        if absent:
            raise DataError(f"columns not found in {path}: {', '.join(absent)}")
        values: dict[str, list] = {c: [] for c in used}
        rows_read = dropped = 0
        for line_no, row in enumerate(reader, start=2):
            rows_read += 1
            if any(_is_missing(row.get(c)) for c in used):
                dropped += 1
                continue
            for c in numeric:
                try:
                    values[c].append(float(row[c]))
                except ValueError:
                    raise DataError(
                        f"non-numeric value {row[c]!r} in column {c!r} at line {line_no}"
                    ) from None
            for c in factor_cols:
                if c not in numeric:
                    values[c].append(row[c].strip())
    n = rows_read - dropped
    if n == 0:
        raise DataError("no complete rows remain after dropping missing values")

    blocks = [np.ones((n, 1))] if intercept else []
    names = ["_const"] if intercept else []
    if w:
        blocks.append(np.column_stack([values[c] for c in w]))
        names.extend(w)
    factor_dummies = {}
    for c in factor_cols:
        labels = [str(v) for v in values[c]]
        if len(set(labels)) == n and n > 1:
            raise DataError(f"factor {c!r} is unit-identifying ({n} levels for {n} rows)")
        factor_dummies[c] = _dummies(labels, c)
    for c in factors:
        mat, nm = factor_dummies[c]
        blocks.append(mat)
        names.extend(nm)
    for a, b in pairs:
        ma, na = factor_dummies[a]
        mb, nb = factor_dummies[b]
        for i, ni in enumerate(na):
            for j, nj in enumerate(nb):
                col = ma[:, i] * mb[:, j]
                if col.any():
                    blocks.append(col[:, None])
                    names.append(f"{ni}:{nj}")
    W = np.column_stack(blocks) if blocks else np.zeros((n, 0))
    try:
        data = RegressionData(
            np.asarray(values[y]), np.column_stack([values[c] for c in x]), W
        )
    except DesignError as exc:
        raise DataError(str(exc)) from None
    return ParsedCsv(data, names, list(x), rows_read, dropped)


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def _fmt(v, width: int = 12) -> str:
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return "-".rjust(width)
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).rjust(width)
    if isinstance(v, (int, np.integer)):
        return str(int(v)).rjust(width)
    return f"{float(v):.6g}".rjust(width)


def _diagnostics_block(prep, parsed: ParsedCsv | None) -> dict:
    diag = leverage_diagnostics(prep.rep).as_dict()
    diag["d"] = prep.data.d
    diag["dropped_columns"] = list(prep.prune.dropped_columns)
    if parsed is not None:
        diag["dropped_column_names"] = [parsed.w_names[i] for i in prep.prune.dropped_columns]
        diag["rows_read"] = parsed.rows_read
        diag["rows_dropped_missing"] = parsed.rows_dropped_missing
    diag["rows_dropped_unit_leverage"] = [int(i) for i in prep.dropped_rows]
    diag["varah_bound"] = _num(diag["varah_bound"])
    return diag


def regress(data: RegressionData, cfg: CliConfig, parsed: ParsedCsv | None = None) -> dict:
    """Run every requested estimator on one data set; returns the report dict."""
    prep = prepare_design(data, max_n=cfg.memory_cap, drop_singletons=cfg.drop_singletons)
    fit = fit_partialled(prep.data, prep.rep)
    x_names = parsed.x_names if parsed else [f"x{j}" for j in range(fit.d)]
    rows = []
    for kind in cfg.estimators:
        try:
            meat = compute_meat(fit, kind, singular=cfg.hck_singular)
            omega = sandwich(fit, meat).omega_mat
            note = ""
            if kind is EstimatorKind.HCK and meat.aux.get("minnorm"):
                note = f"minimum-norm solve (M_n={prep.rep.mcal:.6g})"
            if not meat.psd:
                note = (note + "; " if note else "") + "meat not PSD"
        except HCKInfeasibleError as exc:
            omega, note = None, f"infeasible (M_n={exc.mcal:.6g})"
        except ManyCovError as exc:
            omega, note = None, str(exc)
        for j in range(fit.d):
            row = {
                "estimator": str(kind),
                "coef": x_names[j],
                "beta_hat": float(fit.beta_hat[j]),
                "se": None, "t": None, "p": None,
                "ci_lower": None, "ci_upper": None, "ci_length": None,
                "boot_lower": None, "boot_upper": None, "boot_length": None,
                "note": note,
            }
            if omega is not None:
                om = float(omega[j, j])
                ci = gaussian_ci(fit.beta_hat, omega, fit.n, cfg.level, j, kind)
                if ci.failed:
                    row["note"] = ci.reason
                else:
                    t = t_statistic(fit.beta_hat[j], 0.0, om, fit.n)
                    row.update(se=math.sqrt(om / fit.n), t=t, p=p_value(t),
                               ci_lower=ci.lower, ci_upper=ci.upper, ci_length=ci.length)
                if cfg.bootstrap_b:
                    bci = bootstrap_ci(
                        prep.data, fit, kind, cfg.bootstrap_b, cfg.level, cfg.seed,
                        coord=j, singular=cfg.hck_singular,
                        drop_singletons=cfg.drop_singletons, threads=cfg.threads,
                    )
                    if bci.failed:
                        row["note"] = (row["note"] + "; " if row["note"] else "") + "bootstrap: " + bci.reason
                    else:
                        row.update(boot_lower=bci.lower, boot_upper=bci.upper, boot_length=bci.length)
            rows.append(row)
    return {"results": rows, "diagnostics": _diagnostics_block(prep, parsed)}


def _config_echo(cfg: CliConfig) -> dict:
    echo = {
        k: v for k, v in vars(cfg).items()
        if k not in ("threads", "out", "config") and not k.startswith("_")
    }
    echo["estimators"] = [str(k) for k in cfg.estimators]
    return echo


def _envelope(command: str, cfg: CliConfig, results, diagnostics) -> dict:
    return {
        "version": REPORT_VERSION,
        "command": command,
        "config_echo": _config_echo(cfg),
        "results": results,
        "diagnostics": diagnostics,
    }


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def render_regress(report: dict, fmt: str) -> str:
    rows, diag = report["results"], report["diagnostics"]
    if fmt == "json":
        return _dump_json(report)
    cols = ["estimator", "coef", "beta_hat", "se", "t", "p", "ci_lower", "ci_upper",
            "ci_length", "boot_lower", "boot_upper", "boot_length", "note"]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for r in rows:
            writer.writerow(["" if r[c] is None else (repr(r[c]) if isinstance(r[c], float) else r[c])
                             for c in cols])
        return buf.getvalue()
    lines = [_render_diagnostics_text(diag), ""]
    show = cols[:9] + (cols[9:12] if any(r["boot_lower"] is not None for r in rows) else [])
    lines.append(" ".join(c.rjust(12) for c in show) + "  note")
    for r in rows:
        cells = [str(r[c]).rjust(12) if c in ("estimator", "coef") else _fmt(r[c]) for c in show]
        lines.append(" ".join(cells) + ("  " + r["note"] if r["note"] else ""))
    return "\n".join(lines) + "\n"


def _render_diagnostics_text(diag: dict) -> str:
    verdict = "feasible" if diag["hck_feasible"] else "infeasible (M_n >= 1/2)"
    lines = [
        f"n            {diag['n']}",
        f"d            {diag['d']}",
        f"K_effective  {diag['K_effective']}",
        f"K/n          {diag['K_over_n']:.6g}",
        f"M_n          {diag['M_n']:.6g}",
        f"HCK          {verdict}",
        f"Varah bound  {_fmt(diag['varah_bound'], 0).strip()}",
        "leverage     " + "  ".join(f"{k}={v:.6g}" for k, v in diag["leverage_quantiles"].items()),
    ]
    if diag.get("dropped_columns"):
        names = diag.get("dropped_column_names") or diag["dropped_columns"]
        lines.append(f"dropped W    {', '.join(str(c) for c in names)}")
    if diag.get("rows_dropped_missing"):
        lines.append(f"missing rows {diag['rows_dropped_missing']}")
    if diag.get("rows_dropped_unit_leverage"):
        lines.append(f"unit-leverage rows dropped {len(diag['rows_dropped_unit_leverage'])}")
    return "\n".join(lines)


def render_diagnose(report: dict, fmt: str) -> str:
    if fmt == "json":
        return _dump_json(report)
    diag = report["diagnostics"]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["key", "value"])
        for k, v in diag.items():
            if isinstance(v, dict):
                for kk, vv in v.items():
                    writer.writerow([f"{k}.{kk}", repr(vv)])
            else:
                writer.writerow([k, repr(v) if isinstance(v, float) else v])
        return buf.getvalue()
    return _render_diagnostics_text(diag) + "\n"


def render_simulate(report: dict, fmt: str) -> str:
    if fmt == "json":
        return _dump_json(report)
    sim = report["results"]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["kind", "method", "coverage", "avg_length", "failures", "n_valid"])
        for c in sim["cells"]:
            writer.writerow([c["kind"], c["method"],
                             "" if c["coverage"] is None else repr(c["coverage"]),
                             "" if c["avg_length"] is None else repr(c["avg_length"]),
                             c["failures"], c["n_valid"]])
        return buf.getvalue()
    methods = list(dict.fromkeys(c["method"] for c in sim["cells"]))
    kinds = list(dict.fromkeys(c["kind"] for c in sim["cells"]))
    lookup = {(c["kind"], c["method"]): c for c in sim["cells"]}
    spec = sim["spec"]
    head = ", ".join(f"{k}={spec[k]}" for k in sorted(spec) if k not in ("gamma", "alpha"))
    out = [f"Monte Carlo: S={sim['S']}, seed={sim['seed']}, level={sim['level']}", f"spec: {head}"]
    for title, key in (("Panel (a): empirical coverage", "coverage"),
                       ("Panel (b): average interval length", "avg_length")):
        out += ["", title, "estimator".ljust(10) + " ".join(m.rjust(14) for m in methods)]
        for k in kinds:
            out.append(k.ljust(10) + " ".join(_fmt(lookup[(k, m)][key], 14) for m in methods))
    out += ["", "failures", "estimator".ljust(10) + " ".join(m.rjust(14) for m in methods)]
    for k in kinds:
        out.append(k.ljust(10) + " ".join(_fmt(lookup[(k, m)]["failures"], 14) for m in methods))
    ds = sim["design_summary"]
    out += ["", "design: " + ", ".join(f"{k}={_fmt(v, 0).strip() if isinstance(v, float) else v}"
                                       for k, v in ds.items())]
    return "\n".join(out) + "\n"


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value file mirroring the flags; flags win")
    p.add_argument("--estimators", default="all",
                   help="comma list of ho0,ho1,hc0,hc1,hc2,hc3,hc4,hck or 'all'")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--bootstrap-b", type=int, default=0, help="bootstrap replications (0 = off)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.add_argument("--out", help="write output here instead of stdout")
    p.add_argument("--memory-cap", type=int, default=DEFAULT_MAX_N,
                   help="largest n for which the dense n x n annihilator is built")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--hck-singular", choices=("raise", "minnorm"), default="raise",
                   help="HCK when M_n >= 1/2: report infeasible, or use the minimum-norm solve")


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", help="CSV file with a header row")
    p.add_argument("--y", help="outcome column")
    p.add_argument("--x", help="comma list of regressors of interest")
    p.add_argument("--w", help="comma list of numeric nuisance covariates")
    p.add_argument("--factor", help="comma list of categorical columns to absorb as dummies")
    p.add_argument("--interact", help="comma list of colA:colB factor interactions")
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--intercept", dest="intercept", action="store_const", const=True,
                     help="add a constant column to W (default: only when factors are given)")
    grp.add_argument("--no-intercept", dest="intercept", action="store_const", const=False,
                     help="never add a constant column to W")
    p.add_argument("--drop-singletons", action="store_true",
                   help="drop observations with unit nuisance leverage before fitting")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="manycov",
        description="OLS inference with many nuisance covariates (HO, HC0-HC4, HCK).",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    for name, helptext in (("regress", "fit and report every requested standard error"),
                           ("diagnose", "report leverage diagnostics and HCK feasibility")):
        p = sub.add_parser(name, help=helptext)
        _add_data(p)
        _add_common(p)

    p = sub.add_parser("simulate", help="Monte Carlo coverage study")
    _add_common(p)
    p.add_argument("--model", choices=("model1", "panel", "plm"), default="model1")
    p.add_argument("--n", type=int, help="sample size (model1, plm)")
    p.add_argument("--k", type=int, help="number of dummy covariates (model1)")
    p.add_argument("--units", type=int, help="panel units N")
    p.add_argument("--t", type=int, help="panel periods T")
    p.add_argument("--order", type=int, help="power-series order (plm)")
    p.add_argument("--dim-z", type=int, help="dimension of z (plm)")
    p.add_argument("--g", help="smooth function for plm")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--hetero", action="store_true")
    p.add_argument("--fixed-design", action="store_true")
    p.add_argument("--s", type=int, default=1000, help="number of replications")
    p.add_argument("--methods", default="gaussian", help="comma list of gaussian,bootstrap")
    p.add_argument("--keep-singletons", action="store_true",
                   help="keep unit-leverage observations (default: drop them)")
    return parser


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off", ""}


def _config_tokens(path: str, parser: argparse.ArgumentParser, subcommand: str) -> list[str]:
    sub = next(a for a in parser._subparsers._group_actions  # noqa: SLF001
               if isinstance(a, argparse._SubParsersAction)).choices[subcommand]  # noqa: SLF001
    flags = {}
    for action in sub._actions:  # noqa: SLF001
        for opt in action.option_strings:
            flags[opt] = action
    tokens = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        opt = "--" + key.replace("_", "-")
        action = flags.get(opt)
        if action is None or opt == "--config":
            raise UsageError(f"{path}:{n}: unknown key {key!r}")
        if action.nargs == 0:
            if value.lower() in _TRUE:
                tokens.append(opt)
            elif value.lower() not in _FALSE:
                raise UsageError(f"{path}:{n}: {key} expects true/false")
        else:
            tokens += [opt, value]
    return tokens


def _parse(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        tokens = _config_tokens(args.config, parser, args.subcommand)
        # config values first so explicit flags override them
        args = parser.parse_args([argv[0], *tokens, *argv[1:]] if argv else tokens)
    return args


def _cli_config(args: argparse.Namespace) -> CliConfig:
    cfg = CliConfig(
        subcommand=args.subcommand,
        estimators=_parse_estimators(args.estimators),
        level=args.level,
        bootstrap_b=args.bootstrap_b,
        seed=args.seed,
        format=args.format,
        memory_cap=args.memory_cap,
        hck_singular=args.hck_singular,
    )
    if args.subcommand in ("regress", "diagnose"):
        cfg.input = args.input
        cfg.y = args.y
        cfg.x = _split_list(args.x)
        cfg.w = _split_list(args.w)
        cfg.factor = _split_list(args.factor)
        cfg.interact = _split_list(args.interact)
        cfg.drop_singletons = args.drop_singletons
        cfg.intercept = args.intercept
    cfg.threads = max(1, args.threads)
    cfg.validate()
    return cfg


def _simulation_spec(args: argparse.Namespace):
    common = {"beta": args.beta, "hetero": args.hetero, "seed": args.seed,
              "fixed_design": args.fixed_design}
    try:
        if args.model == "model1":
            return Model1Spec(n=args.n or 700, K=1 if args.k is None else args.k, **common)
        if args.model == "panel":
            return PanelSpec(N_units=args.units or 100, T=args.t or 3, **common)
        return PlmSpec(
            n=args.n or 1000, g=args.g or "exp", order=3 if args.order is None else args.order,
            dim_z=args.dim_z or 10, **common,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _parse_input(cfg: CliConfig) -> ParsedCsv:
    intercept = cfg.intercept
    if intercept is None:
        intercept = bool(cfg.factor or cfg.interact)
    return parse_csv(cfg.input, cfg.y, cfg.x, cfg.w, cfg.factor, cfg.interact, intercept)


def cmd_regress(cfg: CliConfig) -> dict:
    parsed = _parse_input(cfg)
    rep = regress(parsed.data, cfg, parsed)
    return _envelope("regress", cfg, rep["results"], rep["diagnostics"])


def cmd_diagnose(cfg: CliConfig) -> dict:
    parsed = _parse_input(cfg)
    prep = prepare_design(parsed.data, max_n=cfg.memory_cap, drop_singletons=cfg.drop_singletons)
    return _envelope("diagnose", cfg, None, _diagnostics_block(prep, parsed))


def cmd_simulate(cfg: CliConfig, args: argparse.Namespace) -> dict:
    spec = _simulation_spec(args)
    methods = _split_list(args.methods) or ["gaussian"]
    if any(m not in ("gaussian", "bootstrap") for m in methods):
        raise UsageError(f"--methods must be drawn from gaussian,bootstrap; got {args.methods}")
    if args.s < 1:
        raise UsageError("--s must be at least 1")
    report = run_monte_carlo(
        spec, args.s, cfg.estimators, methods, cfg.level, cfg.seed,
        threads=cfg.threads, singular=cfg.hck_singular,
        drop_singletons=not args.keep_singletons,
        bootstrap_B=cfg.bootstrap_b or 199,
    )
    cfg.model = args.model
    cfg.S = args.s
    cfg.methods = methods
    cfg.keep_singletons = args.keep_singletons
    return _envelope("simulate", cfg, report.as_dict(), report.design_summary)


def _error(message: str) -> None:
    sys.stderr.write(f"manycov: {message}\n")


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parse(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        _error(str(exc))
        return EXIT_USAGE
    try:
        cfg = _cli_config(args)
        if args.subcommand == "regress":
            text = render_regress(cmd_regress(cfg), cfg.format)
        elif args.subcommand == "diagnose":
            text = render_diagnose(cmd_diagnose(cfg), cfg.format)
        else:
            text = render_simulate(cmd_simulate(cfg, args), cfg.format)
    except UsageError as exc:
        _error(str(exc))
        return EXIT_USAGE
    except (DataError, DesignError, DesignTooLargeError) as exc:
        _error(f"data error: {exc}")
        return EXIT_DATA
    except (CollinearityError, ManyCovError, np.linalg.LinAlgError) as exc:
        _error(f"numerical failure: {exc}")
        return EXIT_NUMERIC
    _emit(text, args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
