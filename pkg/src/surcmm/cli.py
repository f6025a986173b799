"""Command-line pipeline: simulate, fit, bootstrap, risk and report.

Settings come from a JSON config file (``--config``) with command-line
overrides; precedence is flags > file > defaults.  Exit codes: 0 success,
1 validation error, 2 convergence or numerical error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrap import BootstrapAbort, BootstrapConfig, BootstrapDistribution, bootstrap_reserves, default_threads, silo_bootstrap, summarize_distribution
from .copulas import CopulaSpec
from .errors import ConvergenceError, NumericalError, SurcmmError, ValidationError
from .estimation import JointModelFit, ModelKind, PenaltyConfig, fit_model, select_marginal_family
from .io import dumps, load_fit, save_fit
from .marginals import Family, MarginalSpec
from .risk import (
    DEFAULT_LEVELS,
    RiskReport,
    distribution_report,
    percentage_error,
    point_reserve,
    silo_report,
    true_risk_capital,
    write_reports_csv,
)
from .simulator import GeneratorConfig, actual_reserve, generate_portfolio, ratio_summary, realized_lower_triangle
from .triangles import load_portfolio, write_portfolio

log = logging.getLogger("surcmm")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """Everything a pipeline run needs; see :func:`load_config`."""

    input: str = None
    generator: dict = None
    model: str = "ssurcmm"
    penalty: dict = field(default_factory=dict)
    copula: dict = field(default_factory=dict)
    marginals: object = ("gamma", "gamma")
    bootstrap: dict = field(default_factory=dict)
    levels: tuple = DEFAULT_LEVELS
    baseline: str = "tvar60"
    company: str = None
    tolerance: float = 1e-4
    max_outer: int = 50
    truth_draws: int = 100_000
    seed: int = 0
    threads: int = None
    out: str = "out"

    def __post_init__(self):
        if self.input is not None and self.generator is not None:
            raise ValidationError("configure either an input file or a generator, not both")
        self.model = ModelKind(self.model).value
        self.levels = tuple(float(k) for k in self.levels)
        if any(not 0 < k < 1 for k in self.levels) or any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValidationError(f"TVaR levels must be strictly increasing inside (0, 1), got {self.levels}")
        if self.baseline not in ("tvar60", "mean"):
            raise ValidationError("baseline must be 'tvar60' or 'mean'")
        if self.marginals != "auto":
            fams = tuple(self.marginals)
            if len(fams) != 2:
                raise ValidationError("marginals must name two families or be 'auto'")
            self.marginals = tuple(Family(f).value for f in fams)

    @property
    def out_dir(self):
        return Path(self.out)

    def marginal_specs(self):
        return tuple(MarginalSpec(f) for f in self.marginals)

    def copula_spec(self):
        return CopulaSpec(**self.copula)

    def penalty_config(self):
        return PenaltyConfig(**self.penalty)

    def bootstrap_config(self, **overrides):
        opts = {"seed": self.seed, "threads": self.threads or default_threads(), **self.bootstrap, **overrides}
        return BootstrapConfig(**opts)

    def generator_config(self):
        return GeneratorConfig.from_dict({"seed": self.seed, **(self.generator or {})})


def load_config(path=None, overrides=None):
    """Merge defaults, the JSON file at ``path`` and ``overrides``."""
    doc = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise ValidationError(f"{path}: the config must be a JSON object")
        known = {f.name for f in fields(RunConfig)}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"{path}: unknown settings {sorted(unknown)}")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if isinstance(value, dict):
            doc[key] = {**doc.get(key, {}), **value}
        else:
            doc[key] = value
    return RunConfig(**doc)


# ---------------------------------------------------------------------------
# formatting helpers
# ---------------------------------------------------------------------------


def money(x):
    """Whole currency units with space-separated thousands."""
    return format(float(x), ",.0f").replace(",", " ")


def pct(x):
    return f"{float(x):.2f}%"


def _write_rows(path, header, rows):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def _company_arg(company):
    return None if company in (None, "all") else company


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg, args):
    gen = {}
    if args.companies is not None:
        gen["n_companies"] = args.companies
    if args.scenario is not None:
        gen["sparsity"] = args.scenario
    gcfg = replace(cfg.generator_config(), **gen)
    portfolio, truth = generate_portfolio(gcfg)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_portfolio(portfolio, out / "portfolio.csv")
    doc = truth.to_dict()
    doc["actual_reserve"] = {}
    for k, cid in enumerate(truth.company_ids):
        r = actual_reserve(truth, seed=gcfg.seed, company=k)
        doc["actual_reserve"][cid] = {"lob_1": r.lob_1, "lob_2": r.lob_2}
        low = realized_lower_triangle(truth, gcfg.seed, k)
        doc.setdefault("realized_lower", {})[cid] = {
            f"lob_{lob}": [[None if np.isnan(v) else float(v) for v in row] for row in m] for lob, m in ((1, low[0]), (2, low[1]))
        }
    (out / "truth.json").write_text(dumps(doc), encoding="utf-8")
    rows = [r for lob in (1, 2) for r in ratio_summary(portfolio, lob)]
    _write_rows(
        out / "loss_ratios.csv",
        ("company_id", "lob", "min", "q1", "median", "q3", "max"),
        ([r["company_id"], r["lob"], r["min"], r["q1"], r["median"], r["q3"], r["max"]] for r in rows),
    )
    n_rows = 2 * len(portfolio.companies) * portfolio.size * (portfolio.size + 1) // 2
    print(f"simulated {len(portfolio.companies)} companies, {n_rows} data rows ({gcfg.sparsity.value}) -> {out / 'portfolio.csv'}")
    return EXIT_OK


def _input_path(cfg, args):
    path = getattr(args, "input", None) or cfg.input
    if path is None:
        default = cfg.out_dir / "portfolio.csv"
        if not default.exists():
            raise FileNotFoundError(f"no input portfolio given and {default} does not exist")
        path = default
    return Path(path)


def cmd_fit(cfg, args):
    path = _input_path(cfg, args)
    portfolio = load_portfolio(path)
    extra = {"input": str(path.resolve())}
    if args.select_marginal or cfg.marginals == "auto":
        sel = select_marginal_family(portfolio, random_effects=cfg.model != ModelKind.SUR_COPULA.value)
        specs = (sel.spec_1, sel.spec_2)
        extra["family_selection"] = sel.table
        for row in sel.table:
            print(f"LOB{row['lob']} {row['family']:9s} AIC {row['aic']:.2f}")
    else:
        specs = cfg.marginal_specs()
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    target = out / f"fit_{cfg.model}.json"
    try:
        fit = fit_model(
            cfg.model, portfolio, specs[0], specs[1], cfg.copula_spec(), cfg.penalty_config(), cfg.tolerance, cfg.max_outer
        )
    except ConvergenceError as exc:
        if isinstance(exc.last_iterate, JointModelFit):
            save_fit(exc.last_iterate, target, extra)
            print(f"not converged; last iterate written to {target}", file=sys.stderr)
        raise
    save_fit(fit, target, extra)
    d = fit.diagnostics
    theta = fit.dependence.theta
    theta_txt = f"{theta:.4f}" if fit.dependence.shared else f"{len(theta)} per-company values"
    print(f"{fit.model.value}: {d.iterations} outer iterations, change {d.change_norm:.2e}")
    print(f"  theta {theta_txt}; sigma ({fit.params_1.sigma:.4f}, {fit.params_2.sigma:.4f}); tau ({fit.params_1.tau:.4f}, {fit.params_2.tau:.4f})")
    if fit.sparse:
        print(f"  lambda ({fit.penalty.lambda_1:.4g}, {fit.penalty.lambda_2:.4g}); thresholds ({fit.thresholds[0]:.4g}, {fit.thresholds[1]:.4g})")
    print(f"  log-likelihood {d.loglik:.3f}, df {d.df}, AIC {d.aic:.3f} -> {target}")
    return EXIT_OK


def _boxplot_rows(dist, name):
    probs = (0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0)
    for c, cid in enumerate(dist.company_ids):
        q = np.quantile(dist.totals(c), probs)
        yield [name, cid, *q.tolist()]
    q = np.quantile(dist.totals(), probs)
    yield [name, "all", *q.tolist()]


def cmd_bootstrap(cfg, args):
    overrides = {}
    if args.replicates is not None:
        overrides["replicates"] = args.replicates
    bcfg = cfg.bootstrap_config(**overrides)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    if args.silo:
        portfolio = load_portfolio(_input_path(cfg, args))
        specs = cfg.marginal_specs() if cfg.marginals != "auto" else None
        name = "silo"
        run = lambda: silo_bootstrap(portfolio, specs, bcfg)
    else:
        fit_path = Path(args.fit) if args.fit else out / f"fit_{cfg.model}.json"
        fit, extra = load_fit(fit_path)
        portfolio = load_portfolio(args.input or extra.get("input") or _input_path(cfg, args))
        name = fit.model.value
        run = lambda: bootstrap_reserves(fit, portfolio, bcfg)
    try:
        dist = run()
    except BootstrapAbort as exc:
        exc.partial.write(out / f"bootstrap_{name}.partial.csv")
        raise
    csv_path, json_path = dist.write(out / f"bootstrap_{name}.csv")
    _write_rows(
        out / f"boxplot_{name}.csv",
        ("model", "company_id", "min", "p05", "q1", "median", "q3", "p95", "max"),
        _boxplot_rows(dist, name),
    )
    tot = dist.totals()
    print(
        f"{name}: {len(dist.replicate_ids)} replicates ({len(dist.failures)} failed), "
        f"portfolio mean {money(tot.mean())}, sd {money(tot.std(ddof=1))} -> {csv_path}"
    )
    return EXIT_OK


def _truth(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return GeneratorConfig.from_dict(doc["config"]), doc


def cmd_risk(cfg, args):
    out = cfg.out_dir
    company = _company_arg(args.company or cfg.company)
    dists = [Path(p) for p in args.dist] if args.dist else sorted(
        p for p in out.glob("bootstrap_*.csv") if p.stem != "bootstrap_silo" and not p.stem.endswith(".partial")
    )
    silo_path = Path(args.silo) if args.silo else out / "bootstrap_silo.csv"
    if not dists and not silo_path.exists():
        raise FileNotFoundError(f"no bootstrap distributions found in {out}")
    reports = []
    silo = None
    if silo_path.exists():
        silo = silo_report(BootstrapDistribution.read_csv(silo_path, "silo"), company, cfg.levels, cfg.baseline)
    for p in dists:
        d = BootstrapDistribution.read_csv(p)
        reports.append(distribution_report(d, company, cfg.levels, cfg.baseline, silo))
    if silo is not None:
        reports.append(silo.with_gains(silo))
    truth_path = Path(args.truth) if args.truth else out / "truth.json"
    if truth_path.exists():
        gcfg, _ = _truth(truth_path)
        focus = company if company is not None else 0
        if isinstance(focus, str) and focus.isdigit():
            focus = int(focus)
        true = true_risk_capital(gcfg, cfg.truth_draws, gcfg.seed, cfg.levels, focus, cfg.baseline)
        if company is None:
            log.info("true risk capital is computed for the first company; pass --company to choose another")
        reports.append(true)
    write_reports_csv(reports, out / "risk.csv")
    meta = {"company": company or "all", "levels": list(cfg.levels), "baseline": cfg.baseline}
    (out / "risk.json").write_text(dumps({"scope": meta, "reports": [r.to_dict() for r in reports]}), encoding="utf-8")
    print(_ladder_markdown(reports))
    return EXIT_OK


def _ladder_markdown(reports):
    if not reports:
        return "_no risk reports_"
    levels = reports[0].levels
    head = "| model | " + " | ".join(f"TVaR ({k * 100:g}%)" for k in levels) + " |"
    lines = [head, "|" + "---|" * (len(levels) + 1)]
    for r in reports:
        lines.append(f"| {r.model} | " + " | ".join(money(r.tvar[k]) for k in levels) + " |")
    rc_levels = [k for k in levels if k in reports[0].risk_capital]
    lines += ["", "| risk capital | " + " | ".join(f"{k * 100:g}%" for k in rc_levels) + " |", "|" + "---|" * (len(rc_levels) + 1)]
    for r in reports:
        lines.append(f"| {r.model} | " + " | ".join(money(r.risk_capital[k]) for k in rc_levels) + " |")
    gains = [r for r in reports if r.gains and r.model not in ("silo", "true")]
    if gains:
        lines += ["", "| gain vs silo | " + " | ".join(f"{k * 100:g}%" for k in rc_levels) + " |", "|" + "---|" * (len(rc_levels) + 1)]
        for r in gains:
            lines.append(f"| {r.model} | " + " | ".join(pct(r.gains[k]) for k in rc_levels) + " |")
    return "\n".join(lines)


def _report_sections(cfg, company):
    """Collect ``(title, rows-or-None)`` per report section."""
    out = cfg.out_dir
    fits = {}
    for p in sorted(out.glob("fit_*.json")):
        fit, extra = load_fit(p)
        fits[fit.model.value] = (fit, extra)
    truth_doc = None
    if (out / "truth.json").exists():
        truth_doc = json.loads((out / "truth.json").read_text(encoding="utf-8"))
    sections = []

    rows = []
    for name, (fit, _) in fits.items():
        d = fit.diagnostics
        theta = fit.dependence.theta
        rows.append({
            "model": name,
            "theta": theta if fit.dependence.shared else float(np.mean(list(theta.values()))),
            "sigma_1": fit.params_1.sigma,
            "sigma_2": fit.params_2.sigma,
            "tau_1": fit.params_1.tau,
            "tau_2": fit.params_2.tau,
            "lambda_1": fit.penalty.lambda_1,
            "lambda_2": fit.penalty.lambda_2,
            "aic": d.aic,
            "iterations": d.iterations,
        })
    sections.append(("Fitted models", rows or None))

    reserves, errors, points = [], [], {}
    actual = None
    if truth_doc is not None:
        act = truth_doc.get("actual_reserve", {})
        ids = [company] if company else list(act)
        if all(i in act for i in ids) and ids:
            actual = (sum(act[i]["lob_1"] for i in ids), sum(act[i]["lob_2"] for i in ids))
    for name, (fit, extra) in fits.items():
        src = extra.get("input")
        if src is None or not Path(src).exists():
            continue
        r = point_reserve(fit, load_portfolio(src), company)
        points[name] = r.total
        reserves.append({"model": name, "lob_1": r.lob_1, "lob_2": r.lob_2, "total": r.total})
        if actual is not None:
            errors.append({
                "model": name,
                "lob_1": percentage_error(r.lob_1, actual[0]),
                "lob_2": percentage_error(r.lob_2, actual[1]),
                "total": percentage_error(r.total, sum(actual)),
            })
    if actual is not None:
        reserves.append({"model": "actual", "lob_1": actual[0], "lob_2": actual[1], "total": sum(actual)})
    sections.append(("Point reserves", reserves or None))
    sections.append(("Percentage errors", errors or None))

    dist_rows = []
    for p in sorted(out.glob("bootstrap_*.csv")):
        if p.stem.endswith(".partial") or p.stem == "bootstrap_silo":
            continue
        d = BootstrapDistribution.read_csv(p)
        if d.model not in points:
            continue
        comp = None if company is None else company
        s = summarize_distribution(d, points[d.model], comp)
        dist_rows.append({"model": d.model, "reserve": points[d.model], "bootstrap_mean": s.mean, "bias_pct": s.bias, "std": s.std, "cv": s.cv})
    sections.append(("Predictive distribution", dist_rows or None))

    risk = None
    if (out / "risk.json").exists():
        risk = [RiskReport.from_dict(r) for r in json.loads((out / "risk.json").read_text(encoding="utf-8"))["reports"]]
    sections.append(("Risk capital", risk))
    return sections


_MONEY_KEYS = {"lob_1", "lob_2", "total", "reserve", "bootstrap_mean", "std"}


def _fmt(key, value, money_keys=_MONEY_KEYS):
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(value)
    if key in money_keys:
        return money(value)
    return f"{value:.4g}"


def _table(rows, money_keys=_MONEY_KEYS):
    keys = list(rows[0])
    lines = ["| " + " | ".join(keys) + " |", "|" + "---|" * len(keys)]
    for r in rows:
        lines.append("| " + " | ".join(_fmt(k, r[k], money_keys) for k in keys) + " |")
    return "\n".join(lines)


_HINTS = {
    "Fitted models": "surcmm fit",
    "Point reserves": "surcmm fit (with the input portfolio available)",
    "Percentage errors": "surcmm simulate (truth.json) and surcmm fit",
    "Predictive distribution": "surcmm bootstrap",
    "Risk capital": "surcmm risk",
}


def cmd_report(cfg, args):
    out = cfg.out_dir
    if not out.is_dir():
        raise FileNotFoundError(f"output directory {out} does not exist")
    company = _company_arg(args.company or cfg.company)
    sections = _report_sections(cfg, company)
    if args.format == "csv":
        target = out / "report.csv"
        with target.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("section", "model", "field", "value"))
            for title, rows in sections:
                if rows is None:
                    w.writerow((title, "", "missing", ""))
                    continue
                for r in rows:
                    if isinstance(r, RiskReport):
                        for row in r.rows():
                            for key in ("tvar", "risk_capital", "gain_vs_silo"):
                                if row[key] != "":
                                    w.writerow((title, r.model, f"{key}@{row['level']:g}", repr(float(row[key]))))
                        continue
                    for key, value in r.items():
                        if key != "model":
                            w.writerow((title, r["model"], key, repr(float(value)) if not isinstance(value, str) else value))
    else:
        target = out / "report.md"
        scope = company or "all companies"
        parts = [f"# Reserving report ({scope})", ""]
        for title, rows in sections:
            parts += [f"## {title}", ""]
            if rows is None:
                parts += [f"_missing: run `{_HINTS[title]}` first_", ""]
            elif title == "Risk capital":
                parts += [_ladder_markdown(rows), ""]
            elif title == "Percentage errors":
                parts += [_table([{k: (pct(v) if k != "model" else v) for k, v in r.items()} for r in rows]), ""]
            else:
                parts += [_table(rows), ""]
        target.write_text("\n".join(parts), encoding="utf-8")
        print("\n".join(parts))
    print(f"report -> {target}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _levels(text):
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid level list {text!r}") from None


def _global_flags(parser, suppress):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=d, help="random seed (u64)")
    parser.add_argument("--threads", type=int, default=d, help="worker processes (default: available CPUs)")
    parser.add_argument("--out", default=d, help="output directory")
    parser.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress else 0)


def build_parser():
    parser = argparse.ArgumentParser(prog="surcmm", description="Sparse SUR copula mixed models for loss reserving.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic portfolio")
    p.add_argument("--companies", type=int)
    p.add_argument("--scenario", choices=["none", "zero-accident", "zero-development", "zero-both"])
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="fit a model to a portfolio")
    p.add_argument("--input", help="long-format CSV portfolio")
    p.add_argument("--model", choices=[m.value for m in ModelKind])
    p.add_argument("--penalty", choices=["accident", "development", "both", "none"], help="penalty scope")
    p.add_argument("--copula-scope", choices=["shared", "per_company"])
    p.add_argument("--marginals", help="two families, e.g. gamma,lognormal")
    p.add_argument("--select-marginal", action="store_true", help="choose each LOB's family by AIC")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bootstrap", parents=[common], help="bootstrap the reserve distribution")
    p.add_argument("--fit", help="fit artifact (default: <out>/fit_<model>.json)")
    p.add_argument("--input")
    p.add_argument("--model", choices=[m.value for m in ModelKind])
    p.add_argument("--replicates", type=int)
    p.add_argument("--silo", action="store_true", help="bootstrap the per-LOB silo baseline instead")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("risk", parents=[common], help="TVaR ladders, risk capital and gains")
    p.add_argument("--dist", nargs="*", help="bootstrap CSVs (default: all in <out>)")
    p.add_argument("--silo", help="silo bootstrap CSV")
    p.add_argument("--truth", help="ground-truth sidecar for the true risk capital")
    p.add_argument("--levels", type=_levels)
    p.add_argument("--company", help="company id, or 'all' for the portfolio aggregate")
    p.set_defaults(func=cmd_risk)

    p = sub.add_parser("report", parents=[common], help="summarise the outputs in a directory")
    p.add_argument("--format", choices=["markdown", "csv"], default="markdown")
    p.add_argument("--company")
    p.set_defaults(func=cmd_report)
    return parser


def _overrides(args):
    o = {"seed": args.seed, "threads": args.threads, "out": args.out}
    if getattr(args, "model", None):
        o["model"] = args.model
    if getattr(args, "penalty", None):
        o["penalty"] = {"scope": args.penalty}
    if getattr(args, "copula_scope", None):
        o["copula"] = {"scope": args.copula_scope}
    if getattr(args, "marginals", None):
        o["marginals"] = tuple(s.strip() for s in args.marginals.split(","))
    if getattr(args, "levels", None):
        o["levels"] = args.levels
    if getattr(args, "input", None) and args.command in ("fit",):
        o["input"] = args.input
    if args.seed is not None and args.command == "bootstrap":
        o["bootstrap"] = {"seed": args.seed}
    return o


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(args.config, _overrides(args))
        return args.func(cfg, args)
    except (NumericalError, ConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SurcmmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, TypeError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
