"""Command line front end: analyze, simulate, benchmark, diff."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import warnings
from dataclasses import dataclass

import numpy as np

from .adjust import adjust_series, benchmark_panel
from .estimation import extract_discontinuities, fit_mle, naive_difference
from .models import (CompositionalPanel, InterventionSpec, ModelVariant, build_domain_consistent,
                     build_model, domain_observations)
from .simulation import ModelScenario, MultinomialScenario, run_study
from .transforms import alr_inverse, clr_inverse

log = logging.getLogger("surveybreaks")


class InputError(ValueError):
    """Invalid input file or configuration."""


def fmt(x):
    """Full-precision text for a float (17 significant digits)."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _json(obj, indent=0):
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{inner}{json.dumps(str(k))}: {_json(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_json(v) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + _json(v, indent + 1) for v in obj) + "\n" + pad + "]"
    if isinstance(obj, np.ndarray):
        return _json(obj.tolist(), indent)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    return json.dumps(str(obj))


def write_json(path, obj):
    with open(path, "w", newline="\n") as fh:
        fh.write(_json(obj) + "\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _read_table(path):
    """Header and rows of a delimited file with line numbers."""
    try:
        with open(path, newline="") as fh:
            sample = fh.read(4096)
            fh.seek(0)
            delim = ";" if sample.count(";") > sample.count(",") else ","
            rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh, delimiter=delim)) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise InputError(f"{path}: cannot read file: {exc.strerror}") from exc
    if not rows:
        raise InputError(f"{path}: file is empty")
    (_, header), body = rows[0], rows[1:]
    header = [h.strip() for h in header]
    if len(header) < 2 or header[0].lower() != "period":
        raise InputError(f"{path}:1:1: header must start with 'period'")
    if not body:
        raise InputError(f"{path}: no data rows")
    return header, body


def _numbers(path, header, body):
    periods, vals = [], []
    for line, row in body:
        if len(row) != len(header):
            raise InputError(f"{path}:{line}: expected {len(header)} fields, found {len(row)}")
        periods.append(row[0].strip())
        out = []
        for j, cell in enumerate(row[1:], start=2):
            try:
                v = float(cell)
            except ValueError:
                raise InputError(f"{path}:{line}:{j}: cannot parse {cell.strip()!r} as a number") from None
            if not math.isfinite(v):
                raise InputError(f"{path}:{line}:{j}: value must be finite")
            out.append(v)
        vals.append(out)
    if len(set(periods)) != len(periods):
        raise InputError(f"{path}: duplicate period labels")
    return periods, np.array(vals, float)


def read_series(path):
    """``period,cat_1..cat_K`` file -> (periods, categories, T x K values)."""
    header, body = _read_table(path)
    periods, vals = _numbers(path, header, body)
    if vals.shape[1] < 2:
        raise InputError(f"{path}:1: need at least two category columns")
    return periods, tuple(header[1:]), vals


def read_sizes(path, periods):
    header, body = _read_table(path)
    if len(header) != 2:
        raise InputError(f"{path}:1: sample-size file must have columns 'period,n'")
    p2, vals = _numbers(path, header, body)
    lookup = dict(zip(p2, vals[:, 0]))
    missing = [p for p in periods if p not in lookup]
    if missing:
        raise InputError(f"{path}: no sample size for period {missing[0]}")
    n = np.array([lookup[p] for p in periods])
    if np.any(n <= 0):
        line = body[p2.index(periods[int(np.argmax(n <= 0))])][0]
        raise InputError(f"{path}:{line}:2: sample size must be positive")
    return n


def _check_panel(path, periods, values, unit):
    for t, row in enumerate(values):
        for k, v in enumerate(row):
            if v < 0 or v > unit:
                raise InputError(f"{path}:{t + 2}:{k + 2}: proportion {v!r} outside [0, {unit:g}]")
        s = row.sum()
        if abs(s - unit) > 1e-9 * max(1.0, unit):
            raise InputError(f"{path}:{t + 2}: row sums to {fmt(s)}, expected {unit:g}")


def load_panel(series, sizes, redesign, se=None, unit=100.0):
    periods, cats, values = read_series(series)
    _check_panel(series, periods, values, unit)
    n = read_sizes(sizes, periods)
    if redesign not in periods:
        raise InputError(f"--redesign-period: {redesign!r} is not a period in {series}")
    TR = periods.index(redesign) + 1
    if TR < 2:
        raise InputError("--redesign-period: need at least one period before the redesign")
    se_vals = None
    if se is not None:
        p2, c2, se_vals = read_series(se)
        if p2 != periods or c2 != cats:
            raise InputError(f"{se}: periods and categories must match {series}")
        if np.any(se_vals < 0):
            raise InputError(f"{se}: standard errors must be non-negative")
    return CompositionalPanel(tuple(periods), values, n, TR, unit, cats, se_vals)


@dataclass
class AnalysisConfig:
    model: str = "m2"
    intervention: str = "level"
    adjust: str = "after"
    redesign_period: str | None = None
    end_period: str | None = None
    reference_cat: int | None = None
    seasonal_period: int | None = None
    variance_break: bool = False
    separate_variances: bool = False
    use_standard_errors: bool = False
    n_starts: int = 5
    output: str = "out"

    def validate(self, n_categories=None):
        if self.model.lower() not in ("m1", "m2", "m3", "m4"):
            raise InputError(f"--model: must be one of m1, m2, m3, m4, got {self.model!r}")
        if self.intervention not in ("level", "slope", "seasonal"):
            raise InputError(f"--intervention: unknown kind {self.intervention!r}")
        if self.adjust not in ("after", "before"):
            raise InputError(f"--adjust: must be 'after' or 'before', got {self.adjust!r}")
        if self.redesign_period is None:
            raise InputError("--redesign-period: required")
        if self.reference_cat is not None:
            if self.model.lower() != "m3":
                raise InputError("--reference-cat: only valid with --model m3")
            if n_categories is not None and not 1 <= self.reference_cat <= n_categories:
                raise InputError(f"--reference-cat: {self.reference_cat} out of range 1..{n_categories}")
        if self.intervention == "seasonal":
            if self.seasonal_period is None or self.seasonal_period < 2:
                raise InputError("--seasonal-period: seasonal intervention needs a period >= 2")
            if self.model.lower() not in ("m2", "m4"):
                raise InputError("--intervention seasonal: only available for m2 and m4")
        if self.n_starts < 1:
            raise InputError("--n-starts: must be at least 1")

    def variant(self):
        ref = None if self.reference_cat is None else self.reference_cat - 1
        return ModelVariant(self.model.upper(), not self.separate_variances, self.variance_break, ref,
                            self.use_standard_errors)

    def spec(self):
        return InterventionSpec(self.intervention, self.adjust, self.seasonal_period)

    def as_dict(self):
        return {"model": self.model.upper(), "intervention": self.intervention, "adjust": self.adjust,
                "redesign_period": self.redesign_period, "end_period": self.end_period,
                "reference_cat": self.reference_cat, "seasonal_period": self.seasonal_period,
                "variance_break": self.variance_break, "separate_variances": self.separate_variances,
                "use_standard_errors": self.use_standard_errors, "n_starts": self.n_starts}


def _truncate(panel, end):
    if end is None:
        return panel
    if end not in panel.periods:
        raise InputError(f"--end-period: {end!r} is not a period of the series")
    idx = panel.periods.index(end) + 1
    if idx < panel.redesign_period:
        raise InputError("--end-period: must not precede the redesign period")
    return panel.truncate(idx)


def _trend_rows(panel, variant, model, fit):
    """Smoothed level per period and series on the analysis scale, plus
    the trend mapped back to proportions for the logratio variants."""
    out = fit.output
    p = model.num_obs
    lv = [model.state_names.index(f"level[{k + 1}]") for k in range(p)]
    level = out.smoothed_mean[:, lv]
    se = np.sqrt(np.clip(np.einsum("tii->ti", out.smoothed_cov[:, lv][:, :, lv]), 0.0, None))
    if variant.scale == "alr":
        back = alr_inverse(level, variant.reference_category) * 100
    elif variant.scale == "clr":
        back = clr_inverse(level) * 100
    else:
        back = level
    return level, se, back


def analyze_panel(panel, cfg):
    """Fit, extract, adjust; returns ``(report dict, tables dict)``."""
    variant, spec = cfg.variant(), cfg.spec()
    model, y = build_model(panel, variant, spec)
    warn_list = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fit = fit_mle(model, y, n_starts=cfg.n_starts)
        est = extract_discontinuities(fit, spec, variant)
        adj = adjust_series(panel, est, cfg.adjust)
    warn_list += sorted({str(w.message) for w in caught})
    if not fit.converged:
        warn_list.append(f"optimizer did not converge (gradient norm {fit.grad_norm:.3g})")
    names = list(model.series_names)
    disc = [{"series": nm, "beta": b, "se": s, "z": z, "flag": f}
            for nm, b, s, z, f in zip(names, est.beta, est.se, est.z, est.flags)]
    hyp = [{"name": nm, "theta": th, "sd": sd, "at_bound": bool(bd)}
           for nm, th, sd, bd in zip(model.param_names, fit.theta, fit.std_devs, fit.at_bound)]
    report = {
        "config": cfg.as_dict(),
        "n_periods": panel.n_periods,
        "periods": list(panel.periods),
        "categories": list(panel.categories),
        "analysis_scale": est.scale,
        "loglik": fit.loglik,
        "convergence": {"converged": fit.converged, "iterations": fit.iterations,
                        "gradient_norm": fit.grad_norm, "evaluations": fit.n_evals,
                        "message": fit.message},
        "hyperparameters": hyp,
        "discontinuities": disc,
        "adjusted_series": [{"period": p, "values": list(v)} for p, v in zip(panel.periods, adj.values)],
        "warnings": warn_list,
    }
    if est.kind == "slope":
        report["implied_shift"] = [{"period": p, "values": list(v)}
                                   for p, v in zip(panel.periods, est.implied_shift())]
    level, lse, back = _trend_rows(panel, variant, model, fit)
    trend = []
    for t, per in enumerate(panel.periods):
        for k, nm in enumerate(names):
            trend.append((per, nm, float(y[t, k]), float(level[t, k]), float(lse[t, k])))
    tables = {
        "trend.csv": (["period", "series", "observed", "smoothed_level", "smoothed_level_se"], trend),
        "adjusted.csv": (["period"] + list(panel.categories),
                         [[per] + [float(v) for v in row] for per, row in zip(panel.periods, adj.values)]),
        "discontinuities.csv": (["series", "beta", "se", "z", "flag"],
                                [(d["series"], float(d["beta"]), float(d["se"]), float(d["z"]), d["flag"])
                                 for d in disc]),
        "hyperparameters.csv": (["name", "theta", "sd", "at_bound"],
                                [(h["name"], float(h["theta"]), float(h["sd"]), str(h["at_bound"]).lower())
                                 for h in hyp]),
    }
    if variant.scale != "original":
        tables["trend_proportions.csv"] = (["period"] + list(panel.categories),
                                           [[per] + [float(v) for v in row] for per, row in zip(panel.periods, back)])
    return report, tables, fit, est, adj


def _text_report(title, report):
    lines = [title, "=" * len(title), ""]
    cfg = report.get("config", {})
    for k, v in cfg.items():
        lines.append(f"{k:>22}: {v}")
    if "loglik" in report:
        conv = report["convergence"]
        lines += ["", f"log-likelihood: {fmt(report['loglik'])}",
                  f"converged: {conv['converged']} (iterations {conv['iterations']}, "
                  f"gradient norm {conv['gradient_norm']:.3g})", "", "Hyperparameters (standard deviations)"]
        for h in report["hyperparameters"]:
            lines.append(f"  {h['name']:<28} {h['sd']:.6g}{'  [boundary]' if h['at_bound'] else ''}")
        lines += ["", f"Discontinuities ({report['analysis_scale']} scale)",
                  f"  {'series':<20} {'beta':>12} {'se':>12}"]
        for d in report["discontinuities"]:
            lines.append(f"  {d['series']:<20} {d['beta']:>12.5g} {d['se']:>12.5g} {d['flag']}")
    for w in report.get("warnings", []):
        lines.append(f"warning: {w}")
    return "\n".join(lines) + "\n"


def _emit(outdir, report, tables, title):
    os.makedirs(outdir, exist_ok=True)
    write_json(os.path.join(outdir, "report.json"), report)
    with open(os.path.join(outdir, "report.txt"), "w", newline="\n") as fh:
        fh.write(_text_report(title, report))
    for name, (header, rows) in tables.items():
        write_csv(os.path.join(outdir, name), header, rows)


def _config_from_args(args):
    return AnalysisConfig(model=args.model, intervention=args.intervention, adjust=args.adjust,
                          redesign_period=args.redesign_period, end_period=args.end_period,
                          reference_cat=args.reference_cat, seasonal_period=args.seasonal_period,
                          variance_break=args.variance_break, separate_variances=args.separate_variances,
                          use_standard_errors=args.use_standard_errors, n_starts=args.n_starts,
                          output=args.output)


def cmd_analyze(args):
    cfg = _config_from_args(args)
    cfg.validate()
    panel = load_panel(args.series, args.sizes, args.redesign_period, args.se)
    cfg.validate(panel.n_categories)
    panel = _truncate(panel, args.end_period)
    try:
        report, tables, fit, *_ = analyze_panel(panel, cfg)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    _emit(cfg.output, report, tables, "Discontinuity analysis")
    for w in report["warnings"]:
        log.warning(w)
    return 0


def cmd_diff(args):
    panel = load_panel(args.series, args.sizes, args.redesign_period, args.se)
    nd = naive_difference(panel)
    TR = panel.redesign_period
    rows = [(c, float(d), float(s), float(z), f)
            for c, d, s, z, f in zip(panel.categories, nd.difference, nd.se, nd.z, nd.flags)]
    report = {"before": panel.periods[TR - 2], "after": panel.periods[TR - 1],
              "differences": [{"category": r[0], "difference": r[1], "se": r[2], "z": r[3], "flag": r[4]}
                              for r in rows]}
    os.makedirs(args.output, exist_ok=True)
    write_json(os.path.join(args.output, "report.json"), report)
    write_csv(os.path.join(args.output, "differences.csv"), ["category", "difference", "se", "z", "flag"], rows)
    lines = [f"Observed differences {report['before']} -> {report['after']}", ""]
    lines += [f"  {r[0]:<20} {r[1]:>10.4g} ({r[2]:.4g}) {r[4]}" for r in rows]
    with open(os.path.join(args.output, "report.txt"), "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return 0


def _parse_shares(text, H):
    try:
        f = np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise InputError(f"--shares: cannot parse {text!r}") from None
    if f.size != H:
        raise InputError(f"--shares: need {H} values, got {f.size}")
    if np.any(f < 0) or abs(f.sum() - 1.0) > 1e-12:
        raise InputError("--shares: values must be non-negative and sum to 1")
    return f


def cmd_benchmark(args):
    cfg = _config_from_args(args)
    cfg.validate()
    if len(args.domain_series) != len(args.domain_sizes) or not args.domain_series:
        raise InputError("--domain-series and --domain-sizes: give one sizes file per domain series")
    total = load_panel(args.series, args.sizes, args.redesign_period, args.se)
    cfg.validate(total.n_categories)
    doms = []
    for s, n in zip(args.domain_series, args.domain_sizes):
        d = load_panel(s, n, args.redesign_period)
        if d.periods != total.periods or d.categories != total.categories:
            raise InputError(f"{s}: periods and categories must match {args.series}")
        doms.append(d)
    f = _parse_shares(args.shares, len(doms))
    names = tuple(os.path.splitext(os.path.basename(s))[0] for s in args.domain_series)
    total = CompositionalPanel(total.periods, total.proportions, total.sample_sizes, total.redesign_period,
                               total.unit, total.categories, total.standard_errors, tuple(doms), f, names)
    total = _truncate(total, args.end_period)
    if args.joint:
        report, tables = _joint_benchmark(total, cfg)
    else:
        report, tables = _lagrange_benchmark(total, cfg)
    _emit(cfg.output, report, tables, "Benchmarked discontinuity adjustment")
    for w in report["warnings"]:
        log.warning(w)
    return 0


def adjusted_variance(est, row, unit):
    """Diagonal of V for one adjusted row (default benchmark weights).

    Untransformed: the coefficient variances. Logratio variants: first-order
    propagation of the coefficient covariance through the inverse map at
    ``row`` (fractions).
    """
    if est.scale == "original":
        return np.diag(est.cov) * (unit / 100.0) ** 2
    J = np.diag(row) - np.outer(row, row)
    if est.scale == "alr":
        J = np.delete(J, est.reference, axis=1)
    return np.diag(J @ est.cov @ J.T) * unit ** 2


def _lagrange_benchmark(total, cfg):
    groups = [("total", total)] + list(zip(total.domain_names, total.domains))
    reports, adjusted, var = {}, [], []
    warn = []
    for name, panel in groups:
        try:
            rep, _, fit, est, adj = analyze_panel(panel, cfg)
        except ValueError as exc:
            raise InputError(f"{name}: {exc}") from exc
        reports[name] = {k: rep[k] for k in ("loglik", "convergence", "hyperparameters", "discontinuities")}
        warn += [f"{name}: {w}" for w in rep["warnings"]]
        adjusted.append(adj.values)
        var.append(np.maximum(adjusted_variance(est, adj.fractions()[-1], panel.unit), 1e-12))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        vals, vvar = benchmark_panel(adjusted[0], adjusted[1:], total.shares, np.concatenate(var), total.unit)
    warn += sorted({str(w.message) for w in caught})
    cols = [f"{g}:{c}" for g, _ in groups for c in total.categories]
    rows = [[p] + [float(v) for v in row] for p, row in zip(total.periods, vals)]
    report = {"config": cfg.as_dict(), "method": "lagrange", "shares": list(total.shares),
              "fits": reports, "benchmarked": [{"period": p, "values": list(v)} for p, v in zip(total.periods, vals)],
              "benchmarked_variance": [{"period": p, "values": list(v)} for p, v in zip(total.periods, vvar)],
              "warnings": warn}
    return report, {"benchmarked.csv": (["period"] + cols, rows)}


def _joint_benchmark(total, cfg):
    variant, spec = cfg.variant(), cfg.spec()
    if variant.name != "M2":
        raise InputError("--joint: the domain-consistent model is built on m2")
    try:
        model = build_domain_consistent(total, spec, variant)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    y = domain_observations(total)
    fit = fit_mle(model, y, n_starts=cfg.n_starts)
    est = extract_discontinuities(fit, spec, variant)
    adjusted = y - est.shift * (total.unit / 100.0)
    warn = [] if fit.converged else [f"optimizer did not converge (gradient norm {fit.grad_norm:.3g})"]
    disc = [{"series": nm, "beta": b, "se": s, "z": z, "flag": f}
            for nm, b, s, z, f in zip(model.series_names, est.beta, est.se, est.z, est.flags)]
    report = {"config": cfg.as_dict(), "method": "joint", "shares": list(total.shares), "loglik": fit.loglik,
              "convergence": {"converged": fit.converged, "iterations": fit.iterations,
                              "gradient_norm": fit.grad_norm, "evaluations": fit.n_evals,
                              "message": fit.message},
              "hyperparameters": [{"name": n, "theta": t, "sd": s, "at_bound": bool(b)} for n, t, s, b in
                                  zip(model.param_names, fit.theta, fit.std_devs, fit.at_bound)],
              "analysis_scale": "original", "discontinuities": disc,
              "benchmarked": [{"period": p, "values": list(v)} for p, v in zip(total.periods, adjusted)],
              "warnings": warn}
    rows = [[p] + [float(v) for v in row] for p, row in zip(total.periods, adjusted)]
    return report, {"benchmarked.csv": (["period"] + list(model.series_names), rows)}


def load_scenario(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InputError(f"{path}: cannot read scenario: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    kind = data.pop("kind", None)
    data.pop("description", None)
    cls = {"model": ModelScenario, "multinomial": MultinomialScenario}.get(kind)
    if cls is None:
        raise InputError(f"{path}: 'kind' must be 'model' or 'multinomial'")
    for key in ("sigma_slope", "beta", "base_composition", "sample_sizes", "estimators", "initial_slope"):
        if isinstance(data.get(key), list):
            data[key] = tuple(data[key])
    if "base_path" in data:
        data["base_path"] = tuple(tuple(r) for r in data["base_path"])
    if "delta" in data:
        d = data["delta"]
        data["delta"] = tuple(tuple(r) for r in d) if d and isinstance(d[0], list) else tuple(d)
    try:
        return cls(**data)
    except TypeError as exc:
        raise InputError(f"{path}: {exc}") from exc
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


def summary_report(summary):
    sd_ok = summary.sd is not None
    params = []
    for i, nm in enumerate(summary.names):
        params.append({"name": nm, "true": summary.true_values[i], "mean": summary.mean[i],
                       "sd": summary.sd[i] if sd_ok else None,
                       "mc_se": summary.mc_se()[i] if sd_ok else None})
    return {"scenario": summary.scenario, "replicates": summary.replicates, "converged": summary.count,
            "failures": summary.failures, "seed": summary.seed, "rng": summary.rng,
            "sd_available": sd_ok,
            "max_gradient_norm": float(summary.grad_norms.max()) if summary.grad_norms is not None
            and summary.grad_norms.size else None,
            "parameters": params}


def cmd_simulate(args):
    sc = load_scenario(args.scenario)
    if args.replicates is not None and args.replicates < 1:
        raise InputError("--replicates: must be at least 1")
    if args.workers < 1:
        raise InputError("--workers: must be at least 1")
    try:
        summary = run_study(sc, replicates=args.replicates, seed=args.seed, workers=args.workers)
    except RuntimeError as exc:
        log.error(str(exc))
        return 1
    report = summary_report(summary)
    rows = [(p["name"], p["true"], p["mean"], p["sd"] if p["sd"] is not None else "NA") for p in report["parameters"]]
    hist = []
    for nm, (edges, counts) in summary.histograms.items():
        for j, c in enumerate(counts):
            hist.append((nm, float(edges[j]), float(edges[j + 1]), int(c)))
    samples = [[r] + [float(v) for v in row] for r, row in enumerate(summary.samples)] if summary.samples is not None else []
    tables = {"summary.csv": (["parameter", "true", "mean", "sd"], rows),
              "histograms.csv": (["parameter", "bin_left", "bin_right", "count"], hist),
              "estimates.csv": (["row"] + list(summary.names), samples)}
    os.makedirs(args.output, exist_ok=True)
    write_json(os.path.join(args.output, "report.json"), report)
    lines = [f"Simulation {summary.scenario}: {summary.count} of {summary.replicates} replicates used "
             f"({summary.failures} failed)", ""]
    for p in report["parameters"]:
        sd = "unavailable" if p["sd"] is None else f"{p['sd']:.4f}"
        lines.append(f"  {p['name']:<18} true {p['true']:>9.4f}   mean {p['mean']:>9.4f}   sd {sd}")
    with open(os.path.join(args.output, "report.txt"), "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    for name, (header, rows_) in tables.items():
        write_csv(os.path.join(args.output, name), header, rows_)
    return 0


def _add_model_args(p):
    p.add_argument("--series", required=True, help="CSV with header period,cat_1..cat_K (percentages)")
    p.add_argument("--sizes", required=True, help="CSV with header period,n")
    p.add_argument("--se", help="optional CSV of standard errors, same layout as --series")
    p.add_argument("--model", default="m2", type=str.lower, choices=["m1", "m2", "m3", "m4"])
    p.add_argument("--redesign-period", required=True, help="label of the first period under the new design")
    p.add_argument("--intervention", default="level", choices=["level", "slope", "seasonal"])
    p.add_argument("--adjust", default="after", choices=["after", "before"])
    p.add_argument("--reference-cat", type=int, help="1-based alr reference category (m3 only)")
    p.add_argument("--seasonal-period", type=int)
    p.add_argument("--end-period", help="label of the last period to include")
    p.add_argument("--variance-break", action="store_true", help="separate measurement variance after the redesign")
    p.add_argument("--separate-variances", action="store_true", help="one measurement variance per series")
    p.add_argument("--use-standard-errors", action="store_true",
                   help="scale measurement variances by squared standard errors from --se")
    p.add_argument("--n-starts", type=int, default=5)
    p.add_argument("--seed", type=int, default=0, help="unused by the deterministic fit; kept for symmetry")
    p.add_argument("--output", default="out")


def build_parser():
    ap = argparse.ArgumentParser(prog="surveybreaks", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="estimate discontinuities and adjust the series")
    _add_model_args(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("benchmark", help="adjust total and domain series consistently")
    _add_model_args(p)
    p.add_argument("--domain-series", nargs="+", default=[])
    p.add_argument("--domain-sizes", nargs="+", default=[])
    p.add_argument("--shares", required=True, help="comma separated population shares of the domains")
    p.add_argument("--joint", action="store_true", help="fit the joint domain-consistent model instead")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("diff", help="observed change across the redesign with standard errors")
    p.add_argument("--series", required=True)
    p.add_argument("--sizes", required=True)
    p.add_argument("--se")
    p.add_argument("--redesign-period", required=True)
    p.add_argument("--output", default="out")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("simulate", help="run a Monte Carlo scenario")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--output", default="out")
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
