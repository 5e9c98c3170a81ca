"""Fixed-width tables and machine-readable records for fits and tests.

Every coefficient record carries ``name, block, label, estimate, se, z, p,
stars``. JSON floats are written with ``repr`` precision and missing values
as ``null`` so reruns are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .inference import LrTestResult, stars, z_table
from .optimize import FitResult
from .spec import ModelSpec, ParamLayout, ParamVector

SCHEMA_VERSION = 1

_FIXED_LABELS = {
    "B": "Bias (connected)",
    "delta_c": "Information (connected)",
    "gamma_S": "Bias (strong)",
    "gamma_W": "Bias (weak)",
    "delta_S": "Information (strong)",
    "delta_W": "Information (weak)",
    "gamma_1S": "Bias n_S",
    "gamma_2S": "Bias n_S^2",
    "gamma_1W": "Bias n_W",
    "gamma_2W": "Bias n_W^2",
    "gamma_SW": "Bias n_S x n_W",
    "gamma_0S": "Bias n_S",
    "gamma_0W": "Bias n_W",
    "delta_0S": "Information n_S",
    "delta_0W": "Information n_W",
}


def row_label(name: str) -> str:
    if name in _FIXED_LABELS:
        return _FIXED_LABELS[name]
    head, _, col = name.partition(":")
    kind = {"gamma_S": "Bias n_S", "gamma_W": "Bias n_W",
            "delta_S": "Information n_S", "delta_W": "Information n_W"}.get(head)
    if kind:
        return f"{kind} x {col}"
    if head == "lnsv":
        return f"Baseline log sd: {col}"
    if head == "a":
        return f"Threshold: {col}"
    return name


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def coefficient_records(fit: FitResult):
    L = fit.params_hat.layout
    return [{"name": name, "block": L.block_of(name), "label": row_label(name),
             "estimate": _num(est), "se": _num(se), "z": _num(z), "p": _num(p),
             "stars": stars(p)}
            for name, est, se, z, p in z_table(fit)]


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def fit_record(fit: FitResult, dataset=None, cov_type="cluster"):
    """Everything needed to reuse a fit: spec, layout, estimates, covariance."""
    cov = fit.covariance
    return {
        "schema_version": SCHEMA_VERSION,
        "dataset": None if dataset is None else {"path": str(dataset),
                                                 "sha256": file_digest(dataset)},
        "spec": fit.spec.to_dict(),
        "layout": fit.params_hat.layout.to_list(),
        "params": [float(v) for v in fit.params_hat.values],
        "coefficients": coefficient_records(fit),
        "covariance": None if cov is None else [[float(v) for v in r] for r in cov],
        "cov_type": cov_type,
        "loglik": float(fit.loglik),
        "df": int(fit.n_params),
        "n_obs": int(fit.n_obs),
        "n_clusters": int(fit.n_clusters),
        "converged": bool(fit.converged),
        "iterations": int(fit.iterations),
        "gradient_norm": float(fit.gradient_norm),
        "condition_flag": fit.condition_flag,
        "dropped_exams": int(fit.dropped_exams),
        "message": fit.message,
    }


def write_json(obj, path):
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n",
                    encoding="utf-8")
    return path


def read_fit(path) -> FitResult:
    """Rebuild a :class:`FitResult` (without design) from :func:`fit_record` output."""
    rec = json.loads(Path(path).read_text(encoding="utf-8"))
    if rec.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"{path}: not a fit result (schema_version missing or unknown)")
    layout = ParamLayout.from_list(rec["layout"])
    cov = rec["covariance"]
    res = FitResult(
        spec=ModelSpec.from_dict(rec["spec"]),
        params_hat=ParamVector(layout, np.array(rec["params"], dtype=float)),
        loglik=rec["loglik"], iterations=rec["iterations"], converged=rec["converged"],
        gradient_norm=rec["gradient_norm"], condition_flag=rec["condition_flag"],
        n_obs=rec["n_obs"], n_clusters=rec["n_clusters"], gradient=np.zeros(layout.size),
        covariance=None if cov is None else np.array(cov, dtype=float),
        message=rec.get("message", ""), dropped_exams=rec.get("dropped_exams", 0),
    )
    res.dataset = rec.get("dataset")
    return res


# -- human-readable tables ------------------------------------------------------

NOTE = "* p<0.1; ** p<0.05; *** p<0.01. Standard errors in parentheses."


def _coef_rows(records, label_width):
    lines = []
    for r in records:
        est = "" if r["estimate"] is None else f"{r['estimate']:.3f}{r['stars']}"
        se = "" if r["se"] is None else f"({r['se']:.3f})"
        lines.append(f"{r['label']:<{label_width}}{est:>14}")
        lines.append(f"{'':<{label_width}}{se:>14}")
    return lines


def format_fit(fit: FitResult, title="Heteroscedastic probit", cov_type="cluster"):
    """Connection-effect panel first (Bias and Information rows), then the
    remaining coefficients and fit statistics."""
    records = coefficient_records(fit)
    main = [r for r in records if r["block"] in ("gamma", "delta_info")]
    fe = fit.spec.threshold.variant == "fixed_effects"
    other = [r for r in records if r["block"] not in ("gamma", "delta_info")
             and not (fe and r["block"] == "threshold")]
    width = max([len(r["label"]) for r in records] + [24]) + 2
    rule = "-" * (width + 14)
    lines = [title, rule, "Connection effects", *_coef_rows(main, width), rule,
             "Other coefficients", *_coef_rows(other, width)]
    if fe:
        n_fe = len(fit.params_hat.layout.block_names("threshold"))
        lines.append(f"{'Exam fixed effects':<{width}}{n_fe:>14d}")
    lines += [
        rule,
        f"{'Log-likelihood':<{width}}{fit.loglik:>14.3f}",
        f"{'Parameters':<{width}}{fit.n_params:>14d}",
        f"{'Observations':<{width}}{fit.n_obs:>14d}",
        f"{'Clusters (exams)':<{width}}{fit.n_clusters:>14d}",
        f"{'Converged':<{width}}{'yes' if fit.converged else 'no':>14}",
        f"{'Iterations':<{width}}{fit.iterations:>14d}",
        f"{'Condition':<{width}}{fit.condition_flag:>14}",
        rule,
        f"Standard errors: {cov_type}. {NOTE}",
    ]
    return "\n".join(lines) + "\n"


def lr_record(res: LrTestResult, restricted: FitResult, unrestricted: FitResult):
    return {"lr": _num(res.lr_stat), "df": res.df, "p": _num(res.p_value),
            "optimizer_suspect": res.optimizer_suspect,
            "loglik_restricted": float(restricted.loglik),
            "loglik_unrestricted": float(unrestricted.loglik),
            "n_obs": int(restricted.n_obs)}


def format_lr(res: LrTestResult, label="Restricted vs unrestricted"):
    w = max(len(label), 12) + 2
    lines = [f"{'':<{w}}{'LR':>12}{'df':>6}{'p-value':>10}",
             f"{label:<{w}}{res.lr_stat:>12.3f}{res.df:>6d}{res.p_value:>10.3f}"]
    if res.optimizer_suspect:
        lines.append("warning: restricted fit beat the unrestricted one; "
                     "the unrestricted optimum is suspect")
    return "\n".join(lines) + "\n"


def format_effects(summaries: dict, change="connect"):
    """Subsample-averaged decomposition with standard deviations in parentheses."""
    cols = ("baseline", "total", "info", "favor")
    heads = ("Baseline", "Total", "Information", "Bias")
    w = max([len(k) for k in summaries] + [10]) + 2
    lines = [f"Effect of change: {change}",
             f"{'Subsample':<{w}}{'N':>8}" + "".join(f"{h:>13}" for h in heads)]
    for name, s in summaries.items():
        lines.append(f"{name:<{w}}{s.n:>8d}" + "".join(f"{s.means[c]:>13.4f}" for c in cols))
        lines.append(f"{'':<{w}}{'':>8}" + "".join(f"{'(' + format(s.sds[c], '.4f') + ')':>13}"
                                                  for c in cols))
        if s.order_differs:
            lines.append(f"{'':<{w}}note: decomposition order changes the split by more "
                         "than 10% (variance first: information "
                         f"{s.alt_means['info']:.4f}, bias {s.alt_means['favor']:.4f})")
    return "\n".join(lines) + "\n"


def effects_record(summaries: dict, change="connect"):
    return {name: {"n": s.n, "means": s.means, "sds": s.sds, "variance_first": s.alt_means,
                   "order_differs": s.order_differs, "change": change}
            for name, s in summaries.items()}


def format_sample(ds):
    """Counts, promotion rate and connection shares."""
    conn = ds.connected
    rows = [
        ("Candidates", f"{len(ds):d}"),
        ("Exams", f"{ds.n_exams:d}"),
        ("Promotion rate", f"{np.mean(ds.y):.3f}"),
        ("At least one strong connection", f"{np.mean(ds.n_strong > 0):.3f}"),
        ("At least one weak connection", f"{np.mean(ds.n_weak > 0):.3f}"),
        ("At least one connection", f"{np.mean(conn):.3f}"),
        ("Promotion rate, connected", f"{np.mean(ds.y[conn]):.3f}" if conn.any() else "n/a"),
        ("Promotion rate, unconnected", f"{np.mean(ds.y[~conn]):.3f}" if (~conn).any() else "n/a"),
        ("Mean expected strong connections", f"{np.mean(ds.e_strong):.3f}"),
        ("Mean expected weak connections", f"{np.mean(ds.e_weak):.3f}"),
    ]
    w = max(len(r[0]) for r in rows) + 2
    return "\n".join(f"{k:<{w}}{v:>10}" for k, v in rows) + "\n"


def sample_record(ds):
    conn = ds.connected
    return {"candidates": len(ds), "exams": int(ds.n_exams),
            "promotion_rate": float(np.mean(ds.y)),
            "share_strong": float(np.mean(ds.n_strong > 0)),
            "share_weak": float(np.mean(ds.n_weak > 0)),
            "share_connected": float(np.mean(conn))}


def balance_record(report):
    return {panel: {obs: {row: {"coef": c, "se": s, "p": p, "stars": stars(p)}
                          for row, (c, s, p) in cells.items()}
                    for obs, cells in report.panels[panel].items()}
            for panel in ("without", "with")} | {"n": report.n}
