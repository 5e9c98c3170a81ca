"""``connprobit`` command line: simulate, fit, lrtest, counterfactual, balance, defaults.

Exit codes: 0 success, 1 configuration or input error, 2 estimation failure,
3 fit did not converge (unless ``--allow-nonconverged``).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import report
from .config import ConfigError, default_text, read_config
from .counterfactual import SUBSAMPLES, as_change, average_effects, decompose, \
    subsample_mask, write_decomposition
from .data import DataError, load_dataset, standardize_within_exam
from .diagnostics import balance_test, format_balance
from .inference import InferenceError, clustered_covariance, lr_test
from .optimize import FitError, fit
from .simulate import simulate, write_truth
from .data import save_dataset
from .spec import SpecError

log = logging.getLogger("connprobit")

EXIT_OK, EXIT_INPUT, EXIT_FIT, EXIT_NONCONVERGED = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message, code=EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _emit(text, path):
    Path(path).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _dataset(cfg):
    path = cfg.data_path or cfg.output("simulate", "dataset")
    if not Path(path).exists():
        raise CliError(f"dataset not found: {path}")
    ds = load_dataset(path, cfg.schema)
    if cfg.standardize:
        ds = standardize_within_exam(ds, cfg.standardize, cfg.standardize_scale)
    return ds, Path(path)


def cmd_simulate(cfg):
    ds, truth = simulate(cfg.dgp)
    data_path = save_dataset(ds, cfg.output("simulate", "dataset"))
    truth_path, side = write_truth(ds, truth, cfg.output("simulate", "truth"))
    _emit(report.format_sample(ds), cfg.output("simulate", "report"))
    log.info("wrote %s, %s, %s", data_path, truth_path, side)
    return EXIT_OK


def cmd_fit(cfg):
    ds, path = _dataset(cfg)
    res = fit(cfg.spec, ds, options=cfg.options)
    try:
        res.covariance = clustered_covariance(res, cfg.cov_type)
    except InferenceError as exc:
        log.warning("no standard errors: %s", exc)
    report.write_json(report.fit_record(res, path, cfg.cov_type), cfg.output("fit", "result"))
    _emit(report.format_fit(res, cov_type=cfg.cov_type), cfg.output("fit", "report"))
    if not res.converged:
        msg = (f"fit did not converge after {res.iterations} iterations "
               f"(gradient norm {res.gradient_norm:.3g}, condition {res.condition_flag}): "
               f"{res.message}")
        if cfg.allow_nonconverged:
            log.warning(msg)
        else:
            raise CliError(msg, EXIT_NONCONVERGED)
    return EXIT_OK


def _fit_path(cfg, name):
    p = Path(name)
    return p if p.is_absolute() or p.exists() else cfg.out / p


def cmd_lrtest(cfg):
    r = report.read_fit(_fit_path(cfg, cfg.require("lrtest", "restricted")))
    u = report.read_fit(_fit_path(cfg, cfg.require("lrtest", "unrestricted")))
    if r.dataset and u.dataset and r.dataset["sha256"] != u.dataset["sha256"]:
        raise CliError("the two fits were estimated on different datasets")
    res = lr_test(r, u)
    report.write_json(report.lr_record(res, r, u), cfg.output("lrtest", "result"))
    label = f"{r.spec.threshold.variant} vs {u.spec.threshold.variant}" \
        if r.spec.threshold != u.spec.threshold else "Restricted vs unrestricted"
    _emit(report.format_lr(res, label), cfg.output("lrtest", "report"))
    return EXIT_OK


def cmd_counterfactual(cfg):
    fit_path = _fit_path(cfg, cfg.require("counterfactual", "fit"))
    if not fit_path.exists():
        raise CliError(f"fit result not found: {fit_path}")
    res = report.read_fit(fit_path)
    ds, _ = _dataset(cfg)
    sec = cfg.sections["counterfactual"]
    changes = [as_change(c.strip()) for c in sec["changes"].split(",") if c.strip()]
    subsamples = [s.strip() for s in sec["subsamples"].split(",") if s.strip()]
    for s in subsamples:
        if s not in SUBSAMPLES:
            raise CliError(f"unknown subsample {s!r}")
    cand = Path(cfg.output("counterfactual", "candidates"))
    text, record = [], {}
    for ch in changes:
        base = ~ds.connected if ch.only_unconnected else subsample_mask(ds, "all")
        sub = ds.subset(base)
        write_decomposition(sub, decompose(res.spec, res.params_hat, sub, ch),
                            cand.with_name(f"{cand.stem}_{ch.name}{cand.suffix}"), ch)
        summaries = {}
        for s in subsamples:
            mask = subsample_mask(ds, s) & base
            if mask.any():
                summaries[s] = average_effects(res.spec, res.params_hat, ds, mask, ch)
        text.append(report.format_effects(summaries, ch.name))
        record[ch.name] = report.effects_record(summaries, ch.name)
    report.write_json(record, cfg.output("counterfactual", "result"))
    _emit("\n".join(text), cfg.output("counterfactual", "report"))
    return EXIT_OK


def cmd_balance(cfg):
    ds, _ = _dataset(cfg)
    obs = [s.strip() for s in cfg.sections["balance"]["observables"].split(",") if s.strip()]
    rep = balance_test(ds, obs or None)
    report.write_json(report.balance_record(rep), cfg.output("balance", "result"))
    _emit(format_balance(rep) + "\n", cfg.output("balance", "report"))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "lrtest": cmd_lrtest,
            "counterfactual": cmd_counterfactual, "balance": cmd_balance}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI file overriding the defaults")
    common.add_argument("--seed", type=int, help="override [run] seed")
    common.add_argument("--out", type=Path, help="output directory (default: out)")
    common.add_argument("--threads", type=int, help="BLAS threads (default 1)")
    common.add_argument("--allow-nonconverged", action="store_true",
                        help="exit 0 even if the fit did not converge")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="connprobit",
                                description="Favors vs information in promotion decisions.")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {"simulate": "draw a synthetic dataset and its latent truth",
             "fit": "estimate a model and write a report",
             "lrtest": "likelihood-ratio test between two saved fits",
             "counterfactual": "decompose the effect of gaining a connection",
             "balance": "regress observables on realized connections",
             "defaults": "print the default configuration"}
    for name, h in helps.items():
        sub.add_parser(name, parents=[common], help=h)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.command == "defaults":
        sys.stdout.write(default_text())
        return EXIT_OK
    overrides = {}
    if args.seed is not None:
        overrides["run", "seed"] = args.seed
    if args.out is not None:
        overrides["run", "out"] = args.out
    if args.threads is not None:
        overrides["run", "threads"] = args.threads
    if args.allow_nonconverged:
        overrides["run", "allow_nonconverged"] = "true"
    try:
        cfg = read_config(args.config, overrides)
        cfg.out.mkdir(parents=True, exist_ok=True)
        with threadpool_limits(limits=cfg.threads):
            return COMMANDS[args.command](cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except FitError as exc:
        cols = getattr(exc, "columns", None)
        extra = f" (columns: {', '.join(cols)})" if cols else ""
        print(f"error: estimation failed: {exc}{extra}", file=sys.stderr)
        return EXIT_FIT
    except (ConfigError, DataError, SpecError, InferenceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
