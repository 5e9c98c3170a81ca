"""Run configuration: an INI file with one section per pipeline stage.

Every key has an embedded default (see :data:`DEFAULTS`, printed by the
``defaults`` subcommand), so a config file only needs the keys it changes.
Lists are comma separated, mappings are ``name=value`` pairs separated by
commas and an empty value means "none" or "use everything".
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields
from pathlib import Path

from .data import Schema
from .optimize import FitOptions
from .simulate import DgpConfig
from .spec import BaselineVarSpec, BiasSpec, InfoSpec, ModelSpec, ThresholdSpec


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "run": {
        "seed": "0",
        "out": "out",
        "threads": "1",
        "allow_nonconverged": "false",
    },
    "data": {
        "path": "",
        "outcome": "outcome",
        "exam_id": "exam_id",
        "n_strong": "n_strong",
        "n_weak": "n_weak",
        "e_strong": "e_strong",
        "e_weak": "e_weak",
        "observables": "x1, x2, x3",
        "group_covariates": "z1",
        "jury_size": "jury_size",
        "positions": "positions",
        "standardize": "",
        "standardize_scale": "true",
    },
    "model": {
        "bias": "constant_connected",
        "bias_quadratic": "true",
        "info": "constant_connected",
        "info_count_intercepts": "true",
        "interacted": "",
        "baseline": "homoscedastic",
        "baseline_columns": "",
        "threshold": "grouped_effects",
        "threshold_covariates": "*",
        "include_expected": "true",
        "cov_type": "cluster",
    },
    "optimizer": {
        "max_iter": "500",
        "grad_tol": "1e-6",
        "step_tol": "1e-9",
        "box": "10.0",
        "stages": "homoscedastic, full",
        "fe_block_min": "60",
        "hessian_step": "1e-5",
        "newton_polish": "8",
    },
    "simulate": {
        "n_exams": "50",
        "candidates_per_exam": "40",
        "m": "3",
        "beta": "0.5, -0.3, 0.4",
        "beta_expected": "0.0, 0.0",
        "sigma_u": "1.0",
        "sigma_v": "1.0",
        "delta_v": "",
        "info_mode": "signal",
        "sigma_eps_strong": "1.0",
        "sigma_eps_weak": "2.0",
        "info_variant": "constant_connected",
        "info_params": "",
        "bias_variant": "constant_connected",
        "bias_params": "B=0.2",
        "interacted": "",
        "pool_size": "20, 40",
        "jury_size": "7",
        "ties_strong_mean": "1.0",
        "ties_weak_mean": "2.0",
        "tie_loading": "0.0",
        "threshold_mode": "fixed_threshold",
        "n_group_covariates": "1",
        "a_true": "1.0, 0.3",
        "positions": "2, 6",
        "dataset": "dataset.csv",
        "truth": "truth.csv",
        "report": "simulate.txt",
    },
    "fit": {
        "result": "fit.json",
        "report": "fit.txt",
    },
    "lrtest": {
        "restricted": "",
        "unrestricted": "",
        "result": "lrtest.json",
        "report": "lrtest.txt",
    },
    "counterfactual": {
        "fit": "fit.json",
        "changes": "connect",
        "subsamples": "unconnected, unconnected_linked, unconnected_strong_weak",
        "candidates": "counterfactual.csv",
        "result": "counterfactual.json",
        "report": "counterfactual.txt",
    },
    "balance": {
        "observables": "",
        "result": "balance.json",
        "report": "balance.txt",
    },
}

_HELP = {
    "run": "seed also seeds [simulate]; out is the output directory",
    "data": "column names in the dataset CSV (empty path: the simulated dataset in out); "
            "standardize lists observables to "
            "standardize within exam",
    "model": "threshold_covariates = * uses every group covariate",
    "optimizer": "grad_tol is scaled by max(1, |loglik|) / n",
    "simulate": "data-generating process; info_params and bias_params are name=value lists",
    "lrtest": "paths to two fit results, relative to out",
    "counterfactual": "fit is a fit result path, relative to out",
}


def default_text() -> str:
    """The embedded defaults as an INI document."""
    lines = []
    for section, keys in DEFAULTS.items():
        if section in _HELP:
            lines.append(f"# {_HELP[section]}")
        lines.append(f"[{section}]")
        lines += [f"{k} = {v}" for k, v in keys.items()]
        lines.append("")
    return "\n".join(lines)


# -- value parsing -------------------------------------------------------------

def _list(text):
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _floats(text):
    return tuple(float(s) for s in _list(text))


def _ints(text):
    return tuple(int(s) for s in _list(text))


def _mapping(text):
    out = {}
    for item in _list(text):
        if "=" not in item:
            raise ValueError(f"expected name=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = float(v)
    return out


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional(text):
    return text.strip() or None


_DGP_TYPES = {
    "n_exams": int, "candidates_per_exam": int, "m": int, "beta": _floats,
    "beta_expected": _floats, "sigma_u": float, "sigma_v": float, "delta_v": _floats,
    "info_mode": str, "sigma_eps_strong": float, "sigma_eps_weak": float,
    "info_variant": str, "info_params": _mapping, "bias_variant": str,
    "bias_params": _mapping, "interacted": _list, "pool_size": _ints, "jury_size": int,
    "ties_strong_mean": float, "ties_weak_mean": float, "tie_loading": float,
    "threshold_mode": str, "n_group_covariates": int, "a_true": _floats, "positions": _ints,
}


@dataclass
class RunConfig:
    seed: int
    out: Path
    threads: int
    allow_nonconverged: bool
    data_path: str | None
    schema: Schema
    standardize: tuple
    standardize_scale: bool
    spec: ModelSpec
    cov_type: str
    options: FitOptions
    dgp: DgpConfig
    sections: dict            # raw strings for the per-subcommand sections

    def output(self, section, key) -> Path:
        return self.out / self.sections[section][key]

    def require(self, section, key):
        value = self.sections[section][key].strip()
        if not value:
            raise ConfigError(f"[{section}] {key} is required")
        return value


def _get(raw, section, key, conv):
    try:
        return conv(raw[section][key])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def read_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Merge a config file (optional) and ``{(section, key): value}`` overrides
    over the embedded defaults."""
    raw = {s: dict(k) for s, k in DEFAULTS.items()}
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
        for section in cp.sections():
            if section not in raw:
                raise ConfigError(f"unknown section [{section}]")
            for key, value in cp.items(section):
                if key not in raw[section]:
                    raise ConfigError(f"unknown key [{section}] {key}")
                raw[section][key] = value
    for (section, key), value in (overrides or {}).items():
        raw[section][key] = str(value)

    seed = _get(raw, "run", "seed", int)
    d = raw["data"]
    schema = Schema.from_mapping({k: d[k] for k in (
        "outcome", "exam_id", "n_strong", "n_weak", "e_strong", "e_weak", "observables",
        "group_covariates", "jury_size", "positions")})
    m = raw["model"]
    tcov = m["threshold_covariates"].strip()
    try:
        inter = _list(m["interacted"])
        spec = ModelSpec(
            bias=BiasSpec(m["bias"].strip(), inter, _bool(m["bias_quadratic"])),
            info=InfoSpec(m["info"].strip(), inter, _bool(m["info_count_intercepts"])),
            baseline=BaselineVarSpec(m["baseline"].strip(), _list(m["baseline_columns"])),
            threshold=ThresholdSpec(m["threshold"].strip(),
                                    None if tcov == "*" else _list(tcov)),
            include_expected=_bool(m["include_expected"]),
        )
    except ValueError as exc:
        raise ConfigError(f"[model] {exc}") from None
    cov_type = m["cov_type"].strip()
    if cov_type not in ("cluster", "robust", "nonrobust"):
        raise ConfigError(f"[model] cov_type: unknown value {cov_type!r}")
    o = raw["optimizer"]
    options = FitOptions(
        max_iter=_get(raw, "optimizer", "max_iter", int),
        grad_tol=_get(raw, "optimizer", "grad_tol", float),
        step_tol=_get(raw, "optimizer", "step_tol", float),
        box=_get(raw, "optimizer", "box", float),
        stages=_list(o["stages"]),
        fe_block_min=_get(raw, "optimizer", "fe_block_min", int),
        hessian_step=_get(raw, "optimizer", "hessian_step", float),
        newton_polish=_get(raw, "optimizer", "newton_polish", int),
    )
    dgp_kw = {k: _get(raw, "simulate", k, conv) for k, conv in _DGP_TYPES.items()}
    try:
        dgp = DgpConfig(seed=seed, **dgp_kw)
    except ValueError as exc:
        raise ConfigError(f"[simulate] {exc}") from None
    threads = _get(raw, "run", "threads", int)
    if threads < 1:
        raise ConfigError("[run] threads must be at least 1")
    return RunConfig(
        seed=seed, out=Path(raw["run"]["out"]), threads=threads,
        allow_nonconverged=_get(raw, "run", "allow_nonconverged", _bool),
        data_path=_optional(d["path"]), schema=schema,
        standardize=_list(d["standardize"]),
        standardize_scale=_get(raw, "data", "standardize_scale", _bool),
        spec=spec, cov_type=cov_type, options=options, dgp=dgp,
        sections={s: raw[s] for s in ("simulate", "fit", "lrtest", "counterfactual", "balance")},
    )


assert set(_DGP_TYPES) == {f.name for f in fields(DgpConfig)} - {"seed"}
