"""Synthetic promotion data with known favors and information effects.

Each exam draws a pool of eligible evaluators and a jury from that pool
without replacement. Candidates have strong and weak ties to random pool
members, so realized ties to the jury are hypergeometric given the ties to
the pool, and the expected number of jury ties is recorded alongside.

The jury grades candidate ``i`` as

    x_i beta + v_i                          (unconnected)
    x_i beta + v_i + E(u_i | signals) + B    (connected)

with ``v_i ~ N(0, sigma_v(x_i)^2)``. Under ``info_mode="signal"`` every tie
to a jury member sends an independent signal ``u_i + eps``; signals are
pooled by precision so ``E(u | signals) = kappa * theta_bar`` with
``kappa = sigma_u^2 tau / (1 + sigma_u^2 tau)`` and ``tau`` the total signal
precision. Under ``info_mode="parametric"`` the latent error of a candidate
is ``sigma_v(x) sigma(n_S, n_W, x) z`` with ``log sigma`` given by an
:class:`InfoSpec` and its coefficients.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .spec import (BaselineVarSpec, BiasSpec, InfoSpec, ModelSpec, ParamLayout,
                   ParamVector, SpecError, ThresholdSpec)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DgpConfig:
    n_exams: int = 50
    candidates_per_exam: int = 40
    m: int = 3
    beta: tuple = (0.5, -0.3, 0.4)
    beta_expected: tuple = (0.0, 0.0)
    sigma_u: float = 1.0
    sigma_v: float = 1.0
    delta_v: tuple = ()                 # log sd loadings on observables, padded with zeros
    info_mode: str = "signal"           # signal | parametric
    sigma_eps_strong: float = 1.0
    sigma_eps_weak: float = 2.0
    info_variant: str = "constant_connected"
    info_params: dict = field(default_factory=dict)
    bias_variant: str = "constant_connected"
    bias_params: dict = field(default_factory=lambda: {"B": 0.2})
    interacted: tuple = ()              # observables interacted with counts (variant 9)
    pool_size: tuple = (20, 40)         # inclusive range per exam
    jury_size: int = 7
    ties_strong_mean: float = 1.0
    ties_weak_mean: float = 2.0
    tie_loading: float = 0.0            # log-rate loading of tie counts on the first observable
    threshold_mode: str = "fixed_threshold"   # fixed_threshold | top_k
    n_group_covariates: int = 1
    a_true: tuple = (1.0, 0.3)
    positions: tuple = (2, 6)           # inclusive range per exam (top_k only)
    seed: int = 0

    def __post_init__(self):
        for name in ("beta", "beta_expected", "delta_v", "interacted", "pool_size",
                     "a_true", "positions"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "info_params", dict(self.info_params))
        object.__setattr__(self, "bias_params", dict(self.bias_params))
        self.validate()

    def validate(self):
        if self.n_exams < 1 or self.candidates_per_exam < 1:
            raise ConfigError("need at least one exam and one candidate per exam")
        if len(self.beta) != self.m:
            raise ConfigError(f"beta has {len(self.beta)} entries, m = {self.m}")
        if len(self.beta_expected) != 2:
            raise ConfigError("beta_expected needs two entries (strong, weak)")
        if len(self.delta_v) > self.m + 2:
            raise ConfigError("delta_v longer than the mean design")
        if min(self.sigma_u, self.sigma_v, self.sigma_eps_strong, self.sigma_eps_weak) <= 0:
            raise ConfigError("all standard deviations must be positive")
        lo, hi = self.pool_size
        if not 1 <= lo <= hi:
            raise ConfigError("pool_size must be an increasing positive range")
        if not 1 <= self.jury_size <= lo:
            raise ConfigError("jury_size must not exceed the smallest pool")
        if self.info_mode not in ("signal", "parametric"):
            raise ConfigError(f"unknown info_mode {self.info_mode!r}")
        if self.threshold_mode not in ("fixed_threshold", "top_k"):
            raise ConfigError(f"unknown threshold_mode {self.threshold_mode!r}")
        if len(self.a_true) != 1 + self.n_group_covariates:
            raise ConfigError("a_true needs an intercept plus one entry per group covariate")
        if self.threshold_mode == "top_k":
            plo, phi = self.positions
            if not 0 <= plo <= phi <= self.candidates_per_exam:
                raise ConfigError("positions range must lie within [0, candidates_per_exam]")
        if self.ties_strong_mean < 0 or self.ties_weak_mean < 0:
            raise ConfigError("tie means must be nonnegative")
        try:
            spec = self.truth_spec()
            names = {f"x{j + 1}" for j in range(self.m)} | {"e_strong", "e_weak"}
            for c in self.interacted:
                if c not in names:
                    raise ConfigError(f"interacted observable {c!r} unknown")
            BiasSpec(self.bias_variant)
            InfoSpec(self.info_variant)
        except SpecError as exc:
            raise ConfigError(str(exc)) from exc
        _ = spec

    @property
    def observable_names(self):
        return tuple(f"x{j + 1}" for j in range(self.m))

    def truth_spec(self) -> ModelSpec:
        """Model spec whose parameter layout holds the true values."""
        mean_cols = (*self.observable_names, "e_strong", "e_weak")
        dv = tuple(self.delta_v) + (0.0,) * (len(mean_cols) - len(self.delta_v))
        included = tuple(c for c, d in zip(mean_cols, dv) if d != 0)
        baseline = BaselineVarSpec("preferred_subset", included) if included \
            else BaselineVarSpec("homoscedastic")
        info = InfoSpec(self.info_variant, self.interacted) if self.info_mode == "parametric" \
            else InfoSpec("none")
        return ModelSpec(bias=BiasSpec(self.bias_variant, self.interacted), info=info,
                         baseline=baseline, threshold=ThresholdSpec("grouped_effects"))

    def to_dict(self):
        return asdict(self)


def expected_connections(pool_size, ties, jury_size):
    """Mean of the hypergeometric number of tied jurors: ``jury * ties / pool``."""
    pool_size = np.asarray(pool_size, dtype=float)
    ties = np.asarray(ties, dtype=float)
    if np.any(ties < 0) or np.any(ties > pool_size):
        raise ValueError("ties must lie in [0, pool_size]")
    out = jury_size * ties / pool_size
    return float(out) if out.ndim == 0 else out


@dataclass(eq=False)
class Truth:
    config: DgpConfig
    spec: ModelSpec
    params: ParamVector
    u: np.ndarray
    v: np.ndarray
    z_eps: np.ndarray
    theta: np.ndarray          # pooled signal (nan without ties)
    info_noise: np.ndarray     # kappa * theta (signal) or extra latent error (parametric)
    bias: np.ndarray
    grade: np.ndarray
    threshold: np.ndarray      # a_e per candidate (nan under top_k)
    pool_size: np.ndarray      # per exam
    ties_strong: np.ndarray
    ties_weak: np.ndarray

    @property
    def kappa_strong(self):
        su2 = self.config.sigma_u ** 2
        return su2 / (su2 + self.config.sigma_eps_strong ** 2)

    def to_dict(self):
        return {"config": self.config.to_dict(), "spec": self.spec.to_dict(),
                "layout": self.params.layout.to_list(),
                "params": self.params.values.tolist()}


def _exam_draws(rng, cfg: DgpConfig):
    n_c, m = cfg.candidates_per_exam, cfg.m
    P = int(rng.integers(cfg.pool_size[0], cfg.pool_size[1] + 1))
    z = rng.standard_normal(cfg.n_group_covariates)
    X = rng.standard_normal((n_c, m))
    load = np.exp(cfg.tie_loading * X[:, 0]) if m else np.ones(n_c)
    tS = np.minimum(rng.poisson(cfg.ties_strong_mean * load), P)
    tW = np.minimum(rng.poisson(cfg.ties_weak_mean * load), P - tS)
    jury = np.zeros(P)
    jury[rng.choice(P, cfg.jury_size, replace=False)] = 1.0
    # tied pool members: a uniformly random ordering of the pool per candidate,
    # the first tS are strong ties and the next tW weak ties
    order = np.argsort(rng.random((n_c, P)), axis=1)
    on_jury = jury[order]
    col = np.arange(P)[None, :]
    nS = (on_jury * (col < tS[:, None])).sum(axis=1).astype(np.int64)
    nW = (on_jury * ((col >= tS[:, None]) & (col < (tS + tW)[:, None]))).sum(axis=1).astype(np.int64)
    zu = rng.standard_normal(n_c)
    zv = rng.standard_normal(n_c)
    ze = rng.standard_normal(n_c)
    k = int(rng.integers(cfg.positions[0], cfg.positions[1] + 1)) \
        if cfg.threshold_mode == "top_k" else 0
    return dict(P=P, z=z, X=X, tS=tS, tW=tW, nS=nS, nW=nW, zu=zu, zv=zv, ze=ze, k=k)


def true_params(cfg: DgpConfig, ds: Dataset) -> ParamVector:
    spec = cfg.truth_spec()
    L = spec.layout(ds)
    theta = np.zeros(L.size)
    theta[L.slice("beta")] = [*cfg.beta, *cfg.beta_expected]
    theta[L.slice("threshold")] = cfg.a_true
    mean_cols = spec.mean_columns(ds)
    dv = tuple(cfg.delta_v) + (0.0,) * (len(mean_cols) - len(cfg.delta_v))
    theta[L.slice("delta_base")] = [d for d in dv if d != 0]
    pv = ParamVector(L, theta)
    params = dict(cfg.bias_params)
    if cfg.info_mode == "parametric":
        params.update(cfg.info_params)
    known = set(L.block_names("gamma")) | set(L.block_names("delta_info"))
    unknown = set(params) - known
    if unknown:
        raise ConfigError(f"unknown true parameters {sorted(unknown)}; expected among {sorted(known)}")
    return pv.set(**params)


def simulate(cfg: DgpConfig):
    """Draw a dataset and the latent truth behind it.

    Exam ``g`` uses the ``g``-th child of ``SeedSequence(cfg.seed)``, so
    outputs depend only on ``(seed, n_exams, ...)``.
    """
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_exams)
    draws = [_exam_draws(np.random.default_rng(s), cfg) for s in children]
    n_c = cfg.candidates_per_exam
    G = cfg.n_exams
    exam = np.repeat(np.arange(G), n_c)
    cat = lambda key: np.concatenate([d[key] for d in draws])
    X = np.vstack([d["X"] for d in draws]).reshape(G * n_c, cfg.m)
    pool = np.array([d["P"] for d in draws])
    tS, tW = cat("tS"), cat("tW")
    eS = expected_connections(pool[exam], tS, cfg.jury_size)
    eW = expected_connections(pool[exam], tW, cfg.jury_size)
    nS, nW = cat("nS"), cat("nW")
    Z = np.vstack([d["z"] for d in draws]).reshape(G, cfg.n_group_covariates)
    positions = np.array([d["k"] for d in draws])
    ds = Dataset(
        y=np.zeros(G * n_c, dtype=np.int64), X=X, n_strong=nS, n_weak=nW,
        e_strong=eS, e_weak=eW, exam=exam, exam_ids=[f"E{g:04d}" for g in range(G)],
        Z=Z, jury_size=np.full(G, cfg.jury_size), positions=positions,
        observable_names=cfg.observable_names,
        group_names=tuple(f"z{j + 1}" for j in range(cfg.n_group_covariates)),
    )
    spec = cfg.truth_spec()
    params = true_params(cfg, ds)
    design = spec.compile(ds)
    beta = params.beta
    xb = design.X @ beta
    bias = design.bias(params.values)
    ls_v, ls_info = design.log_sigma_parts(params.values)
    sd_v = cfg.sigma_v * np.exp(ls_v)
    zu, zv, ze = cat("zu"), cat("zv"), cat("ze")
    u = cfg.sigma_u * zu
    v = sd_v * zv
    theta = np.full(len(ds), np.nan)
    if cfg.info_mode == "signal":
        tau = nS / cfg.sigma_eps_strong ** 2 + nW / cfg.sigma_eps_weak ** 2
        has = tau > 0
        theta[has] = u[has] + ze[has] / np.sqrt(tau[has])
        su2 = cfg.sigma_u ** 2
        kappa = np.where(has, su2 * tau / (1.0 + su2 * tau), 0.0)
        info_noise = np.where(has, kappa * np.nan_to_num(theta), 0.0)
    else:
        info_noise = v * (np.exp(ls_info) - 1.0)
    grade = xb + v + info_noise + bias
    if cfg.threshold_mode == "fixed_threshold":
        a_e = np.column_stack([np.ones(G), Z]) @ np.asarray(cfg.a_true)
        thr = a_e[exam]
        y = (grade >= thr).astype(np.int64)
    else:
        thr = np.full(len(ds), np.nan)
        y = np.zeros(len(ds), dtype=np.int64)
        for g in range(G):
            rows = np.flatnonzero(exam == g)
            top = rows[np.argsort(-grade[rows], kind="stable")[:positions[g]]]
            y[top] = 1
    ds = ds.replace(y=y)
    truth = Truth(config=cfg, spec=spec, params=params, u=u, v=v, z_eps=ze, theta=theta,
                  info_noise=info_noise, bias=bias, grade=grade, threshold=thr,
                  pool_size=pool, ties_strong=tS, ties_weak=tW)
    return ds, truth


def connected_error_variance_ratio(sigma_u, sigma_eps, sigma_v):
    """Latent-error variance of a connected over an unconnected candidate."""
    return 1.0 + sigma_u ** 4 / (sigma_v ** 2 * (sigma_u ** 2 + sigma_eps ** 2))


def counterfactual_outcomes(ds: Dataset, truth: Truth, add_strong=1, add_weak=0):
    """Promotion indicators under a change in ties, from the latent draws.

    Returns ``(current, favors_only, changed)``: the realized rule, the rule
    with the new bias but the current information, and the rule after the
    change. Only available for ``fixed_threshold`` data.
    """
    cfg = truth.config
    if cfg.threshold_mode != "fixed_threshold":
        raise ConfigError("counterfactual outcomes need fixed thresholds")
    changed = ds.replace(n_strong=ds.n_strong + add_strong, n_weak=ds.n_weak + add_weak,
                         jury_size=ds.jury_size + add_strong + add_weak)
    design1 = truth.spec.compile(changed)
    bias1 = design1.bias(truth.params.values)
    xb = truth.grade - truth.v - truth.info_noise - truth.bias
    if cfg.info_mode == "signal":
        nS, nW = changed.n_strong, changed.n_weak
        tau = nS / cfg.sigma_eps_strong ** 2 + nW / cfg.sigma_eps_weak ** 2
        su2 = cfg.sigma_u ** 2
        has = tau > 0
        theta1 = np.where(has, truth.u + truth.z_eps / np.sqrt(np.where(has, tau, 1.0)), 0.0)
        info1 = np.where(has, su2 * tau / (1.0 + su2 * tau) * theta1, 0.0)
    else:
        _, ls_info1 = design1.log_sigma_parts(truth.params.values)
        info1 = truth.v * (np.exp(ls_info1) - 1.0)
    current = (truth.grade >= truth.threshold).astype(float)
    favors = (xb + truth.v + truth.info_noise + bias1 >= truth.threshold).astype(float)
    after = (xb + truth.v + info1 + bias1 >= truth.threshold).astype(float)
    return current, favors, after


def write_truth(ds: Dataset, truth: Truth, path):
    """Per-candidate latent draws as CSV plus a JSON sidecar with true parameters."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["exam_id", "u", "v", "z_eps", "theta", "info_noise", "bias", "grade",
                    "threshold", "ties_strong", "ties_weak", "promoted"])
        for i in range(len(ds)):
            w.writerow([ds.exam_ids[ds.exam[i]], *(repr(float(a[i])) for a in (
                truth.u, truth.v, truth.z_eps, truth.theta, truth.info_noise, truth.bias,
                truth.grade, truth.threshold)), int(truth.ties_strong[i]),
                int(truth.ties_weak[i]), int(ds.y[i])])
    side = path.with_suffix(".json")
    side.write_text(json.dumps(truth.to_dict(), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path, side
