"""Model variants and their compilation into design matrices.

Every supported variant is linear in its parameters on two indices:

    mean      = X beta - threshold + G gamma
    log_sigma = V_base delta_base + V_info delta_info

and the promotion probability is ``Phi(mean * exp(-log_sigma))``. Neither
variance design has an intercept, so ``sigma_v(0) = 1`` and unconnected
candidates get ``sigma(0, 0, x) = 1`` and ``B(0, 0, x) = 0`` by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Candidate, Dataset, Exam

BIAS_VARIANTS = ("none", "constant_connected", "linear_counts", "quadratic_counts",
                 "counts_by_observables")
INFO_VARIANTS = ("none", "constant_connected", "linear_counts", "counts_by_observables")
BASELINE_VARIANTS = ("homoscedastic", "preferred_subset", "full")
THRESHOLD_VARIANTS = ("fixed_effects", "grouped_effects")
BLOCKS = ("beta", "threshold", "gamma", "delta_base", "delta_info")
EXPECTED_COLUMNS = ("e_strong", "e_weak")


class SpecError(ValueError):
    pass


def _check_variant(value, allowed, what):
    if value not in allowed:
        raise SpecError(f"unknown {what} variant {value!r}; expected one of {allowed}")


@dataclass(frozen=True)
class BiasSpec:
    variant: str = "constant_connected"
    interacted_observables: tuple = ()
    quadratic: bool = True  # only read by counts_by_observables

    def __post_init__(self):
        _check_variant(self.variant, BIAS_VARIANTS, "bias")
        object.__setattr__(self, "interacted_observables", tuple(self.interacted_observables))


@dataclass(frozen=True)
class InfoSpec:
    variant: str = "constant_connected"
    interacted_observables: tuple = ()
    count_intercepts: bool = True  # only read by counts_by_observables

    def __post_init__(self):
        _check_variant(self.variant, INFO_VARIANTS, "info")
        object.__setattr__(self, "interacted_observables", tuple(self.interacted_observables))


@dataclass(frozen=True)
class BaselineVarSpec:
    variant: str = "homoscedastic"
    included_observables: tuple = ()

    def __post_init__(self):
        _check_variant(self.variant, BASELINE_VARIANTS, "baseline variance")
        object.__setattr__(self, "included_observables", tuple(self.included_observables))


@dataclass(frozen=True)
class ThresholdSpec:
    variant: str = "grouped_effects"
    covariates: tuple | None = None  # None: every group covariate of the dataset

    def __post_init__(self):
        _check_variant(self.variant, THRESHOLD_VARIANTS, "threshold")
        if self.covariates is not None:
            object.__setattr__(self, "covariates", tuple(self.covariates))


@dataclass(frozen=True)
class ModelSpec:
    bias: BiasSpec = field(default_factory=BiasSpec)
    info: InfoSpec = field(default_factory=InfoSpec)
    baseline: BaselineVarSpec = field(default_factory=BaselineVarSpec)
    threshold: ThresholdSpec = field(default_factory=ThresholdSpec)
    include_expected: bool = True

    @classmethod
    def model(cls, number, *, baseline=None, threshold=None, interacted=(),
              include_expected=True):
        """Shorthand for the four nested families.

        6: constant bias and information for connected candidates.
        7: linear in tie counts. 8: quadratic bias, linear information.
        9: counts interacted with ``interacted`` observables.
        """
        table = {
            6: (BiasSpec("constant_connected"), InfoSpec("constant_connected")),
            7: (BiasSpec("linear_counts"), InfoSpec("linear_counts")),
            8: (BiasSpec("quadratic_counts"), InfoSpec("linear_counts")),
            9: (BiasSpec("counts_by_observables", interacted),
                InfoSpec("counts_by_observables", interacted)),
        }
        if number not in table:
            raise SpecError(f"no model {number}; expected 6, 7, 8 or 9")
        bias, info = table[number]
        return cls(bias=bias, info=info,
                   baseline=baseline or BaselineVarSpec(),
                   threshold=threshold or ThresholdSpec(),
                   include_expected=include_expected)

    def replace(self, **changes):
        kw = dict(bias=self.bias, info=self.info, baseline=self.baseline,
                  threshold=self.threshold, include_expected=self.include_expected)
        kw.update(changes)
        return ModelSpec(**kw)

    def homoscedastic(self):
        """Same mean structure with every variance block removed."""
        return self.replace(info=InfoSpec("none"), baseline=BaselineVarSpec("homoscedastic"))

    # -- column names ---------------------------------------------------------
    def mean_columns(self, ds: Dataset):
        cols = list(ds.observable_names)
        if self.include_expected:
            cols += [c for c in EXPECTED_COLUMNS if c not in cols]
        return tuple(cols)

    def baseline_columns(self, ds: Dataset):
        v = self.baseline.variant
        if v == "homoscedastic":
            return ()
        available = self.mean_columns(ds)
        if v == "full":
            return available
        for c in self.baseline.included_observables:
            if c not in available:
                raise SpecError(f"baseline variance column {c!r} not in the mean design")
        return tuple(self.baseline.included_observables)

    def threshold_columns(self, ds: Dataset):
        if self.threshold.variant == "fixed_effects":
            return tuple(f"a[{e}]" for e in ds.exam_ids)
        covs = ds.group_names if self.threshold.covariates is None else self.threshold.covariates
        for c in covs:
            if c not in ds.group_names:
                raise SpecError(f"group covariate {c!r} not in dataset")
        return ("a:const", *(f"a:{c}" for c in covs))

    def _interacted(self, ds, names):
        available = self.mean_columns(ds)
        for c in names:
            if c not in available:
                raise SpecError(f"interacted observable {c!r} not in the mean design")
        return tuple(names)

    def bias_columns(self, ds: Dataset):
        v = self.bias.variant
        if v == "none":
            return ()
        if v == "constant_connected":
            return ("B",)
        if v == "linear_counts":
            return ("gamma_S", "gamma_W")
        if v == "quadratic_counts":
            return ("gamma_1S", "gamma_2S", "gamma_1W", "gamma_2W", "gamma_SW")
        inter = self._interacted(ds, self.bias.interacted_observables)
        cols = ["gamma_0S", *(f"gamma_S:{c}" for c in inter),
                "gamma_0W", *(f"gamma_W:{c}" for c in inter)]
        if self.bias.quadratic:
            cols += ["gamma_2S", "gamma_2W", "gamma_SW"]
        return tuple(cols)

    def info_columns(self, ds: Dataset):
        v = self.info.variant
        if v == "none":
            return ()
        if v == "constant_connected":
            return ("delta_c",)
        if v == "linear_counts":
            return ("delta_S", "delta_W")
        inter = self._interacted(ds, self.info.interacted_observables)
        s0 = ["delta_0S"] if self.info.count_intercepts else []
        w0 = ["delta_0W"] if self.info.count_intercepts else []
        return tuple([*s0, *(f"delta_S:{c}" for c in inter),
                      *w0, *(f"delta_W:{c}" for c in inter)])

    def layout(self, ds: Dataset) -> "ParamLayout":
        return ParamLayout((
            ("beta", self.mean_columns(ds)),
            ("threshold", self.threshold_columns(ds)),
            ("gamma", self.bias_columns(ds)),
            ("delta_base", tuple(f"lnsv:{c}" for c in self.baseline_columns(ds))),
            ("delta_info", self.info_columns(ds)),
        ))

    def compile(self, ds: Dataset, layout: "ParamLayout | None" = None) -> "Design":
        return Design.build(self, ds, layout)

    def to_dict(self):
        return {
            "bias": {"variant": self.bias.variant,
                     "interacted_observables": list(self.bias.interacted_observables),
                     "quadratic": self.bias.quadratic},
            "info": {"variant": self.info.variant,
                     "interacted_observables": list(self.info.interacted_observables),
                     "count_intercepts": self.info.count_intercepts},
            "baseline": {"variant": self.baseline.variant,
                         "included_observables": list(self.baseline.included_observables)},
            "threshold": {"variant": self.threshold.variant,
                          "covariates": None if self.threshold.covariates is None
                          else list(self.threshold.covariates)},
            "include_expected": self.include_expected,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            bias=BiasSpec(**d["bias"]), info=InfoSpec(**d["info"]),
            baseline=BaselineVarSpec(**d["baseline"]),
            threshold=ThresholdSpec(**d["threshold"]),
            include_expected=d.get("include_expected", True),
        )


# -- parameter layout ---------------------------------------------------------

# linear count terms reappear under these names in the richer families
NESTING_ALIASES = {
    "gamma_S": ("gamma_1S", "gamma_0S"),
    "gamma_W": ("gamma_1W", "gamma_0W"),
    "gamma_1S": ("gamma_0S",),
    "gamma_1W": ("gamma_0W",),
    "delta_S": ("delta_0S",),
    "delta_W": ("delta_0W",),
}

@dataclass(frozen=True)
class ParamLayout:
    """Ordered named blocks ``beta | threshold | gamma | delta_base | delta_info``."""

    blocks: tuple

    def __post_init__(self):
        blocks = tuple((b, tuple(n)) for b, n in self.blocks)
        if tuple(b for b, _ in blocks) != BLOCKS:
            raise SpecError(f"layout blocks must be {BLOCKS}")
        object.__setattr__(self, "blocks", blocks)
        names = self.names
        if len(set(names)) != len(names):
            raise SpecError("duplicate parameter names in layout")

    @property
    def names(self):
        return tuple(n for _, block in self.blocks for n in block)

    @property
    def size(self):
        return sum(len(n) for _, n in self.blocks)

    def block_names(self, block):
        return dict(self.blocks)[block]

    def slice(self, block):
        start = 0
        for b, n in self.blocks:
            if b == block:
                return slice(start, start + len(n))
            start += len(n)
        raise KeyError(block)

    def index(self, name):
        return self.names.index(name)

    def block_of(self, name):
        for b, n in self.blocks:
            if name in n:
                return b
        raise KeyError(name)

    def _targets(self, other: "ParamLayout"):
        """Name in ``other`` for each parameter here, or None where missing."""
        out = []
        for b, names in self.blocks:
            there = set(other.block_names(b))
            for n in names:
                if n in there:
                    out.append(n)
                else:
                    alias = [a for a in NESTING_ALIASES.get(n, ()) if a in there]
                    out.append(alias[0] if alias else None)
        return out

    def embeds_in(self, other: "ParamLayout"):
        """True when every parameter here has a slot in ``other`` in the same block."""
        return None not in self._targets(other)

    def embed(self, values, other: "ParamLayout"):
        """Zero-pad ``values`` (laid out as ``self``) into ``other``."""
        targets = self._targets(other)
        if None in targets:
            raise SpecError("layout does not embed by zero padding")
        out = np.zeros(other.size)
        pos = {n: i for i, n in enumerate(other.names)}
        for i, n in enumerate(targets):
            out[pos[n]] = values[i]
        return out

    def to_list(self):
        return [[b, list(n)] for b, n in self.blocks]

    @classmethod
    def from_list(cls, blocks):
        return cls(tuple((b, tuple(n)) for b, n in blocks))


class ParamVector:
    """Flat parameter values with named block views."""

    def __init__(self, layout: ParamLayout, values=None):
        values = np.zeros(layout.size) if values is None else np.array(values, dtype=float)
        if values.shape != (layout.size,):
            raise SpecError(f"expected {layout.size} parameters, got {values.shape}")
        values.setflags(write=False)
        self.layout = layout
        self.values = values

    def __len__(self):
        return self.layout.size

    def __array__(self, dtype=None, copy=None):
        return self.values.astype(dtype) if dtype else self.values

    def __getitem__(self, name):
        return self.values[self.layout.index(name)]

    def block(self, name):
        return self.values[self.layout.slice(name)]

    beta = property(lambda self: self.block("beta"))
    threshold = property(lambda self: self.block("threshold"))
    gamma = property(lambda self: self.block("gamma"))
    delta_base = property(lambda self: self.block("delta_base"))
    delta_info = property(lambda self: self.block("delta_info"))

    def named(self):
        return dict(zip(self.layout.names, self.values.tolist()))

    def with_values(self, values):
        return ParamVector(self.layout, values)

    def set(self, **named):
        v = self.values.copy()
        for k, val in named.items():
            v[self.layout.index(k)] = val
        return ParamVector(self.layout, v)

    def set_block(self, block, values):
        v = self.values.copy()
        v[self.layout.slice(block)] = values
        return ParamVector(self.layout, v)

    def embed(self, layout: ParamLayout):
        return ParamVector(layout, self.layout.embed(self.values, layout))

    def __repr__(self):
        items = ", ".join(f"{k}={v:.4g}" for k, v in list(self.named().items())[:8])
        more = "" if len(self) <= 8 else f", ... ({len(self)} total)"
        return f"ParamVector({items}{more})"


# -- compiled design ------------------------------------------------------------

def _bias_design(spec: ModelSpec, ds: Dataset, M, mcols):
    ns = ds.n_strong.astype(float)
    nw = ds.n_weak.astype(float)
    c = (ns + nw >= 1).astype(float)
    v = spec.bias.variant
    if v == "none":
        return np.zeros((len(ds), 0))
    if v == "constant_connected":
        return c[:, None]
    if v == "linear_counts":
        return np.column_stack([ns, nw])
    if v == "quadratic_counts":
        return np.column_stack([ns, ns ** 2, nw, nw ** 2, ns * nw])
    inter = M[:, [mcols.index(k) for k in spec.bias.interacted_observables]]
    cols = [ns[:, None], ns[:, None] * inter, nw[:, None], nw[:, None] * inter]
    if spec.bias.quadratic:
        cols.append(np.column_stack([ns ** 2, nw ** 2, ns * nw]))
    return np.hstack(cols)


def _info_design(spec: ModelSpec, ds: Dataset, M, mcols):
    ns = ds.n_strong.astype(float)
    nw = ds.n_weak.astype(float)
    v = spec.info.variant
    if v == "none":
        return np.zeros((len(ds), 0))
    if v == "constant_connected":
        return ((ns + nw) >= 1).astype(float)[:, None]
    if v == "linear_counts":
        return np.column_stack([ns, nw])
    inter = M[:, [mcols.index(k) for k in spec.info.interacted_observables]]
    s = [ns[:, None]] if spec.info.count_intercepts else []
    w = [nw[:, None]] if spec.info.count_intercepts else []
    return np.hstack([*s, ns[:, None] * inter, *w, nw[:, None] * inter])


@dataclass(eq=False)
class Design:
    """Per-candidate design rows for one (spec, dataset) pair."""

    spec: ModelSpec
    layout: ParamLayout
    X: np.ndarray            # mean design (n, k_beta)
    T: np.ndarray | None     # grouped-effect rows (n, k_a); None under fixed effects
    exam_col: np.ndarray     # fixed effects: threshold parameter index per candidate
    G: np.ndarray            # bias design (n, k_gamma)
    V: np.ndarray            # log-variance design (n, k_delta), base then info
    y: np.ndarray
    cluster: np.ndarray      # exam code per candidate
    n_clusters: int

    @classmethod
    def build(cls, spec: ModelSpec, ds: Dataset, layout: ParamLayout | None = None):
        own = spec.layout(ds)
        if layout is None:
            layout = own
        mcols = spec.mean_columns(ds)
        M = np.column_stack([ds.column(c) for c in mcols]) if mcols else np.zeros((len(ds), 0))
        if spec.threshold.variant == "grouped_effects":
            covs = ds.group_names if spec.threshold.covariates is None else spec.threshold.covariates
            Zg = np.column_stack([np.ones(ds.n_exams),
                                  *[ds.Z[:, ds.group_names.index(c)] for c in covs]])
            T = Zg[ds.exam]
            exam_col = np.zeros(0, dtype=np.int64)
        else:
            T = None
            names = layout.block_names("threshold")
            pos = {n: i for i, n in enumerate(names)}
            missing = [f"a[{e}]" for e in ds.exam_ids if f"a[{e}]" not in pos]
            if missing:
                raise SpecError(f"no fixed effect for exams {missing[:5]}")
            per_exam = np.array([pos[f"a[{e}]"] for e in ds.exam_ids], dtype=np.int64)
            exam_col = per_exam[ds.exam]
        base_cols = spec.baseline_columns(ds)
        Vb = (M[:, [mcols.index(c) for c in base_cols]] if base_cols
              else np.zeros((len(ds), 0)))
        V = np.hstack([Vb, _info_design(spec, ds, M, mcols)])
        G = _bias_design(spec, ds, M, mcols)
        # the layout passed in must agree with this spec block by block,
        # except fixed-effect names which may cover more exams
        for b in ("beta", "gamma", "delta_base", "delta_info"):
            if layout.block_names(b) != own.block_names(b):
                raise SpecError(f"parameter block {b!r} does not match the model spec")
        if T is not None and layout.block_names("threshold") != own.block_names("threshold"):
            raise SpecError("threshold block does not match the model spec")
        return cls(spec=spec, layout=layout, X=np.ascontiguousarray(M), T=T,
                   exam_col=exam_col, G=np.ascontiguousarray(G),
                   V=np.ascontiguousarray(V), y=ds.y.astype(float),
                   cluster=ds.exam.copy(), n_clusters=ds.n_exams)

    @property
    def n(self):
        return len(self.y)

    @property
    def fixed_effects(self):
        return self.T is None

    def split(self, theta):
        L = self.layout
        return (theta[L.slice("beta")], theta[L.slice("threshold")], theta[L.slice("gamma")],
                np.concatenate([theta[L.slice("delta_base")], theta[L.slice("delta_info")]]))

    def threshold_values(self, a):
        return a[self.exam_col] if self.T is None else self.T @ a

    def index(self, theta):
        """Per-candidate ``(mean, log_sigma)``."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.layout.size,):
            raise SpecError(f"expected {self.layout.size} parameters, got {theta.shape}")
        beta, a, gamma, delta = self.split(theta)
        mean = self.X @ beta - self.threshold_values(a) + self.G @ gamma
        log_sigma = self.V @ delta
        return mean, log_sigma

    def bias(self, theta):
        return self.G @ self.split(np.asarray(theta, dtype=float))[2]

    def log_sigma_parts(self, theta):
        """``(log sigma_v(x), log sigma(n_S, n_W, x))`` per candidate."""
        theta = np.asarray(theta, dtype=float)
        L = self.layout
        kb = len(L.block_names("delta_base"))
        return (self.V[:, :kb] @ theta[L.slice("delta_base")],
                self.V[:, kb:] @ theta[L.slice("delta_info")])

    def mean_jacobian(self):
        """Dense ``d mean / d theta`` for the non-variance blocks (n, k_mean).

        Under fixed effects the threshold columns are one-hot per exam.
        """
        n = self.n
        if self.T is None:
            k_a = len(self.layout.block_names("threshold"))
            Ta = np.zeros((n, k_a))
            Ta[np.arange(n), self.exam_col] = 1.0
        else:
            Ta = self.T
        return np.hstack([self.X, -Ta, self.G])


def probability(mean, log_sigma):
    from .stats import norm_cdf
    return norm_cdf(np.asarray(mean) * np.exp(-np.asarray(log_sigma)))


def _single_dataset(cand: Candidate, exam: Exam, observable_names, group_names):
    return Dataset.from_records([cand], [exam], observable_names, group_names)


def linear_index(spec: ModelSpec, params: ParamVector, cand: Candidate, exam: Exam,
                 observable_names: Sequence[str], group_names: Sequence[str] = ()):
    """``(mean, log_sigma)`` for one candidate sitting ``exam``."""
    if len(cand.observables) != len(observable_names):
        raise SpecError("candidate observables do not match observable_names")
    one = _single_dataset(cand, exam, observable_names, group_names)
    design = spec.compile(one, params.layout)
    mean, ls = design.index(params.values)
    return float(mean[0]), float(ls[0])


# -- observational equivalence ------------------------------------------------

class ReparamError(ValueError):
    def __init__(self, candidates):
        self.candidates = list(candidates)
        super().__init__(
            "x*beta + B - a_e is zero for candidate(s) "
            + ", ".join(str(i) for i in self.candidates[:10]))


@dataclass
class EquivalentModel:
    """An alternative (bias, excess sd) pair with the same promotion probabilities."""

    mean_part: np.ndarray   # x*beta - a_e
    log_sigma_v: np.ndarray
    bias: np.ndarray
    sigma: np.ndarray
    new_bias: np.ndarray
    new_sigma: np.ndarray

    def probabilities(self, alternative=True):
        from .stats import norm_cdf
        b, s = (self.new_bias, self.new_sigma) if alternative else (self.bias, self.sigma)
        return norm_cdf((self.mean_part + b) / (np.exp(self.log_sigma_v) * s))

    @property
    def admissible(self):
        """Candidates for which the alternative excess sd is a valid (positive) scale."""
        return self.new_sigma > 0


def equivalent_reparam(spec: ModelSpec, params: ParamVector, ds: Dataset, new_bias,
                       tol=1e-12) -> EquivalentModel:
    """Excess sd ``sigma'`` making bias ``new_bias`` observationally equivalent.

    ``sigma' = (x beta + B' - a_e) / (x beta + B - a_e) * sigma`` candidate by
    candidate; the result is an evaluation-level model, not a member of any
    parametric family.
    """
    design = spec.compile(ds, params.layout)
    theta = params.values
    mean, _ = design.index(theta)
    B = design.bias(theta)
    ls_v, ls_info = design.log_sigma_parts(theta)
    new_bias = np.broadcast_to(np.asarray(new_bias, dtype=float), mean.shape)
    bad = np.flatnonzero(np.abs(mean) <= tol)
    if bad.size:
        raise ReparamError(bad.tolist())
    base = mean - B
    sigma = np.exp(ls_info)
    new_sigma = (base + new_bias) / mean * sigma
    return EquivalentModel(mean_part=base, log_sigma_v=ls_v, bias=B, sigma=sigma,
                           new_bias=np.array(new_bias), new_sigma=new_sigma)
