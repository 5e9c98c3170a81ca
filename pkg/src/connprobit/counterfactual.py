"""Predicted effect of gaining a tie to the jury, split into favors and information.

For candidate ``i`` with index ``mean0, log_sigma0`` now and ``mean1,
log_sigma1`` after the change (exam threshold held fixed):

    baseline = Phi(mean0 / sigma0)
    favor    = Phi(mean1 / sigma0) - Phi(mean0 / sigma0)
    info     = Phi(mean1 / sigma1) - Phi(mean1 / sigma0)
    total    = Phi(mean1 / sigma1) - Phi(mean0 / sigma0) = favor + info

The alternative order applies the variance change first.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .data import Candidate, Dataset, Exam
from .spec import ModelSpec, ParamVector
from .stats import norm_cdf


@dataclass(frozen=True)
class Change:
    add_strong: int = 1
    add_weak: int = 0
    only_unconnected: bool = False
    name: str = "add_strong"


CHANGES = {
    "connect": Change(1, 0, True, "connect"),
    "add_strong": Change(1, 0, False, "add_strong"),
    "add_weak": Change(0, 1, False, "add_weak"),
}


def as_change(change) -> Change:
    if isinstance(change, Change):
        return change
    try:
        return CHANGES[change]
    except KeyError:
        raise ValueError(f"unknown change {change!r}; expected one of {sorted(CHANGES)}") from None


@dataclass
class CfDecomposition:
    """Per-candidate decomposition (arrays, or floats for a single candidate)."""

    baseline_p: np.ndarray
    total: np.ndarray
    info_part: np.ndarray
    favor_part: np.ndarray
    info_alt: np.ndarray      # variance change applied first
    favor_alt: np.ndarray
    rows: np.ndarray | None = None

    def __len__(self):
        return np.size(self.baseline_p)


def apply_change(ds: Dataset, change) -> Dataset:
    ch = as_change(change)
    if ch.only_unconnected and ds.connected.any():
        bad = int(np.flatnonzero(ds.connected)[0])
        raise ValueError(f"change {ch.name!r} applies to unconnected candidates only "
                         f"(candidate {bad} is connected)")
    return ds.replace(n_strong=ds.n_strong + ch.add_strong, n_weak=ds.n_weak + ch.add_weak,
                      jury_size=ds.jury_size + ch.add_strong + ch.add_weak)


def decompose(spec: ModelSpec, params: ParamVector, ds: Dataset, change="connect") -> CfDecomposition:
    """Decomposition for every candidate of ``ds``."""
    d0 = spec.compile(ds, params.layout)
    d1 = spec.compile(apply_change(ds, change), params.layout)
    theta = params.values
    mean0, ls0 = d0.index(theta)
    mean1, ls1 = d1.index(theta)
    s0, s1 = np.exp(-ls0), np.exp(-ls1)
    p0 = norm_cdf(mean0 * s0)
    p_fav = norm_cdf(mean1 * s0)
    p_inf = norm_cdf(mean0 * s1)
    p1 = norm_cdf(mean1 * s1)
    return CfDecomposition(
        baseline_p=p0, total=p1 - p0, info_part=p1 - p_fav, favor_part=p_fav - p0,
        info_alt=p_inf - p0, favor_alt=p1 - p_inf, rows=np.arange(len(ds)),
    )


def marginal_effect(spec: ModelSpec, params: ParamVector, cand: Candidate, exam: Exam,
                    change="connect", observable_names=(), group_names=()) -> CfDecomposition:
    one = Dataset.from_records([cand], [exam], observable_names or
                               tuple(f"x{j}" for j in range(len(cand.observables))),
                               group_names)
    d = decompose(spec, params, one, change)
    return CfDecomposition(*(float(getattr(d, f)[0]) for f in
                             ("baseline_p", "total", "info_part", "favor_part",
                              "info_alt", "favor_alt")))


# -- subsamples ----------------------------------------------------------------

SUBSAMPLES: dict[str, Callable[[Dataset], np.ndarray]] = {
    "all": lambda ds: np.ones(len(ds), dtype=bool),
    "unconnected": lambda ds: ~ds.connected,
    # unconnected to the jury but with ties to eligible evaluators
    "unconnected_linked": lambda ds: ~ds.connected & ((ds.e_strong + ds.e_weak) > 0),
    "unconnected_strong_weak": lambda ds: ~ds.connected & (ds.e_strong > 0) & (ds.e_weak > 0),
}


def subsample_mask(ds: Dataset, subsample) -> np.ndarray:
    if subsample is None:
        subsample = "all"
    if isinstance(subsample, str):
        if subsample not in SUBSAMPLES:
            raise ValueError(f"unknown subsample {subsample!r}; expected one of {sorted(SUBSAMPLES)}")
        return SUBSAMPLES[subsample](ds)
    if callable(subsample):
        return np.asarray(subsample(ds), dtype=bool)
    mask = np.asarray(subsample)
    if mask.dtype != bool:
        m = np.zeros(len(ds), dtype=bool)
        m[mask] = True
        mask = m
    return mask


@dataclass
class EffectSummary:
    n: int
    means: dict
    sds: dict
    alt_means: dict
    order_differs: bool

    def row(self):
        return {k: (self.means[k], self.sds[k]) for k in self.means}


def average_effects(spec: ModelSpec, params: ParamVector, ds: Dataset, subsample="unconnected_linked",
                    change="connect", order_tolerance=0.10) -> EffectSummary:
    """Means and standard deviations of the decomposition over a subsample.

    ``order_differs`` is set when either part changes by more than
    ``order_tolerance`` (relative) between the two decomposition orders.
    """
    mask = subsample_mask(ds, subsample)
    if not mask.any():
        raise ValueError("empty subsample")
    d = decompose(spec, params, ds.subset(mask), change)
    fields = {"baseline": d.baseline_p, "total": d.total, "info": d.info_part,
              "favor": d.favor_part}
    means = {k: float(np.mean(v)) for k, v in fields.items()}
    sds = {k: float(np.std(v)) for k, v in fields.items()}
    alt = {"info": float(np.mean(d.info_alt)), "favor": float(np.mean(d.favor_alt))}
    differs = any(
        abs(alt[k] - means[k]) > order_tolerance * max(abs(means[k]), 1e-12)
        for k in ("info", "favor"))
    return EffectSummary(int(mask.sum()), means, sds, alt, differs)


def binned_curve(d: CfDecomposition, bins=20):
    """Equal-count bins of baseline probability with mean parts per bin."""
    order = np.argsort(d.baseline_p, kind="stable")
    groups = np.array_split(order, min(bins, len(order)))
    out = {k: [] for k in ("baseline", "total", "info", "favor")}
    for g in groups:
        out["baseline"].append(d.baseline_p[g].mean())
        out["total"].append(d.total[g].mean())
        out["info"].append(d.info_part[g].mean())
        out["favor"].append(d.favor_part[g].mean())
    return {k: np.array(v) for k, v in out.items()}


def write_decomposition(ds: Dataset, d: CfDecomposition, path, change="connect"):
    """One row per candidate for external smoothing (e.g. LOESS)."""
    tags = {name: fn(ds) for name, fn in SUBSAMPLES.items() if name != "all"}
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "exam_id", "change", "baseline_p", "total", "info_part",
                    "favor_part", *tags])
        for i in range(len(ds)):
            w.writerow([i + 1, ds.exam_ids[ds.exam[i]], as_change(change).name,
                        *(f"{float(a[i]):.12g}" for a in
                          (d.baseline_p, d.total, d.info_part, d.favor_part)),
                        *(int(t[i]) for t in tags.values())])
    return path
