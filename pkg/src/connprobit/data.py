"""Promotion datasets: candidates grouped into exams.

A :class:`Dataset` is columnar. Candidate ``i`` has outcome ``y[i]``,
observables ``X[i]``, realized strong/weak ties to the jury, the expected
number of such ties, and an exam code ``exam[i]`` indexing the exam-level
arrays (``exam_ids``, ``Z``, ``jury_size``, ``positions``).
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_JURY_SIZE = 7


class DataError(ValueError):
    """Invalid dataset content, with the offending location when known."""

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class Candidate:
    outcome: int
    observables: tuple
    n_strong: int
    n_weak: int
    e_strong: float
    e_weak: float
    exam_id: str


@dataclass(frozen=True)
class Exam:
    exam_id: str
    group_covariates: tuple
    jury_size: int = DEFAULT_JURY_SIZE
    positions: int = 0


@dataclass(frozen=True, eq=False)
class Dataset:
    y: np.ndarray
    X: np.ndarray
    n_strong: np.ndarray
    n_weak: np.ndarray
    e_strong: np.ndarray
    e_weak: np.ndarray
    exam: np.ndarray
    exam_ids: np.ndarray
    Z: np.ndarray
    jury_size: np.ndarray
    positions: np.ndarray
    observable_names: tuple = ()
    group_names: tuple = ()
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.y)
        as_int = lambda a: np.ascontiguousarray(a, dtype=np.int64)
        as_float = lambda a: np.ascontiguousarray(a, dtype=float)
        object.__setattr__(self, "y", as_int(self.y))
        object.__setattr__(self, "X", as_float(np.reshape(self.X, (n, -1))))
        for name in ("n_strong", "n_weak", "exam"):
            object.__setattr__(self, name, as_int(getattr(self, name)))
        for name in ("e_strong", "e_weak"):
            object.__setattr__(self, name, as_float(getattr(self, name)))
        G = len(self.exam_ids)
        object.__setattr__(self, "exam_ids", np.asarray(self.exam_ids, dtype=str))
        object.__setattr__(self, "Z", as_float(np.reshape(self.Z, (G, -1))))
        object.__setattr__(self, "jury_size", as_int(self.jury_size))
        object.__setattr__(self, "positions", as_int(self.positions))
        object.__setattr__(self, "observable_names", tuple(self.observable_names))
        object.__setattr__(self, "group_names", tuple(self.group_names))
        if not self.observable_names:
            object.__setattr__(
                self, "observable_names", tuple(f"x{j}" for j in range(self.X.shape[1]))
            )
        if not self.group_names:
            object.__setattr__(
                self, "group_names", tuple(f"z{j}" for j in range(self.Z.shape[1]))
            )
        for a in (self.X, self.y, self.Z, self.e_strong, self.e_weak):
            a.setflags(write=False)
        self.validate()

    # -- invariants ---------------------------------------------------------
    def validate(self):
        n, G = self.n_candidates, self.n_exams
        for name in ("y", "n_strong", "n_weak", "e_strong", "e_weak", "exam"):
            if len(getattr(self, name)) != n:
                raise DataError(f"{name} has length {len(getattr(self, name))}, expected {n}")
        if self.X.shape[1] != len(self.observable_names):
            raise DataError("observable_names does not match X")
        if self.Z.shape[1] != len(self.group_names):
            raise DataError("group_names does not match Z")
        if len(self.jury_size) != G or len(self.positions) != G:
            raise DataError("exam-level arrays disagree with exam_ids")
        if len(set(self.exam_ids.tolist())) != G:
            raise DataError("duplicate exam ids")
        bad = np.flatnonzero((self.exam < 0) | (self.exam >= G))
        if bad.size:
            raise DataError("unresolvable exam", row=int(bad[0]) + 1)
        bad = np.flatnonzero((self.y != 0) & (self.y != 1))
        if bad.size:
            raise DataError("outcome must be 0 or 1", row=int(bad[0]) + 1)
        if not np.all(np.isfinite(self.X)):
            r, c = np.argwhere(~np.isfinite(self.X))[0]
            raise DataError("non-finite observable", row=int(r) + 1,
                            column=self.observable_names[c])
        if not np.all(np.isfinite(self.Z)):
            raise DataError("non-finite group covariate")
        jury = self.jury_size[self.exam] if n else np.zeros(0, dtype=np.int64)
        for name in ("n_strong", "n_weak"):
            a = getattr(self, name)
            bad = np.flatnonzero((a < 0) | (a > jury))
            if bad.size:
                raise DataError(f"{name} outside [0, jury size]", row=int(bad[0]) + 1,
                                column=name)
        for name in ("e_strong", "e_weak"):
            a = getattr(self, name)
            bad = np.flatnonzero(~np.isfinite(a) | (a < 0))
            if bad.size:
                raise DataError(f"{name} must be finite and >= 0", row=int(bad[0]) + 1,
                                column=name)

    # -- views ----------------------------------------------------------------
    @property
    def n_candidates(self):
        return len(self.y)

    @property
    def n_exams(self):
        return len(self.exam_ids)

    def __len__(self):
        return self.n_candidates

    @property
    def connected(self):
        return (self.n_strong + self.n_weak) >= 1

    def candidate(self, i):
        return Candidate(
            outcome=int(self.y[i]),
            observables=tuple(float(v) for v in self.X[i]),
            n_strong=int(self.n_strong[i]),
            n_weak=int(self.n_weak[i]),
            e_strong=float(self.e_strong[i]),
            e_weak=float(self.e_weak[i]),
            exam_id=str(self.exam_ids[self.exam[i]]),
        )

    @property
    def candidates(self):
        return [self.candidate(i) for i in range(self.n_candidates)]

    def exam_record(self, g):
        return Exam(str(self.exam_ids[g]), tuple(float(v) for v in self.Z[g]),
                    int(self.jury_size[g]), int(self.positions[g]))

    @property
    def exams(self):
        return [self.exam_record(g) for g in range(self.n_exams)]

    def column(self, name):
        """Candidate-level column by name (observable or connection field)."""
        if name in self.observable_names:
            return self.X[:, self.observable_names.index(name)]
        if name in ("n_strong", "n_weak", "e_strong", "e_weak", "y"):
            return getattr(self, name)
        if name in self.group_names:
            return self.Z[self.exam, self.group_names.index(name)]
        raise KeyError(name)

    def replace(self, **changes):
        fields = dict(
            y=self.y, X=self.X, n_strong=self.n_strong, n_weak=self.n_weak,
            e_strong=self.e_strong, e_weak=self.e_weak, exam=self.exam,
            exam_ids=self.exam_ids, Z=self.Z, jury_size=self.jury_size,
            positions=self.positions, observable_names=self.observable_names,
            group_names=self.group_names, flags=dict(self.flags),
        )
        fields.update(changes)
        return Dataset(**fields)

    def subset(self, rows):
        """Candidates selected by a boolean mask or index array.

        Exams left without candidates are dropped and exam codes renumbered.
        """
        rows = np.asarray(rows)
        idx = np.flatnonzero(rows) if rows.dtype == bool else rows.astype(np.int64)
        kept, new_code = np.unique(self.exam[idx], return_inverse=True)
        return self.replace(
            y=self.y[idx], X=self.X[idx], n_strong=self.n_strong[idx],
            n_weak=self.n_weak[idx], e_strong=self.e_strong[idx],
            e_weak=self.e_weak[idx], exam=new_code.reshape(-1),
            exam_ids=self.exam_ids[kept], Z=self.Z[kept],
            jury_size=self.jury_size[kept], positions=self.positions[kept],
        )

    def degenerate_exams(self):
        """Boolean mask over exams where every candidate has the same outcome."""
        G = self.n_exams
        count = np.bincount(self.exam, minlength=G)
        promoted = np.bincount(self.exam, weights=self.y, minlength=G)
        return (promoted == 0) | (promoted == count)

    def drop_degenerate_exams(self):
        bad = self.degenerate_exams()
        if not bad.any():
            return self
        logger.info("dropping %d degenerate exams (%d candidates)",
                    int(bad.sum()), int(bad[self.exam].sum()))
        out = self.subset(~bad[self.exam])
        out.flags["dropped_degenerate_exams"] = int(bad.sum())
        return out

    @classmethod
    def from_records(cls, candidates: Sequence[Candidate], exams: Sequence[Exam],
                     observable_names=(), group_names=()):
        ids = [e.exam_id for e in exams]
        code = {eid: g for g, eid in enumerate(ids)}
        exam = []
        for i, c in enumerate(candidates):
            if c.exam_id not in code:
                raise DataError(f"unknown exam id {c.exam_id!r}", row=i + 1, column="exam_id")
            exam.append(code[c.exam_id])
        return cls(
            y=[c.outcome for c in candidates],
            X=np.array([c.observables for c in candidates], dtype=float).reshape(len(candidates), -1),
            n_strong=[c.n_strong for c in candidates],
            n_weak=[c.n_weak for c in candidates],
            e_strong=[c.e_strong for c in candidates],
            e_weak=[c.e_weak for c in candidates],
            exam=exam,
            exam_ids=ids,
            Z=np.array([e.group_covariates for e in exams], dtype=float).reshape(len(exams), -1),
            jury_size=[e.jury_size for e in exams],
            positions=[e.positions for e in exams],
            observable_names=observable_names,
            group_names=group_names,
        )


# -- CSV ingestion ------------------------------------------------------------

@dataclass(frozen=True)
class Schema:
    """Maps dataset fields to CSV column names.

    ``group_covariates`` are exam-level columns repeated on every candidate
    row; they must be constant within an exam. ``jury_size`` and
    ``positions`` may be column names or ``None`` (defaults 7 and 0).
    """

    outcome: str = "outcome"
    exam_id: str = "exam_id"
    n_strong: str = "n_strong"
    n_weak: str = "n_weak"
    e_strong: str = "e_strong"
    e_weak: str = "e_weak"
    observables: tuple = ()
    group_covariates: tuple = ()
    jury_size: str | None = "jury_size"
    positions: str | None = "positions"

    @classmethod
    def from_mapping(cls, mapping: Mapping):
        kw = dict(mapping)
        for key in ("observables", "group_covariates"):
            if key in kw:
                v = kw[key]
                if isinstance(v, str):
                    v = [s.strip() for s in v.split(",") if s.strip()]
                kw[key] = tuple(v)
        for key in ("jury_size", "positions"):
            if kw.get(key) in ("", "none", "None"):
                kw[key] = None
        return cls(**kw)


def _parse_number(text, row, column, integer=False):
    try:
        value = float(text)
    except (TypeError, ValueError):
        if text is None or text.strip() == "":
            raise DataError("missing value", row=row, column=column) from None
        raise DataError(f"non-numeric cell {text!r}", row=row, column=column) from None
    if not np.isfinite(value):
        raise DataError(f"non-finite cell {text!r}", row=row, column=column)
    if integer:
        if value != int(value):
            raise DataError(f"expected an integer, got {text!r}", row=row, column=column)
        return int(value)
    return value


def load_dataset(path, schema: Schema | Mapping | None = None) -> Dataset:
    """Read a candidate-per-row CSV file.

    Row numbers in errors count data rows from 1 (the header is not counted).
    """
    schema = Schema() if schema is None else schema
    if not isinstance(schema, Schema):
        schema = Schema.from_mapping(schema)
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)

    required = [schema.outcome, schema.exam_id, schema.n_strong, schema.n_weak,
                schema.e_strong, schema.e_weak, *schema.observables, *schema.group_covariates]
    required += [c for c in (schema.jury_size, schema.positions) if c is not None]
    for col in required:
        if col not in header:
            raise DataError("missing column", column=col)

    n = len(rows)
    y = np.empty(n, dtype=np.int64)
    X = np.empty((n, len(schema.observables)))
    ns = np.empty(n, dtype=np.int64)
    nw = np.empty(n, dtype=np.int64)
    es = np.empty(n)
    ew = np.empty(n)
    exam_ids: list[str] = []
    code: dict[str, int] = {}
    exam = np.empty(n, dtype=np.int64)
    exam_rows: dict[int, tuple] = {}

    for i, rec in enumerate(rows):
        r = i + 1
        out = _parse_number(rec[schema.outcome], r, schema.outcome, integer=True)
        if out not in (0, 1):
            raise DataError(f"outcome must be 0 or 1, got {rec[schema.outcome]!r}",
                            row=r, column=schema.outcome)
        y[i] = out
        for j, col in enumerate(schema.observables):
            X[i, j] = _parse_number(rec[col], r, col)
        ns[i] = _parse_number(rec[schema.n_strong], r, schema.n_strong, integer=True)
        nw[i] = _parse_number(rec[schema.n_weak], r, schema.n_weak, integer=True)
        es[i] = _parse_number(rec[schema.e_strong], r, schema.e_strong)
        ew[i] = _parse_number(rec[schema.e_weak], r, schema.e_weak)
        eid = (rec[schema.exam_id] or "").strip()
        if not eid:
            raise DataError("missing exam id", row=r, column=schema.exam_id)
        if eid not in code:
            code[eid] = len(exam_ids)
            exam_ids.append(eid)
        g = code[eid]
        exam[i] = g
        zrow = tuple(_parse_number(rec[c], r, c) for c in schema.group_covariates)
        jury = (_parse_number(rec[schema.jury_size], r, schema.jury_size, integer=True)
                if schema.jury_size else DEFAULT_JURY_SIZE)
        pos = (_parse_number(rec[schema.positions], r, schema.positions, integer=True)
               if schema.positions else 0)
        exam_row = (zrow, jury, pos)
        if g in exam_rows and exam_rows[g] != exam_row:
            raise DataError(f"exam-level values vary within exam {eid!r}", row=r)
        exam_rows[g] = exam_row

    G = len(exam_ids)
    Z = np.array([exam_rows[g][0] for g in range(G)], dtype=float).reshape(G, len(schema.group_covariates))
    return Dataset(
        y=y, X=X, n_strong=ns, n_weak=nw, e_strong=es, e_weak=ew, exam=exam,
        exam_ids=exam_ids, Z=Z,
        jury_size=[exam_rows[g][1] for g in range(G)],
        positions=[exam_rows[g][2] for g in range(G)],
        observable_names=schema.observables, group_names=schema.group_covariates,
    )


def dataset_schema(ds: Dataset) -> Schema:
    """Schema matching the layout written by :func:`save_dataset`."""
    return Schema(observables=ds.observable_names, group_covariates=ds.group_names)


def _fmt(v):
    return repr(float(v))


def save_dataset(ds: Dataset, path):
    """Write ``ds`` as CSV; ``load_dataset(path, dataset_schema(ds))`` restores it."""
    path = Path(path)
    header = ["exam_id", "outcome", "n_strong", "n_weak", "e_strong", "e_weak",
              "jury_size", "positions", *ds.observable_names, *ds.group_names]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.n_candidates):
            g = ds.exam[i]
            w.writerow([
                ds.exam_ids[g], int(ds.y[i]), int(ds.n_strong[i]), int(ds.n_weak[i]),
                _fmt(ds.e_strong[i]), _fmt(ds.e_weak[i]), int(ds.jury_size[g]),
                int(ds.positions[g]), *map(_fmt, ds.X[i]), *map(_fmt, ds.Z[g]),
            ])
    return path


# -- transformations ----------------------------------------------------------

def standardize_within_exam(ds: Dataset, columns: Sequence[str] | None = None,
                            scale: bool = True) -> Dataset:
    """Center (and optionally scale) observables within each exam.

    Scaling uses the unbiased ``n - 1`` variance. A column with no
    within-exam variation (or a single candidate) in some exam is only
    centered there, with a warning.
    """
    names = ds.observable_names if columns is None else tuple(columns)
    for c in names:
        if c not in ds.observable_names:
            raise KeyError(c)
    X = ds.X.copy()
    G = ds.n_exams
    count = np.bincount(ds.exam, minlength=G).astype(float)
    for c in names:
        j = ds.observable_names.index(c)
        col = X[:, j]
        mean = np.bincount(ds.exam, weights=col, minlength=G) / np.maximum(count, 1)
        centered = col - mean[ds.exam]
        if scale:
            ss = np.bincount(ds.exam, weights=centered ** 2, minlength=G)
            with np.errstate(invalid="ignore", divide="ignore"):
                sd = np.sqrt(ss / (count - 1))
            flat = ~(sd > 1e-12 * np.maximum(1.0, np.abs(mean)))
            flat &= count > 0
            if flat.any():
                warnings.warn(
                    f"column {c!r} has no within-exam variance in {int(flat.sum())} "
                    "exam(s); centered only there", RuntimeWarning, stacklevel=2)
            sd = np.where(flat, 1.0, sd)
            centered = centered / sd[ds.exam]
        X[:, j] = centered
    return ds.replace(X=X)
