"""Input checks shared by the estimator layer and the CLI."""

from __future__ import annotations

import numpy as np
import pandas as pd

from .data import DataError, Dataset, Schema


def check_dataset(X, y=None, schema=None) -> Dataset:
    """Coerce estimator input to a :class:`Dataset`.

    Accepts a ``Dataset`` or a ``pandas.DataFrame`` laid out as described by
    ``schema`` (inferred with :func:`infer_schema` when omitted). A ``y`` argument overrides the outcome column.
    """
    if isinstance(X, pd.DataFrame):
        X = frame_to_dataset(X, schema or infer_schema(X))
    if not isinstance(X, Dataset):
        raise TypeError(f"expected a Dataset or DataFrame, got {type(X).__name__}")
    if y is not None:
        y = np.asarray(y)
        if y.shape != (len(X),):
            raise DataError(f"y has shape {y.shape}, expected ({len(X)},)")
        X = X.replace(y=y)
    return X


def infer_schema(df: pd.DataFrame) -> Schema:
    """Default column names; other columns that are constant within every
    exam become group covariates and the rest observables."""
    base = Schema()
    if base.exam_id not in df.columns:
        raise DataError("missing column", column=base.exam_id)
    mapped = {base.outcome, base.exam_id, base.n_strong, base.n_weak, base.e_strong,
              base.e_weak, base.jury_size, base.positions}
    rest = [c for c in df.columns if c not in mapped]
    nunique = df.groupby(base.exam_id, sort=False)[rest].nunique() if rest else None
    group = tuple(c for c in rest if (nunique[c] <= 1).all())
    obs = tuple(c for c in rest if c not in group)
    return Schema(observables=obs, group_covariates=group)


def frame_to_dataset(df: pd.DataFrame, schema: Schema) -> Dataset:
    cols = [schema.outcome, schema.exam_id, schema.n_strong, schema.n_weak, schema.e_strong,
            schema.e_weak, *schema.observables, *schema.group_covariates]
    missing = [c for c in cols if c not in df.columns]
    if missing:
        raise DataError("missing column", column=missing[0])
    if df[cols].isna().any().any():
        r, c = np.argwhere(df[cols].isna().to_numpy())[0]
        raise DataError("missing value", row=int(r) + 1, column=cols[c])
    codes, ids = pd.factorize(df[schema.exam_id].astype(str).str.strip())
    exam = np.asarray(codes)
    first = np.array([np.flatnonzero(exam == g)[0] for g in range(len(ids))], dtype=int)
    Z = df[list(schema.group_covariates)].to_numpy(float)[first] if schema.group_covariates \
        else np.zeros((len(ids), 0))
    jury = (df[schema.jury_size].to_numpy()[first] if schema.jury_size and
            schema.jury_size in df.columns else np.full(len(ids), 7))
    pos = (df[schema.positions].to_numpy()[first] if schema.positions and
           schema.positions in df.columns else np.zeros(len(ids), dtype=int))
    return Dataset(
        y=df[schema.outcome].to_numpy(), X=df[list(schema.observables)].to_numpy(float),
        n_strong=df[schema.n_strong].to_numpy(), n_weak=df[schema.n_weak].to_numpy(),
        e_strong=df[schema.e_strong].to_numpy(float), e_weak=df[schema.e_weak].to_numpy(float),
        exam=exam, exam_ids=ids, Z=Z, jury_size=jury, positions=pos,
        observable_names=schema.observables, group_names=schema.group_covariates,
    )


def check_in(value, allowed, name):
    if value not in allowed:
        raise ValueError(f"{name}={value!r} is not one of {tuple(allowed)}")
    return value
