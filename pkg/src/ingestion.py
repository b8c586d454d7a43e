"""CSV loading for user-supplied datasets."""
from __future__ import annotations

import io
import os

import numpy as np
import pandas as pd

from src.data import SCHEMAS, Dataset, DatasetKind
from src.errors import EmptyDataset, MissingColumn, NonMonotoneStrain, NonNumeric

TORSION_COLUMNS = ["phi", "tau"]
MODE_NAMES = {"UT", "UC", "ET", "PS", "SS", "ST"}


def _read(source) -> pd.DataFrame:
    try:
        if isinstance(source, (str, os.PathLike)):
            return pd.read_csv(source, encoding="utf-8", dtype=str, skipinitialspace=True)
        content = source.read()
        if isinstance(content, bytes):
            content = content.decode("utf-8")
        return pd.read_csv(io.StringIO(content), dtype=str, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise EmptyDataset(f"File '{source}' has no rows") from None
    except (OSError, UnicodeDecodeError, pd.errors.ParserError) as e:
        raise ValueError(f"Failed to load file '{source}': {e}") from None


def _numeric(df: pd.DataFrame, columns: list[str]) -> pd.DataFrame:
    out = df.copy()
    for col in columns:
        values = pd.to_numeric(out[col].str.strip(), errors="coerce")
        bad = values.isna() | ~np.isfinite(values.fillna(0.0))
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise NonNumeric(row=row, column=col, value=str(df[col].iloc[row]))
        out[col] = values.astype(float)
    return out


def resolve_schema(df: pd.DataFrame, kind: DatasetKind) -> list[str]:
    """Required columns for `kind`; mode curves may also come as a bare torsion table."""
    if kind is DatasetKind.MODE_CURVE and "mode" not in df.columns and "phi" in df.columns:
        return TORSION_COLUMNS
    return SCHEMAS[kind]


def ingest_csv(path, kind: DatasetKind | str, name: str | None = None) -> Dataset:
    kind = DatasetKind(kind)
    df = _read(path)
    df.columns = [str(c).strip() for c in df.columns]
    schema = resolve_schema(df, kind)
    for col in schema:
        if col not in df.columns:
            raise MissingColumn(column=col)
    df = df[schema]
    if len(df) == 0:
        raise EmptyDataset(f"File '{path}' has no rows")

    if schema == TORSION_COLUMNS:
        df = _numeric(df, TORSION_COLUMNS)
        df = pd.DataFrame({"mode": "ST", "lambda_or_gamma": df["phi"], "P": df["tau"]})
    elif kind is DatasetKind.MODE_CURVE:
        df = df.assign(mode=df["mode"].str.strip().str.upper())
        unknown = ~df["mode"].isin(MODE_NAMES)
        if unknown.any():
            row = int(np.flatnonzero(unknown.to_numpy())[0])
            raise NonNumeric(row=row, column="mode", value=str(df["mode"].iloc[row]))
        df = _numeric(df, ["lambda_or_gamma", "P"])
    else:
        df = _numeric(df, schema)

    if kind is DatasetKind.HARDENING and np.any(np.diff(df["strain_percent"].to_numpy()) < 0.0):
        raise NonMonotoneStrain("Hardening strains must be nondecreasing")

    units = {"strain_percent": "%", "stress_mpa": "MPa"} if kind is DatasetKind.HARDENING else {}
    label = name or os.path.splitext(os.path.basename(str(path)))[0]
    return Dataset(name=label, kind=kind, frame=df.reset_index(drop=True), units=units,
                   metadata={"source": "csv", "path": str(path)})
