"""Tabular datasets with a designated sensitive attribute and target label.

A :class:`Schema` describes every column of a CSV export; a :class:`Dataset`
pairs a schema with a :class:`pandas.DataFrame` whose index is the record id
(the row position in the preprocessed data).  Datasets are treated as
immutable: every operation returns a new one.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Any, Iterator, Literal, Sequence

import numpy as np
import pandas as pd

Kind = Literal["categorical", "numeric"]
Role = Literal["feature", "sensitive", "target", "dropped"]

KINDS = ("categorical", "numeric")
ROLES = ("feature", "sensitive", "target", "dropped")

ADULT_MARRIED = ("Married-civ-spouse", "Married-spouse-absent", "Married-AF-spouse")
ADULT_SINGLE = ("Divorced", "Never-married", "Separated", "Widowed")

ADULT_COLUMNS = (
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
)


class SchemaError(ValueError):
    """Raised when a schema is malformed or data does not conform to it."""


class DataFileError(SchemaError):
    """A CSV cell or header that violates the schema.

    ``row`` is the 0-based data row (header excluded), ``column`` the
    attribute name; either may be ``None`` for file-level problems.
    """

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: Kind
    domain: tuple
    role: Role = "feature"
    positive: Any = None
    probes: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"attribute {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in ROLES:
            raise SchemaError(f"attribute {self.name!r}: unknown role {self.role!r}")
        if self.kind == "categorical":
            if len(self.domain) == 0:
                raise SchemaError(f"attribute {self.name!r}: empty categorical domain")
            if len(set(self.domain)) != len(self.domain):
                raise SchemaError(f"attribute {self.name!r}: duplicate domain values")
            if self.positive is not None and self.positive not in self.domain:
                raise SchemaError(f"attribute {self.name!r}: positive value not in domain")
        else:
            if len(self.domain) != 2 or not self.domain[0] <= self.domain[1]:
                raise SchemaError(f"attribute {self.name!r}: numeric domain must be [min, max]")

    @property
    def is_categorical(self) -> bool:
        return self.kind == "categorical"

    def candidates(self) -> tuple:
        """Values an adversary enumerates when this attribute is unknown."""
        if self.is_categorical:
            return self.domain
        if self.probes:
            return tuple(self.probes)
        return tuple(np.linspace(self.domain[0], self.domain[1], 10).tolist())

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind, "domain": list(self.domain), "role": self.role}
        if self.positive is not None:
            out["positive"] = self.positive
        if self.probes is not None:
            out["probes"] = list(self.probes)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Attribute":
        probes = d.get("probes")
        return cls(
            name=d["name"],
            kind=d["kind"],
            domain=tuple(d["domain"]),
            role=d.get("role", "feature"),
            positive=d.get("positive"),
            probes=tuple(probes) if probes is not None else None,
        )


@dataclass(frozen=True)
class Schema:
    attributes: tuple[Attribute, ...]
    name: str = ""
    missing: tuple[str, ...] = ("?",)

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate attribute names")
        sens = [a for a in self.attributes if a.role == "sensitive"]
        targ = [a for a in self.attributes if a.role == "target"]
        if len(sens) != 1:
            raise SchemaError(f"exactly one sensitive attribute required, got {len(sens)}")
        if len(targ) != 1:
            raise SchemaError(f"exactly one target attribute required, got {len(targ)}")
        if not sens[0].is_categorical or len(sens[0].domain) < 2:
            raise SchemaError("sensitive attribute must be categorical with at least 2 values")
        if not targ[0].is_categorical or len(targ[0].domain) < 2:
            raise SchemaError("target attribute must be categorical with at least 2 values")

    def __getitem__(self, name: str) -> Attribute:
        for a in self.attributes:
            if a.name == name:
                return a
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(a.name == name for a in self.attributes)

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.attributes]

    @property
    def sensitive(self) -> Attribute:
        return next(a for a in self.attributes if a.role == "sensitive")

    @property
    def target(self) -> Attribute:
        return next(a for a in self.attributes if a.role == "target")

    @property
    def features(self) -> list[Attribute]:
        """Non-sensitive model inputs."""
        return [a for a in self.attributes if a.role == "feature"]

    @property
    def inputs(self) -> list[Attribute]:
        """Everything the target model consumes: features plus the sensitive attribute."""
        return [a for a in self.attributes if a.role in ("feature", "sensitive")]

    @property
    def kept(self) -> list[Attribute]:
        return [a for a in self.attributes if a.role != "dropped"]

    @property
    def k(self) -> int:
        return len(self.sensitive.domain)

    @property
    def positive(self):
        """Positive sensitive value; defaults to the last domain entry."""
        s = self.sensitive
        return s.positive if s.positive is not None else s.domain[-1]

    def replace_attribute(self, attr: Attribute) -> "Schema":
        return replace(self, attributes=tuple(attr if a.name == attr.name else a for a in self.attributes))

    def to_dict(self) -> dict:
        return {"name": self.name, "missing": list(self.missing),
                "attributes": [a.to_dict() for a in self.attributes]}

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        return cls(
            attributes=tuple(Attribute.from_dict(a) for a in d["attributes"]),
            name=d.get("name", ""),
            missing=tuple(d.get("missing", ("?",))),
        )

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=1)

    @classmethod
    def load(cls, path) -> "Schema":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def builtin_schema(name: str) -> Schema:
    """Load one of the schemas shipped with the package (``adult`` or ``gss``)."""
    text = resources.files("miai.schemas").joinpath(f"{name}.json").read_text(encoding="utf-8")
    return Schema.from_dict(json.loads(text))


@dataclass(frozen=True)
class Dataset:
    schema: Schema
    frame: pd.DataFrame = field(repr=False)
    provenance: Literal["raw", "DS_A", "DS_T"] = "raw"

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def n(self) -> int:
        return len(self.frame)

    @property
    def ids(self) -> np.ndarray:
        return self.frame.index.to_numpy()

    @property
    def sensitive_values(self) -> pd.Series:
        return self.frame[self.schema.sensitive.name]

    @property
    def labels(self) -> pd.Series:
        return self.frame[self.schema.target.name]

    def records(self) -> Iterator[dict]:
        for rec in self.frame.to_dict(orient="records"):
            yield rec

    def priors(self) -> dict:
        """Marginal distribution of the sensitive attribute over its full domain."""
        counts = self.sensitive_values.value_counts()
        n = max(len(self), 1)
        return {v: float(counts.get(v, 0)) / n for v in self.schema.sensitive.domain}

    def subset(self, ids, provenance=None) -> "Dataset":
        return Dataset(self.schema, self.frame.loc[ids], provenance or self.provenance)


def load_csv(path, schema: Schema) -> Dataset:
    """Read a headered, comma-separated UTF-8 file and validate every cell.

    Cells equal to one of ``schema.missing`` become NaN (preprocessing decides
    what to do with them); any other cell must lie in its attribute's domain.
    """
    if not os.path.exists(path):
        raise DataFileError(f"no such file: {path}")
    df = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True, encoding="utf-8")
    header = list(df.columns)
    if sorted(header) != sorted(schema.names):
        missing = sorted(set(schema.names) - set(header))
        extra = sorted(set(header) - set(schema.names))
        raise DataFileError(f"header mismatch: missing {missing}, unexpected {extra}")

    out = {}
    for attr in schema.attributes:
        col = df[attr.name].str.strip()
        is_missing = col.isin(schema.missing)
        if attr.is_categorical:
            bad = ~(is_missing | col.isin([str(v) for v in attr.domain]))
            values = col.where(~is_missing, np.nan)
            # numeric-looking categorical domains (e.g. codes) keep their declared type
            lookup = {str(v): v for v in attr.domain}
            values = values.map(lambda s: lookup.get(s, s) if isinstance(s, str) else s)
        else:
            values = pd.to_numeric(col.where(~is_missing, None), errors="coerce")
            lo, hi = attr.domain
            bad = ~is_missing & (values.isna() | (values < lo) | (values > hi))
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise DataFileError(f"value {col.iloc[row]!r} not in schema domain", row=row, column=attr.name)
        out[attr.name] = values
    frame = pd.DataFrame(out, columns=schema.names)
    return Dataset(schema, frame, "raw")


def _drop_missing(frame: pd.DataFrame, columns: Sequence[str]) -> pd.DataFrame:
    return frame.loc[~frame[list(columns)].isna().any(axis=1)]


def _require_columns(ds: Dataset, columns: Sequence[str]) -> None:
    absent = [c for c in columns if c not in ds.frame.columns]
    if absent:
        raise SchemaError(f"required columns absent: {absent}")


def preprocess_adult(raw: Dataset) -> Dataset:
    """Merge marital status into Married/Single, drop ``relationship`` and incomplete rows."""
    _require_columns(raw, ["marital-status", "relationship", "income"])
    schema = raw.schema
    marital = schema["marital-status"]
    merged = {v: "Married" for v in ADULT_MARRIED} | {v: "Single" for v in ADULT_SINGLE}
    merged |= {"Married": "Married", "Single": "Single"}
    unknown = [v for v in marital.domain if v not in merged]
    if unknown:
        raise SchemaError(f"unexpected marital-status values: {unknown}")

    schema = schema.replace_attribute(
        replace(marital, domain=("Single", "Married"), role="sensitive", positive="Married")
    )
    schema = schema.replace_attribute(replace(schema["relationship"], role="dropped"))
    frame = raw.frame.copy()
    frame["marital-status"] = frame["marital-status"].map(merged, na_action="ignore")
    frame = _drop_missing(frame, [a.name for a in schema.kept])
    return Dataset(schema, frame.reset_index(drop=True), "raw")


def preprocess_gss(raw: Dataset) -> Dataset:
    """Drop GSS records without the sensitive answer or the marital-happiness label."""
    schema = raw.schema
    sens, targ = schema.sensitive.name, schema.target.name
    _require_columns(raw, [sens, targ])
    if set(schema.sensitive.domain) != {"yes", "no"}:
        raise SchemaError("GSS sensitive attribute must have domain {yes, no}")
    if set(schema.target.domain) != {"not too happy", "pretty happy", "very happy"}:
        raise SchemaError("GSS target must be marital happiness")
    if schema.sensitive.positive is None:
        schema = schema.replace_attribute(replace(schema.sensitive, positive="yes"))
    frame = _drop_missing(raw.frame, [sens, targ])
    frame = _drop_missing(frame, [a.name for a in schema.kept])
    return Dataset(schema, frame.reset_index(drop=True), "raw")


def split(d: Dataset, n_A: int, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded uniform split into the adversary's set and the target training set."""
    if not 0 < n_A < len(d):
        raise ValueError(f"n_A must be in (0, {len(d)}), got {n_A}")
    perm = np.random.default_rng(seed).permutation(len(d))
    a_pos = np.sort(perm[:n_A])
    t_pos = np.sort(perm[n_A:])
    frame = d.frame
    return (
        Dataset(d.schema, frame.iloc[a_pos], "DS_A"),
        Dataset(d.schema, frame.iloc[t_pos], "DS_T"),
    )


def convert_uci_adult(sources: Sequence, out_path) -> int:
    """Turn the header-less UCI ``adult.data``/``adult.test`` files into one headered CSV.

    Returns the number of rows written.  The test file's banner line and the
    trailing period on its labels are removed.
    """
    frames = []
    for src in sources:
        df = pd.read_csv(src, header=None, names=list(ADULT_COLUMNS), dtype=str,
                         skipinitialspace=True, keep_default_na=False, comment="|")
        df = df[df["income"].str.len() > 0]
        df["income"] = df["income"].str.rstrip(".")
        frames.append(df)
    out = pd.concat(frames, ignore_index=True)
    out.to_csv(out_path, index=False)
    return len(out)
