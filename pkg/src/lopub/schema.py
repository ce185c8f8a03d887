"""Attribute domains, schemas, and tabular dataset ingestion.

All records are stored as integer domain indices (position of the value in
its declared domain), so downstream candidate enumeration and sampling are
pure index arithmetic. Only categorical data is accepted; continuous
columns must be binned first (see :func:`equal_width_bin`).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field

import numpy as np


class SchemaError(ValueError):
    """Invalid schema definition or data that does not match the schema."""


@dataclass(frozen=True)
class AttributeDomain:
    """A named categorical attribute with an ordered set of distinct values."""

    name: str
    values: tuple[str, ...]

    def __post_init__(self):
        if len(self.values) < 2:
            raise SchemaError(f"domain of {self.name!r} needs at least 2 values")
        if len(set(self.values)) != len(self.values):
            raise SchemaError(f"duplicate value in domain of {self.name!r}")

    @property
    def cardinality(self) -> int:
        return len(self.values)

    def index_of(self, value: str) -> int:
        try:
            return self.values.index(value)
        except ValueError:
            raise SchemaError(f"unknown value {value!r} for attribute {self.name!r}") from None


@dataclass(frozen=True)
class Schema:
    """Ordered collection of attribute domains."""

    attributes: tuple[AttributeDomain, ...]

    def __post_init__(self):
        if not self.attributes:
            raise SchemaError("schema needs at least one attribute")
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate attribute name in schema")

    @property
    def d(self) -> int:
        return len(self.attributes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(a.cardinality for a in self.attributes)

    def attribute_index(self, name: str) -> int:
        for i, a in enumerate(self.attributes):
            if a.name == name:
                return i
        raise SchemaError(f"unknown attribute {name!r}")

    def to_config(self) -> dict:
        return {
            "attributes": [
                {"name": a.name, "values": list(a.values)} for a in self.attributes
            ]
        }

    def digest(self) -> str:
        """Stable content hash, used to match report files to schemas."""
        blob = json.dumps(self.to_config(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class Dataset:
    """A table of records stored as domain indices, shape (N, d)."""

    schema: Schema
    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        if rows.size == 0:
            rows = rows.reshape(0, self.schema.d)
        if rows.ndim != 2 or rows.shape[1] != self.schema.d:
            raise SchemaError(
                f"rows must have {self.schema.d} columns, got shape {rows.shape}"
            )
        cards = np.asarray(self.schema.cardinalities)
        if rows.size and ((rows < 0) | (rows >= cards[None, :])).any():
            raise SchemaError("record entry out of range for its attribute domain")
        self.rows = rows

    @property
    def n(self) -> int:
        return self.rows.shape[0]


def load_schema(config_document: str | dict) -> Schema:
    """Build a Schema from a JSON document (or an already-parsed dict).

    Expected shape: ``{"attributes": [{"name": ..., "values": [...]}, ...]}``.
    """
    if isinstance(config_document, str):
        try:
            config = json.loads(config_document)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"schema config is not valid JSON: {exc}") from exc
    else:
        config = config_document
    attrs = config.get("attributes")
    if not attrs:
        raise SchemaError("schema config has no attributes")
    domains = []
    for entry in attrs:
        values = entry.get("values", [])
        if not values:
            raise SchemaError(f"empty domain for attribute {entry.get('name')!r}")
        domains.append(AttributeDomain(name=str(entry["name"]), values=tuple(str(v) for v in values)))
    return Schema(attributes=tuple(domains))


def load_dataset(csv_text: str, schema: Schema) -> Dataset:
    """Parse delimited text (with header) into a Dataset of domain indices."""
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("dataset is empty (no header row)") from None
    header = [h.strip() for h in header]
    if header != list(schema.names):
        unknown = [h for h in header if h not in schema.names]
        if unknown:
            raise SchemaError(f"unknown column(s) {unknown} in dataset header")
        raise SchemaError(
            f"header {header} does not match schema attributes {list(schema.names)}"
        )
    rows = []
    for lineno, cells in enumerate(reader, start=2):
        if not cells:
            continue
        if len(cells) != schema.d:
            raise SchemaError(
                f"line {lineno}: expected {schema.d} columns, got {len(cells)}"
            )
        rows.append([dom.index_of(c.strip()) for dom, c in zip(schema.attributes, cells)])
    return Dataset(schema=schema, rows=np.asarray(rows, dtype=np.int64).reshape(len(rows), schema.d))


def dataset_to_csv(dataset: Dataset) -> str:
    """Inverse of load_dataset: render rows back to labelled CSV text."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(dataset.schema.names)
    domains = dataset.schema.attributes
    for row in dataset.rows:
        writer.writerow([domains[j].values[v] for j, v in enumerate(row)])
    return out.getvalue()


def _format_edge(x: float) -> str:
    return f"{x:.6g}"


def equal_width_bin(values, bins: int, name: str = "binned") -> tuple[AttributeDomain, np.ndarray]:
    """Discretize real values into ``bins`` equal-width intervals.

    Returns the resulting domain (labels ``[lo,hi)``, last bin closed) and
    the per-value bin indices. The maximum value lands in the last bin.
    """
    if bins < 2:
        raise SchemaError("bins must be >= 2")
    vals = np.asarray(values, dtype=float)
    if vals.size == 0:
        raise SchemaError("cannot bin an empty value list")
    lo, hi = float(vals.min()), float(vals.max())
    if lo == hi:
        raise SchemaError("all values identical: degenerate range cannot be binned")
    width = (hi - lo) / bins
    idx = np.minimum(((vals - lo) / width).astype(np.int64), bins - 1)
    edges = [lo + width * b for b in range(bins + 1)]
    labels = [
        f"[{_format_edge(edges[b])},{_format_edge(edges[b + 1])}" + (")" if b < bins - 1 else "]")
        for b in range(bins)
    ]
    domain = AttributeDomain(name=name, values=tuple(labels))
    return domain, idx
