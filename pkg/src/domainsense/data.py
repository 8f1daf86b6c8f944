"""Columnar dataset container and delimited-file IO.

Samples are stored column-wise as numpy arrays: categorical features as
vocabulary indices, numerical features as raw floats (binned on demand
through the schema), sequential features as a padded index matrix plus a
length vector. Domains and binary labels ride along as integer columns.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import CsvParseError, SchemaError
from .hashing import content_hash
from .schema import CATEGORICAL, SEQ_SEPARATOR, FeatureSchema, FeatureSpec


@dataclass
class MultiDomainDataset:
    """Column-oriented storage for one split of a multi-domain dataset.

    columns maps feature name to its array: (n,) int64 vocab indices for
    scalar categoricals, (n,) float64 raw values for numericals, and
    (n, max_seq_len) int64 for sequentials with true lengths in seq_lengths.
    """

    schema: FeatureSchema
    columns: dict[str, np.ndarray]
    seq_lengths: dict[str, np.ndarray]
    domains: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.domains)
        if len(self.labels) != n:
            raise SchemaError("label column length mismatch")
        for spec in self.schema.features:
            col = self.columns.get(spec.name)
            if col is None:
                raise SchemaError(f"missing column for feature {spec.name!r}")
            if len(col) != n:
                raise SchemaError(f"column {spec.name!r} length mismatch")
            if spec.is_sequential and spec.name not in self.seq_lengths:
                raise SchemaError(f"missing lengths for sequential feature {spec.name!r}")
        if n and (self.domains.min() < 0 or self.domains.max() >= self.schema.num_domains):
            raise SchemaError("domain index out of range")
        if n and not np.isin(self.labels, (0, 1)).all():
            raise SchemaError("labels must be 0 or 1")

    def __len__(self) -> int:
        return len(self.domains)

    @property
    def num_samples(self) -> int:
        return len(self.domains)

    def domain_mask(self, domain: int) -> np.ndarray:
        return self.domains == domain

    def domain_counts(self) -> np.ndarray:
        return np.bincount(self.domains, minlength=self.schema.num_domains)

    def positive_rate(self) -> float:
        return float(self.labels.mean()) if len(self) else 0.0

    def value_indices(self, name: str) -> np.ndarray:
        """Value-set indices of a scalar feature: vocab ids or bin ids, (n,)."""
        spec = self.schema.feature(name)
        if spec.is_sequential:
            raise SchemaError(f"{name!r} is sequential; use sequence_indices")
        col = self.columns[name]
        if spec.kind == CATEGORICAL:
            return col.astype(np.int64, copy=False)
        if spec.bin_edges is None:
            raise SchemaError(f"feature {name!r} has unresolved bin edges")
        return spec.bin_indices(col)

    def sequence_indices(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """Padded token matrix (n, max_seq_len) and true lengths (n,)."""
        spec = self.schema.feature(name)
        if not spec.is_sequential:
            raise SchemaError(f"{name!r} is not sequential")
        return self.columns[name], self.seq_lengths[name]

    def subset(self, indices: np.ndarray) -> "MultiDomainDataset":
        cols = {k: v[indices] for k, v in self.columns.items()}
        lens = {k: v[indices] for k, v in self.seq_lengths.items()}
        return MultiDomainDataset(
            schema=self.schema,
            columns=cols,
            seq_lengths=lens,
            domains=self.domains[indices],
            labels=self.labels[indices],
        )

    def with_schema(self, schema: FeatureSchema) -> "MultiDomainDataset":
        """Rebind to a schema with the same fields (e.g. resolved bin edges)."""
        if schema.feature_names != self.schema.feature_names:
            raise SchemaError("schema feature list mismatch")
        return MultiDomainDataset(
            schema=schema,
            columns=self.columns,
            seq_lengths=self.seq_lengths,
            domains=self.domains,
            labels=self.labels,
        )

    def row(self, i: int) -> dict:
        """One sample as a plain dict of raw-ish values (debug/inspection)."""
        out: dict = {
            self.schema.domain_field: int(self.domains[i]),
            self.schema.label_field: int(self.labels[i]),
        }
        for spec in self.schema.features:
            if spec.is_sequential:
                length = int(self.seq_lengths[spec.name][i])
                toks = self.columns[spec.name][i, :length]
                out[spec.name] = [spec.decode_index(int(t)) for t in toks]
            elif spec.kind == CATEGORICAL:
                out[spec.name] = spec.decode_index(int(self.columns[spec.name][i]))
            else:
                out[spec.name] = float(self.columns[spec.name][i])
        return out

    def fingerprint(self) -> str:
        """Content hash over schema and all columns, order-sensitive."""
        parts: list[bytes | str] = [self.schema.schema_hash()]
        parts.append(np.ascontiguousarray(self.domains, dtype=np.int64).tobytes())
        parts.append(np.ascontiguousarray(self.labels, dtype=np.int64).tobytes())
        for spec in self.schema.features:
            col = self.columns[spec.name]
            if spec.kind == CATEGORICAL:
                parts.append(np.ascontiguousarray(col, dtype=np.int64).tobytes())
            else:
                parts.append(np.ascontiguousarray(col, dtype=np.float64).tobytes())
            if spec.is_sequential:
                parts.append(
                    np.ascontiguousarray(self.seq_lengths[spec.name], dtype=np.int64).tobytes()
                )
        return content_hash(*parts)


def _parse_sequence(spec: FeatureSpec, cell: str, where: str) -> tuple[np.ndarray, int]:
    toks = [t for t in cell.split(SEQ_SEPARATOR) if t != ""] if cell else []
    if len(toks) > spec.max_seq_len:
        toks = toks[: spec.max_seq_len]
    row = np.zeros(spec.max_seq_len, dtype=np.int64)
    for t, tok in enumerate(toks):
        row[t] = spec.encode_token(tok)
    return row, len(toks)


def load_csv(path: str, schema: FeatureSchema) -> MultiDomainDataset:
    """Read one split from a delimited file with a header row.

    The header must contain every schema field; extra columns are ignored.
    Sequential cells are separator-joined token lists, the empty cell being
    an empty sequence.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise CsvParseError(f"{path}: empty file, no header row")
        header = set(reader.fieldnames)
        missing = [
            name
            for name in [schema.domain_field, schema.label_field, *schema.feature_names]
            if name not in header
        ]
        if missing:
            raise CsvParseError(f"{path}: header missing columns {missing}")

        domains: list[int] = []
        labels: list[int] = []
        scalar_cols: dict[str, list] = {
            f.name: [] for f in schema.features if not f.is_sequential
        }
        seq_rows: dict[str, list[np.ndarray]] = {
            f.name: [] for f in schema.features if f.is_sequential
        }
        seq_lens: dict[str, list[int]] = {name: [] for name in seq_rows}

        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            try:
                d = int(row[schema.domain_field])
                y = int(row[schema.label_field])
            except (TypeError, ValueError) as exc:
                raise CsvParseError(f"{where}: bad domain/label cell ({exc})") from exc
            if not 0 <= d < schema.num_domains:
                raise CsvParseError(
                    f"{where}: domain {d} outside [0, {schema.num_domains})"
                )
            if y not in (0, 1):
                raise CsvParseError(f"{where}: label must be 0 or 1, got {y}")
            domains.append(d)
            labels.append(y)
            for spec in schema.features:
                cell = row[spec.name]
                if cell is None:
                    raise CsvParseError(f"{where}: short row, missing {spec.name!r}")
                if spec.is_sequential:
                    toks, length = _parse_sequence(spec, cell, where)
                    seq_rows[spec.name].append(toks)
                    seq_lens[spec.name].append(length)
                elif spec.kind == CATEGORICAL:
                    scalar_cols[spec.name].append(spec.encode_token(cell))
                else:
                    try:
                        scalar_cols[spec.name].append(float(cell))
                    except ValueError as exc:
                        raise CsvParseError(
                            f"{where}: non-numeric cell {cell!r} for {spec.name!r}"
                        ) from exc

    n = len(domains)
    columns: dict[str, np.ndarray] = {}
    seq_lengths: dict[str, np.ndarray] = {}
    for spec in schema.features:
        if spec.is_sequential:
            if n:
                columns[spec.name] = np.stack(seq_rows[spec.name])
            else:
                columns[spec.name] = np.zeros((0, spec.max_seq_len), dtype=np.int64)
            seq_lengths[spec.name] = np.asarray(seq_lens[spec.name], dtype=np.int64)
        elif spec.kind == CATEGORICAL:
            columns[spec.name] = np.asarray(scalar_cols[spec.name], dtype=np.int64)
        else:
            columns[spec.name] = np.asarray(scalar_cols[spec.name], dtype=np.float64)
    return MultiDomainDataset(
        schema=schema,
        columns=columns,
        seq_lengths=seq_lengths,
        domains=np.asarray(domains, dtype=np.int64),
        labels=np.asarray(labels, dtype=np.int64),
    )


def write_csv(path: str, dataset: MultiDomainDataset) -> None:
    """Write one split back out; inverse of load_csv up to float formatting."""
    schema = dataset.schema
    fieldnames = [schema.domain_field, schema.label_field, *schema.feature_names]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fieldnames)
        for i in range(len(dataset)):
            row: list[str] = [str(int(dataset.domains[i])), str(int(dataset.labels[i]))]
            for spec in schema.features:
                if spec.is_sequential:
                    length = int(dataset.seq_lengths[spec.name][i])
                    toks = dataset.columns[spec.name][i, :length]
                    row.append(SEQ_SEPARATOR.join(spec.decode_index(int(t)) for t in toks))
                elif spec.kind == CATEGORICAL:
                    row.append(spec.decode_index(int(dataset.columns[spec.name][i])))
                else:
                    row.append(repr(float(dataset.columns[spec.name][i])))
            writer.writerow(row)


def empirical_frequency(
    dataset: MultiDomainDataset, feature: str, domain: int | None = None
) -> np.ndarray:
    """Unweighted value-frequency vector for a scalar feature.

    Restricted to one domain when given; an empty selection yields the
    uniform distribution so downstream divergences stay defined.
    """
    spec = dataset.schema.feature(feature)
    idx = dataset.value_indices(feature)
    if domain is not None:
        idx = idx[dataset.domain_mask(domain)]
    counts = np.bincount(idx, minlength=spec.num_values).astype(float)
    total = counts.sum()
    if total == 0:
        return np.full(spec.num_values, 1.0 / spec.num_values)
    return counts / total
