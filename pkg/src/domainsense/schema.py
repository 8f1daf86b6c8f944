"""Feature schema: declarative description of every feature field.

A schema lists the feature fields of a multi-domain tabular dataset, plus
the domain and label columns. Categorical features carry an explicit
vocabulary with one reserved out-of-vocabulary slot appended at the end;
numerical features are discretized into bins (edges either declared or
computed equal-frequency from the training split).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import SchemaError
from .hashing import canonical_json, content_hash

CATEGORICAL = "categorical"
NUMERICAL = "numerical"
SCALAR = "scalar"
SEQUENTIAL = "sequential"

OOV_TOKEN = "<oov>"
DEFAULT_MAX_SEQ_LEN = 50
SEQ_SEPARATOR = "|"


@dataclass(frozen=True)
class FeatureSpec:
    """One feature field.

    vocab lists the known value strings of a categorical feature; the
    reserved OOV index sits after them, so vocab_size = len(vocab) + 1.
    Numerical features need num_bins, and bin_edges of length num_bins + 1
    (strictly increasing) once resolved.
    """

    name: str
    kind: str
    arity: str = SCALAR
    vocab: tuple[str, ...] | None = None
    num_bins: int | None = None
    bin_edges: tuple[float, ...] | None = None
    max_seq_len: int = DEFAULT_MAX_SEQ_LEN

    def __post_init__(self) -> None:
        if self.kind not in (CATEGORICAL, NUMERICAL):
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.arity not in (SCALAR, SEQUENTIAL):
            raise SchemaError(f"feature {self.name!r}: unknown arity {self.arity!r}")
        if self.kind == CATEGORICAL:
            if self.vocab is None or len(self.vocab) < 1:
                raise SchemaError(
                    f"feature {self.name!r}: categorical features need a vocabulary "
                    "with at least one real value"
                )
            if len(set(self.vocab)) != len(self.vocab):
                raise SchemaError(f"feature {self.name!r}: duplicate vocabulary entries")
            if self.num_bins is not None or self.bin_edges is not None:
                raise SchemaError(f"feature {self.name!r}: bins declared on a categorical feature")
        else:
            if self.arity == SEQUENTIAL:
                raise SchemaError(
                    f"feature {self.name!r}: sequential features must be categorical"
                )
            if self.vocab is not None:
                raise SchemaError(f"feature {self.name!r}: vocabulary declared on a numerical feature")
            if self.num_bins is None or self.num_bins < 1:
                raise SchemaError(f"feature {self.name!r}: numerical features need num_bins >= 1")
            if self.bin_edges is not None:
                edges = np.asarray(self.bin_edges, dtype=float)
                if edges.ndim != 1 or len(edges) != self.num_bins + 1:
                    raise SchemaError(
                        f"feature {self.name!r}: expected {self.num_bins + 1} bin edges, "
                        f"got {len(edges)}"
                    )
                if not np.all(np.diff(edges) > 0):
                    raise SchemaError(f"feature {self.name!r}: bin edges must be strictly increasing")
        if self.max_seq_len < 1:
            raise SchemaError(f"feature {self.name!r}: max_seq_len must be positive")

    @property
    def vocab_size(self) -> int:
        """Number of categorical indices, including the reserved OOV slot."""
        assert self.vocab is not None
        return len(self.vocab) + 1

    @property
    def oov_index(self) -> int:
        return self.vocab_size - 1

    @property
    def num_values(self) -> int:
        """Length of the feature's value set (vocab incl. OOV, or bins)."""
        if self.kind == CATEGORICAL:
            return self.vocab_size
        return int(self.num_bins)  # type: ignore[arg-type]

    @property
    def group(self) -> str:
        """Ranking group tag, e.g. 'categorical-scalar'."""
        return f"{self.kind}-{self.arity}"

    @property
    def is_sequential(self) -> bool:
        return self.arity == SEQUENTIAL

    def encode_token(self, token: str) -> int:
        """Map a raw categorical string to its index (OOV when unseen)."""
        assert self.vocab is not None
        try:
            return self._vocab_index()[token]
        except KeyError:
            return self.oov_index

    def _vocab_index(self) -> dict[str, int]:
        cached = getattr(self, "_vocab_index_cache", None)
        if cached is None:
            cached = {tok: i for i, tok in enumerate(self.vocab or ())}
            object.__setattr__(self, "_vocab_index_cache", cached)
        return cached

    def decode_index(self, index: int) -> str:
        assert self.vocab is not None
        if index == self.oov_index:
            return OOV_TOKEN
        return self.vocab[index]

    def bin_index(self, value: float) -> int:
        """Assign a raw value to a bin.

        Interior edges are right-closed toward the lower bin; values outside
        the covered range clamp to the first or last bin.
        """
        assert self.bin_edges is not None
        edges = np.asarray(self.bin_edges)
        idx = int(np.searchsorted(edges, value, side="left")) - 1
        return int(np.clip(idx, 0, self.num_bins - 1))

    def bin_indices(self, values: np.ndarray) -> np.ndarray:
        assert self.bin_edges is not None
        edges = np.asarray(self.bin_edges)
        idx = np.searchsorted(edges, values, side="left") - 1
        return np.clip(idx, 0, self.num_bins - 1).astype(np.int64)

    @property
    def bin_centers(self) -> np.ndarray:
        """Midpoints of the bins; the real-line locations used for transport."""
        assert self.bin_edges is not None
        edges = np.asarray(self.bin_edges, dtype=float)
        return 0.5 * (edges[:-1] + edges[1:])

    def to_dict(self) -> dict:
        d: dict = {"name": self.name, "kind": self.kind, "arity": self.arity}
        if self.vocab is not None:
            d["vocab"] = list(self.vocab)
        if self.num_bins is not None:
            d["num_bins"] = self.num_bins
        if self.bin_edges is not None:
            d["bin_edges"] = [float(e) for e in self.bin_edges]
        if self.arity == SEQUENTIAL and self.max_seq_len != DEFAULT_MAX_SEQ_LEN:
            d["max_seq_len"] = self.max_seq_len
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        return cls(
            name=d["name"],
            kind=d["kind"],
            arity=d.get("arity", SCALAR),
            vocab=tuple(d["vocab"]) if "vocab" in d else None,
            num_bins=d.get("num_bins"),
            bin_edges=tuple(d["bin_edges"]) if d.get("bin_edges") is not None else None,
            max_seq_len=d.get("max_seq_len", DEFAULT_MAX_SEQ_LEN),
        )


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature list plus the domain and label columns."""

    features: tuple[FeatureSpec, ...]
    domain_field: str
    label_field: str
    num_domains: int

    def __post_init__(self) -> None:
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate feature names in schema")
        if self.domain_field in names or self.label_field in names:
            raise SchemaError("domain/label fields must not appear in the feature list")
        if self.domain_field == self.label_field:
            raise SchemaError("domain and label fields must differ")
        if self.num_domains < 2:
            raise SchemaError("a multi-domain schema needs at least 2 domains")
        if not self.features:
            raise SchemaError("schema declares no features")

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def num_features(self) -> int:
        return len(self.features)

    def feature(self, name: str) -> FeatureSpec:
        for f in self.features:
            if f.name == name:
                return f
        raise SchemaError(f"unknown feature {name!r}")

    def index_of(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise SchemaError(f"unknown feature {name!r}")

    def with_feature(self, spec: FeatureSpec) -> "FeatureSchema":
        """Return a copy with one feature replaced (used to resolve bin edges)."""
        feats = tuple(spec if f.name == spec.name else f for f in self.features)
        return replace(self, features=feats)

    def to_dict(self) -> dict:
        return {
            "domain_field": self.domain_field,
            "label_field": self.label_field,
            "num_domains": self.num_domains,
            "features": [f.to_dict() for f in self.features],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        try:
            return cls(
                features=tuple(FeatureSpec.from_dict(f) for f in d["features"]),
                domain_field=d["domain_field"],
                label_field=d["label_field"],
                num_domains=int(d["num_domains"]),
            )
        except KeyError as exc:
            raise SchemaError(f"schema document missing key {exc}") from exc

    def schema_hash(self) -> str:
        return content_hash(canonical_json(self.to_dict()))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "FeatureSchema":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def equal_frequency_edges(values: np.ndarray, num_bins: int) -> tuple[float, ...]:
    """Quantile bin edges over *values*, deduplicated to stay strictly increasing.

    Heavy ties can collapse quantiles; duplicates are dropped, which shrinks
    the bin count rather than producing empty bins. A constant column falls
    back to one unit-wide bin around the value.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise SchemaError("cannot derive bin edges from an empty column")
    qs = np.linspace(0.0, 1.0, num_bins + 1)
    edges = np.unique(np.quantile(values, qs))
    if len(edges) < 2:
        v = float(edges[0])
        edges = np.array([v - 0.5, v + 0.5])
    return tuple(float(e) for e in edges)
