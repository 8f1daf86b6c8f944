"""Effect-weighted distributions, distribution distances, and the
domain-sensitivity ranking.

For each feature and each domain, every value occurrence is weighted by the
magnitude of that sample's attribution score and normalized into a
probability vector. Features whose per-domain vectors disagree are
domain-sensitive; disagreement is measured by JS divergence for categorical
value sets and 1-D Wasserstein distance (over bin centers) for numerical
ones, summed over all unordered domain pairs. Features are ranked within
their (kind x arity) group because raw distance scales are not comparable
across groups.
"""

from __future__ import annotations

import csv
import json
import warnings as _warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .attribution import AttributionMatrix
from .data import MultiDomainDataset
from .errors import ConfigError
from .schema import CATEGORICAL, FeatureSchema, FeatureSpec

WEIGHT_MODES = ("abs", "clamp")

GROUPS = (
    "categorical-scalar",
    "categorical-sequential",
    "numerical-scalar",
    "numerical-sequential",
)


def _transform_weights(raw: np.ndarray, mode: str) -> np.ndarray:
    if mode == "abs":
        return np.abs(raw)
    if mode == "clamp":
        return np.maximum(raw, 0.0)
    raise ConfigError(f"unknown weight mode {mode!r}; expected one of {WEIGHT_MODES}")


@dataclass
class EffectWeightedDistribution:
    """Normalized, attribution-weighted value histogram for one (feature,
    domain) cell. fallback is set when the weight mass Z was zero and the
    plain empirical frequency was used instead."""

    feature: str
    domain: int
    probs: np.ndarray
    z: float
    fallback: bool
    locations: np.ndarray | None = None  # bin centers for numerical features


def _weighted_scalar(
    values: np.ndarray, weights: np.ndarray, num_values: int
) -> tuple[np.ndarray, float, bool]:
    if len(values) == 0:
        raise ValueError("cannot build a distribution from an empty domain")
    z = float(weights.sum())
    fallback = z == 0.0
    if fallback:
        weights = np.ones_like(weights)
        z = float(len(values))
    acc = np.bincount(values, weights=weights, minlength=num_values)
    return acc / z, z, fallback


def _weighted_sequential(
    tokens: np.ndarray,
    lengths: np.ndarray,
    weights: np.ndarray,
    num_values: int,
) -> tuple[np.ndarray, float, bool]:
    include = lengths > 0
    if not include.any():
        raise ValueError("every sequence in the domain is empty")
    t = tokens[include]
    ln = lengths[include]
    w = weights[include]
    z = float(w.sum())
    fallback = z == 0.0
    if fallback:
        w = np.ones_like(w)
        z = float(len(w))
    # each token occurrence carries w_i / L_i; padded slots get weight 0
    pad = t.shape[1]
    mask = np.arange(pad)[None, :] < ln[:, None]
    per_token = (w / ln)[:, None] * mask
    acc = np.bincount(t.ravel(), weights=per_token.ravel(), minlength=num_values)
    return acc / z, z, fallback


def effect_weighted_dist(
    dataset: MultiDomainDataset,
    attrib: AttributionMatrix,
    feature: str,
    domain: int,
    weight_mode: str = "abs",
) -> EffectWeightedDistribution:
    """Per-domain weighted distribution of a scalar feature."""
    spec = dataset.schema.feature(feature)
    if spec.is_sequential:
        return effect_weighted_dist_seq(dataset, attrib, feature, domain, weight_mode)
    attrib.verify_dataset(dataset.fingerprint())
    mask = dataset.domain_mask(domain)
    values = dataset.value_indices(feature)[mask]
    weights = _transform_weights(attrib.column(feature)[mask], weight_mode)
    probs, z, fb = _weighted_scalar(values, weights, spec.num_values)
    loc = spec.bin_centers if spec.kind != CATEGORICAL else None
    return EffectWeightedDistribution(feature, domain, probs, z, fb, loc)


def effect_weighted_dist_seq(
    dataset: MultiDomainDataset,
    attrib: AttributionMatrix,
    feature: str,
    domain: int,
    weight_mode: str = "abs",
) -> EffectWeightedDistribution:
    """Per-domain weighted distribution of a sequential feature.

    Each token occurrence in sample i carries weight w_i / L_i, so long
    sequences do not dominate; empty sequences are skipped entirely and the
    normalizer sums w_i over the remaining samples only.
    """
    spec = dataset.schema.feature(feature)
    if not spec.is_sequential:
        raise ConfigError(f"{feature!r} is not sequential")
    attrib.verify_dataset(dataset.fingerprint())
    mask = dataset.domain_mask(domain)
    if not mask.any():
        raise ValueError(f"domain {domain} has no samples")
    tokens, lengths = dataset.sequence_indices(feature)
    weights = _transform_weights(attrib.column(feature)[mask], weight_mode)
    probs, z, fb = _weighted_sequential(tokens[mask], lengths[mask], weights, spec.num_values)
    return EffectWeightedDistribution(feature, domain, probs, z, fb, None)


# -- distances ---------------------------------------------------------------


def _check_simplex(p: np.ndarray, name: str, atol: float = 1e-9) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"{name} must be a vector")
    if (p < -1e-12).any():
        raise ValueError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > atol:
        raise ValueError(f"{name} is not normalized (sum={p.sum()!r})")
    return np.maximum(p, 0.0)


def js_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Jensen-Shannon divergence in nats; symmetric, bounded by ln 2.

    Zero-probability entries contribute nothing (the 0 log 0 convention).
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    p = _check_simplex(p, "P")
    q = _check_simplex(q, "Q")
    m = 0.5 * (p + q)

    def kl_to_m(a: np.ndarray) -> float:
        nz = a > 0
        return float(np.sum(a[nz] * np.log(a[nz] / m[nz])))

    return 0.5 * kl_to_m(p) + 0.5 * kl_to_m(q)


def wasserstein_1d(
    p: np.ndarray,
    p_locations: np.ndarray,
    q: np.ndarray,
    q_locations: np.ndarray | None = None,
) -> float:
    """Exact 1-D optimal transport cost under the L1 ground metric.

    Computed as the integral of |F_P - F_Q| over the merged support, which
    is the closed-form optimum in one dimension; cost is dominated by the
    sorts, O(n log n).
    """
    p = _check_simplex(p, "P")
    q = _check_simplex(q, "Q")
    p_loc = np.asarray(p_locations, dtype=np.float64)
    q_loc = p_loc if q_locations is None else np.asarray(q_locations, dtype=np.float64)
    if p_loc.shape != p.shape or q_loc.shape != q.shape:
        raise ValueError("locations must align with their weight vectors")
    if not (np.isfinite(p_loc).all() and np.isfinite(q_loc).all()):
        raise ValueError("locations must be finite")

    op = np.argsort(p_loc, kind="stable")
    oq = np.argsort(q_loc, kind="stable")
    pl, pw = p_loc[op], np.concatenate([[0.0], np.cumsum(p[op])])
    ql, qw = q_loc[oq], np.concatenate([[0.0], np.cumsum(q[oq])])
    grid = np.sort(np.concatenate([pl, ql]))
    deltas = np.diff(grid)
    f_p = pw[np.searchsorted(pl, grid[:-1], side="right")]
    f_q = qw[np.searchsorted(ql, grid[:-1], side="right")]
    return float(np.sum(np.abs(f_p - f_q) * deltas))


def domain_sensitivity(
    dists: list[np.ndarray],
    kind: str,
    locations: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Sum of pairwise distribution distances over all unordered domain
    pairs; returns (score, K x K symmetric distance matrix)."""
    k = len(dists)
    if k < 2:
        raise ValueError("need at least 2 domains")
    width = len(dists[0])
    if any(len(d) != width for d in dists):
        raise ValueError("distributions cover different value sets")
    if kind != CATEGORICAL and locations is None:
        raise ValueError("numerical features need bin-center locations")
    matrix = np.zeros((k, k))
    for a in range(k):
        for b in range(a + 1, k):
            if kind == CATEGORICAL:
                d = js_divergence(dists[a], dists[b])
            else:
                d = wasserstein_1d(dists[a], locations, dists[b], locations)
            matrix[a, b] = matrix[b, a] = d
    return float(matrix[np.triu_indices(k, 1)].sum()), matrix


# -- report ------------------------------------------------------------------


@dataclass
class FeatureSensitivity:
    name: str
    group: str
    ds: float
    rank: int  # 0-based position within the group, descending score
    selected: bool
    pairwise: np.ndarray  # (K, K)
    distributions: np.ndarray  # (K, n_values)
    fallback_domains: list[int]
    locations: np.ndarray | None = None


@dataclass
class SensitivityReport:
    features: list[FeatureSensitivity]
    top_k: dict[str, int]
    weight_mode: str
    dataset_fingerprint: str
    attribution_fingerprint: str
    model_fingerprint: str
    warnings: list[str] = field(default_factory=list)

    def entry(self, name: str) -> FeatureSensitivity:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    def group_ranking(self, group: str) -> list[str]:
        members = [f for f in self.features if f.group == group]
        members.sort(key=lambda f: f.rank)
        return [f.name for f in members]

    def selected_features(self) -> list[str]:
        """Selected features in schema declaration order (stable extractor
        input layout regardless of scores)."""
        return [f.name for f in self.features if f.selected]

    def select(self, top_k: dict[str, int], best: bool = True) -> list[str]:
        """Pick k per group from the top (best=True) or bottom of each
        ranking; returned in schema order."""
        chosen: set[str] = set()
        for group, k in top_k.items():
            ranking = self.group_ranking(group)
            if k <= 0:
                continue
            k = min(k, len(ranking))
            chosen.update(ranking[:k] if best else ranking[-k:])
        return [f.name for f in self.features if f.name in chosen]

    def to_dict(self) -> dict:
        return {
            "weight_mode": self.weight_mode,
            "top_k": dict(self.top_k),
            "dataset_fingerprint": self.dataset_fingerprint,
            "attribution_fingerprint": self.attribution_fingerprint,
            "model_fingerprint": self.model_fingerprint,
            "warnings": list(self.warnings),
            "features": [
                {
                    "name": f.name,
                    "group": f.group,
                    "ds": f.ds,
                    "rank": f.rank,
                    "selected": f.selected,
                    "pairwise": f.pairwise.tolist(),
                    "distributions": f.distributions.tolist(),
                    "fallback_domains": list(f.fallback_domains),
                    "locations": None if f.locations is None else f.locations.tolist(),
                }
                for f in self.features
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SensitivityReport":
        feats = [
            FeatureSensitivity(
                name=e["name"],
                group=e["group"],
                ds=float(e["ds"]),
                rank=int(e["rank"]),
                selected=bool(e["selected"]),
                pairwise=np.asarray(e["pairwise"], dtype=np.float64),
                distributions=np.asarray(e["distributions"], dtype=np.float64),
                fallback_domains=list(e["fallback_domains"]),
                locations=(
                    None if e.get("locations") is None else np.asarray(e["locations"])
                ),
            )
            for e in d["features"]
        ]
        return cls(
            features=feats,
            top_k={k: int(v) for k, v in d["top_k"].items()},
            weight_mode=d["weight_mode"],
            dataset_fingerprint=d["dataset_fingerprint"],
            attribution_fingerprint=d["attribution_fingerprint"],
            model_fingerprint=d["model_fingerprint"],
            warnings=list(d.get("warnings", [])),
        )

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "SensitivityReport":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _feature_job(
    dataset: MultiDomainDataset,
    attrib: AttributionMatrix,
    spec: FeatureSpec,
    weight_mode: str,
) -> tuple[float, np.ndarray, np.ndarray, list[int], np.ndarray | None]:
    num_domains = dataset.schema.num_domains
    dists: list[np.ndarray] = []
    fallback_domains: list[int] = []
    for k in range(num_domains):
        d = effect_weighted_dist(dataset, attrib, spec.name, k, weight_mode)
        dists.append(d.probs)
        if d.fallback:
            fallback_domains.append(k)
    locations = spec.bin_centers if spec.kind != CATEGORICAL else None
    ds, matrix = domain_sensitivity(dists, spec.kind, locations)
    return ds, matrix, np.stack(dists), fallback_domains, locations


def rank_features(
    dataset: MultiDomainDataset,
    attrib: AttributionMatrix,
    schema: FeatureSchema | None = None,
    top_k: dict[str, int] | None = None,
    weight_mode: str = "abs",
    threads: int = 1,
) -> SensitivityReport:
    """Score and rank every feature by domain sensitivity.

    top_k maps group tag to the number of features to mark selected in that
    group; a k larger than the group is clamped with a warning. Ranking ties
    break by schema declaration order, so output is fully deterministic.
    """
    schema = schema or dataset.schema
    top_k = dict(top_k or {})
    for group in top_k:
        if group not in GROUPS:
            raise ConfigError(f"unknown feature group {group!r}")
    attrib.verify_dataset(dataset.fingerprint(), where="rank_features")

    specs = list(schema.features)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(
                pool.map(lambda s: _feature_job(dataset, attrib, s, weight_mode), specs)
            )
    else:
        results = [_feature_job(dataset, attrib, s, weight_mode) for s in specs]

    entries: list[FeatureSensitivity] = []
    for spec, (ds, matrix, dists, fallbacks, locations) in zip(specs, results):
        entries.append(
            FeatureSensitivity(
                name=spec.name,
                group=spec.group,
                ds=ds,
                rank=-1,
                selected=False,
                pairwise=matrix,
                distributions=dists,
                fallback_domains=fallbacks,
                locations=locations,
            )
        )

    notes: list[str] = []
    for group in sorted({e.group for e in entries}):
        members = [
            (i, e) for i, e in enumerate(entries) if e.group == group
        ]  # i = schema order, the tie-break key
        members.sort(key=lambda item: (-item[1].ds, item[0]))
        k = top_k.get(group, 0)
        if k > len(members):
            msg = f"top_k for {group} clamped from {k} to group size {len(members)}"
            _warnings.warn(msg)
            notes.append(msg)
            k = len(members)
        for rank, (_, e) in enumerate(members):
            e.rank = rank
            e.selected = rank < k
    for e in entries:
        if e.fallback_domains:
            notes.append(
                f"{e.name}: zero weight mass in domains {e.fallback_domains}, "
                "fell back to unweighted frequencies"
            )

    return SensitivityReport(
        features=entries,
        top_k=top_k,
        weight_mode=weight_mode,
        dataset_fingerprint=dataset.fingerprint(),
        attribution_fingerprint=attrib.fingerprint(),
        model_fingerprint=attrib.model_fingerprint,
        warnings=notes,
    )


def export_distributions_csv(report: SensitivityReport, path: str) -> None:
    """Flat CSV of every per-domain distribution: one row per (feature,
    domain, value index), with the bin-center location where applicable."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "group", "domain", "value_index", "location", "probability"])
        for f in report.features:
            for k in range(f.distributions.shape[0]):
                for r in range(f.distributions.shape[1]):
                    loc = "" if f.locations is None else repr(float(f.locations[r]))
                    writer.writerow(
                        [f.name, f.group, k, r, loc, repr(float(f.distributions[k, r]))]
                    )
