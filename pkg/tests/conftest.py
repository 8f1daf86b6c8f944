import numpy as np
import pytest

from domainsense import (
    FeatureSchema,
    MultiDomainDataset,
    SyntheticConfig,
    generate_synthetic,
)
from helpers import build_tiny_schema


@pytest.fixture
def tiny_schema() -> FeatureSchema:
    return build_tiny_schema()


@pytest.fixture
def tiny_dataset(tiny_schema) -> MultiDomainDataset:
    # 9 rows, 3 per domain; tags row 2 is an empty sequence
    tags = np.zeros((9, 4), dtype=np.int64)
    tags[0, :2] = [0, 1]
    tags[1, :3] = [1, 1, 2]
    tags[3, :1] = [2]
    tags[4, :2] = [0, 0]
    tags[5, :4] = [0, 1, 2, 3]  # includes the OOV index
    tags[6, :1] = [1]
    tags[7, :2] = [2, 1]
    tags[8, :1] = [0]
    lengths = np.array([2, 3, 0, 1, 2, 4, 1, 2, 1], dtype=np.int64)
    return MultiDomainDataset(
        schema=tiny_schema,
        columns={
            "color": np.array([0, 1, 2, 0, 1, 3, 2, 0, 1], dtype=np.int64),
            "shape": np.array([0, 1, 0, 1, 0, 1, 0, 1, 0], dtype=np.int64),
            "amount": np.array([0.5, 1.5, 2.5, 3.5, 0.1, 1.9, 2.2, 3.9, 0.7]),
            "tags": tags,
        },
        seq_lengths={"tags": lengths},
        domains=np.array([0, 0, 0, 1, 1, 1, 2, 2, 2], dtype=np.int64),
        labels=np.array([1, 0, 1, 0, 1, 0, 1, 1, 0], dtype=np.int64),
    )


@pytest.fixture(scope="session")
def small_bundle():
    """A modest synthetic bundle shared by training-level tests."""
    cfg = SyntheticConfig(
        seed=11,
        num_samples=2500,
        domain_proportions=(0.6, 0.25, 0.15),
        num_cat_scalar=3,
        num_cat_planted=1,
        num_num_scalar=2,
        num_num_planted=1,
        num_cat_seq=1,
        vocab_size=6,
        num_bins=5,
        max_seq_len=5,
        seq_len_range=(1, 4),
    )
    return generate_synthetic(cfg)
