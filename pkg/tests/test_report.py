import numpy as np
import pytest

from domainsense import EvalReport, StudyResult, rank_features
from domainsense.report import (
    save_distribution_figure,
    save_eval_figure,
    save_sensitivity_figure,
    save_study_figure,
    sensitivity_table,
)
from helpers import make_attrib

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def _assert_png(path):
    with open(path, "rb") as fh:
        head = fh.read(8)
    assert head == PNG_MAGIC
    import os

    assert os.path.getsize(path) > 1000


@pytest.fixture
def report(tiny_dataset):
    attrib = make_attrib(tiny_dataset)
    return rank_features(
        tiny_dataset, attrib, top_k={"categorical-scalar": 1, "numerical-scalar": 1}
    )


def test_distribution_figure_categorical(report, tmp_path):
    path = str(tmp_path / "color.png")
    assert save_distribution_figure(report, "color", path) == path
    _assert_png(path)


def test_distribution_figure_numerical_uses_locations(report, tmp_path):
    path = str(tmp_path / "amount.png")
    save_distribution_figure(report, "amount", path)
    _assert_png(path)


def test_distribution_figure_sequential(report, tmp_path):
    path = str(tmp_path / "tags.png")
    save_distribution_figure(report, "tags", path)
    _assert_png(path)


def test_sensitivity_figure(report, tmp_path):
    path = str(tmp_path / "ds.png")
    save_sensitivity_figure(report, path)
    _assert_png(path)


def test_eval_figure_handles_undefined_domain(tmp_path):
    reports = [
        EvalReport(
            overall_auc=0.82,
            domain_auc=[0.8, None, 0.9],
            domain_counts=[10, 2, 8],
            model_fingerprint="a",
            variant="SharedDNN",
        ),
        EvalReport(
            overall_auc=0.88,
            domain_auc=[0.85, 0.7, 0.95],
            domain_counts=[10, 2, 8],
            model_fingerprint="b",
            variant="Memory",
        ),
    ]
    path = str(tmp_path / "eval.png")
    save_eval_figure(reports, path)
    _assert_png(path)
    with pytest.raises(ValueError, match="nothing"):
        save_eval_figure([], str(tmp_path / "none.png"))


def test_study_figure(tmp_path):
    def rep(variant, overall, domain):
        return EvalReport(
            overall_auc=overall,
            domain_auc=domain,
            domain_counts=[5, 5, 5],
            model_fingerprint="fp",
            variant=variant,
        )

    result = StudyResult(
        variants={
            "SharedDNN": [rep("SharedDNN", 0.80, [0.8, 0.7, None])],
            "TopK": [rep("TopK", 0.86, [0.85, 0.8, 0.9])],
        },
        seeds=[0],
        num_domains=3,
    )
    path = str(tmp_path / "study.png")
    save_study_figure(result, path)
    _assert_png(path)


def test_sensitivity_table_lists_everything(report):
    table = sensitivity_table(report)
    for name in ("color", "shape", "amount", "tags"):
        assert name in table
    for group in ("categorical-scalar", "numerical-scalar", "categorical-sequential"):
        assert group in table
    assert "*" in table  # the selected markers
    assert "rank" in table
