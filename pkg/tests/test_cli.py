"""Tests for the command line interface."""

import pytest
import yaml
from click.testing import CliRunner

from contraction_tuner.cli import cli
from contraction_tuner.dataset import read_dataset


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    """A working directory with a small-dataset configuration."""
    monkeypatch.chdir(tmp_path)
    config = {
        "dataset": {"low": 16, "high": 32, "step": 16},
        "search": {"depth": 4, "workers": 1},
        "train": {"hidden": [16], "batch_size": 4, "updates_per_iteration": 1},
    }
    (tmp_path / "small.yaml").write_text(yaml.safe_dump(config))
    return tmp_path


def _invoke(*args):
    return CliRunner().invoke(cli, ["-c", "small.yaml", *args])


def test_gen(workspace):
    """Test gen writes a split dataset file."""
    result = _invoke("gen", "-o", "bench.txt", "--seed", "1")
    assert result.exit_code == 0, result.output
    dataset = read_dataset(workspace / "bench.txt")
    assert len(dataset.benchmarks) == 8
    assert (len(dataset.train), len(dataset.test)) == (6, 2)
    assert dataset.seed == 1


def test_tune_train_eval_report(workspace):
    """Test the full pipeline from dataset to report."""
    assert _invoke("gen", "-o", "bench.txt").exit_code == 0

    result = _invoke("tune", "-b", "bench.txt", "-m", "original", "-m", "greedy1", "--limit", "2", "-o", "results")
    assert result.exit_code == 0, result.output
    assert len(list((workspace / "results").glob("*.json"))) == 4

    (workspace / "train.cfg").write_text("# overrides\nhidden = [8]\nseed = 3\n")
    result = _invoke("train", "-b", "bench.txt", "--cfg", "train.cfg", "--iterations", "1", "--limit", "3", "-o", "ckpt")
    assert result.exit_code == 0, result.output
    assert (workspace / "ckpt" / "policy.ckpt").is_file()

    result = _invoke("eval", "--ckpt", "ckpt/policy.ckpt", "-b", "bench.txt", "--limit", "2", "-o", "results")
    assert result.exit_code == 0, result.output
    assert len(list((workspace / "results").glob("*__policy.json"))) == 2

    result = _invoke("report", "--dir", "results")
    assert result.exit_code == 0, result.output
    assert "Speedup over original" in result.output
    for name in ("profile.csv", "normalized.csv", "speedups.csv", "summary.json"):
        assert (workspace / "results" / name).is_file()


def test_show(workspace):
    """Test show prints the transformed nest and its performance."""
    result = _invoke("show", "C[m,n] += A[m,k] * B[k,n] | m=8 n=8 k=8", "-a", "split_2,down")
    assert result.exit_code == 0, result.output
    assert "for m in" in result.output
    assert "GFLOPS" in result.output


def test_show_skips_illegal_actions(workspace):
    """Test an illegal action is reported and skipped."""
    result = _invoke("show", "C[m,n] += A[m,k] * B[k,n] | m=8 n=8 k=8", "-a", "up")
    assert result.exit_code == 0, result.output
    assert "not legal" in result.output


def test_peak(workspace):
    """Test the cost model reports its analytic peak."""
    result = _invoke("peak")
    assert result.exit_code == 0, result.output
    assert "2.000 GFLOPS" in result.output


def test_init(workspace):
    """Test init writes a loadable configuration."""
    result = CliRunner().invoke(cli, ["init", "--path", "out/config.yaml"])
    assert result.exit_code == 0, result.output
    assert yaml.safe_load((workspace / "out" / "config.yaml").read_text())["backend"]["backend"] == "costmodel"


@pytest.mark.parametrize(
    "args",
    [
        ("show", "C[m,n += A[m,k] * B[k,n] | m=8 n=8 k=8"),
        ("tune", "-b", "bench.txt", "-m", "bogus", "-o", "results"),
        ("tune", "-b", "bench.txt", "-m", "policy", "-o", "results"),
        ("report", "--dir", "."),
    ],
)
def test_errors_exit_nonzero(workspace, args):
    """Test failures print an error and exit with status 1."""
    assert _invoke("gen", "-o", "bench.txt").exit_code == 0
    result = _invoke(*args)
    assert result.exit_code == 1
    assert "Error" in result.output
