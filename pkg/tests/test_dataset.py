"""Tests for the dataset module."""

import pytest

from contraction_tuner.config import DatasetConfig
from contraction_tuner.dataset import (
    dataset_text,
    generate_matmul_dataset,
    matmul_spec,
    parse_dataset,
    read_dataset,
    write_dataset,
)
from contraction_tuner.exceptions import DatasetError
from contraction_tuner.models import Dataset


def test_matmul_spec():
    """Test the matmul benchmark shape and name."""
    spec = matmul_spec(64, 80, 96)
    assert spec.name == "mm_64x80x96"
    assert spec.to_dsl() == "mm_64x80x96: C[m,n] += A[m,k] * B[k,n] | m=64 n=80 k=96"


def test_default_dataset_split():
    """Test the full grid of 2197 matmuls splits 1757 / 440."""
    dataset = generate_matmul_dataset(seed=0)
    assert len(dataset.benchmarks) == 2197
    assert len(dataset.train) == 1757
    assert len(dataset.test) == 440
    for axis in "mnk":
        values = sorted({spec.extents[axis] for spec in dataset.benchmarks})
        assert values == list(range(64, 257, 16))
        assert len(values) == 13
    assert len({spec.name for spec in dataset.benchmarks}) == 2197


def test_dataset_is_seeded():
    """Test the shuffle depends only on the seed."""
    config = DatasetConfig(low=16, high=48, step=16)
    first = generate_matmul_dataset(5, config)
    second = generate_matmul_dataset(5, config)
    other = generate_matmul_dataset(6, config)
    names = [s.name for s in first.benchmarks]
    assert names == [s.name for s in second.benchmarks]
    assert names != [s.name for s in other.benchmarks]
    assert sorted(names) == sorted(s.name for s in other.benchmarks)


def test_empty_range_rejected():
    """Test an inverted extent range is an error."""
    with pytest.raises(DatasetError):
        generate_matmul_dataset(0, DatasetConfig(low=64, high=32))


def test_file_round_trip(tmp_path):
    """Test a written dataset reads back with the same split."""
    dataset = generate_matmul_dataset(3, DatasetConfig(low=16, high=64, step=16))
    path = write_dataset(dataset, tmp_path / "data" / "bench.txt")
    loaded = read_dataset(path)
    assert [s.name for s in loaded.split("train")] == [s.name for s in dataset.split("train")]
    assert [s.name for s in loaded.split("test")] == [s.name for s in dataset.split("test")]
    assert loaded.seed == 3
    assert path.read_text().splitlines()[0] == f"#@ train={len(dataset.train)} test={len(dataset.test)} seed=3"


def test_unsplit_file():
    """Test a file without a directive is one unsplit benchmark list."""
    dataset = parse_dataset("# plain list\nmm_a: C[m,n] += A[m,k] * B[k,n] | m=2 n=2 k=2\nC[i] += A[i,k] * B[k] | i=3 k=4\n")
    assert len(dataset.benchmarks) == 2
    assert dataset.train == [] and dataset.test == []
    assert len(dataset.split("test")) == 2
    assert dataset.benchmarks[1].name == "C_i3_k4"


@pytest.mark.parametrize(
    "text",
    [
        "#@ train=2 test=1\nmm_a: C[m] += A[m,k] * B[k] | m=2 k=2\n",
        "#@ train=1 test=0\n#@ train=1 test=0\nmm_a: C[m] += A[m,k] * B[k] | m=2 k=2\n",
        "#@ train=one\nmm_a: C[m] += A[m,k] * B[k] | m=2 k=2\n",
        "#@ valid=1\nmm_a: C[m] += A[m,k] * B[k] | m=2 k=2\n",
        "mm_a: C[m] += A[m,k] * B[k] | m=2 k=2\nmm_a: C[m] += A[m,k] * B[k] | m=3 k=2\n",
    ],
)
def test_malformed_files(text):
    """Test bad directives and duplicate names are rejected."""
    with pytest.raises(DatasetError):
        parse_dataset(text)


def test_missing_file(tmp_path):
    """Test reading a missing dataset file."""
    with pytest.raises(DatasetError):
        read_dataset(tmp_path / "absent.txt")


def test_write_requires_leading_train_split(tmp_path):
    """Test only datasets whose train split comes first can be written."""
    specs = [matmul_spec(16, 16, k) for k in (16, 32, 48)]
    dataset = Dataset(benchmarks=specs, train=[2], test=[0, 1])
    with pytest.raises(DatasetError):
        write_dataset(dataset, tmp_path / "bench.txt")
    assert dataset_text(Dataset(benchmarks=specs)).count("\n") == 3
