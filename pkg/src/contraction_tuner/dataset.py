"""Matmul benchmark dataset generation and the benchmark file format.

A dataset file holds one benchmark DSL line per benchmark. An optional
directive records the split; the first ``train`` benchmarks form the training
split and the rest the test split::

    #@ train=1757 test=440 seed=0
    mm_64x64x64: C[m,n] += A[m,k] * B[k,n] | m=64 n=64 k=64
"""

import itertools
import logging
import re
from collections import Counter
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from .config import DatasetConfig
from .contraction import parse_spec_lines
from .exceptions import DatasetError
from .models import ContractionSpec, Dataset, TensorRef


logger = logging.getLogger(__name__)

_DIRECTIVE_RE = re.compile(r"^\s*#@\s*(?P<body>.*)$")


def matmul_spec(m: int, n: int, k: int) -> ContractionSpec:
    """C[m,n] += A[m,k] * B[k,n] named mm_{m}x{n}x{k}."""
    return ContractionSpec(
        name=f"mm_{m}x{n}x{k}",
        output=TensorRef(name="C", indices=("m", "n")),
        operands=(TensorRef(name="A", indices=("m", "k")), TensorRef(name="B", indices=("k", "n"))),
        extents={"m": m, "n": n, "k": k},
    )


def generate_matmul_dataset(seed: int = 0, config: Optional[DatasetConfig] = None) -> Dataset:
    """Every (m, n, k) on the extent grid, shuffled by seed and split train/test."""
    config = config or DatasetConfig()
    if config.high < config.low:
        raise DatasetError(f"extent range is empty: {config.low}..{config.high}")
    extents = range(config.low, config.high + 1, config.step)
    specs = [matmul_spec(m, n, k) for m, n, k in itertools.product(extents, repeat=3)]
    order = np.random.default_rng(seed).permutation(len(specs))
    benchmarks = [specs[i] for i in order]
    n_train = int(len(benchmarks) * config.train_fraction)
    logger.info(f"Generated {len(benchmarks)} matmul benchmarks ({n_train} train) with seed {seed}")
    return Dataset(
        benchmarks=benchmarks,
        train=list(range(n_train)),
        test=list(range(n_train, len(benchmarks))),
        seed=seed,
    )


def dataset_text(dataset: Dataset) -> str:
    lines = []
    if dataset.train or dataset.test:
        directive = f"#@ train={len(dataset.train)} test={len(dataset.test)}"
        if dataset.seed is not None:
            directive += f" seed={dataset.seed}"
        lines.append(directive)
    lines.extend(spec.to_dsl() for spec in dataset.benchmarks)
    return "\n".join(lines) + "\n"


def write_dataset(dataset: Dataset, path: Union[str, Path]) -> Path:
    # Benchmarks must already be in split order: train first.
    if dataset.train != list(range(len(dataset.train))):
        raise DatasetError("train split must be the leading benchmarks to be written")
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(dataset_text(dataset), encoding="utf-8")
    return target


def _parse_directive(body: str) -> Dict[str, int]:
    values: Dict[str, int] = {}
    for item in body.split():
        key, sep, value = item.partition("=")
        if not sep or key not in ("train", "test", "seed") or not re.fullmatch(r"-?\d+", value):
            raise DatasetError(f"malformed dataset directive item: {item!r}")
        values[key] = int(value)
    return values


def parse_dataset(text: str) -> Dataset:
    """Parse dataset file contents."""
    directive: Optional[Dict[str, int]] = None
    for raw in text.splitlines():
        match = _DIRECTIVE_RE.match(raw)
        if match:
            if directive is not None:
                raise DatasetError("dataset file has more than one split directive")
            directive = _parse_directive(match.group("body"))

    benchmarks = parse_spec_lines(text)
    counts = Counter(spec.name for spec in benchmarks)
    duplicates = sorted(name for name, count in counts.items() if count > 1)
    if duplicates:
        raise DatasetError(f"duplicate benchmark names: {', '.join(duplicates)}")

    if directive is None:
        return Dataset(benchmarks=benchmarks)
    n_train, n_test = directive.get("train", 0), directive.get("test", 0)
    if n_train + n_test != len(benchmarks):
        raise DatasetError(f"split directive covers {n_train + n_test} benchmarks but the file has {len(benchmarks)}")
    return Dataset(
        benchmarks=benchmarks,
        train=list(range(n_train)),
        test=list(range(n_train, n_train + n_test)),
        seed=directive.get("seed"),
    )


def read_dataset(path: Union[str, Path]) -> Dataset:
    target = Path(path)
    if not target.is_file():
        raise DatasetError(f"dataset file not found: {target}")
    dataset = parse_dataset(target.read_text(encoding="utf-8"))
    logger.debug(f"Read {len(dataset.benchmarks)} benchmarks from {target}")
    return dataset
