"""Aggregates result records into performance profiles and speedup tables."""

import logging
import statistics
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from pydantic import ValidationError

from .exceptions import ReportError
from .models import MethodOutcome, ResultRecord, RunReport
from .utils import write_csv, write_json


logger = logging.getLogger(__name__)

DEFAULT_BASELINE = "original"

Table = Dict[str, Dict[str, float]]


def performance_profile(table: Table, methods: Sequence[str]) -> Dict[str, List[Tuple[float, float]]]:
    """Fraction of benchmarks each method solves within a factor tau of the best.

    ``table`` maps benchmark -> method -> gflops. Tau points are the distinct
    best/gflops ratios plus 1, ascending; each curve is a nondecreasing step
    function evaluated at those points.
    """
    if not table:
        raise ReportError("no benchmarks to profile")
    ratios: Dict[str, List[float]] = {m: [] for m in methods}
    for benchmark, row in table.items():
        best = max(row[m] for m in methods)
        for method in methods:
            ratios[method].append(best / row[method])

    taus = sorted({1.0, *(r for values in ratios.values() for r in values)})
    n = len(table)
    return {
        method: [(tau, sum(1 for r in ratios[method] if r <= tau) / n) for tau in taus]
        for method in methods
    }


def normalize(table: Table, methods: Sequence[str]) -> Table:
    """gflops divided by the best method's gflops on the same benchmark."""
    normalized: Table = {}
    for benchmark, row in table.items():
        best = max(row[m] for m in methods)
        normalized[benchmark] = {m: row[m] / best for m in methods}
    return normalized


def speedups(table: Table, methods: Sequence[str], baseline: str) -> Table:
    """Per benchmark, each non-baseline method's gflops over the baseline's."""
    return {
        benchmark: {m: row[m] / row[baseline] for m in methods if m != baseline}
        for benchmark, row in table.items()
    }


def summarize_speedups(table: Table, methods: Sequence[str], baseline: str) -> Dict[str, Dict[str, float]]:
    summary: Dict[str, Dict[str, float]] = {}
    for method in methods:
        if method == baseline:
            continue
        values = [row[method] for row in table.values()]
        summary[method] = {
            "mean": statistics.fmean(values),
            "median": statistics.median(values),
            "min": min(values),
            "max": max(values),
            "fraction_faster": sum(1 for v in values if v > 1.0) / len(values),
        }
    return summary


class ReportManager:
    """Loads a results directory and writes the comparison report."""

    def __init__(self, results_dir: Union[str, Path]):
        self.results_dir = Path(results_dir)

    def load_records(self) -> List[ResultRecord]:
        if not self.results_dir.is_dir():
            raise ReportError(f"results directory not found: {self.results_dir}")
        records: List[ResultRecord] = []
        for path in sorted(self.results_dir.glob("*.json")):
            if path.name == "summary.json":
                continue
            try:
                records.append(ResultRecord.model_validate_json(path.read_text(encoding="utf-8")))
            except ValidationError as e:
                raise ReportError(f"{path.name} is not a result record: {e}") from e
        logger.info(f"Loaded {len(records)} result records from {self.results_dir}")
        return records

    @staticmethod
    def resolve_baseline(records: Sequence[ResultRecord], baseline: Optional[str]) -> Optional[str]:
        """An explicit baseline is kept; otherwise the untiled baseline if present."""
        if baseline is not None:
            return baseline
        methods = {r.method for r in records}
        return DEFAULT_BASELINE if DEFAULT_BASELINE in methods else None

    def build(self, records: Sequence[ResultRecord], baseline: Optional[str] = None) -> RunReport:
        """Check the records cover a common benchmark set and aggregate them."""
        per_benchmark: Dict[str, Dict[str, MethodOutcome]] = {}
        by_method: Dict[str, set] = {}
        for record in records:
            row = per_benchmark.setdefault(record.benchmark, {})
            if record.method in row:
                raise ReportError(f"duplicate result for {record.benchmark} / {record.method}")
            row[record.method] = MethodOutcome(gflops=record.gflops, wall_time_s=record.wall_time_s, actions=record.actions)
            by_method.setdefault(record.method, set()).add(record.benchmark)

        methods = sorted(by_method)
        if len(methods) < 2:
            raise ReportError(f"a report needs at least two methods, found {len(methods)}")
        benchmarks = sorted(per_benchmark)
        for method in methods:
            missing = sorted(set(benchmarks) - by_method[method])
            if missing:
                raise ReportError(f"method {method} has no result for: {', '.join(missing[:5])}")
        if baseline is not None and baseline not in by_method:
            raise ReportError(f"baseline method {baseline} has no results")

        table: Table = {b: {m: per_benchmark[b][m].gflops for m in methods} for b in benchmarks}
        report = RunReport(
            methods=methods,
            benchmarks=benchmarks,
            baseline=baseline,
            per_benchmark=per_benchmark,
            normalized=normalize(table, methods),
            profiles=performance_profile(table, methods),
        )
        if baseline is not None:
            report.speedups = speedups(table, methods, baseline)
            report.speedup_summary = summarize_speedups(report.speedups, methods, baseline)
        return report

    def write(self, report: RunReport, out_dir: Optional[Union[str, Path]] = None) -> List[Path]:
        """profile.csv, normalized.csv, speedups.csv (with a baseline) and summary.json."""
        target = Path(out_dir) if out_dir is not None else self.results_dir
        written = [
            write_csv(
                target / "profile.csv",
                ("method", "tau", "fraction"),
                ([m, tau, frac] for m in report.methods for tau, frac in report.profiles[m]),
            ),
            write_csv(
                target / "normalized.csv",
                ("benchmark", *report.methods),
                ([b, *(report.normalized[b][m] for m in report.methods)] for b in report.benchmarks),
            ),
        ]
        if report.baseline is not None:
            written.append(
                write_csv(
                    target / "speedups.csv",
                    ("benchmark", "method", "speedup"),
                    ([b, m, s] for b in report.benchmarks for m, s in report.speedups[b].items()),
                )
            )
        written.append(write_json(target / "summary.json", report.model_dump_json(indent=2)))
        return written

    def run(self, baseline: Optional[str] = None, out_dir: Optional[Union[str, Path]] = None) -> RunReport:
        records = self.load_records()
        report = self.build(records, self.resolve_baseline(records, baseline))
        self.write(report, out_dir)
        return report
