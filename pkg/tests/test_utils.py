"""Tests for the utils module."""

import logging

from contraction_tuner.utils import (
    format_duration,
    read_csv,
    read_jsonl,
    sanitize_name,
    setup_logging,
    write_csv,
    write_json,
    write_jsonl,
)


def test_sanitize_name():
    """Test file-name sanitization."""
    assert sanitize_name("mm_64x64x64") == "mm_64x64x64"
    assert sanitize_name("C[m,n] += A") == "C-m-n-A"
    assert sanitize_name("---") == "unnamed"
    assert sanitize_name("a  b") == "a-b"


def test_format_duration():
    """Test duration formatting."""
    assert format_duration(0.5) == "500.0ms"
    assert format_duration(30) == "30.0s"
    assert format_duration(90) == "1.5m"
    assert format_duration(7200) == "2.0h"


def test_csv_round_trip(tmp_path):
    """Test CSV writing and reading."""
    path = write_csv(tmp_path / "out" / "t.csv", ("a", "b"), [[1, 2.5], [3, 4.0]])
    rows = read_csv(path)
    assert rows == [{"a": "1", "b": "2.5"}, {"a": "3", "b": "4.0"}]


def test_jsonl_round_trip(tmp_path):
    """Test JSON lines writing skips nothing and reading skips blanks."""
    path = tmp_path / "t.jsonl"
    assert write_jsonl(path, ['{"x": 1}', '{"x": 2}']) == 2
    with open(path, "a") as f:
        f.write("\n\n")
    assert read_jsonl(path) == ['{"x": 1}', '{"x": 2}']


def test_write_json_creates_parents(tmp_path):
    """Test JSON documents are written with a trailing newline."""
    path = write_json(tmp_path / "a" / "b.json", '{"ok": true}')
    assert path.read_text() == '{"ok": true}\n'


def test_setup_logging_file(tmp_path):
    """Test logging to a file."""
    log_file = tmp_path / "logs" / "run.log"
    setup_logging("DEBUG", file_path=str(log_file))
    logging.getLogger("contraction_tuner.test").debug("hello")
    for handler in logging.getLogger().handlers:
        handler.flush()
    assert "hello" in log_file.read_text()
