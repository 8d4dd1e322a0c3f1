"""Correlation/regression statistics and the scatter report."""

import json
import math
import random

import numpy as np
import pytest

from oas_align.errors import OasAlignError
from oas_align.stats import (
    UtteranceRecord,
    linear_fit,
    load_wer_jsonl,
    oas_wer_report,
    pearson,
    write_corr_report,
    write_scatter_tsv,
)


def pearson_single_pass(x, y):
    """Independent textbook oracle: raw moment accumulation."""
    n = len(x)
    sx = sum(x)
    sy = sum(y)
    sxx = sum(v * v for v in x)
    syy = sum(v * v for v in y)
    sxy = sum(a * b for a, b in zip(x, y))
    num = n * sxy - sx * sy
    den = math.sqrt(n * sxx - sx * sx) * math.sqrt(n * syy - sy * sy)
    return num / den


def normal_equations_fit(x, y):
    """Independent oracle: solve the 2x2 normal equations directly."""
    n = len(x)
    sx = float(np.sum(x))
    sxx = float(np.sum(x * x))
    sy = float(np.sum(y))
    sxy = float(np.sum(x * y))
    det = n * sxx - sx * sx
    slope = (n * sxy - sx * sy) / det
    intercept = (sxx * sy - sx * sxy) / det
    return slope, intercept


class TestPearson:
    def test_exact_linearity(self):
        assert pearson(np.array([1.0, 2.0, 3.0]), np.array([2.0, 4.0, 6.0])) == 1.0

    def test_zero_variance_rejected(self):
        with pytest.raises(OasAlignError, match="variance"):
            pearson(np.array([1.0, 2.0, 3.0]), np.array([5.0, 5.0, 5.0]))

    def test_length_mismatch(self):
        with pytest.raises(OasAlignError):
            pearson(np.ones(3), np.ones(2))

    def test_matches_single_pass_oracle(self):
        rng = np.random.default_rng(101)
        for _ in range(200):
            n = int(rng.integers(2, 40))
            x = rng.normal(0, 3, n)
            y = rng.normal(1, 2, n) + 0.5 * x
            assert pearson(x, y) == pytest.approx(
                pearson_single_pass(x.tolist(), y.tolist()), abs=1e-12
            )

    def test_symmetry_scale_shift(self):
        rng = np.random.default_rng(103)
        x = rng.normal(size=30)
        y = rng.normal(size=30)
        r = pearson(x, y)
        assert pearson(y, x) == pytest.approx(r, abs=1e-12)
        assert pearson(3.0 * x + 1.0, y) == pytest.approx(r, abs=1e-12)
        assert pearson(-2.0 * x + 5.0, y) == pytest.approx(-r, abs=1e-12)


class TestLinearFit:
    def test_exact_line(self):
        x = np.array([0.0, 1.0, 2.0, 3.0])
        slope, intercept = linear_fit(x, 2.0 * x + 1.0)
        assert slope == pytest.approx(2.0, abs=1e-12)
        assert intercept == pytest.approx(1.0, abs=1e-12)

    def test_two_points_interpolate(self):
        slope, intercept = linear_fit(np.array([1.0, 3.0]), np.array([5.0, 1.0]))
        assert slope == pytest.approx(-2.0)
        assert intercept == pytest.approx(7.0)

    def test_matches_normal_equations(self):
        rng = np.random.default_rng(107)
        for _ in range(50):
            n = int(rng.integers(2, 50))
            x = rng.normal(0, 2, n)
            y = rng.normal(0, 1, n) - 0.7 * x
            got = linear_fit(x, y)
            want = normal_equations_fit(x, y)
            assert got[0] == pytest.approx(want[0], abs=1e-10)
            assert got[1] == pytest.approx(want[1], abs=1e-10)

    def test_residual_orthogonality(self):
        rng = np.random.default_rng(109)
        x = rng.normal(0, 1, 100)
        y = rng.normal(0, 1, 100) + 0.3 * x
        slope, intercept = linear_fit(x, y)
        resid = y - (slope * x + intercept)
        assert abs(resid.sum()) < 1e-9
        assert abs((resid * x).sum()) < 1e-9


class TestReport:
    def make_records(self):
        rng = np.random.default_rng(113)
        return [
            UtteranceRecord(f"utt-{i:03d}", float(rng.uniform(0.2, 1.0)), float(rng.uniform(0, 0.5)))
            for i in range(20)
        ]

    def test_exact_line_has_unit_correlation(self):
        records = [
            UtteranceRecord(f"u{i}", 0.1 * i, 1.0 - 0.05 * i) for i in range(10)
        ]
        report = oas_wer_report(records)
        assert report["abs_r"] == pytest.approx(1.0)
        assert report["r"] == pytest.approx(-1.0)
        assert report["slope"] == pytest.approx(-0.5)
        assert report["intercept"] == pytest.approx(1.0)

    def test_shuffle_invariance_bytes(self, tmp_path):
        records = self.make_records()
        shuffled = records[:]
        random.Random(5).shuffle(shuffled)
        a = oas_wer_report(records)
        b = oas_wer_report(shuffled)
        assert a == b
        write_scatter_tsv(a, tmp_path / "a.tsv")
        write_scatter_tsv(b, tmp_path / "b.tsv")
        assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()
        write_corr_report(a, tmp_path / "a.json")
        write_corr_report(b, tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_tsv_shape(self, tmp_path):
        report = oas_wer_report(self.make_records())
        write_scatter_tsv(report, tmp_path / "scatter.tsv")
        lines = (tmp_path / "scatter.tsv").read_text().splitlines()
        assert lines[0] == "utterance_id\tfinal_oas\twer"
        assert len(lines) == 21
        ids = [line.split("\t")[0] for line in lines[1:]]
        assert ids == sorted(ids)

    def test_corr_report_schema(self, tmp_path):
        report = oas_wer_report(self.make_records())
        write_corr_report(report, tmp_path / "corr.json")
        payload = json.loads((tmp_path / "corr.json").read_text())
        assert set(payload) == {"r", "abs_r", "slope", "intercept", "n"}
        assert payload["n"] == 20

    def test_duplicate_ids_rejected(self):
        records = [UtteranceRecord("same", 0.5, 0.1), UtteranceRecord("same", 0.6, 0.2)]
        with pytest.raises(OasAlignError, match="duplicate"):
            oas_wer_report(records)

    def test_too_few_records(self):
        with pytest.raises(OasAlignError):
            oas_wer_report([UtteranceRecord("only", 0.5, 0.1)])

    def test_record_validation(self):
        with pytest.raises(OasAlignError):
            UtteranceRecord("bad", float("nan"), 0.1)
        with pytest.raises(OasAlignError):
            UtteranceRecord("bad", 0.5, -0.1)


class TestWerFile:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "wer.jsonl"
        path.write_text(
            '{"utterance_id": "a", "wer": 0.25}\n{"utterance_id": "b", "wer": 0.5}\n'
        )
        assert load_wer_jsonl(path) == {"a": 0.25, "b": 0.5}

    def test_bad_line(self, tmp_path):
        path = tmp_path / "wer.jsonl"
        path.write_text('{"utterance_id": "a"}\n')
        with pytest.raises(OasAlignError, match="wer.jsonl:1"):
            load_wer_jsonl(path)

    def test_duplicate_id(self, tmp_path):
        path = tmp_path / "wer.jsonl"
        path.write_text(
            '{"utterance_id": "a", "wer": 0.2}\n{"utterance_id": "a", "wer": 0.3}\n'
        )
        with pytest.raises(OasAlignError, match="duplicate"):
            load_wer_jsonl(path)
