"""Correlation and regression between alignment scores and quality labels.

Word error rates (or any external quality label) are ingested from a side
file, never computed here. The report pairs each utterance's headline
alignment score with its label, fits a least-squares line, and exports a
plot-ready TSV plus a small JSON summary. Both the signed correlation and
its magnitude are reported; no sign convention is imposed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import OasAlignError


@dataclass(frozen=True)
class UtteranceRecord:
    """One scatter point: an utterance's final score and its error label."""

    utterance_id: str
    final_oas: float
    wer: float

    def __post_init__(self):
        if not (math.isfinite(self.final_oas) and math.isfinite(self.wer)):
            raise OasAlignError(f"non-finite record for {self.utterance_id!r}")
        if self.wer < 0:
            raise OasAlignError(f"negative error rate for {self.utterance_id!r}")


def _check_pair(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise OasAlignError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise OasAlignError("need at least two points")
    return x, y


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Sample correlation via the two-pass, mean-subtracted formula."""
    x, y = _check_pair(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float((dx * dx).sum())
    syy = float((dy * dy).sum())
    if sxx == 0.0 or syy == 0.0:
        raise OasAlignError("zero variance: correlation is undefined")
    r = float((dx * dy).sum()) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Ordinary least squares; returns (slope, intercept)."""
    x, y = _check_pair(x, y)
    dx = x - x.mean()
    sxx = float((dx * dx).sum())
    if sxx == 0.0:
        raise OasAlignError("zero variance in x: fit is undefined")
    slope = float((dx * (y - y.mean())).sum()) / sxx
    intercept = float(y.mean() - slope * x.mean())
    return slope, intercept


def oas_wer_report(records: Sequence[UtteranceRecord]) -> dict:
    """Correlation summary over records, deterministically ordered by id.

    Returns a dict with keys ``r``, ``abs_r``, ``slope``, ``intercept``,
    ``n`` and the sorted scatter rows. A pure function of the record
    multiset: shuffled input produces identical output.
    """
    ordered = sorted(records, key=lambda rec: rec.utterance_id)
    if len(ordered) < 2:
        raise OasAlignError("need at least two records")
    ids = [rec.utterance_id for rec in ordered]
    if len(set(ids)) != len(ids):
        raise OasAlignError("duplicate utterance ids in records")
    x = np.array([rec.final_oas for rec in ordered])
    y = np.array([rec.wer for rec in ordered])
    r = pearson(x, y)
    slope, intercept = linear_fit(x, y)
    return {
        "r": r,
        "abs_r": abs(r),
        "slope": slope,
        "intercept": intercept,
        "n": len(ordered),
        "rows": [(rec.utterance_id, rec.final_oas, rec.wer) for rec in ordered],
    }


def write_scatter_tsv(report: dict, path: str | Path) -> None:
    lines = ["utterance_id\tfinal_oas\twer"]
    for utt, score, wer in report["rows"]:
        lines.append(f"{utt}\t{score!r}\t{wer!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_corr_report(report: dict, path: str | Path) -> None:
    payload = {key: report[key] for key in ("r", "abs_r", "slope", "intercept", "n")}
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_wer_jsonl(path: str | Path) -> dict[str, float]:
    """Read ``{"utterance_id", "wer"}`` records; duplicate ids are an error."""
    out: dict[str, float] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            utt = str(rec["utterance_id"])
            wer = float(rec["wer"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise OasAlignError(f"{path}:{lineno}: bad wer record: {exc}") from exc
        if utt in out:
            raise OasAlignError(f"{path}:{lineno}: duplicate utterance id {utt!r}")
        out[utt] = wer
    return out
