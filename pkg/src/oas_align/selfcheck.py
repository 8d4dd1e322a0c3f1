"""Built-in verification suites: search oracle and gradient checks.

These run from the command line (`oas-align selfcheck`) so an installed
copy can prove its own numerics without the test suite: the path search is
replayed against exhaustive enumeration, and every analytic gradient is
compared to central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import (
    alignment_mask,
    masked_softmax,
    oas_loss,
    oas_loss_grad_wrt_logits,
    oas_loss_grad_wrt_matrix,
    progress_loss,
    progress_loss_grad,
)
from .store import SequenceLayout, extract_alignment_submatrix
from .viterbi import brute_force_optimal_path, optimal_path, path_score


@dataclass
class SuiteResult:
    name: str
    n_checked: int
    n_failed: int
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.n_failed == 0

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: {self.n_checked - self.n_failed}/{self.n_checked}{extra}"


def _one_hot_paths(n_rows: int, n_cols: int):
    """Every monotone 0/+1 path as a one-hot matrix (free endpoints)."""
    stack = [(0, start, [start]) for start in range(n_cols)]
    while stack:
        row, col, prefix = stack.pop()
        if row == n_rows - 1:
            mat = np.zeros((n_rows, n_cols))
            mat[np.arange(n_rows), prefix] = 1.0
            yield mat, prefix
            continue
        stack.append((row + 1, col, prefix + [col]))
        if col + 1 < n_cols:
            stack.append((row + 1, col + 1, prefix + [col + 1]))


def check_viterbi_oracle(
    n_random: int = 500, seed: int = 20240601, tol: float = 1e-12
) -> SuiteResult:
    """DP search vs exhaustive enumeration on small shapes.

    Covers every one-hot monotone pattern at 6x4 (the search must recover a
    planted path exactly) plus seeded random row-stochastic matrices over
    all shapes up to 6 rows by 4 columns.
    """
    checked = failed = 0
    for mat, planted in _one_hot_paths(6, 4):
        checked += 1
        found = optimal_path(mat)
        if list(found.indices) != planted or path_score(mat, found) != float(len(planted)):
            failed += 1
    rng = np.random.default_rng(seed)
    shapes = [(r, c) for r in range(1, 7) for c in range(1, 5)]
    idx = 0
    while idx < n_random:
        rows, cols = shapes[idx % len(shapes)]
        raw = rng.random((rows, cols))
        mat = raw / raw.sum(axis=1, keepdims=True)
        fast = optimal_path(mat)
        slow = brute_force_optimal_path(mat)
        checked += 1
        if abs(path_score(mat, fast) - path_score(mat, slow)) > tol:
            failed += 1
        elif fast.indices != slow.indices:
            failed += 1
        idx += 1
    return SuiteResult("viterbi-oracle", checked, failed)


def _central_diff(fn, x: np.ndarray, h: float) -> np.ndarray:
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn(x)
        flat[i] = orig - h
        down = fn(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(float(np.abs(analytic).max()), float(np.abs(numeric).max()), 1e-12)
    return float(np.abs(analytic - numeric).max()) / denom


def check_gradients(
    n_instances: int = 100, seed: int = 20240602, h: float = 1e-6, tol: float = 1e-5
) -> SuiteResult:
    """All three analytic gradients vs central finite differences."""
    rng = np.random.default_rng(seed)
    checked = failed = 0
    for _ in range(n_instances):
        rows = int(rng.integers(2, 7))
        cols = int(rng.integers(2, 5))
        raw = rng.random((rows, cols)) + 0.1
        mat = raw / raw.sum(axis=1, keepdims=True)
        _, path = oas_loss(mat)

        def loss_of_matrix(m, _path=path):
            cells = m[np.arange(m.shape[0]), _path.as_array()]
            return float(-np.log(cells).mean())

        analytic = oas_loss_grad_wrt_matrix(mat, path)
        numeric = _central_diff(loss_of_matrix, mat.copy(), h)
        checked += 1
        if _rel_err(analytic, numeric) > tol:
            failed += 1

        logits = rng.normal(0.0, 1.0, (rows, cols))

        def loss_of_logits(z, _path=path):
            shifted = z - z.max(axis=1, keepdims=True)
            probs = np.exp(shifted)
            probs /= probs.sum(axis=1, keepdims=True)
            cells = probs[np.arange(z.shape[0]), _path.as_array()]
            return float(-np.log(cells).mean())

        analytic = oas_loss_grad_wrt_logits(logits, path)
        numeric = _central_diff(loss_of_logits, logits.copy(), h)
        checked += 1
        if _rel_err(analytic, numeric) > tol:
            failed += 1

        length = int(rng.integers(2, 9))
        target = np.sort(rng.random(length))
        predicted = rng.random(length)
        valid = rng.random(length) < 0.7
        valid[rng.integers(0, length)] = True
        # Keep every sample away from the kinks of |.| and max(., 0).
        predicted = np.where(np.abs(predicted - target) < 1e-3, predicted + 5e-3, predicted)
        vidx = np.flatnonzero(valid)
        for a, b in zip(vidx[:-1], vidx[1:]):
            if abs(predicted[a] - predicted[b]) < 1e-3:
                predicted[b] += 5e-3

        def loss_of_progress(p, _t=target, _v=valid):
            return progress_loss(p, _t, _v)

        analytic = progress_loss_grad(predicted, target, valid)
        numeric = _central_diff(loss_of_progress, predicted.copy(), h)
        checked += 1
        if _rel_err(analytic, numeric) > tol:
            failed += 1
    return SuiteResult("gradient-fd", checked, failed, detail=f"h={h:g}, rtol={tol:g}")


def check_mask_denominator(
    n_instances: int = 100, seed: int = 20240603, tol: float = 1e-10
) -> SuiteResult:
    """Masked row softmax must pin the alignment block's mass to one per row."""
    rng = np.random.default_rng(seed)
    checked = failed = 0
    for _ in range(n_instances):
        n_text = int(rng.integers(1, 6))
        n_speech = int(rng.integers(1, 8))
        gap = int(rng.integers(0, 3))
        seq_len = n_text + gap + n_speech + int(rng.integers(0, 3))
        layout = SequenceLayout(
            seq_len=seq_len,
            text_span=(0, n_text),
            speech_span=(n_text + gap, n_text + gap + n_speech),
        )
        logits = rng.normal(0.0, 2.0, (seq_len, seq_len))
        probs = masked_softmax(logits, alignment_mask(layout))
        block = extract_alignment_submatrix(probs, layout)
        checked += 1
        if abs(float(block.sum()) - layout.n_speech) > tol:
            failed += 1
    return SuiteResult("mask-denominator", checked, failed, detail=f"atol={tol:g}")


def run_all(fast: bool = False) -> list[SuiteResult]:
    scale = 0.2 if fast else 1.0
    return [
        check_viterbi_oracle(n_random=max(50, int(500 * scale))),
        check_gradients(n_instances=max(20, int(100 * scale))),
        check_mask_denominator(n_instances=max(20, int(100 * scale))),
    ]
