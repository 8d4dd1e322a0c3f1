"""Dynamic-programming search for the best monotone alignment path.

A path assigns one text column to every speech row; consecutive rows either
stay on the same column or advance by one, and both endpoints are free. The
search maximizes the summed attention probability along the path. All
computation accumulates in float64 so score comparisons never flip on
float32 rounding.

Tie rules are fixed: when the diagonal and stay predecessors score equally
the diagonal wins, and a tied final-row argmax resolves to the smallest
column. ``brute_force_optimal_path`` applies the same rules, so on any
instance both searches return the identical path, not just an equal score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InstanceTooLargeError, InvalidMatrixError

# Enumeration guard for the brute-force oracle.
MAX_BRUTE_FORCE_PATHS = 10**7


@dataclass(frozen=True)
class AlignmentPath:
    """Text-column index per speech row, monotone with steps in {0, +1}."""

    indices: tuple[int, ...]
    n_text: int

    def __post_init__(self):
        if len(self.indices) == 0:
            raise InvalidMatrixError("alignment path must be non-empty")
        prev = None
        for i, col in enumerate(self.indices):
            if not 0 <= col < self.n_text:
                raise InvalidMatrixError(
                    f"path index {col} at row {i} outside [0, {self.n_text})"
                )
            if prev is not None and col - prev not in (0, 1):
                raise InvalidMatrixError(
                    f"path step {col - prev} at row {i}; only 0 or +1 allowed"
                )
            prev = col

    def __len__(self) -> int:
        return len(self.indices)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.int64)


def _checked(attention: np.ndarray) -> np.ndarray:
    mat = np.asarray(attention, dtype=np.float64)
    if mat.ndim != 2 or mat.size == 0:
        raise InvalidMatrixError(f"expected a non-empty 2-D matrix, got shape {mat.shape}")
    if not np.isfinite(mat).all():
        raise InvalidMatrixError("matrix contains non-finite entries")
    return mat


def _dp_table(mat: np.ndarray) -> np.ndarray:
    """Forward pass: dp[i, j] = mat[i, j] + max(dp[i-1, j-1], dp[i-1, j])."""
    n_rows, n_cols = mat.shape
    dp = np.empty_like(mat)
    dp[0] = mat[0]
    shifted = np.empty(n_cols, dtype=np.float64)
    for i in range(1, n_rows):
        shifted[0] = -np.inf
        shifted[1:] = dp[i - 1, :-1]
        np.maximum(shifted, dp[i - 1], out=shifted)
        np.add(mat[i], shifted, out=dp[i])
    return dp


def optimal_path(attention: np.ndarray) -> AlignmentPath:
    """Return the maximum-score monotone path through ``attention``.

    The last path entry is the final-row argmax; backtracking then walks
    upward choosing the diagonal predecessor whenever it scores at least as
    much as staying (at column 0 the missing diagonal counts as -inf).
    """
    mat = _checked(attention)
    dp = _dp_table(mat)
    n_rows = mat.shape[0]
    j = int(np.argmax(dp[-1]))  # first occurrence = smallest column on ties
    indices = [0] * n_rows
    indices[-1] = j
    for i in range(n_rows - 1, 0, -1):
        if j > 0 and dp[i - 1, j - 1] >= dp[i - 1, j]:
            j -= 1
        indices[i - 1] = j
    return AlignmentPath(indices=tuple(indices), n_text=mat.shape[1])


def path_score(attention: np.ndarray, path: AlignmentPath) -> float:
    """Sum of attention values along ``path``, in float64."""
    mat = _checked(attention)
    if len(path) != mat.shape[0] or path.n_text != mat.shape[1]:
        raise InvalidMatrixError(
            f"path for shape ({len(path)}, {path.n_text}) does not match "
            f"matrix shape {mat.shape}"
        )
    return float(mat[np.arange(mat.shape[0]), path.as_array()].sum())


def best_path_scores(stack: np.ndarray) -> np.ndarray:
    """Maximum path score for each matrix in a (batch, rows, cols) stack.

    Runs the same forward pass as :func:`optimal_path` vectorized over the
    leading axis; the score equals ``path_score(m, optimal_path(m))`` up to
    summation order (within 1e-12). Used for corpus-scale scoring where the
    path itself is not needed.
    """
    mats = np.asarray(stack, dtype=np.float64)
    if mats.ndim != 3 or mats.size == 0:
        raise InvalidMatrixError(f"expected a non-empty 3-D stack, got shape {mats.shape}")
    if not np.isfinite(mats).all():
        raise InvalidMatrixError("stack contains non-finite entries")
    n_rows = mats.shape[1]
    dp = mats[:, 0, :].copy()
    shifted = np.empty_like(dp)
    for i in range(1, n_rows):
        shifted[:, 0] = -np.inf
        shifted[:, 1:] = dp[:, :-1]
        np.maximum(shifted, dp, out=shifted)
        np.add(mats[:, i, :], shifted, out=dp)
    return dp.max(axis=1)


def path_to_durations(path: AlignmentPath) -> np.ndarray:
    """Count speech rows assigned to each text column.

    The result has one entry per text column, sums to the path length, and
    its positive entries form a single contiguous run.
    """
    counts = np.bincount(path.as_array(), minlength=path.n_text)
    return counts.astype(np.int64)


def count_monotone_paths(n_rows: int, n_cols: int) -> int:
    """Number of free-endpoint monotone paths for an n_rows x n_cols matrix."""
    total = 0
    for start in range(n_cols):
        max_steps = min(n_rows - 1, n_cols - 1 - start)
        for steps in range(max_steps + 1):
            total += math.comb(n_rows - 1, steps)
    return total


def brute_force_optimal_path(attention: np.ndarray) -> AlignmentPath:
    """Exhaustive oracle: enumerate every monotone path and keep the best.

    Ties on the float score resolve to the path whose reversed index tuple
    is lexicographically smallest, which reproduces the backtracking rules
    of :func:`optimal_path` (smallest final column; diagonal preferred on
    equal predecessor scores).
    """
    mat = _checked(attention)
    n_rows, n_cols = mat.shape
    n_paths = count_monotone_paths(n_rows, n_cols)
    if n_paths > MAX_BRUTE_FORCE_PATHS:
        raise InstanceTooLargeError(
            f"{n_paths} monotone paths for shape {mat.shape} exceeds the "
            f"{MAX_BRUTE_FORCE_PATHS} enumeration guard"
        )
    best_score = -np.inf
    best_key: tuple[int, ...] | None = None
    prefix = [0] * n_rows

    # Depth-first over (row, column, score-so-far); a stack instead of
    # recursion keeps tall-and-narrow instances inside the guard legal.
    stack: list[tuple[int, int, float]] = [(0, start, 0.0) for start in reversed(range(n_cols))]
    while stack:
        row, col, score = stack.pop()
        prefix[row] = col
        score += mat[row, col]
        if row == n_rows - 1:
            key = tuple(reversed(prefix))
            if score > best_score or (score == best_score and key < best_key):
                best_score = score
                best_key = key
            continue
        if col + 1 < n_cols:
            stack.append((row + 1, col + 1, score))
        stack.append((row + 1, col, score))

    assert best_key is not None
    return AlignmentPath(indices=tuple(reversed(best_key)), n_text=n_cols)
