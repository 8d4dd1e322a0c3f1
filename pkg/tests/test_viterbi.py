"""Path search vs the exhaustive oracle, plus path utilities."""

import numpy as np
import pytest

from oas_align.errors import InstanceTooLargeError, InvalidMatrixError
from oas_align.viterbi import (
    AlignmentPath,
    best_path_scores,
    brute_force_optimal_path,
    count_monotone_paths,
    optimal_path,
    path_score,
    path_to_durations,
)


def all_shapes(max_rows=6, max_cols=4):
    return [(r, c) for r in range(1, max_rows + 1) for c in range(1, max_cols + 1)]


def random_stochastic(rng, rows, cols):
    raw = rng.random((rows, cols))
    return raw / raw.sum(axis=1, keepdims=True)


class TestFixtures:
    def test_identity_diagonal(self):
        path = optimal_path(np.eye(3))
        assert path.indices == (0, 1, 2)
        assert path_score(np.eye(3), path) == 3.0

    def test_uniform_2x2_tie_rules(self):
        # Final-row argmax ties resolve to the smallest column and the
        # backtrack then stays, so the all-ties matrix yields [0, 0].
        path = optimal_path(np.full((2, 2), 0.5))
        assert path.indices == (0, 0)

    def test_single_row_argmax(self):
        path = brute_force_optimal_path(np.array([[0.1, 0.7, 0.2]]))
        assert path.indices == (1,)

    def test_path_score_zero_matrix(self):
        path = AlignmentPath(indices=(0, 1, 1), n_text=3)
        assert path_score(np.zeros((3, 3)), path) == 0.0

    def test_errors(self):
        with pytest.raises(InvalidMatrixError):
            optimal_path(np.zeros((0, 3)))
        with pytest.raises(InvalidMatrixError):
            optimal_path(np.array([[np.nan, 1.0]]))
        with pytest.raises(InvalidMatrixError):
            path_score(np.eye(3), AlignmentPath(indices=(0, 1), n_text=3))


class TestPathType:
    def test_rejects_bad_steps(self):
        with pytest.raises(InvalidMatrixError):
            AlignmentPath(indices=(0, 2), n_text=3)
        with pytest.raises(InvalidMatrixError):
            AlignmentPath(indices=(1, 0), n_text=3)
        with pytest.raises(InvalidMatrixError):
            AlignmentPath(indices=(0, 1, 3), n_text=3)
        with pytest.raises(InvalidMatrixError):
            AlignmentPath(indices=(), n_text=3)


class TestDurations:
    def test_worked_example(self):
        path = AlignmentPath(indices=(0, 0, 1, 1, 1, 2, 2, 2), n_text=3)
        assert path_to_durations(path).tolist() == [2, 3, 3]

    def test_single(self):
        assert path_to_durations(AlignmentPath((0,), n_text=1)).tolist() == [1]

    def test_unvisited_columns_zero(self):
        assert path_to_durations(AlignmentPath((1, 1), n_text=3)).tolist() == [0, 2, 0]

    def test_sum_equals_rows(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            mat = random_stochastic(rng, int(rng.integers(1, 9)), int(rng.integers(1, 6)))
            path = optimal_path(mat)
            durations = path_to_durations(path)
            assert durations.sum() == mat.shape[0]
            positive = np.flatnonzero(durations)
            assert np.array_equal(positive, np.arange(positive[0], positive[-1] + 1))


class TestOracleAgreement:
    def test_path_count_formula_matches_enumeration(self):
        # Independent check of the guard arithmetic: count leaves by DFS.
        for rows, cols in all_shapes(5, 4):
            leaves = 0
            stack = [(0, start) for start in range(cols)]
            while stack:
                row, col = stack.pop()
                if row == rows - 1:
                    leaves += 1
                    continue
                stack.append((row + 1, col))
                if col + 1 < cols:
                    stack.append((row + 1, col + 1))
            assert leaves == count_monotone_paths(rows, cols)

    def test_exhaustive_small_grid(self):
        rng = np.random.default_rng(909)
        n_instances = 0
        for rows, cols in all_shapes():
            for _ in range(25):
                mat = random_stochastic(rng, rows, cols)
                fast = optimal_path(mat)
                slow = brute_force_optimal_path(mat)
                assert fast.indices == slow.indices
                assert abs(path_score(mat, fast) - path_score(mat, slow)) <= 1e-12
                n_instances += 1
        assert n_instances >= 500

    def test_one_hot_patterns_recovered(self):
        # Every monotone one-hot pattern at 6x4 is recovered exactly with
        # score equal to the number of rows.
        stack = [(0, start, [start]) for start in range(4)]
        patterns = []
        while stack:
            row, col, prefix = stack.pop()
            if row == 5:
                patterns.append(prefix)
                continue
            stack.append((row + 1, col, prefix + [col]))
            if col + 1 < 4:
                stack.append((row + 1, col + 1, prefix + [col + 1]))
        assert len(patterns) == count_monotone_paths(6, 4)
        for planted in patterns:
            mat = np.zeros((6, 4))
            mat[np.arange(6), planted] = 1.0
            for search in (optimal_path, brute_force_optimal_path):
                found = search(mat)
                assert list(found.indices) == planted
                assert path_score(mat, found) == 6.0

    def test_guard_rejects_large_instances(self):
        with pytest.raises(InstanceTooLargeError):
            brute_force_optimal_path(np.zeros((64, 32)))


class TestProperties:
    def test_monotone_steps_always(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            mat = rng.random((int(rng.integers(1, 12)), int(rng.integers(1, 7))))
            path = optimal_path(mat)
            steps = np.diff(path.as_array())
            assert np.isin(steps, (0, 1)).all()

    @pytest.mark.parametrize("scale", [0.25, 2.0, 10.0])
    def test_scale_equivariance(self, scale):
        rng = np.random.default_rng(23)
        for _ in range(50):
            mat = random_stochastic(rng, 6, 4)
            assert optimal_path(mat).indices == optimal_path(scale * mat).indices

    def test_row_shift_invariance(self):
        # Adding a constant to one row shifts every path score equally.
        rng = np.random.default_rng(29)
        for _ in range(50):
            mat = random_stochastic(rng, 6, 4)
            shifted = mat.copy()
            row = int(rng.integers(0, 6))
            shifted[row] += 0.37
            assert optimal_path(mat).indices == optimal_path(shifted).indices

    def test_batch_scores_match_scalar(self):
        rng = np.random.default_rng(31)
        stack = np.stack([random_stochastic(rng, 7, 5) for _ in range(40)])
        batched = best_path_scores(stack)
        for idx in range(stack.shape[0]):
            single = path_score(stack[idx], optimal_path(stack[idx]))
            assert batched[idx] == pytest.approx(single, abs=1e-12)
