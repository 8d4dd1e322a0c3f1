"""Loss values, analytic gradients vs finite differences, mask property."""

import math

import numpy as np
import pytest

from oas_align.errors import CollapsedPathError, OasAlignError
from oas_align.losses import (
    alignment_mask,
    masked_softmax,
    oas_loss,
    oas_loss_grad_wrt_logits,
    oas_loss_grad_wrt_matrix,
    progress_loss,
    progress_loss_grad,
)
from oas_align.store import SequenceLayout, extract_alignment_submatrix
from oas_align.viterbi import AlignmentPath, brute_force_optimal_path


def central_diff(fn, x, h=1e-6):
    """Independent finite-difference oracle, one coordinate at a time."""
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
        gflat[i] = (up - down) / (2 * h)
    return grad


def rel_err(a, b):
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    return np.abs(a - b).max() / scale


def random_stochastic(rng, rows, cols):
    raw = rng.random((rows, cols)) + 0.1
    return raw / raw.sum(axis=1, keepdims=True)


class TestAlignmentMask:
    def test_pattern(self):
        layout = SequenceLayout(seq_len=8, text_span=(0, 3), speech_span=(3, 8))
        mask = alignment_mask(layout)
        for row in range(3):
            assert mask[row, : row + 1].all()
            assert not mask[row, row + 1 :].any()
        for row in range(3, 8):
            assert mask[row, 0:3].all()
            assert not mask[row, 3:].any()

    def test_single_text_column_forces_certainty(self):
        layout = SequenceLayout(seq_len=4, text_span=(0, 1), speech_span=(1, 4))
        rng = np.random.default_rng(2)
        probs = masked_softmax(rng.normal(size=(4, 4)), alignment_mask(layout))
        block = extract_alignment_submatrix(probs, layout)
        assert np.allclose(block, 1.0)
        loss, _ = oas_loss(block)
        assert loss == 0.0

    def test_denominator_equals_speech_rows(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            layout = SequenceLayout(seq_len=10, text_span=(0, 4), speech_span=(5, 10))
            probs = masked_softmax(rng.normal(0, 2, (10, 10)), alignment_mask(layout))
            block = extract_alignment_submatrix(probs, layout)
            assert abs(block.sum() - layout.n_speech) < 1e-10
            assert np.allclose(block.sum(axis=1), 1.0, atol=1e-12)


class TestPathLogLoss:
    def test_perfect_path_zero_loss(self):
        mat = np.zeros((4, 3))
        mat[np.arange(4), [0, 0, 1, 2]] = 1.0
        loss, path = oas_loss(mat)
        assert loss == 0.0
        assert path.indices == (0, 0, 1, 2)

    def test_uniform_2x4_is_ln4(self):
        loss, _ = oas_loss(np.full((2, 4), 0.25))
        assert loss == pytest.approx(math.log(4), abs=1e-12)

    def test_matches_brute_force_recomputation(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            mat = random_stochastic(rng, 6, 4)
            loss, path = oas_loss(mat)
            oracle_path = brute_force_optimal_path(mat)
            cells = mat[np.arange(6), oracle_path.as_array()]
            assert path.indices == oracle_path.indices
            assert loss == pytest.approx(-np.log(cells).mean(), abs=1e-12)

    def test_zero_path_cell_raises_with_location(self):
        mat = np.array([[1.0], [0.0]])
        with pytest.raises(CollapsedPathError) as err:
            oas_loss(mat)
        assert (err.value.row, err.value.col) == (1, 0)

    def test_floor_opt_in(self):
        mat = np.array([[1.0], [0.0]])
        loss, _ = oas_loss(mat, floor=1e-8)
        assert loss == pytest.approx(-math.log(1e-8) / 2)

    def test_jensen_relation_to_score_ratio(self):
        # exp(-loss) is the geometric mean of path cells, never above the
        # arithmetic mean path mass per row.
        rng = np.random.default_rng(11)
        for _ in range(50):
            mat = random_stochastic(rng, 5, 4)
            loss, path = oas_loss(mat)
            mean_path_mass = mat[np.arange(5), path.as_array()].sum() / 5
            assert math.exp(-loss) <= mean_path_mass + 1e-12


class TestMatrixGradient:
    def test_uniform_closed_form(self):
        mat = np.full((2, 4), 0.25)
        _, path = oas_loss(mat)
        grad = oas_loss_grad_wrt_matrix(mat, path)
        expected = np.zeros((2, 4))
        expected[np.arange(2), path.as_array()] = -2.0
        assert np.array_equal(grad, expected)

    def test_unit_path_cells(self):
        mat = np.zeros((4, 3))
        mat[np.arange(4), [0, 1, 2, 2]] = 1.0
        _, path = oas_loss(mat)
        grad = oas_loss_grad_wrt_matrix(mat, path)
        assert np.allclose(grad[np.arange(4), path.as_array()], -0.25)

    def test_finite_differences(self):
        rng = np.random.default_rng(13)
        for _ in range(25):
            mat = random_stochastic(rng, int(rng.integers(2, 7)), int(rng.integers(2, 5)))
            _, path = oas_loss(mat)

            def frozen_loss(m, _p=path):
                cells = m[np.arange(m.shape[0]), _p.as_array()]
                return -np.log(cells).mean()

            grad = oas_loss_grad_wrt_matrix(mat, path)
            numeric = central_diff(frozen_loss, mat.copy())
            assert rel_err(grad, numeric) < 1e-5


class TestLogitsGradient:
    def test_uniform_row_closed_form(self):
        logits = np.zeros((2, 4))
        path = AlignmentPath(indices=(0, 0), n_text=4)
        grad = oas_loss_grad_wrt_logits(logits, path)
        assert np.allclose(grad[0], np.array([0.25 - 1, 0.25, 0.25, 0.25]) / 2)

    def test_rows_sum_to_zero(self):
        rng = np.random.default_rng(17)
        logits = rng.normal(size=(5, 4))
        _, path = oas_loss(random_stochastic(rng, 5, 4))
        grad = oas_loss_grad_wrt_logits(logits, path)
        assert np.allclose(grad.sum(axis=1), 0.0, atol=1e-15)

    def test_finite_differences(self):
        rng = np.random.default_rng(19)
        for _ in range(25):
            rows, cols = int(rng.integers(2, 7)), int(rng.integers(2, 5))
            logits = rng.normal(0, 1.5, (rows, cols))
            _, path = oas_loss(random_stochastic(rng, rows, cols))

            def frozen_loss(z, _p=path):
                shifted = z - z.max(axis=1, keepdims=True)
                probs = np.exp(shifted)
                probs /= probs.sum(axis=1, keepdims=True)
                return -np.log(probs[np.arange(z.shape[0]), _p.as_array()]).mean()

            grad = oas_loss_grad_wrt_logits(logits, path)
            numeric = central_diff(frozen_loss, logits.copy())
            assert rel_err(grad, numeric) < 1e-5


class TestProgressLoss:
    def test_exact_prediction_zero(self):
        p = np.array([0.25, 0.625, 1.0])
        valid = np.ones(3, dtype=bool)
        assert progress_loss(p, p, valid) == 0.0
        assert np.array_equal(progress_loss_grad(p, p, valid), np.zeros(3))

    def test_swap_fixture(self):
        target = np.array([0.5, 1.0])
        pred = np.array([1.0, 0.5])
        valid = np.ones(2, dtype=bool)
        assert progress_loss(pred, target, valid) == pytest.approx(1.5)
        assert progress_loss_grad(pred, target, valid).tolist() == [2.0, -2.0]

    def test_matches_two_pass_recomputation(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            n = int(rng.integers(2, 12))
            target = np.sort(rng.random(n))
            pred = rng.random(n)
            valid = rng.random(n) < 0.6
            valid[int(rng.integers(0, n))] = True
            got = progress_loss(pred, target, valid)
            # Oracle: explicit loops over valid positions.
            expected = sum(abs(pred[i] - target[i]) for i in range(n) if valid[i])
            vidx = [i for i in range(n) if valid[i]]
            for a, b in zip(vidx[:-1], vidx[1:]):
                expected += max(pred[a] - pred[b], 0.0)
            assert got == pytest.approx(expected, abs=1e-12)

    def test_monotone_predictions_pay_no_difference_term(self):
        rng = np.random.default_rng(29)
        for _ in range(50):
            n = int(rng.integers(2, 10))
            target = rng.random(n)
            pred = np.sort(rng.random(n))
            valid = rng.random(n) < 0.7
            valid[int(rng.integers(0, n))] = True
            l1_only = np.abs(pred[valid] - target[valid]).sum()
            assert progress_loss(pred, target, valid) == pytest.approx(l1_only, abs=1e-12)

    def test_invalid_positions_do_not_couple(self):
        # A descent hidden at an invalid position costs nothing; the
        # difference term couples the surrounding valid pair instead.
        pred = np.array([0.2, 0.9, 0.3])
        target = np.array([0.2, 0.5, 0.3])
        valid = np.array([True, False, True])
        assert progress_loss(pred, target, valid) == pytest.approx(0.0)
        pred2 = np.array([0.4, 0.9, 0.3])
        target2 = np.array([0.4, 0.5, 0.3])
        assert progress_loss(pred2, target2, valid) == pytest.approx(0.1)

    def test_gradient_finite_differences_away_from_kinks(self):
        rng = np.random.default_rng(31)
        done = 0
        while done < 40:
            n = int(rng.integers(2, 10))
            target = np.sort(rng.random(n))
            pred = rng.random(n)
            valid = rng.random(n) < 0.7
            valid[int(rng.integers(0, n))] = True
            if np.any(np.abs(pred - target)[valid] < 1e-3):
                continue
            vidx = np.flatnonzero(valid)
            if np.any(np.abs(pred[vidx[:-1]] - pred[vidx[1:]]) < 1e-3):
                continue
            grad = progress_loss_grad(pred, target, valid)
            numeric = central_diff(lambda p: progress_loss(p, target, valid), pred.copy())
            assert rel_err(grad, numeric) < 1e-5
            done += 1

    def test_errors(self):
        with pytest.raises(OasAlignError, match="length"):
            progress_loss(np.ones(3), np.ones(2), np.ones(3, dtype=bool))
        with pytest.raises(OasAlignError, match="valid"):
            progress_loss(np.ones(3), np.ones(3), np.zeros(3, dtype=bool))
