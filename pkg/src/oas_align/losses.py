"""Training-side quantities: masks, the path log loss, and the progress loss.

The path log loss treats the searched path as a constant: the argmax is
non-differentiable, so gradients flow only through the log terms at path
cells, the standard treatment for hard monotonic alignment. Gradients here
are closed forms meant for an external trainer; there is no optimizer or
backprop engine in this module.
"""

from __future__ import annotations

import numpy as np

from .errors import CollapsedPathError, InvalidMatrixError, OasAlignError
from .store import SequenceLayout
from .viterbi import AlignmentPath, optimal_path

# Floor applied to path probabilities when clamping is explicitly enabled.
PROBABILITY_FLOOR = 1e-8


def alignment_mask(layout: SequenceLayout) -> np.ndarray:
    """Boolean attention mask restricting speech rows to the text block.

    Speech-query rows may attend exactly to the text columns; every other
    row keeps the usual causal lower-triangular pattern. Under a row
    softmax this makes each speech row a distribution over the text
    columns, so the alignment block's total mass is the number of speech
    rows and the score denominator becomes a constant.
    """
    n = layout.seq_len
    mask = np.tril(np.ones((n, n), dtype=bool))
    s0, s1 = layout.speech_span
    t0, t1 = layout.text_span
    mask[s0:s1, :] = False
    mask[s0:s1, t0:t1] = True
    return mask


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row softmax over allowed positions only; disallowed entries are 0."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(logits).all():
        raise InvalidMatrixError("logits contain non-finite entries")
    if logits.shape != mask.shape:
        raise InvalidMatrixError(
            f"logits shape {logits.shape} does not match mask shape {mask.shape}"
        )
    shifted = np.where(mask, logits, -np.inf)
    shifted = shifted - shifted.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=1, keepdims=True)


def _row_softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(logits).all():
        raise InvalidMatrixError("logits contain non-finite entries")
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=1, keepdims=True)


def _path_cells(attention: np.ndarray, path: AlignmentPath) -> np.ndarray:
    mat = np.asarray(attention, dtype=np.float64)
    if len(path) != mat.shape[0] or path.n_text != mat.shape[1]:
        raise InvalidMatrixError(
            f"path for shape ({len(path)}, {path.n_text}) does not match "
            f"matrix shape {mat.shape}"
        )
    return mat[np.arange(mat.shape[0]), path.as_array()]


def oas_loss(
    attention: np.ndarray, floor: float | None = None
) -> tuple[float, AlignmentPath]:
    """Mean negative log probability along the freshly searched best path.

    The path is recomputed on every call (one search per training step) and
    differentiation treats it as fixed. A zero probability on the path
    raises :class:`CollapsedPathError` with its location rather than being
    clamped; pass ``floor=PROBABILITY_FLOOR`` to opt in to clamping for
    trainer integration.
    """
    mat = np.asarray(attention, dtype=np.float64)
    path = optimal_path(mat)
    cells = _path_cells(mat, path)
    if floor is not None:
        cells = np.maximum(cells, floor)
    elif (cells <= 0.0).any():
        row = int(np.argmax(cells <= 0.0))
        raise CollapsedPathError(
            f"zero probability on the alignment path at row {row}, "
            f"column {path.indices[row]}",
            row=row,
            col=path.indices[row],
        )
    loss = float(-np.log(cells).mean())
    return loss, path


def oas_loss_grad_wrt_matrix(
    attention: np.ndarray, path: AlignmentPath, floor: float | None = None
) -> np.ndarray:
    """Gradient of the path log loss in the attention probabilities.

    Nonzero only at path cells: -1 / (n_speech * probability).
    """
    mat = np.asarray(attention, dtype=np.float64)
    cells = _path_cells(mat, path)
    if floor is not None:
        cells = np.maximum(cells, floor)
    elif (cells <= 0.0).any():
        row = int(np.argmax(cells <= 0.0))
        raise CollapsedPathError(
            f"zero probability on the alignment path at row {row}, "
            f"column {path.indices[row]}",
            row=row,
            col=path.indices[row],
        )
    grad = np.zeros_like(mat)
    n_speech = mat.shape[0]
    grad[np.arange(n_speech), path.as_array()] = -1.0 / (n_speech * cells)
    return grad


def oas_loss_grad_wrt_logits(logits: np.ndarray, path: AlignmentPath) -> np.ndarray:
    """Gradient of the path log loss in row-softmax logits.

    Row i gets (softmax(z_i) - onehot(path_i)) / n_speech, so every row of
    the gradient sums to zero.
    """
    probs = _row_softmax(logits)
    if len(path) != probs.shape[0] or path.n_text != probs.shape[1]:
        raise InvalidMatrixError(
            f"path for shape ({len(path)}, {path.n_text}) does not match "
            f"logits shape {probs.shape}"
        )
    n_speech = probs.shape[0]
    grad = probs.copy()
    grad[np.arange(n_speech), path.as_array()] -= 1.0
    return grad / n_speech


def _check_progress_args(
    predicted: np.ndarray, target: np.ndarray, valid: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    if not (predicted.shape == target.shape == valid.shape) or predicted.ndim != 1:
        raise OasAlignError(
            f"length mismatch: predicted {predicted.shape}, target "
            f"{target.shape}, valid {valid.shape}"
        )
    if not valid.any():
        raise OasAlignError("no valid positions to supervise")
    return predicted, target, valid


def progress_loss(
    predicted: np.ndarray, target: np.ndarray, valid: np.ndarray
) -> float:
    """L1 error plus a first-order monotonicity penalty on valid positions.

    Invalid positions contribute to neither term; the difference term
    couples consecutive *valid* positions, charging max(earlier - later, 0)
    so any non-decreasing prediction pays nothing.
    """
    predicted, target, valid = _check_progress_args(predicted, target, valid)
    pv = predicted[valid]
    tv = target[valid]
    l1 = float(np.abs(pv - tv).sum())
    steps = pv[:-1] - pv[1:]
    mono = float(np.maximum(steps, 0.0).sum())
    return l1 + mono


def progress_loss_grad(
    predicted: np.ndarray, target: np.ndarray, valid: np.ndarray
) -> np.ndarray:
    """Subgradient of :func:`progress_loss`, zero at invalid positions.

    Uses sign(0) = 0 for the L1 term and charges the monotonicity term only
    on strict descents, matching the max(., 0) kink convention.
    """
    predicted, target, valid = _check_progress_args(predicted, target, valid)
    grad = np.zeros_like(predicted)
    idx = np.flatnonzero(valid)
    pv = predicted[idx]
    grad[idx] = np.sign(pv - target[idx])
    descending = pv[:-1] > pv[1:]
    grad[idx[:-1][descending]] += 1.0
    grad[idx[1:][descending]] -= 1.0
    return grad
