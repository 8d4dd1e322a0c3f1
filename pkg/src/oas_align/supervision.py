"""Supervision targets built from alignment-path durations.

Given text tokens and per-token durations, this module emits the training
targets a student model consumes alongside its speech tokens: the fully
repeated token sequence, a sparse variant where each token is revealed at
one randomly chosen slot of its duration block (interior slots preferred,
so ambiguous block boundaries are never supervised), cumulative progress
values, and the progress targets placed at the revealed slots.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from .errors import OasAlignError
from .viterbi import AlignmentPath, optimal_path, path_to_durations

logger = logging.getLogger(__name__)

# Serialized stand-in for a masked slot; never a real vocabulary id.
MASK_ID = -1


@dataclass(frozen=True)
class SparseTarget:
    """One revealed token per duration block, all other slots masked.

    ``slot_tokens`` uses :data:`MASK_ID` at masked slots and ``valid`` marks
    the revealed ones; ``durations`` records the block lengths the slots
    were carved from (every block here is non-empty).
    """

    slot_tokens: tuple[int, ...]
    valid: tuple[bool, ...]
    durations: tuple[int, ...]

    def __post_init__(self):
        if len(self.slot_tokens) != len(self.valid):
            raise OasAlignError("slot/valid length mismatch")
        if sum(self.durations) != len(self.slot_tokens):
            raise OasAlignError("durations do not tile the slot sequence")
        offset = 0
        for block, length in enumerate(self.durations):
            if length < 1:
                raise OasAlignError(f"block {block} is empty")
            marks = sum(self.valid[offset : offset + length])
            if marks != 1:
                raise OasAlignError(f"block {block} has {marks} revealed slots, wants 1")
            offset += length

    @property
    def n_blocks(self) -> int:
        return len(self.durations)

    def marked_offsets(self) -> list[int]:
        """Block-local offset of the revealed slot, one per block."""
        offsets = []
        start = 0
        for length in self.durations:
            block = self.valid[start : start + length]
            offsets.append(block.index(True))
            start += length
        return offsets


@dataclass
class SupervisionBundle:
    """All targets for one utterance, with consistent lengths.

    ``durations`` covers every input token (zeros allowed for tokens the
    path skipped); ``o_w``/``o_s``/``o_p`` all have one slot per speech
    token, and ``o_p`` carries a value exactly where ``o_s`` is revealed.
    """

    durations: tuple[int, ...]
    o_w: tuple[int, ...]
    o_s: SparseTarget
    o_p: tuple[float | None, ...]
    progress: tuple[float, ...]

    def to_record(self) -> dict:
        return {
            "durations": list(self.durations),
            "o_w": list(self.o_w),
            "o_s": list(self.o_s.slot_tokens),
            "o_p": [v if v is None else float(v) for v in self.o_p],
        }


def full_repeat_targets(tokens: np.ndarray, durations: np.ndarray) -> np.ndarray:
    """Repeat token j durations[j] times, in order; zero durations drop out."""
    tokens = np.asarray(tokens, dtype=np.int64)
    durations = np.asarray(durations, dtype=np.int64)
    if tokens.shape != durations.shape or tokens.ndim != 1 or tokens.size == 0:
        raise OasAlignError(
            f"tokens {tokens.shape} and durations {durations.shape} must be "
            "equal-length non-empty vectors"
        )
    if (durations < 0).any():
        raise OasAlignError("durations must be non-negative")
    if durations.sum() < 1:
        raise OasAlignError("total duration must be >= 1")
    return np.repeat(tokens, durations)


def _marked_offset(length: int, rng: np.random.Generator) -> int:
    # Interior slots {1 .. length-2} when they exist; a 2-slot block has
    # only boundaries, so both stay eligible; a 1-slot block is forced.
    if length >= 3:
        return int(rng.integers(1, length - 1))
    if length == 2:
        return int(rng.integers(0, 2))
    return 0


def sparse_repeat_targets(
    tokens: np.ndarray, durations: np.ndarray, rng_seed: int
) -> SparseTarget:
    """Reveal each token once inside its duration block, boundaries avoided.

    The revealed offset is uniform over the block's interior when the block
    has one (length >= 3), over both slots of a 2-slot block, and forced
    for a singleton. Deterministic for a given seed. Zero-duration tokens
    cannot be revealed anywhere and are an error here; see
    :func:`build_supervision` for the skip-with-warning path.
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    durations = np.asarray(durations, dtype=np.int64)
    if tokens.size == 0:
        raise OasAlignError("empty token sequence")
    if tokens.shape != durations.shape or tokens.ndim != 1:
        raise OasAlignError(
            f"tokens {tokens.shape} and durations {durations.shape} must be "
            "equal-length vectors"
        )
    if (durations < 1).any():
        bad = int(np.argmax(durations < 1))
        raise OasAlignError(f"token {bad} has zero duration and cannot be revealed")
    rng = np.random.default_rng(rng_seed)
    slots: list[int] = []
    valid: list[bool] = []
    for token, length in zip(tokens.tolist(), durations.tolist()):
        offset = _marked_offset(length, rng)
        for slot in range(length):
            slots.append(token if slot == offset else MASK_ID)
            valid.append(slot == offset)
    return SparseTarget(
        slot_tokens=tuple(slots), valid=tuple(valid), durations=tuple(durations.tolist())
    )


def progress_values(durations: np.ndarray) -> np.ndarray:
    """Cumulative duration fraction after each token, ending at exactly 1."""
    durations = np.asarray(durations, dtype=np.int64)
    if durations.ndim != 1 or durations.size == 0:
        raise OasAlignError(f"durations must be a non-empty vector, got {durations.shape}")
    if (durations < 0).any():
        raise OasAlignError("durations must be non-negative")
    total = int(durations.sum())
    if total < 1:
        raise OasAlignError("all-zero durations: progress is undefined")
    return np.cumsum(durations) / total


def sparse_progress_targets(
    progress: np.ndarray, sparse: SparseTarget
) -> tuple[float | None, ...]:
    """Place block j's progress value at its revealed slot, None elsewhere."""
    progress = np.asarray(progress, dtype=np.float64)
    if progress.ndim != 1 or progress.size != sparse.n_blocks:
        raise OasAlignError(
            f"{progress.size} progress values for {sparse.n_blocks} blocks"
        )
    out: list[float | None] = []
    start = 0
    for block, length in enumerate(sparse.durations):
        for slot in range(length):
            out.append(float(progress[block]) if sparse.valid[start + slot] else None)
        start += length
    return tuple(out)


def derive_seed(global_seed: int, utterance_id: str) -> int:
    """Stable per-utterance seed, independent of process or hash randomization."""
    digest = hashlib.sha256(f"{global_seed}:{utterance_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def build_supervision(
    tokens: np.ndarray,
    alignment: np.ndarray | AlignmentPath,
    rng_seed: int,
) -> SupervisionBundle:
    """Compose path -> durations -> targets into one bundle.

    ``alignment`` is either the teacher head's alignment matrix (the best
    path is searched here) or an already-extracted path. Tokens the path
    never visits get duration 0: they are logged, contribute no slots, and
    keep their progress entry; only positive-duration tokens are revealed.
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 1 or tokens.size == 0:
        raise OasAlignError("token sequence must be a non-empty vector")
    path = alignment if isinstance(alignment, AlignmentPath) else optimal_path(alignment)
    if path.n_text != tokens.size:
        raise OasAlignError(
            f"path indexes {path.n_text} text columns but {tokens.size} tokens given"
        )
    durations = path_to_durations(path)
    positive = durations > 0
    if not positive.all():
        skipped = np.flatnonzero(~positive).tolist()
        logger.warning(
            "tokens %s have zero duration; excluded from sparse marking", skipped
        )
    o_w = full_repeat_targets(tokens, durations)
    progress = progress_values(durations)
    o_s = sparse_repeat_targets(tokens[positive], durations[positive], rng_seed)
    o_p = sparse_progress_targets(progress[positive], o_s)
    return SupervisionBundle(
        durations=tuple(durations.tolist()),
        o_w=tuple(o_w.tolist()),
        o_s=o_s,
        o_p=o_p,
        progress=tuple(float(v) for v in progress),
    )
