"""Optimal alignment score (OAS): metric, aggregates, and head designation.

The score of one alignment block is the fraction of its total attention
mass that lies on the best monotone path, so it sits in (0, 1] and hits 1
exactly when all mass follows one path. Per-head scores averaged over a
corpus feed layer statistics and the selection of alignment heads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

from .errors import DegenerateMatrixError, InvalidMatrixError, OasAlignError
from .store import AttentionDump
from .viterbi import best_path_scores, optimal_path, path_score

DEFAULT_LAYER_TOP_K = 7
DEFAULT_FINAL_TOP_K = 5
DEFAULT_FIXED_LAYERS = (8, 9)


def oas(attention: np.ndarray) -> float:
    """Score one alignment block: best-path mass over total mass."""
    mat = np.asarray(attention, dtype=np.float64)
    if mat.ndim != 2 or mat.size == 0:
        raise InvalidMatrixError(f"expected a non-empty 2-D matrix, got {mat.shape}")
    if not np.isfinite(mat).all():
        raise InvalidMatrixError("matrix contains non-finite entries")
    if (mat < 0).any():
        raise InvalidMatrixError("matrix contains negative entries")
    total = float(mat.sum())
    if total <= 0.0:
        raise DegenerateMatrixError("all-zero alignment block: OAS is undefined")
    return path_score(mat, optimal_path(mat)) / total


def _oas_batch(stack: np.ndarray, where: str) -> np.ndarray:
    """OAS for each matrix in a (batch, rows, cols) stack."""
    totals = stack.sum(axis=(1, 2))
    if (totals <= 0.0).any():
        idx = int(np.argmin(totals))
        raise DegenerateMatrixError(f"all-zero alignment block ({where}, batch index {idx})")
    return best_path_scores(stack) / totals


def per_head_oas_single(dump: AttentionDump) -> np.ndarray:
    """Per-(layer, head) OAS table for a single utterance."""
    blocks = np.stack(
        [
            np.asarray(dump.alignment_matrix(layer, head), dtype=np.float64)
            for layer in range(dump.n_layers)
            for head in range(dump.n_heads)
        ]
    )
    scores = _oas_batch(blocks, dump.utterance_id)
    return scores.reshape(dump.n_layers, dump.n_heads)


def per_head_oas(dumps: Sequence[AttentionDump]) -> np.ndarray:
    """Mean per-(layer, head) OAS over a corpus of dumps.

    All dumps must agree on (n_layers, n_heads). The mean is unweighted
    over utterances and reduced in input order, so the result is
    deterministic for a given corpus ordering.
    """
    dumps = list(dumps)
    if not dumps:
        raise OasAlignError("empty dump list")
    n_layers, n_heads = dumps[0].n_layers, dumps[0].n_heads
    for dump in dumps:
        if (dump.n_layers, dump.n_heads) != (n_layers, n_heads):
            raise OasAlignError(
                f"dump {dump.utterance_id!r} has model shape "
                f"({dump.n_layers}, {dump.n_heads}), expected ({n_layers}, {n_heads})"
            )
    tables = np.stack([per_head_oas_single(dump) for dump in dumps])
    return tables.mean(axis=0)


def layer_topk_mean(table: np.ndarray, k: int = DEFAULT_LAYER_TOP_K) -> np.ndarray:
    """Mean of the k largest head scores in each layer (all heads if k >= width)."""
    table = np.asarray(table, dtype=np.float64)
    if table.ndim != 2 or table.size == 0:
        raise OasAlignError(f"expected a non-empty layers x heads table, got {table.shape}")
    if k < 1:
        raise OasAlignError("k must be >= 1")
    k = min(k, table.shape[1])
    ordered = np.sort(table, axis=1)[:, ::-1]
    return ordered[:, :k].mean(axis=1)


def final_oas(table: np.ndarray, k: int = DEFAULT_FINAL_TOP_K) -> float:
    """Mean of the k largest scores across the whole table."""
    table = np.asarray(table, dtype=np.float64)
    if table.size == 0:
        raise OasAlignError("empty table")
    if k < 1:
        raise OasAlignError("k must be >= 1")
    flat = np.sort(table.ravel())[::-1]
    k = min(k, flat.size)
    return float(flat[:k].mean())


@dataclass(frozen=True)
class HeadSet:
    """Designated alignment heads plus the policy that chose them."""

    heads: tuple[tuple[int, int], ...]
    policy: str

    def __post_init__(self):
        if len(set(self.heads)) != len(self.heads):
            raise OasAlignError("duplicate (layer, head) pairs in head set")

    def as_list(self) -> list[list[int]]:
        return [[layer, head] for layer, head in self.heads]


def _rank_heads(table: np.ndarray, pairs: Iterable[tuple[int, int]]) -> list[tuple[int, int]]:
    # Sort by descending score; ties resolve to (layer, head) order.
    return sorted(pairs, key=lambda lh: (-table[lh[0], lh[1]], lh[0], lh[1]))


def select_alignment_heads(
    table: np.ndarray,
    policy: Literal["fixed", "top_oas"] = "fixed",
    layers: Sequence[int] = DEFAULT_FIXED_LAYERS,
    per_layer_count: int | None = None,
    count: int | None = None,
) -> HeadSet:
    """Designate alignment heads from a per-head score table.

    ``fixed`` takes the ``per_layer_count`` best heads inside each named
    layer (default: half the heads of layers 8 and 9). ``top_oas`` takes
    the ``count`` globally best heads. Both are deterministic; score ties
    break by (layer, head) order.
    """
    table = np.asarray(table, dtype=np.float64)
    if table.ndim != 2 or table.size == 0:
        raise OasAlignError(f"expected a non-empty layers x heads table, got {table.shape}")
    n_layers, n_heads = table.shape
    if policy == "fixed":
        if per_layer_count is None:
            per_layer_count = n_heads // 2
        if not 1 <= per_layer_count <= n_heads:
            raise OasAlignError(
                f"per-layer count {per_layer_count} outside [1, {n_heads}]"
            )
        chosen: list[tuple[int, int]] = []
        for layer in sorted(layers):
            if not 0 <= layer < n_layers:
                raise OasAlignError(f"layer {layer} outside [0, {n_layers})")
            pairs = [(layer, head) for head in range(n_heads)]
            chosen.extend(_rank_heads(table, pairs)[:per_layer_count])
        tag = f"fixed(layers={sorted(layers)}, per_layer={per_layer_count})"
        return HeadSet(heads=tuple(sorted(chosen)), policy=tag)
    if policy == "top_oas":
        if count is None:
            raise OasAlignError("top_oas policy requires a count")
        if not 1 <= count <= table.size:
            raise OasAlignError(f"count {count} outside [1, {table.size}]")
        pairs = [(layer, head) for layer in range(n_layers) for head in range(n_heads)]
        chosen = _rank_heads(table, pairs)[:count]
        return HeadSet(heads=tuple(sorted(chosen)), policy=f"top_oas(count={count})")
    raise OasAlignError(f"unknown policy {policy!r}")


@dataclass
class OasReport:
    """Corpus OAS summary mirroring the ``oas_report.json`` schema."""

    per_head: np.ndarray
    k_layer: int
    k_final: int
    n_utts: int
    per_utterance: dict[str, float] = field(default_factory=dict)

    @property
    def per_layer_topk(self) -> np.ndarray:
        return layer_topk_mean(self.per_head, self.k_layer)

    @property
    def final(self) -> float:
        return final_oas(self.per_head, self.k_final)

    def to_json_dict(self) -> dict:
        out = {
            "per_head": [[float(v) for v in row] for row in self.per_head],
            "per_layer_top7": [float(v) for v in self.per_layer_topk],
            "final_oas": float(self.final),
            "k_layer": self.k_layer,
            "k_final": self.k_final,
            "n_utts": self.n_utts,
        }
        if self.per_utterance:
            out["per_utterance_final_oas"] = {
                utt: float(v) for utt, v in sorted(self.per_utterance.items())
            }
            out["per_utterance_final_oas_mean"] = float(
                np.mean(list(dict(sorted(self.per_utterance.items())).values()))
            )
        return out


def build_oas_report(
    dumps: Sequence[AttentionDump],
    k_layer: int = DEFAULT_LAYER_TOP_K,
    k_final: int = DEFAULT_FINAL_TOP_K,
    per_utterance: bool = False,
) -> OasReport:
    """Aggregate a corpus into an :class:`OasReport`.

    The headline scores come from the corpus-averaged table; with
    ``per_utterance`` the report additionally carries each utterance's own
    top-k summary, since both aggregations are defensible readings.
    """
    dumps = list(dumps)
    table = per_head_oas(dumps)
    report = OasReport(per_head=table, k_layer=k_layer, k_final=k_final, n_utts=len(dumps))
    if per_utterance:
        for dump in dumps:
            report.per_utterance[dump.utterance_id] = final_oas(
                per_head_oas_single(dump), k_final
            )
    return report
