"""Synthetic attention dumps with known ground-truth alignment paths.

Every matrix is a convex mixture of a one-hot planted path and row-uniform
noise, so rows are exactly stochastic and the score of a planted head is
analytically predictable. A generated corpus plants the path in a chosen
set of heads, fills the rest with near-uniform noise, and pairs each
utterance with a pseudo error rate that rises linearly with the noise
level — a desk-scale stand-in for a real test set, clearly labeled as such
in its metadata.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import OasAlignError
from .store import AttentionDump, SequenceLayout, save_dump
from .supervision import derive_seed
from .util import parallel_map
from .viterbi import AlignmentPath

PATH_STYLES = ("diagonal", "random-monotone")

# Relative amplitude of the row noise applied to non-planted heads.
NOISE_HEAD_AMPLITUDE = 0.5


@dataclass(frozen=True)
class SynthSpec:
    """Parameters for one synthetic utterance or a corpus template."""

    n_speech: int
    n_text: int
    path_style: str = "random-monotone"
    noise: float = 0.0
    n_layers: int = 1
    n_heads: int = 1
    planted_heads: tuple[tuple[int, int], ...] = ((0, 0),)
    seed: int = 0
    sliced: bool = True

    def __post_init__(self):
        if not 1 <= self.n_text <= self.n_speech:
            raise OasAlignError(
                f"need n_speech >= n_text >= 1 for full-coverage paths, "
                f"got ({self.n_speech}, {self.n_text})"
            )
        if self.path_style not in PATH_STYLES:
            raise OasAlignError(f"unknown path style {self.path_style!r}")
        if not 0.0 <= self.noise <= 1.0:
            raise OasAlignError(f"noise level {self.noise} outside [0, 1]")
        if self.n_layers < 1 or self.n_heads < 1:
            raise OasAlignError("n_layers and n_heads must be >= 1")
        for layer, head in self.planted_heads:
            if not (0 <= layer < self.n_layers and 0 <= head < self.n_heads):
                raise OasAlignError(f"planted head ({layer}, {head}) out of range")

    def to_json_dict(self) -> dict:
        return {
            "n_speech": self.n_speech,
            "n_text": self.n_text,
            "path_style": self.path_style,
            "noise": self.noise,
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "planted_heads": [list(pair) for pair in self.planted_heads],
            "seed": self.seed,
            "sliced": self.sliced,
        }


def _draw_path(spec: SynthSpec, rng: np.random.Generator) -> AlignmentPath:
    """Monotone path covering every text column, in the requested style."""
    n_s, n_t = spec.n_speech, spec.n_text
    if spec.path_style == "diagonal":
        indices = tuple(i * n_t // n_s for i in range(n_s))
    else:
        gaps = rng.choice(n_s - 1, size=n_t - 1, replace=False) if n_t > 1 else []
        advance = np.zeros(n_s, dtype=np.int64)
        advance[np.asarray(gaps, dtype=np.int64) + 1] = 1
        indices = tuple(np.cumsum(advance).tolist())
    return AlignmentPath(indices=indices, n_text=n_t)


def path_mixture_matrix(
    path: AlignmentPath, n_text: int, noise: float
) -> np.ndarray:
    """(1 - noise) * one-hot(path) + noise * uniform; rows sum to 1."""
    n_speech = len(path)
    mat = np.full((n_speech, n_text), noise / n_text, dtype=np.float64)
    mat[np.arange(n_speech), path.as_array()] += 1.0 - noise
    return mat


def synth_alignment_matrix(spec: SynthSpec) -> tuple[np.ndarray, AlignmentPath]:
    """One alignment block and the path planted in it."""
    rng = np.random.default_rng(spec.seed)
    path = _draw_path(spec, rng)
    return path_mixture_matrix(path, spec.n_text, spec.noise), path


def _noise_head_matrix(
    n_speech: int, n_text: int, rng: np.random.Generator
) -> np.ndarray:
    rows = 1.0 + NOISE_HEAD_AMPLITUDE * rng.random((n_speech, n_text))
    return rows / rows.sum(axis=1, keepdims=True)


def _layout_for(spec: SynthSpec) -> SequenceLayout:
    return SequenceLayout(
        seq_len=spec.n_text + spec.n_speech,
        text_span=(0, spec.n_text),
        speech_span=(spec.n_text, spec.n_text + spec.n_speech),
    )


def _full_matrix_from_block(block: np.ndarray, layout: SequenceLayout) -> np.ndarray:
    """Embed an alignment block into a full causal row-stochastic matrix."""
    n = layout.seq_len
    full = np.zeros((n, n), dtype=np.float64)
    t0, t1 = layout.text_span
    s0, s1 = layout.speech_span
    for row in range(n):
        if s0 <= row < s1:
            full[row, t0:t1] = block[row - s0]
        else:
            full[row, : row + 1] = 1.0 / (row + 1)
    return full


def synth_dump(
    spec: SynthSpec, utterance_id: str, noise: float | None = None
) -> tuple[AttentionDump, AlignmentPath]:
    """One utterance's dump: planted heads share the path, the rest is noise."""
    rng = np.random.default_rng(derive_seed(spec.seed, utterance_id))
    level = spec.noise if noise is None else noise
    path = _draw_path(spec, rng)
    planted = path_mixture_matrix(path, spec.n_text, level)
    layout = _layout_for(spec)
    planted_set = set(spec.planted_heads)
    matrices: dict[tuple[int, int], np.ndarray] = {}
    for layer in range(spec.n_layers):
        for head in range(spec.n_heads):
            block = (
                planted
                if (layer, head) in planted_set
                else _noise_head_matrix(spec.n_speech, spec.n_text, rng)
            )
            matrices[(layer, head)] = (
                block if spec.sliced else _full_matrix_from_block(block, layout)
            )
    dump = AttentionDump(
        utterance_id=utterance_id,
        n_layers=spec.n_layers,
        n_heads=spec.n_heads,
        layout=layout,
        matrices=matrices,
        dtype="f32",
        sliced=spec.sliced,
    )
    return dump, path


def default_wer_model(noise: float, rng: np.random.Generator) -> float:
    """Pseudo error rate: 0.02 + 0.5 * noise + N(0, 0.02), clamped at 0."""
    return max(0.0, 0.02 + 0.5 * noise + rng.normal(0.0, 0.02))


@dataclass
class SynthUtterance:
    utterance_id: str
    noise: float
    wer: float
    path: AlignmentPath


def _build_one(args: tuple[SynthSpec, str, str]) -> SynthUtterance:
    template, utt_id, out_dir = args
    rng = np.random.default_rng(derive_seed(template.seed, utt_id))
    noise = float(rng.uniform())
    dump, path = synth_dump(template, utt_id, noise=noise)
    wer = default_wer_model(noise, np.random.default_rng(derive_seed(template.seed, utt_id + "/wer")))
    save_dump(dump, Path(out_dir) / utt_id)
    return SynthUtterance(utterance_id=utt_id, noise=noise, wer=wer, path=path)


def synth_corpus(
    template: SynthSpec,
    n_utts: int,
    out_dir: str | Path,
    jobs: int = 1,
    wer_model: Callable[[float, np.random.Generator], float] | None = None,
) -> list[SynthUtterance]:
    """Write ``n_utts`` dumps plus ``wer.jsonl`` and ``synth_spec.json``.

    Each utterance draws its own noise level uniformly from [0, 1] with a
    seed derived from (template seed, utterance id), so output is identical
    for any ``jobs`` setting. Note the per-utterance noise deliberately
    overrides the template's fixed level.
    """
    if n_utts < 0:
        raise OasAlignError("n_utts must be >= 0")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    utt_ids = [f"synth-{i:05d}" for i in range(n_utts)]
    if wer_model is None:
        results = parallel_map(
            _build_one, [(template, utt_id, str(out)) for utt_id in utt_ids], jobs=jobs
        )
    else:
        # Custom models are not required to be picklable; run serially.
        results = []
        for utt_id in utt_ids:
            rng = np.random.default_rng(derive_seed(template.seed, utt_id))
            noise = float(rng.uniform())
            dump, path = synth_dump(template, utt_id, noise=noise)
            wer = wer_model(noise, np.random.default_rng(derive_seed(template.seed, utt_id + "/wer")))
            save_dump(dump, out / utt_id)
            results.append(
                SynthUtterance(utterance_id=utt_id, noise=noise, wer=wer, path=path)
            )
    wer_lines = [
        json.dumps({"utterance_id": res.utterance_id, "wer": res.wer})
        for res in results
    ]
    (out / "wer.jsonl").write_text(
        "\n".join(wer_lines) + ("\n" if wer_lines else ""), encoding="utf-8"
    )
    meta = template.to_json_dict()
    meta.update(
        {
            "n_utts": n_utts,
            "wer_model": "pseudo: 0.02 + 0.5*noise + gauss(0, 0.02), clamped >= 0"
            if wer_model is None
            else "custom",
            "note": "synthetic corpus; wer values are a labeled stand-in, not ASR output",
        }
    )
    (out / "synth_spec.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return results


def heads_recovery_template(seed: int = 0) -> SynthSpec:
    """24x14 template with half the heads of layers 8 and 9 planted."""
    planted = tuple((layer, head) for layer in (8, 9) for head in range(7))
    return SynthSpec(
        n_speech=32,
        n_text=12,
        path_style="random-monotone",
        n_layers=24,
        n_heads=14,
        planted_heads=planted,
        seed=seed,
    )


def correlation_template(seed: int = 0) -> SynthSpec:
    """Small-model template used for the default correlation corpus."""
    return SynthSpec(
        n_speech=24,
        n_text=12,
        path_style="random-monotone",
        n_layers=6,
        n_heads=4,
        planted_heads=((2, 0), (2, 1)),
        seed=seed,
    )
