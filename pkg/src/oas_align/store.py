"""Persistence and slicing of attention dumps.

A dump is a directory holding ``manifest.json`` plus one raw binary file per
(layer, head):

* ``manifest.json`` — ``version`` (=1), ``utterance_id``, ``n_layers``,
  ``n_heads``, ``seq_len``, ``text_span`` ([start, end)), ``speech_span``
  ([start, end)), ``dtype`` ("f32" | "f64"), ``sliced`` (bool). Unknown keys
  are ignored on read.
* ``attn_L{layer}_H{head}.bin`` — little-endian IEEE-754 floats, row-major.
  Full matrices are ``seq_len x seq_len``; sliced ones are the speech-by-text
  alignment block only.

All indices are 0-based and spans are half-open. Round-trips are bit-exact:
``load_dump(save_dump(d))`` reproduces every float.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DumpFormatError, InvalidMatrixError, LayoutError

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}

# Slices of a row-stochastic attention row may overshoot 1 by float32 rounding.
ROW_SUM_SLACK = 1e-4


@dataclass(frozen=True)
class SequenceLayout:
    """Position layout of one model input sequence.

    ``text_span`` covers the target text tokens and ``speech_span`` the
    output speech tokens; text precedes speech and the spans are disjoint
    and non-empty. Positions outside both spans (prompts, separators) are
    never interpreted by this toolkit.
    """

    seq_len: int
    text_span: tuple[int, int]
    speech_span: tuple[int, int]

    def __post_init__(self):
        t0, t1 = self.text_span
        s0, s1 = self.speech_span
        if not (0 <= t0 < t1 <= s0 < s1 <= self.seq_len):
            raise LayoutError(
                f"invalid layout: text_span={self.text_span}, "
                f"speech_span={self.speech_span}, seq_len={self.seq_len}"
            )

    @property
    def n_text(self) -> int:
        return self.text_span[1] - self.text_span[0]

    @property
    def n_speech(self) -> int:
        return self.speech_span[1] - self.speech_span[0]


@dataclass
class AttentionDump:
    """Per-(layer, head) attention matrices for one utterance.

    ``matrices`` maps ``(layer, head)`` to a non-negative float matrix:
    ``seq_len x seq_len`` when ``sliced`` is false, otherwise the pre-sliced
    speech-by-text alignment block.
    """

    utterance_id: str
    n_layers: int
    n_heads: int
    layout: SequenceLayout
    matrices: dict[tuple[int, int], np.ndarray]
    dtype: str = "f32"
    sliced: bool = False
    extra: dict = field(default_factory=dict)

    def expected_shape(self) -> tuple[int, int]:
        if self.sliced:
            return (self.layout.n_speech, self.layout.n_text)
        return (self.layout.seq_len, self.layout.seq_len)

    def validate(self) -> None:
        if self.dtype not in _DTYPES:
            raise DumpFormatError(f"unknown dtype tag {self.dtype!r}")
        if self.n_layers < 1 or self.n_heads < 1:
            raise DumpFormatError("n_layers and n_heads must be >= 1")
        shape = self.expected_shape()
        for (layer, head), mat in self.matrices.items():
            if not (0 <= layer < self.n_layers and 0 <= head < self.n_heads):
                raise DumpFormatError(
                    f"matrix key ({layer}, {head}) outside "
                    f"[0, {self.n_layers}) x [0, {self.n_heads})"
                )
            if mat.shape != shape:
                raise DumpFormatError(
                    f"matrix ({layer}, {head}) has shape {mat.shape}, "
                    f"manifest requires {shape}"
                )
            if not np.isfinite(mat).all():
                raise InvalidMatrixError(
                    f"matrix ({layer}, {head}) contains non-finite entries"
                )
            if (mat < 0).any():
                raise InvalidMatrixError(
                    f"matrix ({layer}, {head}) contains negative entries"
                )

    def alignment_matrix(self, layer: int, head: int) -> np.ndarray:
        """Alignment block for one head, slicing on the fly if needed."""
        mat = self.matrices[(layer, head)]
        if self.sliced:
            return mat
        return extract_alignment_submatrix(mat, self.layout)


def matrix_filename(layer: int, head: int) -> str:
    return f"attn_L{layer}_H{head}.bin"


def save_dump(dump: AttentionDump, path: str | Path) -> None:
    """Write ``dump`` to directory ``path`` (created if missing).

    Validates every invariant before touching the filesystem, and produces
    byte-identical output for identical input.
    """
    dump.validate()
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": MANIFEST_VERSION,
        "utterance_id": dump.utterance_id,
        "n_layers": dump.n_layers,
        "n_heads": dump.n_heads,
        "seq_len": dump.layout.seq_len,
        "text_span": list(dump.layout.text_span),
        "speech_span": list(dump.layout.speech_span),
        "dtype": dump.dtype,
        "sliced": dump.sliced,
    }
    manifest.update(dump.extra)
    (out / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    np_dtype = _DTYPES[dump.dtype]
    for (layer, head) in sorted(dump.matrices):
        mat = np.ascontiguousarray(dump.matrices[(layer, head)], dtype=np_dtype)
        mat.tofile(out / matrix_filename(layer, head))


def _read_manifest(path: Path) -> dict:
    mpath = path / MANIFEST_NAME
    if not mpath.is_file():
        raise DumpFormatError(f"missing manifest: {mpath}")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DumpFormatError(f"corrupt manifest {mpath}: {exc}") from exc
    required = (
        "version",
        "utterance_id",
        "n_layers",
        "n_heads",
        "seq_len",
        "text_span",
        "speech_span",
        "dtype",
        "sliced",
    )
    missing = [key for key in required if key not in manifest]
    if missing:
        raise DumpFormatError(f"manifest {mpath} missing keys: {missing}")
    if manifest["version"] != MANIFEST_VERSION:
        raise DumpFormatError(f"unsupported manifest version {manifest['version']}")
    return manifest


def load_dump(path: str | Path) -> AttentionDump:
    """Load a dump directory, verifying manifest/payload consistency.

    Raises :class:`DumpFormatError` on a missing or corrupt manifest, a
    payload whose byte length disagrees with the declared shape, or an
    unknown dtype tag, and :class:`InvalidMatrixError` on non-finite or
    negative entries. Nothing is silently truncated.
    """
    root = Path(path)
    manifest = _read_manifest(root)
    dtype = manifest["dtype"]
    if dtype not in _DTYPES:
        raise DumpFormatError(f"unknown dtype tag {dtype!r} in {root}")
    layout = SequenceLayout(
        seq_len=int(manifest["seq_len"]),
        text_span=tuple(manifest["text_span"]),
        speech_span=tuple(manifest["speech_span"]),
    )
    dump = AttentionDump(
        utterance_id=str(manifest["utterance_id"]),
        n_layers=int(manifest["n_layers"]),
        n_heads=int(manifest["n_heads"]),
        layout=layout,
        matrices={},
        dtype=dtype,
        sliced=bool(manifest["sliced"]),
    )
    shape = dump.expected_shape()
    np_dtype = _DTYPES[dtype]
    expected_bytes = shape[0] * shape[1] * np_dtype.itemsize
    for layer in range(dump.n_layers):
        for head in range(dump.n_heads):
            fpath = root / matrix_filename(layer, head)
            if not fpath.is_file():
                raise DumpFormatError(f"missing matrix file {fpath}")
            actual = fpath.stat().st_size
            if actual != expected_bytes:
                raise DumpFormatError(
                    f"{fpath}: payload is {actual} bytes, expected "
                    f"{expected_bytes} for shape {shape} dtype {dtype}"
                )
            mat = np.fromfile(fpath, dtype=np_dtype).reshape(shape)
            dump.matrices[(layer, head)] = mat
    dump.validate()
    return dump


def extract_alignment_submatrix(full: np.ndarray, layout: SequenceLayout) -> np.ndarray:
    """Slice the speech-query x text-key block out of a full attention matrix.

    Pure projection: rows ``speech_span`` restricted to columns ``text_span``,
    no renormalization.
    """
    full = np.asarray(full)
    if full.ndim != 2 or full.shape[0] != full.shape[1]:
        raise InvalidMatrixError(f"expected a square matrix, got shape {full.shape}")
    if full.shape[0] != layout.seq_len:
        raise LayoutError(
            f"layout seq_len {layout.seq_len} does not match matrix "
            f"shape {full.shape}"
        )
    s0, s1 = layout.speech_span
    t0, t1 = layout.text_span
    return full[s0:s1, t0:t1]


def validate_alignment_matrix(mat: np.ndarray, row_sum_slack: float = ROW_SUM_SLACK) -> None:
    """Check alignment-block invariants: finite, entries in [0, 1], row sums <= 1 + slack."""
    mat = np.asarray(mat)
    if mat.ndim != 2 or mat.size == 0:
        raise InvalidMatrixError(f"alignment matrix must be 2-D non-empty, got {mat.shape}")
    if not np.isfinite(mat).all():
        raise InvalidMatrixError("alignment matrix has non-finite entries")
    if (mat < 0).any() or (mat > 1).any():
        raise InvalidMatrixError("alignment matrix entries must lie in [0, 1]")
    row_sums = mat.sum(axis=1)
    worst = float(row_sums.max())
    if worst > 1.0 + row_sum_slack:
        raise InvalidMatrixError(
            f"alignment matrix row sum {worst} exceeds 1 + {row_sum_slack}"
        )


def check_dump(dump: AttentionDump, row_sum_tol: float | None = None) -> list[str]:
    """Consistency findings for a loaded dump; empty list means clean.

    For full dumps each attention row should be a probability distribution;
    the default tolerance is 1e-4 for f32 payloads and 1e-10 for f64.
    Sliced dumps are checked against alignment-block invariants instead.
    """
    if row_sum_tol is None:
        row_sum_tol = 1e-4 if dump.dtype == "f32" else 1e-10
    findings: list[str] = []
    expected = set()
    for layer in range(dump.n_layers):
        for head in range(dump.n_heads):
            expected.add((layer, head))
    missing = expected - set(dump.matrices)
    for layer, head in sorted(missing):
        findings.append(f"missing matrix ({layer}, {head})")
    for (layer, head) in sorted(dump.matrices):
        mat = np.asarray(dump.matrices[(layer, head)], dtype=np.float64)
        row_sums = mat.sum(axis=1)
        if dump.sliced:
            if (mat > 1.0).any():
                findings.append(f"({layer}, {head}): entry above 1")
            if (row_sums > 1.0 + row_sum_tol).any():
                findings.append(
                    f"({layer}, {head}): sliced row sum {row_sums.max():.6g} > 1"
                )
        else:
            err = float(np.abs(row_sums - 1.0).max())
            if not math.isfinite(err) or err > row_sum_tol:
                findings.append(
                    f"({layer}, {head}): full row sums deviate from 1 by {err:.6g}"
                )
    return findings
