"""Alignment analysis and supervision toolkit for decoder-only TTS language models."""

__version__ = "0.1.0"

from .errors import (
    CollapsedPathError,
    DegenerateMatrixError,
    DumpFormatError,
    InstanceTooLargeError,
    InvalidMatrixError,
    LayoutError,
    OasAlignError,
)
from .losses import (
    alignment_mask,
    masked_softmax,
    oas_loss,
    oas_loss_grad_wrt_logits,
    oas_loss_grad_wrt_matrix,
    progress_loss,
    progress_loss_grad,
)
from .oas import (
    HeadSet,
    OasReport,
    build_oas_report,
    final_oas,
    layer_topk_mean,
    oas,
    per_head_oas,
    per_head_oas_single,
    select_alignment_heads,
)
from .stats import UtteranceRecord, linear_fit, oas_wer_report, pearson
from .store import (
    AttentionDump,
    SequenceLayout,
    check_dump,
    extract_alignment_submatrix,
    load_dump,
    save_dump,
    validate_alignment_matrix,
)
from .supervision import (
    MASK_ID,
    SparseTarget,
    SupervisionBundle,
    build_supervision,
    derive_seed,
    full_repeat_targets,
    progress_values,
    sparse_progress_targets,
    sparse_repeat_targets,
)
from .synth import SynthSpec, synth_alignment_matrix, synth_corpus, synth_dump
from .viterbi import (
    AlignmentPath,
    best_path_scores,
    brute_force_optimal_path,
    optimal_path,
    path_score,
    path_to_durations,
)
