"""Command-line pipeline over attention dumps.

One executable with subcommands::

    inspect       manifest summary and consistency findings for a dump
    oas           per-head score table and aggregates over dumps
    select-heads  designate alignment heads from a score table
    path          best path and durations for one head
    supervise     CoT supervision bundles from teacher dumps
    loss          loss values and gradient norms per designated head
    corr          score-vs-error correlation report for a corpus
    synth         synthetic corpus with planted alignment paths
    selfcheck     search-oracle and gradient verification suites

Identical invocations with identical inputs and seeds produce byte-identical
outputs regardless of ``--jobs``. Set ``OAS_ALIGN_LOG`` to adjust verbosity;
``--json`` switches diagnostics to structured output.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DegenerateMatrixError, OasAlignError
from .losses import oas_loss, oas_loss_grad_wrt_logits, oas_loss_grad_wrt_matrix
from .oas import (
    DEFAULT_FINAL_TOP_K,
    DEFAULT_LAYER_TOP_K,
    build_oas_report,
    final_oas,
    per_head_oas_single,
    select_alignment_heads,
)
from .stats import UtteranceRecord, load_wer_jsonl, oas_wer_report, write_corr_report, write_scatter_tsv
from .store import AttentionDump, check_dump, load_dump
from .supervision import build_supervision, derive_seed
from .synth import SynthSpec, correlation_template, heads_recovery_template, synth_corpus
from .util import parallel_map, write_json, write_jsonl
from .viterbi import optimal_path, path_to_durations

logger = logging.getLogger("oas_align")


def _setup_logging() -> None:
    level = os.environ.get("OAS_ALIGN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _fail(message: str, as_json: bool, kind: str = "error") -> int:
    if as_json:
        print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    else:
        print(f"error: {message}", file=sys.stderr)
    return 1


def _corpus_dump_dirs(corpus: Path) -> list[Path]:
    dirs = sorted(p for p in corpus.iterdir() if (p / "manifest.json").is_file())
    if not dirs:
        raise OasAlignError(f"no dump directories under {corpus}")
    return dirs


def _gather_dumps(args) -> list[AttentionDump]:
    paths: list[Path] = []
    if getattr(args, "corpus", None):
        paths.extend(_corpus_dump_dirs(Path(args.corpus)))
    for entry in getattr(args, "dump", None) or []:
        paths.append(Path(entry))
    if not paths:
        raise OasAlignError("no input dumps: pass --dump and/or --corpus")
    return parallel_map(load_dump, paths, jobs=getattr(args, "jobs", 1))


def _best_head(table: np.ndarray) -> tuple[int, int]:
    flat = int(np.argmax(table))  # first max = lexicographically smallest pair
    return flat // table.shape[1], flat % table.shape[1]


# --- subcommand implementations -------------------------------------------


def cmd_inspect(args) -> int:
    dump = load_dump(args.dump)
    findings = check_dump(dump)
    info = {
        "utterance_id": dump.utterance_id,
        "n_layers": dump.n_layers,
        "n_heads": dump.n_heads,
        "seq_len": dump.layout.seq_len,
        "text_span": list(dump.layout.text_span),
        "speech_span": list(dump.layout.speech_span),
        "dtype": dump.dtype,
        "sliced": dump.sliced,
        "n_matrices": len(dump.matrices),
        "findings": findings,
    }
    if args.json:
        print(json.dumps(info, indent=2))
    else:
        for key, value in info.items():
            if key != "findings":
                print(f"{key}: {value}")
        if findings:
            print(f"findings ({len(findings)}):")
            for item in findings:
                print(f"  - {item}")
        else:
            print("findings: none")
    return 0


def cmd_oas(args) -> int:
    dumps = _gather_dumps(args)
    report = build_oas_report(
        dumps, k_layer=args.k_layer, k_final=args.k_final, per_utterance=args.per_utterance
    )
    write_json(report.to_json_dict(), args.out)
    if args.figures:
        from .figures import plot_layer_profile

        out = Path(args.out)
        fig_path = plot_layer_profile(
            report.per_layer_topk, args.k_layer, out.with_name(out.stem + "_layers.png")
        )
        logger.info("wrote %s", fig_path)
    if not args.json:
        print(f"final_oas={report.final:.6f} over {report.n_utts} utterance(s) -> {args.out}")
    else:
        print(json.dumps({"final_oas": report.final, "n_utts": report.n_utts, "out": str(args.out)}))
    return 0


def _load_table(args) -> np.ndarray:
    if args.report:
        payload = json.loads(Path(args.report).read_text(encoding="utf-8"))
        try:
            return np.asarray(payload["per_head"], dtype=np.float64)
        except (KeyError, ValueError) as exc:
            raise OasAlignError(f"{args.report}: not an oas report: {exc}") from exc
    from .oas import per_head_oas

    return per_head_oas(_gather_dumps(args))


def cmd_select_heads(args) -> int:
    table = _load_table(args)
    if args.policy == "fixed":
        heads = select_alignment_heads(
            table, policy="fixed", layers=args.layers, per_layer_count=args.per_layer
        )
    else:
        count = args.count if args.count is not None else max(1, table.size // 2)
        heads = select_alignment_heads(table, policy="top_oas", count=count)
    payload = {"policy": heads.policy, "heads": heads.as_list()}
    write_json(payload, args.out)
    if args.json:
        print(json.dumps(payload))
    else:
        print(f"{len(heads.heads)} heads ({heads.policy}) -> {args.out}")
    return 0


def cmd_path(args) -> int:
    dump = load_dump(args.dump)
    if (args.layer is None) != (args.head is None):
        raise OasAlignError("--layer and --head must be given together")
    if args.layer is None:
        table = per_head_oas_single(dump)
        layer, head = _best_head(table)
    else:
        layer, head = args.layer, args.head
    block = dump.alignment_matrix(layer, head)
    path = optimal_path(block)
    durations = path_to_durations(path)
    payload = {
        "utterance_id": dump.utterance_id,
        "layer": layer,
        "head": head,
        "path": [int(v) for v in path.indices],
        "durations": [int(v) for v in durations],
    }
    write_json(payload, args.out)
    if args.figures:
        from .figures import plot_alignment_heatmap

        out = Path(args.out)
        plot_alignment_heatmap(block, path, out.with_name(out.stem + "_matrix.png"))
    if args.json:
        print(json.dumps({"layer": layer, "head": head, "out": str(args.out)}))
    else:
        print(f"path for head ({layer}, {head}) -> {args.out}")
    return 0


def _load_tokens(path: Path) -> dict[str, list[int]] | list[int]:
    payload = json.loads(path.read_text(encoding="utf-8"))
    if isinstance(payload, list):
        return [int(v) for v in payload]
    if isinstance(payload, dict):
        return {str(k): [int(v) for v in seq] for k, seq in payload.items()}
    raise OasAlignError(f"{path}: expected a token list or utterance->tokens map")


def _supervise_one(
    dump: AttentionDump,
    tokens: list[int],
    global_seed: int,
    fallback_head: tuple[int, int] | None,
) -> dict:
    teacher_oas: float | None
    try:
        table = per_head_oas_single(dump)
        layer, head = _best_head(table)
        teacher_oas = float(table[layer, head])
    except DegenerateMatrixError:
        if fallback_head is None:
            raise
        layer, head = fallback_head
        teacher_oas = None
        logger.warning(
            "dump %s has degenerate heads; using corpus-best head (%d, %d)",
            dump.utterance_id, layer, head,
        )
    seed = derive_seed(global_seed, dump.utterance_id)
    bundle = build_supervision(np.asarray(tokens), dump.alignment_matrix(layer, head), seed)
    record = {
        "utterance_id": dump.utterance_id,
        "teacher_layer": layer,
        "teacher_head": head,
        "teacher_oas": teacher_oas,
        **bundle.to_record(),
        "seed": seed,
    }
    return record


def cmd_supervise(args) -> int:
    dumps = _gather_dumps(args)
    tokens = _load_tokens(Path(args.tokens))
    if isinstance(tokens, list):
        if len(dumps) != 1:
            raise OasAlignError("a bare token list only works with a single --dump")
        token_map = {dumps[0].utterance_id: tokens}
    else:
        token_map = tokens
    missing = [d.utterance_id for d in dumps if d.utterance_id not in token_map]
    if missing:
        raise OasAlignError(f"no tokens for utterances: {missing[:5]}")
    fallback: tuple[int, int] | None = None
    if args.fallback_corpus_head:
        from .oas import per_head_oas

        fallback = _best_head(per_head_oas(dumps))
    records = parallel_map(
        _SuperviseWorker(token_map, args.seed, fallback), dumps, jobs=args.jobs
    )
    write_jsonl(records, args.out)
    if args.json:
        print(json.dumps({"n_utts": len(records), "out": str(args.out)}))
    else:
        print(f"{len(records)} supervision record(s) -> {args.out}")
    return 0


class _SuperviseWorker:
    """Picklable per-utterance supervision builder for --jobs > 1."""

    def __init__(self, token_map, seed, fallback):
        self.token_map = token_map
        self.seed = seed
        self.fallback = fallback

    def __call__(self, dump: AttentionDump) -> dict:
        return _supervise_one(dump, self.token_map[dump.utterance_id], self.seed, self.fallback)


def cmd_loss(args) -> int:
    dump = load_dump(args.dump)
    if args.heads:
        payload = json.loads(Path(args.heads).read_text(encoding="utf-8"))
        try:
            heads = [(int(l), int(h)) for l, h in payload["heads"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise OasAlignError(f"{args.heads}: not a head-set file: {exc}") from exc
    elif args.layer is not None and args.head is not None:
        heads = [(args.layer, args.head)]
    else:
        raise OasAlignError("pass --heads FILE or --layer and --head")
    floor = 1e-8 if args.floor else None
    entries = []
    for layer, head in heads:
        block = np.asarray(dump.alignment_matrix(layer, head), dtype=np.float64)
        loss, path = oas_loss(block, floor=floor)
        grad_mat = oas_loss_grad_wrt_matrix(block, path, floor=floor)
        # Rows are treated as the post-softmax distribution; normalize so the
        # logits-space gradient is well-defined even for sliced raw rows.
        floored = block if floor is None else np.maximum(block, floor)
        probs = floored / floored.sum(axis=1, keepdims=True)
        grad_logits = probs.copy()
        grad_logits[np.arange(block.shape[0]), path.as_array()] -= 1.0
        grad_logits /= block.shape[0]
        cells = block[np.arange(block.shape[0]), path.as_array()]
        entries.append(
            {
                "layer": layer,
                "head": head,
                "loss": float(loss),
                "path_min_prob": float(cells.min()),
                "grad_matrix_norm": float(np.linalg.norm(grad_mat)),
                "grad_logits_norm": float(np.linalg.norm(grad_logits)),
            }
        )
    payload = {
        "utterance_id": dump.utterance_id,
        "floor": floor,
        "heads": entries,
    }
    write_json(payload, args.out)
    if args.json:
        print(json.dumps({"n_heads": len(entries), "out": str(args.out)}))
    else:
        print(f"loss report for {len(entries)} head(s) -> {args.out}")
    return 0


class _FinalOasWorker:
    def __init__(self, k_final: int):
        self.k_final = k_final

    def __call__(self, path: Path) -> tuple[str, float]:
        dump = load_dump(path)
        return dump.utterance_id, final_oas(per_head_oas_single(dump), self.k_final)


def cmd_corr(args) -> int:
    corpus = Path(args.corpus)
    dump_dirs = _corpus_dump_dirs(corpus)
    wer_path = Path(args.wer) if args.wer else corpus / "wer.jsonl"
    wer = load_wer_jsonl(wer_path)
    scores = parallel_map(_FinalOasWorker(args.k_final), dump_dirs, jobs=args.jobs)
    missing = [utt for utt, _ in scores if utt not in wer]
    if missing:
        raise OasAlignError(f"wer file {wer_path} lacks entries for: {missing[:5]}")
    records = [
        UtteranceRecord(utterance_id=utt, final_oas=score, wer=wer[utt])
        for utt, score in scores
    ]
    report = oas_wer_report(records)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_scatter_tsv(report, out_dir / "scatter.tsv")
    write_corr_report(report, out_dir / "corr_report.json")
    if args.figures:
        from .figures import plot_scatter_fit

        plot_scatter_fit(
            report["rows"], report["slope"], report["intercept"], report["r"],
            out_dir / "scatter.png",
        )
    if args.json:
        print(json.dumps({"r": report["r"], "n": report["n"], "out_dir": str(out_dir)}))
    else:
        print(f"r={report['r']:.4f} (|r|={report['abs_r']:.4f}, n={report['n']}) -> {out_dir}")
    return 0


def cmd_synth(args) -> int:
    if args.preset == "corr":
        template = correlation_template(seed=args.seed)
        n_utts = args.n_utts if args.n_utts is not None else 300
    elif args.preset == "heads":
        template = heads_recovery_template(seed=args.seed)
        n_utts = args.n_utts if args.n_utts is not None else 32
    else:
        raise OasAlignError(f"unknown preset {args.preset!r}")
    overrides = {}
    for name in ("n_speech", "n_text", "n_layers", "n_heads", "path_style"):
        value = getattr(args, name.replace("-", "_"))
        if value is not None:
            overrides[name] = value
    if args.full:
        overrides["sliced"] = False
    if overrides:
        from dataclasses import replace

        n_layers = overrides.get("n_layers", template.n_layers)
        n_heads = overrides.get("n_heads", template.n_heads)
        planted = tuple(
            (l, h) for l, h in template.planted_heads if l < n_layers and h < n_heads
        )
        overrides["planted_heads"] = planted if planted else ((0, 0),)
        template = replace(template, **overrides)
    results = synth_corpus(template, n_utts, args.out, jobs=args.jobs)
    if args.json:
        print(json.dumps({"n_utts": len(results), "out": str(args.out)}))
    else:
        print(f"{len(results)} synthetic utterance(s) -> {args.out}")
    return 0


def cmd_selfcheck(args) -> int:
    from .selfcheck import run_all

    results = run_all(fast=args.fast)
    ok = True
    for res in results:
        ok = ok and res.ok
        if args.json:
            print(json.dumps({"suite": res.name, "ok": res.ok,
                              "checked": res.n_checked, "failed": res.n_failed}))
        else:
            print(res.line())
    return 0 if ok else 1


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oas-align",
        description="Alignment analysis and supervision toolkit for decoder-only TTS language models",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, jobs: bool = False, seed: bool = False):
        p.add_argument("--json", action="store_true", help="structured diagnostics on stdout/stderr")
        if jobs:
            p.add_argument("--jobs", type=int, default=1, help="per-utterance parallelism")
        if seed:
            p.add_argument("--seed", type=int, default=0, help="root seed for all randomness")

    p = sub.add_parser("inspect", help="summarize a dump and report consistency findings")
    p.add_argument("--dump", required=True, help="dump directory")
    common(p)
    p.set_defaults(fn=cmd_inspect)

    p = sub.add_parser("oas", help="per-head score table and aggregates")
    p.add_argument("--dump", action="append", help="dump directory (repeatable)")
    p.add_argument("--corpus", help="directory of dump directories")
    p.add_argument("--out", required=True, help="output report JSON")
    p.add_argument("--k-layer", type=int, default=DEFAULT_LAYER_TOP_K)
    p.add_argument("--k-final", type=int, default=DEFAULT_FINAL_TOP_K)
    p.add_argument("--per-utterance", action="store_true",
                   help="also report each utterance's own final score")
    p.add_argument("--figures", action="store_true", help="render the layer profile PNG")
    common(p, jobs=True)
    p.set_defaults(fn=cmd_oas)

    p = sub.add_parser("select-heads", help="designate alignment heads")
    p.add_argument("--report", help="oas report JSON with a per_head table")
    p.add_argument("--dump", action="append", help="dump directory (repeatable)")
    p.add_argument("--corpus", help="directory of dump directories")
    p.add_argument("--policy", choices=("fixed", "top-oas"), default="fixed")
    p.add_argument("--layers", type=int, nargs="+", default=[8, 9],
                   help="layers for the fixed policy")
    p.add_argument("--per-layer", type=int, default=None,
                   help="heads per layer for the fixed policy (default: half)")
    p.add_argument("--count", type=int, default=None, help="head count for top-oas")
    p.add_argument("--out", required=True)
    common(p, jobs=True)
    p.set_defaults(fn=cmd_select_heads)

    p = sub.add_parser("path", help="best path and durations for one head")
    p.add_argument("--dump", required=True)
    p.add_argument("--layer", type=int, default=None)
    p.add_argument("--head", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--figures", action="store_true", help="render the block heat map")
    common(p)
    p.set_defaults(fn=cmd_path)

    p = sub.add_parser("supervise", help="build CoT supervision bundles")
    p.add_argument("--dump", action="append", help="dump directory (repeatable)")
    p.add_argument("--corpus", help="directory of dump directories")
    p.add_argument("--tokens", required=True,
                   help="JSON token list (single dump) or utterance->tokens map")
    p.add_argument("--out", required=True, help="output JSONL")
    p.add_argument("--fallback-corpus-head", action="store_true",
                   help="fall back to the corpus-best head for degenerate utterances")
    common(p, jobs=True, seed=True)
    p.set_defaults(fn=cmd_supervise)

    p = sub.add_parser("loss", help="loss values and gradient norms per head")
    p.add_argument("--dump", required=True)
    p.add_argument("--heads", help="head-set JSON from select-heads")
    p.add_argument("--layer", type=int, default=None)
    p.add_argument("--head", type=int, default=None)
    p.add_argument("--floor", action="store_true",
                   help="clamp path probabilities at 1e-8 instead of erroring")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(fn=cmd_loss)

    p = sub.add_parser("corr", help="score-vs-error correlation report")
    p.add_argument("--corpus", required=True, help="directory of dump directories")
    p.add_argument("--wer", help="wer JSONL (default: <corpus>/wer.jsonl)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--k-final", type=int, default=DEFAULT_FINAL_TOP_K)
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True,
                   help="render the scatter PNG next to the TSV")
    common(p, jobs=True)
    p.set_defaults(fn=cmd_corr)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=("corr", "heads"), default="corr")
    p.add_argument("--n-utts", type=int, default=None)
    p.add_argument("--n-speech", type=int, default=None)
    p.add_argument("--n-text", type=int, default=None)
    p.add_argument("--n-layers", type=int, default=None)
    p.add_argument("--n-heads", type=int, default=None)
    p.add_argument("--path-style", choices=("diagonal", "random-monotone"), default=None)
    p.add_argument("--full", action="store_true", help="write full matrices, not sliced blocks")
    common(p, jobs=True, seed=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("selfcheck", help="run the built-in verification suites")
    p.add_argument("--fast", action="store_true", help="smaller instance counts")
    common(p)
    p.set_defaults(fn=cmd_selfcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "policy", None) == "top-oas":
        args.policy = "top_oas"
    try:
        return args.fn(args)
    except OasAlignError as exc:
        return _fail(str(exc), getattr(args, "json", False), kind=type(exc).__name__)
    except OSError as exc:
        return _fail(f"i/o failure: {exc}", getattr(args, "json", False), kind="OSError")


if __name__ == "__main__":
    sys.exit(main())
