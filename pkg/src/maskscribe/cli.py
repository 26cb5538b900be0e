"""Command-line entry point: ``maskscribe <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .dataset import (
    BatchConfig,
    BatchFatalError,
    LoadOptions,
    Manifest,
    ManifestError,
    batch_annotate,
    build_manifest,
    dataset_statistics,
    write_stats_csv,
)
from .grading import assess
from .mask_core import category_histogram
from .metrics import AVAILABLE_METRICS, ExternalEmbeddingProvider, corpus_eval
from .narration import backend_from_env
from .pipeline import annotate_mask

EXIT_OK, EXIT_PARTIAL, EXIT_FATAL = 0, 1, 2

logger = logging.getLogger("maskscribe")


def _add_load_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=["auto", "indexed", "palette"], default="auto",
                   help="how mask pixels encode categories (default: auto)")
    p.add_argument("--palette", type=Path, help="palette file with 'R,G,B=category' lines")
    p.add_argument("--tolerance", type=int, default=0, help="per-channel palette tolerance")


def _add_annotation_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--connectivity", type=int, choices=[4, 8], default=8)
    p.add_argument("--backend", choices=["auto", "template", "external"], default="auto",
                   help="text backend; auto uses the external endpoint when MASKSCRIBE_LLM_URL is set")
    p.add_argument("--strict-minor", action="store_true",
                   help="grade Minor whenever any damaged or destroyed pixel exists")


def _load_options(args) -> LoadOptions:
    text = args.palette.read_text(encoding="utf-8") if args.palette else None
    return LoadOptions(args.mode, text, args.tolerance)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def cmd_annotate(args) -> int:
    mask = _load_options(args).load(args.mask)
    backend = backend_from_env(args.backend, strict_minor=args.strict_minor)
    result = annotate_mask(
        mask,
        args.id or args.mask.stem,
        connectivity=args.connectivity,
        backend=backend,
        strict_minor=args.strict_minor,
    )
    doc_path, obb_path = result.write(args.out)
    print(doc_path)
    print(obb_path)
    return EXIT_OK


def cmd_batch(args) -> int:
    manifest = Manifest.load(args.manifest)
    config = BatchConfig(args.connectivity, args.backend, args.strict_minor, _load_options(args))
    summary = batch_annotate(manifest, args.out, config, workers=args.workers)
    print(f"ok={summary.ok} failed={summary.failed}")
    for f in summary.failures:
        print(f"  {f['id']}: {f['error']}", file=sys.stderr)
    return EXIT_PARTIAL if summary.failed else EXIT_OK


def cmd_stats(args) -> int:
    manifest = Manifest.load(args.manifest)
    corpus: list[str] = []
    if args.annotations:
        for path in sorted(Path(args.annotations).glob("*.annotation.json")):
            sem = json.loads(path.read_text(encoding="utf-8"))["semantic"]
            corpus.extend(sem["zone_descriptions"].values())
            corpus.extend([sem["counting_text"], sem["summary_text"]])
    report = dataset_statistics(
        manifest,
        options=_load_options(args),
        connectivity=args.connectivity,
        presence_threshold=args.presence_threshold,
        corpus=corpus,
        top_words=args.top_words,
    )
    Path(args.out).write_text(_dump(report), encoding="utf-8")
    if args.csv_dir:
        write_stats_csv(report, args.csv_dir)
    return EXIT_OK


def cmd_grade(args) -> int:
    mask = _load_options(args).load(args.mask)
    print(_dump(assess(category_histogram(mask), strict_minor=args.strict_minor).to_dict()), end="")
    return EXIT_OK


def cmd_eval(args) -> int:
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    provider = ExternalEmbeddingProvider.from_env() if args.embedding == "external" else None
    report = corpus_eval(args.pred, args.ref, metrics, provider, sign_preserving=args.sign_preserving)
    report["embedding"] = args.embedding
    print(_dump(report), end="")
    return EXIT_OK


def cmd_manifest(args) -> int:
    manifest = build_manifest(args.root)
    for w in manifest.warnings:
        print(f"warning: {w}", file=sys.stderr)
    manifest.save(args.out)
    print(f"{len(manifest.entries)} entries -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maskscribe", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("annotate", help="annotate a single mask")
    p.add_argument("--mask", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--id", help="image id (default: mask file stem)")
    _add_load_options(p)
    _add_annotation_options(p)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("batch", help="annotate every mask in a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: CPU count)")
    _add_load_options(p)
    _add_annotation_options(p)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("stats", help="dataset statistics report (JSON)")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--csv-dir", type=Path, help="also write plot-ready CSV tables here")
    p.add_argument("--annotations", type=Path, help="directory of annotation documents for word counts")
    p.add_argument("--presence-threshold", type=int, default=1,
                   help="pixels needed for a category to count as present in an image")
    p.add_argument("--connectivity", type=int, choices=[4, 8], default=8)
    p.add_argument("--top-words", type=int, default=100)
    _add_load_options(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("grade", help="print the damage assessment of a mask")
    p.add_argument("--mask", type=Path, required=True)
    p.add_argument("--strict-minor", action="store_true")
    _add_load_options(p)
    p.set_defaults(func=cmd_grade)

    p = sub.add_parser("eval", help="score predictions against references")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--ref", type=Path, required=True)
    p.add_argument("--metrics", default=",".join(AVAILABLE_METRICS))
    p.add_argument("--embedding", choices=["bow", "external"], default="bow")
    p.add_argument("--sign-preserving", action="store_true", help="use cos^3 instead of |cos|^3 for SCS")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("manifest", help="build a manifest from a dataset directory")
    p.add_argument("--root", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_manifest)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except BatchFatalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except (ValueError, RuntimeError, OSError, ManifestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
