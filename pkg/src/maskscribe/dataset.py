"""Dataset manifests, split checks, dataset statistics and batch annotation."""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable

from .instances import extract_instances
from .mask_core import BUILDING_CATEGORIES, Palette, SegmentationMask, load_mask
from .zonal_stats import class_balance, cooccurrence, size_distribution, word_frequency

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
MASK_EXTENSIONS = (".png", ".raw", ".tif", ".tiff", ".bmp")


class ManifestError(ValueError):
    pass


class BatchFatalError(RuntimeError):
    """The batch cannot run at all (e.g. output directory not writable)."""


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    mask: str
    split: str
    pre: str | None = None
    post: str | None = None


@dataclass
class Manifest:
    root: Path
    entries: list[ManifestEntry]
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for e in self.entries:
            if e.id in seen:
                raise ManifestError(f"duplicate entry id {e.id!r}")
            seen.add(e.id)
            if e.split not in SPLITS:
                raise ManifestError(f"entry {e.id!r} has invalid split {e.split!r}")

    def path(self, rel: str) -> Path:
        return self.root / rel

    def by_split(self) -> dict[str, list[ManifestEntry]]:
        out: dict[str, list[ManifestEntry]] = {}
        for e in self.entries:
            out.setdefault(e.split, []).append(e)
        return out

    def to_dict(self) -> dict:
        return {
            "root": str(self.root),
            "entries": [{k: v for k, v in asdict(e).items() if v is not None} for e in self.entries],
            "warnings": list(self.warnings),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
        root = Path(data.get("root", "."))
        if not root.is_absolute():
            root = path.parent / root
        entries = [ManifestEntry(**e) for e in data.get("entries", [])]
        return cls(root, entries, list(data.get("warnings", [])))


@dataclass(frozen=True)
class LayoutConfig:
    """Where masks and optional pre/post images live under a dataset root.

    Split folders (``train``/``val``/``test``) are optional; without them every
    mask gets ``default_split``. Inside a split (or the root) masks are read
    from ``mask_dir`` when it exists, otherwise from the folder itself.
    """

    mask_dir: str = "masks"
    pre_dir: str = "pre"
    post_dir: str = "post"
    default_split: str = "train"
    extensions: tuple[str, ...] = MASK_EXTENSIONS


def _files_by_stem(folder: Path, extensions: tuple[str, ...] | None = None) -> dict[str, Path]:
    out: dict[str, Path] = {}
    for p in sorted(folder.iterdir()):
        if not p.is_file() or p.name.startswith("."):
            continue
        if extensions is not None and p.suffix.lower() not in extensions:
            continue
        if p.stem in out:
            raise ManifestError(f"duplicate stem {p.stem!r} in {folder}")
        out[p.stem] = p
    return out


def build_manifest(root: str | Path, layout: LayoutConfig | None = None) -> Manifest:
    layout = layout or LayoutConfig()
    root = Path(root)
    if not root.is_dir():
        raise ManifestError(f"dataset root {root} is not a readable directory")
    groups = [(s, root / s) for s in SPLITS if (root / s).is_dir()]
    if not groups:
        groups = [(layout.default_split, root)]
    entries: list[ManifestEntry] = []
    warnings: list[str] = []
    owner: dict[str, str] = {}
    try:
        for split, folder in groups:
            mask_folder = folder / layout.mask_dir if (folder / layout.mask_dir).is_dir() else folder
            masks = _files_by_stem(mask_folder, layout.extensions)
            sides = {}
            for side, name in (("pre", layout.pre_dir), ("post", layout.post_dir)):
                if (folder / name).is_dir():
                    sides[side] = _files_by_stem(folder / name)
            for stem, mask_path in masks.items():
                if stem in owner:
                    raise ManifestError(f"duplicate stem {stem!r} in splits {owner[stem]} and {split}")
                owner[stem] = split
                paired = {}
                for side, files in sides.items():
                    if stem in files:
                        paired[side] = files[stem].relative_to(root).as_posix()
                    else:
                        warnings.append(f"{split}/{stem}: no {side}-event image")
                entries.append(
                    ManifestEntry(stem, mask_path.relative_to(root).as_posix(), split, **paired)
                )
            for side, files in sides.items():
                for stem in files:
                    if stem not in masks:
                        warnings.append(f"{split}/{stem}: {side}-event image without a mask")
    except OSError as exc:
        raise ManifestError(f"cannot read {root}: {exc}") from exc
    if not entries:
        warnings.append(f"no masks found under {root}")
    for w in warnings:
        logger.warning(w)
    return Manifest(root, entries, warnings)


@dataclass(frozen=True)
class LoadOptions:
    mode: str = "auto"
    palette_text: str | None = None
    tolerance: int = 0

    def load(self, path: Path) -> SegmentationMask:
        palette = Palette.from_text(self.palette_text) if self.palette_text else None
        return load_mask(path, self.mode, palette, self.tolerance)


def load_split_masks(manifest: Manifest, options: LoadOptions | None = None) -> dict[str, list[SegmentationMask]]:
    options = options or LoadOptions()
    return {
        split: [options.load(manifest.path(e.mask)) for e in entries]
        for split, entries in manifest.by_split().items()
    }


def split_consistency(balance: dict[str, dict[str, float]]) -> dict:
    missing = [s for s in SPLITS if s not in balance]
    if missing:
        raise ValueError(f"missing split: {', '.join(missing)}")
    gaps = {
        c.label: max(abs(balance[a][c.label] - balance[b][c.label]) for a, b in combinations(SPLITS, 2))
        for c in BUILDING_CATEGORIES
    }
    return {"balance": {s: balance[s] for s in SPLITS}, "gaps": gaps, "max_gap": max(gaps.values())}


def check_split_consistency(manifest: Manifest, options: LoadOptions | None = None) -> dict:
    """Per-split class balance and the largest cross-split fraction gap."""
    splits = manifest.by_split()
    missing = [s for s in SPLITS if s not in splits]
    if missing:
        raise ValueError(f"missing split: {', '.join(missing)}")
    return split_consistency(class_balance(load_split_masks(manifest, options)))


def dataset_statistics(
    manifest: Manifest,
    *,
    options: LoadOptions | None = None,
    connectivity: int = 8,
    presence_threshold: int = 1,
    corpus: Iterable[str] = (),
    top_words: int | None = 100,
) -> dict:
    masks_by_split = load_split_masks(manifest, options)
    ordered = [m for s in SPLITS for m in masks_by_split.get(s, [])]
    instances = [b for m in ordered for b in extract_instances(m, connectivity)]
    balance = class_balance({s: masks_by_split[s] for s in SPLITS if s in masks_by_split})
    report = {
        "images": len(ordered),
        "class_balance": balance,
        "split_consistency": split_consistency(balance) if all(s in balance for s in SPLITS) else None,
        "size_distribution": size_distribution(instances),
        "cooccurrence": cooccurrence(ordered, presence_threshold).to_dict() if ordered else None,
        "word_frequency": word_frequency(corpus).to_dict(top=top_words),
        "settings": {"connectivity": connectivity, "presence_threshold": presence_threshold},
    }
    return report


def write_stats_csv(report: dict, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    def table(name: str, header: list[str], rows: list[list]) -> None:
        path = out_dir / name
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        written.append(path)

    cats = [c.label for c in BUILDING_CATEGORIES]
    table(
        "class_balance.csv",
        ["split"] + cats,
        [[s] + [v[c] for c in cats] for s, v in report["class_balance"].items()],
    )
    keys = ["count", "min", "q1", "median", "q3", "max"]
    table(
        "size_distribution.csv",
        ["category"] + keys,
        [[c] + [report["size_distribution"][c][k] for k in keys] for c in cats],
    )
    if report["cooccurrence"]:
        prob = report["cooccurrence"]["probability"]
        table("cooccurrence.csv", ["given"] + cats, [[r] + [prob[r][c] for c in cats] for r in cats])
    table("word_frequency.csv", ["token", "count"], list(report["word_frequency"]["tokens"].items()))
    return written


@dataclass(frozen=True)
class BatchConfig:
    connectivity: int = 8
    backend: str = "auto"
    strict_minor: bool = False
    load: LoadOptions = LoadOptions()


def _annotate_entry(job: tuple[str, str, BatchConfig]) -> tuple[str, str | None, str | None, str | None]:
    from .narration import backend_from_env
    from .pipeline import annotate_mask

    entry_id, mask_path, config = job
    try:
        mask = config.load.load(Path(mask_path))
        backend = backend_from_env(config.backend, strict_minor=config.strict_minor)
        result = annotate_mask(
            mask,
            entry_id,
            connectivity=config.connectivity,
            backend=backend,
            strict_minor=config.strict_minor,
        )
        return entry_id, result.document_json, result.obb_text, None
    except Exception as exc:  # fault isolation: one bad entry never stops the batch
        return entry_id, None, None, f"{type(exc).__name__}: {exc}"


@dataclass
class BatchSummary:
    total: int
    ok: int
    failed: int
    failures: list[dict]

    def to_dict(self) -> dict:
        return {"total": self.total, "ok": self.ok, "failed": self.failed, "failures": self.failures}


def batch_annotate(
    manifest: Manifest,
    out_dir: str | Path,
    config: BatchConfig | None = None,
    workers: int | None = None,
) -> BatchSummary:
    """Annotate every entry, writing ``<id>.annotation.json``/``<id>.obb.txt``
    and ``run_summary.json``. Results are merged in manifest order."""
    config = config or BatchConfig()
    workers = workers or os.cpu_count() or 1
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise BatchFatalError(f"output directory {out_dir} is not writable: {exc}") from exc

    jobs = [(e.id, str(manifest.path(e.mask)), config) for e in manifest.entries]
    if workers == 1 or len(jobs) <= 1:
        results = [_annotate_entry(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_annotate_entry, jobs, chunksize=1))

    failures = []
    for entry_id, doc, obb, error in results:
        if error is not None:
            failures.append({"id": entry_id, "error": error})
            continue
        (out_dir / f"{entry_id}.annotation.json").write_bytes(doc.encode("utf-8"))
        (out_dir / f"{entry_id}.obb.txt").write_bytes(obb.encode("utf-8"))
    summary = BatchSummary(len(results), len(results) - len(failures), len(failures), failures)
    (out_dir / "run_summary.json").write_text(json.dumps(summary.to_dict(), indent=2) + "\n", encoding="utf-8")
    return summary
