"""Text similarity metrics: ROUGE-L, exact-match METEOR and sharpened cosine."""

from __future__ import annotations

import math
import os
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .http_client import post_json
from .zonal_stats import tokenize

METEOR_NOTE = "METEOR exact-match stage only (no stemming or synonyms); alpha=0.9, beta=3, gamma=0.5"
AVAILABLE_METRICS = ("rouge", "meteor", "scs")


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> dict[str, float]:
    """LCS-based precision, recall and F1 (beta = 1)."""
    if not reference:
        raise ValueError("empty reference")
    if not candidate:
        return {"precision": 0.0, "recall": 0.0, "f1": 0.0}
    lcs = _lcs_length(candidate, reference)
    p = lcs / len(candidate)
    r = lcs / len(reference)
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return {"precision": p, "recall": r, "f1": f1}


def align_unigrams(candidate: Sequence[str], reference: Sequence[str]) -> list[tuple[int, int]]:
    """Greedy exact-match alignment as (candidate index, reference index) pairs.

    Every candidate token takes a free reference position with the same token,
    preferring the one that continues the current chunk, else the leftmost.
    This matches as many tokens as possible.
    """
    free: dict[str, list[int]] = defaultdict(list)
    for j, tok in enumerate(reference):
        free[tok].append(j)
    pairs: list[tuple[int, int]] = []
    for i, tok in enumerate(candidate):
        slots = free.get(tok)
        if not slots:
            continue
        pick = 0
        if pairs and pairs[-1][0] == i - 1 and pairs[-1][1] + 1 in slots:
            pick = slots.index(pairs[-1][1] + 1)
        pairs.append((i, slots.pop(pick)))
    return pairs


def count_chunks(pairs: Sequence[tuple[int, int]]) -> int:
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor(candidate: Sequence[str], reference: Sequence[str]) -> float:
    if not reference:
        raise ValueError("empty reference")
    pairs = align_unigrams(candidate, reference)
    m = len(pairs)
    if m == 0:
        return 0.0
    p = m / len(candidate)
    r = m / len(reference)
    f_mean = 10 * p * r / (r + 9 * p)
    penalty = 0.5 * (count_chunks(pairs) / m) ** 3
    return f_mean * (1 - penalty)


def _exact_dot(u: np.ndarray, v: np.ndarray) -> Fraction:
    """Dot product of two float vectors with no rounding."""
    mu, eu = np.frexp(u)
    mv, ev = np.frexp(v)
    # 53-bit integer mantissas; value = m * 2**(e - 53)
    iu = (mu * 2.0**53).astype(np.int64).tolist()
    iv = (mv * 2.0**53).astype(np.int64).tolist()
    exps = (eu.astype(np.int64) + ev.astype(np.int64) - 106).tolist()
    nonzero = [k for k in range(len(iu)) if iu[k] and iv[k]]
    if not nonzero:
        return Fraction(0)
    base = min(exps[k] for k in nonzero)
    total = sum((iu[k] * iv[k]) << (exps[k] - base) for k in nonzero)
    return Fraction(total) * Fraction(2) ** base


def _cosine_parts(u, v) -> tuple[Fraction, int]:
    """Exact squared cosine and the sign of the dot product."""
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.shape != v.shape:
        raise ValueError(f"vector lengths differ: {u.size} vs {v.size}")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise ValueError("vectors must be finite")
    uu, vv = _exact_dot(u, u), _exact_dot(v, v)
    if uu == 0 or vv == 0:
        raise ValueError("zero vector has no direction")
    dot = _exact_dot(u, v)
    return dot * dot / (uu * vv), (dot > 0) - (dot < 0)


def cosine(u, v) -> float:
    cos2, sign = _cosine_parts(u, v)
    return sign * math.sqrt(min(1.0, float(cos2)))


def scs(u, v, sign_preserving: bool = False) -> float:
    """Sharpened cosine: ``cos**3 * sign(cos)`` (i.e. ``|cos|**3``).

    ``sign_preserving=True`` drops the sign factor and returns ``cos**3``.
    The squared cosine is formed exactly, so the score is symmetric and
    unchanged by any exactly representable positive rescaling.
    """
    cos2, sign = _cosine_parts(u, v)
    mag = min(1.0, float(cos2)) ** 1.5
    return sign * mag if sign_preserving else mag


class EmbeddingProvider(Protocol):
    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


@dataclass(frozen=True)
class BagOfWordsProvider:
    """L2-normalized unigram counts over a fixed vocabulary."""

    vocabulary: tuple[str, ...]

    @classmethod
    def from_corpus(cls, texts: Iterable[str]) -> "BagOfWordsProvider":
        vocab = sorted({tok for t in texts for tok in tokenize(t)})
        if not vocab:
            raise ValueError("empty vocabulary")
        return cls(tuple(vocab))

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        index = {tok: i for i, tok in enumerate(self.vocabulary)}
        out = np.zeros((len(texts), len(self.vocabulary)))
        for row, text in enumerate(texts):
            for tok in tokenize(text):
                if tok in index:
                    out[row, index[tok]] += 1
            norm = np.linalg.norm(out[row])
            if norm:
                out[row] /= norm
        return out


@dataclass
class ExternalEmbeddingProvider:
    """OpenAI-style ``/embeddings`` endpoint."""

    url: str
    model: str
    api_key: str | None = None
    attempts: int = 3
    backoff: float = 1.0
    timeout: float = 30.0

    @classmethod
    def from_env(cls) -> "ExternalEmbeddingProvider":
        url = os.environ.get("MASKSCRIBE_EMBED_URL")
        if not url:
            raise RuntimeError("MASKSCRIBE_EMBED_URL is not set")
        return cls(
            url=url,
            model=os.environ.get("MASKSCRIBE_EMBED_MODEL", "sentence-t5-base"),
            api_key=os.environ.get("MASKSCRIBE_EMBED_API_KEY"),
        )

    def embed(self, texts: Sequence[str], **kwargs) -> np.ndarray:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        body = post_json(
            self.url,
            {"model": self.model, "input": list(texts)},
            headers=headers,
            attempts=self.attempts,
            backoff=self.backoff,
            timeout=self.timeout,
            **kwargs,
        )
        rows = sorted(body["data"], key=lambda d: d.get("index", 0))
        vecs = np.array([r["embedding"] for r in rows], dtype=float)
        if vecs.shape[0] != len(texts) or not np.all(np.isfinite(vecs)):
            raise ValueError("embedding endpoint returned malformed vectors")
        return vecs


def embed(text: str, provider: EmbeddingProvider) -> np.ndarray:
    return provider.embed([text])[0]


def _read_lines(path: str | Path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def evaluate_pairs(
    preds: Sequence[str],
    refs: Sequence[str],
    metrics: Sequence[str] = AVAILABLE_METRICS,
    provider: EmbeddingProvider | None = None,
    sign_preserving: bool = False,
) -> dict:
    if len(preds) != len(refs):
        raise ValueError(f"line-count mismatch: {len(preds)} predictions vs {len(refs)} references")
    if not preds:
        raise ValueError("no pairs")
    unknown = sorted(set(metrics) - set(AVAILABLE_METRICS))
    if unknown:
        raise ValueError(f"unknown metrics: {', '.join(unknown)}")
    selected = [m for m in AVAILABLE_METRICS if m in metrics]
    per_pair: list[dict] = [{} for _ in preds]
    for k, (pred, ref) in enumerate(zip(preds, refs)):
        cand, reference = tokenize(pred), tokenize(ref)
        if not reference:
            raise ValueError(f"pair {k + 1}: empty reference")
        if "rouge" in selected:
            per_pair[k]["rouge_l"] = rouge_l(cand, reference)["f1"]
        if "meteor" in selected:
            per_pair[k]["meteor"] = meteor(cand, reference)
    if "scs" in selected:
        provider = provider or BagOfWordsProvider.from_corpus(list(preds) + list(refs))
        pv, rv = provider.embed(list(preds)), provider.embed(list(refs))
        for k in range(len(preds)):
            try:
                per_pair[k]["scs"] = scs(pv[k], rv[k], sign_preserving)
            except ValueError:
                raise ValueError(f"pair {k + 1}: empty text has no embedding") from None
    keys = [{"rouge": "rouge_l", "meteor": "meteor", "scs": "scs"}[m] for m in selected]
    means = {key: math.fsum(p[key] for p in per_pair) / len(per_pair) for key in keys}
    report = {"pairs": len(per_pair), "metrics": keys, "means": means, "per_pair": per_pair}
    if "meteor" in selected:
        report["notes"] = {"meteor": METEOR_NOTE}
    if "scs" in selected:
        report.setdefault("notes", {})["scs"] = "cos^3" if sign_preserving else "cos^3 * sign(cos)"
    return report


def corpus_eval(
    pred_file: str | Path,
    ref_file: str | Path,
    metrics: Sequence[str] = AVAILABLE_METRICS,
    provider: EmbeddingProvider | None = None,
    sign_preserving: bool = False,
) -> dict:
    """Score line-aligned prediction/reference files and average per metric."""
    return evaluate_pairs(_read_lines(pred_file), _read_lines(ref_file), metrics, provider, sign_preserving)
