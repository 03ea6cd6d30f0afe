"""Document store, inverted index, and Okapi BM25 candidate generation.

The index is immutable once built: readers may share it freely across
threads. Scoring uses k1=1.2, b=0.75 and idf = ln(1 + (N - df + 0.5) /
(df + 0.5)), so scores are always >= 0.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

K1 = 1.2
B = 0.75

_TOKEN_RE = re.compile(r"[a-z0-9]+")

_CORPUS_FIELDS = {"id", "text", "meta"}


class CorpusError(ValueError):
    """Raised for malformed corpora: duplicate ids, bad JSONL records."""


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs; drops empty tokens."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    meta: dict[str, str] = field(default_factory=dict)

    @property
    def tokens(self) -> list[str]:
        return tokenize(self.text)


@dataclass(frozen=True)
class InvertedIndex:
    """BM25 statistics over a fixed document collection.

    postings map each term to (doc_id, term_frequency) pairs sorted by
    doc id; ``df`` is kept explicitly so it can be checked against the
    postings lists.
    """

    postings: dict[str, list[tuple[str, int]]]
    doc_len: dict[str, int]
    doc_count: int
    avg_doc_len: float
    df: dict[str, int]

    def serialize(self) -> bytes:
        """Canonical JSON bytes; two builds of the same docs are bit-identical."""
        payload = {
            "postings": {t: self.postings[t] for t in sorted(self.postings)},
            "doc_len": {d: self.doc_len[d] for d in sorted(self.doc_len)},
            "doc_count": self.doc_count,
            "avg_doc_len": self.avg_doc_len,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


@dataclass(frozen=True)
class CandidatePool:
    """Top-N BM25 candidates for one query, score-descending, ids break ties."""

    query_id: str
    entries: tuple[tuple[str, float], ...]

    @property
    def doc_ids(self) -> tuple[str, ...]:
        return tuple(doc_id for doc_id, _ in self.entries)

    @property
    def max_score(self) -> float:
        return self.entries[0][1] if self.entries else 0.0


def build_index(docs: list[Document]) -> InvertedIndex:
    """Build the inverted index; rejects duplicate doc ids by name."""
    seen: set[str] = set()
    for doc in docs:
        if not doc.id:
            raise CorpusError("document with empty id")
        if doc.id in seen:
            raise CorpusError(f"duplicate doc id: {doc.id!r}")
        seen.add(doc.id)

    postings: dict[str, dict[str, int]] = {}
    doc_len: dict[str, int] = {}
    for doc in docs:
        tokens = doc.tokens
        doc_len[doc.id] = len(tokens)
        for term in tokens:
            postings.setdefault(term, {})
            postings[term][doc.id] = postings[term].get(doc.id, 0) + 1

    sorted_postings = {
        term: sorted(by_doc.items()) for term, by_doc in postings.items()
    }
    df = {term: len(plist) for term, plist in sorted_postings.items()}
    n = len(docs)
    avg = (sum(doc_len.values()) / n) if n else 0.0
    return InvertedIndex(
        postings=sorted_postings,
        doc_len=doc_len,
        doc_count=n,
        avg_doc_len=avg,
        df=df,
    )


def idf(index: InvertedIndex, term: str) -> float:
    df = index.df.get(term, 0)
    if df == 0:
        return 0.0
    return math.log(1.0 + (index.doc_count - df + 0.5) / (df + 0.5))


def bm25_score(index: InvertedIndex, query_tokens: list[str], doc_id: str) -> float:
    """Okapi BM25 of one document against query tokens.

    Query terms absent from the index or the document contribute 0;
    repeated query terms contribute once per occurrence. Terms are
    accumulated in sorted order so the float result is bit-stable
    regardless of caller ordering or the process hash seed.
    """
    if doc_id not in index.doc_len:
        raise CorpusError(f"unknown doc id: {doc_id!r}")
    dl = index.doc_len[doc_id]
    norm = K1 * (1.0 - B + B * (dl / index.avg_doc_len)) if index.avg_doc_len else K1
    score = 0.0
    for term in sorted(set(query_tokens)):
        plist = index.postings.get(term)
        if plist is None:
            continue
        tf = _term_freq(plist, doc_id)
        if tf == 0:
            continue
        weight = query_tokens.count(term)
        # parenthesized identically to top_n so both paths produce
        # bit-identical floats
        score += weight * (idf(index, term) * (tf * (K1 + 1.0)) / (tf + norm))
    return score


def _term_freq(plist: list[tuple[str, int]], doc_id: str) -> int:
    lo, hi = 0, len(plist)
    while lo < hi:
        mid = (lo + hi) // 2
        if plist[mid][0] < doc_id:
            lo = mid + 1
        else:
            hi = mid
    if lo < len(plist) and plist[lo][0] == doc_id:
        return plist[lo][1]
    return 0


def top_n(
    index: InvertedIndex, query_tokens: list[str], n: int, query_id: str = ""
) -> CandidatePool:
    """The n highest-scoring docs with score > 0 (fewer if unavailable)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    scores: dict[str, float] = {}
    # sorted term order keeps float accumulation bit-identical to
    # bm25_score and independent of the process hash seed
    for term in sorted(set(query_tokens)):
        weight = query_tokens.count(term)
        plist = index.postings.get(term)
        if plist is None:
            continue
        term_idf = idf(index, term)
        for doc_id, tf in plist:
            dl = index.doc_len[doc_id]
            norm = K1 * (1.0 - B + B * (dl / index.avg_doc_len))
            contrib = term_idf * (tf * (K1 + 1.0)) / (tf + norm)
            scores[doc_id] = scores.get(doc_id, 0.0) + weight * contrib
    ranked = sorted(
        ((d, s) for d, s in scores.items() if s > 0.0),
        key=lambda e: (-e[1], e[0]),
    )
    return CandidatePool(query_id=query_id, entries=tuple(ranked[:n]))


def load_corpus(path: str) -> list[Document]:
    """Read a JSONL corpus: {"id", "text", "meta"} per line, UTF-8.

    Unknown fields are rejected so schema drift fails loudly.
    """
    docs: list[Document] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise CorpusError(f"{path}:{lineno}: expected an object")
            unknown = set(obj) - _CORPUS_FIELDS
            if unknown:
                raise CorpusError(
                    f"{path}:{lineno}: unknown fields: {sorted(unknown)}"
                )
            if "id" not in obj or "text" not in obj:
                raise CorpusError(f"{path}:{lineno}: missing 'id' or 'text'")
            meta = obj.get("meta", {})
            if not isinstance(meta, dict) or not all(
                isinstance(k, str) and isinstance(v, str) for k, v in meta.items()
            ):
                raise CorpusError(f"{path}:{lineno}: meta must map strings to strings")
            docs.append(Document(id=str(obj["id"]), text=str(obj["text"]), meta=meta))
    return docs


def save_corpus(docs: list[Document], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(
                json.dumps(
                    {"id": doc.id, "text": doc.text, "meta": doc.meta},
                    sort_keys=True,
                    ensure_ascii=False,
                )
                + "\n"
            )
