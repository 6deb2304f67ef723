"""Persist successful query/code pairs and retrieve the nearest past query.

Retrieval correctness is defined by one oracle regardless of indexing:
retrieve_top1 must equal a brute-force linear-scan argmax of cosine
similarity over the whole store. The default embedder is a deterministic
hashed bag of words so tests and offline runs need no model service; a
remote embedding client can be swapped in through the same interface.

The persistence log is append-only, one JSON record per line, replayed at
startup. Embeddings are not persisted (they are recomputed on load), which
keeps the file embedder-agnostic.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import time
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import httpx
import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_DIM = 256
_TOKEN_RE = re.compile(r"\w+")


class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


class HashedBagOfWords:
    """Deterministic local embedder: lowercase word tokens hashed into
    fixed buckets (crc32, stable across processes), counts L2-normalized."""

    def __init__(self, dim: int = DEFAULT_DIM):
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in _TOKEN_RE.findall(text.lower()):
            vec[zlib.crc32(token.encode("utf-8")) % self.dim] += 1.0
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec


class RemoteEmbedder:
    """Client for an embedding HTTP service: POST {model, input} ->
    {embedding: [...]}. Mirrors hosted sentence-embedding setups."""

    def __init__(self, endpoint: str, model: str, dim: int, api_key: str | None = None,
                 timeout: float = 30.0):
        self.endpoint = endpoint
        self.model = model
        self.dim = dim
        self.api_key = api_key
        self.timeout = timeout

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        resp = httpx.post(
            self.endpoint,
            json={"model": self.model, "input": text},
            headers=headers,
            timeout=self.timeout,
        )
        resp.raise_for_status()
        vec = np.asarray(resp.json()["embedding"], dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ValueError(f"embedding service returned dimension {vec.shape}, expected {self.dim}")
        return vec


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """dot(a,b)/(|a||b|); a zero vector yields 0 with a warning."""
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        logger.warning("cosine of zero vector defined as 0")
        return 0.0
    return float(np.dot(a, b) / (na * nb))


@dataclass(frozen=True)
class SolutionRecord:
    query_id: str
    query_text: str
    code: str  # fake-key form, never real key material
    solved_by_rank: int
    created_at: float
    embedding: np.ndarray

    def to_json(self) -> str:
        # embedding deliberately omitted: recomputed on load
        return json.dumps(
            {
                "query_id": self.query_id,
                "query_text": self.query_text,
                "code": self.code,
                "solved_by_rank": self.solved_by_rank,
                "created_at": self.created_at,
            },
            separators=(",", ":"),
        )


class SolutionStore:
    """Vector store over past solutions with append-only JSONL persistence.

    Writes are serialized; a write becomes visible atomically. forbidden
    substrings (resolved real keys) are scanned on every insert so no key
    material can ever be persisted.
    """

    def __init__(
        self,
        embedder: Embedder | None = None,
        path: str | Path | None = None,
        floor: float = -1.0,
        forbidden: list[str] | None = None,
    ):
        self.embedder = embedder or HashedBagOfWords()
        self.path = Path(path) if path else None
        self.floor = floor
        self.forbidden = [f for f in (forbidden or []) if f]
        self._records: list[SolutionRecord] = []
        self._by_id: dict[str, int] = {}
        # row-aligned embedding matrix and norms, grown by doubling
        self._matrix = np.zeros((64, self.embedder.dim), dtype=np.float64)
        self._norms = np.zeros(64)
        self._lock = threading.Lock()
        self._fh = None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if self.path.exists():
                self._replay()
            self._fh = open(self.path, "a", encoding="utf-8")

    def _replay(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                d = json.loads(line)
                record = SolutionRecord(
                    query_id=d["query_id"],
                    query_text=d["query_text"],
                    code=d["code"],
                    solved_by_rank=d["solved_by_rank"],
                    created_at=d["created_at"],
                    embedding=self.embedder.embed(d["query_text"]),
                )
                self._put(record)

    def _put(self, record: SolutionRecord) -> None:
        row = record.embedding.astype(np.float64)
        if record.query_id in self._by_id:
            index = self._by_id[record.query_id]
            self._records[index] = record
        else:
            index = len(self._records)
            self._by_id[record.query_id] = index
            self._records.append(record)
            if index >= self._matrix.shape[0]:
                grown = np.zeros((self._matrix.shape[0] * 2, self.embedder.dim))
                grown[: index] = self._matrix[: index]
                self._matrix = grown
                norms_grown = np.zeros(grown.shape[0])
                norms_grown[: index] = self._norms[: index]
                self._norms = norms_grown
        self._matrix[index] = row
        self._norms[index] = np.linalg.norm(row)

    def __len__(self) -> int:
        return len(self._records)

    def records(self) -> list[SolutionRecord]:
        with self._lock:
            return list(self._records)

    def insert(
        self,
        query_id: str,
        query_text: str,
        code: str,
        solved_by_rank: int,
        created_at: float | None = None,
    ) -> SolutionRecord:
        if not code:
            raise ValueError("stored code must be nonempty")
        for secret in self.forbidden:
            if secret in code or secret in query_text:
                raise ValueError("refusing to store a record containing real key material")
        record = SolutionRecord(
            query_id=query_id,
            query_text=query_text,
            code=code,
            solved_by_rank=solved_by_rank,
            created_at=created_at if created_at is not None else time.time(),
            embedding=self.embedder.embed(query_text),
        )
        with self._lock:
            if query_id in self._by_id:
                logger.info("replacing stored solution for duplicate query_id %s", query_id)
            self._put(record)
            if self._fh:
                self._fh.write(record.to_json() + "\n")
                self._fh.flush()
        return record

    # a matrix-product similarity differs from the per-record scan by at
    # most a few ulp; this margin is > 1000x that, so the prefilter can
    # never drop the true argmax or a record tied with it
    _PREFILTER_MARGIN = 1e-9

    def retrieve_top1(self, query_text: str) -> tuple[SolutionRecord, float] | None:
        """The argmax-similarity record, or None when the store is empty or
        the best similarity falls below the floor. Ties go to the most
        recent created_at, then the lowest query_id.

        Selection is bit-identical to a brute-force linear scan with
        cosine(): the matrix product only prefilters candidates, which are
        then rescored exactly.
        """
        with self._lock:
            records = list(self._records)
            matrix = self._matrix[: len(records)]
            norms = self._norms[: len(records)]
        if not records:
            return None
        query_vec = self.embedder.embed(query_text).astype(np.float64)
        query_norm = float(np.linalg.norm(query_vec))
        if query_norm == 0.0:
            approx = np.zeros(len(records))
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                approx = (matrix @ query_vec) / (norms * query_norm)
            approx[norms == 0.0] = 0.0
        candidates = np.flatnonzero(approx >= approx.max() - self._PREFILTER_MARGIN)

        best: SolutionRecord | None = None
        best_sim = float("-inf")
        for index in candidates:
            record = records[int(index)]
            sim = cosine(query_vec, record.embedding)
            if best is None or sim > best_sim or (
                sim == best_sim and _wins_tiebreak(record, best)
            ):
                best = record
                best_sim = sim
        if best_sim < self.floor:
            return None
        return best, best_sim

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None


def _wins_tiebreak(candidate: SolutionRecord, incumbent: SolutionRecord) -> bool:
    if candidate.created_at != incumbent.created_at:
        return candidate.created_at > incumbent.created_at
    return candidate.query_id < incumbent.query_id
