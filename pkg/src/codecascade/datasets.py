"""Dataset ingestion: line-delimited query records.

Each line is a JSON object: {"id", "query", "api", "key_env"}. Arrival
order is line order. One fake key is generated per distinct API name,
seeded, and checked against the resolved real key.
"""

from __future__ import annotations

import json
import os
import random
from pathlib import Path
from typing import Sequence

from .core import ApiSpec, Query, generate_fake_key


class DatasetError(Exception):
    pass


def fake_key_for(
    api_name: str, seed: int, key_env: str, avoid: set[str] | None = None
) -> str:
    """Deterministic fake key for (seed, api name); re-draws on collision
    with the resolved real key or another already-issued fake key."""
    rng = random.Random(f"{seed}/{api_name}")
    avoid = avoid or set()
    real = os.environ.get(key_env)
    while True:
        key = generate_fake_key(rng)
        if key not in avoid and key != real:
            return key


def ingest_dataset(path: str | Path, seed: int = 0) -> list[Query]:
    """Parse queries from a JSONL file, assigning arrival_index by line order."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    queries: list[Query] = []
    seen_ids: set[str] = set()
    api_specs: dict[str, ApiSpec] = {}
    issued_keys: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                qid = str(record["id"])
                text = record["query"]
                api_name = record["api"]
                key_env = record["key_env"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DatasetError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if not text:
                raise DatasetError(f"{path}:{lineno}: empty query text")
            if qid in seen_ids:
                raise DatasetError(f"{path}:{lineno}: duplicate query id {qid!r}")
            seen_ids.add(qid)
            if api_name not in api_specs:
                fake = fake_key_for(api_name, seed, key_env, avoid=issued_keys)
                issued_keys.add(fake)
                api_specs[api_name] = ApiSpec(name=api_name, fake_key=fake, real_key_ref=key_env)
            queries.append(
                Query(
                    id=qid,
                    text=text,
                    api=api_specs[api_name],
                    arrival_index=len(queries),
                )
            )
    return queries


def shuffled(queries: Sequence[Query], seed: int) -> list[Query]:
    """A reordered copy with arrival_index reassigned; the id multiset is
    unchanged (how the mixed-order datasets are constructed)."""
    rng = random.Random(seed)
    order = list(queries)
    rng.shuffle(order)
    return [
        Query(id=q.id, text=q.text, api=q.api, arrival_index=i)
        for i, q in enumerate(order)
    ]
