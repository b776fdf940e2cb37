import json
from pathlib import Path

import pytest

from alforge.pool import Instance, PoolStore


@pytest.fixture
def store() -> PoolStore:
    return PoolStore()


def make_pool(n: int, prefix: str = "", subgroups=None) -> PoolStore:
    store = PoolStore()
    for i in range(n):
        store.add_instance(
            Instance(
                id=f"{prefix}{i:06d}",
                source_text=f"text number {i}",
                subgroup=subgroups[i % len(subgroups)] if subgroups else None,
            )
        )
    return store


def write_jsonl(path: Path, rows) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    return path
