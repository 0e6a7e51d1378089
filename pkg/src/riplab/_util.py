"""Seed derivation, deterministic parallel mapping, and atomic file writes."""

from __future__ import annotations

import hashlib
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

U64 = np.uint64
_U64_MASK = (1 << 64) - 1


def derive_seed(*parts) -> int:
    """Mix arbitrary labels and integers into a 64-bit seed.

    SHA-256 over a canonical byte encoding, truncated to 8 bytes; stable
    across platforms and process runs, collision-safe for test harnesses.
    """
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, (int, np.integer)):
            h.update(b"i" + int(p).to_bytes(16, "little", signed=True))
        elif isinstance(p, str):
            h.update(b"s" + p.encode("utf-8") + b"\x00")
        elif isinstance(p, float):
            h.update(b"f" + np.float64(p).tobytes())
        else:
            raise TypeError(f"cannot mix {type(p).__name__} into a seed")
    return int.from_bytes(h.digest()[:8], "little")


def philox(*key_parts) -> np.random.Generator:
    """Counter-based generator keyed by the mixed parts (order-independent use)."""
    return np.random.Generator(np.random.Philox(key=U64(derive_seed(*key_parts))))


def parallel_map(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """Map fn over items, optionally on a thread pool.

    Results are returned in item order regardless of completion order, so
    callers relying on order-independent reductions get identical output
    for every thread count.
    """
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write via a temp file in the target directory plus rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
