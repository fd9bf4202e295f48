"""Embedded single-file persistence: an append-only JSON-lines event log.

Derived state lives in memory and is rebuilt by replaying the log, so the
service needs no external database. Writes are serialized by the caller's
lock; each append is flushed before the mutation is acknowledged.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterator


class StorageError(RuntimeError):
    pass


class EventStore:
    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._memory: list[dict] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.touch(exist_ok=True)

    def append(self, event: dict) -> None:
        line = json.dumps(event, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
        if self.path is None:
            self._memory.append(event)
            return
        try:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise StorageError(f"cannot append to {self.path}: {exc}") from exc

    def events(self) -> Iterator[dict]:
        if self.path is None:
            yield from self._memory
            return
        try:
            with self.path.open("r", encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        yield json.loads(line)
                    except json.JSONDecodeError as exc:
                        raise StorageError(f"{self.path}:{lineno}: corrupt event: {exc}") from None
        except OSError as exc:
            raise StorageError(f"cannot read {self.path}: {exc}") from exc
