"""Engine lifecycle: builds snapshots from artifacts and hot-swaps the
active pointer without interrupting queries.

Two locks: one serializes builds, the other protects the pointer. The
snapshot is fully built outside the pointer lock; the swap itself is a
short exclusive section, the generation counter moves only on success,
and in-flight queries keep whatever snapshot they started with.
"""

from __future__ import annotations

import threading
from collections import Counter

from .embedding import tokenize
from .engine import EngineSnapshot
from .indexstore import load_active


class EngineManager:
    def __init__(self, embedder):
        self._embedder = embedder
        self._build_lock = threading.Lock()
        self._pointer_lock = threading.Lock()
        self._snapshot: EngineSnapshot | None = None
        self._generation = 0

    def reload(self, artifact_root) -> EngineSnapshot:
        """Build a snapshot from root/active and publish it.

        Any failure propagates and leaves the published snapshot and
        generation untouched.
        """
        with self._build_lock:
            loaded = load_active(artifact_root)
            loaded.validate(self._embedder.identity)
            vocab: Counter = Counter()
            for record in loaded.records:
                vocab.update(tokenize(record.text))
            matrix = loaded.matrix
            matrix.flags.writeable = False
            with self._pointer_lock:
                generation = self._generation + 1
                snapshot = EngineSnapshot(
                    matrix=matrix,
                    records=tuple(loaded.records),
                    lexical=loaded.lexical,
                    vocab=dict(vocab),
                    generation=generation,
                    embedder_id=loaded.meta["embedder_id"],
                )
                self._generation = generation
                self._snapshot = snapshot
        return snapshot

    def snapshot(self) -> EngineSnapshot:
        with self._pointer_lock:
            if self._snapshot is None:
                raise RuntimeError("no engine snapshot published yet")
            return self._snapshot

    @property
    def generation(self) -> int:
        with self._pointer_lock:
            return self._generation
