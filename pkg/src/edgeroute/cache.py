"""Versioned LRU cache of shortest-path results keyed by incident node."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

from .sssp import SsspResult

DEFAULT_CAPACITY = 1024


@dataclass
class CacheEntry:
    key: int
    result: SsspResult
    graph_version: int
    last_used: int = 0

    def __post_init__(self):
        if self.result.graph_version != self.graph_version:
            raise ValueError("entry version differs from its result's version")
        if self.result.source != self.key:
            raise ValueError("entry key differs from its result's source")


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    evictions: int = 0
    invalidations: int = 0

    @property
    def lookups(self) -> int:
        return self.hits + self.misses


class PathCache:
    """LRU map from incident node to its most recent :class:`SsspResult`.

    An entry is only returned for the exact graph version it was computed
    on; a stale entry found by :meth:`lookup` is dropped and counted as an
    invalidation.
    """

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.stats = CacheStats()
        self._entries: OrderedDict[int, CacheEntry] = OrderedDict()
        self._max_version = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: int) -> bool:
        return key in self._entries

    def lookup(self, key: int, current_version: int, now: int = 0) -> CacheEntry | None:
        entry = self._entries.get(key)
        if entry is None:
            self.stats.misses += 1
            return None
        if entry.graph_version != current_version:
            del self._entries[key]
            self.stats.invalidations += 1
            self.stats.misses += 1
            return None
        self._entries.move_to_end(key)
        entry.last_used = now
        self.stats.hits += 1
        return entry

    def insert(self, entry: CacheEntry) -> None:
        self._max_version = max(self._max_version, entry.graph_version)
        if entry.key in self._entries:
            del self._entries[entry.key]
        elif len(self._entries) >= self.capacity:
            self._entries.popitem(last=False)
            self.stats.evictions += 1
        self._entries[entry.key] = entry

    def invalidate_all(self, new_version: int) -> int:
        if new_version < self._max_version:
            raise ValueError(f"version regression: {new_version} < {self._max_version}")
        self._max_version = new_version
        stale = [k for k, e in self._entries.items() if e.graph_version < new_version]
        for k in stale:
            del self._entries[k]
        self.stats.invalidations += len(stale)
        return len(stale)
