"""Fixed-capacity FIFO transition store with uniform sampling."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .envs import Transition

DUMP_MAGIC = b"DSAAREPL"
DUMP_VERSION = 1


@dataclass
class Batch:
    """Column view of sampled transitions."""

    x: np.ndarray
    a: np.ndarray
    x_next: np.ndarray
    r: np.ndarray
    done: np.ndarray
    s: np.ndarray
    s_goal: np.ndarray
    s_next: np.ndarray
    terminal: np.ndarray

    def __len__(self):
        return len(self.a)

    def __getitem__(self, i) -> Transition:
        return Transition(
            self.x[i], int(self.a[i]), self.x_next[i], float(self.r[i]), bool(self.done[i]),
            int(self.s[i]), int(self.s_goal[i]), int(self.s_next[i]), bool(self.terminal[i]),
        )


class ReplayBuffer:
    """Ring buffer; once full, each push overwrites the oldest entry.

    Storage is columnar and allocated on the first push, when the
    observation width becomes known.
    """

    def __init__(self, capacity: int = 100_000, rng: np.random.Generator | None = None):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.size = 0
        self.cursor = 0
        self._cols: dict[str, np.ndarray] | None = None

    def _allocate(self, obs_dim: int) -> None:
        n = self.capacity
        self._cols = {
            "x": np.zeros((n, obs_dim)),
            "a": np.zeros(n, dtype=np.int64),
            "x_next": np.zeros((n, obs_dim)),
            "r": np.zeros(n),
            "done": np.zeros(n, dtype=bool),
            "s": np.zeros(n, dtype=np.int64),
            "s_goal": np.zeros(n, dtype=np.int64),
            "s_next": np.zeros(n, dtype=np.int64),
            "terminal": np.zeros(n, dtype=bool),
        }

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> None:
        if self._cols is None:
            self._allocate(len(t.x))
        i = self.cursor
        cols = self._cols
        cols["x"][i] = t.x
        cols["a"][i] = t.a
        cols["x_next"][i] = t.x_next
        cols["r"][i] = t.r
        cols["done"][i] = t.done
        cols["s"][i] = t.s
        cols["s_goal"][i] = t.s_goal
        cols["s_next"][i] = t.s_next
        cols["terminal"][i] = t.terminal
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _oldest_first(self) -> np.ndarray:
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.size) + self.cursor) % self.capacity

    def take(self, idx) -> Batch:
        idx = np.asarray(idx)
        return Batch(**{k: v[idx] for k, v in self._cols.items()})

    def sample(self, batch_size: int, indices=None) -> Batch:
        """Uniform sample with replacement. ``indices`` (positions in insertion
        order, 0 = oldest) forces the draw."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        if indices is None:
            pos = self.rng.integers(0, self.size, size=batch_size)
        else:
            pos = np.asarray(indices)
        start = self.cursor if self.size == self.capacity else 0
        return self.take((pos + start) % self.capacity)

    def contents(self) -> list[Transition]:
        """All stored transitions, oldest first."""
        if self.size == 0:
            return []
        b = self.take(self._oldest_first())
        return [b[i] for i in range(len(b))]

    def all(self) -> Batch:
        return self.take(self._oldest_first())

    def clear(self) -> None:
        self.size = 0
        self.cursor = 0

    # binary dump: header then fixed-width little-endian records
    def _record_dtype(self, obs_dim: int) -> np.dtype:
        return np.dtype([
            ("x", "<f8", (obs_dim,)), ("a", "<i4"), ("x_next", "<f8", (obs_dim,)),
            ("r", "<f8"), ("done", "u1"), ("s", "<i4"), ("s_goal", "<i4"),
            ("s_next", "<i4"), ("terminal", "u1"),
        ])

    def dump(self, path) -> None:
        obs_dim = 0 if self._cols is None else self._cols["x"].shape[1]
        rec = np.zeros(self.size, dtype=self._record_dtype(obs_dim))
        if self.size:
            b = self.all()
            for name in rec.dtype.names:
                rec[name] = getattr(b, name)
        with open(path, "wb") as fh:
            fh.write(DUMP_MAGIC + struct.pack("<III", DUMP_VERSION, obs_dim, self.size))
            fh.write(rec.tobytes())

    @classmethod
    def load(cls, path, capacity: int | None = None, rng=None) -> "ReplayBuffer":
        raw = Path(path).read_bytes()
        if raw[:8] != DUMP_MAGIC:
            raise ValueError(f"{path} is not a transition dump")
        version, obs_dim, count = struct.unpack("<III", raw[8:20])
        if version != DUMP_VERSION:
            raise ValueError(f"unsupported dump version {version}")
        buf = cls(capacity or max(count, 1), rng)
        rec = np.frombuffer(raw[20:], dtype=buf._record_dtype(obs_dim), count=count)
        for row in rec:
            buf.push(Transition(
                row["x"].copy(), int(row["a"]), row["x_next"].copy(), float(row["r"]), bool(row["done"]),
                int(row["s"]), int(row["s_goal"]), int(row["s_next"]), bool(row["terminal"]),
            ))
        return buf
