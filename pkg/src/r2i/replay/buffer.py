"""FIFO step-stream replay with uniform fixed-length sequence sampling."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SPILL_MAGIC = b"R2IREPL\0"
SPILL_VERSION = 1


class NotReady(RuntimeError):
    """Raised by sample() until some stream holds at least one full sequence."""


@dataclass
class StepRecord:
    obs: np.ndarray
    action: int
    reward: float
    cont: float
    is_first: bool
    worker: int = 0


@dataclass
class SequenceBatch:
    obs: np.ndarray  # (B, L, raw) float32
    action: np.ndarray  # (B, L) int64
    reward: np.ndarray  # (B, L) float32
    cont: np.ndarray  # (B, L) float32
    is_first: np.ndarray  # (B, L) float32
    worker: np.ndarray  # (B,)
    offset: np.ndarray  # (B,) position of the first step within its stream at sampling time


def spill_dtype(obs_size: int) -> np.dtype:
    return np.dtype([
        ("worker", "<u4"),
        ("seq", "<u8"),
        ("action", "<i4"),
        ("reward", "<f4"),
        ("cont", "<f4"),
        ("is_first", "u1"),
        ("obs", "<f4", (obs_size,)),
    ])


def spill_header(obs_size: int) -> bytes:
    return SPILL_MAGIC + np.array([SPILL_VERSION, obs_size], dtype="<u4").tobytes()


def read_spill(path) -> np.ndarray:
    """Decode a spill file into a structured array (fields as in ``spill_dtype``)."""
    raw = Path(path).read_bytes()
    head = len(SPILL_MAGIC) + 8
    if raw[:len(SPILL_MAGIC)] != SPILL_MAGIC:
        raise ValueError(f"{path}: not a replay spill file")
    version, obs_size = np.frombuffer(raw[len(SPILL_MAGIC):head], dtype="<u4")
    if version != SPILL_VERSION:
        raise ValueError(f"{path}: spill version {version}, expected {SPILL_VERSION}")
    return np.frombuffer(raw[head:], dtype=spill_dtype(int(obs_size)))


class _Stream:
    """Growable column store for one worker; ``start`` marks the evicted prefix."""

    def __init__(self, obs_size: int, capacity: int = 1024):
        self.obs = np.zeros((capacity, obs_size), np.float32)
        self.action = np.zeros(capacity, np.int64)
        self.reward = np.zeros(capacity, np.float32)
        self.cont = np.zeros(capacity, np.float32)
        self.is_first = np.zeros(capacity, np.float32)
        self.seq = np.zeros(capacity, np.int64)
        self.start = 0
        self.end = 0

    def __len__(self) -> int:
        return self.end - self.start

    def _columns(self):
        return ("obs", "action", "reward", "cont", "is_first", "seq")

    def _make_room(self):
        n = len(self)
        cap = self.obs.shape[0]
        new_cap = cap * 2 if n >= cap // 2 else cap
        for name in self._columns():
            old = getattr(self, name)
            new = np.zeros((new_cap,) + old.shape[1:], old.dtype)
            new[:n] = old[self.start:self.end]
            setattr(self, name, new)
        self.start, self.end = 0, n

    def push(self, rec: StepRecord, seq: int) -> None:
        if self.end == self.obs.shape[0]:
            self._make_room()
        i = self.end
        self.obs[i] = rec.obs
        self.action[i] = rec.action
        self.reward[i] = rec.reward
        self.cont[i] = rec.cont
        self.is_first[i] = rec.is_first
        self.seq[i] = seq
        self.end += 1

    def oldest(self) -> int:
        return int(self.seq[self.start]) if len(self) else np.iinfo(np.int64).max


class ReplayBuffer:
    def __init__(self, obs_size: int, capacity: int = 10_000_000, spill_path=None):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.obs_size = obs_size
        self.capacity = capacity
        self.streams: dict[int, _Stream] = {}
        self.next_seq = 0
        self.size = 0
        self.evicted = 0
        self._lock = threading.Lock()
        self._spill = None
        self._spill_dtype = spill_dtype(obs_size)
        if spill_path is not None:
            path = Path(spill_path)
            fresh = not path.exists() or path.stat().st_size == 0
            self._spill = open(path, "ab")
            if fresh:
                self._spill.write(spill_header(obs_size))

    def append(self, worker_id: int, record: StepRecord) -> None:
        obs = np.asarray(record.obs, np.float32).reshape(-1)
        if obs.size != self.obs_size:
            raise ValueError(f"observation has {obs.size} entries, buffer expects {self.obs_size}")
        with self._lock:
            stream = self.streams.get(worker_id)
            if stream is None:
                stream = self.streams[worker_id] = _Stream(self.obs_size)
            seq = self.next_seq
            self.next_seq += 1
            stream.push(record, seq)
            self.size += 1
            while self.size > self.capacity:
                victim = min(self.streams.values(), key=_Stream.oldest)
                victim.start += 1
                self.size -= 1
                self.evicted += 1
            if self._spill is not None:
                row = np.zeros((), self._spill_dtype)
                row["worker"], row["seq"], row["action"] = worker_id, seq, record.action
                row["reward"], row["cont"], row["is_first"] = record.reward, record.cont, record.is_first
                row["obs"] = obs
                self._spill.write(row.tobytes())

    def ready(self, length: int) -> bool:
        with self._lock:
            return any(len(s) >= length for s in self.streams.values())

    def sample(self, batch: int, length: int, rng: np.random.Generator) -> SequenceBatch:
        """Uniform over all (stream, offset) windows of ``length`` contiguous steps."""
        with self._lock:
            ids = sorted(self.streams)
            counts = np.array([max(0, len(self.streams[w]) - length + 1) for w in ids], dtype=np.int64)
            total = int(counts.sum())
            if total == 0:
                raise NotReady(f"no stream holds {length} steps yet")
            picks = rng.integers(0, total, size=batch)
            bounds = np.cumsum(counts)
            which = np.searchsorted(bounds, picks, side="right")
            offsets = picks - (bounds[which] - counts[which])
            out = {k: [] for k in ("obs", "action", "reward", "cont", "is_first")}
            for w, off in zip(which, offsets):
                s = self.streams[ids[w]]
                lo = s.start + int(off)
                for k in out:
                    out[k].append(getattr(s, k)[lo:lo + length].copy())
            return SequenceBatch(
                **{k: np.stack(v) for k, v in out.items()},
                worker=np.array([ids[w] for w in which]),
                offset=offsets.astype(np.int64),
            )

    def stats(self) -> dict:
        with self._lock:
            return {
                "replay/size": self.size,
                "replay/streams": len(self.streams),
                "replay/evicted": self.evicted,
            }

    def flush(self) -> None:
        if self._spill is not None:
            self._spill.flush()

    def close(self) -> None:
        if self._spill is not None:
            self._spill.close()
            self._spill = None

    def state_dict(self) -> dict[str, np.ndarray]:
        with self._lock:
            out = {"next_seq": np.array(self.next_seq), "evicted": np.array(self.evicted)}
            for w, s in self.streams.items():
                for k in s._columns():
                    out[f"{w}/{k}"] = getattr(s, k)[s.start:s.end].copy()
            return out

    def load_state_dict(self, state) -> None:
        with self._lock:
            self.streams.clear()
            self.size = 0
            self.next_seq = int(state["next_seq"])
            self.evicted = int(state["evicted"])
            workers = sorted({int(k.split("/")[0]) for k in state if "/" in k})
            for w in workers:
                n = len(state[f"{w}/seq"])
                s = _Stream(self.obs_size, max(1024, 2 * n))
                for k in s._columns():
                    getattr(s, k)[:n] = state[f"{w}/{k}"]
                s.end = n
                self.streams[w] = s
                self.size += n
