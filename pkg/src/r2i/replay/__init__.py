"""FIFO step-stream replay buffer."""

from .buffer import (
    SPILL_MAGIC,
    SPILL_VERSION,
    NotReady,
    ReplayBuffer,
    SequenceBatch,
    StepRecord,
    read_spill,
    spill_dtype,
)
