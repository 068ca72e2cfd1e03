"""Counter-based random streams.

Every stochastic object in a run draws from its own Philox stream keyed by
(master_seed, stream_id).  Streams are therefore independent of execution
order and of the number of worker threads, which is what makes reruns
byte-identical.

Stream-id allocation (64-bit):
    (1 << 60) | index                     standalone field draws
    (2 << 60) | (group << 32) | replica   replica environments
    (3 << 60) | (group << 32) | replica   replica driving noise
`group` separates the rows of a sweep or scan so replicas never reuse a
stream across table entries.
"""

from __future__ import annotations

import numpy as np

FIELD_SPACE = 1 << 60
ENV_SPACE = 2 << 60
NOISE_SPACE = 3 << 60


def stream(master_seed: int, stream_id: int) -> np.random.Generator:
    """Philox generator for the given (master seed, stream id) pair."""
    key = np.array([np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64(stream_id & 0xFFFFFFFFFFFFFFFF)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def field_stream_id(index: int = 0) -> int:
    if not 0 <= index < (1 << 32):
        raise ValueError("field stream index out of range")
    return FIELD_SPACE | index


def env_stream_id(replica: int, group: int = 0) -> int:
    return _packed(ENV_SPACE, replica, group)


def noise_stream_id(replica: int, group: int = 0) -> int:
    return _packed(NOISE_SPACE, replica, group)


def _packed(space: int, replica: int, group: int) -> int:
    if not 0 <= replica < (1 << 32):
        raise ValueError("replica index out of range")
    if not 0 <= group < (1 << 28):
        raise ValueError("group index out of range")
    return space | (group << 32) | replica
