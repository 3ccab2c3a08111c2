"""Deterministic random-number streams.

Everything stochastic in the package draws from numpy's Philox generator, a
counter-based bit generator whose streams are split by key rather than by
call order.  A single user seed plus a small integer tag plus optional
per-item keys (a task index, or a digest of a task id) select a stream, so

* every task's synthetic draw is independent of how many tasks precede it,
* E-step initialization noise for a task does not depend on batch order,
* results are reproducible bit-for-bit from the seed alone.

Streams in use:

====  =======================================  =========================
tag   purpose                                  extra key
====  =======================================  =========================
1     synthetic generation of one task         task index
2     model initialization (theme seeding)     --
3     E-step initialization noise              64-bit digest of task id
4     batch-order shuffle in training          --
5     random demo models (CLI ``gen``)         --
====  =======================================  =========================
"""

import hashlib

import numpy as np

_MASK32 = 0xFFFFFFFF

TASK_STREAM = 1
INIT_STREAM = 2
ESTEP_STREAM = 3
SHUFFLE_STREAM = 4
RANDOM_MODEL_STREAM = 5


def _seed_words(seed: int) -> list[int]:
    # Negative or oversized seeds are folded into two 32-bit words.
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return [seed & _MASK32, (seed >> 32) & _MASK32]


def stream(seed: int, tag: int, *key: int) -> np.random.Generator:
    """Generator for the (seed, tag, key...) stream."""
    words = _seed_words(seed) + [int(tag)] + [int(k) & _MASK32 for k in key]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


def id_digest(task_id: str) -> tuple[int, int]:
    """Stable 64-bit digest of a task id, as two 32-bit words."""
    h = hashlib.sha256(task_id.encode("utf-8")).digest()
    return int.from_bytes(h[:4], "little"), int.from_bytes(h[4:8], "little")


def task_stream(seed: int, index: int) -> np.random.Generator:
    return stream(seed, TASK_STREAM, index)


def init_stream(seed: int) -> np.random.Generator:
    return stream(seed, INIT_STREAM)


def estep_stream(seed: int, task_id: str) -> np.random.Generator:
    return stream(seed, ESTEP_STREAM, *id_digest(task_id))


def shuffle_stream(seed: int) -> np.random.Generator:
    return stream(seed, SHUFFLE_STREAM)


def random_model_stream(seed: int) -> np.random.Generator:
    return stream(seed, RANDOM_MODEL_STREAM)
