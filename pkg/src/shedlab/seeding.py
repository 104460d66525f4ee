"""Named, counter-addressed random streams derived from one master seed.

Every consumer asks for ``stream(master, "name", i, j, ...)``.  The stream is
a pure function of its address, so the order in which streams are created
(or whether others are created at all) cannot change any draw.
"""
import zlib

import numpy as np


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def seed_sequence(master: int, name: str, *counters: int) -> np.random.SeedSequence:
    key = (_name_key(name),) + tuple(int(c) for c in counters)
    return np.random.SeedSequence(entropy=int(master), spawn_key=key)


def stream(master: int, name: str, *counters: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(master, name, *counters)))


def derive_seed(master: int, name: str, *counters: int) -> int:
    """A 63-bit integer seed, for APIs that want a plain int."""
    return int(seed_sequence(master, name, *counters).generate_state(2, np.uint32).view(np.uint64)[0] >> np.uint64(1))
