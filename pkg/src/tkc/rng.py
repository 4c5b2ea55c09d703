"""Named, reproducible random substreams derived from one integer seed."""
import zlib

import numpy as np


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def substream(seed: int, name: str, *keys: int) -> np.random.Generator:
    """Return a generator for ``(seed, name, *keys)``.

    The same arguments always give the same stream; distinct names or keys give
    statistically independent streams (via ``SeedSequence`` spawn keys).
    """
    spawn_key = (_name_key(name),) + tuple(int(k) for k in keys)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=spawn_key)))


def torch_seed(seed: int, name: str, *keys: int) -> int:
    """A 63-bit integer for seeding ``torch.Generator`` from a named substream."""
    return int(substream(seed, name, *keys).integers(0, 2**63 - 1))
