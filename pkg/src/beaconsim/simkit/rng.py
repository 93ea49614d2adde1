"""Named deterministic random streams.

One root seed fans out into independent streams keyed by name, so adding a
node or drawing more from one stream never perturbs another. Stream seeds
are derived by hashing the names, which keeps them stable across runs and
platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_seed(root_seed: int, *names) -> int:
    key = "/".join(str(n) for n in names) + f"#{root_seed}"
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def stream(root_seed: int, *names) -> np.random.Generator:
    """Independent generator for (root_seed, names...)."""
    return np.random.default_rng(stream_seed(root_seed, *names))
