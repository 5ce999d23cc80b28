"""Named seed derivation.

All randomness flows from one root seed.  Each consumer asks for a child seed
by name (``derive_seed(root, "split")``, ``derive_seed(root, "rf", 17)``), so
adding or reordering consumers never perturbs the others.
"""

import hashlib

import numpy as np


def derive_seed(root: int, *names) -> int:
    h = hashlib.sha256(str(int(root)).encode())
    for name in names:
        h.update(b"/")
        h.update(str(name).encode())
    return int.from_bytes(h.digest()[:8], "little")


def rng_for(root: int, *names) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *names))
