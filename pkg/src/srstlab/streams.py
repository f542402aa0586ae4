"""Named deterministic RNG streams.

Every random draw in the package comes from a stream identified by
(master_seed, purpose label, optional integer subkeys).  Streams for
different purposes are statistically independent, so changing how one
component consumes randomness never perturbs the draws seen by another.
Identical arguments always reproduce the identical stream.
"""

from __future__ import annotations

import hashlib

import numpy as np

# Purposes used by the training and evaluation flows.
STREAM_LABELS = (
    "data-split",
    "init",
    "batch-order",
    "attack-start",
    "augmentation",
)


def stream(master_seed: int, label: str, *subkeys: int) -> np.random.Generator:
    """Fresh generator for (master_seed, label, *subkeys).

    The label is hashed so that any string is a valid purpose name; the
    subkeys let callers split a purpose per epoch, per example block, or
    per evaluation pass without sharing state.
    """
    digest = hashlib.sha256(label.encode("utf-8")).digest()[:8]
    label_key = int.from_bytes(digest, "little")
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF, label_key]
    entropy.extend(int(k) & 0xFFFFFFFFFFFFFFFF for k in subkeys)
    return np.random.default_rng(np.random.SeedSequence(entropy))
