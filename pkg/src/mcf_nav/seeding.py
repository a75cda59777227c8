"""Labelled random streams derived from a single master seed.

Every stochastic component asks for its own stream, so a component can be
replayed in isolation and adding draws in one place never shifts another.
"""

import hashlib

import numpy as np

ENV = "env"
POLICY_INIT = "policy-init"
EXPLORE = "explore"
UPDATE = "update"
EVAL = "eval"
PRIOR_MC = "prior-mc"
RANDOM_CONTROLLER = "random-controller"
DEMO = "demo"


def label_key(label: str) -> int:
    """Stable 32-bit integer for a stream label."""
    return int(hashlib.sha256(label.encode("utf-8")).hexdigest()[:8], 16)


def stream(seed: int, label: str, *extra: int) -> np.random.Generator:
    """Return the generator for ``label`` under master ``seed``.

    ``extra`` integers (episode index, member index, ...) select sub-streams.
    """
    entropy = [int(seed) & 0xFFFFFFFF, label_key(label), *(int(x) & 0xFFFFFFFF for x in extra)]
    return np.random.default_rng(np.random.SeedSequence(entropy))
