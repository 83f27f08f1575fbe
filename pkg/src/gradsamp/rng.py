"""Deterministic seed splitting.

One master seed fans out into named streams (init, shuffle, noise, coin,
partition, selection, ...) so a single --seed reproduces an entire run.
Derivation goes through SHA-256 rather than Python's salted hash() so the
split is stable across processes and platforms.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


def derive(master: int, *parts: int | str) -> int:
    """Derive a 64-bit child seed from a master seed and a label path."""
    h = hashlib.sha256()
    h.update(str(int(master)).encode())
    for part in parts:
        h.update(b"/")
        h.update(str(part).encode())
    return int.from_bytes(h.digest()[:8], "little")


def generator(master: int, *parts: int | str) -> np.random.Generator:
    """A numpy Generator seeded from derive(master, *parts)."""
    return np.random.default_rng(derive(master, *parts))


@dataclass(frozen=True)
class SeedBundle:
    """Named seed streams for a single training run."""

    init: int
    shuffle: int
    noise: int
    coin: int

    @classmethod
    def from_master(cls, master: int) -> "SeedBundle":
        return cls(
            init=derive(master, "init"),
            shuffle=derive(master, "shuffle"),
            noise=derive(master, "noise"),
            coin=derive(master, "coin"),
        )


@dataclass(frozen=True)
class FedSeeds:
    """Named seed streams for a federated simulation."""

    init: int
    shuffle: int
    noise: int
    coin: int
    partition: int
    selection: int

    @classmethod
    def from_master(cls, master: int) -> "FedSeeds":
        return cls(
            init=derive(master, "init"),
            shuffle=derive(master, "shuffle"),
            noise=derive(master, "noise"),
            coin=derive(master, "coin"),
            partition=derive(master, "partition"),
            selection=derive(master, "selection"),
        )
