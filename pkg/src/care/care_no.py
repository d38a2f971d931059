"""Non-cooperative mechanism: every requester spends only its own budget.

Workers are split into reputation bands ``(eps^(h-1), eps^h]`` of their
reputation relative to the least reputable worker. Each band runs the
pricing mechanism on its own with the full budget profile, and one band's
outcome is realised uniformly at random.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Tuple

from . import rng
from .model import Instance, Outcome
from .pea import run_pea


@dataclass(frozen=True)
class BucketPartition:
    gamma: int
    buckets: Tuple[Tuple[int, ...], ...]

    def bucket_of(self, worker_id: int) -> int:
        for h, ids in enumerate(self.buckets, start=1):
            if worker_id in ids:
                return h
        raise KeyError(worker_id)


def band(rho: Fraction, epsilon: Fraction) -> int:
    """Smallest h >= 1 with rho <= epsilon**h (exact, no logarithms)."""
    h, bound = 1, Fraction(epsilon)
    while rho > bound:
        h += 1
        bound *= epsilon
    return h


def partition_buckets(inst: Instance) -> BucketPartition:
    eps = inst.epsilon
    if eps <= 1:
        raise ValueError("epsilon must exceed 1")
    gamma = band(inst.rho_max, eps)
    members: List[List[int]] = [[] for _ in range(gamma)]
    for w in sorted(inst.workers, key=lambda w: w.id):
        members[band(w.reputation / inst.v_min, eps) - 1].append(w.id)
    return BucketPartition(gamma, tuple(tuple(b) for b in members))


@dataclass
class OutcomeDistribution:
    partition: BucketPartition
    per_bucket: List[Outcome]

    @property
    def gamma(self) -> int:
        return self.partition.gamma

    @property
    def expected_reputation(self) -> Fraction:
        return sum((o.total_reputation for o in self.per_bucket), Fraction(0)) / self.gamma

    def expected_utility(self, worker) -> Fraction:
        return sum((o.utility(worker) for o in self.per_bucket), Fraction(0)) / self.gamma

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "buckets": [list(b) for b in self.partition.buckets],
            "per_bucket": [o.to_dict() for o in self.per_bucket],
            "expected_reputation": self.expected_reputation,
        }


def run_bucket(inst: Instance, partition: BucketPartition, h: int, payment_mode: str = "fast") -> Outcome:
    ids = set(partition.buckets[h - 1])
    workers = [w for w in inst.workers if w.id in ids]
    out = run_pea(workers, inst.requesters, inst.tau, payment_mode=payment_mode)
    out.diagnostics["bucket"] = h
    return out


def sample_bucket(seed: int, gamma: int) -> int:
    return int(rng.stream(seed, "care-no", "bucket").integers(1, gamma + 1))


def run_care_no(inst: Instance, mode: str = "sampled", seed: Optional[int] = None,
                payment_mode: str = "fast"):
    """``sampled`` returns the realised Outcome; ``expectation`` returns every band's outcome."""
    partition = partition_buckets(inst)
    if mode == "expectation":
        per_bucket = [run_bucket(inst, partition, h, payment_mode) for h in range(1, partition.gamma + 1)]
        return OutcomeDistribution(partition, per_bucket)
    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")
    h = sample_bucket(inst.seed if seed is None else seed, partition.gamma)
    out = run_bucket(inst, partition, h, payment_mode)
    out.diagnostics["gamma"] = partition.gamma
    return out
