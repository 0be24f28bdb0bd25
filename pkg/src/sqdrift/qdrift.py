"""Randomised qDRIFT sequences for Krylov evolution times."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .hamiltonian import TermDistribution

SEQUENCE_STREAM = 0
SHOTS_STREAM = 1


def derive_seed(master_seed: int, krylov_index: int, randomization_id: int, stream: int) -> int:
    """64-bit seed for one (k, randomization, purpose) stream.

    Streams are independent children of ``master_seed`` keyed by position,
    so results do not depend on the order in which workers run.
    """
    ss = np.random.SeedSequence(master_seed, spawn_key=(krylov_index, randomization_id, stream))
    return int(ss.generate_state(1, np.uint64)[0])


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class QDriftSequence:
    """Ordered term indices of one sampled product ``V = prod_j exp(-i h_kj * angle)``."""

    term_indices: tuple[int, ...]
    step_angle: float
    krylov_index: int
    seed: int | None = None

    @property
    def n_steps(self) -> int:
        return len(self.term_indices)

    def to_json(self) -> dict:
        return {
            "krylov_index": self.krylov_index,
            "seed": self.seed,
            "n_steps": self.n_steps,
            "step_angle": self.step_angle,
            "term_indices": list(self.term_indices),
        }

    @classmethod
    def from_json(cls, doc: dict) -> QDriftSequence:
        seq = cls(tuple(int(i) for i in doc["term_indices"]), float(doc["step_angle"]),
                  int(doc["krylov_index"]), doc.get("seed"))
        if seq.n_steps != int(doc["n_steps"]):
            raise ValueError("n_steps does not match the number of term indices")
        return seq

    def to_line(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"))


def draw_indices(dist: TermDistribution, n_steps: int, rng) -> np.ndarray:
    """``n_steps`` i.i.d. term indices with probabilities ``c_i / lambda``."""
    if len(dist) == 0 or dist.lam <= 0:
        raise ValueError("cannot sample from an empty term distribution")
    u = as_generator(rng).random(n_steps)
    idx = np.searchsorted(dist.cumulative, u, side="right")
    return np.minimum(idx, len(dist) - 1)


def sample_sequence(dist: TermDistribution, n_steps: int, t_total: float, rng,
                    krylov_index: int = 0) -> QDriftSequence:
    """Sample one qDRIFT product approximating ``exp(-i H t_total)``.

    ``rng`` may be a ``numpy.random.Generator`` or an integer seed; only an
    integer seed is recorded on the returned sequence.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    seed = int(rng) if isinstance(rng, (int, np.integer)) else None
    idx = draw_indices(dist, n_steps, rng)
    return QDriftSequence(tuple(int(i) for i in idx), t_total * dist.lam / n_steps, krylov_index, seed)


@dataclass(frozen=True)
class KrylovSchedule:
    """Evolution-time multipliers ``k`` with total time ``k * t``.

    ``k`` is a raw multiplier; ``d`` only bounds it when given.
    """

    t: float
    k_values: tuple[int, ...]
    d: int | None = None

    def total_time(self, k: int) -> float:
        return k * self.t

    @property
    def total_times(self) -> tuple[float, ...]:
        return tuple(self.total_time(k) for k in self.k_values)


def make_schedule(t: float, k_values, d: int | None = None) -> KrylovSchedule:
    if t <= 0:
        raise ValueError(f"time step must be positive, got {t}")
    ks = tuple(sorted(set(int(k) for k in k_values)))
    if not ks or ks[0] < 0:
        raise ValueError(f"k values must be non-negative and non-empty, got {k_values}")
    if d is not None:
        if d < 1:
            raise ValueError(f"Krylov dimension must be >= 1, got {d}")
        bad = [k for k in ks if k >= d]
        if bad:
            raise ValueError(f"k values {bad} outside 0..{d - 1}")
    return KrylovSchedule(float(t), ks, d)
