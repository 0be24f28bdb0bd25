"""Statevector simulation of Pauli-rotation circuits and shot sampling.

Basis index bit ``q`` is the state of qubit ``q`` (little-endian); an
occupied mode is ``|1>``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .determinant import Determinant
from .f2q import CompiledCircuit, IndexMap, PauliString

MAX_QUBITS = 26
NORM_TOLERANCE = 1e-6
CACHE_QUBITS = 14  # per-word sign caches stay below ~64 MB up to here


class Statevector:
    """Mutable ``2**n`` amplitude vector owned by a single circuit run."""

    def __init__(self, amplitudes: np.ndarray, n_qubits: int | None = None):
        amplitudes = np.asarray(amplitudes, dtype=complex)
        n = n_qubits if n_qubits is not None else int(np.log2(len(amplitudes)))
        if amplitudes.shape != (1 << n,):
            raise ValueError(f"expected {1 << n} amplitudes, got {amplitudes.shape}")
        self.amplitudes = amplitudes
        self.n_qubits = n

    def copy(self) -> Statevector:
        return Statevector(self.amplitudes.copy(), self.n_qubits)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def expectation_diagonal(self, values: np.ndarray) -> float:
        return float(np.dot(self.probabilities(), values))


@lru_cache(maxsize=64)
def _indices(n_qubits: int) -> np.ndarray:
    idx = np.arange(1 << n_qubits, dtype=np.int64)
    idx.setflags(write=False)
    return idx


@lru_cache(maxsize=512)
def _low_half(n_qubits: int, bit: int) -> np.ndarray:
    idx = _indices(n_qubits)
    lo = idx[(idx >> bit) & 1 == 0]
    lo.setflags(write=False)
    return lo


def _parity_sign(indices: np.ndarray, mask: int) -> np.ndarray:
    return 1 - 2 * (np.bitwise_count(indices & mask) & 1).astype(np.int8)


def prepare_reference(n_qubits: int, occupation: Determinant, layout: IndexMap | None = None) -> Statevector:
    """Computational basis state of ``occupation`` (canonical modes) under ``layout``."""
    if n_qubits > MAX_QUBITS:
        raise ValueError(f"{n_qubits} qubits exceed the memory cap of {MAX_QUBITS}")
    bits = occupation.mode_bits(n_qubits // 2)
    if bits >> n_qubits:
        raise ValueError(f"occupation {bits:#x} does not fit in {n_qubits} qubits")
    if layout is not None:
        bits = layout.modes_to_qubits(bits)
    amps = np.zeros(1 << n_qubits, dtype=complex)
    amps[bits] = 1.0
    return Statevector(amps, n_qubits)


def apply_pauli_rotation(state: Statevector, p: PauliString, angle: float) -> Statevector:
    """In place ``state <- exp(-i angle P) state``; returns ``state``."""
    if p.n_qubits != state.n_qubits:
        raise ValueError(f"Pauli word on {p.n_qubits} qubits, state has {state.n_qubits}")
    _rotate(state.amplitudes, state.n_qubits, p.x_mask, p.z_mask, angle)
    return state


def _rotate(psi: np.ndarray, n: int, x: int, z: int, angle: float) -> None:
    if angle == 0.0:
        return
    c, s = np.cos(angle), np.sin(angle)
    y_phase = (1, 1j, -1, -1j)[(x & z).bit_count() % 4]
    if x == 0:
        if z == 0:
            psi *= np.exp(-1j * angle)
            return
        sign = _parity_sign(_indices(n), z)
        psi *= np.where(sign > 0, np.exp(-1j * angle), np.exp(1j * angle))
        return
    lo = _low_half(n, x.bit_length() - 1)
    hi = lo ^ x
    sign_hi, sign_lo = _signs(n, x, z) if n <= CACHE_QUBITS else (_parity_sign(hi, z), _parity_sign(lo, z))
    a_lo = psi[lo]
    a_hi = psi[hi]
    k = -1j * s * y_phase
    # P|b> = y_phase * (-1)^{|z & b|} |b ^ x>
    psi[lo] = c * a_lo + k * sign_hi * a_hi
    psi[hi] = c * a_hi + k * sign_lo * a_lo


@lru_cache(maxsize=4096)
def _signs(n: int, x: int, z: int):
    lo = _low_half(n, x.bit_length() - 1)
    out = (_parity_sign(lo ^ x, z), _parity_sign(lo, z))
    for a in out:
        a.setflags(write=False)
    return out


def run_circuit(circuit: CompiledCircuit, check_norm: bool = True) -> Statevector:
    state = prepare_reference(circuit.n_qubits, circuit.initial_occupation, circuit.layout)
    psi, n = state.amplitudes, state.n_qubits
    for p, angle in circuit.rotations:
        _rotate(psi, n, p.x_mask, p.z_mask, angle)
    if check_norm and abs(state.norm() - 1.0) > 1e-9:
        raise AssertionError(f"norm drifted to {state.norm()!r}")
    return state


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """Measured determinants of one circuit, in canonical mode order."""

    counts: dict
    krylov_index: int
    randomization_id: int
    shots: int
    n_orb: int

    def __post_init__(self):
        if sum(self.counts.values()) != self.shots:
            raise ValueError("multiplicities do not sum to the shot count")

    def to_json(self) -> dict:
        ordered = sorted(self.counts.items(), key=lambda kv: kv[0].mode_bits(self.n_orb))
        return {
            "k": self.krylov_index,
            "rid": self.randomization_id,
            "shots": self.shots,
            "counts": {det.to_hex(self.n_orb): int(m) for det, m in ordered},
        }

    @classmethod
    def from_json(cls, doc: dict, n_orb: int) -> SampleBatch:
        counts = {Determinant.from_hex(h, n_orb): int(m) for h, m in doc["counts"].items()}
        return cls(counts, int(doc["k"]), int(doc["rid"]), int(doc["shots"]), n_orb)

    def to_line(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"))


def sample_bitstrings(state: Statevector, shots: int, rng, layout: IndexMap,
                      expected_sector: tuple[int, int] | None = None,
                      krylov_index: int = 0, randomization_id: int = 0) -> SampleBatch:
    """Multinomial shot sampling from ``|amplitude|^2``.

    Qubit bitstrings are mapped back through ``layout`` to canonical modes.
    If ``expected_sector`` is given every outcome must lie in it.
    """
    norm = state.norm()
    if abs(norm - 1.0) > NORM_TOLERANCE:
        raise ValueError(f"state norm {norm} deviates from 1 by more than {NORM_TOLERANCE}")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    probs = state.probabilities()
    probs /= probs.sum()
    draws = rng.multinomial(shots, probs)
    hit = np.nonzero(draws)[0]
    mode_bits = layout.qubits_to_modes(hit.astype(np.int64))
    n_orb = state.n_qubits // 2
    counts = {}
    for bits, m in zip(mode_bits.tolist(), draws[hit].tolist()):
        det = Determinant.from_mode_bits(bits, n_orb)
        if expected_sector is not None and det.sector != tuple(expected_sector):
            raise AssertionError(
                f"sampled {det.to_hex(n_orb)} in sector {det.sector}, expected {expected_sector}"
            )
        counts[det] = m
    return SampleBatch(counts, krylov_index, randomization_id, shots, n_orb)
