"""Jordan-Wigner mapping of grouped excitations and mode-to-qubit layouts.

Pauli operators are held as ``(x, z)`` bitmask pairs over qubits. The word
``(x, z)`` denotes ``i^{|x & z|} X^x Z^z``, i.e. the tensor product with a
``Y`` wherever both bits are set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import permutations

import numpy as np

from .determinant import Determinant
from .hamiltonian import ExcitationTerm, TermDistribution
from .qdrift import QDriftSequence

EXHAUSTIVE_LIMIT = 8
_CUT = 1e-14


@dataclass(frozen=True)
class IndexMap:
    """Bijection ``perm[mode] = qubit`` over all spin-orbital modes."""

    perm: tuple[int, ...]

    def __post_init__(self):
        perm = tuple(int(p) for p in self.perm)
        if sorted(perm) != list(range(len(perm))):
            raise ValueError(f"not a permutation: {perm}")
        object.__setattr__(self, "perm", perm)

    @classmethod
    def identity(cls, n_modes: int) -> IndexMap:
        return cls(tuple(range(n_modes)))

    @property
    def n_modes(self) -> int:
        return len(self.perm)

    @property
    def is_identity(self) -> bool:
        return all(p == i for i, p in enumerate(self.perm))

    def inverse(self) -> IndexMap:
        inv = [0] * len(self.perm)
        for mode, qubit in enumerate(self.perm):
            inv[qubit] = mode
        return IndexMap(tuple(inv))

    def modes_to_qubits(self, bits):
        """Move bit ``mode`` to bit ``perm[mode]``; works on ints and integer arrays."""
        return _move_bits(bits, self.perm)

    def qubits_to_modes(self, bits):
        return _move_bits(bits, self.inverse().perm)


def _move_bits(bits, targets):
    if isinstance(bits, np.ndarray):
        out = np.zeros_like(bits)
        for src, dst in enumerate(targets):
            out |= ((bits >> src) & 1) << dst
        return out
    out = 0
    for src, dst in enumerate(targets):
        out |= ((bits >> src) & 1) << dst
    return out


@dataclass(frozen=True)
class PauliString:
    """A real multiple of a Pauli word; ``word[q]`` acts on qubit ``q``."""

    word: str
    coefficient: float = 1.0
    x_mask: int = field(init=False, repr=False, compare=False)
    z_mask: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        x = z = 0
        for q, letter in enumerate(self.word):
            if letter in "XY":
                x |= 1 << q
            if letter in "ZY":
                z |= 1 << q
            if letter not in "IXYZ":
                raise ValueError(f"invalid Pauli letter {letter!r}")
        if not np.isfinite(self.coefficient):
            raise ValueError("Pauli coefficient must be finite")
        object.__setattr__(self, "x_mask", x)
        object.__setattr__(self, "z_mask", z)

    @property
    def n_qubits(self) -> int:
        return len(self.word)

    @property
    def weight(self) -> int:
        return len(self.word) - self.word.count("I")

    @property
    def is_identity(self) -> bool:
        return self.weight == 0

    @classmethod
    def from_masks(cls, x: int, z: int, n_qubits: int, coefficient: float) -> PauliString:
        letters = []
        for q in range(n_qubits):
            letters.append("IXZY"[((x >> q) & 1) | (((z >> q) & 1) << 1)])
        return cls("".join(letters), coefficient)


# --------------------------------------------------------------------------
# symbolic Pauli algebra on {(x, z): complex}


def _popcount(v: int) -> int:
    return v.bit_count()


def pauli_product(a: dict, b: dict) -> dict:
    out: dict = {}
    for (x1, z1), c1 in a.items():
        for (x2, z2), c2 in b.items():
            x, z = x1 ^ x2, z1 ^ z2
            power = (_popcount(x1 & z1) + _popcount(x2 & z2) - _popcount(x & z)) % 4
            phase = (1, 1j, -1, -1j)[power] * (-1 if _popcount(z1 & x2) & 1 else 1)
            out[(x, z)] = out.get((x, z), 0.0) + phase * c1 * c2
    return out


def pauli_sum(a: dict, b: dict, scale: complex = 1.0) -> dict:
    out = dict(a)
    for key, c in b.items():
        out[key] = out.get(key, 0.0) + scale * c
    return out


def _prune(op: dict) -> dict:
    return {k: c for k, c in op.items() if abs(c) > _CUT}


def annihilation(qubit: int) -> dict:
    """``a`` on the mode sitting at ``qubit``: Z chain below, then (X + iY)/2."""
    chain = (1 << qubit) - 1
    bit = 1 << qubit
    # X_q = word(bit, 0); Y_q = word(bit, bit)
    return {(bit, chain): 0.5, (bit, chain | bit): 0.5j}


def creation(qubit: int) -> dict:
    chain = (1 << qubit) - 1
    bit = 1 << qubit
    return {(bit, chain): 0.5, (bit, chain | bit): -0.5j}


def factor_operator(factor: tuple[int, int], layout: IndexMap) -> dict:
    i, j = factor
    return dict(_qubit_factor(layout.perm[i], layout.perm[j]))


@lru_cache(maxsize=None)
def _qubit_factor(qi: int, qj: int) -> tuple:
    if qi == qj:
        return tuple(_prune(pauli_product(creation(qi), annihilation(qi))).items())
    hop = pauli_sum(pauli_product(creation(qi), annihilation(qj)),
                    pauli_product(creation(qj), annihilation(qi)))
    return tuple(_prune(hop).items())


def term_operator(term: ExcitationTerm, layout: IndexMap) -> dict:
    """Symbolic Pauli expansion of the normalised ``h_i``."""
    op = {(0, 0): term.scale}
    for f in term.factors:
        op = _prune(pauli_product(op, factor_operator(f, layout)))
    return op


def map_excitation_jw(term: ExcitationTerm, layout: IndexMap) -> list[PauliString]:
    """Pauli strings of ``h_i`` after cancellation, identity part included.

    The returned strings mutually commute, so rotating by each in turn
    reproduces ``exp(-i theta h_i)`` exactly.
    """
    return list(_mapped(term, layout))


@lru_cache(maxsize=1 << 16)
def _mapped(term: ExcitationTerm, layout: IndexMap) -> tuple[PauliString, ...]:
    op = term_operator(term, layout)
    out = []
    for (x, z), c in sorted(op.items()):
        if abs(c.imag) > 1e-12:
            raise AssertionError(f"non-Hermitian Pauli coefficient {c} for {term}")
        out.append(PauliString.from_masks(x, z, layout.n_modes, float(c.real)))
    return tuple(out)


def non_identity(strings: list[PauliString]) -> list[PauliString]:
    return [s for s in strings if not s.is_identity]


# --------------------------------------------------------------------------
# layout optimisation


def penalized_pairs(batch) -> dict[tuple[int, int], int]:
    """Multiplicity of every mode pair joined by a Jordan-Wigner Z chain."""
    pairs: dict = {}
    for term in batch:
        for a, b in term.excitation_pairs:
            key = (min(a, b), max(a, b))
            pairs[key] = pairs.get(key, 0) + 1
    return pairs


def layout_objective(layout: IndexMap, pairs: dict) -> int:
    return sum(w * abs(layout.perm[a] - layout.perm[b]) for (a, b), w in pairs.items())


def total_pauli_weight(batch, layout: IndexMap) -> int:
    """Summed weight of the non-identity strings of every term in ``batch``."""
    cache: dict = {}
    total = 0
    for term in batch:
        key = term.signature()
        if key not in cache:
            cache[key] = sum(_popcount(x | z) for x, z in term_operator(term, layout))
        total += cache[key]
    return total


def _pair_arrays(modes, pairs):
    index = {m: i for i, m in enumerate(modes)}
    a = np.array([index[u] for u, _ in pairs], dtype=int)
    b = np.array([index[v] for _, v in pairs], dtype=int)
    w = np.array(list(pairs.values()), dtype=float)
    return a, b, w


@lru_cache(maxsize=EXHAUSTIVE_LIMIT + 1)
def _all_rankings(k: int) -> np.ndarray:
    cand = np.array(list(permutations(range(k))), dtype=np.int8).reshape(-1, k)
    cand.setflags(write=False)
    return cand


def _exhaustive(k, a, b, w):
    """Rank assignment (ranks[i] = slot of mode i) minimising the objective."""
    cand = _all_rankings(k)
    cost = (np.abs(cand[:, a] - cand[:, b]) * w).sum(axis=1)
    best = int(np.argmin(cost))  # first minimum: lexicographically smallest
    return cand[best].astype(np.int64)


def _greedy(k, a, b, w):
    conn = np.zeros((k, k))
    np.add.at(conn, (a, b), w)
    np.add.at(conn, (b, a), w)
    mass = conn.sum(axis=1)
    order = sorted(range(k), key=lambda i: (-mass[i], i))
    line = [order[0]]
    placed = {order[0]}
    while len(line) < k:
        rest = [i for i in range(k) if i not in placed]
        nxt = max(rest, key=lambda i: (conn[i, list(placed)].sum(), mass[i], -i))
        ranks = {m: r for r, m in enumerate(line)}
        left = sum(conn[nxt, m] * (ranks[m] + 1) for m in line)
        right = sum(conn[nxt, m] * (len(line) - ranks[m]) for m in line)
        if left < right:
            line.insert(0, nxt)
        else:
            line.append(nxt)
        placed.add(nxt)
    ranks = np.empty(k, dtype=np.int64)
    ranks[line] = np.arange(k)
    return ranks


def _two_opt(ranks, a, b, w):
    k = len(ranks)
    ii, jj = np.triu_indices(k, 1)
    ranks = ranks.copy()
    cost = float((np.abs(ranks[a] - ranks[b]) * w).sum())
    while True:
        trial = np.repeat(ranks[None, :], len(ii), axis=0)
        rows = np.arange(len(ii))
        trial[rows, ii], trial[rows, jj] = ranks[jj], ranks[ii]
        costs = (np.abs(trial[:, a] - trial[:, b]) * w).sum(axis=1)
        best = int(np.argmin(costs))
        if costs[best] >= cost - 1e-12:
            return ranks
        ranks, cost = trial[best], float(costs[best])


def optimize_layout(batch, n_modes: int) -> IndexMap:
    """Mode-to-qubit permutation shortening the Z chains of ``batch``.

    The modes touched by hopping pairs are packed into one contiguous block
    of qubits and ordered to minimise the summed pair distance (exhaustively
    up to ``EXHAUSTIVE_LIMIT`` modes, else greedy placement plus pairwise
    swaps). The identity is returned whenever it is at least as good, either
    by that distance or by the total mapped Pauli weight.
    """
    batch = list(batch)
    if not batch:
        raise ValueError("cannot optimise a layout for an empty batch")
    identity = IndexMap.identity(n_modes)
    pairs = penalized_pairs(batch)
    if not pairs:
        return identity
    modes = sorted({m for pair in pairs for m in pair})
    k = len(modes)
    a, b, w = _pair_arrays(modes, pairs)
    if k <= EXHAUSTIVE_LIMIT:
        ranks = _exhaustive(k, a, b, w)
    else:
        ranks = _two_opt(_greedy(k, a, b, w), a, b, w)

    offset = min(modes[0], n_modes - k)
    perm = [0] * n_modes
    for i, m in enumerate(modes):
        perm[m] = offset + int(ranks[i])
    block = set(range(offset, offset + k))
    free = iter(q for q in range(n_modes) if q not in block)
    penal = set(modes)
    for m in range(n_modes):
        if m not in penal:
            perm[m] = next(free)
    candidate = IndexMap(tuple(perm))

    if layout_objective(candidate, pairs) >= layout_objective(identity, pairs):
        return identity
    if total_pauli_weight(batch, candidate) > total_pauli_weight(batch, identity):
        return identity
    return candidate


# --------------------------------------------------------------------------
# circuits


@dataclass(frozen=True, eq=False)
class CompiledCircuit:
    """Ordered Pauli rotations ``exp(-i angle P)`` after basis-state preparation."""

    rotations: tuple[tuple[PauliString, float], ...]
    n_qubits: int
    initial_occupation: Determinant
    layout: IndexMap

    @property
    def n_orb(self) -> int:
        return self.n_qubits // 2

    @property
    def initial_bits(self) -> int:
        """Qubit bitmask of the reference determinant under the layout."""
        return self.layout.modes_to_qubits(self.initial_occupation.mode_bits(self.n_orb))

    @property
    def pauli_weight(self) -> int:
        return sum(p.weight for p, _ in self.rotations)

    def to_json(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "initial_occupation": format(self.initial_bits, "x"),
            "layout": list(self.layout.perm),
            "rotations": [[p.word, angle] for p, angle in self.rotations],
        }

    @classmethod
    def from_json(cls, doc: dict) -> CompiledCircuit:
        n = int(doc["n_qubits"])
        layout = IndexMap(tuple(doc["layout"]))
        bits = layout.qubits_to_modes(int(doc["initial_occupation"], 16))
        rots = tuple((PauliString(w), float(angle)) for w, angle in doc["rotations"])
        return cls(rots, n, Determinant.from_mode_bits(bits, n // 2), layout)

    def to_line(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"))


def compile_sequence(seq: QDriftSequence, dist: TermDistribution, layout: IndexMap,
                     hf_occupation: Determinant) -> CompiledCircuit:
    """Concatenate, in sequence order, the commuting rotations of each sampled step.

    A string ``c P`` of ``h_i`` becomes the rotation ``exp(-i * step_angle * c * P)``.
    Identity strings are kept as global-phase rotations so the circuit equals
    the exact product of step unitaries.
    """
    if layout.n_modes != dist.n_modes:
        raise ValueError(f"layout covers {layout.n_modes} modes, Hamiltonian has {dist.n_modes}")
    if any(i < 0 or i >= len(dist) for i in seq.term_indices):
        raise ValueError("sequence indexes terms outside the distribution")
    cache: dict[int, list[PauliString]] = {}
    rotations = []
    for i in seq.term_indices:
        if i not in cache:
            cache[i] = map_excitation_jw(dist.terms[i], layout)
        for p in cache[i]:
            rotations.append((PauliString(p.word), seq.step_angle * p.coefficient))
    return CompiledCircuit(tuple(rotations), dist.n_modes, hf_occupation, layout)


def sequence_batch(seq: QDriftSequence, dist: TermDistribution) -> list[ExcitationTerm]:
    return [dist.terms[i] for i in seq.term_indices]
