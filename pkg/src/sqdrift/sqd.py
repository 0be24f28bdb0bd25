"""Sample-based subspace diagonalisation over determinants.

Matrix elements follow the Slater-Condon rules on spin-orbitals in the
blocked ordering of :mod:`sqdrift.determinant`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .determinant import Determinant, bit_positions
from .hamiltonian import MolecularHamiltonian

DENSE_LIMIT = 2000
DEFAULT_TOL = 1e-8


class DavidsonError(RuntimeError):
    def __init__(self, message: str, best_residual: float, iterations: int):
        super().__init__(f"{message} (best residual {best_residual:.3e} after {iterations} iterations)")
        self.best_residual = best_residual
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class Subspace:
    """Sorted unique determinants of one particle sector.

    ``provenance`` maps each sampled determinant to the ``(k, rid)`` circuits
    that produced it; determinants added by recombination have none.
    """

    determinants: tuple[Determinant, ...]
    n_orb: int
    provenance: dict = field(default_factory=dict)
    multiplicity: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.determinants)) != len(self.determinants):
            raise ValueError("duplicate determinants in subspace")
        if len({d.sector for d in self.determinants}) > 1:
            raise ValueError("subspace mixes particle sectors")

    def __len__(self) -> int:
        return len(self.determinants)

    @property
    def dimension(self) -> int:
        return len(self.determinants)

    @property
    def sector(self) -> tuple[int, int] | None:
        return self.determinants[0].sector if self.determinants else None

    @property
    def recombined_dimension(self) -> int:
        """Size of the closure (observed alpha strings) x (observed beta strings)."""
        return len({d.alpha for d in self.determinants}) * len({d.beta for d in self.determinants})


def _sorted(dets, n_orb):
    return tuple(sorted(dets, key=lambda d: d.mode_bits(n_orb)))


def collect_subspace(batches, recombine: bool = False, truncate_to: int | None = None,
                     sector: tuple[int, int] | None = None, n_orb: int | None = None) -> Subspace:
    """Pool sampled determinants into a subspace.

    With ``sector`` set, determinants of other particle numbers are dropped;
    otherwise all batches must share one sector. ``truncate_to`` keeps the
    most frequently sampled determinants (ties by bitstring). ``recombine``
    then closes the set under alpha/beta string exchange.
    """
    batches = list(batches)
    if n_orb is None:
        if not batches:
            raise ValueError("n_orb is required when there are no batches")
        n_orb = batches[0].n_orb
    mult: dict = {}
    prov: dict = {}
    for b in batches:
        if b.n_orb != n_orb:
            raise ValueError("batches come from systems of different size")
        for det, m in b.counts.items():
            mult[det] = mult.get(det, 0) + m
            prov.setdefault(det, set()).add((b.krylov_index, b.randomization_id))
    if sector is not None:
        mult = {d: m for d, m in mult.items() if d.sector == tuple(sector)}
    else:
        sectors = {d.sector for d in mult}
        if len(sectors) > 1:
            raise ValueError(f"batches mix particle sectors {sorted(sectors)}")
    dets = list(mult)
    if truncate_to is not None:
        if truncate_to < 1:
            raise ValueError("truncate_to must be positive")
        dets.sort(key=lambda d: (-mult[d], d.mode_bits(n_orb)))
        dets = dets[:truncate_to]
    if recombine and dets:
        alphas = sorted({d.alpha for d in dets})
        betas = sorted({d.beta for d in dets})
        dets = [Determinant(a, b) for a in alphas for b in betas]
    return Subspace(
        _sorted(dets, n_orb),
        n_orb,
        {d: frozenset(prov.get(d, ())) for d in dets},
        {d: mult.get(d, 0) for d in dets},
    )


def subspace_from_determinants(dets, n_orb: int) -> Subspace:
    dets = _sorted(set(dets), n_orb)
    return Subspace(dets, n_orb, {d: frozenset() for d in dets}, {d: 0 for d in dets})


def subsample(subspace: Subspace, fraction: float, rng) -> Subspace:
    """Seeded random fraction of the determinants.

    The selection is a prefix of one random permutation, so for a fixed
    seed smaller fractions give nested subsets.
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    n = subspace.dimension
    order = rng.permutation(n)
    keep = max(1, int(round(fraction * n))) if n else 0
    dets = [subspace.determinants[i] for i in order[:keep]]
    return Subspace(_sorted(dets, subspace.n_orb), subspace.n_orb,
                    {d: subspace.provenance.get(d, frozenset()) for d in dets},
                    {d: subspace.multiplicity.get(d, 0) for d in dets})


# --------------------------------------------------------------------------
# Slater-Condon


@dataclass(frozen=True, eq=False)
class _SpinOrbitalIntegrals:
    n_orb: int
    h: np.ndarray  # (2n, 2n)
    g: np.ndarray  # antisymmetrised <PQ||RS>, (2n,)*4
    e_core: float


@lru_cache(maxsize=8)
def _spin_orbital_integrals(h: MolecularHamiltonian) -> _SpinOrbitalIntegrals:
    n = h.n_orb
    m = 2 * n
    spin = np.arange(m) >= n
    orb = np.arange(m) % n
    same = spin[:, None] == spin[None, :]
    h_so = np.where(same, h.h_one[orb[:, None], orb[None, :]], 0.0)
    # <PQ|RS> = (PR|QS) with spin of P = R, Q = S
    phys = h.eri[np.ix_(orb, orb, orb, orb)].transpose(0, 2, 1, 3)
    phys = phys * same[:, None, :, None] * same[None, :, None, :]
    g = phys - phys.transpose(0, 1, 3, 2)
    return _SpinOrbitalIntegrals(n, h_so, g, h.e_core)


def _ladder_sign(bits: int, annihilate: list[int], create: list[int]) -> int:
    """Sign of ``a+_{create[-1]} ... a+_{create[0]} a_{annihilate[-1]} ... a_{annihilate[0]}``."""
    sign = 1
    for p in annihilate + create:
        if (bits & ((1 << p) - 1)).bit_count() & 1:
            sign = -sign
        bits ^= 1 << p
    return sign


def _element(ints: _SpinOrbitalIntegrals, bra_bits: int, ket_bits: int) -> float:
    diff = bra_bits ^ ket_bits
    degree = diff.bit_count()
    if degree == 0:
        occ = bit_positions(ket_bits)
        o = np.asarray(occ)
        return float(ints.e_core + ints.h[o, o].sum() + 0.5 * ints.g[o[:, None], o[None, :], o[:, None], o[None, :]].sum())
    if degree == 2:
        (p,) = bit_positions(ket_bits & diff)
        (a,) = bit_positions(bra_bits & diff)
        rest = np.asarray(bit_positions(ket_bits & ~(1 << p)), dtype=int)
        value = ints.h[a, p] + ints.g[a, rest, p, rest].sum()
        return float(_ladder_sign(ket_bits, [p], [a]) * value)
    if degree == 4:
        p, q = bit_positions(ket_bits & diff)
        a, b = bit_positions(bra_bits & diff)
        # a+_a a+_b a_q a_p |ket>, coefficient <ab||pq>
        return float(_ladder_sign(ket_bits, [p, q], [b, a]) * ints.g[a, b, p, q])
    return 0.0


def hamiltonian_element(bra: Determinant, ket: Determinant, h: MolecularHamiltonian) -> float:
    """``<bra|H|ket>`` including the core energy on the diagonal."""
    if bra.sector != ket.sector:
        raise ValueError(f"sector mismatch {bra.sector} vs {ket.sector}")
    ints = _spin_orbital_integrals(h)
    n = h.n_orb
    return _element(ints, bra.mode_bits(n), ket.mode_bits(n))


def _connected(bits: int, n_orb: int):
    """Mode bitmasks reachable by one single or double same-sector excitation."""
    m = 2 * n_orb
    occ = bit_positions(bits)
    virt = [p for p in range(m) if not (bits >> p) & 1]
    spin = lambda p: p >= n_orb  # noqa: E731
    singles = [(bits ^ (1 << p) ^ (1 << a)) for p in occ for a in virt if spin(p) == spin(a)]
    doubles = []
    for i, p in enumerate(occ):
        for q in occ[i + 1:]:
            s_pq = sorted((spin(p), spin(q)))
            removed = bits ^ (1 << p) ^ (1 << q)
            for j, a in enumerate(virt):
                for b in virt[j + 1:]:
                    if sorted((spin(a), spin(b))) == s_pq:
                        doubles.append(removed | (1 << a) | (1 << b))
    return singles + doubles


def projected_hamiltonian(subspace: Subspace, h: MolecularHamiltonian) -> sp.csr_matrix:
    """Sparse symmetric projection of ``H`` onto the subspace determinants."""
    if subspace.n_orb != h.n_orb:
        raise ValueError("subspace and Hamiltonian sizes differ")
    ints = _spin_orbital_integrals(h)
    n = h.n_orb
    bits = [d.mode_bits(n) for d in subspace.determinants]
    index = {b: i for i, b in enumerate(bits)}
    rows, cols, vals = [], [], []
    for j, kb in enumerate(bits):
        rows.append(j)
        cols.append(j)
        vals.append(_element(ints, kb, kb))
        for bb in _connected(kb, n):
            i = index.get(bb)
            if i is not None and i < j:
                v = _element(ints, bb, kb)
                if v != 0.0:
                    rows += [i, j]
                    cols += [j, i]
                    vals += [v, v]
    dim = len(bits)
    return sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))


# --------------------------------------------------------------------------
# eigensolvers


def davidson(matvec, diagonal: np.ndarray, tol: float = DEFAULT_TOL, max_iter: int = 200,
             max_space: int = 40, x0: np.ndarray | None = None):
    """Lowest eigenpair of a symmetric operator by Davidson iteration.

    Single-vector blocks with the diagonal preconditioner
    ``r / (theta - diag)``; the search space restarts from the current
    Ritz vector once it reaches ``max_space`` vectors.

    Returns ``(value, vector, iterations, residual_norm)``.
    """
    n = len(diagonal)
    if x0 is None:
        x0 = np.zeros(n)
        x0[int(np.argmin(diagonal))] = 1.0
    v = x0 / np.linalg.norm(x0)
    basis = [v]
    images = [matvec(v)]
    best = np.inf
    for it in range(1, max_iter + 1):
        vmat = np.array(basis).T
        amat = np.array(images).T
        small = vmat.T @ amat
        theta_all, s_all = np.linalg.eigh((small + small.T) / 2)
        theta, s = theta_all[0], s_all[:, 0]
        x = vmat @ s
        ax = amat @ s
        r = ax - theta * x
        res = float(np.linalg.norm(r))
        best = min(best, res)
        if res < tol:
            return float(theta), x / np.linalg.norm(x), it, res
        denom = theta - diagonal
        denom = np.where(np.abs(denom) < 1e-10, np.copysign(1e-10, denom), denom)
        t = r / denom
        if len(basis) >= max_space:
            norm = np.linalg.norm(x)
            basis, images = [x / norm], [ax / norm]
        for _ in range(2):
            t -= np.array(basis).T @ (np.array(basis) @ t)
        tn = np.linalg.norm(t)
        if tn < 1e-12:
            # preconditioner stalled; fall back to the plain residual direction
            t = r - np.array(basis).T @ (np.array(basis) @ r)
            tn = np.linalg.norm(t)
            if tn < 1e-14:
                break
        t /= tn
        basis.append(t)
        images.append(matvec(t))
    raise DavidsonError("Davidson did not converge", best, max_iter)


@dataclass(frozen=True, eq=False)
class SubspaceResult:
    energy: float
    ground_vector: np.ndarray
    dimension: int
    solver_iterations: int
    residual_norm: float
    determinants: tuple[Determinant, ...]
    n_orb: int
    recombined_dimension: int

    def top_coefficients(self, count: int = 10) -> list[tuple[str, float]]:
        order = np.lexsort((np.arange(self.dimension), -np.abs(self.ground_vector)))[:count]
        return [(self.determinants[i].to_hex(self.n_orb), float(self.ground_vector[i])) for i in order]

    def to_json(self, top: int = 10) -> dict:
        return {
            "energy": self.energy,
            "dimension": self.dimension,
            "recombined_dimension": self.recombined_dimension,
            "n_iterations": self.solver_iterations,
            "residual": self.residual_norm,
            "top_coefficients": [list(pair) for pair in self.top_coefficients(top)],
        }


def _fix_sign(v: np.ndarray) -> np.ndarray:
    """Deterministic phase: largest-magnitude component positive."""
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


def diagonalize(subspace: Subspace, h: MolecularHamiltonian, tol: float = DEFAULT_TOL,
                dense_limit: int = DENSE_LIMIT, max_iter: int = 200) -> SubspaceResult:
    """Lowest eigenpair of ``H`` projected onto ``subspace``."""
    if subspace.dimension == 0:
        raise ValueError("cannot diagonalise an empty subspace")
    mat = projected_hamiltonian(subspace, h)
    dim = subspace.dimension
    if dim <= dense_limit:
        w, vecs = scipy.linalg.eigh(mat.toarray(), subset_by_index=[0, 0])
        energy, vec, iters = float(w[0]), vecs[:, 0], 1
    else:
        energy, vec, iters, _ = davidson(mat.dot, mat.diagonal(), tol=tol, max_iter=max_iter)
    vec = _fix_sign(vec / np.linalg.norm(vec))
    residual = float(np.linalg.norm(mat @ vec - energy * vec))
    if residual >= tol:
        raise DavidsonError("eigenvector residual above tolerance", residual, iters)
    return SubspaceResult(energy, vec, dim, iters, residual, subspace.determinants, subspace.n_orb,
                          subspace.recombined_dimension)


def convergence_row(fraction: float, result: SubspaceResult, reference: float | None = None) -> dict:
    row = {"subsample_fraction": fraction, "dimension": result.dimension,
           "recombined_dimension": result.recombined_dimension, "energy": result.energy}
    row["energy_error"] = None if reference is None else result.energy - reference
    return row
