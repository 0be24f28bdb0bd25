"""Brute-force references: dense Hamiltonians, FCI, exact propagation, Krylov matrices.

Nothing here reuses the Slater-Condon code of :mod:`sqdrift.sqd` or the
Pauli algebra of :mod:`sqdrift.f2q`; operators are assembled by applying
fermionic ladder operators directly to occupation bitstrings.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache
from itertools import product

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .bounds import SpectralData
from .determinant import Determinant, hartree_fock, sector_determinants
from .hamiltonian import ExcitationTerm, MolecularHamiltonian, TermDistribution

DENSE_EIG_LIMIT = 4000
SECTOR_CAP = 1_000_000
FOCK_QUBIT_CAP = 14


# --------------------------------------------------------------------------
# ladder operators on explicit bases


def _ladder_matrix(basis: np.ndarray, ops, positions=None) -> sp.csr_matrix:
    """Matrix of an ordered ladder-operator product on a sorted basis of bitstrings.

    ``ops`` lists ``(mode, dagger)`` pairs, rightmost applied first as in
    the written product. ``positions[mode]`` is the bit carrying ``mode``
    (identity if omitted); the Jordan-Wigner sign counts occupied bits
    below that position. The basis must be closed under the product.
    """
    bits = basis.copy()
    sign = np.ones(len(basis))
    alive = np.ones(len(basis), dtype=bool)
    for mode, dagger in reversed(ops):
        q = mode if positions is None else positions[mode]
        occupied = (bits >> q) & 1 == 1
        alive &= ~occupied if dagger else occupied
        parity = np.bitwise_count(bits & ((1 << q) - 1)) & 1
        sign = np.where(parity == 1, -sign, sign)
        bits = bits ^ (1 << q)
    cols = np.nonzero(alive)[0]
    rows = np.searchsorted(basis, bits[cols])
    ok = (rows < len(basis))
    ok[ok] &= basis[rows[ok]] == bits[cols[ok]]
    if not np.all(ok):
        raise ValueError("basis is not closed under the operator")
    n = len(basis)
    return sp.csr_matrix((sign[cols], (rows, cols)), shape=(n, n))


def fock_basis(n_qubits: int) -> np.ndarray:
    if n_qubits > FOCK_QUBIT_CAP:
        raise ValueError(f"{n_qubits} qubits exceed the dense Fock-space cap {FOCK_QUBIT_CAP}")
    return np.arange(1 << n_qubits, dtype=np.int64)


def sector_basis(n_orb: int, n_alpha: int, n_beta: int) -> np.ndarray:
    dets = sector_determinants(n_orb, n_alpha, n_beta)
    if len(dets) > SECTOR_CAP:
        raise ValueError(f"sector dimension {len(dets)} exceeds cap {SECTOR_CAP}")
    return np.array([d.mode_bits(n_orb) for d in dets], dtype=np.int64)


def jw_lowering(n_qubits: int, positions=None) -> list[sp.csr_matrix]:
    """Annihilation operators ``a_m`` on the full ``2**n`` qubit space."""
    basis = fock_basis(n_qubits)
    return [_ladder_matrix(basis, [(m, False)], positions) for m in range(n_qubits)]


def fock_hamiltonian(h: MolecularHamiltonian, positions=None) -> sp.csr_matrix:
    """Literal second-quantised Hamiltonian on the full qubit space."""
    n = h.n_orb
    m = 2 * n
    a = jw_lowering(m, positions)
    ad = [x.T.tocsr() for x in a]
    dim = 1 << m
    out = h.e_core * sp.identity(dim, format="csr")
    for p, q in product(range(n), repeat=2):
        if h.h_one[p, q] != 0:
            for s in (0, n):
                out = out + h.h_one[p, q] * (ad[p + s] @ a[q + s])
    for p, q, r, s in product(range(n), repeat=4):
        v = h.eri[p, q, r, s]
        if v == 0:
            continue
        for x, y in product((0, n), repeat=2):
            out = out + 0.5 * v * (ad[p + x] @ ad[r + y] @ a[s + y] @ a[q + x])
    return out.tocsr()


def _excitation_ops(basis, n_orb, positions=None):
    """Spin-summed ``E_pq = sum_s a+_ps a_qs`` on ``basis``."""
    e = {}
    for p, q in product(range(n_orb), repeat=2):
        mat = None
        for s in (0, n_orb):
            term = _ladder_matrix(basis, [(p + s, True), (q + s, False)], positions)
            mat = term if mat is None else mat + term
        e[p, q] = mat
    return e


@lru_cache(maxsize=8)
def sector_hamiltonian(h: MolecularHamiltonian) -> sp.csr_matrix:
    """``H`` on the ``(n_alpha, n_beta)`` sector in sorted-mode-bit determinant order.

    Uses ``sum a+a+aa = E_pq E_rs - delta_qr E_ps`` for the two-body part.
    """
    n = h.n_orb
    basis = sector_basis(n, h.n_alpha, h.n_beta)
    e = _excitation_ops(basis, n)
    dim = len(basis)
    out = h.e_core * sp.identity(dim, format="csr")
    for p, q in product(range(n), repeat=2):
        if h.h_one[p, q] != 0:
            out = out + h.h_one[p, q] * e[p, q]
    contracted = np.einsum("pqqs->ps", h.eri)
    for p, q in product(range(n), repeat=2):
        block = None
        for r, s in product(range(n), repeat=2):
            v = h.eri[p, q, r, s]
            if v != 0:
                block = v * e[r, s] if block is None else block + v * e[r, s]
        if block is not None:
            out = out + 0.5 * (e[p, q] @ block)
        if contracted[p, q] != 0:
            out = out - 0.5 * contracted[p, q] * e[p, q]
    return out.tocsr()


def term_matrix(term: ExcitationTerm, basis: np.ndarray, positions=None) -> sp.csr_matrix:
    """Normalised ``h_i`` built from its factor definition on ``basis``."""
    mat = None
    for i, j in term.factors:
        if i == j:
            f = _ladder_matrix(basis, [(i, True), (i, False)], positions)
        else:
            f = (_ladder_matrix(basis, [(i, True), (j, False)], positions)
                 + _ladder_matrix(basis, [(j, True), (i, False)], positions))
        mat = f if mat is None else mat @ f
    return (term.scale * mat).tocsr()


def number_operators(basis: np.ndarray, n_orb: int):
    """Diagonal ``N_alpha`` and ``N_beta`` on ``basis``."""
    alpha = np.bitwise_count(basis & ((1 << n_orb) - 1)).astype(float)
    beta = np.bitwise_count(basis >> n_orb).astype(float)
    return sp.diags(alpha).tocsr(), sp.diags(beta).tocsr()


def pauli_matrix(word: str) -> np.ndarray:
    """Dense matrix of a Pauli word with ``word[q]`` on qubit ``q`` (little-endian)."""
    single = {
        "I": np.eye(2),
        "X": np.array([[0, 1], [1, 0]], dtype=complex),
        "Y": np.array([[0, -1j], [1j, 0]]),
        "Z": np.diag([1.0, -1.0]),
    }
    out = np.eye(1)
    for letter in word:
        out = np.kron(single[letter], out)
    return out


def step_unitary(term_mat: np.ndarray, angle: float) -> np.ndarray:
    """``exp(-i angle h)`` for a Hermitian dense ``h``."""
    w, v = np.linalg.eigh(term_mat)
    return (v * np.exp(-1j * angle * w)) @ v.conj().T


def sequence_unitary(dist: TermDistribution, indices, angle: float, positions=None) -> np.ndarray:
    """Dense product ``prod_j exp(-i angle h_kj)`` with the first index applied first."""
    basis = fock_basis(dist.n_modes)
    cache = {}
    out = np.eye(len(basis), dtype=complex)
    for i in indices:
        if i not in cache:
            cache[i] = step_unitary(term_matrix(dist.terms[i], basis, positions).toarray(), angle)
        out = cache[i] @ out
    return out


# --------------------------------------------------------------------------
# FCI and propagation


@dataclass(frozen=True, eq=False)
class FCIResult:
    energy: float
    vector: np.ndarray
    spectrum: SpectralData
    determinants: tuple[Determinant, ...]

    def to_json(self) -> dict:
        return {"energy": self.energy, "dimension": len(self.determinants),
                "spectrum": self.spectrum.to_json()}


@lru_cache(maxsize=8)
def _dense_eigensystem(h: MolecularHamiltonian):
    mat = sector_hamiltonian(h).toarray()
    return np.linalg.eigh(mat)


def fci_solve(h: MolecularHamiltonian, cap: int = SECTOR_CAP) -> FCIResult:
    """Exact ground state of the electron sector and its spectral endpoints.

    ``gamma0_sq`` is the squared overlap of the Hartree-Fock determinant with
    the ground state; ``h_norm`` is the largest absolute eigenvalue in the
    sector.
    """
    dets = tuple(sector_determinants(h.n_orb, h.n_alpha, h.n_beta))
    dim = len(dets)
    if dim > cap:
        raise ValueError(f"sector dimension {dim} exceeds cap {cap}")
    if dim <= DENSE_EIG_LIMIT:
        w, v = _dense_eigensystem(h)
        e0, e1, emax, vec = w[0], (w[1] if dim > 1 else w[0]), w[-1], v[:, 0]
    else:
        mat = sector_hamiltonian(h)
        lo, lov = spla.eigsh(mat, k=2, which="SA", tol=1e-12)
        hi = spla.eigsh(mat, k=1, which="LA", tol=1e-12, return_eigenvectors=False)
        order = np.argsort(lo)
        e0, e1, emax, vec = lo[order[0]], lo[order[1]], hi[0], lov[:, order[0]]
    i = int(np.argmax(np.abs(vec)))
    vec = vec / np.linalg.norm(vec) * (1 if vec[i] > 0 else -1)
    hf = hartree_fock(h.n_alpha, h.n_beta)
    g2 = float(abs(vec[dets.index(hf)]) ** 2)
    spectrum = SpectralData(float(e0), float(e1), float(emax), float(max(abs(e0), abs(emax))), g2)
    return FCIResult(float(e0), vec, spectrum, dets)


def reference_state(h: MolecularHamiltonian) -> np.ndarray:
    """Hartree-Fock determinant as a sector vector."""
    dets = sector_determinants(h.n_orb, h.n_alpha, h.n_beta)
    v = np.zeros(len(dets), dtype=complex)
    v[dets.index(hartree_fock(h.n_alpha, h.n_beta))] = 1.0
    return v


def exact_propagate(h: MolecularHamiltonian, state: np.ndarray, t: float) -> np.ndarray:
    """``exp(-i H t) state`` for a sector vector."""
    state = np.asarray(state, dtype=complex)
    dim = len(state)
    if dim <= DENSE_EIG_LIMIT:
        w, v = _dense_eigensystem(h)
        return v @ (np.exp(-1j * w * t) * (v.conj().T @ state))
    return spla.expm_multiply(-1j * t * sector_hamiltonian(h), state)


# --------------------------------------------------------------------------
# qDRIFT channels


@lru_cache(maxsize=16)
def _sector_term_matrices(h: MolecularHamiltonian, dist: TermDistribution) -> np.ndarray:
    basis = sector_basis(h.n_orb, h.n_alpha, h.n_beta)
    return np.array([term_matrix(t, basis).toarray() for t in dist.terms])


def _step_unitaries(mats: np.ndarray, angle: float) -> np.ndarray:
    w, v = np.linalg.eigh(mats)
    return np.einsum("kij,kj,klj->kil", v, np.exp(-1j * angle * w), v.conj())


def _fock_term_matrices(dist: TermDistribution) -> np.ndarray:
    basis = fock_basis(dist.n_modes)
    return np.array([term_matrix(t, basis).toarray() for t in dist.terms])


def _sample_products(units: np.ndarray, probs_cdf: np.ndarray, n_steps: int, batch: int, rng) -> np.ndarray:
    """``batch`` independent random products of ``n_steps`` step unitaries."""
    dim = units.shape[1]
    out = np.broadcast_to(np.eye(dim, dtype=complex), (batch, dim, dim)).copy()
    for _ in range(n_steps):
        idx = np.minimum(np.searchsorted(probs_cdf, rng.random(batch), side="right"), len(units) - 1)
        out = units[idx] @ out
    return out


@dataclass(frozen=True)
class ChannelError:
    empirical_error: float
    bound: float
    deterministic_bound: float
    realization_mean: float
    realization_std: float
    deviation_mean: float
    realization_bound: float
    realization_fraction_within: float

    def to_json(self) -> dict:
        return asdict(self)


def channel_error(h: MolecularHamiltonian, dist: TermDistribution, n_steps: int, n_rand: int,
                  t: float, trials: int, rng, delta: float = 0.01, space: str = "fock",
                  batch: int = 500) -> ChannelError:
    """Spectral-norm distance between ``exp(-iHt)`` and sampled qDRIFT products.

    ``empirical_error`` is ``||U - mean(V)||`` over ``trials`` sampled
    products. ``bound`` adds to ``t^2 lambda^2 / N`` the fluctuation term
    for an ``n_rand``-fold average; the per-realisation statistics compare
    ``||V - mean(V)||`` against its own high-probability radius.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    if space == "fock":
        mats = _fock_term_matrices(dist)
        full = fock_hamiltonian(h).toarray()
        n_qubits = dist.n_modes
    elif space == "sector":
        mats = _sector_term_matrices(h, dist)
        full = sector_hamiltonian(h).toarray()
        n_qubits = dist.n_modes
    else:
        raise ValueError(f"unknown space {space!r}")
    if full.shape[0] > 256:
        raise ValueError("channel_error is limited to 256-dimensional spaces")
    if t == 0:
        return ChannelError(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0)
    tl = t * dist.lam
    u = step_unitary(full, t)
    units = _step_unitaries(mats, tl / n_steps)
    # the sampled products omit the constant term; restore its phase
    phase = np.exp(-1j * dist.e_core * t)
    start = rng.bit_generator.state
    total = np.zeros_like(u)
    for b in _chunks(trials, batch):
        total += (_sample_products(units, dist.cumulative, n_steps, b, rng) * phase).sum(axis=0)
    mean = total / trials
    rng.bit_generator.state = start
    to_exact, to_mean = [], []
    for b in _chunks(trials, batch):
        prods = _sample_products(units, dist.cumulative, n_steps, b, rng) * phase
        to_exact.extend(np.linalg.norm(u - v, 2) for v in prods)
        to_mean.extend(np.linalg.norm(v - mean, 2) for v in prods)
    to_exact, to_mean = np.array(to_exact), np.array(to_mean)
    empirical = float(np.linalg.norm(u - mean, 2))
    log_term = (n_qubits + 1) * np.log(2.0) - np.log(delta)
    det_bound = tl * tl / n_steps
    fluct = tl * np.sqrt(11.0 * log_term / (n_steps * n_rand))
    radius = tl * np.sqrt(11.0 * log_term / n_steps)
    return ChannelError(empirical, float(det_bound + fluct), float(det_bound),
                        float(to_exact.mean()), float(to_exact.std()), float(to_mean.mean()),
                        float(radius), float(np.mean(to_mean < radius)))


def _chunks(total: int, size: int):
    done = 0
    while done < total:
        b = min(size, total - done)
        yield b
        done += b


# --------------------------------------------------------------------------
# Krylov matrices


@dataclass(frozen=True, eq=False)
class KrylovMatrices:
    h_mat: np.ndarray
    s_mat: np.ndarray
    variant: str

    @property
    def d(self) -> int:
        return self.s_mat.shape[0]


VARIANTS = ("ideal", "qdrift_ideal", "qdrift_finite")


def _fill(values: dict, d: int) -> np.ndarray:
    """Toeplitz fill from ``values[m] = <psi0|W_m ...>``, ``m = j - i >= 0``, lower by conjugation."""
    out = np.zeros((d, d), dtype=complex)
    for i in range(d):
        for j in range(i, d):
            out[i, j] = values[j - i]
            out[j, i] = np.conj(values[j - i]) if i != j else values[0].real
    return out


def _multiplier_operators(h, variant, d, t, dist=None, n_steps=None, n_rand=None, rng=None):
    """Sector operators ``W_m`` approximating ``U^m`` for ``m = 0..d-1``."""
    ops = {0: None}
    if variant == "ideal":
        w, v = _dense_eigensystem(h)
        for m in range(1, d):
            ops[m] = (v * np.exp(-1j * w * m * t)) @ v.conj().T
        return ops
    if dist is None or n_steps is None:
        raise ValueError(f"variant {variant!r} needs a term distribution and n_steps")
    mats = _sector_term_matrices(h, dist)
    probs = dist.probabilities
    phase = lambda m: np.exp(-1j * dist.e_core * m * t)  # noqa: E731
    for m in range(1, d):
        units = _step_unitaries(mats, m * t * dist.lam / n_steps)
        if variant == "qdrift_ideal":
            step = np.einsum("k,kij->ij", probs, units)
            ops[m] = np.linalg.matrix_power(step, n_steps) * phase(m)
        elif variant == "qdrift_finite":
            if not n_rand or n_rand < 1:
                raise ValueError("qdrift_finite needs n_rand >= 1")
            prods = _sample_products(units, dist.cumulative, n_steps, n_rand, rng)
            ops[m] = prods.mean(axis=0) * phase(m)
        else:
            raise ValueError(f"unknown variant {variant!r}")
    return ops


def krylov_matrices(h: MolecularHamiltonian, psi0: np.ndarray, d: int, t: float,
                    variant: str = "ideal", dist: TermDistribution | None = None,
                    n_steps: int | None = None, n_rand: int | None = None, rng=None) -> KrylovMatrices:
    """Krylov ``H_ij = <psi0|W_{j-i} H|psi0>`` and ``S_ij = <psi0|W_{j-i}|psi0>``.

    ``W_m`` is ``exp(-i m H t)`` (ideal), the exact qDRIFT channel average
    (qdrift_ideal) or the mean of ``n_rand`` sampled products
    (qdrift_finite). Only ``j >= i`` is computed; the rest is conjugated.
    """
    if d < 1 or d % 2 == 0:
        raise ValueError(f"Krylov dimension must be odd, got {d}")
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    psi0 = np.asarray(psi0, dtype=complex)
    hpsi = sector_hamiltonian(h) @ psi0
    ops = _multiplier_operators(h, variant, d, t, dist, n_steps, n_rand, rng)
    s_vals, h_vals = {}, {}
    for m in range(d):
        if ops[m] is None:
            s_vals[m] = np.vdot(psi0, psi0)
            h_vals[m] = np.vdot(psi0, hpsi)
        else:
            s_vals[m] = np.vdot(psi0, ops[m] @ psi0)
            h_vals[m] = np.vdot(psi0, ops[m] @ hpsi)
    return KrylovMatrices(_fill(h_vals, d), _fill(s_vals, d), variant)


def regularized_geig(m: KrylovMatrices, eps_r: float = 0.0) -> float:
    """Lowest eigenvalue of ``H v = E S v`` after discarding ``S`` directions with eigenvalue <= ``eps_r``."""
    s = (m.s_mat + m.s_mat.conj().T) / 2
    hm = (m.h_mat + m.h_mat.conj().T) / 2
    w, v = np.linalg.eigh(s)
    keep = w > eps_r
    if not np.any(keep):
        raise ValueError(f"all overlap eigenvalues are below the threshold {eps_r}")
    t = v[:, keep] / np.sqrt(w[keep])
    reduced = t.conj().T @ hm @ t
    return float(np.linalg.eigvalsh((reduced + reduced.conj().T) / 2)[0])


def generalized_lowest(m: KrylovMatrices) -> float:
    """Direct dense generalised eigensolve, for comparison with the regularised route."""
    w = scipy.linalg.eigh(m.h_mat, m.s_mat, eigvals_only=True)
    return float(w[0])
