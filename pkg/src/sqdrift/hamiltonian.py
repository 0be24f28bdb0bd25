"""Molecular Hamiltonians and their grouped fermionic excitation terms.

The electronic Hamiltonian is

    H = sum_pq h_pq sum_s a+_ps a_qs
        + 1/2 sum_pqrs (pq|rs) sum_st a+_ps a+_rt a_st a_qs + E_core

with chemist-ordered integrals. :func:`enumerate_terms` rewrites it as
``E_core + sum_i c_i h_i`` where every ``h_i`` is a signed product of
commuting number operators ``n_i`` and hopping operators
``a+_i a_j + a+_j a_i`` on distinct spin-orbitals, normalised to unit
spectral radius.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

ONE_BODY = "one_body"
TWO_BODY = "two_body"

DEFAULT_THRESHOLD = 1e-12


class FCIDumpError(ValueError):
    """Raised for malformed FCIDUMP input."""


@dataclass(frozen=True, eq=False)
class MolecularHamiltonian:
    """One- and two-electron integrals of an active space.

    Attributes:
        n_orb: Number of spatial orbitals.
        n_alpha: Number of spin-up electrons.
        n_beta: Number of spin-down electrons.
        h_one: Symmetric ``(n_orb, n_orb)`` one-electron integrals in Hartree.
        eri: ``(n_orb,) * 4`` two-electron integrals ``(pq|rs)`` in chemist order.
        e_core: Constant core / nuclear repulsion energy in Hartree.
    """

    n_orb: int
    n_alpha: int
    n_beta: int
    h_one: np.ndarray
    eri: np.ndarray
    e_core: float = 0.0

    def __post_init__(self):
        h_one = np.asarray(self.h_one, dtype=float)
        eri = np.asarray(self.eri, dtype=float)
        n = self.n_orb
        if h_one.shape != (n, n) or eri.shape != (n, n, n, n):
            raise ValueError(f"integral shapes {h_one.shape}, {eri.shape} do not match n_orb={n}")
        if not (0 < self.n_alpha <= n and 0 < self.n_beta <= n):
            raise ValueError(
                f"electron counts ({self.n_alpha}, {self.n_beta}) outside (0, {n}]"
            )
        if not np.allclose(h_one, h_one.T, atol=1e-10, rtol=0):
            raise ValueError("h_one is not symmetric")
        for axes in ((1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)):
            if not np.allclose(eri, eri.transpose(axes), atol=1e-10, rtol=0):
                raise ValueError("eri lacks 8-fold permutational symmetry")
        h_one.setflags(write=False)
        eri.setflags(write=False)
        object.__setattr__(self, "h_one", h_one)
        object.__setattr__(self, "eri", eri)
        object.__setattr__(self, "e_core", float(self.e_core))

    @property
    def n_modes(self) -> int:
        return 2 * self.n_orb

    @property
    def n_qubits(self) -> int:
        return 2 * self.n_orb

    def to_json(self) -> dict:
        """JSON document with row-major ``h_one`` and the unique ERI elements."""
        unique = []
        n = self.n_orb
        for p in range(n):
            for q in range(p + 1):
                for r in range(n):
                    for s in range(r + 1):
                        if p * (p + 1) // 2 + q < r * (r + 1) // 2 + s:
                            continue
                        v = self.eri[p, q, r, s]
                        if v != 0.0:
                            unique.append([p, q, r, s, float(v)])
        return {
            "n_orb": n,
            "n_alpha": self.n_alpha,
            "n_beta": self.n_beta,
            "e_core": self.e_core,
            "h_one": self.h_one.tolist(),
            "eri_unique": unique,
        }

    @classmethod
    def from_json(cls, doc: dict) -> MolecularHamiltonian:
        n = int(doc["n_orb"])
        eri = np.zeros((n, n, n, n))
        for p, q, r, s, v in doc["eri_unique"]:
            _set_eri(eri, int(p), int(q), int(r), int(s), float(v))
        return cls(n, int(doc["n_alpha"]), int(doc["n_beta"]), np.array(doc["h_one"]), eri,
                   float(doc["e_core"]))


def _set_eri(eri, p, q, r, s, v):
    for a, b, c, d in ((p, q, r, s), (q, p, r, s), (p, q, s, r), (q, p, s, r)):
        eri[a, b, c, d] = v
        eri[c, d, a, b] = v


_HEADER_END = re.compile(r"(&END|/)\s*$", re.IGNORECASE)
_KEY = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*=")


def _parse_header(text: str) -> dict[str, list[str]]:
    text = re.sub(r"&FCI", " ", text, flags=re.IGNORECASE)
    text = _HEADER_END.sub(" ", text.strip())
    keys = list(_KEY.finditer(text))
    out = {}
    for i, m in enumerate(keys):
        end = keys[i + 1].start() if i + 1 < len(keys) else len(text)
        values = [v for v in re.split(r"[,\s]+", text[m.end():end]) if v]
        out[m.group(1).upper()] = values
    return out


def parse_fcidump(text: str) -> MolecularHamiltonian:
    """Parse FCIDUMP text (Molpro / PySCF layout, 1-based chemist indices).

    Raises:
        FCIDumpError: malformed header or record, index out of range, or an
            odd ``NELEC + MS2``. The message names the offending line.
    """
    lines = text.splitlines()
    header_lines = []
    body_start = None
    for lineno, line in enumerate(lines):
        header_lines.append(line)
        if _HEADER_END.search(line.strip()):
            body_start = lineno + 1
            break
    if body_start is None:
        raise FCIDumpError("line 1: FCIDUMP header is not terminated by &END or /")
    header = _parse_header("\n".join(header_lines))
    try:
        norb = int(header["NORB"][0])
        nelec = int(header["NELEC"][0])
        ms2 = int(header.get("MS2", ["0"])[0])
    except (KeyError, IndexError, ValueError) as exc:
        raise FCIDumpError(f"line 1: header must define integer NORB and NELEC ({exc})") from None
    if norb < 1:
        raise FCIDumpError(f"line 1: NORB={norb} must be positive")
    if (nelec + ms2) % 2:
        raise FCIDumpError(f"line 1: NELEC={nelec} and MS2={ms2} give non-integer spin counts")

    h_one = np.zeros((norb, norb))
    eri = np.zeros((norb,) * 4)
    e_core = 0.0
    for lineno in range(body_start, len(lines)):
        tokens = lines[lineno].split()
        if not tokens:
            continue
        where = f"line {lineno + 1}"
        if len(tokens) != 5:
            raise FCIDumpError(f"{where}: expected 'value i j k l', got {lines[lineno]!r}")
        try:
            value = float(tokens[0].replace("D", "E").replace("d", "e"))
            i, j, k, l = (int(t) for t in tokens[1:])
        except ValueError:
            raise FCIDumpError(f"{where}: cannot parse record {lines[lineno]!r}") from None
        if not all(0 <= x <= norb for x in (i, j, k, l)):
            raise FCIDumpError(f"{where}: index out of range 0..{norb} in {lines[lineno]!r}")
        if i == j == k == l == 0:
            e_core = value
        elif k == l == 0 and j == 0:
            continue  # orbital energy record
        elif k == l == 0 and i > 0 and j > 0:
            h_one[i - 1, j - 1] = h_one[j - 1, i - 1] = value
        elif min(i, j, k, l) > 0:
            _set_eri(eri, i - 1, j - 1, k - 1, l - 1, value)
        else:
            raise FCIDumpError(f"{where}: invalid index pattern in {lines[lineno]!r}")
    n_alpha, n_beta = (nelec + ms2) // 2, (nelec - ms2) // 2
    try:
        return MolecularHamiltonian(norb, n_alpha, n_beta, h_one, eri, e_core)
    except ValueError as exc:
        raise FCIDumpError(f"line 1: {exc}") from None


def read_fcidump(path: str | Path) -> MolecularHamiltonian:
    return parse_fcidump(Path(path).read_text(encoding="utf-8"))


def fixture_names() -> list[str]:
    data = resources.files("sqdrift") / "data"
    return sorted(p.name[: -len(".fcidump")] for p in data.iterdir() if p.name.endswith(".fcidump"))


def load_fixture(name: str) -> MolecularHamiltonian:
    """Load a bundled FCIDUMP (see :func:`fixture_names`)."""
    path = resources.files("sqdrift") / "data" / f"{name}.fcidump"
    if not path.is_file():
        raise KeyError(f"unknown fixture {name!r}; available: {fixture_names()}")
    return parse_fcidump(path.read_text(encoding="utf-8"))


def build_hubbard(sites: int, t_hop: float, u: float, n_alpha: int, n_beta: int) -> MolecularHamiltonian:
    """Open-boundary 1-D Hubbard chain expressed as molecular integrals."""
    if sites < 2:
        raise ValueError(f"Hubbard chain needs at least 2 sites, got {sites}")
    h_one = np.zeros((sites, sites))
    for p in range(sites - 1):
        h_one[p, p + 1] = h_one[p + 1, p] = -t_hop
    eri = np.zeros((sites,) * 4)
    for p in range(sites):
        eri[p, p, p, p] = u
    return MolecularHamiltonian(sites, n_alpha, n_beta, h_one, eri, 0.0)


def random_hamiltonian(n_orb: int, n_alpha: int, n_beta: int, seed: int = 0,
                       n_aux: int | None = None, scale: float = 0.5) -> MolecularHamiltonian:
    """Synthetic dense integrals with molecular symmetry, for testing.

    The ERI tensor is a sum of symmetric outer products, hence positive
    semidefinite as a ``(pq, rs)`` matrix and 8-fold symmetric.
    """
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n_orb, n_orb))
    h_one = -np.diag(np.sort(rng.uniform(0.5, 2.0, n_orb))) + scale * (a + a.T) / 2
    n_aux = n_aux or n_orb
    b = rng.normal(scale=np.sqrt(scale / n_aux), size=(n_aux, n_orb, n_orb))
    b = (b + b.transpose(0, 2, 1)) / 2
    eri = np.einsum("lpq,lrs->pqrs", b, b)
    return MolecularHamiltonian(n_orb, n_alpha, n_beta, h_one, eri, float(rng.uniform(-1, 1)))


# --------------------------------------------------------------------------
# grouped excitation terms


@dataclass(frozen=True)
class ExcitationTerm:
    """A grouped Hermitian excitation ``h_i`` with weight ``c_i > 0``.

    The operator is ``sign * prod(factor) / norm`` where a factor ``(i, i)``
    is the number operator ``n_i`` and ``(i, j)`` with ``i < j`` is
    ``a+_i a_j + a+_j a_i``. Factors act on disjoint spin-orbitals, so they
    commute, and ``norm`` is the spectral radius of their product.
    """

    kind: str
    factors: tuple[tuple[int, int], ...]
    coefficient: float
    sign: int = 1
    norm: float = 1.0

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(sorted({m for f in self.factors for m in f}))

    @property
    def excitation_pairs(self) -> tuple[tuple[int, int], ...]:
        """Hopping pairs whose Jordan-Wigner strings carry Z chains."""
        return tuple(f for f in self.factors if f[0] != f[1])

    @property
    def number_modes(self) -> tuple[int, ...]:
        return tuple(f[0] for f in self.factors if f[0] == f[1])

    @property
    def scale(self) -> float:
        """Multiplier taking the bare factor product to ``h_i``."""
        return self.sign / self.norm

    def signature(self) -> tuple:
        return (self.kind, self.factors)


@dataclass(frozen=True, eq=False)
class TermDistribution:
    """Grouped terms with the sampling distribution ``c_i / lambda``."""

    terms: tuple[ExcitationTerm, ...]
    n_orb: int
    e_core: float = 0.0
    lam: float = field(init=False)
    cumulative: np.ndarray = field(init=False)

    def __post_init__(self):
        coeffs = np.array([t.coefficient for t in self.terms], dtype=float)
        if np.any(coeffs <= 0):
            raise ValueError("term coefficients must be strictly positive")
        lam = float(coeffs.sum())
        cumulative = np.cumsum(coeffs) / lam if lam > 0 else np.zeros(0)
        if len(cumulative):
            cumulative[-1] = 1.0
        cumulative.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "cumulative", cumulative)

    def __len__(self) -> int:
        return len(self.terms)

    @property
    def n_modes(self) -> int:
        return 2 * self.n_orb

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([t.coefficient for t in self.terms])

    @property
    def probabilities(self) -> np.ndarray:
        return self.coefficients / self.lam


def _canon(c0: int, c1: int, a0: int, a1: int):
    """Rewrite ``a+_c0 a+_c1 a_a0 a_a1`` as ``sign * O(C, A)``.

    ``O(C, A) = a+_C0 a+_C1 a_A1 a_A0`` with ``C0 < C1`` and ``A0 < A1``,
    so that ``O(C, A)^dagger = O(A, C)``.
    """
    sign = (1 if c0 < c1 else -1) * (1 if a0 > a1 else -1)
    return ((min(c0, c1), max(c0, c1)), (min(a0, a1), max(a0, a1))), sign


def _same_spin(i: int, j: int, n_orb: int) -> bool:
    return (i < n_orb) == (j < n_orb)


def _candidates(support: tuple[int, ...], n_orb: int):
    """Commuting factor products that can appear on a two-body support."""
    out = []
    if len(support) == 2:
        i, j = support
        out.append((((i, i), (j, j)), {((i, j), (i, j)): 1.0}))
    elif len(support) == 3:
        for m in support:
            x, y = (s for s in support if s != m)
            if not _same_spin(x, y, n_orb):
                continue
            expansion = {}
            for u, v in ((x, y), (y, x)):
                key, sign = _canon(m, u, v, m)
                expansion[key] = expansion.get(key, 0.0) + sign
            out.append((((m, m), (x, y)), expansion))
    else:
        s0, s1, s2, s3 = support
        for (a, b), (c, d) in (((s0, s1), (s2, s3)), ((s0, s2), (s1, s3)), ((s0, s3), (s1, s2))):
            if not (_same_spin(a, b, n_orb) and _same_spin(c, d, n_orb)):
                continue
            expansion = {}
            for u, v in ((a, b), (b, a)):
                for w, t in ((c, d), (d, c)):
                    key, sign = _canon(u, w, v, t)
                    expansion[key] = expansion.get(key, 0.0) - sign
            out.append((((a, b), (c, d)), expansion))
    return out


def _relabel(factors):
    modes = sorted({m for f in factors for m in f})
    index = {m: i for i, m in enumerate(modes)}
    return tuple((index[a], index[b]) for a, b in factors), len(modes)


@lru_cache(maxsize=None)
def _local_spectral_radius(local_factors: tuple, n_local: int) -> float:
    dim = 1 << n_local
    states = np.arange(dim)
    lowering = []
    for q in range(n_local):
        m = np.zeros((dim, dim))
        occupied = (states >> q) & 1 == 1
        src = states[occupied]
        parity = np.array([bin(s & ((1 << q) - 1)).count("1") % 2 for s in src])
        m[src ^ (1 << q), src] = 1.0 - 2.0 * parity
        lowering.append(m)
    op = np.eye(dim)
    for a, b in local_factors:
        if a == b:
            f = lowering[a].T @ lowering[a]
        else:
            f = lowering[a].T @ lowering[b] + lowering[b].T @ lowering[a]
        op = op @ f
    return float(np.max(np.abs(np.linalg.eigvalsh(op))))


def spectral_radius(factors: tuple[tuple[int, int], ...]) -> float:
    """Largest absolute eigenvalue of a factor product, by local diagonalisation."""
    local, n_local = _relabel(factors)
    return _local_spectral_radius(local, n_local)


def _make_term(kind, factors, raw):
    norm = spectral_radius(factors)
    return ExcitationTerm(kind, factors, abs(raw) * norm, 1 if raw > 0 else -1, norm)


def _term_order(term: ExcitationTerm):
    return (term.support, 0 if term.kind == ONE_BODY else 1, term.factors)


def enumerate_terms(h: MolecularHamiltonian, threshold: float = DEFAULT_THRESHOLD) -> TermDistribution:
    """Group the Hamiltonian into Hermitian, number-conserving excitation terms.

    One term per one-body spin-orbital pair, and one per commuting factor
    product on each two-body spin-orbital support. Terms with ``c_i`` below
    ``threshold`` are dropped; with ``threshold = 0`` the terms plus
    ``e_core`` reproduce ``h`` exactly.
    """
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    n = h.n_orb
    terms = []

    for sigma in (0, n):
        for p in range(n):
            for q in range(p, n):
                v = h.h_one[p, q]
                if v != 0.0:
                    terms.append(_make_term(ONE_BODY, ((p + sigma, q + sigma),), v))

    coeffs: dict = {}
    for p, q, r, s in np.argwhere(h.eri != 0.0).tolist():
        v = 0.5 * h.eri[p, q, r, s]
        for sigma in (0, n):
            for tau in (0, n):
                i, l, j, k = p + sigma, q + sigma, r + tau, s + tau
                if i == j or k == l:
                    continue
                key, sign = _canon(i, j, k, l)
                coeffs[key] = coeffs.get(key, 0.0) + sign * v

    by_support: dict = {}
    for key, v in coeffs.items():
        support = tuple(sorted(set(key[0]) | set(key[1])))
        by_support.setdefault(support, {})[key] = v

    for support in sorted(by_support):
        target = by_support[support]
        cands = _candidates(support, n)
        keys = sorted(set(target).union(*(e for _, e in cands)))
        col = {k: i for i, k in enumerate(keys)}
        a = np.zeros((len(keys), len(cands)))
        for c, (_, expansion) in enumerate(cands):
            for k, v in expansion.items():
                a[col[k], c] = v
        b = np.zeros(len(keys))
        for k, v in target.items():
            b[col[k]] = v
        x = np.linalg.lstsq(a, b, rcond=None)[0] if cands else np.zeros(0)
        resid = np.max(np.abs(a @ x - b)) if len(keys) else 0.0
        if resid > 1e-10 * max(1.0, np.max(np.abs(b))):
            raise ValueError(
                f"two-body part on modes {support} is not a sum of Hermitian "
                f"number-conserving excitations (residual {resid:.2e})"
            )
        for (factors, _), raw in zip(cands, x):
            if raw != 0.0 and abs(raw) > 1e-15 * max(1.0, np.max(np.abs(b))):
                terms.append(_make_term(TWO_BODY, factors, raw))

    terms = [t for t in terms if t.coefficient >= threshold and t.coefficient > 0]
    terms.sort(key=_term_order)
    return TermDistribution(tuple(terms), n, h.e_core)


def save_json(h: MolecularHamiltonian, path: str | Path) -> None:
    Path(path).write_text(json.dumps(h.to_json(), indent=1), encoding="utf-8")


def rotate_orbitals(h: MolecularHamiltonian, coeffs: np.ndarray) -> MolecularHamiltonian:
    """Integrals in the orbital basis ``phi_i = sum_p coeffs[p, i] chi_p`` (orthogonal ``coeffs``)."""
    c = np.asarray(coeffs, dtype=float)
    if c.shape != (h.n_orb, h.n_orb) or not np.allclose(c.T @ c, np.eye(h.n_orb), atol=1e-10):
        raise ValueError("orbital coefficients must form an orthogonal matrix")
    h_one = c.T @ h.h_one @ c
    eri = np.einsum("pqrs,pi,qj,rk,sl->ijkl", h.eri, c, c, c, c, optimize=True)
    h_one = (h_one + h_one.T) / 2
    eri = (eri + eri.transpose(1, 0, 2, 3)) / 2
    eri = (eri + eri.transpose(0, 1, 3, 2)) / 2
    eri = (eri + eri.transpose(2, 3, 0, 1)) / 2
    return MolecularHamiltonian(h.n_orb, h.n_alpha, h.n_beta, h_one, eri, h.e_core)


def core_orbitals(h: MolecularHamiltonian) -> np.ndarray:
    """Eigenvectors of ``h_one`` in ascending energy, each with its largest entry positive."""
    _, vecs = np.linalg.eigh(h.h_one)
    for i in range(vecs.shape[1]):
        j = int(np.argmax(np.abs(vecs[:, i])))
        if vecs[j, i] < 0:
            vecs[:, i] = -vecs[:, i]
    return vecs
