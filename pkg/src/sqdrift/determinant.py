"""Occupation-number determinants in the blocked spin-orbital convention.

Mode ``p`` is the alpha spin-orbital of spatial orbital ``p`` and mode
``n_orb + p`` is its beta partner. A determinant stores one bitmask per spin.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product
from math import comb


@dataclass(frozen=True, order=True)
class Determinant:
    """An (alpha-string, beta-string) pair of occupation bitmasks."""

    alpha: int
    beta: int

    @property
    def n_alpha(self) -> int:
        return self.alpha.bit_count()

    @property
    def n_beta(self) -> int:
        return self.beta.bit_count()

    @property
    def sector(self) -> tuple[int, int]:
        return self.n_alpha, self.n_beta

    def mode_bits(self, n_orb: int) -> int:
        """Spin-orbital occupation bitmask over ``2 * n_orb`` modes."""
        return self.alpha | (self.beta << n_orb)

    @classmethod
    def from_mode_bits(cls, bits: int, n_orb: int) -> Determinant:
        mask = (1 << n_orb) - 1
        return cls(bits & mask, (bits >> n_orb) & mask)

    def to_hex(self, n_orb: int) -> str:
        return format(self.mode_bits(n_orb), "x")

    @classmethod
    def from_hex(cls, text: str, n_orb: int) -> Determinant:
        return cls.from_mode_bits(int(text, 16), n_orb)

    def occupied_modes(self, n_orb: int) -> list[int]:
        return bit_positions(self.mode_bits(n_orb))


def bit_positions(bits: int) -> list[int]:
    """Indices of the set bits of ``bits`` in increasing order."""
    out = []
    while bits:
        low = bits & -bits
        out.append(low.bit_length() - 1)
        bits ^= low
    return out


def hartree_fock(n_alpha: int, n_beta: int) -> Determinant:
    """Aufbau determinant filling the lowest orbitals of each spin."""
    return Determinant((1 << n_alpha) - 1, (1 << n_beta) - 1)


def spin_strings(n_orb: int, n_elec: int) -> list[int]:
    """All occupation bitmasks of ``n_elec`` electrons in ``n_orb`` orbitals, ascending."""
    return sorted(sum(1 << i for i in occ) for occ in combinations(range(n_orb), n_elec))


def sector_dimension(n_orb: int, n_alpha: int, n_beta: int) -> int:
    return comb(n_orb, n_alpha) * comb(n_orb, n_beta)


def sector_determinants(n_orb: int, n_alpha: int, n_beta: int) -> list[Determinant]:
    """Every determinant of the (n_alpha, n_beta) sector, sorted by mode bitmask."""
    dets = [
        Determinant(a, b)
        for a, b in product(spin_strings(n_orb, n_alpha), spin_strings(n_orb, n_beta))
    ]
    dets.sort(key=lambda d: d.mode_bits(n_orb))
    return dets
