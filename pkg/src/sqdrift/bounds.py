"""Closed-form convergence and sampling-failure bounds for qDRIFT-based SKQD.

Every quantity is a pure function of :class:`BoundParams` and
:class:`SpectralData`. Regimes in which a bound carries no information
(non-positive perturbed overlap or gap, non-positive adjusted
concentration, failure bound at or above one) are flagged in
``BoundReport.vacuous`` instead of raising.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

LN2 = math.log(2.0)
XI_TILDE_CONSTANT = 1.0


@dataclass(frozen=True)
class SpectralData:
    """Spectral facts of ``H`` restricted to the particle sector of interest."""

    e0: float
    e1: float
    e_max: float
    h_norm: float
    gamma0_sq: float

    def __post_init__(self):
        if not (self.e0 <= self.e1 + 1e-12 and self.e1 <= self.e_max + 1e-12):
            raise ValueError(f"eigenvalues out of order: {self.e0}, {self.e1}, {self.e_max}")
        if not -1e-12 <= self.gamma0_sq <= 1 + 1e-12:
            raise ValueError(f"overlap {self.gamma0_sq} outside [0, 1]")

    @property
    def delta(self) -> float:
        return self.e1 - self.e0

    @property
    def lemma_time(self) -> float:
        """Krylov time step ``pi / (E_max - E_0)``."""
        return math.pi / (self.e_max - self.e0)

    def to_json(self) -> dict:
        return {**asdict(self), "delta": self.delta}


@dataclass(frozen=True)
class BoundParams:
    d: int
    n_steps: int
    n_rand: int
    shots: int
    delta_conf: float
    eps_reg: float
    n_qubits: int
    l_important: int
    alpha0: float
    beta0: float
    lam: float
    t: float

    def __post_init__(self):
        if self.d < 1 or self.d % 2 == 0:
            raise ValueError(f"Krylov dimension must be odd and >= 1, got {self.d}")
        if not 0 < self.delta_conf < 1:
            raise ValueError(f"confidence parameter delta must lie in (0, 1), got {self.delta_conf}")
        for name in ("n_steps", "n_rand", "shots", "n_qubits", "l_important"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.eps_reg < 0 or self.lam < 0 or self.t < 0:
            raise ValueError("eps_reg, lambda and t must be non-negative")
        for name in ("alpha0", "beta0"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")

    @classmethod
    def from_json(cls, doc: dict) -> BoundParams:
        doc = dict(doc)
        if "lambda" in doc:
            doc["lam"] = doc.pop("lambda")
        return cls(**doc)


def _log_term(n_qubits: int, delta: float) -> float:
    """``ln(2^(n+1) / delta)`` without forming the power."""
    return (n_qubits + 1) * LN2 - math.log(delta)


def epsilon_q(p: BoundParams) -> float:
    """Finite-randomisation error of the overlap matrix, bias term ``t(d-1)lambda/N``."""
    if not 0 < p.delta_conf < 1:
        raise ValueError("delta must lie in (0, 1)")
    tl = p.t * p.lam
    fluct = math.sqrt(11.0 * _log_term(p.n_qubits, p.delta_conf) / (p.n_steps * p.n_rand))
    return p.d * (p.d - 1) * tl * (p.t * (p.d - 1) * p.lam / p.n_steps + fluct)


def epsilon_q_alt(p: BoundParams) -> float:
    """Same bound with the bias term written as ``2 t lambda / N``."""
    tl = p.t * p.lam
    fluct = math.sqrt(11.0 * _log_term(p.n_qubits, p.delta_conf) / (p.n_steps * p.n_rand))
    return p.d * (p.d - 1) * tl * (2.0 * tl / p.n_steps + fluct)


def epsilon_sample(p: BoundParams) -> float:
    """Per-realisation amplitude error ``t^2 lambda^2 / N + t lambda sqrt(11 ln(2^(n+1)/delta) / N)``."""
    tl = p.t * p.lam
    return tl * tl / p.n_steps + tl * math.sqrt(11.0 * _log_term(p.n_qubits, p.delta_conf) / p.n_steps)


def krylov_decay(d: int, gap: float, h_norm: float) -> float:
    return (1.0 + math.pi * gap / (4.0 * h_norm)) ** (-2 * d + 1)


@dataclass
class BoundReport:
    eps_q: float = math.nan
    eps_q_alt: float = math.nan
    chi: float = math.nan
    zeta: float = math.nan
    gamma0_prime_sq: float = math.nan
    delta_prime: float = math.nan
    delta_prime_alt: float = math.nan
    xi: float = math.nan
    xi_tilde: float = math.nan
    alpha_l: float = math.nan
    beta_l: float = math.nan
    beta_l_alt: float = math.nan
    eps: float = math.nan
    p: float = math.nan
    p_fail: float = math.nan
    energy_bound: float = math.nan
    xi_tilde_constant: float = XI_TILDE_CONSTANT
    vacuous: list[str] = field(default_factory=list)

    @property
    def is_vacuous(self) -> bool:
        return bool(self.vacuous)

    def to_json(self) -> dict:
        out = {}
        for key, value in asdict(self).items():
            if isinstance(value, float) and not math.isfinite(value):
                value = None
            out[key] = value
        out["is_vacuous"] = self.is_vacuous
        return out


def xi_bound(p: BoundParams, s: SpectralData, report: BoundReport | None = None) -> BoundReport:
    """Energy error ``xi`` of regularised qDRIFT Krylov diagonalisation."""
    r = report if report is not None else BoundReport()
    r.eps_q = epsilon_q(p)
    r.eps_q_alt = epsilon_q_alt(p)
    r.chi = 2.0 * r.eps_q * s.h_norm
    r.zeta = 2.0 * p.d * (p.eps_reg + r.eps_q)
    r.gamma0_prime_sq = s.gamma0_sq - 2.0 * p.eps_reg - 2.0 * r.eps_q
    if r.gamma0_prime_sq <= 0:
        r.vacuous.append("gamma0_prime_sq<=0")
        r.xi = math.inf
        return r
    r.delta_prime = s.delta - r.chi / r.gamma0_prime_sq
    if s.gamma0_sq > 0:
        r.delta_prime_alt = s.delta - r.chi / s.gamma0_sq
    if r.delta_prime <= 0:
        r.vacuous.append("delta_prime<=0")
        r.xi = math.inf
        return r
    g2 = r.gamma0_prime_sq
    decay = krylov_decay(p.d, r.delta_prime, s.h_norm)
    r.xi = r.chi / g2 + 6.0 * s.h_norm / g2 * (2.0 * r.chi / r.delta_prime + r.zeta + 8.0 * decay)
    return r


def xi_tilde_of(xi: float, gap: float) -> float:
    """State-error proxy ``C * xi / gap`` with the constant ``C`` fixed to 1."""
    if gap <= 0:
        return math.inf
    return XI_TILDE_CONSTANT * xi / gap


def adjusted_concentration(alpha0: float, beta0: float, xi_tilde: float) -> tuple[float, float]:
    """Concentration of the Krylov state: ``alpha0 - 2 sqrt(xi~)``, ``beta0 - 2 sqrt(xi~)``."""
    shift = 2.0 * math.sqrt(xi_tilde) if math.isfinite(xi_tilde) else math.inf
    return alpha0 - shift, beta0 - shift


def beta_l_alt(beta0: float, xi: float, gap: float) -> float:
    """``beta0 - 2 sqrt2 sqrt(1 - sqrt(1 - xi/gap))``, NaN when ``xi/gap > 1``."""
    if gap <= 0 or not math.isfinite(xi):
        return math.nan
    ratio = xi / gap
    if ratio > 1:
        return math.nan
    return beta0 - 2.0 * math.sqrt(2.0) * math.sqrt(1.0 - math.sqrt(1.0 - ratio))


def failure_formula(l_important: int, delta: float, p: float, shots: int, n_rand: int) -> float:
    """``L ((1 - delta)(1 - p)^S + delta)^{N_r}``."""
    base = (1.0 - delta) * (1.0 - p) ** shots + delta
    return l_important * base ** n_rand


def failure_probability(p: BoundParams, xi_tilde: float, gamma0_sq: float,
                        report: BoundReport | None = None) -> BoundReport:
    """Probability bound of missing at least one of the ``L`` important bitstrings."""
    r = report if report is not None else BoundReport()
    r.xi_tilde = xi_tilde
    r.alpha_l, r.beta_l = adjusted_concentration(p.alpha0, p.beta0, xi_tilde)
    r.eps = epsilon_sample(p)
    amp = math.sqrt(max(gamma0_sq, 0.0)) * math.sqrt(r.beta_l) / p.d if r.beta_l > 0 else -math.inf
    if r.beta_l <= 0:
        r.vacuous.append("beta_l<=0")
    margin = amp - r.eps
    if margin <= 0:
        if r.beta_l > 0:
            r.vacuous.append("amplitude<=eps")
        r.p = 0.0
    else:
        r.p = margin * margin
    r.p_fail = failure_formula(p.l_important, p.delta_conf, r.p, p.shots, p.n_rand)
    if r.p_fail >= 1:
        r.vacuous.append("p_fail>=1")
    return r


def energy_error_bound(h_norm: float, alpha0: float) -> float:
    """``sqrt(8) ||H|| (1 - sqrt(alpha0))^(1/2)``."""
    if not -1e-12 <= alpha0 <= 1 + 1e-12:
        raise ValueError(f"alpha0 must lie in [0, 1], got {alpha0}")
    return math.sqrt(8.0) * h_norm * math.sqrt(max(0.0, 1.0 - math.sqrt(min(max(alpha0, 0.0), 1.0))))


def evaluate(p: BoundParams, s: SpectralData) -> BoundReport:
    """Full bound chain for one parameter set."""
    r = xi_bound(p, s)
    xt = xi_tilde_of(r.xi, s.delta)
    r.beta_l_alt = beta_l_alt(p.beta0, r.xi, s.delta)
    failure_probability(p, xt, s.gamma0_sq, r)
    r.energy_bound = energy_error_bound(s.h_norm, p.alpha0)
    return r


def grid(base: BoundParams, s: SpectralData, axes: dict) -> list[dict]:
    """One flat row per point of the Cartesian product of ``axes`` values."""
    names = sorted(axes)
    rows = []
    for values in itertools.product(*(axes[n] for n in names)):
        params = replace(base, **dict(zip(names, values)))
        row = {n: v for n, v in zip(names, values)}
        row.update(evaluate(params, s).to_json())
        row["vacuous"] = ";".join(row["vacuous"])
        rows.append(row)
    return rows


@dataclass(frozen=True)
class ConcentrationProfile:
    """Descending squared amplitudes with cumulative weight ``alpha_L``."""

    sorted_weights: np.ndarray
    order: np.ndarray
    cumulative: np.ndarray

    def alpha_of(self, l_count: int) -> float:
        if not 1 <= l_count <= len(self.sorted_weights):
            raise ValueError(f"L must lie in 1..{len(self.sorted_weights)}")
        return float(self.cumulative[l_count - 1])

    def beta_of(self, l_count: int) -> float:
        if not 1 <= l_count <= len(self.sorted_weights):
            raise ValueError(f"L must lie in 1..{len(self.sorted_weights)}")
        return float(self.sorted_weights[l_count - 1])

    def important(self, l_count: int) -> np.ndarray:
        """Indices (into the input vector) of the ``L`` heaviest components."""
        return self.order[:l_count]


def concentration_profile(vector, tol: float = 1e-8) -> ConcentrationProfile:
    v = np.asarray(getattr(vector, "amplitudes", vector))
    w = np.abs(v) ** 2
    total = w.sum()
    if abs(total - 1.0) > tol:
        raise ValueError(f"vector is not normalised (squared norm {total})")
    order = np.lexsort((np.arange(len(w)), -w))
    sw = w[order]
    return ConcentrationProfile(sw, order, np.cumsum(sw))
