import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bound_oracle import MOLECULAR, PINNED, PINNED_IDS, chain, params
from sqdrift import oracle
from sqdrift.bounds import (
    BoundParams,
    SpectralData,
    concentration_profile,
    energy_error_bound,
    epsilon_q,
    epsilon_q_alt,
    epsilon_sample,
    evaluate,
    failure_formula,
    failure_probability,
    grid,
    xi_bound,
)
from sqdrift.hamiltonian import build_hubbard


FIELDS = ("eps_q", "eps_q_alt", "chi", "zeta", "gamma0_prime_sq", "delta_prime", "delta_prime_alt", "xi",
          "xi_tilde", "alpha_l", "beta_l", "beta_l_alt", "eps", "p", "p_fail", "energy_bound")


def compare(report, expected, rel=1e-12):
    """Every oracle field matches; fields the oracle leaves out must be non-finite or flagged."""
    checked = 0
    for name in FIELDS:
        got = getattr(report, name)
        if name in expected:
            want = float(expected[name])
            assert got == pytest.approx(want, rel=rel, abs=1e-300), name
            checked += 1
    return checked


@pytest.mark.parametrize("name,kw,spectral,flags", PINNED, ids=PINNED_IDS)
def test_pinned_against_mpmath(name, kw, spectral, flags):
    report = evaluate(BoundParams(**kw), SpectralData(**spectral))
    expected = chain(**kw, **spectral)
    assert compare(report, expected) >= 4
    assert report.vacuous == flags


def test_pinned_regression_literals():
    # frozen from the 50-digit evaluation of the small instance (n=4, delta=0.1, N=100, N_r=50)
    p = BoundParams(**params())
    assert epsilon_q(p) == pytest.approx(6 * 2 * (4 / 100 + math.sqrt(11 * math.log(320) / 5000)), rel=1e-14)
    assert epsilon_q(p) == pytest.approx(1.8318151099419872, rel=1e-12)
    assert epsilon_sample(p) == pytest.approx(0.04 + 2 * math.sqrt(11 * math.log(320) / 100), rel=1e-14)


def test_two_epsilon_forms_agree_only_at_d3():
    p3 = BoundParams(**params(d=3))
    assert epsilon_q(p3) == pytest.approx(epsilon_q_alt(p3), rel=1e-15)
    p5 = BoundParams(**params(d=5))
    assert epsilon_q(p5) > epsilon_q_alt(p5)


def test_noiseless_limit_is_pure_decay():
    s = SpectralData(-1.0, -0.5, 1.0, 1.0, 0.8)
    p = BoundParams(**params(d=7, lam=0.0))
    r = xi_bound(p, s)
    assert r.chi == 0 and r.zeta == 0
    assert r.xi == pytest.approx(48 / 0.8 * (1 + math.pi * 0.5 / 4) ** (-13), rel=1e-14)


def test_xi_decreasing_in_d_noiseless():
    s = SpectralData(-1.0, -0.5, 1.0, 1.0, 0.8)
    xs = [xi_bound(BoundParams(**params(d=d, lam=0.0)), s).xi for d in range(1, 30, 2)]
    assert all(b < a for a, b in zip(xs, xs[1:]))


def test_amplitude_below_sampling_error_flagged():
    p = BoundParams(**params(beta0=0.01))
    r = failure_probability(p, 0.0, 0.9)
    assert r.vacuous == ["amplitude<=eps", "p_fail>=1"]
    assert r.p == 0 and r.p_fail == pytest.approx(p.l_important)


def test_trivial_limits():
    assert epsilon_q(BoundParams(**params(d=1))) == 0
    assert energy_error_bound(2.0, 1.0) == 0
    assert energy_error_bound(2.0, 0.0) == pytest.approx(math.sqrt(8) * 2)
    assert failure_formula(7, 0.1, 0.0, 100, 9) == pytest.approx(7)
    assert failure_formula(7, 0.0, 0.3, 10**6, 2) == 0


def test_validation():
    with pytest.raises(ValueError):
        BoundParams(**params(d=4))
    with pytest.raises(ValueError):
        BoundParams(**params(delta_conf=1.0))
    with pytest.raises(ValueError):
        BoundParams(**params(alpha0=1.5))
    with pytest.raises(ValueError):
        SpectralData(0.0, -1.0, 1.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        energy_error_bound(1.0, 2.0)


def test_vacuous_report_serialises_null():
    r = evaluate(BoundParams(**params()), SpectralData(**MOLECULAR))
    doc = json.loads(json.dumps(r.to_json()))
    assert doc["is_vacuous"] and doc["xi"] is None and doc["delta_prime"] is None


def test_report_is_pure():
    kw, spectral = PINNED[1][1], PINNED[1][2]
    a = evaluate(BoundParams(**kw), SpectralData(**spectral))
    b = evaluate(BoundParams(**kw), SpectralData(**spectral))
    assert json.dumps(a.to_json()) == json.dumps(b.to_json())


def test_from_json_accepts_lambda_key():
    doc = params()
    doc["lambda"] = doc.pop("lam")
    assert BoundParams.from_json(doc).lam == 2.0


def test_grid_rows():
    rows = grid(BoundParams(**params()), SpectralData(**MOLECULAR), {"n_steps": [10, 100], "n_rand": [5, 50, 500]})
    assert len(rows) == 6
    assert {(r["n_rand"], r["n_steps"]) for r in rows} == {(a, b) for a in (5, 50, 500) for b in (10, 100)}


monotone_params = st.fixed_dictionaries({
    "d": st.sampled_from([1, 3, 5, 9]), "n_steps": st.integers(1, 10**6), "n_rand": st.integers(1, 10**4),
    "shots": st.integers(1, 10**5), "delta_conf": st.floats(1e-6, 0.5), "lam": st.floats(0.1, 100),
    "t": st.floats(0.01, 3), "n_qubits": st.integers(1, 60),
})


@settings(max_examples=80, deadline=None)
@given(kw=monotone_params)
def test_monotone_directions(kw):
    p = BoundParams(**params(**kw))
    more_n = BoundParams(**params(**{**kw, "n_steps": kw["n_steps"] * 2}))
    more_r = BoundParams(**params(**{**kw, "n_rand": kw["n_rand"] * 2}))
    assert epsilon_q(more_n) <= epsilon_q(p) and epsilon_q(more_r) <= epsilon_q(p)
    assert epsilon_sample(more_n) < epsilon_sample(p)


@settings(max_examples=80, deadline=None)
@given(p=st.floats(1e-6, 0.5), delta=st.floats(0, 0.5), shots=st.integers(1, 1000), n_rand=st.integers(1, 200))
def test_failure_monotone(p, delta, shots, n_rand):
    a = failure_formula(3, delta, p, shots, n_rand)
    assert failure_formula(3, delta, p, shots + 1, n_rand) <= a
    if (1 - delta) * (1 - p) ** shots + delta < 1:
        assert failure_formula(3, delta, p, shots, n_rand + 1) <= a


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0, 1), b=st.floats(0, 1))
def test_energy_bound_decreasing_in_alpha(a, b):
    lo, hi = sorted((a, b))
    assert energy_error_bound(1.5, hi) <= energy_error_bound(1.5, lo)


def test_concentration_examples():
    e = np.zeros(5)
    e[2] = 1
    prof = concentration_profile(e)
    assert prof.alpha_of(1) == 1 and prof.beta_of(1) == 1
    u = np.ones(8) / math.sqrt(8)
    prof = concentration_profile(u)
    assert prof.alpha_of(3) == pytest.approx(3 / 8) and prof.beta_of(3) == pytest.approx(1 / 8)
    with pytest.raises(ValueError):
        concentration_profile(np.ones(3))


def test_concentration_matches_brute_force_on_hubbard4():
    vec = oracle.fci_solve(build_hubbard(4, 1.0, 2.0, 2, 2)).vector
    prof = concentration_profile(vec)
    brute = sorted((abs(c) ** 2 for c in vec), reverse=True)
    assert np.allclose(prof.sorted_weights, brute, atol=1e-15)
    assert prof.cumulative[-1] == pytest.approx(1.0, abs=1e-10)
    assert np.all(np.diff(prof.cumulative) >= 0)
    for l_count in (1, 5, 36):
        assert prof.beta_of(l_count) == prof.sorted_weights[l_count - 1]
