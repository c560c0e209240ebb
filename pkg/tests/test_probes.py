import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from andersonlab import probes
from andersonlab.lattice import DistributionSpec, LatticeError, build_box, choose_decoupling_sublattice, sample_disorder
from andersonlab.spectral import EnergyInterval, eigensolve, indicator

UNIT = DistributionSpec.uniform(0, 1)


# -- smooth cutoff ------------------------------------------------------------

@pytest.mark.parametrize("E", [0.1, 0.01, 3.0])
def test_cutoff_plateaus_and_midpoint(E):
    f = probes.make_cutoff(E)
    t = np.array([0.0, 0.5 * E, E, 1.5 * E, 2 * E, 5 * E])
    v = f(t)
    assert list(v[[0, 1, 2, 4, 5]]) == [1, 1, 1, 0, 0]
    assert v[3] == pytest.approx(0.5, abs=1e-15)
    assert probes.step_profile(0.5) == 0.5
    grid = np.linspace(0, 3 * E, 3001)
    assert np.all(np.diff(f(grid)) <= 0)


def _h_mp(x):
    return 1 / (1 + mpmath.exp(1 / (1 - x) - 1 / x))


@pytest.mark.parametrize("order", range(1, 8))
@pytest.mark.parametrize("x", [0.05, 0.2, 0.5, 0.73, 0.95])
def test_profile_derivatives_match_mpmath(order, x):
    mpmath.mp.dps = 40
    ref = float(mpmath.diff(_h_mp, mpmath.mpf(x), order))
    got = float(probes.step_derivative(np.array([x]), order)[0])
    assert got == pytest.approx(ref, rel=1e-9, abs=1e-12 * max(1.0, abs(ref)))


def test_profile_derivatives_vanish_outside():
    x = np.array([-1.0, 0.0, 1.0, 2.0, 1e-4, 1 - 1e-4])
    for j in range(1, 8):
        d = probes.step_derivative(x, j)
        assert np.all(d[:4] == 0)
        assert np.all(np.isfinite(d))
    with pytest.raises(probes.ProbeError):
        probes.step_derivative(x, 8)


def test_scaled_derivative_bounds_do_not_depend_on_E():
    a = probes.verify_cutoff(0.1, 2)
    b = probes.verify_cutoff(0.01, 2)
    assert a.ok and b.ok
    assert a.orders == list(range(1, 8))
    assert np.allclose(a.scaled_sup, b.scaled_sup, rtol=1e-9)
    assert a.scaled_sup[0] == pytest.approx(2.0, rel=1e-6)  # |h'(1/2)| = 2 is the maximum


def test_cutoff_rejects_nonpositive_scale():
    with pytest.raises(probes.ProbeError):
        probes.make_cutoff(0.0)


# -- trace lemma ----------------------------------------------------------------

def _case(h0, w, e0, f, g, equality=False):
    return probes.LemmaCase(np.asarray(h0, float), np.asarray(w, float), e0, f, g, "t", equality)


def test_lemma_equality_when_g_is_one():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((6, 6))
    h0 = a + a.T
    w = np.diag(rng.uniform(0, 1, 6))
    case = _case(h0, w, 1.0, probes.make_cutoff(0.5), probes._one, True)
    assert abs(probes.check_trace_lemma(case)) <= 1e-12


def test_lemma_zero_when_f_vanishes_on_spectrum():
    h0 = np.diag([5.0, 6.0, 7.0])
    w = np.diag([0.1, 0.2, 0.3])
    case = _case(h0, w, 1.0, probes.make_cutoff(0.5), probes.make_cutoff(1.0))
    assert probes.check_trace_lemma(case) == 0


def test_lemma_diagonal_example_by_hand():
    # commuting case: tr f(H) W g(H0) - tr f(H) W = Σ f(h_i + w_i) w_i (g(h_i) - 1)
    h0 = np.diag([0.0, 0.5, 1.5])
    w = np.diag([0.2, 0.3, 0.0])
    g = indicator(-math.inf, 1.0)
    f = indicator(-math.inf, 0.9)
    case = _case(h0, w, 0.9, f, g)
    assert probes.check_trace_lemma(case) == pytest.approx(0.0, abs=1e-15)


def test_lemma_hypothesis_violations():
    h0 = np.diag([0.0, 1.0])
    w = np.eye(2) * 0.1
    with pytest.raises(probes.LemmaHypothesisError, match="vanish above"):
        probes.check_trace_lemma(_case(h0, w, 0.5, indicator(-math.inf, 2.0), probes._one))
    with pytest.raises(probes.LemmaHypothesisError, match="g must"):
        probes.check_trace_lemma(_case(h0, w, 0.5, indicator(-math.inf, 0.5), indicator(-math.inf, -1.0)))
    with pytest.raises(probes.LemmaHypothesisError, match="symmetric"):
        probes.check_trace_lemma(_case(h0, np.array([[0, 1], [0, 0]]), 0.5, probes._one, probes._one))
    with pytest.raises(probes.LemmaHypothesisError, match="exceeds 16"):
        probes.check_trace_lemma(_case(np.eye(17), np.eye(17), 0.5, probes._one, probes._one))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_generated_cases_are_valid_and_nonnegative(seed):
    for case in probes.generate_lemma_cases(10, seed, max_dim=8):
        probes.validate_lemma_case(case)
        assert probes.check_trace_lemma(case) >= -1e-9


def test_lemma_corpus_families():
    reports = probes.lemma_corpus(50, 0)
    assert {r.family for r in reports} == {"diagonal", "symmetric"}
    assert sum(r.cases for r in reports) == 50
    assert sum(r.equality_cases for r in reports) == 10
    assert all(r.violations == 0 and r.rejected == 0 for r in reports)


# -- kernel decay -----------------------------------------------------------------

def test_decay_envelope_is_nonincreasing():
    r = np.array([0, 1, 1, 2, 3, 3])
    v = np.array([1.0, 0.1, 0.5, 0.05, 0.2, 0.0])
    radii, env = probes.decay_envelope(r, v)
    assert list(radii) == [0, 1, 2, 3]
    assert list(env) == [1.0, 0.5, 0.2, 0.2]


def test_decay_profile_shape_and_center():
    box = build_box(1, 32)[0]
    prof = probes.kernel_decay_profile(box, UNIT, 0.5, 4, 0)
    assert prof.values.shape == (32,)
    center = np.argmin(prof.radius)
    assert prof.values[center] == prof.values.max()
    assert prof.fit_range == (2.0, 8.0)
    with pytest.raises(probes.ProbeError):
        probes.kernel_decay_profile(box, UNIT, 0.5, 2, 0, fit_range=(40, 50))


# -- heat comparison ---------------------------------------------------------------

def test_heat_trivial_cases():
    box, idx = build_box(1, 16)
    field = sample_disorder(UNIT, box, 0)
    gamma = choose_decoupling_sublattice(box, (3,))
    c0 = probes.heat_comparison(box, field, gamma, (3,), 0.0, 0.25)
    assert c0.full == pytest.approx(1) and c0.perp == pytest.approx(1) and c0.sublattice == pytest.approx(1)
    assert c0.tail == 1.0 and c0.split_slack >= 0
    # the zero potential makes every comparison an equality
    zero = field.replace(np.zeros(16))
    c = probes.heat_comparison(box, zero, gamma, (3,), 2.0, 0.25)
    assert c.full == pytest.approx(c.perp, abs=1e-14) and c.perp == pytest.approx(c.sublattice, abs=1e-14)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_heat_inequalities_hold(seed):
    box = build_box(1, 16)[0]
    rep, checks = probes.heat_probe(box, UNIT, 3, (0.5, 2.0, 8.0), 0.25, seed)
    assert rep.monotone_violations == 0 and rep.split_violations == 0
    assert rep.checks == len(checks)


def test_heat_rejects_bad_inputs():
    box = build_box(1, 16)[0]
    field = sample_disorder(UNIT, box, 0)
    gamma = choose_decoupling_sublattice(box, (3,))
    with pytest.raises(probes.ProbeError, match="sublattice"):
        probes.heat_comparison(box, field, gamma, (gamma.offset[0],), 1.0, 0.25)
    with pytest.raises(probes.ProbeError):
        probes.heat_comparison(box, field.replace(-np.ones(16)), gamma, (3,), 1.0, 0.25)
    with pytest.raises(LatticeError, match="divisible by 4"):
        probes.heat_comparison(build_box(1, 18)[0], sample_disorder(UNIT, build_box(1, 18)[0], 0), gamma, (3,), 1.0, 0.25)


# -- decoupling ------------------------------------------------------------------------

def test_t_E_example_and_identity():
    p = probes.DecouplingParams(1, 0.01, 0.1)
    expected = 0.04 ** (-1.4) - 3 * math.log(2) / 0.04
    assert p.t == pytest.approx(expected, rel=1e-12)
    assert p.t == pytest.approx(38.611, abs=1e-3)
    lhs, rhs = p.identity_sides()
    assert lhs == pytest.approx(rhs, rel=1e-12)
    assert p.target == pytest.approx(2 * rhs)


def test_t_E_regime():
    assert not probes.DecouplingParams(1, 0.2, 0.1).valid
    assert probes.largest_valid_energy(1, 0.1, [0.01, 0.02, 0.05, 0.1, 0.2]) is not None
    assert probes.largest_valid_energy(1, 0.1, [1.0, 2.0]) is None
    with pytest.raises(probes.ProbeError):
        probes.DecouplingParams(1, 0.1, 0.5)


def test_chain_with_empty_interval_is_zero():
    box, idx = build_box(1, 16)
    field = sample_disorder(UNIT, box, 0)
    from andersonlab.lattice import dense_hamiltonian, mask_potential

    zero = idx.index_of((0,))
    es = eigensolve(dense_hamiltonian(box, field), need_vectors=True)
    es_p = eigensolve(dense_hamiltonian(box, mask_potential(field, [i for i in range(16) if i != zero])), need_vectors=True)
    c = probes.cauchy_schwarz_chain(es, es_p, zero, EnergyInterval(-2.0, -1.0), 0.2)
    assert c.trace == 0 and c.smoothed == 0 and c.cauchy_schwarz == 0 and c.averaged == 0
    assert c.violation() <= 0


def test_decoupling_report_small_run():
    box = build_box(1, 16)[0]
    rep = probes.evaluate_decoupling_bound(box, UNIT, 0.2, 0.1, 5, 0)
    assert rep.regime.startswith("outside") and rep.t_used == pytest.approx(5.0)
    assert rep.chain_violations == 0 and rep.domination_failures == 0 and rep.smoothing_failures == 0
    assert rep.identity is None and rep.notes
    inside = probes.evaluate_decoupling_bound(box, UNIT, 0.01, 0.1, 3, 0, k=(5,))
    assert inside.identity[0] == pytest.approx(inside.identity[1], rel=1e-12)
    with pytest.raises(LatticeError, match="divisible by 4"):
        probes.evaluate_decoupling_bound(build_box(1, 30)[0], UNIT, 0.2, 0.1, 2, 0)
    with pytest.raises(probes.ProbeError):
        probes.evaluate_decoupling_bound(box, UNIT, 0.2, 0.1, 2, 0, interval=EnergyInterval(0, 0.5))
