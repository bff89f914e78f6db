import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loeff.channels import multimode_loss
from loeff.errors import ConfigurationError, InfeasibleStateError
from loeff.fock import MultiModeState, TruncationSpec, fock, mixture, pure, tensor, vacuum
from loeff.fock import thermal
from loeff.harness import lossy_single_photon, random_fock_bounded_state, random_single_photon_source
from loeff.interferometer import apply_interferometer, beamsplitter, haar_random
from loeff.efficiency import (
    EXACT,
    UPPER,
    Tolerances,
    d_efficiency,
    efficiency,
    s_efficiency,
    single_mode_efficiency,
    transform_certificate,
    u_efficiency_upper,
)

FAST = Tolerances(restarts=2, maxfev=40)

psi = fock([1, 0], 2)
psi_prime = apply_interferometer(psi, beamsplitter(-np.pi / 4))


def phi(p):
    return pure({(1, 1): np.sqrt(p), (0, 0): np.sqrt(1 - p)}, 2)


@pytest.mark.parametrize("p", [0.1, 0.25, 0.5, 0.75, 0.9])
def test_lossy_photon_mixture_efficiency_is_p(p):
    res = single_mode_efficiency(lossy_single_photon(p, 3))
    assert res.value == pytest.approx(p, abs=1e-6)
    assert res.bound_type == EXACT
    assert res.certificate.verify(lossy_single_photon(p, 3))


def test_single_photon_and_vacuum():
    assert single_mode_efficiency(fock([1], 3)).value == pytest.approx(1, abs=1e-6)
    assert single_mode_efficiency(vacuum(1, 3)).value <= 1e-5


@given(st.integers(0, 2**31))
def test_two_level_states_match_closed_form(seed):
    s, exact = random_single_photon_source(np.random.default_rng(seed), 2)
    assert single_mode_efficiency(s).value == pytest.approx(exact, abs=2e-6)


def test_fock_state_is_maximal():
    # any higher Fock state has nonzero top population, forcing p = 1
    assert single_mode_efficiency(fock([2], 3)).value == pytest.approx(1, abs=1e-6)


def test_lossy_fock_two():
    s = multimode_loss(fock([2], 2), [0.6])
    assert single_mode_efficiency(s).value == pytest.approx(0.6, abs=1e-6)


def test_worked_example_values():
    assert s_efficiency(psi_prime, 1).value == pytest.approx(0.5, abs=1e-6)
    assert s_efficiency(psi_prime, 2).value == pytest.approx(1.0, abs=1e-6)
    assert d_efficiency(psi, 2).value == pytest.approx(1.0, abs=1e-6)
    assert d_efficiency(psi_prime, 2).value == pytest.approx(2.0, abs=1e-6)
    assert s_efficiency(phi(0.4), 1).value == pytest.approx(0.4, abs=1e-6)


def test_products_of_mixtures():
    a, b = lossy_single_photon(0.5, 2), lossy_single_photon(0.8, 2)
    s = tensor(a, b)
    assert s_efficiency(s, 1).value == pytest.approx(0.8, abs=1e-6)
    assert s_efficiency(s, 2).value == pytest.approx(1.3, abs=1e-6)
    assert d_efficiency(s, 2).value == pytest.approx(1.3, abs=1e-6)
    assert d_efficiency(s, 1).value == pytest.approx(0.8, abs=1e-6)


def test_d_certificate_reconstructs():
    s = random_fock_bounded_state(np.random.default_rng(4), 2, 2, rank=2)
    res = d_efficiency(s, 2)
    c = res.certificate
    assert c.verify(s)
    assert c.margin >= -1e-9
    assert res.value == pytest.approx(c.value)


def test_u_on_psi_prime_undoes_beamsplitter():
    res = u_efficiency_upper(psi_prime, 2, Tolerances(restarts=3, maxfev=150))
    assert res.bound_type == UPPER
    assert res.value == pytest.approx(1.0, abs=1e-3)
    assert res.certificate.residual(psi_prime) <= 1e-8


def test_u_single_mode_equals_single():
    s = lossy_single_photon(0.3, 2)
    assert u_efficiency_upper(s, 1).value == pytest.approx(single_mode_efficiency(s).value, abs=1e-9)


def test_u_requires_exact_lift():
    s = random_fock_bounded_state(np.random.default_rng(0), 2, 1, max_photons=2)
    with pytest.raises(ConfigurationError):
        u_efficiency_upper(s, 1, FAST)


@pytest.mark.parametrize("seed", range(6))
def test_chain_and_monotone_in_k(seed):
    s = random_fock_bounded_state(np.random.default_rng(seed), 2, 2, rank=2)
    vals = {}
    for k in (1, 2):
        es = s_efficiency(s, k).value
        eu = u_efficiency_upper(s, k, FAST, seed=seed).value
        ed = d_efficiency(s, k, FAST, seed=seed).value
        assert es <= eu + k * 1e-6
        assert eu <= ed
        vals[k] = (es, eu, ed)
    for i in range(3):
        assert vals[1][i] <= vals[2][i] + 1e-6


@pytest.mark.parametrize("seed", range(20))
def test_random_two_photon_pure_states_have_full_d(seed):
    rng = np.random.default_rng(seed)
    trunc = TruncationSpec(2, 2)
    amps = {ns: complex(rng.standard_normal(), rng.standard_normal()) for ns in trunc.basis() if sum(ns) <= 2}
    s = pure(amps, 2)
    assert d_efficiency(s, 2).value == pytest.approx(2.0, abs=1e-6)


def test_transform_certificate_identity_and_beamsplitter():
    res = d_efficiency(psi, 2)
    same = transform_certificate(res.certificate, np.eye(2))
    assert same.residual(psi) <= 1e-12
    moved = transform_certificate(res.certificate, beamsplitter(-np.pi / 4))
    assert moved.residual(psi_prime) <= 1e-12
    assert moved.value == res.value


@settings(max_examples=10)
@given(st.integers(0, 2**31))
def test_transform_certificate_random(seed):
    rng = np.random.default_rng(seed)
    s = random_fock_bounded_state(rng, 2, 2, rank=2)
    u = haar_random(2, rng)
    c = transform_certificate(d_efficiency(s, 1, FAST).certificate, u)
    assert c.residual(apply_interferometer(s, u)) <= 1e-8


def test_dispatch_and_validation():
    assert efficiency(psi, "d", 2).measure == "d"
    assert efficiency(lossy_single_photon(0.5), "single").value == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(ConfigurationError):
        efficiency(psi, "q", 1)
    with pytest.raises(ConfigurationError):
        d_efficiency(psi, 3)
    with pytest.raises(ConfigurationError):
        single_mode_efficiency(psi)
    with pytest.raises(ConfigurationError):
        Tolerances(bisect_tol=0)
    half = MultiModeState(TruncationSpec(1, 1), np.diag([0.25, 0.25]), subnormalized=True)
    with pytest.raises(ConfigurationError):
        single_mode_efficiency(half)
    bad = MultiModeState(TruncationSpec(1, 1), np.array([[0.5, 0.8], [0.8, 0.5]]), validate=False)
    with pytest.raises(InfeasibleStateError):
        single_mode_efficiency(bad)


def test_thermal_truncated_bound():
    # a thermal state cut at C photons keeps a tail population that forces p >= C/(C+3)
    for c in (4, 8):
        s = thermal(0.5, c, warn_threshold=1.0)
        s = MultiModeState(s.trunc, s.matrix / s.trace())
        assert single_mode_efficiency(s).value >= c / (c + 3) - 1e-6


def test_mixed_pair_efficiency_matches_closed_form():
    s = mixture([(0.3, fock([1], 1)), (0.7, fock([0], 1))])
    assert single_mode_efficiency(s).value == pytest.approx(0.3, abs=1e-6)
