import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loeff.errors import ConfigurationError
from loeff.fock import MultiModeState, TruncationSpec, fock, min_eigenvalue
from loeff.interferometer import (
    apply_interferometer,
    as_mode_unitary,
    beamsplitter,
    compose_mesh,
    embed,
    haar_random,
    lift_interferometer,
    mesh_decompose,
    permutation_unitary,
    phase,
)
from oracles import fock_amplitude, random_density

seeds = st.integers(0, 2**31)


def test_beamsplitter_maps_psi_to_psi_prime():
    out = apply_interferometer(fock([1, 0], 1), beamsplitter(-np.pi / 4))
    t = out.trunc
    v = np.zeros(t.dim)
    v[t.index((1, 0))] = v[t.index((0, 1))] = 1 / np.sqrt(2)
    assert np.allclose(out.matrix, np.outer(v, v), atol=1e-15)


def test_beamsplitter_convention():
    th, ph = 0.3, 0.7
    b = beamsplitter(th, ph)
    assert b[0, 1] == pytest.approx(np.exp(1j * ph) * np.sin(th))
    assert b[1, 0] == pytest.approx(-np.exp(-1j * ph) * np.sin(th))
    assert np.allclose(beamsplitter(th, ph).conj().T, beamsplitter(-th, ph))


def test_identity_lifts_to_identity():
    t = TruncationSpec(3, 2)
    assert np.allclose(lift_interferometer(np.eye(3), t), np.eye(t.dim), atol=1e-15)


def test_non_unitary_rejected():
    with pytest.raises(ConfigurationError):
        as_mode_unitary(np.array([[1, 1], [0, 1]]))
    with pytest.raises(ConfigurationError):
        lift_interferometer(np.eye(2), TruncationSpec(3, 1))


def test_lift_matches_permanents_on_three_modes():
    u = haar_random(3, 42)
    t = TruncationSpec(3, 3)
    lifted = lift_interferometer(u, t)
    worst = 0.0
    states = [ns for ns in t.basis() if sum(ns) <= 3]
    for out_ns, in_ns in itertools.product(states, repeat=2):
        ref = fock_amplitude(u, out_ns, in_ns)
        worst = max(worst, abs(lifted[t.index(out_ns), t.index(in_ns)] - ref))
    assert worst <= 1e-9


def test_photon_number_sectors_are_exactly_decoupled():
    t = TruncationSpec(3, 2)
    lifted = lift_interferometer(haar_random(3, 1), t)
    tot = t.total_photons()
    assert np.all(lifted[tot[:, None] != tot[None, :]] == 0)


@given(seeds)
def test_lift_respects_composition(seed):
    rng = np.random.default_rng(seed)
    u, v = haar_random(3, rng), haar_random(3, rng)
    t = TruncationSpec(3, 2)
    lhs = lift_interferometer(u @ v, t)
    rhs = lift_interferometer(u, t) @ lift_interferometer(v, t)
    tot = t.total_photons()
    block = tot <= t.cutoff
    assert np.max(np.abs((lhs - rhs)[np.ix_(block, block)])) <= 1e-9


@given(seeds, st.integers(1, 6))
def test_mesh_reconstructs_unitary(seed, n):
    u = haar_random(n, seed)
    elements, phases = mesh_decompose(u)
    assert len(elements) <= n * (n - 1) // 2
    assert np.max(np.abs(compose_mesh(elements, phases) - u)) <= 1e-12


@given(seeds)
def test_apply_preserves_trace_and_spectrum(seed):
    rng = np.random.default_rng(seed)
    t = TruncationSpec(2, 2)
    # weight only on total photons <= 2 so the lift is exact
    keep = t.total_photons() <= 2
    rho = np.zeros((t.dim, t.dim), dtype=complex)
    rho[np.ix_(keep, keep)] = random_density(rng, int(keep.sum()))
    s = MultiModeState(t, rho)
    out = apply_interferometer(s, haar_random(2, rng))
    assert abs(out.trace() - 1) <= 1e-10
    assert np.allclose(np.linalg.eigvalsh(out.matrix), np.linalg.eigvalsh(s.matrix), atol=1e-10)
    assert min_eigenvalue(out) >= -1e-10


def test_haar_moments():
    rng = np.random.default_rng(0)
    n, draws = 4, 4000
    x = np.array([abs(haar_random(n, rng)[0, 0]) ** 2 for _ in range(draws)])
    assert x.mean() == pytest.approx(1 / n, abs=0.01)
    assert (x**2).mean() == pytest.approx(2 / (n * (n + 1)), abs=0.01)


def test_haar_is_seeded():
    assert np.array_equal(haar_random(3, 5), haar_random(3, 5))


def test_embed_phase_and_permutation():
    b = embed(beamsplitter(0.2), 4, [1, 3])
    assert b[1, 3] == pytest.approx(np.sin(0.2)) and b[0, 0] == 1
    assert phase(1, np.pi, 2)[1, 1] == pytest.approx(-1)
    s = apply_interferometer(fock([2, 0, 1], 2), permutation_unitary([2, 0, 1]))
    assert np.allclose(s.matrix, fock([1, 2, 0], 2).matrix, atol=1e-15)
