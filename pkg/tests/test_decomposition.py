import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from loeff.decomposition import (
    averaged_transmissivities,
    block_svd,
    is_doubly_stochastic,
    majorization_slack,
    output_transmissivities,
    rq_decompose,
    top_k_sum,
    weak_majorization_holds,
)
from loeff.errors import ConfigurationError
from loeff.interferometer import embed, haar_random

seeds = st.integers(0, 2**31)


def ginibre(rng, n):
    return rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))


def test_rq_of_positive_diagonal():
    a = np.diag([0.3, 1.2, 2.0])
    r, q = rq_decompose(a)
    assert np.allclose(r, a) and np.allclose(q, np.eye(3))


@given(seeds, st.integers(1, 8))
def test_rq_reconstructs(seed, n):
    a = ginibre(np.random.default_rng(seed), n)
    r, q = rq_decompose(a)
    assert np.all(np.tril(r, -1) == 0)
    assert np.max(np.abs(r @ q - a)) <= 1e-10
    assert np.max(np.abs(q.conj().T @ q - np.eye(n))) <= 1e-10
    assert np.all(np.diag(r).real >= 0) and np.all(np.diag(r).imag == 0)


def test_rq_agrees_with_scipy_up_to_phases():
    a = ginibre(np.random.default_rng(6), 6)
    r, _ = rq_decompose(a)
    r_ref, _ = scipy.linalg.rq(a)
    assert np.allclose(np.abs(r), np.abs(r_ref), atol=1e-10)


def test_rq_rank_deficient():
    rng = np.random.default_rng(0)
    a = ginibre(rng, 4)
    a[:, 2] = 0
    r, q = rq_decompose(a)
    assert np.max(np.abs(r @ q - a)) <= 1e-10
    assert np.max(np.abs(q.conj().T @ q - np.eye(4))) <= 1e-10


def test_rq_of_scaled_unitary_has_flat_diagonal():
    p0 = 0.36
    a = haar_random(5, 3) * np.sqrt(1 - p0)
    r, _ = rq_decompose(a)
    assert np.allclose(np.diag(r).real, np.sqrt(1 - p0), atol=1e-10)
    assert np.max(np.abs(np.triu(r, 1))) <= 1e-10


def test_block_svd_of_sorted_diagonal_is_trivial():
    r = np.triu(np.random.default_rng(1).standard_normal((4, 4))).astype(complex)
    r[:2, :2] = np.diag([0.2, 0.7])
    x, rp, qp = block_svd(r, 2)
    assert np.array_equal(x, np.eye(4)) and np.array_equal(qp, np.eye(4))


@given(seeds, st.integers(1, 7), st.data())
def test_block_svd_structure(seed, n, data):
    m = data.draw(st.integers(1, n))
    rng = np.random.default_rng(seed)
    r, _ = rq_decompose(ginibre(rng, n))
    x, rp, qp = block_svd(r, m)
    assert np.max(np.abs(x.conj().T @ rp @ qp - r)) <= 1e-10
    for u in (x, qp):
        assert np.max(np.abs(u.conj().T @ u - np.eye(n))) <= 1e-10
        assert np.allclose(u[m:, :], np.eye(n)[m:, :], atol=1e-12)
        assert np.allclose(u[:, m:], np.eye(n)[:, m:], atol=1e-12)
    block = rp[:m, :m]
    assert np.max(np.abs(block - np.diag(np.diag(block)))) <= 1e-10
    d = np.diag(block).real
    assert np.all(d >= 0) and np.all(np.diff(d) >= -1e-12)
    assert np.max(np.abs(rp[m:, :m]), initial=0) <= 1e-10


def test_block_singular_values_bounded_by_scaled_unitary_norm():
    p0 = 0.2
    v = haar_random(6, 9) * np.sqrt(1 - p0)
    _, rp, _ = block_svd(v, 3)
    assert np.all(np.abs(np.diag(rp)[:3]) <= np.sqrt(1 - p0) + 1e-12)


def test_identity_interferometer_gives_sorted_p():
    p = np.array([0.2, 0.9, 0.5, 0.7])
    tr = output_transmissivities(np.eye(4), p, 4, 2)
    assert np.allclose(tr.p_out, np.sort(p)[::-1], atol=1e-12)


def test_equal_losses_are_tight():
    p0 = 0.55
    tr = output_transmissivities(haar_random(6, 4), np.full(6, p0), 4, 3)
    assert np.allclose(tr.p_out, p0, atol=1e-9)
    assert abs(tr.slack) <= 1e-9


def test_block_diagonal_interferometer_with_equal_losses_is_tight():
    u = np.zeros((5, 5), dtype=complex)
    u[:3, :3] = haar_random(3, 1)
    u[3:, 3:] = haar_random(2, 2)
    tr = output_transmissivities(u, np.full(5, 0.3), 3, 2)
    assert abs(tr.slack) <= 1e-9


@given(seeds, st.integers(1, 12), st.data())
def test_trace_invariants_and_bound(seed, n, data):
    m = data.draw(st.integers(1, n))
    k = data.draw(st.integers(1, m))
    rng = np.random.default_rng(seed)
    u, p = haar_random(n, rng), rng.uniform(size=n)
    tr = output_transmissivities(u, p, m, k)
    res = tr.residuals()
    assert res["rq"] <= 1e-10 and res["triangular"] <= 1e-12 and res["svd"] <= 1e-10
    assert res["q_unitary"] <= 1e-10 and res["rprime_formula"] <= 1e-9
    assert np.all((tr.p_out >= 0) & (tr.p_out <= 1))
    assert np.all(np.diff(tr.p_out) <= 1e-12)
    for kk in range(1, m + 1):
        assert np.sum(tr.p_out[:kk]) <= top_k_sum(p, kk) + 1e-9
    assert is_doubly_stochastic(np.abs(tr.Qdoubleprime) ** 2)


def test_output_transmissivities_validation():
    with pytest.raises(ConfigurationError):
        output_transmissivities(np.eye(3), [0.5] * 3, 2, 3)
    with pytest.raises(ConfigurationError):
        output_transmissivities(np.eye(3), [0.5] * 3, 4, 1)


def test_doubly_stochastic_examples():
    assert is_doubly_stochastic(np.abs(haar_random(5, 0)) ** 2)
    assert is_doubly_stochastic(np.eye(4))
    assert is_doubly_stochastic(np.full((3, 3), 1 / 3))
    assert not is_doubly_stochastic(np.array([[1.0, 0.0], [1.0, 0.0]]))


def test_weak_majorization_examples():
    assert weak_majorization_holds([0.5, 0.5], [1, 0])
    assert not weak_majorization_holds([1, 0], [0.5, 0.5])
    assert majorization_slack([0.2], [0.3, 0.1]) == pytest.approx(0.1)


def test_averaged_transmissivities_are_majorized_500_draws():
    rng = np.random.default_rng(123)
    for _ in range(500):
        n = int(rng.integers(1, 9))
        q, p = haar_random(n, rng), rng.uniform(size=n)
        assert weak_majorization_holds(averaged_transmissivities(q, p), p)


def test_embed_keeps_identity_outside():
    e = embed(haar_random(2, 0), 4)
    assert np.allclose(e[2:, 2:], np.eye(2))
