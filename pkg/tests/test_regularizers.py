import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hotmvl.ot import brute_force_matching, diagonal_mass, sample_projections, sliced_wasserstein
from hotmvl.regularizers import (
    ReferenceSet,
    evaluate,
    gdcca_loss,
    hot_pairwise_loss,
    hot_reference_loss,
    lscca_loss,
    ortho_penalty,
    sw_pairwise_loss,
    sw_reference_loss,
)

from _gradchecks import check_regularizer_gradient
from _oracles import numeric_grad, rel_err


def _latents(rng, S, d=3, B=6):
    return [rng.standard_normal((d, B)) for _ in range(S)]


def _refs(rng, K, d=3, B=6):
    return ReferenceSet([rng.standard_normal((d, B)) for _ in range(K)])


def _ortho_oracle(mats):
    d = mats[0].shape[0]
    A = sum(Z @ Z.T for Z in mats) / mats[0].shape[1] - np.eye(d)
    return float(np.sum(A ** 2))


# -- ortho penalty ------------------------------------------------------------------


def test_ortho_zero_latents():
    assert ortho_penalty([np.zeros((3, 5))])[0] == 3.0


def test_ortho_whitened_latent():
    Z = np.sqrt(4) * np.eye(4)  # Z Z^T / B = I for B = 4
    assert ortho_penalty([Z])[0] == pytest.approx(0.0, abs=1e-24)


def test_ortho_gradient():
    rng = np.random.default_rng(0)
    mats = _latents(rng, 3)
    _, grads = ortho_penalty(mats)
    for Z, g in zip(mats, grads):
        assert rel_err(g, numeric_grad(lambda: _ortho_oracle(mats), Z)) <= 1e-4


def test_ortho_rejects_mixed_dims():
    with pytest.raises(ValueError):
        ortho_penalty([np.zeros((3, 4)), np.zeros((2, 4))])


# -- aligned baselines ------------------------------------------------------------------


def test_lscca_hand_value():
    Z2 = np.random.default_rng(0).standard_normal((2, 3))
    out = lscca_loss([Z2 + 1.0, Z2], alpha=0.0)
    assert out.loss == pytest.approx(6.0, rel=1e-14)


def test_lscca_identical_views():
    Z = np.random.default_rng(1).standard_normal((2, 5))
    assert lscca_loss([Z, Z.copy(), Z.copy()], alpha=0.0).loss == 0.0


def test_gdcca_hand_value():
    d, B = 3, 4
    refs = ReferenceSet([np.zeros((d, B))])
    assert gdcca_loss([np.ones((d, B))], refs, alpha=0.0).loss == d * B


def test_aligned_losses_refuse_unaligned_batches():
    Z = [np.zeros((2, 3))] * 2
    with pytest.raises(ValueError):
        lscca_loss(Z, aligned=False)
    with pytest.raises(ValueError):
        gdcca_loss(Z, ReferenceSet([np.zeros((2, 3))]), aligned=False)


def test_aligned_losses_depend_on_sample_order():
    rng = np.random.default_rng(2)
    Z = _latents(rng, 3)
    refs = _refs(rng, 1)
    perm = np.roll(np.arange(6), 1)
    shuffled = [Z[0][:, perm], Z[1], Z[2]]
    assert lscca_loss(shuffled).loss != lscca_loss(Z).loss
    assert gdcca_loss(shuffled, refs).loss != gdcca_loss(Z, refs).loss


# -- sliced Wasserstein co-regularizers ---------------------------------------------------


def test_sw_pairwise_two_views_is_one_distance():
    rng = np.random.default_rng(3)
    Z = _latents(rng, 2)
    proj = sample_projections(5, 3, seed=0)
    assert sw_pairwise_loss(Z, proj, alpha=0.0).loss == pytest.approx(sliced_wasserstein(*Z, proj)[0], rel=1e-14)


def test_sw_reference_single_view_is_one_distance():
    rng = np.random.default_rng(4)
    Z = _latents(rng, 1)
    refs = _refs(rng, 1)
    proj = sample_projections(5, 3, seed=1)
    out = sw_reference_loss(Z, refs, proj, alpha=0.0)
    assert out.loss == pytest.approx(sliced_wasserstein(Z[0], refs.refs[0], proj)[0], rel=1e-14)


def test_sw_losses_vanish_on_identical_inputs():
    Z = np.random.default_rng(5).standard_normal((3, 6))
    proj = sample_projections(4, 3, seed=2)
    assert sw_pairwise_loss([Z, Z, Z], proj, alpha=0.0).loss == 0.0
    assert sw_reference_loss([Z, Z], ReferenceSet([Z.copy()]), proj, alpha=0.0).loss == 0.0


def test_sw_width_mismatch():
    proj = sample_projections(2, 3, seed=0)
    with pytest.raises(ValueError):
        sw_pairwise_loss([np.zeros((3, 4)), np.zeros((3, 5))], proj)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["sw_pairwise", "sw_reference", "hot_pairwise", "hot_reference"]))
def test_sw_losses_ignore_sample_order(seed, kind):
    rng = np.random.default_rng(seed)
    Z = _latents(rng, 4)
    refs = _refs(rng, 1 if kind == "sw_reference" else 2)
    proj = sample_projections(3, 3, seed=rng)
    shuffled = [Zs[:, rng.permutation(6)] for Zs in Z]
    a = evaluate(kind, Z, refs=refs, proj=proj).loss
    b = evaluate(kind, shuffled, refs=refs, proj=proj).loss
    assert b == pytest.approx(a, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_sw_pairwise_below_matching_cost(seed):
    rng = np.random.default_rng(seed)
    Z = _latents(rng, 2, d=2, B=5)
    proj = sample_projections(4, 2, seed=rng)
    sw = sw_pairwise_loss(Z, proj, alpha=0.0).loss
    assert sw <= brute_force_matching(*Z)[0] + 1e-9


# -- HOT ---------------------------------------------------------------------------------


def test_hot_pairwise_two_views():
    rng = np.random.default_rng(6)
    Z = _latents(rng, 2)
    proj = sample_projections(3, 3, seed=3)
    out = hot_pairwise_loss(Z, proj, alpha=0.01)
    w = out.plan.weights
    assert w[0, 1] == pytest.approx(0.5, abs=1e-4) and w[1, 0] == pytest.approx(0.5, abs=1e-4)
    expected = (w[0, 1] + w[1, 0]) * sliced_wasserstein(*Z, proj)[0] + 0.01 * _ortho_oracle(Z)
    assert out.loss == pytest.approx(expected, rel=1e-12)


def test_hot_pairwise_identical_views_cost_nothing():
    Z = np.random.default_rng(7).standard_normal((3, 6))
    out = hot_pairwise_loss([Z, Z, Z], sample_projections(3, 3, seed=0), alpha=0.0)
    assert out.loss == 0.0


def test_hot_pairwise_mass_stays_within_planted_pairs():
    rng = np.random.default_rng(8)
    A = rng.standard_normal((3, 8))
    B = rng.standard_normal((3, 8)) + 10.0
    out = hot_pairwise_loss([A, A.copy(), B, B.copy()], sample_projections(3, 3, seed=0))
    w = out.plan.weights
    assert w[0, 1] + w[1, 0] + w[2, 3] + w[3, 2] >= 0.9


@pytest.mark.parametrize("S", [3, 4, 5, 6])
def test_hot_pairwise_plan_constraints(S):
    rng = np.random.default_rng(S)
    out = hot_pairwise_loss(_latents(rng, S), sample_projections(3, 3, seed=S))
    w = out.plan.weights
    assert diagonal_mass(out.plan) <= 1e-4
    np.testing.assert_allclose(w, w.T, atol=1e-8)
    assert out.plan.marginal_residual == max(out.plan.residuals())
    np.testing.assert_allclose(w.sum(), 1.0, atol=1e-12)


def test_hot_pairwise_symmetrizing_keeps_the_loss():
    rng = np.random.default_rng(12)
    Z = _latents(rng, 5)
    proj = sample_projections(3, 3, seed=4)
    out = hot_pairwise_loss(Z, proj, alpha=0.0)
    C = np.array([[sliced_wasserstein(a, b, proj)[0] for b in Z] for a in Z])
    assert out.loss == pytest.approx(float(np.sum(out.plan.weights * C)), rel=1e-12)


def test_hot_reference_uniform_cost_gives_uniform_plan():
    Z = np.random.default_rng(9).standard_normal((3, 6))
    S, K = 4, 3
    out = hot_reference_loss([Z] * S, ReferenceSet([Z.copy() + 1.0 for _ in range(K)]), sample_projections(3, 3, seed=0))
    np.testing.assert_allclose(out.plan.weights, 1.0 / (S * K), rtol=1e-12)


def test_hot_reference_single_cluster_is_sw_reference():
    rng = np.random.default_rng(10)
    Z = _latents(rng, 3)
    refs = _refs(rng, 1)
    proj = sample_projections(3, 3, seed=0)
    hot = hot_reference_loss(Z, refs, proj)
    np.testing.assert_allclose(hot.plan.weights, 1.0 / 3, rtol=1e-12)
    assert hot.loss == pytest.approx(sw_reference_loss(Z, refs, proj).loss, rel=1e-12)


def test_unknown_regularizer_name():
    with pytest.raises(ValueError):
        evaluate("cca", [np.zeros((2, 2))])


# -- gradients with the plan held fixed ----------------------------------------------------


@pytest.mark.parametrize("kind", ["lscca", "gdcca", "sw_pairwise", "sw_reference", "hot_pairwise", "hot_reference"])
def test_regularizer_gradients(kind):
    rng = np.random.default_rng(11)
    for _ in range(3):
        assert check_regularizer_gradient(kind, rng) <= 1e-4
