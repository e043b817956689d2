import numpy as np
import pytest

from gradcheck import check_multitask_loss, check_ranking_loss, numeric_grad, rel_error
from selfrank.network import Network
from selfrank.ranking import (MiniBatch, RankingConfig, check_labels, comparability_labels, multitask_loss,
                              pairwise_hinge, ranking_loss_efficient, ranking_loss_naive, regression_loss,
                              siamese_efficient_gradients, siamese_naive_gradients)


def random_batch(rng, m_max=16):
    m = int(rng.integers(2, m_max + 1))
    gids = rng.integers(-1, 4, m)
    phis = rng.permutation(m).astype(float)
    return rng.normal(size=m), comparability_labels(gids, phis)


def test_regression_loss_examples():
    loss, g = regression_loss(np.array([2.0]), np.array([0.0]))
    assert loss == 4.0 and g.tolist() == [4.0]
    y = np.arange(5.0)
    loss, g = regression_loss(y, y)
    assert loss == 0 and not g.any()
    with pytest.raises(ValueError):
        regression_loss(np.zeros(0), np.zeros(0))


def test_regression_loss_finite_difference_length_10():
    rng = np.random.default_rng(4)
    p, t = rng.normal(size=10), rng.normal(size=10)
    _, g = regression_loss(p, t)
    assert rel_error(g, numeric_grad(lambda: regression_loss(p, t)[0], p)) <= 1e-8


@pytest.mark.parametrize("yi, yj, eps, out", [(2, 1, 0, 1), (1, 2, 0, 0), (1, 1, 0.5, 0.5)])
def test_pairwise_hinge(yi, yj, eps, out):
    assert pairwise_hinge(yi, yj, eps) == out


def test_two_image_example():
    lab = np.array([[0.0, 1.0], [-1.0, 0.0]])
    res = ranking_loss_efficient([2.0, 1.0], lab, 0.0)
    assert res.loss == 1.0
    assert res.grad.tolist() == [1.0, -1.0]
    assert res.coeffs.tolist() == [[0.0, 1.0], [-1.0, 0.0]]
    loss, grad, _ = ranking_loss_naive([2.0, 1.0], lab, 0.0)
    assert loss == 1.0 and grad.tolist() == [1.0, -1.0]


def test_no_comparable_pairs():
    res = ranking_loss_efficient(np.arange(4.0), np.zeros((4, 4)))
    assert res.loss == 0 and not res.grad.any() and res.active_pairs == 0


def test_comparability_labels():
    lab = comparability_labels([0, 0, 1, -1], [1.0, 3.0, 2.0, 0.0])
    assert lab.tolist() == [[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]]
    with pytest.raises(ValueError):
        comparability_labels([0, 0], [1.0, 1.0])


@pytest.mark.parametrize("bad", [np.ones((2, 3)), np.array([[0, 2], [-2, 0]]), np.array([[1, 0], [0, 0]]),
                                 np.array([[0, 1], [1, 0]])])
def test_labels_validation(bad):
    with pytest.raises(ValueError):
        check_labels(bad)


def test_efficient_matches_naive_on_three_groups_of_four():
    rng = np.random.default_rng(12)
    gids = np.repeat(np.arange(3), 4)
    lab = comparability_labels(gids, rng.permutation(12).astype(float))
    s = rng.normal(size=12)
    res = ranking_loss_efficient(s, lab, 0.1)
    loss, grad, _ = ranking_loss_naive(s, lab, 0.1)
    assert abs(res.loss - loss) <= 1e-12 * abs(loss)
    assert np.max(np.abs(res.grad - grad)) <= 1e-12 * (1 + np.max(np.abs(grad)))


def test_efficient_matches_naive_random_batches():
    rng = np.random.default_rng(0)
    for _ in range(100):
        s, lab = random_batch(rng)
        eps = float(rng.choice([0.0, 0.1, 1.0]))
        res = ranking_loss_efficient(s, lab, eps)
        loss, grad, _ = ranking_loss_naive(s, lab, eps)
        assert abs(res.loss - loss) <= 1e-12 * max(1.0, abs(loss))
        assert np.max(np.abs(res.grad - grad)) <= 1e-12 * (1 + np.max(np.abs(grad)))


def test_coefficients_antisymmetric_and_sparse():
    rng = np.random.default_rng(3)
    for _ in range(50):
        s, lab = random_batch(rng)
        a = ranking_loss_efficient(s, lab, 0.5).coeffs
        assert np.array_equal(a, -a.T)
        assert np.all(a[lab == 0] == 0)


def test_zero_loss_when_ordered_beyond_margin():
    lab = comparability_labels([0, 0, 0], [1.0, 2.0, 3.0])
    res = ranking_loss_efficient([0.0, 2.0, 4.0], lab, 1.5)
    assert res.loss == 0 and res.active_pairs == 0 and not res.coeffs.any()


@pytest.mark.parametrize("n", [2, 4, 8])
def test_pass_counts_single_group(n):
    rng = np.random.default_rng(n)
    net = Network((1, 4, 4), "conv:2,relu,gsp,dense:1", seed=n)
    images = rng.random((n, 1, 4, 4))
    lab = comparability_labels(np.zeros(n, int), np.arange(n, dtype=float))
    _, _, naive = siamese_naive_gradients(net, images, lab, 1.0)
    _, _, eff = siamese_efficient_gradients(net, images, lab, 1.0)
    assert (naive, eff) == (n * n - n, n)


def test_siamese_gradients_agree():
    rng = np.random.default_rng(9)
    net = Network((1, 4, 4), "conv:2,relu,pool,conv:1", seed=1)
    images = rng.random((6, 1, 4, 4))
    lab = comparability_labels([0, 0, 0, 1, 1, 1], rng.permutation(6).astype(float))
    l1, g1, _ = siamese_naive_gradients(net, images, lab, 0.5)
    l2, g2, _ = siamese_efficient_gradients(net, images, lab, 0.5)
    assert abs(l1 - l2) <= 1e-12 * max(1, abs(l1))
    assert np.max(np.abs(g1 - g2)) <= 1e-12 * (1 + np.max(np.abs(g1)))


def test_ranking_and_multitask_finite_differences():
    for seed in range(10):
        assert check_ranking_loss(seed) <= 1e-5
        assert check_multitask_loss(seed) <= 1e-5


def _mixed_batch(rng, net):
    images = rng.random((5, 1, 4, 4))
    lab = comparability_labels([-1, -1, 0, 0, 0], [0, 0, 1, 2, 3])
    targets = rng.random((5,) + net.output_shape)
    return images, targets, lab


def test_lambda_zero_equals_regression_only():
    rng = np.random.default_rng(2)
    net = Network((1, 4, 4), "conv:2,relu,conv:1", seed=0)
    images, targets, lab = _mixed_batch(rng, net)
    labeled = np.array([True, True, False, False, False])
    net.params.clear_grad()
    parts = multitask_loss(MiniBatch(images, targets, labeled, lab), net, RankingConfig(0.1, 0.0))
    g_mt = net.params.flat_grad()
    net.params.clear_grad()
    reg, _ = net.forward(images[:2])
    loss, g = regression_loss(reg, targets[:2])
    net.backward(grad_reg=g)
    assert parts.total == loss
    assert np.array_equal(g_mt, net.params.flat_grad())


def test_unlabeled_batch_loss_is_ranking_loss():
    rng = np.random.default_rng(5)
    net = Network((1, 4, 4), "conv:2,relu,conv:1", seed=0)
    images = rng.random((4, 1, 4, 4))
    lab = comparability_labels([0, 0, 0, 0], [4.0, 3.0, 2.0, 1.0])
    parts = multitask_loss(MiniBatch(images, None, np.zeros(4, bool), lab), net, RankingConfig(0.2, 1.0))
    scores = net.predict(images)
    assert parts.total == ranking_loss_efficient(scores, lab, 0.2).loss
    assert parts.reg == 0


def test_batch_validation():
    # unlabeled images need a comparable partner
    with pytest.raises(ValueError):
        MiniBatch(np.zeros((2, 1, 4, 4)), None, np.zeros(2, bool), np.zeros((2, 2)))
    # labeled images need targets
    with pytest.raises(ValueError):
        MiniBatch(np.zeros((2, 1, 4, 4)), None, np.ones(2, bool), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        RankingConfig(margin=-1)
