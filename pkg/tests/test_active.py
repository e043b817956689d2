import numpy as np
import pytest

from selfrank.active import PoolExhausted, active_loop, certainty, lowest_certainty, sample_pairs
from selfrank.config import ExperimentConfig
from selfrank.experiments import build_data, crop_sampler, make_network
from selfrank.groups import RankedGroup


class ConstantNet:
    def predict(self, x):
        return np.zeros(len(x))


class MeanNet:
    def predict(self, x):
        return np.asarray(x).reshape(len(x), -1).mean(axis=1)


def phi_sampler(img, seed, source_id=0):
    """Groups of four constant images whose value is their phi."""
    phis = list(np.random.default_rng(seed).permutation(4).astype(float))
    return RankedGroup(source_id, phis, [np.full((4, 4), p) for p in phis])


def small_cfg(**kw):
    base = dict(image_size=16, density_sigma=1.5, n_labeled=2, n_unlabeled=20, n_test=8, al_steps=5,
                al_k=10, lr_interval=1000)
    base.update(kw)
    return ExperimentConfig(**base)


def test_constant_predictor_is_maximally_uncertain():
    assert certainty(ConstantNet(), np.zeros((4, 4)), phi_sampler, 20, seed=0) == 0.0


def test_oracle_predictor_is_certain():
    assert certainty(MeanNet(), np.zeros((4, 4)), phi_sampler, 20, seed=0) == 1.0


def test_certainty_matches_brute_force_recount():
    cfg = small_cfg()
    net = make_network(cfg)
    img = np.random.default_rng(0).random((16, 16))
    sampler = crop_sampler(cfg)
    c = certainty(net, img, sampler, 100, seed=5)
    images, lo, hi = sample_pairs(img, sampler, 100, seed=5)
    correct = 0
    for a, b in zip(lo, hi):
        ya = net.forward(images[a][None, None], record=False)[1][0]
        yb = net.forward(images[b][None, None], record=False)[1][0]
        correct += ya < yb
    assert c == correct / 100
    assert c == certainty(net, img, sampler, 100, seed=5)


def test_sampled_pairs_are_comparable_and_distinct():
    images, lo, hi = sample_pairs(None, phi_sampler, 15, seed=1)
    assert len(set(zip(lo.tolist(), hi.tolist()))) == 15
    assert np.all(images[lo].mean(axis=(1, 2)) < images[hi].mean(axis=(1, 2)))


def test_certainty_needs_pairs():
    def lonely(img, seed, source_id=0):
        return RankedGroup(0, [1.0], [np.zeros((4, 4))])

    with pytest.raises(ValueError):
        certainty(MeanNet(), None, lonely, 5, seed=0)
    with pytest.raises(ValueError):
        certainty(MeanNet(), None, phi_sampler, 0, seed=0)


def test_lowest_certainty_breaks_ties_by_id():
    assert lowest_certainty([7, 3, 5, 9], [0.5, 0.2, 0.2, 0.1], 3) == [9, 3, 5]


def test_loop_fractions_and_reproducibility():
    cfg = small_cfg()
    data = build_data(cfg, make_network(cfg))
    rows = active_loop(cfg, data, "random")
    assert [r["labeled_fraction"] for r in rows] == pytest.approx([i / 10 for i in range(1, 11)])
    assert all(0 <= r["mean_certainty"] <= 1 for r in rows[:-1])
    assert np.isnan(rows[-1]["mean_certainty"])
    again = active_loop(cfg, data, "random")
    assert [r["MAE"] for r in rows] == [r["MAE"] for r in again]


def test_one_cycle_labeling_everything_gives_same_result_for_both_policies():
    cfg = small_cfg(al_cycles=1, al_initial=0.1, al_step=0.9)
    data = build_data(cfg, make_network(cfg))
    a = active_loop(cfg, data, "certainty")
    b = active_loop(cfg, data, "random")
    assert a[-1]["labeled_fraction"] == b[-1]["labeled_fraction"] == 1.0
    # warm start means the first cycle is shared too, so the final models match
    assert a[-1]["MAE"] == b[-1]["MAE"]


def test_pool_exhaustion():
    cfg = small_cfg(al_cycles=3, al_initial=0.5, al_step=0.3)
    data = build_data(cfg, make_network(cfg))
    with pytest.raises(PoolExhausted):
        active_loop(cfg, data, "random")
