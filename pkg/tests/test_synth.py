import numpy as np
import pytest

from implicit_influence.data import build_design, design_predictions, predict_volume
from implicit_influence.synth import SynthConfig, gen_instance


def test_defaults_match_benchmark_sizes():
    cfg = SynthConfig()
    assert (cfg.n_nodes, cfg.n_contagions, cfg.lag, cfg.horizon, cfg.rank) == (100, 20, 10, 20, 5)


def test_noiseless_volumes_are_forward_model():
    inst = gen_instance(SynthConfig(n_nodes=10, n_contagions=4, lag=3, horizon=8, rank=2,
                                    noise_scale=0.0, seed=1))
    designs = build_design(inst.log, 3)
    np.testing.assert_array_equal(inst.volumes.values,
                                  design_predictions(designs, inst.influence))


@pytest.mark.parametrize("seed", range(5))
def test_ground_truth_rank_and_sign(seed):
    inst = gen_instance(SynthConfig(seed=seed))
    s = np.linalg.svd(inst.influence, compute_uv=False)
    assert np.all(inst.influence >= 0)
    assert s[4] > 1e-10 * s[0]
    assert np.all(s[5:] < 1e-10 * s[0])


def test_same_seed_bit_identical():
    a = gen_instance(SynthConfig(seed=7))
    b = gen_instance(SynthConfig(seed=7))
    np.testing.assert_array_equal(a.log.events, b.log.events)
    np.testing.assert_array_equal(a.volumes.values, b.volumes.values)
    np.testing.assert_array_equal(a.influence, b.influence)
    c = gen_instance(SynthConfig(seed=8))
    assert not np.array_equal(a.influence, c.influence)


@pytest.mark.parametrize("seed", range(3))
def test_indicator_density(seed):
    inst = gen_instance(SynthConfig(seed=seed))
    assert abs(inst.log.indicator().mean() - 0.5) <= 0.02


def test_default_noise_scale():
    inst = gen_instance(SynthConfig(seed=0))
    clean = design_predictions(build_design(inst.log, 10), inst.influence)
    assert np.isclose(inst.noise_scale, 0.1 * clean.mean())
    resid = inst.volumes.values - clean
    assert 0.8 < resid.std() / inst.noise_scale < 1.2


def test_forward_model_exact_via_predict_volume():
    inst = gen_instance(SynthConfig(n_nodes=6, n_contagions=3, lag=2, horizon=6, rank=2,
                                    noise_scale=0.0, seed=3))
    for t in range(1, 7):
        assert np.array_equal(predict_volume(inst.log, inst.influence, t),
                              inst.volumes.values[t - 1])


@pytest.mark.parametrize("kw", [
    {"rank": 30},
    {"n_nodes": 0},
    {"lag": 25},
    {"noise_scale": -1.0},
])
def test_invalid_config(kw):
    with pytest.raises(ValueError):
        SynthConfig(**kw)
