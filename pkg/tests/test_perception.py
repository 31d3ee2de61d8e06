import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ualc.core import ConfigError, DomainError, ShapeError, UncertaintyProfile, VehicleState
from ualc.perception import (
    NO_ATTACK,
    AttackSpec,
    PerceptionConfig,
    Road,
    dropout_masks,
    ego_lateral_offsets,
    estimate_uncertainty,
    lane_models,
    mc_model_uncertainty,
    mc_samples,
    nll_loss,
    observe,
    sample_variance,
    total_variance,
)

ROAD = Road()
CFG = PerceptionConfig()


def two_pass_variance(samples):
    """Independent oracle: explicit loops, mean first, then squared deviations."""
    samples = np.asarray(samples, dtype=float)
    T, n = samples.shape
    out = np.empty(n)
    for j in range(n):
        mean = 0.0
        for t in range(T):
            mean += samples[t, j]
        mean /= T
        acc = 0.0
        for t in range(T):
            acc += (samples[t, j] - mean) ** 2
        out[j] = acc / T
    return out


# --- observe -----------------------------------------------------------------


def test_no_attack_is_benign():
    f = observe(ROAD, VehicleState(50.0, 0.0, 0.0, 20.0), AttackSpec(strength=0.0), CFG, tick=3)
    assert f.left_conf == f.right_conf == 0.9
    models, level = lane_models(ROAD, VehicleState(50.0, 0.0, 0.0, 20.0), AttackSpec(strength=0.0), CFG, 3)
    assert level == 0.0
    assert np.all(models["path"].components[-1] == 0.0)


def test_disjoint_patch_is_benign():
    attack = AttackSpec(patch_start=300.0, patch_length=96.0, strength=1.0)
    state = VehicleState(300.0 - 200.0, 0.0, 0.0, 20.0)
    assert attack.overlap(state.x, 96.0) == 0.0
    f = observe(ROAD, state, attack, CFG)
    assert f.lr_conf == pytest.approx(0.81)


def test_saturation_reaches_floor_and_full_bias():
    attack = AttackSpec(patch_start=40.0, patch_length=96.0, strength=1.0, conf_floor=0.1, path_bias_gain=1.5)
    state = VehicleState(40.0, 0.0, 0.0, 20.0)
    assert attack.overlap(state.x, 96.0) == 1.0
    f = observe(ROAD, state, attack, CFG)
    assert f.lr_conf == pytest.approx(0.1, abs=1e-12)
    models, level = lane_models(ROAD, state, attack, CFG, 0)
    assert level == 1.0
    np.testing.assert_allclose(models["path"].components[-1], 1.5)


def test_sigma_data_equals_noise_std_used():
    state = VehicleState(10.0, 0.3, 0.02, 20.0)
    models, _ = lane_models(ROAD, state, NO_ATTACK, CFG, 7)
    f = observe(ROAD, state, NO_ATTACK, CFG, 7)
    s = CFG.stations
    expected = (CFG.base_noise_sigma * (1 + CFG.noise_growth * s)) ** 2
    np.testing.assert_allclose(f.left_unc.sigma_data_sq, expected, rtol=1e-12)
    np.testing.assert_allclose(f.left.offsets, models["left"].base + np.diag(models["left"].components), rtol=1e-12)


def test_benign_calibration_empirical_variance():
    """Empirical variance of (observation - truth) matches the reported variance."""
    state = VehicleState(0.0, 0.0, 0.0, 20.0)
    truth = ego_lateral_offsets(ROAD, state, CFG.stations, 0.5 * ROAD.lane_width)
    n = 10_000
    resid = np.empty((n, CFG.stations.size))
    for k in range(n):
        resid[k] = observe(ROAD, state, NO_ATTACK, CFG, tick=k).left.offsets - truth
    reported = observe(ROAD, state, NO_ATTACK, CFG).left_unc.sigma_data_sq
    rel = np.abs(resid.var(axis=0) / reported - 1.0)
    assert rel.max() < 0.1
    # the reported variance is the NLL minimizer over a family of rescalings
    scales = np.linspace(0.5, 1.5, 21)
    losses = [nll_loss(resid[:, 100], 0.0, c * reported[100]) for c in scales]
    assert abs(scales[int(np.argmin(losses))] - 1.0) <= 0.1


def test_ego_offsets_on_curved_road():
    road = Road(curvature=1e-3)
    state = VehicleState(20.0, float(road.center(20.0)) + 0.2, 0.01, 20.0)
    s = CFG.stations
    lat = ego_lateral_offsets(road, state, s, 1.85)
    c, sn = math.cos(state.heading), math.sin(state.heading)
    wx = state.x + s * c - lat * sn
    wy = state.y + s * sn + lat * c
    np.testing.assert_allclose(wy, road.center(wx) + 1.85, atol=1e-10)


@given(st.integers(0, 10_000), st.floats(-50, 200), st.floats(-1, 1))
def test_seed_determinism(tick, x, y):
    state = VehicleState(x, y, 0.0, 20.0)
    attack = AttackSpec(strength=0.6, frame_jitter=0.5)
    a = observe(ROAD, state, attack, CFG, tick)
    b = observe(ROAD, state, attack, CFG, tick)
    for side in ("left", "right", "path"):
        assert np.array_equal(getattr(a, side).offsets, getattr(b, side).offsets)
    assert a.lr_conf == b.lr_conf


@given(st.floats(0, 1), st.floats(0, 1), st.floats(-150, 200))
def test_confidence_monotone_in_strength(s1, s2, x):
    lo, hi = sorted((s1, s2))
    state = VehicleState(x, 0.0, 0.0, 20.0)
    c_lo = observe(ROAD, state, AttackSpec(strength=lo), CFG).lr_conf
    c_hi = observe(ROAD, state, AttackSpec(strength=hi), CFG).lr_conf
    assert c_hi <= c_lo + 1e-12


@given(st.floats(-100, 40), st.floats(0, 1))
def test_confidence_monotone_in_overlap(x, strength):
    attack = AttackSpec(strength=strength)
    # approaching the patch increases overlap up to the saturation point
    far, near = VehicleState(x, 0.0, 0.0, 20.0), VehicleState(min(x + 5.0, 40.0), 0.0, 0.0, 20.0)
    assert attack.overlap(near.x, 96.0) >= attack.overlap(far.x, 96.0)
    assert observe(ROAD, near, attack, CFG).lr_conf <= observe(ROAD, far, attack, CFG).lr_conf + 1e-12


@given(st.floats(0, 1), st.floats(-100, 200))
def test_sigma_data_non_decreasing_with_distance(strength, x):
    f = observe(ROAD, VehicleState(x, 0.0, 0.0, 20.0), AttackSpec(strength=strength), CFG)
    for unc in (f.left_unc, f.right_unc, f.path_unc):
        assert np.all(np.diff(unc.sigma_data_sq) >= 0)


def test_attack_config_validation():
    with pytest.raises(ConfigError):
        AttackSpec(patch_length=0.0)
    with pytest.raises(ConfigError):
        AttackSpec(strength=1.5)
    with pytest.raises(ConfigError):
        PerceptionConfig(mc_samples=1)


# --- Monte-Carlo model uncertainty ------------------------------------------


def test_sample_variance_examples():
    assert sample_variance(np.array([1.0, 2.0, 3.0]))[0] == pytest.approx(2.0 / 3.0, abs=1e-15)
    assert sample_variance(np.full((20, 4), 1.7)).tolist() == [0.0] * 4


def test_mc_matches_two_pass_oracle():
    rng = np.random.default_rng(123)
    n, K = 192, 192
    base = rng.normal(size=n)
    comps = np.diag(0.1 * rng.standard_normal(n))

    def forward(mask):
        return base + mask @ comps

    samples = mc_samples(forward, K, 20, 0.2, seed=9)
    prof = mc_model_uncertainty(forward, K, 20, 0.2, seed=9)
    np.testing.assert_allclose(prof.sigma_model_sq, two_pass_variance(samples), rtol=0, atol=1e-12)
    assert np.all(prof.sigma_data_sq == 0)


def test_mc_masks_are_rescaled_bernoulli():
    m = dropout_masks(50, 2000, 0.2, seed=1)
    assert set(np.unique(m)) <= {0.0, 1.0 / 0.8}
    assert np.mean(m == 0.0) == pytest.approx(0.2, abs=0.01)
    assert np.mean(m) == pytest.approx(1.0, abs=0.02)


def test_mc_requires_two_samples():
    with pytest.raises(ConfigError):
        mc_model_uncertainty(lambda m: m, 3, T=1)


def test_mc_order_independent():
    rng = np.random.default_rng(0)
    comps = rng.normal(size=(5, 8))
    samples = mc_samples(lambda m: m @ comps, 5, 20, 0.2, seed=4)
    perm = np.random.default_rng(1).permutation(20)
    np.testing.assert_allclose(sample_variance(samples[perm]), sample_variance(samples), rtol=1e-12, atol=1e-15)


def test_estimate_uncertainty_fills_model_variance():
    state = VehicleState(30.0, 0.0, 0.0, 20.0)
    attack = AttackSpec(strength=1.0)
    f = observe(ROAD, state, attack, CFG, 5)
    g = estimate_uncertainty(f, ROAD, state, attack, CFG)
    assert np.array_equal(g.left_unc.sigma_data_sq, f.left_unc.sigma_data_sq)
    assert np.all(g.path_unc.sigma_model_sq > 0)
    np.testing.assert_array_equal(g.left_unc.sigma_total_sq, g.left_unc.sigma_data_sq + g.left_unc.sigma_model_sq)


# --- total variance and NLL -----------------------------------------------------


def test_total_variance_examples():
    t = total_variance(UncertaintyProfile.data_only([0.03]), UncertaintyProfile([0.0], [0.01]))
    assert t.sigma_total_sq[0] == pytest.approx(0.04, abs=1e-15)
    d = UncertaintyProfile.data_only(np.linspace(0.1, 1, 192))
    z = total_variance(d, UncertaintyProfile(np.zeros(192), np.zeros(192)))
    assert np.array_equal(z.sigma_total_sq, d.sigma_data_sq)
    with pytest.raises(ShapeError):
        total_variance(d, UncertaintyProfile(np.zeros(3), np.zeros(3)))


def test_total_variance_random_oracle():
    rng = np.random.default_rng(5)
    a, b = rng.random(192), rng.random(192)
    t = total_variance(UncertaintyProfile.data_only(a), UncertaintyProfile(np.zeros(192), b))
    assert np.array_equal(t.sigma_total_sq, np.array([x + y for x, y in zip(a, b)]))


def test_nll_examples():
    assert nll_loss(1.0, 1.0, 1.0) == pytest.approx(0.0, abs=1e-12)
    assert nll_loss(1.0, 0.0, 1.0) == pytest.approx(0.5, abs=1e-12)
    assert nll_loss(2.0, 0.0, 4.0) == pytest.approx(math.log(4) / 2 + 0.5, abs=1e-12)
    assert nll_loss(2.0, 0.0, 4.0) == pytest.approx(1.19315, abs=1e-5)
    with pytest.raises(DomainError):
        nll_loss(0.0, 0.0, 0.0)
