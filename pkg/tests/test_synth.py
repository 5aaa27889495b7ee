import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liqswitch.regime import RegressionData, SwitchingParams, stationary_distribution
from liqswitch.synth import (DbamModel, InstanceTooLarge, SimSpec, brute_force_loglik,
                             brute_force_smoothed, philox, random_data, random_params, simulate)


def npdf(x, mu, s):
    return math.exp(-0.5 * ((x - mu) / s) ** 2) / (s * math.sqrt(2 * math.pi))


def test_noiseless_identity_recursion_is_constant():
    p = SwitchingParams.from_regressions([0.0], [1.0], [0.0], [1.0])
    states, d = simulate(SimSpec(p, T=1000, dbam_model="zeros", y0=3.25, noise=(0.0,)))
    assert np.all(d.y == 3.25) and np.all(d.y_lag == 3.25)
    assert np.all(states == 0)


def test_generator_follows_the_recursion():
    p = random_params(philox(1), 3)
    states, d = simulate(SimSpec(p, T=5000, p_move=0.3, y0=1.5, seed=4))
    assert d.y_lag[0] == 1.5
    np.testing.assert_array_equal(d.y_lag[1:], d.y[:-1])
    s = states
    resid = (d.y - p.alpha[s] - p.beta_lag[s] * d.y_lag - p.beta_dbam[s] * d.dbam) / p.sigma[s]
    assert abs(resid.mean()) < 0.05 and abs(resid.std() - 1) < 0.05
    assert set(np.unique(d.dbam)) <= {-0.125, 0.0, 0.125}


def test_dbam_move_rate():
    p = SwitchingParams.from_regressions([0.0], [0.5], [0.0], [1.0])
    _, d = simulate(SimSpec(p, T=200_000, p_move=0.1, seed=2))
    assert abs(np.mean(d.dbam != 0) - 0.1) < 0.005
    assert abs(np.mean(d.dbam > 0) - 0.05) < 0.004
    _, z = simulate(SimSpec(p, T=1000, dbam_model=DbamModel.ZEROS))
    assert np.all(z.dbam == 0)


def test_stationary_frequencies():
    trans = np.array([[0.95, 0.03, 0.01, 0.01],
                      [0.02, 0.95, 0.02, 0.01],
                      [0.01, 0.01, 0.95, 0.03],
                      [0.04, 0.005, 0.005, 0.95]])
    p = SwitchingParams([0, 0, 0, 0], [0.5] * 4, [0] * 4, [1] * 4, trans, [0.25] * 4)
    states, _ = simulate(SimSpec(p, T=1_000_000, seed=17))
    freq = np.bincount(states, minlength=4) / len(states)
    pi = stationary_distribution(trans)
    np.testing.assert_allclose(pi @ trans, pi, atol=1e-12)
    np.testing.assert_allclose(freq, pi, atol=0.01)


def test_same_seed_same_output():
    p = random_params(philox(3), 2)
    a = simulate(SimSpec(p, T=3000, seed=99))
    b = simulate(SimSpec(p, T=3000, seed=99))
    c = simulate(SimSpec(p, T=3000, seed=100))
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1].y.tobytes() == b[1].y.tobytes()
    assert a[1].y.tobytes() != c[1].y.tobytes()


def test_spec_validation():
    p = SwitchingParams.from_regressions([0.0], [1.0], [0.0], [1.0])
    with pytest.raises(ValueError):
        SimSpec(p, T=1)
    with pytest.raises(ValueError):
        SimSpec(p, T=10, p_move=1.5)
    with pytest.raises(ValueError):
        SimSpec(p, T=10, noise=(-1.0,))


def test_brute_force_k1_is_gaussian_sum():
    d = random_data(philox(5), 7)
    p = SwitchingParams.from_regressions([0.2], [0.7], [1.1], [0.8])
    want = sum(math.log(npdf(y, 0.2 + 0.7 * yl + 1.1 * db, 0.8))
               for y, yl, db in zip(d.y, d.y_lag, d.dbam))
    assert brute_force_loglik(p, d) == pytest.approx(want, abs=1e-12)
    assert np.all(brute_force_smoothed(p, d) == 1.0)


def test_brute_force_two_by_two_hand_count():
    trans = [[0.8, 0.2], [0.3, 0.7]]
    init = [0.6, 0.4]
    alpha, bl, bd, sig = [0.0, 1.0], [0.5, -0.2], [0.0, 2.0], [1.0, 0.5]
    p = SwitchingParams(alpha, bl, bd, sig, trans, init)
    y, ylag, dbam = [0.4, 1.2], [0.1, 0.4], [0.0, 0.125]
    d = RegressionData(y, ylag, dbam)

    def emit(t, j):
        return npdf(y[t], alpha[j] + bl[j] * ylag[t] + bd[j] * dbam[t], sig[j])

    joint = {(i, j): init[i] * emit(0, i) * trans[i][j] * emit(1, j)
             for i in (0, 1) for j in (0, 1)}
    total = sum(joint.values())
    assert brute_force_loglik(p, d) == pytest.approx(math.log(total), abs=1e-12)
    sm = brute_force_smoothed(p, d)
    assert sm[0, 0] == pytest.approx((joint[0, 0] + joint[0, 1]) / total, abs=1e-12)
    assert sm[1, 1] == pytest.approx((joint[0, 1] + joint[1, 1]) / total, abs=1e-12)


def test_brute_force_absorbing_chain_one_hot():
    d = random_data(philox(6), 6)
    p = SwitchingParams([0, 1, 2], [0.1, 0.2, 0.3], [0, 0, 0], [1, 1, 1], np.eye(3), [0, 0, 1])
    np.testing.assert_array_equal(brute_force_smoothed(p, d), np.tile([0.0, 0.0, 1.0], (6, 1)))


def test_instance_too_large():
    p = random_params(philox(7), 2)
    d = random_data(philox(8), 20)  # 2**20 > 10**6
    with pytest.raises(InstanceTooLarge):
        brute_force_loglik(p, d)
    with pytest.raises(InstanceTooLarge):
        brute_force_smoothed(p, d)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from([2, 3]), st.integers(2, 7), st.data())
def test_oracles_are_permutation_covariant(seed, K, T, data):
    rng = philox(seed, 20)
    p = random_params(rng, K)
    d = random_data(rng, T)
    perm = data.draw(st.permutations(range(K)))
    q = p.permuted(perm)
    a, b = brute_force_loglik(p, d), brute_force_loglik(q, d)
    assert abs(a - b) <= 1e-12 * max(1.0, abs(a))
    np.testing.assert_allclose(brute_force_smoothed(q, d), brute_force_smoothed(p, d)[:, perm],
                               atol=1e-12)
