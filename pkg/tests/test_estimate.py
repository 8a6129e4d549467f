import numpy as np
import pytest

from sensing.datasets import NoiseModel
from sensing.estimate import (
    build_posterior, deim_error_bound, deim_estimate, map_error_bound, map_estimate, noise_norm_ratio,
    posterior_from_operator, reconstruct_states, relative_error, relative_errors, smallest_singular_value,
)
from sensing.numerics import cpqr
from sensing.pod import ModalBasis, PriorCovariance
from sensing.selection import SensorSelection
from sensing.utils import InputError


@pytest.fixture
def toy():
    """Two locations, identity modes, one sensor on the first location."""
    basis = ModalBasis(phi=np.eye(2), singular_values=np.ones(2), n_samples_used=2)
    return basis, SensorSelection((0,), 2), PriorCovariance(gamma=np.eye(2)), NoiseModel(sigma=1.0)


def pivot_sensors(basis, k):
    return SensorSelection(tuple(int(i) for i in cpqr(basis.phi.T).pivots[:k]), basis.n_locations)


def test_toy_posterior(toy):
    basis, sel, prior, noise = toy
    post = build_posterior(basis, sel, prior, noise)
    np.testing.assert_allclose(post.gamma_post, np.diag([0.5, 1.0]))
    np.testing.assert_allclose(post.map_operator, [[0.5], [0.0]])
    est = map_estimate(post, basis, np.array([2.0]))
    np.testing.assert_allclose(est.coefficients, [1.0, 0.0])


def test_no_sensors_leaves_the_prior(toy):
    basis, _, prior, noise = toy
    post = build_posterior(basis, SensorSelection((), 2), prior, noise)
    np.testing.assert_array_equal(post.gamma_post, np.eye(2))
    assert post.map_operator.shape == (2, 0)


def test_posterior_rejects_zero_noise_and_singular_prior(toy):
    basis, sel, prior, _ = toy
    with pytest.raises(InputError, match="sigma must be > 0"):
        build_posterior(basis, sel, prior, NoiseModel(0.0))
    with pytest.raises(InputError, match="singular"):
        build_posterior(basis, sel, PriorCovariance(gamma=np.diag([1.0, 0.0])), NoiseModel(1.0))
    with pytest.raises(InputError, match="singular"):
        posterior_from_operator([[1.0, 0.0]], [[1.0, 1.0], [1.0, 1.0]], NoiseModel(1.0))


def test_dense_noise_covariance_matches_iid_model(random_spd):
    a = np.random.default_rng(1).standard_normal((3, 4))
    gamma = random_spd(4, seed=2)
    iid = posterior_from_operator(a, gamma, NoiseModel(0.1))
    dense = posterior_from_operator(a, gamma, 0.01 * np.eye(3))
    np.testing.assert_allclose(dense.gamma_post, iid.gamma_post, atol=1e-12)
    np.testing.assert_allclose(dense.map_operator, iid.map_operator, atol=1e-10)


def test_posterior_matches_covariance_form(random_spd):
    """Gamma_post from the precision matches the Schur-complement form."""
    a = np.random.default_rng(3).standard_normal((2, 5))
    gamma = random_spd(5, seed=4)
    post = posterior_from_operator(a, gamma, NoiseModel(0.3))
    gain = gamma @ a.T @ np.linalg.inv(a @ gamma @ a.T + 0.09 * np.eye(2))
    np.testing.assert_allclose(post.gamma_post, gamma - gain @ a @ gamma, atol=1e-10)
    np.testing.assert_allclose(post.map_operator, gain, atol=1e-10)


def test_deim_interpolates_at_sensors(harmonic_split, harmonic_model):
    _, test = harmonic_split
    basis, _ = harmonic_model
    sel = pivot_sensors(basis, 8)
    u = test.data[:, 0]
    est = deim_estimate(basis, sel, sel.measure(u))
    np.testing.assert_allclose(est.full_state[sel.as_array()], u[sel.as_array()], atol=1e-10)


def test_deim_recovers_states_in_the_span(harmonic_model):
    basis, _ = harmonic_model
    sel = pivot_sensors(basis, 10)
    m = np.linspace(1.0, -1.0, 8)
    u = basis.mean + basis.phi @ m
    est = deim_estimate(basis, sel, sel.measure(u))
    np.testing.assert_allclose(est.coefficients, m, atol=1e-10)
    assert relative_error(est, u) < 1e-10


def test_map_of_mean_measurement_is_the_mean(harmonic_model):
    basis, prior = harmonic_model
    sel = pivot_sensors(basis, 5)
    post = build_posterior(basis, sel, prior, NoiseModel(0.1))
    est = map_estimate(post, basis, sel.measure(basis.mean))
    np.testing.assert_allclose(est.full_state, basis.mean, atol=1e-12)


def test_batched_reconstruction_matches_single(harmonic_split, harmonic_model):
    _, test = harmonic_split
    basis, prior = harmonic_model
    sel = pivot_sensors(basis, 6)
    post = build_posterior(basis, sel, prior, NoiseModel(0.1))
    y = sel.measure(test.data[:, :4])
    batch = reconstruct_states("map", basis, sel, y, posterior=post)
    np.testing.assert_allclose(batch[:, 2], map_estimate(post, basis, y[:, 2]).full_state, atol=1e-12)
    errors = relative_errors(batch, test.data[:, :4])
    assert errors[2] == pytest.approx(relative_error(batch[:, 2], test.data[:, 2]))
    with pytest.raises(InputError, match="needs a posterior"):
        reconstruct_states("map", basis, sel, y)
    with pytest.raises(InputError, match="unknown estimator"):
        reconstruct_states("kalman", basis, sel, y)


def test_measurement_count_must_match(harmonic_model):
    basis, _ = harmonic_model
    with pytest.raises(InputError, match="3 measurements for 4 sensors"):
        deim_estimate(basis, pivot_sensors(basis, 4), np.zeros(3))


def test_error_bounds_dominate(harmonic_split, harmonic_model):
    _, test = harmonic_split
    basis, prior = harmonic_model
    noise = NoiseModel(0.05)
    rng = np.random.default_rng(11)
    for k in (8, 12):
        sel = pivot_sensors(basis, k)
        post = build_posterior(basis, sel, prior, noise)
        for i in range(10):
            u = test.data[:, i]
            eta = noise.sigma * rng.standard_normal(k)
            y = sel.measure(u) + eta
            centered = np.linalg.norm(u - basis.mean)
            ratio = np.linalg.norm(eta) / centered

            deim_err = np.linalg.norm(deim_estimate(basis, sel, y).full_state - u) / centered
            map_err = np.linalg.norm(map_estimate(post, basis, y).full_state - u) / centered
            assert deim_err <= deim_error_bound(basis, sel, ratio) + 1e-12
            assert map_err <= map_error_bound(post, basis, sel, ratio) + 1e-12


def test_smallest_singular_value_skips_null_directions():
    assert smallest_singular_value(np.diag([3.0, 0.5, 0.0])) == pytest.approx(0.5)
    assert smallest_singular_value(np.zeros((2, 2))) == 0.0


def test_measurements_only_shrink_the_prior(random_spd):
    rng = np.random.default_rng(17)
    for trial in range(30):
        n, k = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        a = rng.standard_normal((k, n))
        gamma = random_spd(n, seed=100 + trial)
        post = posterior_from_operator(a, gamma, NoiseModel(float(10 ** rng.uniform(-2, 1))))
        shrink = np.linalg.eigvalsh(gamma - post.gamma_post)
        assert shrink.min() >= -1e-10 * np.linalg.norm(gamma, 2), trial


def test_posterior_trace_falls_as_sensors_are_added(harmonic_model):
    basis, prior = harmonic_model
    order = [int(i) for i in cpqr(basis.phi.T).pivots]
    traces = [
        np.trace(build_posterior(basis, SensorSelection(tuple(order[:k]), basis.n_locations), prior,
                                 NoiseModel(0.1)).gamma_post)
        for k in range(basis.n_locations + 1)
    ]
    assert traces[0] == pytest.approx(np.trace(prior.gamma))
    for before, after in zip(traces, traces[1:]):
        assert after <= before + 1e-12 * traces[0]


@pytest.mark.parametrize("k", [8, 12])
def test_map_tends_to_least_squares_as_noise_vanishes(harmonic_split, harmonic_model, k):
    _, test = harmonic_split
    basis, prior = harmonic_model
    sel = pivot_sensors(basis, k)
    post = build_posterior(basis, sel, prior, NoiseModel(1e-6))
    for i in range(5):
        y = sel.measure(test.data[:, i])
        mnls = deim_estimate(basis, sel, y).coefficients
        bayes = map_estimate(post, basis, y).coefficients
        assert np.linalg.norm(bayes - mnls) <= 1e-3 * np.linalg.norm(mnls)


def test_noise_norm_ratio():
    assert noise_norm_ratio(np.array([3.0, 4.0]), np.array([0.5])) == pytest.approx(0.1)
    with pytest.raises(InputError, match="zero state"):
        noise_norm_ratio(np.zeros(2), np.ones(1))
