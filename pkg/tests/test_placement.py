import itertools
import math

import numpy as np
import pytest

from sensing.base_placer import RandomPlacer
from sensing.datasets import NoiseModel
from sensing.numerics import cpqr, spectral_norm
from sensing.placement import (
    cpqr_bound, d_gram, gain_from_gram, info_gain, marginal_gain, place, place_random, qmap_gain_bounds,
    theta_d,
)
from sensing.estimate import build_posterior, reconstruct_states, relative_errors
from sensing.placer_brute_d import check_budget, place_brute_d, subset_chunks
from sensing.placer_brute_error import ErrorOptimalPlacer, place_error_optimal
from sensing.placer_cpqr import place_cpqr
from sensing.placer_greedy_d import pick_best, place_greedy_d
from sensing.placer_qmap import place_qmap
from sensing.pod import ModalBasis, PriorCovariance
from sensing.selection import SensorSelection
from sensing.utils import BudgetExceeded, InputError

NOISE = NoiseModel(0.1)


@pytest.fixture
def scalar():
    basis = ModalBasis(phi=np.ones((1, 1)), singular_values=np.ones(1), n_samples_used=2)
    return basis, PriorCovariance(gamma=np.eye(1)), NoiseModel(1.0)


def test_theta_and_gain_on_one_location(scalar):
    basis, prior, noise = scalar
    assert theta_d(basis, SensorSelection((), 1), prior, noise) == pytest.approx(0.0)
    assert theta_d(basis, SensorSelection((0,), 1), prior, noise) == pytest.approx(math.log(0.5))
    assert info_gain(basis, SensorSelection((0,), 1), prior, noise) == pytest.approx(math.log(2.0))


def test_greedy_on_one_location(scalar):
    basis, prior, noise = scalar
    result = place_greedy_d(basis, prior, noise, 1)
    assert result.indices == (0,)
    assert result.objective_trace == pytest.approx((0.0, math.log(0.5)))


def test_placement_needs_positive_sigma(scalar):
    basis, prior, _ = scalar
    with pytest.raises(InputError, match="sigma must be > 0"):
        place_greedy_d(basis, prior, NoiseModel(0.0), 1)


def test_gain_forms_agree(harmonic_model):
    basis, prior = harmonic_model
    sel = SensorSelection((3, 11, 17, 5), basis.n_locations)
    g = d_gram(basis, prior, NOISE)
    assert info_gain(basis, sel, prior, NOISE) == pytest.approx(gain_from_gram(g, sel.indices), rel=1e-9)


def test_rank1_path_matches_naive(random_basis, random_spd):
    basis = random_basis(12, 4, seed=1)
    prior = PriorCovariance(gamma=random_spd(4, seed=2))
    fast = place_greedy_d(basis, prior, NOISE, 7, use_rank1=True)
    naive = place_greedy_d(basis, prior, NOISE, 7, use_rank1=False, jobs=1)
    assert fast.indices == naive.indices
    np.testing.assert_allclose(fast.objective_trace, naive.objective_trace, rtol=1e-8, atol=1e-10)


def test_greedy_trace_is_non_increasing(harmonic_model):
    basis, prior = harmonic_model
    result = place_greedy_d(basis, prior, NOISE, 12)
    trace = np.array(result.objective_trace)
    assert len(trace) == 13
    assert np.all(np.diff(trace) <= 1e-9)
    assert trace[-1] == pytest.approx(theta_d(basis, result.selection, prior, NOISE), rel=1e-8)


def test_pick_best_breaks_ties_by_index():
    gains = np.array([1.0, 2.0, 2.0 - 1e-12, 2.0])
    assert pick_best(gains, np.array([True, True, True, True])) == 1
    assert pick_best(gains, np.array([True, False, True, True])) == 2


def test_brute_force_with_every_location(random_basis, random_spd):
    basis = random_basis(5, 3, seed=3)
    prior = PriorCovariance(gamma=random_spd(3, seed=4))
    assert place_brute_d(basis, prior, NOISE, 5).indices == (0, 1, 2, 3, 4)


def test_brute_force_finds_the_dominant_location():
    phi = np.array([[0.0, 1.0], [1.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
    basis = ModalBasis(phi=phi, singular_values=np.ones(2), n_samples_used=2)
    prior = PriorCovariance(gamma=np.diag([10.0, 1.0]))
    assert place_brute_d(basis, prior, NOISE, 1).indices == (1,)
    assert place_brute_d(basis, prior, NOISE, 2).indices == (0, 1)


def test_brute_force_ties_go_to_the_first_subset():
    basis = ModalBasis(phi=np.ones((4, 1)) / 2.0, singular_values=np.ones(1), n_samples_used=2)
    prior = PriorCovariance(gamma=np.eye(1))
    assert place_brute_d(basis, prior, NOISE, 2).indices == (0, 1)


def test_budget_is_checked_before_work():
    assert check_budget(20, 3) == 1140
    with pytest.raises(BudgetExceeded, match=r"C\(40,10\) = 847660528"):
        check_budget(40, 10)
    with pytest.raises(BudgetExceeded):
        check_budget(10, 5, budget=100)


def test_subset_chunks_cover_every_subset_in_order():
    chunks = subset_chunks(6, 3, size=7)
    assert [len(c) for c in chunks] == [7, 7, 6]
    flat = [tuple(int(i) for i in row) for c in chunks for row in c]
    assert flat == list(itertools.combinations(range(6), 3))


@pytest.fixture
def three_mode_problem(harmonic_split, harmonic_model):
    _, test = harmonic_split
    basis, prior = harmonic_model
    truth = test.data[:, :20]
    noisy = truth + 0.1 * np.random.default_rng(5).standard_normal(truth.shape)
    return basis.truncate(3), prior.truncate(3), truth, noisy


def exhaustive_error_optimum(estimator, basis, prior, truth, noisy, k):
    best_error, best_subset = np.inf, None
    for subset in itertools.combinations(range(basis.n_locations), k):
        sel = SensorSelection(subset, basis.n_locations)
        post = build_posterior(basis, sel, prior, NOISE) if estimator == "map" else None
        states = reconstruct_states(estimator, basis, sel, sel.measure(noisy), posterior=post)
        error = relative_errors(states, truth).mean()
        if error < best_error - 1e-12:
            best_error, best_subset = error, subset
    return best_error, best_subset


@pytest.mark.parametrize("estimator", ["map", "deim"])
def test_error_optimal_placement_matches_exhaustive_search(three_mode_problem, estimator, monkeypatch):
    basis, prior, truth, noisy = three_mode_problem
    monkeypatch.setattr("sensing.placer_brute_error.ERROR_CHUNK", 97)
    result = place_error_optimal(basis, truth, noisy, 3, estimator=estimator, prior=prior, noise=NOISE)
    best_error, best_subset = exhaustive_error_optimum(estimator, basis, prior, truth, noisy, 3)
    assert result.indices == best_subset
    assert result.method == f"opt_{estimator}"
    post = build_posterior(basis, result.selection, prior, NOISE) if estimator == "map" else None
    sel = result.selection
    states = reconstruct_states(estimator, basis, sel, sel.measure(noisy), posterior=post)
    assert relative_errors(states, truth).mean() == pytest.approx(best_error, rel=1e-9)


def test_error_optimal_placement_checks_its_inputs(three_mode_problem):
    basis, prior, truth, noisy = three_mode_problem
    with pytest.raises(BudgetExceeded, match="error-optimal placement needs C"):
        place_error_optimal(basis, truth, noisy, 3, estimator="deim", budget=100)
    with pytest.raises(InputError, match="unknown estimator"):
        ErrorOptimalPlacer(basis, truth, noisy, estimator="kalman", verbose=False)
    with pytest.raises(InputError, match="prior and noise sigma"):
        ErrorOptimalPlacer(basis, truth, noisy, estimator="map", verbose=False)
    with pytest.raises(InputError, match="must both be"):
        ErrorOptimalPlacer(basis, truth, noisy[:, :5], estimator="deim", verbose=False)
    assert place_error_optimal(basis, truth, noisy, 0, estimator="deim").indices == ()


def test_greedy_is_near_optimal(harmonic_model):
    basis, prior = harmonic_model
    g = d_gram(basis, prior, NOISE)
    for k in (2, 3):
        greedy = gain_from_gram(g, place_greedy_d(basis, prior, NOISE, k).indices)
        best = gain_from_gram(g, place_brute_d(basis, prior, NOISE, k).indices)
        assert greedy <= best + 1e-9
        assert greedy >= (1 - 1 / math.e) * best


def test_cpqr_placement_and_surplus_note(random_basis):
    basis = random_basis(6, 2, seed=5)
    result = place_cpqr(basis, 4)
    pivots = list(cpqr(basis.phi.T).pivots)
    assert list(result.indices) == pivots[:4]
    assert list(result.indices[2:]) == sorted(result.indices[2:])
    assert result.notes and "beyond the 2 modes" in result.notes[0]
    assert place_cpqr(basis, 2).notes == ()


def test_cpqr_bound_holds(harmonic_model):
    basis, _ = harmonic_model
    sel = place_cpqr(basis, basis.n_modes).selection
    inverse = np.linalg.inv(sel.operator(basis.phi))
    assert spectral_norm(inverse) <= cpqr_bound(basis.n_locations, basis.n_modes)
    assert cpqr_bound(10, 2) == pytest.approx(math.sqrt(8) * 4)
    with pytest.raises(InputError):
        cpqr_bound(5, 6)


def test_qmap_with_scaled_identity_prior_matches_cpqr(random_basis):
    basis = random_basis(10, 4, seed=6)
    prior = PriorCovariance(gamma=3.0 * np.eye(4))
    assert place_qmap(basis, prior, NOISE, 4).indices == place_cpqr(basis, 4).indices


def test_qmap_gain_is_bracketed(harmonic_model):
    basis, prior = harmonic_model
    for k in (3, 5, 8):
        lower, upper = qmap_gain_bounds(basis, prior, NOISE, k)
        gain = info_gain(basis, place_qmap(basis, prior, NOISE, k).selection, prior, NOISE)
        assert lower - 1e-9 <= gain <= upper + 1e-9


def test_qmap_gain_bounds_with_every_location_selected(random_basis):
    basis = random_basis(4, 2, seed=3)
    prior = PriorCovariance(gamma=np.eye(2))
    lower, upper = qmap_gain_bounds(basis, prior, NOISE, 4)
    assert math.isfinite(lower) and math.isfinite(upper)
    gain = info_gain(basis, place_qmap(basis, prior, NOISE, 4).selection, prior, NOISE)
    assert lower == upper == pytest.approx(gain, rel=1e-9)


def test_gain_is_submodular(harmonic_model):
    basis, prior = harmonic_model
    small = SensorSelection((2,), basis.n_locations)
    large = SensorSelection((2, 9, 14), basis.n_locations)
    for location in (0, 5, 17):
        assert marginal_gain(basis, small, location, prior, NOISE) >= \
            marginal_gain(basis, large, location, prior, NOISE) - 1e-12
    assert marginal_gain(basis, large, 9, prior, NOISE) == 0.0


def test_random_placement_is_seeded():
    a = place_random(20, 5, seed=4)
    assert a == place_random(20, 5, seed=4)
    assert len(set(a.indices)) == 5
    assert sorted(place_random(6, 6, seed=1).indices) == list(range(6))


def test_dispatcher(harmonic_model):
    basis, prior = harmonic_model
    assert place("cpqr", basis, 4).indices == place_cpqr(basis, 4).indices
    assert place("greedy_d", basis, 3, prior, NOISE, use_rank1=False, jobs=1).method == "greedy_d"
    assert place("random", basis, 3, seed=2).indices == place_random(basis.n_locations, 3, 2).indices
    with pytest.raises(InputError, match="unknown placement method"):
        place("e_optimal", basis, 3)


def test_verbose_placer_prints_banner(harmonic_model, capsys, tmp_path):
    basis, _ = harmonic_model
    placer = RandomPlacer(basis, seed=0, verbose=True)
    result = placer.place(3)
    placer.save_csv(result, str(tmp_path / "random.csv"), seed=0)
    out = capsys.readouterr().out
    assert "Random Sensor Placement" in out and "=" * 40 in out
    assert (tmp_path / "random.csv").read_text().startswith("random,3,20,0,")
