import numpy as np
import pytest

from sensing.datasets import NoiseModel
from sensing.pod import ModalBasis
from sensing.risk import (
    RISK_COLUMNS, RiskReport, delta_terms, monte_carlo_risk, null_space_prior_mass, nullity, risk_ls,
    risk_report, zeta_noise_iid,
)
from sensing.selection import SensorSelection
from sensing.utils import InputError, NumericalError

TOY_A = np.array([[1.0, 0.0]])


def test_toy_operator_values():
    report = risk_report(TOY_A, np.eye(2), NoiseModel(1.0))
    assert report.risk_map == pytest.approx(1.5)
    assert report.risk_ls == pytest.approx(2.0)
    assert report.premium == pytest.approx(0.5)
    assert report.delta_prior == pytest.approx(0.0, abs=1e-12)
    assert report.delta_noise == pytest.approx(0.5)
    assert report.zeta_prior == pytest.approx(0.5)
    assert report.zeta_noise == pytest.approx(1.0)
    assert report.nullity_a == 1


def test_risk_ls_terms():
    ls = risk_ls(TOY_A, np.eye(2), NoiseModel(1.0))
    assert (ls.prior_term, ls.noise_term) == (pytest.approx(1.0), pytest.approx(1.0))


def test_row_uses_table_columns():
    row = risk_report(TOY_A, np.eye(2), NoiseModel(1.0)).as_row()
    assert tuple(row) == RISK_COLUMNS
    assert row["nullity"] == 1


def test_full_column_rank_has_no_prior_premium(random_spd):
    a = np.random.default_rng(0).standard_normal((6, 4))
    report = risk_report(a, random_spd(4, seed=1), NoiseModel(0.2))
    assert report.nullity_a == 0
    assert report.zeta_prior == 0.0
    assert abs(report.delta_prior) < 1e-10 * report.scale
    assert report.premium == pytest.approx(report.delta_noise, rel=1e-8)


def test_nullity_counts_repeated_rows():
    a = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
    assert nullity(a) == 2
    assert nullity(np.zeros((2, 3))) == 3
    assert nullity(np.zeros((0, 3))) == 3


def test_invariants_hold_on_random_problems(random_spd):
    rng = np.random.default_rng(42)
    for trial in range(60):
        n, k = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        a = rng.standard_normal((k, n))
        if k > 1 and trial % 5 == 0:
            a[-1] = a[0]
        sigma = float(10 ** rng.uniform(-2, 1))
        report = risk_report(a, random_spd(n, seed=trial), NoiseModel(sigma), check=False)
        assert report.violations() == [], (trial, report)
        assert report.premium <= report.zeta_prior + report.zeta_noise + 1e-9 * report.scale


def test_dense_noise_covariance(random_spd):
    a = np.random.default_rng(5).standard_normal((3, 5))
    noise = random_spd(3, seed=6)
    report = risk_report(a, random_spd(5, seed=7), noise)
    assert report.nullity_a == 2
    assert report.delta_prior >= 0 and report.delta_noise >= 0
    pinv = np.linalg.pinv(a)
    assert report.zeta_noise == pytest.approx(np.trace(pinv @ noise @ pinv.T))


def test_delta_matrices_trace_to_scalars(random_spd):
    a = np.random.default_rng(8).standard_normal((2, 4))
    terms = delta_terms(a, random_spd(4, seed=9), NoiseModel(0.5))
    assert np.trace(terms.Delta_prior) == pytest.approx(terms.delta_prior)
    assert np.trace(terms.Delta_noise) == pytest.approx(terms.delta_noise)


def test_prior_and_noise_premiums_are_orthogonal(random_spd):
    rng = np.random.default_rng(23)
    for trial in range(40):
        n = int(rng.integers(2, 9))
        k = int(rng.integers(1, n))
        a = rng.standard_normal((k, n))
        if k > 1 and trial % 3 == 0:
            a[-1] = a[0]
        assert nullity(a) > 0
        terms = delta_terms(a, random_spd(n, seed=trial), NoiseModel(float(10 ** rng.uniform(-2, 1))))
        cross = np.linalg.norm(terms.Delta_prior.T @ terms.Delta_noise)
        scale = np.linalg.norm(terms.Delta_prior) * np.linalg.norm(terms.Delta_noise)
        assert cross <= 1e-9 * scale + 1e-14, trial


def test_zeta_noise_singular_value_form():
    a = np.diag([2.0, 0.5])
    assert zeta_noise_iid(a, 0.1) == pytest.approx(0.01 * (1 / 4 + 4))


def test_violations_are_reported_and_raised(monkeypatch):
    bad = RiskReport(risk_map=1.0, risk_ls=2.0, delta_prior=-0.5, delta_noise=1.5,
                     zeta_prior=0.0, zeta_noise=1.0, premium=1.0, nullity_a=0)
    problems = bad.violations()
    assert any("delta_prior" in p and "< 0" in p for p in problems)
    assert any("exceeds zeta_noise" in p for p in problems)

    monkeypatch.setattr(RiskReport, "violations", lambda self: ["forced"])
    with pytest.raises(NumericalError, match="forced"):
        risk_report(TOY_A, np.eye(2), NoiseModel(1.0))


def test_shape_mismatch():
    with pytest.raises(InputError, match="prior is 3x3"):
        risk_report(TOY_A, np.eye(3), NoiseModel(1.0))


@pytest.mark.parametrize("estimator", ["deim", "map", "zero"])
def test_monte_carlo_agrees_with_closed_form(estimator, random_spd):
    a = np.random.default_rng(10).standard_normal((2, 3))
    gamma = random_spd(3, seed=11)
    noise = NoiseModel(0.5)
    report = risk_report(a, gamma, noise)
    exact = {"deim": report.risk_ls, "map": report.risk_map, "zero": np.trace(gamma)}[estimator]
    mean, se = monte_carlo_risk(estimator, a, gamma, noise, n_draws=20_000, seed=3)
    assert se > 0
    assert abs(mean - exact) <= 4 * se


def test_monte_carlo_is_seeded(random_spd):
    gamma = random_spd(2, seed=1)
    first = monte_carlo_risk("map", TOY_A, gamma, NoiseModel(1.0), n_draws=500, seed=9)
    second = monte_carlo_risk("map", TOY_A, gamma, NoiseModel(1.0), n_draws=500, seed=9)
    assert first == second


def test_monte_carlo_input_checks():
    with pytest.raises(InputError, match="at least 100 draws"):
        monte_carlo_risk("map", TOY_A, np.eye(2), NoiseModel(1.0), n_draws=99, seed=0)
    with pytest.raises(InputError, match="unknown estimator"):
        monte_carlo_risk("ridge", TOY_A, np.eye(2), NoiseModel(1.0), n_draws=100, seed=0)


def test_null_space_prior_mass():
    basis = ModalBasis(phi=np.eye(2), singular_values=np.ones(2), n_samples_used=2)
    mass = null_space_prior_mass(basis, SensorSelection((0,), 2), np.diag([3.0, 2.0]))
    assert mass == pytest.approx(2.0)
