import json

import numpy as np
import pytest

from overadapt.estimators import EstimatorKind
from overadapt.presets import theorem_check_env
from overadapt.risk import AnalyticRisk, FtResolvent
from overadapt.spectra import SpectrumSpec, build_eigenvalues
from overadapt.synth import TaskEnvironment, derive_rng, sample_design
from overadapt.theory import (
    eigen_band_check,
    ensemble_risk_dtau,
    ft_risk_dlambda,
    lambda_prime,
    lemma_ft_risk,
    lemma_sum_risk,
    sum_risk_dlambda,
    tau_prime,
    verify_theorem_orderings,
)


def bench_env(p=600, n=24):
    return theorem_check_env(p=p, n=n)


def draw_ft(env, seed=0):
    return sample_design(env.spectrum_ft, env.n,
                         derive_rng(seed, "design_ft", 0), env.coord_dist)


def central_diff(f, x, h):
    return (f(x + h) - f(x - h)) / (2 * h)


# -------------------------------------------------------------- lambda_prime

def test_lambda_prime_values():
    def env_with(s2t, z2, n):
        return TaskEnvironment(
            n=n,
            spectrum_pre=SpectrumSpec(1, 0.01, 100, 100),
            spectrum_ft=SpectrumSpec(1, 0.01, 100, 100),
            zeta1=1e-4, zeta2=z2, sigma2=1e-2, sigma2_tilde=s2t,
        )
    assert lambda_prime(env_with(0.0, 1e-2, 40)) == 0.0
    assert lambda_prime(env_with(1e-2, 1e-2, 40)) == pytest.approx(0.025, rel=1e-12)
    half = lambda_prime(env_with(1e-2, 1e-2, 80))
    assert half == pytest.approx(lambda_prime(env_with(1e-2, 1e-2, 40)) / 2, rel=1e-15)
    with pytest.raises(ValueError):
        lambda_prime(env_with(1e-2, 0.0, 40))


# ----------------------------------------------------------------- tau_prime

def test_tau_prime_is_one_at_lambda_prime():
    env = bench_env()
    lam_star = lambda_prime(env)
    for seed in range(5):
        Xt = draw_ft(env, seed)
        assert abs(tau_prime(Xt, env, lam_star) - 1.0) <= 1e-10


def test_tau_prime_interior_and_grid_argmin():
    env = bench_env(p=2000, n=40)
    X = sample_design(env.spectrum_pre, env.n, derive_rng(1, "design_pre", 0))
    Xt = draw_ft(env, 1)
    ts = tau_prime(Xt, env, 0.0)
    assert 0.0 < ts < 1.0
    ev = AnalyticRisk.from_env(X, Xt, env)
    taus = np.round(np.arange(0.0, 1.0001, 1e-3), 9)
    quads = ev.term_quadratics(0.0, "ft")
    vals = np.array([sum(q(t) for q in quads.values()) for t in taus])
    assert abs(taus[int(np.argmin(vals))] - ts) <= 2e-3


def test_tau_prime_decreases_with_noise():
    env = bench_env()
    Xt = draw_ft(env, 2)
    values = []
    for s2t in (1e-3, 1e-2, 1e-1, 1.0):
        noisy = TaskEnvironment(
            n=env.n, spectrum_pre=env.spectrum_pre, spectrum_ft=env.spectrum_ft,
            zeta1=env.zeta1, zeta2=env.zeta2, sigma2=env.sigma2, sigma2_tilde=s2t,
            theta_c_norm=env.theta_c_norm, xi=env.xi)
        values.append(tau_prime(Xt, noisy, 0.0))
    assert all(a > b for a, b in zip(values, values[1:]))


# ------------------------------------------------------------- derivatives

def test_ft_derivative_sign_and_zero():
    env = bench_env()
    Xt = draw_ft(env, 3)
    lam_star = lambda_prime(env)
    res = FtResolvent(Xt, build_eigenvalues(env.spectrum_ft))
    t = res.traces(lam_star)
    scale = 2 * env.n * (env.zeta2 * env.n * lam_star + env.sigma2_tilde) * t["t4"]
    assert abs(ft_risk_dlambda(Xt, env, lam_star, cache=res)) <= 1e-12 * scale
    assert ft_risk_dlambda(Xt, env, lam_star / 2, cache=res) < 0.0
    assert ft_risk_dlambda(Xt, env, 2 * lam_star, cache=res) > 0.0
    with pytest.raises(ValueError):
        ft_risk_dlambda(Xt, env, -1e-9)


def test_sum_derivative_signs():
    env = bench_env()
    Xt = draw_ft(env, 4)
    lam_star = lambda_prime(env)
    assert sum_risk_dlambda(None, Xt, env, lam_star) < 0.0
    assert sum_risk_dlambda(None, Xt, env, 2 * lam_star) <= 0.0


def test_derivatives_match_finite_differences():
    env = bench_env()
    Xt = draw_ft(env, 5)
    res = FtResolvent(Xt, build_eigenvalues(env.spectrum_ft))
    lam0, tau0 = 0.01, 0.45
    h = 1e-5 * lam0
    fd_f = central_diff(lambda l: lemma_ft_risk(Xt, env, l, 1.0, cache=res), lam0, h)
    assert ft_risk_dlambda(Xt, env, lam0, cache=res) == pytest.approx(fd_f, rel=1e-4)
    fd_h = central_diff(lambda l: lemma_sum_risk(Xt, env, l, 1.0, cache=res), lam0, h)
    assert sum_risk_dlambda(None, Xt, env, lam0, cache=res) == pytest.approx(
        fd_h, rel=1e-4)
    fd_g = central_diff(lambda t: lemma_ft_risk(Xt, env, lam0, t, cache=res),
                        tau0, 1e-6)
    assert ensemble_risk_dtau(Xt, env, lam0, tau0, "ft", cache=res) == pytest.approx(
        fd_g, rel=1e-4)
    fd_j = central_diff(lambda t: lemma_sum_risk(Xt, env, lam0, t, cache=res),
                        tau0, 1e-6)
    assert ensemble_risk_dtau(Xt, env, lam0, tau0, "sum", cache=res) == pytest.approx(
        fd_j, rel=1e-4)


def test_dtau_stationary_points():
    env = bench_env()
    Xt = draw_ft(env, 6)
    res = FtResolvent(Xt, build_eigenvalues(env.spectrum_ft))
    lam = 0.005
    ts = tau_prime(Xt, env, lam, cache=res)
    scale = 2 * env.zeta2 * res.traces(lam)["t1"]
    assert abs(ensemble_risk_dtau(Xt, env, lam, ts, "ft", cache=res)) <= 1e-10 * scale
    assert abs(ensemble_risk_dtau(Xt, env, lam, ts / 2, "sum", cache=res)) <= 1e-10 * scale
    # below the optimal ridge level the weight-1 slope is strictly positive
    assert ensemble_risk_dtau(Xt, env, lam, 1.0, "ft", cache=res) > 0.0
    with pytest.raises(ValueError):
        ensemble_risk_dtau(Xt, env, lam, 0.5, "nope", cache=res)


# ------------------------------------------------------------- ordering suite

def test_verify_orderings_bench_run():
    env = bench_env()
    report = verify_theorem_orderings(env, seeds=8, master_seed=0)
    assert report.rates["item1"] >= 0.9
    assert report.rates["item2"] >= 0.9
    assert report.rates["item3"] >= 0.9
    again = verify_theorem_orderings(env, seeds=8, master_seed=0)
    assert report.to_dict() == again.to_dict()


def test_verify_orderings_tau_one_is_tie():
    env = bench_env()
    lam_star = lambda_prime(env)
    report = verify_theorem_orderings(
        env, seeds=2, master_seed=1,
        lambda_grid=[lam_star / 2], tau_grid=[1.0])
    for seed in report.seeds:
        assert seed.ties["item3"] >= 1  # ensemble at weight 1 equals its ridge leg


def test_ordering_report_serialization(tmp_path):
    env = bench_env()
    report = verify_theorem_orderings(env, seeds=2, master_seed=2)
    jpath = tmp_path / "report.json"
    report.to_json(jpath)
    payload = json.loads(jpath.read_text())
    assert payload["rates"].keys() == {"item1", "item2", "item3"}
    cpath = tmp_path / "report.csv"
    report.to_csv(cpath)
    lines = cpath.read_text().strip().splitlines()
    assert lines[0] == "seed,item,holds,ties,margin"
    assert len(lines) == 1 + 2 * 3


def test_ridge_at_optimum_beats_interpolation_per_instance():
    env = bench_env()
    lam_star = lambda_prime(env)
    strict = 0
    for seed in range(10):
        X = sample_design(env.spectrum_pre, env.n,
                          derive_rng(seed, "design_pre", 0))
        Xt = draw_ft(env, seed)
        ev = AnalyticRisk.from_env(X, Xt, env)
        ridge = ev.task_risk(EstimatorKind.ridge(lam_star), "ft").value
        ridgeless = ev.task_risk(EstimatorKind.ridgeless(), "ft").value
        assert ridge <= ridgeless
        strict += ridge < ridgeless
    assert strict >= 9  # strict in at least 90% of seeds


# ------------------------------------------------------- eigen concentration

def test_eigen_band_check_concentrates():
    n = 10
    p = 200 * n
    spec = SpectrumSpec(k_star=1, gamma=0.01, p=p, p_tilde=p)
    report = eigen_band_check(spec, n=n, trials=100, rng=derive_rng(0, "eigen", 0))
    assert report.regime_ok
    assert report.scale == pytest.approx(0.01 * (p - 1), rel=1e-12)
    assert report.rate >= 0.95


def test_eigen_band_zero_tail_flagged():
    spec = SpectrumSpec(k_star=1, gamma=0.0, p=50, p_tilde=50)
    report = eigen_band_check(spec, n=5, trials=10, rng=derive_rng(1, "eigen", 0))
    assert not report.regime_ok
    assert report.scale == 0.0
    assert "zero" in report.note


def test_eigen_band_single_sample_scalar_case():
    spec = SpectrumSpec(k_star=1, gamma=0.05, p=400, p_tilde=400)
    report = eigen_band_check(spec, n=1, trials=50, rng=derive_rng(2, "eigen", 0))
    assert report.regime_ok  # effective rank p-1 is far above b*n = 1
    assert report.rate >= 0.9


def test_eigen_band_regime_violation_reported_not_fatal():
    spec = SpectrumSpec(k_star=1, gamma=0.01, p=20, p_tilde=20)
    report = eigen_band_check(spec, n=100, trials=5, rng=derive_rng(3, "eigen", 0))
    assert not report.regime_ok
    assert "regime violated" in report.note
    assert report.trials == 5
