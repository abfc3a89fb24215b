"""Built-in simulation cases.

Four case labels cover two sample sizes; the tails of the two covariances
are tied to n (pretrain tail n^-1.5, fine-tune tail n^-1), so the labels'
gamma values name whichever tail the original figure captioned.  Cases a/b
share the n = 40 environment and c/d the n = 60 one; the label is kept on
every output row so runs stay distinguishable.

Full-size runs use p = 10^4; the default trims the ambient dimension to
p = 2000 to keep bench runs fast (nothing else changes).
"""

from __future__ import annotations

import numpy as np

from .spectra import SpectrumSpec
from .synth import TaskEnvironment

FULL_P = 10_000
DESK_P = 2_000

# case -> (n, captioned gamma)
CASES = {
    "a": (40, 0.025),
    "b": (40, 0.004),
    "c": (60, 0.017),
    "d": (60, 0.0022),
}

TRADEOFF_LAMBDA = 1e-4   # near-optimal ridge level used for the trade-off curves
FT_ONLY_LAMBDA = 1e-7    # deliberately under-tuned ridge level for the ft-only runs

# Ridge levels swept for the fine-tune-family comparison on trade-off
# plots: two decades either side of the trade-off level, the "hard to tune
# precisely" regime these runs are about.
RIDGE_FAMILY = tuple(float(v) for v in np.logspace(-6, -2, 9))

# Fine-tune support size as a multiple of n.  The support must strictly
# exceed the sample count or the interpolating estimator sits on the
# square-Gram variance spike and every fine-tuned estimator loses to the
# pretrained one, the opposite of what these cases demonstrate; a factor of
# 2 keeps p_tilde ~ n and p_tilde * gamma = 2.
FT_SUPPORT_FACTOR = 2


def preset_environment(case: str, full: bool = False, p: int | None = None) -> TaskEnvironment:
    """The simulation environment for one case label."""
    if case not in CASES:
        raise ValueError(f"unknown case {case!r}; known: {sorted(CASES)}")
    n, _ = CASES[case]
    if p is None:
        p = FULL_P if full else DESK_P
    return TaskEnvironment(
        n=n,
        spectrum_pre=SpectrumSpec(k_star=1, gamma=float(n) ** -1.5, p=p, p_tilde=p),
        spectrum_ft=SpectrumSpec(k_star=1, gamma=1.0 / n, p=p,
                                 p_tilde=FT_SUPPORT_FACTOR * n),
        zeta1=1e-4,
        zeta2=1e-2,
        sigma2=1e-2,
        sigma2_tilde=1e-2,
        theta_c_norm=1.0,
        coord_dist="gaussian",
        xi=0.5,
    )


def preset_defaults(case: str, full: bool = False) -> dict:
    """Flat config dict for one case (see config.ExperimentConfig)."""
    env = preset_environment(case, full=full)
    return {
        "case": case,
        "n": env.n,
        "p": env.p,
        "p_tilde": env.spectrum_ft.p_tilde,
        "k_star": 1,
        "gamma_pre": env.spectrum_pre.gamma,
        "gamma_ft": env.spectrum_ft.gamma,
        "zeta1": env.zeta1,
        "zeta2": env.zeta2,
        "sigma2": env.sigma2,
        "sigma2_tilde": env.sigma2_tilde,
        "theta_c_norm": 1.0,
        "coord_dist": "gaussian",
        "xi": 0.5,
        "lambda_grid": [TRADEOFF_LAMBDA],
        "replicates": 20,
    }


def theorem_check_env(p: int = DESK_P, n: int = 40) -> TaskEnvironment:
    """Environment used by the ordering suites.

    A fine-tune support of 2n keeps the fine-tune Gram away from squareness
    and strictly satisfies p_tilde > n.  The variance scales sit inside the
    diagnostic bands (zeta2 ~ sigma2 ~ sigma2_tilde, zeta1 and the shared
    parameter small) but are chosen so the task-shift and fine-tune-noise
    terms dominate the risk at this bench dimension: the closed-form optima
    only match the full-risk optima once the lower-order terms are
    negligible, and at p ~ 2000 the simulation-default constants leave them
    a percent-level perturbation.
    """
    return TaskEnvironment(
        n=n,
        spectrum_pre=SpectrumSpec(k_star=1, gamma=float(n) ** -1.5, p=p, p_tilde=p),
        spectrum_ft=SpectrumSpec(k_star=1, gamma=1.0 / n, p=p, p_tilde=2 * n),
        zeta1=1e-5,
        zeta2=4e-2,
        sigma2=1.25e-2,
        sigma2_tilde=4e-2,
        theta_c_norm=0.25,
        coord_dist="gaussian",
        xi=1.0 / 3.0,
    )
