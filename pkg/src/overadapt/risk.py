"""Excess risks of the four estimators, three ways.

``plugin_excess_risk``       spectrum-weighted squared error of one realised
                             weight vector.
``conditional_expected_risk`` exact expectation over (theta_c, alpha1,
                             alpha2, noise) with the two designs held fixed,
                             via closed-form trace formulas.
``mc_expected_risk``         Monte-Carlo estimate of the same expectation,
                             the independent numerical check.
``lemma_approx_risk``        the two-term (task-shift + label-noise)
                             shortcut that keeps only the dominant pieces.

Trace reduction
---------------
Write A = X X^T, At = Xt Xt^T, R = At + n*lam*I, G = X Xt^T, and for a
diagonal covariance D let S_X(D) = X D X^T, S_Xt(D) = Xt D Xt^T and
C(D) = X D Xt^T (all n x n).  With P = X^T A^{-1} X, K = tau * Xt^T R^{-1} Xt
and W = X (I - K), each conditional expectation below is a quadratic in tau
whose coefficients are traces of n x n products only:

    tr{D (I-K)^2}        = tr D - 2 tau tr{R^-1 S_Xt(D)}
                                 + tau^2 tr{R^-1 At R^-1 S_Xt(D)}
    tr{A^-1 W D W^T}     = tr{A^-1 S_X(D)} - 2 tau tr{A^-1 C(D) V}
                                 + tau^2 tr{A^-1 V^T S_Xt(D) V},  V = R^-1 G^T
    tr{A^-2 W D W^T}     = same with A^-2
    tr{D (I-K) P (I-K)}  = tr{A^-1 W D W^T}
    tr{D [I-(I-K)P][I-(I-K)P]^T} = tr D - 2 tr{D (I-K) P} + tr{A^-1 W D W^T}
    tr{K D K}            = tau^2 tr{R^-1 At R^-1 S_Xt(D)}

These identities are unit-tested against dense p x p evaluation at tiny
sizes.  The quadratic-in-tau structure is exact, so an ensemble sweep costs
one factorisation per lam and O(1) arithmetic per tau.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .estimators import PRETRAINED, EstimatorKind, GramSolver
from .synth import TaskEnvironment, derive_rng

TERM_KEYS = ("bias_thetac", "term_zeta1", "term_zeta2", "term_sigma", "term_sigma_tilde")

# Negative term values smaller than this fraction of the total magnitude are
# rounding artifacts of trace cancellation and are clamped to zero.
_CLAMP_REL = 1e-10

_MC_BATCH = 512


@dataclass(frozen=True)
class TaskRisk:
    """Risk on one task: total value, five-way term split, optional MC error."""

    value: float
    terms: dict[str, float] = field(default_factory=dict)
    se: float | None = None
    note: str | None = None


@dataclass(frozen=True)
class RiskReport:
    """Risks of one estimator on both tasks under one evaluation method."""

    method: str  # plugin | monte_carlo | analytic | lemma_approx
    kind: EstimatorKind
    pre: TaskRisk | None
    ft: TaskRisk | None
    draws: int | None = None

    @property
    def l_pre(self) -> float:
        return self.pre.value if self.pre is not None else float("nan")

    @property
    def l_ft(self) -> float:
        return self.ft.value if self.ft is not None else float("nan")

    def task(self, name: str) -> TaskRisk:
        out = self.pre if name == "pre" else self.ft
        if out is None:
            raise ValueError(f"task {name!r} was not evaluated in this report")
        return out

    def to_dict(self) -> dict:
        d = {
            "method": self.method,
            "estimator": self.kind.name,
            "lambda": self.kind.lam,
            "tau": self.kind.tau,
            "draws": self.draws,
        }
        for name, tr in (("pre", self.pre), ("ft", self.ft)):
            if tr is None:
                continue
            d[f"l_{name}"] = tr.value
            d[f"terms_{name}"] = dict(tr.terms)
            if tr.se is not None:
                d[f"se_{name}"] = tr.se
        return d


def plugin_excess_risk(theta_hat, theta_true: np.ndarray, eigs: np.ndarray) -> float:
    """Sum_i eigs_i (theta_hat_i - theta_true_i)^2."""
    w = theta_hat.weights if hasattr(theta_hat, "weights") else np.asarray(theta_hat)
    theta_true = np.asarray(theta_true)
    if w.shape != theta_true.shape or w.shape[0] != np.asarray(eigs).shape[0]:
        raise ValueError("dimension mismatch between weights, target and spectrum")
    diff = w - theta_true
    return float(np.sum(np.asarray(eigs) * diff * diff))


def _finish_terms(raw: dict[str, float]) -> tuple[float, dict[str, float]]:
    scale = sum(abs(v) for v in raw.values())
    terms = {}
    for k in TERM_KEYS:
        v = raw.get(k, 0.0)
        if -_CLAMP_REL * scale < v < 0.0:
            v = 0.0
        terms[k] = float(v)
    return float(sum(terms.values())), terms


class _Quad:
    """Quadratic a0 + a1*tau + a2*tau^2."""

    __slots__ = ("a0", "a1", "a2")

    def __init__(self, a0=0.0, a1=0.0, a2=0.0):
        self.a0, self.a1, self.a2 = float(a0), float(a1), float(a2)

    def __call__(self, tau: float) -> float:
        return self.a0 + tau * (self.a1 + tau * self.a2)


class AnalyticRisk:
    """Exact conditional risk evaluator for one pair of designs.

    Accepts explicit eigenvalue vectors so irregular spectra can be fed in
    directly; ``from_env`` builds them from the block specs.  With
    ``theta_c=None`` the shared-parameter quadratic form is averaged over
    the uniform sphere of radius ``theta_c_norm`` (value
    norm^2/p * trace); passing a vector evaluates it at that fixed point.
    """

    def __init__(
        self,
        X: np.ndarray,
        Xt: np.ndarray,
        eigs_pre: np.ndarray,
        eigs_ft: np.ndarray,
        zeta1: float,
        zeta2: float,
        sigma2: float,
        sigma2_tilde: float,
        theta_c_norm: float = 1.0,
        theta_c: np.ndarray | None = None,
        jitter: bool = False,
    ):
        self.X, self.Xt = X, Xt
        self.eigs_pre = np.asarray(eigs_pre, dtype=float)
        self.eigs_ft = np.asarray(eigs_ft, dtype=float)
        self.zeta1, self.zeta2 = zeta1, zeta2
        self.sigma2, self.sigma2_tilde = sigma2, sigma2_tilde
        self.theta_c_norm = theta_c_norm
        self.theta_c = None if theta_c is None else np.asarray(theta_c, dtype=float)
        self.n = Xt.shape[0]

        self.solver_pre = GramSolver(X, jitter=jitter)
        self.solver_ft = GramSolver(Xt, jitter=jitter)
        self.gram_ft = self.solver_ft.gram

        # n x n covariance-weighted blocks, one per (design, task) pair
        self.SX = {t: (X * e) @ X.T for t, e in self._tasks()}
        self.SXt = {t: (Xt * e) @ Xt.T for t, e in self._tasks()}
        self.C = {t: (X * e) @ Xt.T for t, e in self._tasks()}
        self.tr_cov = {t: float(np.sum(e)) for t, e in self._tasks()}

        # lam-independent traces against the pretrain Gram
        self._w0, self._u0 = {}, {}
        for t in ("pre", "ft"):
            a1 = self.solver_pre.solve(self.SX[t])
            self._w0[t] = float(np.trace(a1))
            self._u0[t] = float(np.trace(self.solver_pre.solve(a1)))

        if self.theta_c is not None:
            # h = (I - P) theta_c, evaluated with matrix-vector work only
            h = self.theta_c - X.T @ self.solver_pre.solve(X @ self.theta_c)
            self._h = h
            self._h_c0 = {t: float(h @ (e * h)) for t, e in self._tasks()}
            self._h_cov = {t: Xt @ (e * h) for t, e in self._tasks()}  # Xt D h
            self._h_g = Xt @ h

        self._lam_cache: dict[float, dict] = {}

    def _tasks(self):
        return (("pre", self.eigs_pre), ("ft", self.eigs_ft))

    @classmethod
    def from_env(
        cls,
        X: np.ndarray,
        Xt: np.ndarray,
        env: TaskEnvironment,
        theta_c: np.ndarray | None = None,
        jitter: bool = False,
    ) -> "AnalyticRisk":
        eigs_pre, eigs_ft = env.eigenvalues()
        return cls(
            X, Xt, eigs_pre, eigs_ft,
            zeta1=env.zeta1, zeta2=env.zeta2,
            sigma2=env.sigma2, sigma2_tilde=env.sigma2_tilde,
            theta_c_norm=env.theta_c_norm, theta_c=theta_c, jitter=jitter,
        )

    def _blocks(self, lam: float) -> dict:
        key = float(lam)
        if key in self._lam_cache:
            return self._lam_cache[key]
        n = self.n
        solve = lambda B: self.solver_ft.solve(B, nlam=n * key)
        V = solve(self.Xt @ self.X.T)  # R^-1 G^T
        RiA = solve(self.gram_ft)
        blk = {"V": V}
        for t in ("pre", "ft"):
            R1S = solve(self.SXt[t])
            blk[f"t1_{t}"] = float(np.trace(R1S))
            blk[f"t2_{t}"] = float(np.trace(solve(R1S)))
            blk[f"t3_{t}"] = float(np.trace(RiA @ R1S))
            CV = self.C[t] @ V
            a1 = self.solver_pre.solve(CV)
            blk[f"w1_{t}"] = float(np.trace(a1))
            blk[f"u1_{t}"] = float(np.trace(self.solver_pre.solve(a1)))
            VtSV = V.T @ self.SXt[t] @ V
            a2 = self.solver_pre.solve(VtSV)
            blk[f"w2_{t}"] = float(np.trace(a2))
            blk[f"u2_{t}"] = float(np.trace(self.solver_pre.solve(a2)))
        if self.theta_c is not None:
            q = solve(self._h_g)
            for t in ("pre", "ft"):
                blk[f"hb1_{t}"] = -2.0 * float(self._h_cov[t] @ q)
                blk[f"hb2_{t}"] = float(q @ (self.SXt[t] @ q))
        self._lam_cache[key] = blk
        return blk

    def term_quadratics(self, lam: float, task: str) -> dict[str, _Quad]:
        """Each risk term as an exact quadratic in tau, at fixed lam."""
        t = task
        b = self._blocks(lam)
        w0, u0 = self._w0[t], self._u0[t]
        trc = self.tr_cov[t]
        quads = {}
        if self.theta_c is None:
            scale = self.theta_c_norm**2 / self.eigs_pre.size
            quads["bias_thetac"] = _Quad(
                scale * (trc - w0),
                scale * (-2 * b[f"t1_{t}"] + 2 * b[f"w1_{t}"]),
                scale * (b[f"t3_{t}"] - b[f"w2_{t}"]),
            )
        else:
            quads["bias_thetac"] = _Quad(self._h_c0[t], b[f"hb1_{t}"], b[f"hb2_{t}"])
        if task == "pre":
            quads["term_zeta1"] = _Quad(
                self.zeta1 * (self.tr_cov["pre"] - w0), 0.0, self.zeta1 * b[f"w2_{t}"]
            )
            quads["term_zeta2"] = _Quad(0.0, 0.0, self.zeta2 * b[f"t3_{t}"])
        else:
            quads["term_zeta1"] = _Quad(
                self.zeta1 * w0, -2 * self.zeta1 * b[f"w1_{t}"], self.zeta1 * b[f"w2_{t}"]
            )
            quads["term_zeta2"] = _Quad(
                self.zeta2 * trc, -2 * self.zeta2 * b[f"t1_{t}"], self.zeta2 * b[f"t3_{t}"]
            )
        quads["term_sigma"] = _Quad(
            self.sigma2 * u0, -2 * self.sigma2 * b[f"u1_{t}"], self.sigma2 * b[f"u2_{t}"]
        )
        quads["term_sigma_tilde"] = _Quad(0.0, 0.0, self.sigma2_tilde * b[f"t2_{t}"])
        return quads

    def _task_risk_tau0(self, task: str) -> TaskRisk:
        # pretrained estimator: no fine-tune resolvent is ever touched
        t = task
        w0, u0 = self._w0[t], self._u0[t]
        trc = self.tr_cov[t]
        if self.theta_c is None:
            bias = self.theta_c_norm**2 / self.eigs_pre.size * (trc - w0)
        else:
            bias = self._h_c0[t]
        raw = {
            "bias_thetac": bias,
            "term_zeta1": self.zeta1 * (self.tr_cov["pre"] - w0) if task == "pre"
            else self.zeta1 * w0,
            "term_zeta2": 0.0 if task == "pre" else self.zeta2 * trc,
            "term_sigma": self.sigma2 * u0,
            "term_sigma_tilde": 0.0,
        }
        value, terms = _finish_terms(raw)
        return TaskRisk(value=value, terms=terms)

    def task_risk(self, kind: EstimatorKind, task: str) -> TaskRisk:
        lam, tau = kind.effective
        if tau == 0.0:
            return self._task_risk_tau0(task)
        quads = self.term_quadratics(lam, task)
        value, terms = _finish_terms({k: q(tau) for k, q in quads.items()})
        return TaskRisk(value=value, terms=terms)

    def report(self, kind: EstimatorKind, task: str = "both") -> RiskReport:
        pre = self.task_risk(kind, "pre") if task in ("pre", "both") else None
        ft = self.task_risk(kind, "ft") if task in ("ft", "both") else None
        return RiskReport(method="analytic", kind=kind, pre=pre, ft=ft)


def conditional_expected_risk(
    X: np.ndarray,
    Xt: np.ndarray,
    env: TaskEnvironment,
    kind: EstimatorKind,
    task: str = "both",
    theta_c: np.ndarray | None = None,
    jitter: bool = False,
    evaluator: AnalyticRisk | None = None,
) -> RiskReport:
    """Exact expected excess risk conditional on the two designs.

    The expectation runs over theta_c (uniform on its sphere unless a fixed
    vector is supplied), the task offsets and both noise vectors.
    """
    ev = evaluator or AnalyticRisk.from_env(X, Xt, env, theta_c=theta_c, jitter=jitter)
    return ev.report(kind, task=task)


def mc_expected_risk(
    X: np.ndarray,
    Xt: np.ndarray,
    env: TaskEnvironment,
    kind: EstimatorKind,
    draws: int,
    rng: np.random.Generator,
    task: str = "both",
    theta_c: np.ndarray | None = None,
    jitter: bool = False,
    batch: int = _MC_BATCH,
    solver_pre: GramSolver | None = None,
    solver_ft: GramSolver | None = None,
) -> RiskReport:
    """Monte-Carlo mean of the plug-in risk over fresh parameter/noise draws.

    Designs stay fixed; Gram factorisations are built once, so each draw
    costs matrix-vector work only.  Draws are vectorised in batches, which
    does not change the stream for a fixed ``batch``.
    """
    if draws < 1:
        raise ValueError(f"draws must be >= 1, got {draws}")
    eigs_pre, eigs_ft = env.eigenvalues()
    lam, tau = kind.effective
    sp = solver_pre or GramSolver(X, jitter=jitter)
    st = solver_ft or GramSolver(Xt, jitter=jitter)
    sp.factor(0.0)
    if tau != 0.0:
        st.factor(Xt.shape[0] * lam)
    p = X.shape[1]
    want_pre = task in ("pre", "both")
    want_ft = task in ("ft", "both")
    risks_pre, risks_ft = [], []
    done = 0
    while done < draws:
        m = min(batch, draws - done)
        done += m
        if theta_c is None:
            tc = rng.standard_normal((p, m))
            tc *= env.theta_c_norm / np.linalg.norm(tc, axis=0)
        else:
            tc = np.broadcast_to(np.asarray(theta_c, dtype=float)[:, None], (p, m))
        a1 = rng.standard_normal((p, m)) * np.sqrt(env.zeta1) if env.zeta1 > 0 else 0.0
        a2 = rng.standard_normal((p, m)) * np.sqrt(env.zeta2) if env.zeta2 > 0 else 0.0
        theta = tc + a1
        theta_t = tc + a2
        Y = X @ theta
        if env.sigma2 > 0:
            Y = Y + rng.standard_normal(Y.shape) * np.sqrt(env.sigma2)
        hat = X.T @ sp.solve(Y)
        if tau != 0.0:
            Yt = Xt @ theta_t
            if env.sigma2_tilde > 0:
                Yt = Yt + rng.standard_normal(Yt.shape) * np.sqrt(env.sigma2_tilde)
            corr = st.solve(Yt - Xt @ hat, nlam=Xt.shape[0] * lam)
            hat = hat + tau * (Xt.T @ corr)
        if want_pre:
            d = hat - theta
            risks_pre.append(np.sum(eigs_pre[:, None] * d * d, axis=0))
        if want_ft:
            d = hat - theta_t
            risks_ft.append(np.sum(eigs_ft[:, None] * d * d, axis=0))

    def summarise(chunks) -> TaskRisk:
        r = np.concatenate(chunks)
        se = float(np.std(r, ddof=1) / np.sqrt(r.size)) if r.size > 1 else 0.0
        return TaskRisk(value=float(np.mean(r)), se=se)

    return RiskReport(
        method="monte_carlo",
        kind=kind,
        pre=summarise(risks_pre) if want_pre else None,
        ft=summarise(risks_ft) if want_ft else None,
        draws=draws,
    )


def mc_risk_for_env(
    env: TaskEnvironment,
    kind: EstimatorKind,
    draws: int,
    master_seed: int,
    replicate: int = 0,
    task: str = "both",
    theta_c: np.ndarray | None = None,
) -> RiskReport:
    """Convenience wrapper: draw the designs, then run the MC evaluator."""
    inst = _instance_designs(env, master_seed, replicate)
    rng = derive_rng(master_seed, "mc", replicate)
    return mc_expected_risk(inst[0], inst[1], env, kind, draws, rng,
                            task=task, theta_c=theta_c)


def _instance_designs(env, master_seed, replicate):
    from .synth import sample_design

    X = sample_design(env.spectrum_pre, env.pretrain_samples,
                      derive_rng(master_seed, "design_pre", replicate), env.coord_dist)
    Xt = sample_design(env.spectrum_ft, env.n,
                       derive_rng(master_seed, "design_ft", replicate), env.coord_dist)
    return X, Xt


class FtResolvent:
    """Trace chains of the fine-tune resolvent against one weighted Gram.

    Caches, per penalty level, the traces tr{R^-k S} for k = 1..3 and
    tr{R^-k At S} for k = 2, 3, where R = At + n*lam*I and S = Xt D Xt^T.
    These feed the two-term risk shortcut and all its closed-form
    derivatives.
    """

    def __init__(self, Xt: np.ndarray, eigs: np.ndarray, jitter: bool = False):
        self.n = Xt.shape[0]
        self.solver = GramSolver(Xt, jitter=jitter)
        self.gram = self.solver.gram
        self.S = (Xt * np.asarray(eigs, dtype=float)) @ Xt.T
        self.tr_cov = float(np.sum(eigs))
        self._cache: dict[float, dict] = {}

    def traces(self, lam: float) -> dict[str, float]:
        key = float(lam)
        if key not in self._cache:
            nlam = self.n * key
            r1 = self.solver.solve(self.S, nlam=nlam)
            r2 = self.solver.solve(r1, nlam=nlam)
            r3 = self.solver.solve(r2, nlam=nlam)
            ria = self.solver.solve(self.gram, nlam=nlam)
            self._cache[key] = {
                "t1": float(np.trace(r1)),
                "t2": float(np.trace(r2)),
                "t3": float(np.trace(ria @ r1)),
                "t4": float(np.trace(r3)),
                "t5": float(np.trace(ria @ r2)),
            }
        return self._cache[key]


def lemma_approx_risk(
    Xt: np.ndarray,
    env: TaskEnvironment,
    kind: EstimatorKind,
    task: str = "both",
    jitter: bool = False,
) -> RiskReport:
    """Dominant-term shortcut: task-shift and fine-tune noise pieces only.

    For the fine-tune task this keeps the zeta2 and sigma2_tilde terms; for
    the pretrain task of the fine-tuned estimators it keeps the matching
    pair through the fine-tune resolvent.  The pretrained estimator's
    pretrain risk is lower-order and reported as 0 with a note.
    """
    eigs_pre, eigs_ft = env.eigenvalues()
    lam, tau = kind.effective
    z2, s2t = env.zeta2, env.sigma2_tilde
    want_pre = task in ("pre", "both")
    want_ft = task in ("ft", "both")

    if kind.name == PRETRAINED:
        pre = TaskRisk(value=0.0, terms={k: 0.0 for k in TERM_KEYS},
                       note="negligible next to every fine-tuned estimator")
        raw = {k: 0.0 for k in TERM_KEYS}
        raw["term_zeta2"] = z2 * float(np.sum(eigs_ft))
        value, terms = _finish_terms(raw)
        ft = TaskRisk(value=value, terms=terms)
        return RiskReport(method="lemma_approx", kind=kind,
                          pre=pre if want_pre else None,
                          ft=ft if want_ft else None)

    res_ft = FtResolvent(Xt, eigs_ft, jitter=jitter)
    res_pre = FtResolvent(Xt, eigs_pre, jitter=jitter)
    tf = res_ft.traces(lam)
    tp = res_pre.traces(lam)

    def build(zeta2_part, sigma_part) -> TaskRisk:
        raw = {k: 0.0 for k in TERM_KEYS}
        raw["term_zeta2"] = zeta2_part
        raw["term_sigma_tilde"] = sigma_part
        value, terms = _finish_terms(raw)
        return TaskRisk(value=value, terms=terms)

    ft = build(
        z2 * (res_ft.tr_cov - 2 * tau * tf["t1"] + tau**2 * tf["t3"]),
        s2t * tau**2 * tf["t2"],
    )
    pre = build(z2 * tau**2 * tp["t3"], s2t * tau**2 * tp["t2"])
    return RiskReport(method="lemma_approx", kind=kind,
                      pre=pre if want_pre else None,
                      ft=ft if want_ft else None)
