"""LMI synthesis of stabilizing near-optimal state-feedback gains.

Two designs for the case where the discounted-optimal gain fails to
stabilize A + BK:

* guaranteed cost: minimize mu subject to

    [[mu, x0'], [x0, X]] >= 0
    [[G+G'-X, (.)', (.)'], [sqrt(g)(AG+BY), X, (.)'], [CG+DY, 0, I]] >= 0
    [[G+G'-Z, (.)'], [AG+BY, Z]] > 0

  which yields K = Y G^-1 with A+BK Schur and the cost sandwich
  x0'P x0 <= J(x0, K) <= x0' X^-1 x0 <= mu.

* gain proximity: maximize trace(L) subject to

    [[S+S'-L, (.)'], [T - K_opt S, I]] >= 0
    [[S+S'-Z, (.)'], [AS+BT, Z]] > 0

  which yields K = T S^-1 with A+BK Schur and
  (K - K_opt)'(K - K_opt) <= L^-1.

Both require the stage-cost factorization C'C = Q, D'D = R with C'D = 0;
when a problem does not carry one, the stacked Cholesky construction
below provides it.  Solver output is never trusted as-is: every result is
re-verified against the Riccati/Stein machinery before it is returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linalg, riccati, sdp
from .linalg import DefinitenessError
from .riccati import ProblemInstance

MAX_EXTRACTION_COND = 1e10
SANDWICH_RTOL = 1e-6


class SynthesisInfeasibleError(RuntimeError):
    """The LMI program admits no feasible point (or the solver could not decide)."""

    def __init__(self, msg: str, status: str):
        super().__init__(msg)
        self.status = status


class ExtractionError(RuntimeError):
    """Gain extraction K = Y G^-1 is numerically unreliable."""


class CertificateError(RuntimeError):
    """Post-synthesis verification against the independent solvers failed."""


@dataclass(frozen=True)
class StageFactorization:
    """Stage-cost factors with C'C = Q, D'D = R and C'D = 0."""

    C: np.ndarray
    D: np.ndarray

    @property
    def p(self) -> int:
        return self.C.shape[0]


def orthogonal_factorization(Q, R) -> StageFactorization:
    """Stacked Cholesky factors: C = [chol(Q); 0], D = [0; chol(R)].

    The zero padding makes C'D = 0 hold by construction; output dimension
    is p = n + m.
    """
    q = linalg.as_sym_array(Q, what="Q")
    r = linalg.as_sym_array(R, what="R")
    n, m = q.shape[0], r.shape[0]
    try:
        cq = np.linalg.cholesky(q).T
        cr = np.linalg.cholesky(r).T
    except np.linalg.LinAlgError as exc:
        raise DefinitenessError(f"Q and R must be positive definite: {exc}") from exc
    c = np.vstack([cq, np.zeros((m, n))])
    d = np.vstack([np.zeros((n, m)), cr])
    return StageFactorization(C=c, D=d)


def stage_factorization(prob: ProblemInstance) -> StageFactorization:
    """The problem's own (C, D) when present, otherwise the stacked construction."""
    if prob.C is not None:
        return StageFactorization(C=prob.C, D=prob.D)
    return orthogonal_factorization(prob.Q, prob.R)


@dataclass
class CostSynthesisResult:
    gamma: float
    x0: np.ndarray
    K_hat: np.ndarray
    X: np.ndarray
    mu: float
    guaranteed_bound: float   # x0' X^-1 x0
    achieved_cost: float      # J(x0, K_hat)
    optimal_cost: float       # x0' P x0
    solver_iterations: int
    box_limited: bool

    def to_json_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "x0": self.x0.tolist(),
            "K_hat": self.K_hat.tolist(),
            "X": self.X.tolist(),
            "mu": self.mu,
            "guaranteed_bound": self.guaranteed_bound,
            "achieved_cost": self.achieved_cost,
            "optimal_cost": self.optimal_cost,
            "solver_iterations": self.solver_iterations,
            "box_limited": self.box_limited,
        }


@dataclass
class GainSynthesisResult:
    gamma: float
    K_bar: np.ndarray
    L_bar: np.ndarray
    mismatch_bound: float    # lambda_max(L^-1)
    mismatch_actual: float   # lambda_max((K-K_opt)'(K-K_opt))
    solver_iterations: int
    box_limited: bool

    def to_json_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "K_bar": self.K_bar.tolist(),
            "L_bar": self.L_bar.tolist(),
            "mismatch_bound": self.mismatch_bound,
            "mismatch_actual": self.mismatch_actual,
            "solver_iterations": self.solver_iterations,
            "box_limited": self.box_limited,
        }


def _solve_checked(prog: sdp.LmiProgram, what: str) -> sdp.LmiSolution:
    sol = sdp.solve_min(prog)
    if sol.status != sdp.STATUS_OPTIMAL:
        raise SynthesisInfeasibleError(
            f"{what} program not solved (status: {sol.status})", sol.status)
    return sol


def _extract_right_inverse(num: np.ndarray, den: np.ndarray, what: str) -> np.ndarray:
    """num @ den^-1 with a conditioning gate on den."""
    cond = float(np.linalg.cond(den))
    if not math.isfinite(cond) or cond > MAX_EXTRACTION_COND:
        raise ExtractionError(f"{what} has condition number {cond:.3e}")
    return linalg.solve_linear(den.T, num.T).T


def _slack(v: float) -> float:
    return SANDWICH_RTOL * (1.0 + abs(v))


def guaranteed_cost_program(prob: ProblemInstance, gamma: float, x0: np.ndarray,
                            fact: StageFactorization) -> tuple[sdp.LmiProgram, sdp.VarLayout]:
    n, m, p = prob.n, prob.m, fact.p
    a, b, c, d = prob.A, prob.B, fact.C, fact.D
    sq = math.sqrt(gamma)

    layout = sdp.VarLayout()
    layout.add_sym("X", n)
    layout.add_sym("Z", n)
    layout.add_full("G", n, n)
    layout.add_full("Y", m, n)
    layout.add_scalar("mu")

    def block_initial(v):
        out = np.zeros((1 + n, 1 + n))
        out[0, 0] = v["mu"]
        out[0, 1:] = x0
        out[1:, 0] = x0
        out[1:, 1:] = v["X"]
        return out

    def block_cost(v):
        g, y, x = v["G"], v["Y"], v["X"]
        t = sq * (a @ g + b @ y)
        lc = c @ g + d @ y
        out = np.zeros((2 * n + p, 2 * n + p))
        out[:n, :n] = g + g.T - x
        out[n:2 * n, :n] = t
        out[:n, n:2 * n] = t.T
        out[n:2 * n, n:2 * n] = x
        out[2 * n:, :n] = lc
        out[:n, 2 * n:] = lc.T
        out[2 * n:, 2 * n:] = np.eye(p)
        return out

    def block_stability(v):
        g, y, z = v["G"], v["Y"], v["Z"]
        t = a @ g + b @ y
        out = np.zeros((2 * n, 2 * n))
        out[:n, :n] = g + g.T - z
        out[n:, :n] = t
        out[:n, n:] = t.T
        out[n:, n:] = z
        return out

    blocks = (
        sdp.affine_block(layout, block_initial, margin=0.0),
        sdp.affine_block(layout, block_cost, margin=0.0),
        sdp.affine_block(layout, block_stability, margin=sdp.strict_margin(np.zeros((2 * n, 2 * n)))),
    )
    prog = sdp.LmiProgram(num_vars=layout.num_vars,
                          objective=sdp.linear_objective(layout, lambda v: v["mu"]),
                          blocks=blocks)
    return prog, layout


def synth_guaranteed_cost(prob: ProblemInstance, gamma: float, x0) -> CostSynthesisResult:
    """Minimize the certified cost bound mu and extract K = Y G^-1."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != prob.n:
        raise ValueError(f"x0 must have length {prob.n}")
    fact = stage_factorization(prob)
    prog, layout = guaranteed_cost_program(prob, gamma, x0, fact)
    sol = _solve_checked(prog, "guaranteed-cost")
    v = layout.values(sol.x)
    k_hat = _extract_right_inverse(v["Y"], v["G"], "G")
    x_mat = linalg.symmetrize(v["X"])
    mu = v["mu"]

    rho = linalg.spectral_radius(prob.closed_loop(k_hat))
    if rho >= 1.0 - 1e-9:
        raise CertificateError(f"extracted gain not Schur-stabilizing (rho={rho:.6f})")
    if not linalg.is_pd(x_mat, 0.0):
        raise CertificateError("certified X is not positive definite")
    x_inv = linalg.solve_linear(x_mat, np.eye(prob.n))
    bound = float(x0 @ x_inv @ x0)
    achieved = riccati.eval_cost(prob, gamma, k_hat, x0)
    achieved_trace = riccati.eval_cost_trace(prob, gamma, k_hat, x0)
    if abs(achieved - achieved_trace) > 1e-8 * (1.0 + abs(achieved)):
        raise CertificateError(
            f"cost routes disagree: {achieved!r} vs {achieved_trace!r}")
    optimal = float(x0 @ riccati.solve_dare(prob, gamma).P @ x0)
    if not (optimal <= achieved + _slack(achieved)
            and achieved <= bound + _slack(bound)
            and bound <= mu + _slack(mu)):
        raise CertificateError(
            f"cost sandwich violated: optimal={optimal!r} achieved={achieved!r} "
            f"bound={bound!r} mu={mu!r}")
    cl = prob.closed_loop(k_hat)
    bellman = gamma * cl.T @ x_inv @ cl - x_inv + prob.Q + k_hat.T @ prob.R @ k_hat
    if -linalg.min_eig_sym(-bellman) > 1e-6:
        raise CertificateError("certified value inequality violated")

    return CostSynthesisResult(
        gamma=float(gamma), x0=x0, K_hat=k_hat, X=x_mat, mu=float(mu),
        guaranteed_bound=bound, achieved_cost=achieved, optimal_cost=optimal,
        solver_iterations=sol.iterations,
        box_limited=bool(np.any(np.abs(sol.x) > 0.99 * sdp.BOX_BOUND)),
    )


def gain_proximity_program(prob: ProblemInstance, k_opt: np.ndarray
                           ) -> tuple[sdp.LmiProgram, sdp.VarLayout]:
    n, m = prob.n, prob.m
    a, b = prob.A, prob.B

    layout = sdp.VarLayout()
    layout.add_sym("L", n)
    layout.add_sym("Z", n)
    layout.add_full("S", n, n)
    layout.add_full("T", m, n)

    def block_proximity(v):
        s, t, l = v["S"], v["T"], v["L"]
        mis = t - k_opt @ s
        out = np.zeros((n + m, n + m))
        out[:n, :n] = s + s.T - l
        out[n:, :n] = mis
        out[:n, n:] = mis.T
        out[n:, n:] = np.eye(m)
        return out

    def block_stability(v):
        s, t, z = v["S"], v["T"], v["Z"]
        cl = a @ s + b @ t
        out = np.zeros((2 * n, 2 * n))
        out[:n, :n] = s + s.T - z
        out[n:, :n] = cl
        out[:n, n:] = cl.T
        out[n:, n:] = z
        return out

    blocks = (
        sdp.affine_block(layout, block_proximity, margin=0.0),
        sdp.affine_block(layout, block_stability, margin=sdp.strict_margin(np.zeros((2 * n, 2 * n)))),
    )
    # Maximize trace(L) to shrink the mismatch bound L^-1.
    prog = sdp.LmiProgram(num_vars=layout.num_vars,
                          objective=sdp.linear_objective(layout, lambda v: -np.trace(v["L"])),
                          blocks=blocks)
    return prog, layout


def synth_gain_proximity(prob: ProblemInstance, gamma: float) -> GainSynthesisResult:
    """Maximize trace(L) and extract the stabilizing K = T S^-1 near K_opt.

    The trace objective is unbounded whenever the optimal gain is itself
    stabilizing; the kernel's variable box then binds, which is reported
    through ``box_limited``.
    """
    k_opt = riccati.solve_dare(prob, gamma).K
    prog, layout = gain_proximity_program(prob, k_opt)
    sol = _solve_checked(prog, "gain-proximity")
    v = layout.values(sol.x)
    k_bar = _extract_right_inverse(v["T"], v["S"], "S")
    l_bar = linalg.symmetrize(v["L"])

    rho = linalg.spectral_radius(prob.closed_loop(k_bar))
    if rho >= 1.0 - 1e-9:
        raise CertificateError(f"extracted gain not Schur-stabilizing (rho={rho:.6f})")
    lmin = linalg.min_eig_sym(l_bar)
    if lmin <= 0.0:
        raise CertificateError("mismatch certificate L is not positive definite")
    bound = 1.0 / lmin
    delta = k_bar - k_opt
    mismatch = float(np.linalg.eigvalsh(linalg.symmetrize(delta.T @ delta))[-1])
    if mismatch > bound + SANDWICH_RTOL * (1.0 + bound):
        raise CertificateError(
            f"gain mismatch {mismatch:.6e} exceeds certified bound {bound:.6e}")
    l_inv = linalg.solve_linear(l_bar, np.eye(prob.n))
    if linalg.min_eig_sym(l_inv - delta.T @ delta) < -1e-6:
        raise CertificateError("mismatch matrix inequality violated")

    return GainSynthesisResult(
        gamma=float(gamma), K_bar=k_bar, L_bar=l_bar,
        mismatch_bound=bound, mismatch_actual=mismatch,
        solver_iterations=sol.iterations,
        box_limited=bool(np.any(np.abs(sol.x) > 0.99 * sdp.BOX_BOUND)),
    )
