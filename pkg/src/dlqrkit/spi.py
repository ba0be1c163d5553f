"""Stability-preserving policy iteration for discounted LQR.

Starting from a Schur-stabilizing gain K0, each iteration blends the plain
policy-improvement target

    K_pi = -gamma (R + gamma B'P B)^{-1} B'P A

with the previous gain, K_j = alpha_j K_pi + (1 - alpha_j) K_{j-1},
choosing alpha_j so that A + B K_j stays Schur.  Evaluation is the Stein
equation on sqrt(gamma)(A + B K_j).  Every iterate remains stabilizing and
the value matrices decrease monotonically; with alpha_j = 1 throughout the
scheme reduces to classical policy iteration on (sqrt(g) A, sqrt(g) B).

The maximal feasible alpha is located on the grid {step, 2 step, ..., 1}
by bisection under the assumption that feasibility is a prefix of the
grid; every candidate is verified by an exact spectral-radius check, and a
downward linear scan takes over whenever the prefix assumption fails, so
correctness never rests on it.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import linalg, riccati
from .riccati import ProblemInstance

STOP_ALPHA = "alpha_below_epsilon"
STOP_MAX_ITER = "max_iterations"
STOP_OPTIMAL = "converged_to_optimal"

TRACE_CSV_HEADER = "j,alpha,rho,gap_frobenius"


class SpiInputError(ValueError):
    """The initial gain violates the algorithm's input contract."""


class SpiInternalError(RuntimeError):
    """An invariant the algorithm guarantees was violated numerically."""


@dataclass(frozen=True)
class SpiConfig:
    gamma: float
    K0: np.ndarray
    alpha_grid_step: float = 1e-5
    alpha_scale: float = 1.0
    epsilon_stop: float = 1e-5
    max_iterations: int = 500

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 < self.alpha_grid_step <= 1.0:
            raise ValueError("alpha_grid_step must be in (0, 1]")
        if not 0.0 < self.alpha_scale <= 1.0:
            raise ValueError("alpha_scale must be in (0, 1]")
        if self.epsilon_stop <= 0.0:
            raise ValueError("epsilon_stop must be positive")
        object.__setattr__(self, "K0", np.atleast_2d(np.asarray(self.K0, dtype=float)))


@dataclass
class SpiIterate:
    j: int
    alpha: float
    K: np.ndarray
    P: np.ndarray
    rho_closed_loop: float
    cost_matrix_gap: float  # ||P_j - P_opt||_F


@dataclass
class SpiTrace:
    gamma: float
    iterates: list = field(default_factory=list)
    stop_reason: str = STOP_MAX_ITER
    P_opt: np.ndarray | None = None


def pi_target(prob: ProblemInstance, gamma: float, P) -> np.ndarray:
    """Plain policy-improvement gain -gamma (R + gamma B'PB)^-1 B'PA."""
    p = linalg.as_sym_array(P)
    bpb = prob.B.T @ p @ prob.B
    return -gamma * linalg.solve_linear(prob.R + gamma * bpb, prob.B.T @ p @ prob.A)


def _largest_feasible_index(prob: ProblemInstance, k_prev, k_pi, step: float, n_grid: int) -> int:
    """Largest i in 1..n_grid with A + B((i*step) K_pi + (1-i*step) K_prev) Schur.

    Bisection assuming the feasible indices form a prefix {1..i*}; every
    probe is an exact stability check.  If even the smallest candidate
    fails (the prefix assumption is broken at its root), fall back to a
    linear downward scan from alpha = 1.
    """
    def feasible(i: int) -> bool:
        alpha = i * step
        k = alpha * k_pi + (1.0 - alpha) * k_prev
        return linalg.spectral_radius(prob.closed_loop(k)) < 1.0

    if feasible(n_grid):
        return n_grid
    if feasible(1):
        lo, hi = 1, n_grid  # feasible(lo), not feasible(hi)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if feasible(mid):
                lo = mid
            else:
                hi = mid
        return lo
    for i in range(n_grid - 1, 0, -1):
        if feasible(i):
            return i
    raise SpiInternalError(
        "no feasible blend weight on the grid; recursive feasibility violated")


def spi_run(prob: ProblemInstance, config: SpiConfig) -> SpiTrace:
    """Run the blended policy iteration until a stop criterion fires.

    Stops when the scaled step alpha_j falls below epsilon_stop, when the
    iteration cap is reached, or when K_j is a fixed point of its own
    improvement step (converged to the optimal gain, which then must be
    stabilizing itself).
    """
    gamma = config.gamma
    k = config.K0
    if k.shape != (prob.m, prob.n):
        raise SpiInputError(f"K0 must be {prob.m}x{prob.n}, got {k.shape}")
    rho0 = linalg.spectral_radius(prob.closed_loop(k))
    if rho0 >= 1.0:
        raise SpiInputError(f"K0 is not Schur-stabilizing (rho={rho0:.6f})")

    p_opt = riccati.solve_dare(prob, gamma).P
    sq = math.sqrt(gamma)

    def evaluate(gain):
        return riccati.solve_stein(sq * prob.closed_loop(gain),
                                   prob.Q + gain.T @ prob.R @ gain)

    p = evaluate(k)
    trace = SpiTrace(gamma=gamma, P_opt=p_opt)
    trace.iterates.append(SpiIterate(
        j=0, alpha=math.nan, K=k, P=p, rho_closed_loop=rho0,
        cost_matrix_gap=float(np.linalg.norm(p - p_opt))))

    step = config.alpha_grid_step
    n_grid = max(1, round(1.0 / step))

    for j in range(1, config.max_iterations + 1):
        k_pi = pi_target(prob, gamma, p)
        i_max = _largest_feasible_index(prob, k, k_pi, step, n_grid)
        i_j = int(math.floor(config.alpha_scale * i_max + 1e-12))
        # The scaled candidate is re-verified; stability need not be an
        # interval in alpha, so scan down when the prefix assumption fails.
        while i_j >= 1:
            alpha = i_j * step
            k_next = alpha * k_pi + (1.0 - alpha) * k
            if linalg.spectral_radius(prob.closed_loop(k_next)) < 1.0:
                break
            i_j -= 1
        alpha = i_j * step
        if alpha < config.epsilon_stop:
            trace.stop_reason = STOP_ALPHA
            break

        k = alpha * k_pi + (1.0 - alpha) * k
        p_next = evaluate(k)
        if linalg.min_eig_sym(p - p_next) < -1e-8:
            raise SpiInternalError(f"cost matrix increased at iteration {j}")
        p = p_next
        trace.iterates.append(SpiIterate(
            j=j, alpha=alpha, K=k, P=p,
            rho_closed_loop=linalg.spectral_radius(prob.closed_loop(k)),
            cost_matrix_gap=float(np.linalg.norm(p - p_opt))))

        k_fixed = pi_target(prob, gamma, p)
        if (float(np.linalg.norm(k - k_fixed)) < 1e-12
                and linalg.spectral_radius(prob.closed_loop(k_fixed)) < 1.0):
            trace.stop_reason = STOP_OPTIMAL
            break
    else:
        trace.stop_reason = STOP_MAX_ITER
    return trace


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_trace_csv(trace: SpiTrace, path_or_file) -> None:
    """Per-iteration scalars; gain/value matrices go to the JSON sidecar."""
    own = isinstance(path_or_file, (str, os.PathLike))
    fh = open(path_or_file, "w", encoding="utf-8", newline="\n") if own else path_or_file
    try:
        fh.write(TRACE_CSV_HEADER + "\n")
        for it in trace.iterates:
            fh.write(",".join([
                str(it.j), _fmt(it.alpha), _fmt(it.rho_closed_loop),
                _fmt(it.cost_matrix_gap),
            ]) + "\n")
    finally:
        if own:
            fh.close()


def trace_to_json_dict(trace: SpiTrace) -> dict:
    return {
        "gamma": trace.gamma,
        "stop_reason": trace.stop_reason,
        "P_opt": trace.P_opt.tolist() if trace.P_opt is not None else None,
        "iterates": [
            {
                "j": it.j,
                "alpha": it.alpha,
                "rho": it.rho_closed_loop,
                "gap_frobenius": it.cost_matrix_gap,
                "K": it.K.tolist(),
                "P": it.P.tolist(),
            }
            for it in trace.iterates
        ],
    }


def write_trace_json(trace: SpiTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(trace_to_json_dict(trace), fh, indent=2, sort_keys=True)
