"""Discounted discrete-time Riccati equation, Stein equation, exact costs.

For the system x+ = A x + B u with stage cost x'Qx + u'Ru discounted by
gamma in [0, 1], the optimal value matrix P solves

    P = gamma A'PA - gamma^2 A'PB (R + gamma B'PB)^{-1} B'PA + Q

and the optimal gain is K = -gamma (R + gamma B'PB)^{-1} B'PA.  Policy
evaluation for a fixed gain reduces to the Stein (discrete Lyapunov)
equation M'PM - P + W = 0 with M = sqrt(gamma) (A + BK).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .linalg import ConvergenceError, as_array, as_sym_array, symmetrize

DARE_MAX_ITERATIONS = 10 ** 6
DARE_STOP_RTOL = 1e-13


class ConsistencyError(RuntimeError):
    """A solution failed its own post-solve invariant checks."""


class SpectralRadiusError(ValueError):
    """Spectral-radius precondition (rho < 1) violated."""


def _check_sym_pd(name: str, a: np.ndarray, assumption: str) -> np.ndarray:
    s = as_sym_array(a, what=name)
    if float(np.abs(s - np.asarray(a, float)).max()) > 1e-9 * (1.0 + float(np.abs(s).max())):
        raise ValueError(f"{assumption}: {name} must be symmetric")
    if not linalg.is_pd(s, 0.0):
        raise ValueError(f"{assumption}: {name} must be positive definite")
    return s


def _pbh_stabilizable(a: np.ndarray, b: np.ndarray) -> bool:
    """PBH test: rank [A - lambda I, B] = n for every |lambda| >= 1."""
    n = a.shape[0]
    tol = 1e-10 * float(np.linalg.norm(np.hstack([a, b])))
    for lam in np.linalg.eigvals(a):
        if abs(lam) < 1.0 - 1e-9:
            continue
        pencil = np.hstack([a - lam * np.eye(n), b.astype(complex)])
        if np.linalg.matrix_rank(pencil, tol=tol) < n:
            return False
    return True


@dataclass(frozen=True)
class ProblemInstance:
    """Immutable problem data (A, B, Q, R) with optional (C, D) factors.

    Construction enforces the standing assumptions: Q > 0 and R > 0 (SA2),
    (A, B) stabilizable (SA1), and, when given, C'C = Q, D'D = R, C'D = 0.
    """

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    C: np.ndarray | None = None
    D: np.ndarray | None = None

    def __post_init__(self):
        a = as_array(self.A, square=True, what="A")
        b = as_array(self.B, what="B")
        n = a.shape[0]
        if b.shape[0] != n:
            raise ValueError(f"B must have {n} rows, got {b.shape}")
        m = b.shape[1]
        q = _check_sym_pd("Q", self.Q, "SA2")
        r = _check_sym_pd("R", self.R, "SA2")
        if q.shape[0] != n:
            raise ValueError(f"Q must be {n}x{n}, got {q.shape}")
        if r.shape[0] != m:
            raise ValueError(f"R must be {m}x{m}, got {r.shape}")
        if not _pbh_stabilizable(a, b):
            raise ValueError("SA1: (A, B) is not stabilizable (PBH rank test)")
        c = d = None
        if (self.C is None) != (self.D is None):
            raise ValueError("C and D must be given together")
        if self.C is not None:
            c = as_array(self.C, what="C")
            d = as_array(self.D, what="D")
            if c.shape[1] != n or d.shape[1] != m or c.shape[0] != d.shape[0]:
                raise ValueError(
                    f"C, D shapes {c.shape}, {d.shape} inconsistent with n={n}, m={m}")
            if float(np.abs(c.T @ c - q).max()) > 1e-10:
                raise ValueError("SA2: C'C != Q")
            if float(np.abs(d.T @ d - r).max()) > 1e-10:
                raise ValueError("SA2: D'D != R")
            if float(np.abs(c.T @ d).max()) > 1e-10:
                raise ValueError("C'D != 0")
        for name, val in (("A", a), ("B", b), ("Q", q), ("R", r), ("C", c), ("D", d)):
            if val is not None:
                val.flags.writeable = False
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def closed_loop(self, K) -> np.ndarray:
        return self.A + self.B @ np.asarray(K, dtype=float)


@dataclass(frozen=True)
class RiccatiSolution:
    """Fixed point of the discounted Riccati recursion plus its gain."""

    gamma: float
    P: np.ndarray
    K: np.ndarray
    dare_residual: float
    iterations: int


@dataclass(frozen=True)
class CostEvaluation:
    """Value matrix of a fixed gain; in_K_gamma says sqrt(gamma)(A+BK) is Schur."""

    gamma: float
    K: np.ndarray
    P_K: np.ndarray | None
    in_K_gamma: bool


def _dare_rhs(a, b, q, r, gamma, p):
    bpa = b.T @ p @ a
    g = r + gamma * (b.T @ p @ b)
    return symmetrize(gamma * (a.T @ p @ a) - gamma ** 2 * bpa.T @ linalg.solve_linear(g, bpa) + q)


def solve_dare(prob: ProblemInstance, gamma: float) -> RiccatiSolution:
    """Solve the discounted Riccati equation by value iteration from P0 = Q.

    Stops when ||P_{k+1} - P_k|| <= 1e-13 (1 + ||P_k||); the returned
    solution is checked against its residual, the closed-loop identities,
    and P >= Q before being handed back.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    a, b, q, r = prob.A, prob.B, prob.Q, prob.R
    p = q.copy()
    for it in range(1, DARE_MAX_ITERATIONS + 1):
        p_next = _dare_rhs(a, b, q, r, gamma, p)
        if float(np.linalg.norm(p_next - p)) <= DARE_STOP_RTOL * (1.0 + float(np.linalg.norm(p))):
            p = p_next
            break
        p = p_next
    else:
        raise ConvergenceError(
            f"Riccati value iteration exceeded {DARE_MAX_ITERATIONS} iterations")

    bpa = b.T @ p @ a
    k = -gamma * linalg.solve_linear(r + gamma * (b.T @ p @ b), bpa)
    residual = float(np.linalg.norm(_dare_rhs(a, b, q, r, gamma, p) - p))
    p_norm = float(np.linalg.norm(p))

    if residual > 1e-9 * (1.0 + p_norm):
        raise ConsistencyError(f"Riccati residual {residual:.3e} too large")
    if linalg.min_eig_sym(p - q) < -1e-8:
        raise ConsistencyError("P >= Q violated")
    cl = a + b @ k
    id_forward = float(np.linalg.norm(gamma * (a.T @ p @ cl) - (p - q)))
    if id_forward > 1e-8 * (1.0 + p_norm):
        raise ConsistencyError(
            f"closed-loop identity gamma A'P(A+BK) = P - Q off by {id_forward:.3e}")
    id_inverse = float(np.linalg.norm(
        cl - (a - gamma * b @ linalg.solve_linear(r, b.T @ p @ cl))))
    if id_inverse > 1e-8:
        raise ConsistencyError(
            f"gain identity A+BK = A - gamma B R^-1 B'P(A+BK) off by {id_inverse:.3e}")

    p.flags.writeable = False
    k.flags.writeable = False
    return RiccatiSolution(gamma=float(gamma), P=p, K=k,
                           dare_residual=residual, iterations=it)


def solve_stein(m, w) -> np.ndarray:
    """Solve M'PM - P + W = 0 by Kronecker vectorization.

    Requires rho(M) < 1; the dense (I - M' (x) M') system is exact to
    solver precision at this problem scale.
    """
    a = as_array(m, square=True)
    wmat = as_sym_array(w)
    n = a.shape[0]
    if wmat.shape[0] != n:
        raise ValueError(f"W must be {n}x{n}, got {wmat.shape}")
    rho = linalg.spectral_radius(a)
    if rho >= 1.0:
        raise SpectralRadiusError(f"rho(M) = {rho:.6f} >= 1; Stein equation unsolvable")
    kron = np.kron(a.T, a.T)
    vec_p = linalg.solve_linear(np.eye(n * n) - kron, wmat.reshape(-1, order="F"))
    p = symmetrize(vec_p.reshape(n, n, order="F"))
    residual = float(np.linalg.norm(a.T @ p @ a - p + wmat))
    if residual > 1e-10 * (1.0 + float(np.linalg.norm(p))):
        raise ConsistencyError(f"Stein residual {residual:.3e} too large")
    return p


def policy_value(prob: ProblemInstance, gamma: float, K) -> CostEvaluation:
    """Value matrix P_K of the stationary policy u = Kx, if it exists."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    k = np.atleast_2d(np.asarray(K, dtype=float))
    m = math.sqrt(gamma) * prob.closed_loop(k)
    if linalg.spectral_radius(m) >= 1.0:
        return CostEvaluation(gamma=float(gamma), K=k, P_K=None, in_K_gamma=False)
    p_k = solve_stein(m, prob.Q + k.T @ prob.R @ k)
    return CostEvaluation(gamma=float(gamma), K=k, P_K=p_k, in_K_gamma=True)


def eval_cost(prob: ProblemInstance, gamma: float, K, x0) -> float:
    """Discounted cost of u = Kx from x0; +inf when the gain is outside K_gamma."""
    ce = policy_value(prob, gamma, K)
    if not ce.in_K_gamma:
        return math.inf
    x = np.asarray(x0, dtype=float).reshape(-1)
    return float(x @ ce.P_K @ x)


def eval_cost_trace(prob: ProblemInstance, gamma: float, K, x0) -> float:
    """Same cost via the Gramian route: trace(S (Q + K'RK)).

    S solves M S M' - S + x0 x0' = 0 with M = sqrt(gamma)(A + BK); this is
    an independent oracle for :func:`eval_cost`.
    """
    k = np.atleast_2d(np.asarray(K, dtype=float))
    m = math.sqrt(gamma) * prob.closed_loop(k)
    if linalg.spectral_radius(m) >= 1.0:
        raise SpectralRadiusError("sqrt(gamma)(A+BK) is not Schur")
    x = np.asarray(x0, dtype=float).reshape(-1)
    s = solve_stein(m.T, np.outer(x, x))
    return float(np.trace(s @ (prob.Q + k.T @ prob.R @ k)))


def eval_cost_sim(prob: ProblemInstance, gamma: float, K, x0, horizon: int) -> float:
    """Truncated rollout cost sum_{k<horizon} gamma^k (x'Qx + u'Ru)."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    k = np.atleast_2d(np.asarray(K, dtype=float))
    x = np.asarray(x0, dtype=float).reshape(-1)
    total = 0.0
    disc = 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(horizon):
            u = k @ x
            total += disc * (float(x @ prob.Q @ x) + float(u @ prob.R @ u))
            x = prob.A @ x + prob.B @ u
            disc *= gamma
            if not math.isfinite(total):
                return math.inf
    return total


def relative_error(prob: ProblemInstance, gamma: float, K, x0) -> float:
    """(J(x0, K) - J(x0, K_opt)) / J(x0, K_opt); undefined at x0 = 0."""
    x = np.asarray(x0, dtype=float).reshape(-1)
    if float(np.linalg.norm(x)) == 0.0:
        raise ValueError("relative error is ill-defined at x0 = 0")
    opt = solve_dare(prob, gamma)
    j_opt = eval_cost(prob, gamma, opt.K, x)
    j_k = eval_cost(prob, gamma, K, x)
    return (j_k - j_opt) / j_opt
