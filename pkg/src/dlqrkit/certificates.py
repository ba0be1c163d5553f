"""Stability certificates for the discounted-optimal closed loop A + B K.

Four checks per discount factor, all phrased on the optimal value matrix P:

  cond9   Q + (gamma-1) P > 0                      (classic, conservative)
  cond11  gamma^2 P B R^-1 B'P + Q + (gamma-1) P > 0   (relaxed sufficient)
  cond16  K'RK + Q + (gamma-1) P > 0                   (literature variant)
  thm2    exists symmetric X with gamma P + X > 0 and
          K'RK + Q + (gamma-1) P + X - (A+BK)' X (A+BK) > 0
          (necessary and sufficient; decided by LMI feasibility)

plus the ground truth rho(A + BK) itself.  A sweep evaluates a grid of
gamma values and bisection-refines the flip points of each condition.
"""

from __future__ import annotations

import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import linalg, riccati, sdp
from .riccati import ProblemInstance, RiccatiSolution

THM2_FEASIBLE = "feasible"
THM2_INFEASIBLE = "infeasible"
THM2_INCONCLUSIVE = "inconclusive"
THM2_SKIPPED = "skipped"

SWEEP_CSV_HEADER = ("gamma,rho,cond9,cond9_margin,cond11,cond11_margin,"
                    "cond16,cond16_margin,thm2_status")


@dataclass
class CertificateReport:
    gamma: float
    rho_closed_loop: float
    cond9: bool
    cond9_margin: float
    cond11: bool
    cond11_margin: float
    cond16: bool
    cond16_margin: float
    thm2: str
    thm2_X: np.ndarray | None = None
    error: str | None = None


def _margin_threshold(sol: RiccatiSolution) -> float:
    return 1e-9 * (1.0 + float(np.linalg.norm(sol.P)))


def check_cond9(sol: RiccatiSolution, prob: ProblemInstance) -> tuple[bool, float]:
    m = prob.Q + (sol.gamma - 1.0) * sol.P
    margin = linalg.min_eig_sym(m)
    return margin > _margin_threshold(sol), margin


def check_cond11(sol: RiccatiSolution, prob: ProblemInstance) -> tuple[bool, float]:
    pb = sol.P @ prob.B
    m = (sol.gamma ** 2) * pb @ linalg.solve_linear(prob.R, pb.T) \
        + prob.Q + (sol.gamma - 1.0) * sol.P
    margin = linalg.min_eig_sym(m)
    return margin > _margin_threshold(sol), margin


def check_cond16(sol: RiccatiSolution, prob: ProblemInstance) -> tuple[bool, float]:
    m = sol.K.T @ prob.R @ sol.K + prob.Q + (sol.gamma - 1.0) * sol.P
    margin = linalg.min_eig_sym(m)
    return margin > _margin_threshold(sol), margin


def thm2_program(sol: RiccatiSolution, prob: ProblemInstance) -> tuple[sdp.LmiProgram, sdp.VarLayout]:
    """Feasibility program in the n(n+1)/2 entries of the symmetric X."""
    n = prob.n
    acl = prob.closed_loop(sol.K)
    base = sol.K.T @ prob.R @ sol.K + prob.Q + (sol.gamma - 1.0) * sol.P
    gp = sol.gamma * sol.P

    layout = sdp.VarLayout()
    layout.add_sym("X", n)
    b1 = sdp.affine_block(layout, lambda v: gp + v["X"],
                          margin=sdp.strict_margin(gp))
    b2 = sdp.affine_block(layout, lambda v: base + v["X"] - acl.T @ v["X"] @ acl,
                          margin=sdp.strict_margin(base))
    prog = sdp.LmiProgram(num_vars=layout.num_vars,
                          objective=np.zeros(layout.num_vars),
                          blocks=(b1, b2))
    return prog, layout


def check_thm2(sol: RiccatiSolution, prob: ProblemInstance) -> tuple[str, np.ndarray | None]:
    """Necessary-and-sufficient stability test; returns the witness X when feasible."""
    prog, layout = thm2_program(sol, prob)
    lmi = sdp.solve_feasibility(prog)
    if lmi.status == sdp.STATUS_OPTIMAL:
        return THM2_FEASIBLE, layout.values(lmi.x)["X"]
    if lmi.status == sdp.STATUS_INFEASIBLE:
        return THM2_INFEASIBLE, None
    return THM2_INCONCLUSIVE, None


def certificate_report(prob: ProblemInstance, gamma: float, *,
                       with_thm2: bool = True) -> CertificateReport:
    """Evaluate every condition at one discount factor."""
    sol = riccati.solve_dare(prob, gamma)
    rho = linalg.spectral_radius(prob.closed_loop(sol.K))
    ok9, m9 = check_cond9(sol, prob)
    ok11, m11 = check_cond11(sol, prob)
    ok16, m16 = check_cond16(sol, prob)
    if with_thm2:
        thm2, x_wit = check_thm2(sol, prob)
    else:
        thm2, x_wit = THM2_SKIPPED, None
    return CertificateReport(
        gamma=float(gamma), rho_closed_loop=rho,
        cond9=ok9, cond9_margin=m9,
        cond11=ok11, cond11_margin=m11,
        cond16=ok16, cond16_margin=m16,
        thm2=thm2, thm2_X=x_wit,
    )


def _report_row(args) -> CertificateReport:
    prob, gamma, with_thm2 = args
    try:
        return certificate_report(prob, gamma, with_thm2=with_thm2)
    except Exception as exc:  # per-row failure must not abort the sweep
        return CertificateReport(
            gamma=float(gamma), rho_closed_loop=float("nan"),
            cond9=False, cond9_margin=float("nan"),
            cond11=False, cond11_margin=float("nan"),
            cond16=False, cond16_margin=float("nan"),
            thm2=THM2_INCONCLUSIVE, error=f"{type(exc).__name__}: {exc}",
        )


def sweep(prob: ProblemInstance, gamma_grid, *, with_thm2: bool = True,
          workers: int = 1) -> list[CertificateReport]:
    """One report per grid point; rows are ordered by gamma regardless of workers."""
    grid = [float(g) for g in gamma_grid]
    if any(not 0.0 <= g <= 1.0 for g in grid):
        raise ValueError("grid values must lie in [0, 1]")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be strictly increasing")
    tasks = [(prob, g, with_thm2) for g in grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, len(tasks) // (8 * workers))
            return list(pool.map(_report_row, tasks, chunksize=chunk))
    return [_report_row(t) for t in tasks]


_CONDITIONS = ("stable", "cond9", "cond11", "cond16")


def _condition_flag(prob: ProblemInstance, gamma: float, condition: str) -> bool:
    sol = riccati.solve_dare(prob, gamma)
    if condition == "stable":
        return linalg.spectral_radius(prob.closed_loop(sol.K)) < 1.0
    check = {"cond9": check_cond9, "cond11": check_cond11, "cond16": check_cond16}
    return check[condition](sol, prob)[0]


@dataclass
class ConditionBoundary:
    condition: str
    gamma: float
    direction: str  # "false_to_true" or "true_to_false"


def find_boundaries(prob: ProblemInstance, reports: list[CertificateReport], *,
                    tol: float = 1e-4) -> list[ConditionBoundary]:
    """Bisection-refine the gamma values where each condition flips.

    Uses the already-computed sweep rows to locate flip intervals, then
    bisects each interval down to ``tol``.
    """
    flags = {
        "stable": [r.rho_closed_loop < 1.0 for r in reports],
        "cond9": [r.cond9 for r in reports],
        "cond11": [r.cond11 for r in reports],
        "cond16": [r.cond16 for r in reports],
    }
    gammas = [r.gamma for r in reports]
    out = []
    for cond in _CONDITIONS:
        vals = flags[cond]
        for i in range(len(gammas) - 1):
            if vals[i] == vals[i + 1]:
                continue
            lo, hi = gammas[i], gammas[i + 1]
            flo = vals[i]
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                if _condition_flag(prob, mid, cond) == flo:
                    lo = mid
                else:
                    hi = mid
            out.append(ConditionBoundary(
                condition=cond,
                gamma=0.5 * (lo + hi),
                direction="true_to_false" if flo else "false_to_true",
            ))
    return out


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _bool(b: bool) -> str:
    return "true" if b else "false"


def write_sweep_csv(reports: list[CertificateReport], path_or_file) -> None:
    """Deterministic CSV: 17 significant digits, LF endings, '.' decimals."""
    own = isinstance(path_or_file, (str, os.PathLike))
    fh = open(path_or_file, "w", encoding="utf-8", newline="\n") if own else path_or_file
    try:
        fh.write(SWEEP_CSV_HEADER + "\n")
        for r in reports:
            fh.write(",".join([
                _fmt(r.gamma), _fmt(r.rho_closed_loop),
                _bool(r.cond9), _fmt(r.cond9_margin),
                _bool(r.cond11), _fmt(r.cond11_margin),
                _bool(r.cond16), _fmt(r.cond16_margin),
                r.thm2,
            ]) + "\n")
    finally:
        if own:
            fh.close()


def sweep_csv_text(reports: list[CertificateReport]) -> str:
    buf = io.StringIO()
    write_sweep_csv(reports, buf)
    return buf.getvalue()
