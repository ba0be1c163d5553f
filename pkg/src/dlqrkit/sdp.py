"""Small dense SDP solver for affine matrix-inequality programs.

Programs are stated over a vector x of scalar decision variables:

    minimize  c'x
    s.t.      F0_b + sum_i x_i Fi_b  >=  margin_b * I   for every block b,
              |x_i| <= 1e6                              (kernel-imposed box).

The solver is a plain primal log-det barrier method: phase 1 maximizes the
smallest shifted block eigenvalue (max t s.t. F_b(x) - t I >= 0, t <= 1e6)
to find a strictly interior point and decide feasibility; phase 2 follows
the central path with damped Newton steps, dividing the barrier parameter
by 10 per outer iteration until barrier_parameter * cone_dim < 1e-9.
Everything is dense and sized for programs with a few dozen variables and
block dimensions below ~20.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .linalg import as_sym_array, symmetrize

BOX_BOUND = 1e6
GAP_TARGET = 1e-9
MU_SHRINK = 10.0
MAX_OUTER = 60
MAX_NEWTON = 80
NEWTON_TOL = 1e-10

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_MAX_ITERATIONS = "max_iterations"
STATUS_UNBOUNDED = "unbounded"


def symmetric_var_basis(dim: int) -> list[np.ndarray]:
    """Canonical basis of symmetric dim x dim matrices: E_ii and E_ij + E_ji.

    Order is row-major over the upper triangle; length dim*(dim+1)/2.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    basis = []
    for i in range(dim):
        for j in range(i, dim):
            e = np.zeros((dim, dim))
            e[i, j] = 1.0
            e[j, i] = 1.0
            basis.append(e)
    return basis


def full_var_basis(rows: int, cols: int) -> list[np.ndarray]:
    """Elementary basis of rows x cols matrices, row-major order."""
    basis = []
    for i in range(rows):
        for j in range(cols):
            e = np.zeros((rows, cols))
            e[i, j] = 1.0
            basis.append(e)
    return basis


def strict_margin(f0) -> float:
    """Margin that renders a strict inequality decidable: 1e-8 * (1 + ||F0||)."""
    return 1e-8 * (1.0 + float(np.linalg.norm(np.asarray(f0, dtype=float))))


@dataclass(frozen=True)
class AffineBlock:
    """One constraint block F0 + sum_i x_i Fi >= strictness_margin * I."""

    dim: int
    F0: np.ndarray
    Fi: tuple
    strictness_margin: float = 0.0

    def __post_init__(self):
        f0 = as_sym_array(self.F0, what="F0")
        if f0.shape[0] != self.dim:
            raise ValueError(f"F0 must be {self.dim}x{self.dim}")
        coeffs = tuple(as_sym_array(f, what="Fi") for f in self.Fi)
        for f in coeffs:
            if f.shape[0] != self.dim:
                raise ValueError("coefficient dimension mismatch")
        if self.strictness_margin < 0:
            raise ValueError("strictness_margin must be >= 0")
        object.__setattr__(self, "F0", f0)
        object.__setattr__(self, "Fi", coeffs)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        s = self.F0.copy()
        for xi, f in zip(x, self.Fi):
            s += xi * f
        return s


@dataclass(frozen=True)
class LmiProgram:
    """Affine matrix-inequality program over scalar decision variables."""

    num_vars: int
    objective: np.ndarray
    blocks: tuple

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).reshape(-1)
        if c.size != self.num_vars:
            raise ValueError("objective length must equal num_vars")
        blocks = tuple(self.blocks)
        for b in blocks:
            if len(b.Fi) != self.num_vars:
                raise ValueError("every block needs one coefficient per variable")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "blocks", blocks)

    def to_json_dict(self) -> dict:
        return {
            "num_vars": self.num_vars,
            "objective": self.objective.tolist(),
            "blocks": [
                {
                    "dim": b.dim,
                    "strictness_margin": b.strictness_margin,
                    "F0": b.F0.tolist(),
                    "Fi": [f.tolist() for f in b.Fi],
                }
                for b in self.blocks
            ],
        }

    def dump(self, path) -> None:
        """Debug dump for external cross-checking."""
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)


@dataclass
class LmiSolution:
    status: str
    x: np.ndarray
    objective_value: float
    min_block_eig: float
    iterations: int = 0
    outer_objectives: list = field(default_factory=list)


class _Cone:
    """Barrier bookkeeping for margin-shifted blocks plus scalar bounds."""

    def __init__(self, blocks, lo, hi):
        # blocks: list of (F0_shifted, Fi_stack) with Fi_stack (d, k, k)
        self.blocks = blocks
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.lo_mask = np.isfinite(self.lo)
        self.hi_mask = np.isfinite(self.hi)
        self.dim = sum(f0.shape[0] for f0, _ in blocks) + int(
            self.lo_mask.sum() + self.hi_mask.sum())

    def _chols(self, x):
        chols = []
        for f0, fi in self.blocks:
            s = f0 + np.tensordot(x, fi, axes=(0, 0))
            try:
                chols.append(np.linalg.cholesky(s))
            except np.linalg.LinAlgError:
                return None
        return chols

    def barrier_value(self, x) -> float | None:
        """-sum logdet - sum log(slacks), or None outside the cone."""
        s_hi = self.hi[self.hi_mask] - x[self.hi_mask]
        s_lo = x[self.lo_mask] - self.lo[self.lo_mask]
        if (s_hi <= 0).any() or (s_lo <= 0).any():
            return None
        chols = self._chols(x)
        if chols is None:
            return None
        val = -float(np.log(s_hi).sum() + np.log(s_lo).sum())
        for ch in chols:
            val -= 2.0 * float(np.log(np.diag(ch)).sum())
        return val

    def barrier_grad_hess(self, x):
        """Gradient and Hessian of the barrier at a strictly interior x."""
        d = x.size
        g = np.zeros(d)
        h = np.zeros((d, d))
        for f0, fi in self.blocks:
            s = f0 + np.tensordot(x, fi, axes=(0, 0))
            ch = np.linalg.cholesky(s)
            inv_l = np.linalg.solve(ch, np.eye(ch.shape[0]))
            w = np.einsum("ij,ajk,lk->ail", inv_l, fi, inv_l)
            g -= np.einsum("aii->a", w)
            h += np.einsum("aij,bij->ab", w, w)
        s_hi = self.hi[self.hi_mask] - x[self.hi_mask]
        s_lo = x[self.lo_mask] - self.lo[self.lo_mask]
        g[self.hi_mask] += 1.0 / s_hi
        g[self.lo_mask] -= 1.0 / s_lo
        h[self.hi_mask, self.hi_mask] += 1.0 / s_hi ** 2
        h[self.lo_mask, self.lo_mask] += 1.0 / s_lo ** 2
        return g, h


def _newton_center(cone: _Cone, c, mu, x):
    """Damped Newton minimization of c'x/mu + barrier(x).

    Returns (x, converged, stalled, steps).  ``stalled`` means the line
    search could not make progress (typically box slacks at rounding
    level); the returned x is the best interior point found.
    """
    c_mu = c / mu
    fval = float(c_mu @ x) + cone.barrier_value(x)
    for step in range(1, MAX_NEWTON + 1):
        bg, bh = cone.barrier_grad_hess(x)
        g = c_mu + bg
        s = None
        ridge = 0.0
        for _ in range(6):
            try:
                s = np.linalg.solve(bh + ridge * np.eye(x.size), -g)
            except np.linalg.LinAlgError:
                s = None
            if s is not None and np.isfinite(s).all():
                break
            ridge = max(ridge * 100.0, 1e-12 * (1.0 + float(np.trace(bh)) / x.size))
        if s is None or not np.isfinite(s).all():
            return x, False, True, step
        decrement = float(-g @ s)
        if decrement < 0:
            # Rounding near the central point; nothing left to gain.
            return x, True, False, step
        if decrement / 2.0 <= NEWTON_TOL:
            return x, True, False, step
        t = 1.0
        slope = float(g @ s)
        accepted = False
        while t >= 1e-14:
            xn = x + t * s
            bn = cone.barrier_value(xn)
            if bn is not None:
                fn = float(c_mu @ xn) + bn
                if fn <= fval + 0.25 * t * slope:
                    x, fval = xn, fn
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            return x, False, True, step
    return x, False, False, MAX_NEWTON


def _follow_path(cone: _Cone, c, x, mu0, *, on_center=None):
    """Outer barrier loop.  ``on_center(x, mu)`` may return an early verdict."""
    mu = mu0
    newton_total = 0
    outer_objectives = []
    signal = None
    for _ in range(MAX_OUTER):
        x, _, stalled, steps = _newton_center(cone, c, mu, x)
        newton_total += steps
        outer_objectives.append(float(c @ x))
        if on_center is not None:
            signal = on_center(x, mu)
            if signal is not None:
                break
        if mu * cone.dim < GAP_TARGET or stalled:
            break
        mu /= MU_SHRINK
    return x, mu, signal, newton_total, outer_objectives


def _compile_blocks(prog: LmiProgram, extra_var: bool):
    """Margin-shifted (F0', Fi_stack) pairs; extra_var appends a -I coefficient."""
    compiled = []
    for b in prog.blocks:
        f0 = b.F0 - b.strictness_margin * np.eye(b.dim)
        coeffs = list(b.Fi)
        if extra_var:
            coeffs.append(-np.eye(b.dim))
        if coeffs:
            stack = np.stack(coeffs)
        else:
            stack = np.zeros((0, b.dim, b.dim))
        compiled.append((f0, stack))
    return compiled


def _min_block_eig(prog: LmiProgram, x: np.ndarray) -> float:
    """Worst min-eigenvalue across the original (un-shifted) blocks at x."""
    worst = np.inf
    for b in prog.blocks:
        worst = min(worst, float(np.linalg.eigvalsh(symmetrize(b.evaluate(x)))[0]))
    return worst


@dataclass
class _Phase1Result:
    verdict: str  # "feasible" | "infeasible" | "inconclusive"
    x: np.ndarray
    t_hat: float
    iterations: int
    outer_objectives: list


def _phase1(prog: LmiProgram, *, decide_only: bool) -> _Phase1Result:
    """max t s.t. F_b(x) - margin_b I - t I >= 0, |x| <= box, t <= box.

    With ``decide_only`` the path stops as soon as the sign of the optimal
    t is certain (t > 0 at an interior point, or the duality gap bound
    pushes t* below 0); otherwise it runs to the full gap target so the
    returned t approximates the true optimum.
    """
    d = prog.num_vars
    blocks = _compile_blocks(prog, extra_var=True)
    lo = np.concatenate([np.full(d, -BOX_BOUND), [-np.inf]])
    hi = np.full(d + 1, BOX_BOUND)
    cone = _Cone(blocks, lo, hi)

    t0 = min((float(np.linalg.eigvalsh(f0)[0]) for f0, _ in blocks), default=0.0) - 1.0
    t0 = min(t0, BOX_BOUND - 1.0)
    x = np.concatenate([np.zeros(d), [t0]])
    c = np.zeros(d + 1)
    c[d] = -1.0

    def on_center(xc, mu):
        t = xc[-1]
        if decide_only and t > 1e-11:
            return "feasible"
        if t + 2.0 * mu * cone.dim < 0:
            return "infeasible"
        return None

    x, mu, signal, iters, outer = _follow_path(
        cone, c, x, mu0=max(1.0, abs(t0)), on_center=on_center)
    t_hat = float(x[-1])
    if signal is None:
        gap = max(2.0 * mu * cone.dim, 1e-9)
        if t_hat > gap:
            signal = "feasible"
        elif t_hat < -gap:
            signal = "infeasible"
        else:
            signal = "inconclusive"
    return _Phase1Result(verdict=signal, x=x[:d], t_hat=t_hat,
                         iterations=iters, outer_objectives=outer)


def solve_feasibility(prog: LmiProgram) -> LmiSolution:
    """Decide whether the program admits a point satisfying every block.

    status "optimal" carries a strictly feasible witness x; "infeasible"
    is certified through the phase-1 duality gap; "max_iterations" means
    the auxiliary optimum sits inside the decision tolerance and must be
    treated as inconclusive by the caller.
    """
    # Constant programs keep the full path so t_hat matches the true
    # optimum (the min eigenvalue); decision programs exit early.
    res = _phase1(prog, decide_only=prog.num_vars > 0)
    status = {
        "feasible": STATUS_OPTIMAL,
        "infeasible": STATUS_INFEASIBLE,
        "inconclusive": STATUS_MAX_ITERATIONS,
    }[res.verdict]
    return LmiSolution(
        status=status,
        x=res.x,
        objective_value=res.t_hat,
        min_block_eig=_min_block_eig(prog, res.x),
        iterations=res.iterations,
        outer_objectives=res.outer_objectives,
    )


def solve_min(prog: LmiProgram) -> LmiSolution:
    """Minimize the program objective over the block constraints."""
    if prog.num_vars < 1:
        raise ValueError("solve_min needs at least one decision variable")
    p1 = _phase1(prog, decide_only=True)
    if p1.verdict != "feasible":
        status = STATUS_INFEASIBLE if p1.verdict == "infeasible" else STATUS_MAX_ITERATIONS
        return LmiSolution(status=status, x=p1.x, objective_value=np.nan,
                           min_block_eig=_min_block_eig(prog, p1.x),
                           iterations=p1.iterations)

    d = prog.num_vars
    blocks = _compile_blocks(prog, extra_var=False)
    cone = _Cone(blocks, np.full(d, -BOX_BOUND), np.full(d, BOX_BOUND))
    c = prog.objective

    def on_center(xc, _mu):
        return STATUS_UNBOUNDED if float(c @ xc) < -1e9 else None

    x, _, signal, iters, outer = _follow_path(
        cone, c, p1.x, mu0=max(1.0, abs(float(c @ p1.x))), on_center=on_center)
    status = STATUS_UNBOUNDED if signal == STATUS_UNBOUNDED else STATUS_OPTIMAL
    return LmiSolution(
        status=status,
        x=x,
        objective_value=float(c @ x),
        min_block_eig=_min_block_eig(prog, x),
        iterations=p1.iterations + iters,
        outer_objectives=outer,
    )


class VarLayout:
    """Maps named matrix/scalar variables onto one flat decision vector.

    Symmetric variables use the n(n+1)/2 canonical symmetric basis, full
    matrix variables the row-major elementary basis.  Builders evaluate an
    affine matrix expression at zero and at unit vectors to recover the
    (F0, Fi) representation exactly.
    """

    def __init__(self):
        self._vars = []  # (name, kind, shape, start, length)
        self._size = 0

    def _add(self, name, kind, shape, length):
        if any(v[0] == name for v in self._vars):
            raise ValueError(f"duplicate variable {name!r}")
        self._vars.append((name, kind, shape, self._size, length))
        self._size += length

    def add_sym(self, name: str, dim: int) -> None:
        self._add(name, "sym", (dim, dim), dim * (dim + 1) // 2)

    def add_full(self, name: str, rows: int, cols: int) -> None:
        self._add(name, "full", (rows, cols), rows * cols)

    def add_scalar(self, name: str) -> None:
        self._add(name, "scalar", (), 1)

    @property
    def num_vars(self) -> int:
        return self._size

    def values(self, x: np.ndarray) -> dict:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self._size:
            raise ValueError(f"expected {self._size} entries, got {x.size}")
        out = {}
        for name, kind, shape, start, length in self._vars:
            chunk = x[start:start + length]
            if kind == "scalar":
                out[name] = float(chunk[0])
            elif kind == "full":
                out[name] = chunk.reshape(shape)
            else:
                dim = shape[0]
                full = np.zeros(shape)
                full[np.triu_indices(dim)] = chunk
                out[name] = full + np.triu(full, 1).T
        return out

    def slot(self, name: str) -> slice:
        for vname, _, _, start, length in self._vars:
            if vname == name:
                return slice(start, start + length)
        raise KeyError(name)


def affine_block(layout: VarLayout, fn, margin: float = 0.0) -> AffineBlock:
    """Build an AffineBlock from an affine matrix expression fn(vars)->array."""
    zero = np.zeros(layout.num_vars)
    f0 = symmetrize(np.asarray(fn(layout.values(zero)), dtype=float))
    coeffs = []
    for k in range(layout.num_vars):
        unit = zero.copy()
        unit[k] = 1.0
        fk = symmetrize(np.asarray(fn(layout.values(unit)), dtype=float))
        coeffs.append(fk - f0)
    return AffineBlock(dim=f0.shape[0], F0=f0, Fi=tuple(coeffs), strictness_margin=margin)


def linear_objective(layout: VarLayout, fn) -> np.ndarray:
    """Objective vector c with c'x = fn(vars) - fn(0) for linear fn."""
    zero = np.zeros(layout.num_vars)
    base = float(fn(layout.values(zero)))
    c = np.zeros(layout.num_vars)
    for k in range(layout.num_vars):
        unit = zero.copy()
        unit[k] = 1.0
        c[k] = float(fn(layout.values(unit))) - base
    return c
