"""Command-line front end: analyze | sweep | synth | spi | reproduce.

Exit codes: 0 ok/stable, 1 input error, 2 I/O error, 3 unstable verdict,
4 synthesis infeasible or failed verification, 5 initial gain not
stabilizing.  All CSV output uses 17 significant digits, '.' decimals,
comma delimiters and LF endings so identical inputs give byte-identical
files.  TOOL_WORKERS > 1 fans per-gamma work across a process pool; rows
are ordered by gamma either way.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__, certificates, riccati, spi, svg, synthesis
from .riccati import ProblemInstance
from .spi import SpiConfig, SpiInputError
from .synthesis import CertificateError, ExtractionError, SynthesisInfeasibleError

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_IO = 2
EXIT_UNSTABLE = 3
EXIT_INFEASIBLE = 4
EXIT_BAD_K0 = 5

BUILTIN_PROBLEMS = {
    "example1": {
        "A": [[-0.97, 0.0], [3.88, 0.97]],
        "B": [[2.0], [-1.0]],
        "Q": [[2.0, 0.0], [0.0, 3.0]],
        "R": [[5.0]],
    },
}


class InputError(Exception):
    pass


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _workers() -> int:
    raw = os.environ.get("TOOL_WORKERS", "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        return 1


def load_problem(spec: str) -> tuple[ProblemInstance, str, str]:
    """Resolve a problem file path or builtin name.

    Returns (problem, display name, sha256 of the canonical problem JSON).
    """
    if spec in BUILTIN_PROBLEMS:
        doc = BUILTIN_PROBLEMS[spec]
        name = spec
    else:
        try:
            with open(spec, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError as exc:
            raise InputError(f"problem file not found: {spec}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"problem file is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise InputError("problem file must be a JSON object")
        name = doc.get("name", os.path.basename(spec))
    for key in ("A", "B", "Q", "R"):
        if key not in doc:
            raise InputError(f"problem file missing required key {key!r}")
    try:
        prob = ProblemInstance(
            A=np.asarray(doc["A"], dtype=float),
            B=np.asarray(doc["B"], dtype=float),
            Q=np.asarray(doc["Q"], dtype=float),
            R=np.asarray(doc["R"], dtype=float),
            C=np.asarray(doc["C"], dtype=float) if "C" in doc else None,
            D=np.asarray(doc["D"], dtype=float) if "D" in doc else None,
        )
    except (ValueError, TypeError) as exc:
        raise InputError(f"invalid problem data: {exc}") from exc
    canon = json.dumps({k: doc[k] for k in sorted(doc) if k != "name"},
                       sort_keys=True, separators=(",", ":"))
    return prob, name, hashlib.sha256(canon.encode()).hexdigest()


def _parse_x0(raw: str, n: int) -> np.ndarray:
    try:
        x0 = np.array([float(v) for v in raw.split(",")], dtype=float)
    except ValueError as exc:
        raise InputError(f"cannot parse --x0 {raw!r}: {exc}") from exc
    if x0.size != n:
        raise InputError(f"--x0 must have {n} entries, got {x0.size}")
    return x0


def _gamma_in_range(gamma: float) -> float:
    if not 0.0 <= gamma <= 1.0:
        raise InputError(f"--gamma must be in [0, 1], got {gamma}")
    return gamma


class _OutputDir:
    """Collects written files and lands the manifest atomically last."""

    def __init__(self, path: str, command: str, problem: str, sha: str, params: dict):
        self.path = path
        self.command = command
        self.problem = problem
        self.sha = sha
        self.params = params
        self.files: list[str] = []
        os.makedirs(path, exist_ok=True)

    def file(self, name: str) -> str:
        self.files.append(name)
        return os.path.join(self.path, name)

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "problem": self.problem,
            "problem_sha256": self.sha,
            "parameters": self.params,
            "version": __version__,
            "outputs": sorted(self.files),
        }
        fd, tmp = tempfile.mkstemp(dir=self.path, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                json.dump(manifest, fh, indent=2, sort_keys=True)
                fh.write("\n")
            os.replace(tmp, os.path.join(self.path, "manifest.json"))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def _report_to_dict(report: certificates.CertificateReport) -> dict:
    out = {
        "gamma": report.gamma,
        "rho_closed_loop": report.rho_closed_loop,
        "cond9": report.cond9,
        "cond9_margin": report.cond9_margin,
        "cond11": report.cond11,
        "cond11_margin": report.cond11_margin,
        "cond16": report.cond16,
        "cond16_margin": report.cond16_margin,
        "thm2": report.thm2,
        "thm2_X": report.thm2_X.tolist() if report.thm2_X is not None else None,
    }
    if report.error:
        out["error"] = report.error
    return out


def cmd_analyze(args) -> int:
    prob, _, _ = load_problem(args.problem)
    gamma = _gamma_in_range(args.gamma)
    report = certificates.certificate_report(prob, gamma)
    print(json.dumps(_report_to_dict(report), indent=2, sort_keys=True))
    return EXIT_OK if report.rho_closed_loop < 1.0 else EXIT_UNSTABLE


def cmd_sweep(args) -> int:
    prob, name, sha = load_problem(args.problem)
    if not (0.0 <= args.gamma_min < args.gamma_max <= 1.0):
        raise InputError(
            f"need 0 <= gamma-min < gamma-max <= 1, got [{args.gamma_min}, {args.gamma_max}]")
    if args.steps < 2:
        raise InputError("--steps must be >= 2")
    grid = np.linspace(args.gamma_min, args.gamma_max, args.steps)
    reports = certificates.sweep(prob, grid, workers=_workers())
    boundaries = certificates.find_boundaries(prob, reports)

    out = _OutputDir(args.out, "sweep", name, sha, {
        "gamma_min": args.gamma_min, "gamma_max": args.gamma_max, "steps": args.steps,
    })
    certificates.write_sweep_csv(reports, out.file("sweep.csv"))
    with open(out.file("boundaries.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump([
            {"condition": b.condition, "gamma": b.gamma, "direction": b.direction}
            for b in boundaries
        ], fh, indent=2, sort_keys=True)
        fh.write("\n")
    gammas = [r.gamma for r in reports]
    rhos = [r.rho_closed_loop for r in reports]
    svg.line_plot(out.file("sweep_rho.svg"),
                  [(gammas, rhos, "rho(A+BK)")],
                  title=f"Closed-loop spectral radius ({name})",
                  xlabel="gamma", ylabel="rho", hlines=(1.0,))
    out.finish()
    return EXIT_OK


def cmd_synth(args) -> int:
    prob, name, sha = load_problem(args.problem)
    gamma = _gamma_in_range(args.gamma)
    params = {"mode": args.mode, "gamma": gamma}
    if args.mode == "cost":
        if not args.x0:
            raise InputError("--mode cost requires --x0")
        x0 = _parse_x0(args.x0, prob.n)
        params["x0"] = x0.tolist()
        result = synthesis.synth_guaranteed_cost(prob, gamma, x0)
        fname = "synth_cost.json"
    else:
        result = synthesis.synth_gain_proximity(prob, gamma)
        fname = "synth_gain.json"
    out = _OutputDir(args.out, "synth", name, sha, params)
    with open(out.file(fname), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(result.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    out.finish()
    return EXIT_OK


def _resolve_k0(args, prob: ProblemInstance, gamma: float) -> tuple[np.ndarray, dict]:
    source = args.k0
    if source == "synth-cost":
        if not args.x0:
            raise InputError("--k0 synth-cost requires --x0")
        x0 = _parse_x0(args.x0, prob.n)
        res = synthesis.synth_guaranteed_cost(prob, gamma, x0)
        return res.K_hat, {"k0": "synth-cost", "x0": x0.tolist()}
    if source == "synth-gain":
        res = synthesis.synth_gain_proximity(prob, gamma)
        return res.K_bar, {"k0": "synth-gain"}
    try:
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise InputError(f"K0 file not found: {source}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"K0 file is not valid JSON: {exc}") from exc
    if "K" not in doc:
        raise InputError("K0 file missing required key 'K'")
    return np.atleast_2d(np.asarray(doc["K"], dtype=float)), {"k0": source}


def cmd_spi(args) -> int:
    prob, name, sha = load_problem(args.problem)
    gamma = _gamma_in_range(args.gamma)
    k0, k0_params = _resolve_k0(args, prob, gamma)
    config = SpiConfig(gamma=gamma, K0=k0,
                       alpha_grid_step=args.alpha_grid,
                       alpha_scale=args.alpha_scale,
                       epsilon_stop=args.eps,
                       max_iterations=args.max_iterations)
    trace = spi.spi_run(prob, config)
    out = _OutputDir(args.out, "spi", name, sha, {
        "gamma": gamma, "alpha_grid": args.alpha_grid,
        "alpha_scale": args.alpha_scale, "eps": args.eps,
        "max_iterations": args.max_iterations, **k0_params,
    })
    spi.write_trace_csv(trace, out.file("spi_trace.csv"))
    spi.write_trace_json(trace, out.file("spi_trace.json"))
    out.finish()
    print(f"stop_reason: {trace.stop_reason}")
    return EXIT_OK


def _reproduce_fig1(prob, name, sha, out_dir) -> None:
    grid = np.linspace(0.0, 1.0, 1000)
    reports = certificates.sweep(prob, grid, with_thm2=False, workers=_workers())
    boundaries = certificates.find_boundaries(prob, reports)
    out = _OutputDir(out_dir, "reproduce fig1", name, sha, {"steps": 1000})
    certificates.write_sweep_csv(reports, out.file("fig1.csv"))
    with open(out.file("fig1_boundaries.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump([
            {"condition": b.condition, "gamma": b.gamma, "direction": b.direction}
            for b in boundaries
        ], fh, indent=2, sort_keys=True)
        fh.write("\n")
    gammas = [r.gamma for r in reports]
    rhos = [r.rho_closed_loop for r in reports]
    svg.line_plot(out.file("fig1.svg"), [(gammas, rhos, "rho(A+BK)")],
                  title="Spectral radius of the optimal closed loop",
                  xlabel="gamma", ylabel="rho", hlines=(1.0,))
    out.finish()


def _reproduce_fig2(prob, name, sha, out_dir) -> None:
    x0 = np.array([1.0, 1.0])
    grid = [round(0.05 * i, 2) for i in range(1, 20)]
    rows = []
    for gamma in grid:
        res = synthesis.synth_guaranteed_cost(prob, gamma, x0)
        rows.append((gamma, res.achieved_cost, res.guaranteed_bound, res.optimal_cost))
    out = _OutputDir(out_dir, "reproduce fig2", name, sha, {"x0": x0.tolist()})
    with open(out.file("fig2.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("gamma,cost_achieved,cost_bound,cost_optimal\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    svg.line_plot(
        out.file("fig2.svg"),
        [([r[0] for r in rows], [r[1] for r in rows], "J(x0, K)"),
         ([r[0] for r in rows], [r[2] for r in rows], "x0' X^-1 x0"),
         ([r[0] for r in rows], [r[3] for r in rows], "x0' P x0")],
        title="Guaranteed-cost synthesis", xlabel="gamma", ylabel="cost")
    out.finish()


def _spi_demo_trace(prob):
    x0 = np.array([1.0, 1.0])
    k0 = synthesis.synth_guaranteed_cost(prob, 0.1, x0).K_hat
    config = SpiConfig(gamma=0.1, K0=k0, alpha_scale=0.1, epsilon_stop=1e-5)
    return spi.spi_run(prob, config)


def _reproduce_fig3(prob, name, sha, out_dir) -> None:
    trace = _spi_demo_trace(prob)
    points = []
    rows = []
    for it in trace.iterates:
        for lam in np.linalg.eigvals(prob.closed_loop(it.K)):
            rows.append((it.j, lam.real, lam.imag))
            points.append((lam.real, lam.imag))
    out = _OutputDir(out_dir, "reproduce fig3", name, sha,
                     {"gamma": 0.1, "alpha_scale": 0.1})
    with open(out.file("fig3.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("j,eig_real,eig_imag\n")
        for j, re, im in rows:
            fh.write(f"{j},{_fmt(re)},{_fmt(im)}\n")
    svg.scatter_with_unit_circle(out.file("fig3.svg"), points,
                                 title="Closed-loop eigenvalues over the iterations")
    out.finish()


def _reproduce_fig4(prob, name, sha, out_dir) -> None:
    trace = _spi_demo_trace(prob)
    out = _OutputDir(out_dir, "reproduce fig4", name, sha,
                     {"gamma": 0.1, "alpha_scale": 0.1})
    with open(out.file("fig4.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("j,gap_frobenius\n")
        for it in trace.iterates:
            fh.write(f"{it.j},{_fmt(it.cost_matrix_gap)}\n")
    svg.line_plot(out.file("fig4.svg"),
                  [([it.j for it in trace.iterates],
                    [it.cost_matrix_gap for it in trace.iterates],
                    "||P_j - P||")],
                  title="Value-matrix gap over the iterations",
                  xlabel="iteration", ylabel="gap")
    out.finish()


def cmd_reproduce(args) -> int:
    prob, name, sha = load_problem(args.problem)
    runner = {
        "fig1": _reproduce_fig1,
        "fig2": _reproduce_fig2,
        "fig3": _reproduce_fig3,
        "fig4": _reproduce_fig4,
    }[args.figure]
    try:
        runner(prob, name, sha, args.out)
    except (SynthesisInfeasibleError, ExtractionError, CertificateError) as exc:
        raise RuntimeError(f"{args.figure}: synthesis sub-step failed: {exc}") from exc
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dlqrkit",
        description="Discounted LQR stability certificates and stabilizing "
                    "near-optimal gain synthesis")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_problem(p):
        p.add_argument("--problem", required=True,
                       help="problem JSON file or builtin name (example1)")

    p = sub.add_parser("analyze", help="evaluate all stability certificates at one gamma")
    add_problem(p)
    p.add_argument("--gamma", type=float, required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="certificate sweep over a gamma grid")
    add_problem(p)
    p.add_argument("--gamma-min", type=float, default=0.0)
    p.add_argument("--gamma-max", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=201)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="synthesize a stabilizing near-optimal gain")
    add_problem(p)
    p.add_argument("--mode", choices=("cost", "gain"), required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--x0", help="comma-separated initial state (cost mode)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("spi", help="run stability-preserving policy iteration")
    add_problem(p)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--k0", required=True,
                   help="gain JSON file, or synth-cost / synth-gain")
    p.add_argument("--x0", help="comma-separated initial state (synth-cost)")
    p.add_argument("--alpha-grid", type=float, default=1e-5)
    p.add_argument("--alpha-scale", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--max-iterations", type=int, default=500)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spi)

    p = sub.add_parser("reproduce", help="regenerate the benchmark figure data")
    p.add_argument("figure", choices=("fig1", "fig2", "fig3", "fig4"))
    p.add_argument("--problem", default="example1")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reproduce)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SpiInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_K0
    except (SynthesisInfeasibleError, ExtractionError, CertificateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
