"""Command-line entry point: ``tdks <command> --scenario FILE``.

Exit status is 0 for a PASS verdict, 1 for FAIL, 2 for usage or scenario errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import persistence
from .errors import ScenarioParseError, StepFailure, ValidationError
from .experiments import (StudyReport, dt_refinement_study, epsilon_convergence_study,
                          inequality_suite, stability_study)
from .fields import GridSpec, laplacian_apply, inner, l2_norm, lp_norm, random_smooth_field
from .mollifier import MollifierKernel, mollify
from .potentials import PotentialStack, StackEvaluator
from .propagator import run
from .scenario import ladder, load_scenario

log = logging.getLogger("tdks")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args):
    sc = load_scenario(args.scenario)
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    return sc


def _emit(args, report: StudyReport, name: str) -> int:
    out = _out_dir(args)
    persistence.write_report(report, out / f"{name}.json")
    persistence.write_table(report.rows, out / f"{name}.csv")
    if not args.quiet:
        print(json.dumps(persistence._jsonable(report.rows), indent=1))
        print(f"{report.kind}: {report.verdict} ({report.runtime:.1f} s)")
    return 0 if report.passed else 1


def cmd_run(args) -> int:
    sc = _load(args)
    if args.dt:
        sc = sc.with_dt(ladder(sc, args.dt)[0])
    if args.epsilon:
        sc = sc.with_epsilon(ladder(sc, args.epsilon)[0])
    traj = run(sc)
    out = _out_dir(args)
    persistence.write_ledger(traj.ledger, out / "ledger.csv")
    persistence.checkpoint(traj, out / "checkpoint.tdks")
    charges = np.array([r.charge for r in traj.ledger])
    drift = float(np.max(np.abs(np.diff(charges))) / charges[0]) if len(charges) > 1 and charges[0] > 0 else 0.0
    tol = 10 * max(sc.stepper.picard_tol, sc.stepper.linear_tol)
    report = StudyReport("run", sc.digest(), [{"steps": len(traj) - 1, "max_step_charge_drift": drift,
                                               "E_final": traj.ledger[-1].E_total}],
                         "PASS" if drift <= tol else "FAIL", 0.0)
    persistence.write_report(report, out / "run.json")
    if not args.quiet:
        print(f"run: {len(traj) - 1} steps, max per-step charge drift {drift:.3e}: {report.verdict}")
    return 0 if report.passed else 1


def cmd_eps_study(args) -> int:
    sc = _load(args)
    eps = ladder(sc, args.epsilon or "8h,4h,2h")
    return _emit(args, epsilon_convergence_study(sc, eps), "eps_study")


def cmd_stability(args) -> int:
    sc = _load(args)
    return _emit(args, stability_study(sc, args.delta, args.trials), "stability")


def cmd_dt_study(args) -> int:
    sc = _load(args)
    dts = ladder(sc, args.dt) if args.dt else [sc.stepper.dt / 2 ** k for k in range(3)]
    return _emit(args, dt_refinement_study(sc, dts), "dt_study")


def _unit_invariants(seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    grid = GridSpec.cube(8.0, 8)
    f = random_smooth_field(grid, rng, complex_valued=True)
    g = random_smooth_field(grid, rng, complex_valued=True)
    lap_f = laplacian_apply(grid, f)
    lap_sym = abs(inner(grid, lap_f, g) - inner(grid, f, laplacian_apply(grid, g)))
    lap_scale = l2_norm(grid, lap_f) * l2_norm(grid, g)
    ev = StackEvaluator(PotentialStack(), grid)
    r1, r2 = rng.random(grid.shape), rng.random(grid.shape)
    w12 = float(np.sum(ev.hartree(r1) * r2))
    hartree_sym = abs(w12 - float(np.sum(r1 * ev.hartree(r2))))
    kernel = MollifierKernel(grid, 2 * grid.h)
    u = rng.standard_normal(grid.shape)
    nonexp = max(lp_norm(grid, mollify(u, kernel), p) / lp_norm(grid, u, p) for p in (1, 2))
    return [
        {"check": "laplacian_symmetry", "value": lap_sym / lap_scale, "passed": lap_sym <= 1e-12 * lap_scale},
        {"check": "hartree_symmetry", "value": hartree_sym / w12, "passed": hartree_sym <= 1e-12 * w12},
        {"check": "mollifier_nonexpansion", "value": nonexp, "passed": nonexp <= 1 + 1e-10},
    ]


def cmd_verify(args) -> int:
    seed = 42 if args.seed is None else args.seed
    report = inequality_suite(args.samples, seed)
    checks = _unit_invariants(seed)
    report.rows.extend(checks)
    if not all(c["passed"] for c in checks):
        report.verdict = "FAIL"
    return _emit(args, report, "verify")


def cmd_validate(args) -> int:
    sc = _load(args)
    if not args.quiet:
        print(f"scenario {args.scenario} is valid (digest {sc.digest()})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="tdks_out", help="output directory")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="tdks", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_cmd(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--scenario", required=True)
        p.set_defaults(func=func)
        return p

    p = scenario_cmd("run", cmd_run, "propagate a scenario and write ledger + checkpoint")
    p.add_argument("--dt")
    p.add_argument("--epsilon")
    p = scenario_cmd("eps-study", cmd_eps_study, "Cauchy differences along an epsilon ladder")
    p.add_argument("--epsilon", help="comma list, e.g. 8h,4h,2h")
    p = scenario_cmd("stability", cmd_stability, "perturbed-pair separation study")
    p.add_argument("--delta", type=float, default=1e-4)
    p.add_argument("--trials", type=int, default=3)
    p = scenario_cmd("dt-study", cmd_dt_study, "observed order along a dt ladder")
    p.add_argument("--dt", help="comma list, e.g. 0.02,0.01,0.005")
    scenario_cmd("validate", cmd_validate, "parse and validate a scenario")
    p = sub.add_parser("verify", parents=[common], help="inequality suite and unit invariants")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--scenario", help="unused; accepted for symmetry")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except (ScenarioParseError, ValidationError, FileNotFoundError) as exc:
        print(f"tdks: error: {exc}", file=sys.stderr)
        return 2
    except StepFailure as exc:
        print(f"tdks: run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
