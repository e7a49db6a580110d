#!/usr/bin/env python3
"""
Command-line entry point: solve models, compute and validate sensitivities,
run optimization scenarios, train neural reparameterizations, benchmark the
solvers and generate fixture models.

Exit codes: 0 success, 1 input error, 2 validation failure, 3 numerical failure.
"""

import os, sys, json, time, argparse, logging
from typing import Any, Dict, List, Optional

from sso_config import (
    DENSE_LIMIT,
    FD_STEP,
    FD_THRESHOLD,
    LOG_LEVEL,
    OUTPUT_DIR,
    PIVOT_TOL,
    SOLVER,
    configure_threads,
    default_threads,
)

# elements per span on the 100-span arch; 34 gives 20406 DOF
BENCH_SWEEP = [2, 5, 10, 20, 34]

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


# ------- Logging Setup -------
def setup_logging(level: str = "INFO"):
    """Configure structured logging for the application."""
    log_format = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format=log_format,
        handlers=[
            logging.StreamHandler(sys.stdout)
        ],
        force=True,
    )

    # Reduce noise from numerical libraries
    logging.getLogger('matplotlib').setLevel(logging.WARNING)
    logging.getLogger('numexpr').setLevel(logging.WARNING)

    return logging.getLogger('structural_optimizer')


logger = logging.getLogger('structural_optimizer')


def _banner(title: str, settings: Dict[str, Any]) -> None:
    logger.info("=" * 60)
    logger.info(title)
    logger.info("=" * 60)
    for key, val in settings.items():
        logger.info(f"  {key}: {val}")
    logger.info("=" * 60)


def _solver_choice(kind: Optional[str]):
    from sso_linsolve import SolverChoice
    return SolverChoice(kind or SOLVER, pivot_tolerance=PIVOT_TOL)


def _output_dir(path: Optional[str], command: str) -> str:
    from sso_reporting import ensure_dir
    return ensure_dir(path or os.path.join(OUTPUT_DIR, command))


def _objective(doc):
    from sso_optimize import PenalizedVolume, SizeObjectiveConfig
    from sso_sensitivity import StrainEnergy

    if doc.kind == "penalized_volume":
        return PenalizedVolume(SizeObjectiveConfig(
            t_min=doc.t_min, u_max=doc.u_max, epsilon=doc.epsilon, kappa=doc.kappa, component=doc.component))
    return StrainEnergy()


# ------- Commands -------
def run_solve(model_path: str, solver: Optional[str] = None, output_dir: Optional[str] = None,
              dump: bool = False, threads: Optional[int] = None) -> int:
    """Solve a model file; writes u.csv, reactions.csv and report.json."""
    import numpy as np
    from sso_assembly import assemble_system, dump_system, reactions
    from sso_linsolve import factorize, solve
    from sso_reporting import RunReport, write_displacements, write_reactions
    from sso_schemas import load_model
    from sso_sensitivity import strain_energy

    out = _output_dir(output_dir, "solve")
    choice = _solver_choice(solver)
    model = load_model(model_path)
    report = RunReport(command="solve", dof=model.dof, dof_bc=model.dof_bc, solver=choice.kind)

    _banner("Linear static solve", {"Model": model_path, "Size": model.summary(), "Solver": choice.kind})
    with report.phase("assembly"):
        system = assemble_system(model, workers=threads)
    with report.phase("factorization"):
        handle = factorize(system, choice, model.node_ids)
    with report.phase("solve"):
        solution = solve(system, choice, model.node_ids, handle=handle)

    u = solution.u
    energy = strain_energy(system.f, u)
    report.results = {
        "strain_energy": energy,
        "max_abs_uz": float(np.max(np.abs(u[2::6]))),
        "max_abs_u": float(np.max(np.abs(u))),
        "residual_norm": solution.residual_norm,
    }
    report.add_file(write_displacements(os.path.join(out, "u.csv"), model, u))
    report.add_file(write_reactions(os.path.join(out, "reactions.csv"), reactions(model, system, u)))
    if dump:
        report.files.extend(dump_system(system, out))
    report.write(out)

    logger.info(f"✓ Strain energy {energy:.6e}, max |u_z| {report.results['max_abs_uz']:.6e}")
    logger.info(f"✓ Results written to {out}")
    return EXIT_OK


def run_sensitivity(model_path: str, params_path: str, solver: Optional[str] = None,
                    output_dir: Optional[str] = None) -> int:
    """Adjoint gradient of the objective named in the parameter file."""
    from sso_reporting import RunReport, write_rows
    from sso_schemas import load_model, load_parameters
    from sso_sensitivity import parameter_values, sensitivity

    out = _output_dir(output_dir, "sensitivity")
    choice = _solver_choice(solver)
    model = load_model(model_path)
    params, objective_doc = load_parameters(params_path, model)
    objective = _objective(objective_doc)
    report = RunReport(command="sensitivity", dof=model.dof, dof_bc=model.dof_bc, solver=choice.kind)

    _banner("Adjoint sensitivity", {"Model": model_path, "Objective": objective_doc.kind,
                                    "Parameters": len(params), "Solver": choice.kind})
    with report.phase("sensitivity"):
        result = sensitivity(model, objective, params, choice)

    values = parameter_values(model, params)
    report.results = {"objective": result.value, "parameters": len(params)}
    report.add_file(write_rows(os.path.join(out, "sensitivity.csv"), ["parameter", "value", "gradient"],
                               ([p.label, v, g] for p, v, g in zip(params, values, result.gradient))))
    report.write(out)
    logger.info(f"✓ Objective {result.value:.6e}; {len(params)} gradients written to {out}")
    return EXIT_OK


def run_validate_fd(model_path: str, params_path: str, steps: List[float], threshold: float = FD_THRESHOLD,
                    solver: Optional[str] = None, output_dir: Optional[str] = None) -> int:
    """Compare adjoint gradients with central differences; exit 2 above threshold at the first step."""
    import numpy as np
    from sso_reporting import RunReport, write_rows
    from sso_schemas import load_model, load_parameters
    from sso_sensitivity import fd_gradient, relative_errors, sensitivity

    out = _output_dir(output_dir, "validate-fd")
    choice = _solver_choice(solver)
    model = load_model(model_path)
    params, objective_doc = load_parameters(params_path, model)
    objective = _objective(objective_doc)
    report = RunReport(command="validate-fd", dof=model.dof, dof_bc=model.dof_bc, solver=choice.kind)

    _banner("Finite-difference validation", {"Model": model_path, "Parameters": len(params),
                                             "Steps": steps, "Threshold": threshold})
    with report.phase("sensitivity"):
        adjoint = sensitivity(model, objective, params, choice).gradient

    rows = []
    worst = {}
    for step in steps:
        with report.phase("finite_difference"):
            fd = fd_gradient(model, objective, params, step=step, choice=choice)
        errors = relative_errors(adjoint, fd)
        worst[step] = float(np.max(errors)) if len(errors) else 0.0
        rows.extend([p.label, step, a, f, e] for p, a, f, e in zip(params, adjoint, fd, errors))
        logger.info(f"  step {step:.1e}: max rel_err {worst[step]:.3e}")

    report.add_file(write_rows(os.path.join(out, "fd_validation.csv"),
                               ["param", "step", "adjoint", "fd", "rel_err"], rows))
    passed = worst[steps[0]] <= threshold
    report.results = {"max_rel_err": {repr(k): v for k, v in worst.items()}, "threshold": threshold,
                      "passed": passed}
    report.write(out)

    if not passed:
        logger.error(f"✗ Relative error {worst[steps[0]]:.3e} exceeds threshold {threshold:.1e}")
        return EXIT_VALIDATION
    logger.info("✓ Adjoint gradients agree with finite differences")
    return EXIT_OK


def _optimization_problem(doc, model):
    """Scenario document to an OptimizationProblem."""
    from sso_filters import maybe_filter
    from sso_optimize import OptimizationProblem, ShapeBox, VariableGroup, VolumeConstraint, parameter_positions

    groups = []
    for g in doc.groups:
        params = g.select.expand(model)
        for p in params:
            p.validate(model)
        box = ShapeBox(g.box.z_min, g.box.z_max) if g.box is not None else None
        groups.append(VariableGroup(g.name, params, g.lower, g.upper, box=box,
                                    filter=maybe_filter(parameter_positions(model, params), g.filter_radius)))
    constraints = [VolumeConstraint(c.group, c.budget) for c in doc.constraints]
    return OptimizationProblem(model, _objective(doc.objective), groups, constraints,
                               filter_mode=doc.filter_mode, choice=_solver_choice(doc.solver),
                               snapshot_every=doc.snapshot_every, log_every=doc.log_every)


def run_optimize(scenario_path: str, output_dir: Optional[str] = None, max_iter: Optional[int] = None) -> int:
    """Run an optimization scenario; writes history.csv, snapshots and the final model."""
    from sso_optimize import make_optimizer, run_optimization
    from sso_reporting import RunReport, write_dicts, write_json
    from sso_schemas import load_model, load_scenario, save_model

    out = _output_dir(output_dir, "optimize")
    doc, model_path = load_scenario(scenario_path)
    model = load_model(model_path)
    if doc.simp_penalty is not None:
        model = model.with_penalty(doc.simp_penalty)
    problem = _optimization_problem(doc, model)
    optimizer = make_optimizer(doc.optimizer.kind, **doc.optimizer.options())
    iterations = doc.max_iter if max_iter is None else max_iter
    report = RunReport(command="optimize", dof=model.dof, dof_bc=model.dof_bc, solver=problem.choice.kind)

    _banner("Structural optimization", {
        "Scenario": scenario_path,
        "Model": model.summary(),
        "Objective": doc.objective.kind,
        "Variables": ", ".join(f"{g.name}={g.size}" for g in problem.groups),
        "Constraints": len(problem.constraints),
        "Optimizer": f"{doc.optimizer.kind} {doc.optimizer.options()}",
        "Iterations": iterations,
    })
    with report.phase("optimization"):
        history = run_optimization(problem, optimizer, iterations)

    report.add_file(write_dicts(os.path.join(out, "history.csv"), history.rows))
    if history.snapshots:
        snap_dir = os.path.join(out, "snapshots")
        os.makedirs(snap_dir, exist_ok=True)
        for snap in history.snapshots:
            report.add_file(write_json(os.path.join(snap_dir, f"snapshot_{snap['iteration']:04d}.json"), snap))
    if history.model is not None:
        report.add_file(save_model(history.model, os.path.join(out, "final_model.json")))
    report.results = {
        "iterations": len(history.rows) - 1,
        "initial_objective": history.rows[0]["objective"] if history.rows else None,
        "final_objective": history.rows[-1]["objective"] if history.rows else None,
        "aborted": history.aborted,
    }
    report.write(out)

    if history.aborted:
        logger.error(f"✗ Optimization aborted at {history.aborted}; partial history in {out}")
        return EXIT_NUMERICAL
    logger.info(f"✓ Objective {report.results['initial_objective']:.6e} -> {report.results['final_objective']:.6e}")
    return EXIT_OK


def run_train_nn(scenario_path: str, output_dir: Optional[str] = None, epochs: Optional[int] = None) -> int:
    """Train the neural reparameterization named in a scenario's nn section."""
    from sso_neural import MlpArchitecture, TrainConfig, params_to_document, train
    from sso_reporting import RunReport, write_dicts, write_json
    from sso_schemas import SchemaError, load_model, load_scenario, save_model

    out = _output_dir(output_dir, "train-nn")
    doc, model_path = load_scenario(scenario_path)
    if doc.nn is None:
        raise SchemaError("train-nn needs an nn section", "/nn")
    model = load_model(model_path)
    nn = doc.nn
    arch = MlpArchitecture(tuple(nn.widths), nn.output)
    settings = nn.model_dump(exclude={"widths", "output", "support_nodes"})
    if epochs is not None:
        settings["epochs"] = epochs
    config = TrainConfig(**settings, log_every=doc.log_every)
    report = RunReport(command="train-nn", dof=model.dof, dof_bc=model.dof_bc)

    _banner("Neural reparameterization", {
        "Scenario": scenario_path,
        "Model": model.summary(),
        "Architecture": f"{arch.widths} ({arch.param_count} parameters, {arch.output})",
        "Epochs": config.epochs,
        "Learning rate": config.lr,
        "V*": config.V_star,
    })
    with report.phase("training"):
        params, history = train(model, arch, config, nn.support_nodes, _solver_choice(doc.solver))

    report.add_file(write_dicts(os.path.join(out, "train_history.csv"), history.rows))
    report.add_file(write_json(os.path.join(out, "nn_params.json"), params_to_document(params, arch)))
    if history.snapshot is not None:
        report.add_file(write_json(os.path.join(out, "final_snapshot.json"), history.snapshot))
    if history.model is not None:
        report.add_file(save_model(history.model, os.path.join(out, "final_model.json")))
    report.results = {
        "epochs": len(history.rows),
        "initial_loss": history.rows[0]["loss"] if history.rows else None,
        "final_loss": history.rows[-1]["loss"] if history.rows else None,
        "final_sum_p_T": history.rows[-1]["sum_p_T"] if history.rows else None,
        "design_sum_p_T": history.design_sum_p_T,
        "budget_scale": history.budget_scale,
        "aborted": history.aborted,
    }
    report.write(out)

    if history.aborted:
        logger.error(f"✗ Training aborted at {history.aborted}; partial history in {out}")
        return EXIT_NUMERICAL
    logger.info(f"✓ Loss {report.results['initial_loss']:.4e} -> {report.results['final_loss']:.4e}")
    return EXIT_OK


def run_bench(spans: int = 100, elements_per_span: Optional[List[int]] = None, solvers: Optional[List[str]] = None,
              dense_limit: int = DENSE_LIMIT, output_dir: Optional[str] = None, threads: Optional[int] = None) -> int:
    """Time assembly, solve and all-node-Z sensitivity on the multi-span arch."""
    import numpy as np
    from fixtures.generators import multi_span_arch
    from sso_assembly import assemble_system
    from sso_linsolve import SolverChoice, solve
    from sso_reporting import RunReport, write_rows
    from sso_sensitivity import DesignParameter, StrainEnergy, sensitivity

    out = _output_dir(output_dir, "bench")
    sweep = sorted(elements_per_span or BENCH_SWEEP)
    solvers = solvers or ["sparse", "dense"]
    report = RunReport(command="bench")
    _banner("Solver benchmark", {"Spans": spans, "Elements per span": sweep, "Solvers": solvers,
                                 "Dense limit (DOF)": dense_limit})

    rows = []
    for eps in sweep:
        model = multi_span_arch(spans=spans, elements_per_span=eps)
        params = [DesignParameter.node_coord(n, 2) for n in model.node_ids]
        for kind in solvers:
            if kind == "dense" and model.dof > dense_limit:
                logger.info(f"  skip dense at dof={model.dof} (limit {dense_limit})")
                continue
            choice = SolverChoice(kind, pivot_tolerance=PIVOT_TOL)
            t0 = time.perf_counter()
            system = assemble_system(model, workers=threads)
            t1 = time.perf_counter()
            solution = solve(system, choice, model.node_ids)
            t2 = time.perf_counter()
            sensitivity(model, StrainEnergy(), params, choice, system=system, solution=solution)
            t3 = time.perf_counter()
            rows.append([model.dof, kind, t1 - t0, t2 - t1, t3 - t2])
            logger.info(f"  dof={model.dof:8d} {kind:6s} assembly {t1 - t0:.4f}s  solve {t2 - t1:.4f}s  "
                        f"sensitivity {t3 - t2:.4f}s")

    report.add_file(write_rows(os.path.join(out, "bench.csv"),
                               ["dof", "solver", "assembly_s", "solve_s", "sensitivity_s"], rows))
    crossover = _crossover(rows)
    report.results = {"rows": len(rows), "sparse_faster_from_dof": crossover}
    report.write(out)
    if crossover is not None:
        logger.info(f"✓ Sparse solve faster than dense from dof={crossover}")
    return EXIT_OK


def _crossover(rows: List[List[Any]]) -> Optional[int]:
    timings: Dict[int, Dict[str, float]] = {}
    for dof, kind, _, solve_s, _ in rows:
        timings.setdefault(dof, {})[kind] = solve_s
    for dof in sorted(timings):
        t = timings[dof]
        if "dense" in t and "sparse" in t and t["sparse"] < t["dense"]:
            return dof
    return None


def run_fixtures(name: str, output: Optional[str] = None, options: Optional[Dict[str, Any]] = None) -> int:
    """Generate a fixture model file."""
    from fixtures.generators import build_fixture
    from sso_schemas import save_model

    model = build_fixture(name, **(options or {}))
    path = output or os.path.join(OUTPUT_DIR, "fixtures", f"{name}.json")
    save_model(model, path)
    logger.info(f"✓ Wrote {name} ({model.summary()}) to {path}")
    return EXIT_OK


def _parse_options(pairs: List[str]) -> Dict[str, Any]:
    """key=value pairs; values are read as JSON when possible (numbers, booleans, lists)."""
    options = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ValueError(f"Expected key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        try:
            options[key.replace("-", "_")] = json.loads(raw)
        except json.JSONDecodeError:
            options[key.replace("-", "_")] = raw
    return options


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        description="Differentiable linear-static structural analysis and optimization",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Generate and solve a fixture
  %(prog)s fixtures barrel-arch --output models/barrel.json
  %(prog)s solve models/barrel.json --solver sparse

  # Sensitivities and their finite-difference check
  %(prog)s sensitivity models/arch.json params/arch_z.json
  %(prog)s validate-fd models/arch.json params/arch_z.json --steps 1e-4 1e-6 1e-8

  # Optimization and neural reparameterization
  %(prog)s optimize scenarios/gridshell_shape.json
  %(prog)s train-nn scenarios/dome_nn.json --epochs 100

  # Solver scaling on the multi-span arch
  %(prog)s bench --spans 100 --elements-per-span 2 10 50 --dense-limit 20000
        """
    )
    ap.add_argument("--threads", type=int, default=None,
                    help="Thread count for BLAS pools and assembly (default: SSO_THREADS or library default)")
    ap.add_argument("--log-level", type=str, default=LOG_LEVEL,
                    choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                    help=f"Logging level (default: {LOG_LEVEL})")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="Solve a model file")
    p.add_argument("model")
    p.add_argument("--solver", choices=["dense", "sparse"], default=None,
                   help=f"Linear solver (default: {SOLVER})")
    p.add_argument("--output-dir", default=None)
    p.add_argument("--dump", action="store_true", help="Also write K_aug.mtx and f_aug.txt")

    p = sub.add_parser("sensitivity", help="Adjoint sensitivities for a parameter file")
    p.add_argument("model")
    p.add_argument("params")
    p.add_argument("--solver", choices=["dense", "sparse"], default=None)
    p.add_argument("--output-dir", default=None)

    p = sub.add_parser("validate-fd", help="Check adjoint sensitivities against finite differences")
    p.add_argument("model")
    p.add_argument("params")
    p.add_argument("--step", type=float, default=FD_STEP, help=f"FD step (default: {FD_STEP})")
    p.add_argument("--steps", type=float, nargs="+", default=None,
                   help="Several FD steps; the first one decides pass/fail")
    p.add_argument("--threshold", type=float, default=FD_THRESHOLD,
                   help=f"Maximum relative error (default: {FD_THRESHOLD})")
    p.add_argument("--solver", choices=["dense", "sparse"], default=None)
    p.add_argument("--output-dir", default=None)

    p = sub.add_parser("optimize", help="Run an optimization scenario")
    p.add_argument("scenario")
    p.add_argument("--max-iter", type=int, default=None, help="Override the scenario's max_iter")
    p.add_argument("--output-dir", default=None)

    p = sub.add_parser("train-nn", help="Train a neural reparameterization scenario")
    p.add_argument("scenario")
    p.add_argument("--epochs", type=int, default=None, help="Override the scenario's epoch count")
    p.add_argument("--output-dir", default=None)

    p = sub.add_parser("bench", help="Time assembly, solve and sensitivity on the multi-span arch")
    p.add_argument("--spans", type=int, default=100)
    p.add_argument("--elements-per-span", type=int, nargs="+", default=None)
    p.add_argument("--solver", choices=["dense", "sparse", "both"], default="both")
    p.add_argument("--dense-limit", type=int, default=DENSE_LIMIT,
                   help="Skip the dense backend above this many DOF")
    p.add_argument("--output-dir", default=None)

    p = sub.add_parser("fixtures", help="Generate a fixture model file")
    p.add_argument("name")
    p.add_argument("--output", default=None)
    p.add_argument("--set", dest="options", action="append", default=[], metavar="KEY=VALUE",
                   help="Generator option, e.g. --set n=40 --set supports=mid_edges")
    return ap


def dispatch(args: argparse.Namespace, threads: Optional[int]) -> int:
    if args.command == "solve":
        return run_solve(args.model, args.solver, args.output_dir, args.dump, threads)
    if args.command == "sensitivity":
        return run_sensitivity(args.model, args.params, args.solver, args.output_dir)
    if args.command == "validate-fd":
        return run_validate_fd(args.model, args.params, args.steps or [args.step], args.threshold,
                               args.solver, args.output_dir)
    if args.command == "optimize":
        return run_optimize(args.scenario, args.output_dir, args.max_iter)
    if args.command == "train-nn":
        return run_train_nn(args.scenario, args.output_dir, args.epochs)
    if args.command == "bench":
        solvers = ["sparse", "dense"] if args.solver == "both" else [args.solver]
        return run_bench(args.spans, args.elements_per_span, solvers, args.dense_limit, args.output_dir, threads)
    if args.command == "fixtures":
        return run_fixtures(args.name, args.output, _parse_options(args.options))
    raise ValueError(f"Unknown command {args.command}")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)

    try:
        threads = args.threads if args.threads is not None else default_threads()
        configure_threads(threads)
    except ValueError as e:
        logger.error(str(e))
        return EXIT_INPUT

    # numerical modules load only after the thread pools are pinned
    from sso_linsolve import NumericalError, SingularSystemError

    try:
        return dispatch(args, threads)
    except (SingularSystemError, NumericalError, FloatingPointError) as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    except (FileNotFoundError, ValueError) as e:
        logger.error(f"Input error: {e}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
