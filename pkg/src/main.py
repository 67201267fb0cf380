"""Command-line interface for the M-CLP solver."""
import argparse
import sys
from pathlib import Path
from typing import List, Optional, Tuple, Union

from loguru import logger

from src.cli_io import (
    emit_trajectory, parse_problem, parse_solution, report_summary, serialize_problem, serialize_solution,
)
from src.config import settings
from src.database import get_db_manager, hash_text
from src.errors import AtomsPresent, MclpError
from src.feasibility import check_feasibility
from src.model import (
    ProblemData, check_feasible_measure, complementary_slackness_residual, dual_objective, dual_problem,
    evaluate_objective,
)
from src.sclp_bridge import SclpData, mclp_solution_to_sclp, sclp_to_mclp
from src.solver_driver import SolveStatus, solve, value_brackets
from src.structure import check_nondegeneracy, detect_rate_structure, slope_change_points, verify_rates_pair

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_STRICT = 2
EXIT_INFEASIBLE = 3
EXIT_GAP_NOT_CERTIFIED = 4
EXIT_UNBOUNDED = 5

STATUS_EXIT_CODES = {
    SolveStatus.OPTIMAL: EXIT_OK,
    SolveStatus.INFEASIBLE: EXIT_INFEASIBLE,
    SolveStatus.DUAL_INFEASIBLE: EXIT_INFEASIBLE,
    SolveStatus.GAP_NOT_CERTIFIED: EXIT_GAP_NOT_CERTIFIED,
    SolveStatus.UNBOUNDED: EXIT_UNBOUNDED,
}


def configure_logging(level: Optional[str] = None):
    """stderr sink at the requested level, plus a rotating file sink when configured."""
    logger.remove()
    logger.add(sys.stderr, level=(level or settings.log_level).upper())
    if settings.log_file is not None:
        settings.ensure_directories()
        logger.add(str(settings.log_file), rotation="100 MB", retention="10 days", level="DEBUG")


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _write_output(text: str, output: Optional[str]):
    if output:
        Path(output).write_text(text, encoding="utf-8")
        logger.info(f"Wrote {output}")
    else:
        sys.stdout.write(text)


def _load_mclp(path: str) -> Tuple[ProblemData, Union[ProblemData, SclpData], str]:
    """(M-CLP, problem as parsed, file text); SCLP files are converted to their extension."""
    text = _read(path)
    parsed = parse_problem(text)
    if isinstance(parsed, SclpData):
        logger.info(f"{path}: SCLP {parsed!r}, solving its M-CLP extension")
        return sclp_to_mclp(parsed), parsed, text
    return parsed, parsed, text


def cmd_check(args) -> int:
    p, _, _ = _load_mclp(args.problem)
    primal = check_feasibility(p)
    dual = check_feasibility(dual_problem(p))
    print(f"feasible: {str(primal.feasible).lower()}")
    print(f"slater_primal: {_fmt(primal.strict_margin)}")
    print(f"dual_feasible: {str(dual.feasible).lower()}")
    print(f"slater_dual: {_fmt(dual.strict_margin)}")
    if not primal.feasible or not dual.feasible:
        return EXIT_INFEASIBLE
    for side, margin in (("primal", primal.strict_margin), ("dual", dual.strict_margin)):
        if margin <= settings.slater_warning_threshold:
            logger.warning(f"{side} Slater margin {margin:.3e} is at or below {settings.slater_warning_threshold:g}")
    if min(primal.strict_margin, dual.strict_margin) <= settings.tol_feas:
        return EXIT_NOT_STRICT
    return EXIT_OK


def _log_run(args, text: str, kind: str, report=None, error: Optional[str] = None):
    if args.no_log_run or not settings.run_log_enabled:
        return
    try:
        summary = report_summary(report) if report is not None else {}
        get_db_manager().log_solve(
            problem_path=str(Path(args.problem).resolve()),
            problem_hash=hash_text(text),
            kind=kind,
            status=summary.get("status"),
            v_low=summary.get("v_low"),
            v_high=summary.get("v_high"),
            certified_gap=summary.get("gap"),
            n_final=summary.get("n_final", 0),
            slater_primal=summary.get("slater_primal"),
            slater_dual=summary.get("slater_dual"),
            runtime=summary.get("runtime", 0.0),
            success=report is not None,
            error_message=error,
        )
    except Exception as e:
        logger.warning(f"Could not write run log: {e}")


def cmd_solve(args) -> int:
    p, parsed, text = _load_mclp(args.problem)
    kind = "sclp" if isinstance(parsed, SclpData) else "mclp"
    try:
        report = solve(p, tol=args.tol, n_max=args.max_n, workers=args.workers)
    except MclpError as e:
        _log_run(args, text, kind, error=str(e))
        raise
    _log_run(args, text, kind, report=report)

    logger.info(f"status {report.status.value}: [{_fmt(report.v_low)}, {_fmt(report.v_high)}], "
                f"gap {report.certified_gap:.3e}, N={report.n_final}, {report.runtime:.3f}s")
    if kind == "sclp" and report.primal is not None:
        try:
            sclp_solution = mclp_solution_to_sclp(parsed, report.primal)
            logger.info(f"SCLP objective {_fmt(sclp_solution.integral_objective)}")
        except AtomsPresent as e:
            logger.warning(f"Solution is not an SCLP solution: {e}")
    _write_output(serialize_solution(report), args.output)
    return STATUS_EXIT_CODES[report.status]


def cmd_eval(args) -> int:
    p, _, _ = _load_mclp(args.problem)
    primal, dual, _ = parse_solution(_read(args.solution))
    if primal is None:
        raise MclpError(f"{args.solution} has no primal measure")
    feasibility = check_feasible_measure(p, primal)
    print(f"objective: {_fmt(evaluate_objective(p, primal))}")
    print(f"feasible: {str(feasibility.feasible).lower()}")
    print(f"worst_violation: {_fmt(feasibility.worst_violation)}")
    if dual is not None:
        dual_feasibility = check_feasible_measure(dual_problem(p), dual)
        print(f"dual_objective: {_fmt(dual_objective(p, dual))}")
        print(f"dual_feasible: {str(dual_feasibility.feasible).lower()}")
        print(f"cs_residual: {_fmt(complementary_slackness_residual(p, primal, dual))}")
    return EXIT_OK if feasibility.feasible else EXIT_INFEASIBLE


def cmd_structure(args) -> int:
    p, _, _ = _load_mclp(args.problem)
    primal, dual, _ = parse_solution(_read(args.solution))
    if primal is None or dual is None:
        raise MclpError(f"{args.solution} needs both a primal and a dual measure")
    structure = detect_rate_structure(p, primal, dual, tol=args.tol)
    intervals = structure.intervals
    for interval in intervals:
        verdict = verify_rates_pair(p, interval, tol=args.tol)
        print(f"[{_fmt(interval.t_lo)}, {_fmt(interval.t_hi)}) "
              f"J={sorted(interval.support.J_set)} K={sorted(interval.support.K_set)} "
              f"slope={_fmt(interval.objective_slope)} rates_lp={'ok' if verdict else 'fail'}")
        for violation in verdict.violations:
            print(f"    {violation}")
    for cell in structure.transitions:
        print(f"transition [{_fmt(cell.t_lo)}, {_fmt(cell.t_hi)}) "
              f"u_atom={_fmt(float(cell.u_atom.sum()))} p_atom={_fmt(float(cell.p_atom.sum()))}")
    points = slope_change_points(p, intervals, tol=args.tol)
    print(f"slope_changes: {' '.join(_fmt(t) for t in points)}")
    print(f"nondegenerate_primal: {str(check_nondegeneracy(p.A, p.c_rate)).lower()}")
    print(f"nondegenerate_dual: {str(check_nondegeneracy(p.A.T, p.b_rate)).lower()}")
    return EXIT_OK


def cmd_convert_sclp(args) -> int:
    parsed = parse_problem(_read(args.problem))
    if not isinstance(parsed, SclpData):
        raise MclpError(f"{args.problem} is not an SCLP document")
    _write_output(serialize_problem(sclp_to_mclp(parsed)), args.output)
    return EXIT_OK


def cmd_trajectory(args) -> int:
    p, _, _ = _load_mclp(args.problem)
    primal, dual, _ = parse_solution(_read(args.solution))
    measure = primal if args.side == "primal" else dual
    if measure is None:
        raise MclpError(f"{args.solution} has no {args.side} measure")
    _write_output(emit_trajectory(p, measure, points=args.points, side=args.side), args.output)
    return EXIT_OK


def cmd_brackets(args) -> int:
    p, _, _ = _load_mclp(args.problem)
    print("N,v_low,v_high,gap")
    for n, low, high in value_brackets(p, args.n, workers=args.workers):
        print(f"{n},{_fmt(low)},{_fmt(high)},{_fmt(high - low)}")
    return EXIT_OK


def cmd_history(args) -> int:
    db_manager = get_db_manager()
    for record in db_manager.get_recent_solves(limit=args.limit):
        print(f"{record.timestamp:%Y-%m-%d %H:%M:%S} {record.status or 'error'} "
              f"v_low={record.v_low} v_high={record.v_high} N={record.n_final} "
              f"{record.runtime or 0.0:.3f}s {record.problem_path}")
    stats = db_manager.get_stats()
    print(f"total={stats['total_solves']} optimal={stats['optimal_solves']} "
          f"failed={stats['failed_solves']} average_runtime={stats['average_runtime']:.3f}s")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mclp", description="Solve M-CLP/M-CLP* pairs to a certified gap")
    parser.add_argument("--log-level", default=None, help="Log level for stderr (default: MCLP_LOG or INFO)")
    parser.add_argument("--no-log-run", action="store_true", help="Do not record solves in the run log")
    commands = parser.add_subparsers(dest="command", required=True)

    check = commands.add_parser("check", help="Feasibility and Slater margins")
    check.add_argument("problem")
    check.set_defaults(handler=cmd_check)

    solve_cmd = commands.add_parser("solve", help="Solve to a certified gap")
    solve_cmd.add_argument("problem")
    solve_cmd.add_argument("--tol", type=float, default=settings.default_tol)
    solve_cmd.add_argument(
        "--max-n", type=int, default=settings.default_max_n,
        help="Largest number of intervals. Each level holds a dense tableau of about "
             "8 * 3 * ((N+2) * max(K, J))^2 bytes, e.g. 3.6 GB at N=4096 with K=J=3",
    )
    solve_cmd.add_argument("--workers", type=int, default=settings.lp_workers)
    solve_cmd.add_argument("-o", "--output", default=None)
    solve_cmd.set_defaults(handler=cmd_solve)

    eval_cmd = commands.add_parser("eval", help="Objective and feasibility of a stored solution")
    eval_cmd.add_argument("problem")
    eval_cmd.add_argument("solution")
    eval_cmd.set_defaults(handler=cmd_eval)

    structure = commands.add_parser("structure", help="Rate intervals and non-degeneracy")
    structure.add_argument("problem")
    structure.add_argument("solution")
    structure.add_argument("--tol", type=float, default=settings.default_tol)
    structure.set_defaults(handler=cmd_structure)

    convert = commands.add_parser("convert-sclp", help="Write the M-CLP extension of an SCLP")
    convert.add_argument("problem")
    convert.add_argument("-o", "--output", default=None)
    convert.set_defaults(handler=cmd_convert_sclp)

    trajectory = commands.add_parser("trajectory", help="CSV of U(t) and x(t)")
    trajectory.add_argument("problem")
    trajectory.add_argument("solution")
    trajectory.add_argument("--points", type=int, default=100)
    trajectory.add_argument("--side", choices=("primal", "dual"), default="primal")
    trajectory.add_argument("-o", "--output", default=None)
    trajectory.set_defaults(handler=cmd_trajectory)

    brackets = commands.add_parser("brackets", help="V(dCLP1) and V(dCLP2) for several N")
    brackets.add_argument("problem")
    brackets.add_argument("--n", type=int, nargs="+", default=[1, 2, 4, 8, 16])
    brackets.add_argument("--workers", type=int, default=settings.lp_workers)
    brackets.set_defaults(handler=cmd_brackets)

    history = commands.add_parser("history", help="Recent solves from the run log")
    history.add_argument("--limit", type=int, default=20)
    history.set_defaults(handler=cmd_history)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)

    try:
        return args.handler(args)
    except (MclpError, ValueError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
