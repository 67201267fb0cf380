"""Problem and solution documents (JSON) and trajectory CSV output."""
import csv
import io
import json
import math
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from loguru import logger
from pydantic import ValidationError

from src.errors import DimensionMismatch, ParseError, ProblemValidationError
from src.model import MeasureSolution, ProblemData, dual_problem, slack_many
from src.schemas import MclpProblemFile, MeasureBlock, SclpProblemFile, SolutionFile, problem_adapter
from src.sclp_bridge import SclpData
from src.solver_driver import SolveReport

PROBLEM_KINDS = ("mclp", "sclp")


def _load_json(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"line {e.lineno} column {e.colno}: {e.msg}") from e


def _format_validation_error(error: ValidationError) -> str:
    messages = []
    for item in error.errors():
        loc = [str(part) for part in item["loc"]]
        if loc and loc[0] in PROBLEM_KINDS:
            loc = loc[1:]
        msg = item["msg"]
        if msg.startswith("Value error, "):
            msg = msg[len("Value error, "):]
        messages.append(f"{'.'.join(loc)}: {msg}" if loc else msg)
    return "; ".join(messages)


def _finite_or_none(value: float) -> Optional[float]:
    return float(value) if value is not None and math.isfinite(value) else None


def parse_problem(text: str) -> Union[ProblemData, SclpData]:
    """Parse an "mclp" or "sclp" document; a missing kind means "mclp".

    Raises:
        ParseError: if the text is not a JSON object.
        ProblemValidationError: naming the offending field.
    """
    document = _load_json(text)
    if not isinstance(document, dict):
        raise ParseError(f"expected a JSON object, got {type(document).__name__}")
    document.setdefault("kind", "mclp")
    try:
        parsed = problem_adapter.validate_python(document)
    except ValidationError as e:
        raise ProblemValidationError(_format_validation_error(e)) from e

    if isinstance(parsed, SclpProblemFile):
        return SclpData(
            G=parsed.G, F=parsed.F, H=parsed.H,
            alpha=parsed.alpha, a=parsed.a, b=parsed.b,
            gamma=parsed.gamma, c=parsed.c, d=parsed.d,
            horizon=parsed.horizon,
        )
    return ProblemData(
        A=parsed.A,
        beta=parsed.beta,
        b_rate=parsed.b,
        gamma=parsed.gamma,
        c_rate=parsed.c,
        horizon=parsed.horizon,
    )


def serialize_problem(problem: Union[ProblemData, SclpData]) -> str:
    if isinstance(problem, SclpData):
        document = SclpProblemFile(
            kind="sclp",
            G=problem.G.tolist(), F=problem.F.tolist(), H=problem.H.tolist(),
            alpha=problem.alpha.tolist(), a=problem.a.tolist(), b=problem.b.tolist(),
            gamma=problem.gamma.tolist(), c=problem.c.tolist(), d=problem.d.tolist(),
            horizon=problem.horizon,
        )
    else:
        document = MclpProblemFile(
            A=problem.A.tolist(),
            beta=problem.beta.tolist(),
            b=problem.b_rate.tolist(),
            gamma=problem.gamma.tolist(),
            c=problem.c_rate.tolist(),
            horizon=problem.horizon,
        )
    return document.model_dump_json(indent=2) + "\n"


def measure_to_block(sol: MeasureSolution) -> MeasureBlock:
    return MeasureBlock(
        atom_start=sol.atom_start.tolist(),
        partition=sol.partition.tolist(),
        densities=sol.densities.tolist(),
        atom_end=sol.atom_end.tolist(),
        atom_times=sol.atom_times.tolist(),
        atom_masses=sol.atom_masses.tolist(),
    )


def block_to_measure(block: MeasureBlock) -> MeasureSolution:
    return MeasureSolution(
        atom_start=block.atom_start,
        partition=block.partition,
        densities=block.densities,
        atom_end=block.atom_end,
        atom_times=block.atom_times or None,
        atom_masses=block.atom_masses or None,
    )


def serialize_solution(report: SolveReport) -> str:
    """Solution document for a solve report; non-finite numbers are written as null."""
    document = SolutionFile(
        status=report.status.value,
        objective=_finite_or_none(report.objective),
        v_low=_finite_or_none(report.v_low),
        v_high=_finite_or_none(report.v_high),
        gap=_finite_or_none(report.certified_gap),
        n_final=report.n_final,
        slater_primal=_finite_or_none(report.slater_primal),
        slater_dual=_finite_or_none(report.slater_dual),
        primal=measure_to_block(report.primal) if report.primal is not None else None,
        dual=measure_to_block(report.dual) if report.dual is not None else None,
    )
    return document.model_dump_json(indent=2) + "\n"


def parse_solution(text: str) -> Tuple[Optional[MeasureSolution], Optional[MeasureSolution], SolutionFile]:
    """(primal, dual, document) from a solution document.

    Slater margins that are null in the document mean +infinity.
    """
    try:
        document = SolutionFile.model_validate(_load_json(text))
    except ValidationError as e:
        raise ProblemValidationError(_format_validation_error(e)) from e
    primal = block_to_measure(document.primal) if document.primal is not None else None
    dual = block_to_measure(document.dual) if document.dual is not None else None
    return primal, dual, document


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def emit_trajectory(p: ProblemData, sol: MeasureSolution, points: int = 100, side: str = "primal") -> str:
    """CSV of the cumulative control and the slack along [0, T].

    Rows sit on an even grid of `points` times plus every knot of the measure.
    Rows labelled "t-" hold left limits; they are written at 0, at T and at
    interior atoms so that every atom shows up as a jump. For side="dual" the
    measure is read in dual time against dual_problem(p).
    """
    if points < 2:
        raise ValueError(f"points must be >= 2, got {points}")
    if side not in ("primal", "dual"):
        raise ValueError(f"side must be 'primal' or 'dual', got {side!r}")
    problem = p if side == "primal" else dual_problem(p)
    if sol.dimension != problem.J:
        raise DimensionMismatch(f"{side} measure has dimension {sol.dimension}, expected {problem.J}")
    if abs(sol.horizon - problem.horizon) > 1e-12 * problem.horizon:
        raise DimensionMismatch(f"measure horizon {sol.horizon} differs from T={problem.horizon}")

    T = problem.horizon
    right = np.union1d(np.linspace(0.0, T, points), sol.knots())
    left = np.union1d([0.0, T], sol.atom_times)
    U_right, x_right = slack_many(problem, sol, right)
    U_left, x_left = slack_many(problem, sol, left, left=True)

    rows: List[Tuple[float, int, str, np.ndarray, np.ndarray]] = []
    rows += [(t, 0, _fmt(t) + "-", U, x) for t, U, x in zip(left, U_left, x_left)]
    rows += [(t, 1, _fmt(t), U, x) for t, U, x in zip(right, U_right, x_right)]
    rows.sort(key=lambda row: (row[0], row[1]))

    control, slack = ("U", "x") if side == "primal" else ("P", "q")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["t"] + [f"{control}_{j + 1}" for j in range(problem.J)]
                    + [f"{slack}_{k + 1}" for k in range(problem.K)])
    for _, _, label, U, x in rows:
        writer.writerow([label] + [_fmt(v) for v in U] + [_fmt(v) for v in x])
    logger.debug(f"Trajectory: {len(rows)} rows for the {side} measure")
    return buffer.getvalue()


def report_summary(report: SolveReport) -> Dict[str, Any]:
    """Headline numbers of a solve, for the CLI and the run log."""
    return {
        "status": report.status.value,
        "v_low": report.v_low,
        "v_high": report.v_high,
        "gap": report.certified_gap,
        "n_final": report.n_final,
        "slater_primal": report.slater_primal,
        "slater_dual": report.slater_dual,
        "runtime": report.runtime,
    }
