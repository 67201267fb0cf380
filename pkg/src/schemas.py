"""Pydantic schemas for problem and solution documents."""
from typing import Annotated, List, Literal, Optional, Union

from pydantic import BaseModel, Field, TypeAdapter, field_validator, model_validator

Matrix = List[List[float]]


def _check_rectangular(rows: Matrix, allow_empty: bool = False) -> Matrix:
    if not rows:
        if allow_empty:
            return rows
        raise ValueError("matrix is empty")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"row {i + 1} length {len(row)} != {width}")
    return rows


def _check_length(name: str, values: List[float], expected: int):
    if len(values) != expected:
        raise ValueError(f"{name}: length {len(values)} != {expected}")


class MclpProblemFile(BaseModel):
    """M-CLP instance: max int (gamma + (T-t) c)'dU s.t. A U(t) <= beta + b t."""
    kind: Literal["mclp"] = "mclp"
    A: Matrix = Field(..., description="K x J constraint matrix, row-major")
    beta: List[float] = Field(..., description="Constant part of the right-hand side (length K)")
    b: List[float] = Field(..., description="Rate part of the right-hand side (length K)")
    gamma: List[float] = Field(..., description="Constant objective weights (length J)")
    c: List[float] = Field(..., description="Time-to-go objective weights (length J)")
    horizon: float = Field(..., gt=0, description="Time horizon T")

    @field_validator("A")
    @classmethod
    def rectangular(cls, rows: Matrix) -> Matrix:
        rows = _check_rectangular(rows)
        if not rows[0]:
            raise ValueError("matrix has no columns")
        return rows

    @model_validator(mode="after")
    def vector_lengths(self) -> "MclpProblemFile":
        K, J = len(self.A), len(self.A[0])
        _check_length("beta", self.beta, K)
        _check_length("b", self.b, K)
        _check_length("gamma", self.gamma, J)
        _check_length("c", self.c, J)
        return self


class SclpProblemFile(BaseModel):
    """SCLP instance; F, H, b and d may be empty."""
    kind: Literal["sclp"]
    G: Matrix = Field(default_factory=list, description="K1 x J1")
    F: Matrix = Field(default_factory=list, description="K1 x J2")
    H: Matrix = Field(default_factory=list, description="K2 x J1")
    alpha: List[float] = Field(default_factory=list, description="length K1")
    a: List[float] = Field(default_factory=list, description="length K1")
    b: List[float] = Field(default_factory=list, description="length K2")
    gamma: List[float] = Field(..., description="length J1")
    c: List[float] = Field(..., description="length J1")
    d: List[float] = Field(default_factory=list, description="length J2")
    horizon: float = Field(..., gt=0, description="Time horizon T")

    @field_validator("G", "F", "H")
    @classmethod
    def rectangular(cls, rows: Matrix) -> Matrix:
        return _check_rectangular(rows, allow_empty=True)

    @model_validator(mode="after")
    def block_shapes(self) -> "SclpProblemFile":
        K1, J1, J2, K2 = len(self.alpha), len(self.gamma), len(self.d), len(self.b)
        _check_length("a", self.a, K1)
        _check_length("c", self.c, J1)
        for name, rows, height, width in (("G", self.G, K1, J1), ("F", self.F, K1, J2), ("H", self.H, K2, J1)):
            if height * width == 0:
                if any(rows):
                    raise ValueError(f"{name}: expected an empty block")
                continue
            if len(rows) != height or len(rows[0]) != width:
                raise ValueError(f"{name}: shape {len(rows)}x{len(rows[0]) if rows else 0} != {height}x{width}")
        return self


ProblemDocument = Annotated[Union[MclpProblemFile, SclpProblemFile], Field(discriminator="kind")]
problem_adapter = TypeAdapter(ProblemDocument)


class MeasureBlock(BaseModel):
    """Measure: atoms at 0 and T, densities on the partition, optional interior atoms."""
    atom_start: List[float]
    partition: List[float]
    densities: Matrix = Field(..., description="N rows, one density vector per interval")
    atom_end: List[float]
    atom_times: List[float] = Field(default_factory=list)
    atom_masses: Matrix = Field(default_factory=list)


class SolutionFile(BaseModel):
    """Solve result; null Slater margins stand for +infinity."""
    kind: Literal["solution"] = "solution"
    status: str
    objective: Optional[float] = None
    v_low: Optional[float] = None
    v_high: Optional[float] = None
    gap: Optional[float] = None
    n_final: int = 0
    slater_primal: Optional[float] = None
    slater_dual: Optional[float] = None
    primal: Optional[MeasureBlock] = None
    dual: Optional[MeasureBlock] = None
