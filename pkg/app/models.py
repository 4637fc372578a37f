import json
import math
from enum import Enum
from pathlib import Path
from typing import Dict, Iterator, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.norms import ArrayLike, NormKind, as_vector

Vec = Tuple[float, ...]


def _finite_tuple(values, name: str) -> Vec:
    out = tuple(float(v) for v in values)
    if not out:
        raise ValueError(f"{name} has dimension 0")
    if not all(math.isfinite(v) for v in out):
        raise ValueError(f"{name} has non-finite entries")
    return out


class Hyperplane(BaseModel):
    """Linear classifier h(x) = +1 iff a^T x - b >= 0."""

    a: Vec
    b: float

    model_config = ConfigDict(frozen=True)

    @field_validator("a", mode="before")
    @classmethod
    def _check_a(cls, v):
        out = _finite_tuple(v, "a")
        if not any(out):
            raise ValueError("a must be nonzero")
        return out

    @field_validator("b")
    @classmethod
    def _check_b(cls, v):
        if not math.isfinite(v):
            raise ValueError("b must be finite")
        return v

    @classmethod
    def of(cls, a: ArrayLike, b: float) -> "Hyperplane":
        return cls(a=tuple(np.asarray(a, dtype=float).tolist()), b=float(b))

    @classmethod
    def from_params(cls, z: ArrayLike) -> "Hyperplane":
        z = np.asarray(z, dtype=float)
        return cls.of(z[:-1], z[-1])

    @property
    def dimension(self) -> int:
        return len(self.a)

    @property
    def weights(self) -> np.ndarray:
        return np.array(self.a)

    @property
    def params(self) -> np.ndarray:
        """(a, b) stacked into one vector of length p + 1"""
        return np.append(np.array(self.a), self.b)

    def margin(self, x: ArrayLike) -> float:
        x = as_vector(x, dim=self.dimension, name="x")
        return float(np.array(self.a) @ x - self.b)

    def scaled(self, factor: float) -> "Hyperplane":
        return Hyperplane.of(np.array(self.a) * factor, self.b * factor)


class RobustnessSpec(BaseModel):
    norm2: NormKind
    rho: float = Field(gt=0)

    model_config = ConfigDict(frozen=True)

    @field_validator("rho")
    @classmethod
    def _finite_rho(cls, v):
        if not math.isfinite(v):
            raise ValueError("rho must be finite")
        return v


class TieBreakPolicy(BaseModel):
    """Which optimal counterfactual to return when the optimal set is a face."""

    variant: Literal["vertex", "face_interior", "seeded"] = "vertex"
    theta: Optional[float] = None
    seed: Optional[int] = None

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="before")
    @classmethod
    def _parse(cls, data):
        if isinstance(data, str):
            return {"variant": data}
        return data

    @model_validator(mode="after")
    def _check(self):
        if self.variant == "face_interior":
            if self.theta is None or not 0.0 < self.theta < 1.0:
                raise ValueError("face_interior needs theta strictly inside (0, 1)")
        if self.variant == "seeded" and self.seed is None:
            raise ValueError("seeded policy needs a seed")
        return self

    @classmethod
    def vertex(cls) -> "TieBreakPolicy":
        return cls(variant="vertex")

    @classmethod
    def face_interior(cls, theta: float) -> "TieBreakPolicy":
        return cls(variant="face_interior", theta=theta)

    @classmethod
    def seeded(cls, seed: int) -> "TieBreakPolicy":
        return cls(variant="seeded", seed=seed)


class QueryKind(str, Enum):
    FACTUAL = "factual"
    CF = "cf"
    RCF = "rcf"


class QueryRecord(BaseModel):
    seq: int
    kind: QueryKind
    input: Vec
    output: Union[int, Vec]
    label: Optional[int] = None

    model_config = ConfigDict(frozen=True)

    @field_validator("input", mode="before")
    @classmethod
    def _check_input(cls, v):
        return _finite_tuple(v, "input")

    @model_validator(mode="after")
    def _check_output(self):
        if self.kind is QueryKind.FACTUAL:
            if self.output not in (-1, 1):
                raise ValueError("factual output must be -1 or +1")
        else:
            if isinstance(self.output, int) or len(self.output) != len(self.input):
                raise ValueError(f"{self.kind.value} output must be a vector of the input's dimension")
        if self.label is not None and self.label not in (-1, 1):
            raise ValueError("label must be -1, +1 or null")
        return self

    @property
    def x(self) -> np.ndarray:
        return np.array(self.input)

    @property
    def y(self) -> np.ndarray:
        return np.array(self.output, dtype=float)


class QueryLedger:
    """Ordered record of queries. One writer per ledger."""

    def __init__(self, records: Optional[List[QueryRecord]] = None):
        self.records: List[QueryRecord] = list(records or [])

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[QueryRecord]:
        return iter(self.records)

    def append(self, kind: QueryKind, x: np.ndarray, output, label: Optional[int] = None) -> QueryRecord:
        if isinstance(output, np.ndarray):
            output = tuple(output.tolist())
        record = QueryRecord(
            seq=len(self.records),
            kind=kind,
            input=tuple(np.asarray(x, dtype=float).tolist()),
            output=output,
            label=label,
        )
        self.records.append(record)
        return record

    def count(self, kind: QueryKind) -> int:
        return sum(1 for r in self.records if r.kind is kind)

    def counts(self) -> Dict[str, int]:
        return {kind.value: self.count(kind) for kind in QueryKind}

    def of_kind(self, kind: QueryKind) -> List[QueryRecord]:
        return [r for r in self.records if r.kind is kind]

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(r.model_dump(mode="json"), sort_keys=True) + "\n" for r in self.records
        )

    @classmethod
    def from_jsonl(cls, text: str) -> "QueryLedger":
        records = [
            QueryRecord.model_validate_json(line)
            for line in text.splitlines()
            if line.strip()
        ]
        return cls(records)

    def write_jsonl(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def read_jsonl(cls, path: Union[str, Path]) -> "QueryLedger":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


class RegionLabel(str, Enum):
    YES = "Yes"
    NO = "No"
    UNKNOWN = "Unknown"

    @property
    def code(self) -> str:
        return self.value[0]


class ModelKind(str, Enum):
    FACTUAL = "factual"
    CF = "cf"
    RCF = "rcf"


class Sense(str, Enum):
    LE = "<=0"
    EQ = "=0"
    GE = ">=0"


class LinearConstraint(BaseModel):
    """coeffs . (a, b) {<=, =, >=} 0"""

    coeffs: Vec
    sense: Sense
    source: str

    model_config = ConfigDict(frozen=True)


class NormConstraint(BaseModel):
    """a^T x - b + rho ||a||*_norm <= 0 (side "<=") or a^T x - b - rho ||a||*_norm >= 0 (side ">=").

    Equivalently: every point of the norm ball of radius rho around x lies on
    the given side of the hyperplane. `touch`, when set, is a point of the
    ball boundary known to lie on the hyperplane.
    """

    point: Vec
    radius: float = Field(gt=0)
    norm: NormKind
    side: Literal["<=", ">="]
    source: str
    touch: Optional[Vec] = None

    model_config = ConfigDict(frozen=True)


class SubgradientConstraint(BaseModel):
    """a lies in orientation * cone(subdifferential of ||.||_norm1 at direction)."""

    direction: Vec
    norm1: NormKind
    orientation: Literal[-1, 1]
    source: str

    model_config = ConfigDict(frozen=True)


class DualNormEquality(BaseModel):
    """a^T x - b + sign * rho * ||a||*_norm = 0, nonconvex unless linearizable."""

    point: Vec
    radius: float = Field(gt=0)
    norm: NormKind
    sign: Literal[-1, 1]
    subgradient: int
    relaxation: int
    source: str

    model_config = ConfigDict(frozen=True)


class RcfObservation(BaseModel):
    seq: int
    factual: Vec
    rcf: Vec
    label: Literal[-1, 1]
    norm1: NormKind
    spec: RobustnessSpec

    model_config = ConfigDict(frozen=True)


class UncertaintyModel(BaseModel):
    """Cone of parameter vectors (a, b) consistent with a query ledger."""

    kind: ModelKind
    dimension: int = Field(ge=1)
    linear_constraints: Tuple[LinearConstraint, ...] = ()
    norm_constraints: Tuple[NormConstraint, ...] = ()
    dualnorm_equalities: Tuple[DualNormEquality, ...] = ()
    subgradient_constraints: Tuple[SubgradientConstraint, ...] = ()
    observations: Tuple[RcfObservation, ...] = ()
    augmented: bool = False

    model_config = ConfigDict(frozen=True)

    @property
    def row_count(self) -> int:
        return (
            len(self.linear_constraints)
            + len(self.norm_constraints)
            + len(self.dualnorm_equalities)
            + len(self.subgradient_constraints)
        )
