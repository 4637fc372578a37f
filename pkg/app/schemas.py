from datetime import datetime, timezone
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models import Hyperplane, ModelKind, RobustnessSpec, TieBreakPolicy
from app.norms import NormKind


class AttackKind(str, Enum):
    CF_DIFF = "cf-diff"
    CF_NONDIFF = "cf-nondiff"
    RCF_DIFF = "rcf-diff"
    RCF_NONDIFF = "rcf-nondiff"

    @property
    def robust(self) -> bool:
        return self in (AttackKind.RCF_DIFF, AttackKind.RCF_NONDIFF)

    @property
    def differentiable(self) -> bool:
        return self in (AttackKind.CF_DIFF, AttackKind.RCF_DIFF)


class DegeneratePath(str, Enum):
    NONE = "none"
    ZERO_CF = "zero_cf"
    BOUNDARY_FACTUAL = "boundary_factual"


class HiddenFamily(str, Enum):
    GENERIC = "generic"
    TIED = "tied"
    SPARSE = "sparse"


class ExtractionReport(BaseModel):
    attack: AttackKind
    recovered: Hyperplane
    queries_cf: int = Field(ge=0)
    queries_rcf: int = Field(ge=0)
    queries_factual: int = Field(ge=0)
    equivalence_residual: float = Field(ge=0)
    equivalent: bool
    orientation_flipped: bool = False
    degenerate_path: DegeneratePath = DegeneratePath.NONE
    agreement: Optional[float] = Field(default=None, ge=0, le=1)
    notes: List[str] = []


class RasterConfig(BaseModel):
    lo: Tuple[float, float]
    hi: Tuple[float, float]
    resolution: int = Field(default=200, ge=2)

    @model_validator(mode="after")
    def _check_box(self):
        if not (self.lo[0] < self.hi[0] and self.lo[1] < self.hi[1]):
            raise ValueError("raster bbox needs lo < hi in both coordinates")
        return self


class ScenarioConfig(BaseModel):
    """One experiment. Read from a single JSON document."""

    dimension: int = Field(alias="p", ge=1)
    model: Optional[Hyperplane] = None
    hidden: HiddenFamily = HiddenFamily.GENERIC
    norm1: NormKind
    robustness: Optional[RobustnessSpec] = Field(default=None, alias="spec")
    tiebreak: TieBreakPolicy = TieBreakPolicy.vertex()
    attack: AttackKind = AttackKind.CF_NONDIFF
    trials: int = Field(default=1, ge=1)
    seed: int = 0
    raster: Optional[RasterConfig] = None
    samples: int = Field(default=0, ge=0, description="Sampler cross-check size for region runs")
    augment: bool = Field(default=False, description="Add perspective points to robust models")

    model_config = ConfigDict(populate_by_name=True)

    @model_validator(mode="after")
    def _check(self):
        if self.model is not None and self.model.dimension != self.dimension:
            raise ValueError(f"model has dimension {self.model.dimension}, config says {self.dimension}")
        if self.attack.robust and self.robustness is None:
            raise ValueError(f"attack {self.attack.value} needs a robustness spec")
        if self.attack.differentiable and not self.norm1.differentiable:
            raise ValueError(f"attack {self.attack.value} needs a differentiable norm1, got {self.norm1}")
        return self


class BudgetRow(BaseModel):
    query_type: str
    expected_per_trial: int
    expected_total: int
    observed_total: int
    trials_checked: int

    @property
    def matches(self) -> bool:
        return self.expected_total == self.observed_total


class RegionSummary(BaseModel):
    name: str
    kind: ModelKind
    rows: int
    relaxed: bool
    yes_cells: int = 0
    no_cells: int = 0
    unknown_cells: int = 0
    unknown_outside_band: Optional[int] = None
    raster_path: Optional[str] = None
    acceptance_rate: Optional[float] = None
    soundness_violations: Optional[int] = None


class RunReport(BaseModel):
    command: str
    seed: Optional[int] = None
    config: Optional[ScenarioConfig] = None
    trials: List[ExtractionReport] = []
    budget: List[BudgetRow] = []
    counts: Dict[str, int] = {}
    regions: List[RegionSummary] = []
    raster_paths: List[str] = []
    failures: List[str] = []
    passed: bool = True
    generated_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
