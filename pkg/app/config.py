from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import BaseModel, Field, field_validator
from typing import Optional


class Tolerance(BaseModel):
    """Absolute-plus-relative tolerance used for every numerical comparison"""

    abs: float = 1e-9
    rel: float = 1e-9

    model_config = {"frozen": True}

    def bound(self, scale: float = 1.0) -> float:
        return self.abs + self.rel * abs(scale)

    def close(self, x: float, y: float, scale: Optional[float] = None) -> bool:
        if scale is None:
            scale = max(abs(x), abs(y))
        return abs(x - y) <= self.bound(scale)


class Settings(BaseSettings):
    # Environment
    APP_NAME: str = "cfextract"
    APP_VERSION: str = "1.0.0"

    # Execution
    WORKERS: int = Field(default=1, ge=1, description="Number of worker processes for trials and raster cells")
    TOOL_SEED: Optional[int] = Field(default=None, description="Overrides the scenario seed when set")

    # Numerics
    ABS_TOL: float = Field(default=1e-9, gt=0, description="Absolute tolerance")
    REL_TOL: float = Field(default=1e-9, ge=0, description="Relative tolerance")
    RANK_TOL: float = Field(default=1e-10, gt=0, description="Singular values below RANK_TOL * s_max count as zero")
    GS_TOL: float = Field(default=1e-12, gt=0, description="Gram-Schmidt residual threshold relative to candidate norm")

    # Regions
    REGION_EPSILON: float = Field(default=1e-7, gt=0, description="Margin realizing strict inequalities in region tests")
    SOLVER: str = Field(default="CLARABEL", description="cvxpy solver for conic programs")
    SAMPLER_TOL: float = Field(default=1e-9, gt=0, description="Constraint slack accepted by the hyperplane sampler")
    SAMPLER_BATCH: int = Field(default=20000, ge=1, description="Proposals drawn per sampler batch")
    MAX_PROPOSALS: int = Field(default=10_000_000, ge=1, description="Sampler proposal limit")

    # Oracle
    BALL_SAMPLES: int = Field(default=1000, ge=1, description="Samples used to verify robust counterfactual balls")

    # Logging
    LOG_LEVEL: str = Field(default="INFO", description="Logging level")
    LOG_FILE: Optional[str] = Field(default=None, description="Log file path")

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )

    @field_validator('LOG_LEVEL')
    @classmethod
    def validate_log_level(cls, v):
        allowed_levels = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']
        if v.upper() not in allowed_levels:
            raise ValueError(f'LOG_LEVEL must be one of {allowed_levels}')
        return v.upper()

    @property
    def tolerance(self) -> Tolerance:
        return Tolerance(abs=self.ABS_TOL, rel=self.REL_TOL)

    def effective_seed(self, config_seed: int) -> int:
        """TOOL_SEED wins over the scenario seed"""
        return self.TOOL_SEED if self.TOOL_SEED is not None else config_seed


settings = Settings()
