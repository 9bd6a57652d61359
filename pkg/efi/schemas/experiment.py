"""
Experiment Schemas

The YAML experiment file validated into one ExperimentConfig. Loading never
partially succeeds: any invalid field becomes a ConfigError listing every
offending field path.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from efi.core.errors import ConfigError
from efi.schemas.energy import EnergyConfig
from efi.schemas.network import NetworkShape
from efi.schemas.prior import MixturePrior
from efi.schemas.sampler import SamplerConfig, SchedulePhase

FamilyName = Literal[
    "linear_known_sigma",
    "linear_unknown_sigma",
    "gauss2",
    "logistic_binary",
    "logistic_multiclass",
    "ssl_logistic",
    "behrens_fisher",
    "bivariate_normal",
    "mediation",
]

MethodName = Literal[
    "efi",
    "ols",
    "efd",
    "gfi_ar",
    "welch",
    "hsu_scheffe",
    "behrens_fisher_mc",
    "bivariate_fiducial",
    "sobel",
    "maxp",
    "nls",
    "logistic_mle",
]


class FamilyConfig(BaseModel):
    """Model family and the truth used when simulating from it"""

    name: FamilyName
    p: int = Field(10, ge=1, description="Design columns, intercept included")
    sigma: Optional[float] = Field(None, ge=0.0, description="Known noise scale")
    n_classes: int = Field(3, ge=2)
    group_sizes: Optional[Tuple[int, int]] = Field(None, description="Behrens-Fisher n1, n2")
    truth: Optional[List[float]] = Field(None, description="Natural parameters for simulation")
    outlier_fraction: float = Field(0.0, ge=0.0, lt=1.0)
    outlier_shift: float = 4.0
    label_missing_fraction: float = Field(0.5, ge=0.0, lt=1.0)

    @field_validator("group_sizes")
    @classmethod
    def validate_group_sizes(cls, v: Optional[Tuple[int, int]]) -> Optional[Tuple[int, int]]:
        if v is not None and min(v) < 2:
            raise ValueError("each group needs at least 2 observations")
        return v


class RunConfig(BaseModel):
    burnin: int = Field(..., ge=0, description="K: iterations discarded before collection")
    iterations: int = Field(..., ge=0, description="M: iterations after burn-in")
    thin: int = Field(1, ge=1, description="B: collect every B-th post-burn-in iteration")


class ExperimentConfig(BaseModel):
    name: str = "experiment"
    family: FamilyConfig
    n: int = Field(..., ge=0, description="Observations per dataset")
    replicates: int = Field(1, ge=1)
    seed: int = Field(0, ge=0)
    network: NetworkShape
    energy: EnergyConfig
    schedule: List[SchedulePhase] = Field(..., min_length=1)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    prior: MixturePrior = Field(default_factory=MixturePrior)
    run: RunConfig
    methods: List[MethodName] = Field(default_factory=lambda: ["efi"])
    level: float = Field(0.95, gt=0.0, lt=1.0)
    threads: int = Field(1, ge=1)

    @field_validator("schedule", mode="before")
    @classmethod
    def wrap_single_schedule(cls, v: Any) -> Any:
        if isinstance(v, dict):
            return [v]
        return v

    @model_validator(mode="after")
    def check_phases(self) -> "ExperimentConfig":
        starts = [phase.start for phase in self.schedule]
        if starts[0] != 1:
            raise ValueError("the first schedule phase must start at iteration 1")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("schedule phase starts must be strictly increasing")
        return self

    @model_validator(mode="after")
    def check_lambda_ramp(self) -> "ExperimentConfig":
        ramp = self.sampler.tempering.lambda_ramp
        if ramp is not None and ramp.lambda0 > self.energy.lam:
            raise ValueError(
                f"lambda ramp must increase: lambda0={ramp.lambda0} exceeds lambda={self.energy.lam}"
            )
        return self


# ── Loading / dumping ─────────────────────────────────────────────────────


def _format_errors(exc: ValidationError) -> List[str]:
    lines = []
    for err in exc.errors():
        path = ".".join(str(part) for part in err["loc"]) or "<root>"
        lines.append(f"{path}: {err['msg']}")
    return lines


def parse_config(data: Dict[str, Any]) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("experiment config must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError("invalid experiment config", _format_errors(exc)) from exc


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    return parse_config(data)


def config_to_dict(config: ExperimentConfig) -> Dict[str, Any]:
    return config.model_dump(mode="json", by_alias=True)


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(config), sort_keys=False)


def config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
