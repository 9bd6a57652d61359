"""
Sampler Schemas

Step-size schedules, tempering and the latent sampler choice.
"""

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Schedule(BaseModel):
    """Decaying step sizes: eps_k = C_eps/(c_eps + k^alpha), gamma_k = C_gamma/(c_gamma + k^beta)"""

    model_config = ConfigDict(frozen=True)

    C_eps: float = Field(..., gt=0.0)
    c_eps: float = Field(..., gt=0.0)
    alpha: float = Field(13.0 / 14.0, gt=0.0)
    C_gamma: float = Field(..., gt=0.0)
    c_gamma: float = Field(..., gt=0.0)
    beta: float = Field(4.0 / 7.0, gt=0.0)

    @model_validator(mode="after")
    def check_exponents(self) -> "Schedule":
        if not (self.beta <= self.alpha <= min(1.0, 2.0 * self.beta)):
            raise ValueError(
                f"schedule exponents must satisfy beta <= alpha <= min(1, 2*beta) "
                f"(got alpha={self.alpha}, beta={self.beta})"
            )
        return self


class SchedulePhase(Schedule):
    """A schedule that takes over from iteration ``start`` (1-based, inclusive)"""

    start: int = Field(1, ge=1)


class LambdaRamp(BaseModel):
    lambda0: float = Field(..., gt=0.0)
    iterations: int = Field(..., ge=1, description="Iterations to reach the target lambda")


class TemperingPlan(BaseModel):
    kind: Literal["constant", "geometric"] = "constant"
    tau: float = Field(1.0, ge=0.0, description="Constant temperature")
    T0: float = Field(100.0, gt=0.0)
    decay: float = Field(0.9999, gt=0.0, le=1.0)
    floor: float = Field(1.0, ge=1.0)
    zeta: float = Field(1.0, gt=0.0, le=1.0, description="SGHMC momentum decay")
    lambda_ramp: Optional[LambdaRamp] = None


class SamplerConfig(BaseModel):
    algorithm: Literal["sgld", "sghmc"] = "sgld"
    tempering: TemperingPlan = Field(default_factory=TemperingPlan)
    minibatch_size: Optional[int] = Field(None, ge=1, description="None means full batch")
    scale_by_n: bool = Field(
        True, description="Apply the schedule as eps_k/n and gamma_k/n per update"
    )
    log_every: int = Field(1000, ge=1)
    latent_snapshots: int = Field(1, ge=0, description="Number of final latent imputations kept")
