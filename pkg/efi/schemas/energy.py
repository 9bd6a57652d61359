from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

EnergyVariant = Literal["efi_default", "efi_a"]
ZCoupling = Literal["exact", "frozen_mean"]
DiscrepancyKind = Literal[
    "normal_regression", "logistic_binary", "logistic_multiclass", "ssl_logistic"
]


class EnergyConfig(BaseModel):
    """Penalized fitting energy over imputed latents and network weights"""

    model_config = ConfigDict(populate_by_name=True)

    variant: EnergyVariant = Field(
        "efi_default", description="efi_default evaluates the fit at the mean estimate"
    )
    eta: float = Field(..., ge=0.0, description="Weight of the consistency penalty")
    lam: float = Field(..., gt=0.0, alias="lambda", description="Inverse temperature on the energy")
    z_coupling: ZCoupling = Field(
        "exact", description="Whether the latent gradient differentiates through the mean estimate"
    )
    discrepancy: Optional[DiscrepancyKind] = Field(
        None, description="Defaults to the model family's discrepancy"
    )
    tau: float = Field(1.0 / 50.0, gt=0.0, description="Soft-label sharpness for missing labels")
