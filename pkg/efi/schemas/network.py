"""
Network Schemas

Shape of the inverse network that maps (observation, covariates, latent) to a
per-observation parameter estimate.
"""

from typing import Literal, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

Activation = Literal["relu", "tanh", "sigmoid", "softplus"]


class NetworkShape(BaseModel):
    """Fully connected widths L0, ..., LH; the output layer is linear"""

    model_config = ConfigDict(frozen=True)

    layer_widths: Tuple[int, ...] = Field(..., min_length=2, description="L0 (input) to LH (output)")
    activation: Activation = "relu"
    standardize_inputs: bool = Field(
        False, description="Center/scale data columns and map latents through the base CDF"
    )

    @field_validator("layer_widths")
    @classmethod
    def validate_widths(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(int(width) < 1 for width in v):
            raise ValueError("every layer width must be >= 1")
        return tuple(int(width) for width in v)

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    @property
    def input_width(self) -> int:
        return self.layer_widths[0]

    @property
    def output_width(self) -> int:
        return self.layer_widths[-1]

    @property
    def n_params(self) -> int:
        widths = self.layer_widths
        return sum(widths[h] * widths[h - 1] + widths[h] for h in range(1, len(widths)))
