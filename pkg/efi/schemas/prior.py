from pydantic import BaseModel, Field, model_validator


class MixturePrior(BaseModel):
    """Two-component Gaussian spike-and-slab prior applied independently to every weight"""

    rho: float = Field(1e-2, gt=0.0, lt=1.0, description="Slab mixing proportion")
    sigma0: float = Field(1e-5, gt=0.0, description="Spike standard deviation")
    sigma1: float = Field(0.02, gt=0.0, description="Slab standard deviation")
    enabled: bool = Field(True, description="False gives a flat prior on the weights")

    @model_validator(mode="after")
    def check_ordering(self) -> "MixturePrior":
        if not self.sigma0 < self.sigma1:
            raise ValueError("sigma0 must be strictly smaller than sigma1")
        return self
