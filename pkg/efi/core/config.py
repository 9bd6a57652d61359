from typing import Any, Literal, Tuple, Type

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        case_sensitive=True,
        extra="ignore",
    )

    # Project
    PROJECT_NAME: str = "efi-engine"
    VERSION: str = "0.1.0"

    # Logging
    LOG_LEVEL: str = "INFO"

    # Execution
    DEFAULT_THREADS: int = Field(1, ge=1)
    DEFAULT_OUT_DIR: str = "efi-out"

    # Interval reporting: linear interpolation between order statistics
    QUANTILE_METHOD: Literal["linear"] = "linear"

    @field_validator("LOG_LEVEL", mode="before")
    @classmethod
    def normalize_log_level(cls, v: Any) -> str:
        if not v:
            return "INFO"
        return str(v).upper()

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: Type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        # Only explicit arguments; the environment never changes a run.
        return (init_settings,)


settings = Settings()
