from pydantic_settings import BaseSettings
from pydantic import Field, ConfigDict
from typing import Optional


class Settings(BaseSettings):
    model_config = ConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )

    # Concurrency settings
    threads: int = Field(default=1, ge=1, alias="HAZARDKAN_THREADS")

    # Numerical settings
    hidden_grid_bound: float = Field(default=2.0, gt=0.0)
    evaluation_chunk_rows: int = Field(default=50000, ge=1000)

    # Output settings
    output_precision: int = Field(default=17, ge=1, le=17)
    show_progress: bool = False

    # Logging settings
    log_level: str = "INFO"
    log_file: Optional[str] = "./logs/hazard_kan.log"

    # App settings
    app_name: str = "Hazard KAN Survival Engine"
    app_version: str = "1.0.0"

    @property
    def float_format(self) -> str:
        return f"%.{self.output_precision}g"


settings = Settings()
