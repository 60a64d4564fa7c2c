"""
Configuration module for the restart-FOM / MPC solver suite.

Uses Pydantic Settings to load and validate environment variables
(optionally from a .env file). Benchmark runs merge these defaults with
flat key-value config files and command-line overrides.
"""

from functools import lru_cache
from typing import List

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Solver-suite settings loaded from environment variables."""

    # Application
    app_name: str = Field(default="restart-fom-mpc")
    app_version: str = Field(default="1.0.0")
    debug: bool = Field(default=False)

    # Logging
    log_level: str = Field(default="INFO")
    log_rich_tracebacks: bool = Field(default=True)

    # First-order methods
    max_iterations: int = Field(default=1_000_000, ge=1, description="Iteration cap for every solver")
    fom_exit_at: str = Field(
        default="at_yk_minus1",
        description="Where FISTA-type methods evaluate the exit test (at_zk | at_yk_minus1)",
    )
    restart_fair_exit: bool = Field(
        default=True,
        description="Benchmarks stop every restart scheme at the first eps-optimal iterate",
    )
    fstar_tolerance: float = Field(default=1e-8, gt=0, description="Tolerance used to precompute f*")

    # MPC solvers
    mpc_tolerance: float = Field(default=1e-4, gt=0)
    admm_rho: float = Field(default=15.0, gt=0)
    mpct_big_m: float = Field(default=1e6, gt=0, description="Big-M bound on the free x0 block")
    mpct_margin: float = Field(default=1e-4, gt=0, description="Tightening of the artificial reference")
    riccati_tolerance: float = Field(default=1e-10, gt=0)
    riccati_max_iterations: int = Field(default=100_000, ge=1)

    # Harmonic MPC
    hmpc_rho: float = Field(default=1.0, gt=0)
    hmpc_sigma: float = Field(default=1e-6, gt=0)
    hmpc_tolerance: float = Field(default=1e-4, gt=0)
    hmpc_max_iterations: int = Field(default=20_000, ge=1)

    # Plants
    fd_step: float = Field(default=1e-5, gt=0, description="Central finite-difference step")
    closed_loop_samples: int = Field(default=50, ge=1)

    # Benchmarks
    default_seed: int = Field(default=20240917)
    default_instances: int = Field(default=100, ge=1)
    restart_schemes: List[str] = Field(
        default=["alg7_obj", "alg8_grad", "alg10_general", "lit_f", "lit_g", "lit_fstar"]
    )
    report_format: str = Field(default="csv")
    report_dir: str = Field(default="reports")

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    @field_validator("restart_schemes", mode="before")
    @classmethod
    def parse_restart_schemes(cls, v):
        """Parse restart schemes from comma-separated string or list."""
        if isinstance(v, str):
            return [scheme.strip() for scheme in v.split(",") if scheme.strip()]
        return v

    @field_validator("fom_exit_at")
    @classmethod
    def validate_exit_at(cls, v: str) -> str:
        """Only the two exit conventions of FISTA-type methods are accepted."""
        if v not in ("at_zk", "at_yk_minus1"):
            raise ValueError(f"fom_exit_at must be 'at_zk' or 'at_yk_minus1', got {v!r}")
        return v

    @property
    def is_debug(self) -> bool:
        """Check whether debug logging is requested."""
        return self.debug or self.log_level.upper() == "DEBUG"


@lru_cache()
def get_settings() -> Settings:
    """
    Get cached settings instance.

    Uses lru_cache to ensure settings are loaded only once.
    """
    return Settings()


# Create a global settings instance
settings = get_settings()
