"""Configuration settings for the Dicke scar toolkit"""

from functools import lru_cache
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-level settings read from the environment or a .env file"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="DICKESCAR_",
        case_sensitive=True,
        extra="ignore",
    )

    # Service info
    SERVICE_NAME: str = "dicke-scar"
    VERSION: str = "1.0.0"

    # Storage
    CACHE_DIR: str = "~/.cache/dicke-scar"
    OUTPUT_DIR: str = "./dicke-scar-out"

    # Worker threads for controller fan-out
    THREADS: int = 4

    # Convergence of the truncated Fock basis
    TAIL_TOL: float = 1e-8

    # Classical integration
    INTEGRATOR_TOL: float = 1e-12

    # Monte Carlo
    SHELL_SHARD_SIZE: int = 65536
    JACKKNIFE_GROUPS: int = 20

    # Husimi evaluation chunk (phase points per BLAS call)
    HUSIMI_CHUNK: int = 4096

    # Logging
    LOG_LEVEL: str = "INFO"


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance"""
    return Settings()
