from pydantic_settings import BaseSettings, SettingsConfigDict
from pathlib import Path


class Settings(BaseSettings):
    # Logging Settings
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    # Oracle Settings
    ORACLE_TOL: float = 1e-10
    ENABLE_CACHE: bool = True
    MAX_CACHE_SIZE: int = 64  # certificates

    # Simulation Settings
    WORKERS: int = 1
    LOG_EVERY: int = 1000  # stages between log rows
    CHECKPOINT_DIR: Path = Path.home() / ".markov_qlearn" / "checkpoints"
    OUTPUT_DIR: Path = Path("runs")

    # Game Generation Settings
    REJECTION_ATTEMPTS: int = 10_000
    KERNEL_FLOOR: float = 1e-3
    LOAD_RENORMALIZE_TOL: float = 1e-9

    model_config = SettingsConfigDict(
        env_prefix="MARKOV_QLEARN_",
        env_file=".env",
        env_file_encoding="utf-8",
    )


# Create settings instance
settings = Settings()
