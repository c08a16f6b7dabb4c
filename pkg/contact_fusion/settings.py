# contact_fusion/settings.py

import os
import logging
from pathlib import Path

from dotenv import load_dotenv
from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

logger = logging.getLogger(__name__)

# Define project root and .env path
PROJECT_ROOT = Path(__file__).parent.parent
DOTENV_PATH = PROJECT_ROOT / '.env'

if DOTENV_PATH.exists():
    load_dotenv(DOTENV_PATH)
    logger.debug(f"Loaded .env file from {DOTENV_PATH}")

LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


class Settings(BaseSettings):
    """Process-wide settings read from CONTACT_FUSION_* environment variables."""
    model_config = SettingsConfigDict(env_prefix="CONTACT_FUSION_", extra="ignore")

    # --- Logging ---
    LOG: str = "warn"

    # --- Evaluation ---
    JOBS: int = 0  # 0 means one worker per logical core

    # --- Outputs ---
    OUTPUT_ROOT: Path = PROJECT_ROOT / "runs"
    TOOL_VERSION: str = "0.3.0"

    @field_validator("LOG", mode="before")
    @classmethod
    def normalise_log_level(cls, v):
        value = str(v).strip().lower()
        if value == "warning":
            value = "warn"
        if value not in LOG_LEVELS:
            logger.warning(f"Unknown CONTACT_FUSION_LOG value '{v}', falling back to 'warn'.")
            return "warn"
        return value

    @property
    def log_level(self) -> int:
        return LOG_LEVELS[self.LOG]

    @property
    def default_jobs(self) -> int:
        if self.JOBS > 0:
            return self.JOBS
        return os.cpu_count() or 1


settings = Settings()
