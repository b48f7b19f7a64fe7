"""
Process-level settings (from the environment / .env) and logging setup
"""
import logging
import os
import sys

from dotenv import load_dotenv
from pydantic import BaseModel, Field

load_dotenv()


class Settings(BaseModel):
    data_dir: str = Field(default="data", description="Root directory for stored results")
    workers: int = Field(default=1, ge=1, description="Worker processes for batch plans")
    log_level: str = Field(default="INFO", description="Logging level name")
    oracle_budget: int = Field(default=10**8, ge=1, description="Max joint profiles the brute-force oracle may enumerate")


def get_settings() -> Settings:
    return Settings(
        data_dir=os.getenv("CRN_DATA_DIR", "data"),
        workers=int(os.getenv("CRN_WORKERS", "1")),
        log_level=os.getenv("CRN_LOG_LEVEL", "INFO"),
        oracle_budget=int(float(os.getenv("CRN_ORACLE_BUDGET", "1e8"))),
    )


def configure_logging(level: str = None) -> None:
    """Bracket-prefixed component logs, e.g. ``[Dynamics] INFO converged after 412 steps``"""
    logging.basicConfig(
        stream=sys.stdout,
        level=(level or get_settings().log_level).upper(),
        format="[%(name)s] %(levelname)s %(message)s",
        force=True,
    )
