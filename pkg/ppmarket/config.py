"""
Configuration management for ppmarket.

This module loads defaults from environment variables or a .env file:
ledger block formation, simulator calibration constants and run settings.
"""
import os
import logging
from typing import Optional, Dict, Any, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator

# Configure logging
logger = logging.getLogger(__name__)

# Load environment variables from .env file
load_dotenv()


def _env_int(name: str, default: int) -> int:
    return int(os.environ.get(name, str(default)))


def _env_optional_int(name: str) -> Optional[int]:
    value = os.environ.get(name)
    if value is None or value.strip() == "":
        return None
    return int(value)


class LedgerConfig(BaseModel):
    """Block formation settings for ledger-core."""
    block_size: int = Field(default_factory=lambda: _env_int("PPMARKET_BLOCK_SIZE", 500))
    block_timeout_ms: int = Field(default_factory=lambda: _env_int("PPMARKET_BLOCK_TIMEOUT_MS", 1000))
    # Carried verbatim, never interpreted
    formation_policy: str = Field(
        default_factory=lambda: os.environ.get("PPMARKET_BLOCK_FORMATION_POLICY", "2:3:1")
    )

    @field_validator("block_size", "block_timeout_ms")
    @classmethod
    def validate_positive(cls, v):
        """Block limits must be positive."""
        if v <= 0:
            raise ValueError("must be positive")
        return v


class SimConfig(BaseModel):
    """Calibration constants of the network simulator."""
    orderer_rate: float = Field(default_factory=lambda: float(os.environ.get("PPMARKET_ORDERER_RATE", "1200")))
    endorsement_rate: float = Field(
        default_factory=lambda: float(os.environ.get("PPMARKET_ENDORSEMENT_RATE", "3300"))
    )
    total_txs: int = Field(default_factory=lambda: _env_int("PPMARKET_TOTAL_TXS", 100_000))
    runs: int = Field(default_factory=lambda: _env_int("PPMARKET_RUNS", 30))
    intra_dc_ms: Tuple[float, float] = (1.0, 10.0)
    inter_dc_ms: Tuple[float, float] = (300.0, 3000.0)

    @field_validator("orderer_rate", "endorsement_rate")
    @classmethod
    def validate_rate(cls, v):
        """Service rates must be positive."""
        if v <= 0:
            raise ValueError("rate must be positive")
        return v


class RunConfig(BaseModel):
    """Settings shared by every CLI command."""
    seed: Optional[int] = Field(default_factory=lambda: _env_optional_int("PPMARKET_SEED"))
    log_level: str = Field(default_factory=lambda: os.environ.get("LOG_LEVEL", "INFO"))
    out_dir: str = Field(default_factory=lambda: os.environ.get("PPMARKET_OUT", "out"))

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v):
        """Normalize the level name."""
        v = v.upper()
        if v not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"unknown log level {v}")
        return v


class Config:
    """Global configuration manager."""

    def __init__(self):
        self.ledger = LedgerConfig()
        self.sim = SimConfig()
        self.run = RunConfig()

    def validate(self) -> bool:
        """Check cross-field constraints the section models cannot see."""
        ok = True
        for name, (lo, hi) in (("intra_dc_ms", self.sim.intra_dc_ms), ("inter_dc_ms", self.sim.inter_dc_ms)):
            if lo < 0 or lo > hi:
                logger.error(f"Invalid link latency range {name}: ({lo}, {hi})")
                ok = False
        if self.sim.runs < 1 or self.sim.total_txs < 1:
            logger.error("Simulator runs and total_txs must be at least 1")
            ok = False
        return ok

    def resolve_seed(self, file_seed: int, flag_seed: Optional[int] = None) -> int:
        """Pick the effective seed: CLI flag, then PPMARKET_SEED, then the config file."""
        if flag_seed is not None:
            return flag_seed
        if self.run.seed is not None:
            return self.run.seed
        return file_seed

    def as_dict(self) -> Dict[str, Any]:
        """Convert config to a plain dictionary (written next to run artifacts)."""
        return {
            "ledger": self.ledger.model_dump(),
            "sim": self.sim.model_dump(),
            "run": self.run.model_dump(),
        }


# Global configuration instance
config = Config()
