"""Configuration management for the M-CLP solver."""
import os
from pathlib import Path
from typing import Optional
from pydantic_settings import BaseSettings
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


class Settings(BaseSettings):
    """Solver settings loaded from environment variables."""

    # Logging
    log_level: str = os.getenv("MCLP_LOG", "INFO").upper()
    log_file: Optional[Path] = Path(os.environ["MCLP_LOG_FILE"]) if os.getenv("MCLP_LOG_FILE") else None

    # Driver defaults
    default_tol: float = float(os.getenv("MCLP_TOL", "1e-6"))
    default_max_n: int = int(os.getenv("MCLP_MAX_N", "4096"))
    lp_workers: int = int(os.getenv("MCLP_LP_WORKERS", "1"))

    # LP tolerances (relative; scaled by 1 + magnitude at the call site)
    tol_feas: float = float(os.getenv("MCLP_TOL_FEAS", "1e-9"))
    tol_obj: float = float(os.getenv("MCLP_TOL_OBJ", "1e-8"))
    pivot_tol: float = float(os.getenv("MCLP_PIVOT_TOL", "1e-10"))
    bland_degenerate_factor: int = int(os.getenv("MCLP_BLAND_FACTOR", "3"))
    lp_max_iterations: int = int(os.getenv("MCLP_LP_MAX_ITER", "200000"))
    tableau_warning_gb: float = float(os.getenv("MCLP_TABLEAU_WARN_GB", "2"))

    # Measure and structure thresholds
    slater_warning_threshold: float = float(os.getenv("MCLP_SLATER_WARN", "1e-7"))
    atom_tolerance: float = float(os.getenv("MCLP_ATOM_TOL", "1e-7"))
    support_threshold: float = float(os.getenv("MCLP_SUPPORT_THRESHOLD", "1e-7"))
    rate_merge_floor: float = float(os.getenv("MCLP_RATE_MERGE_FLOOR", "1e-8"))
    extension_tol: float = float(os.getenv("MCLP_EXTENSION_TOL", "1e-7"))

    # Non-degeneracy check
    nondegeneracy_rank_tol: float = float(os.getenv("MCLP_RANK_TOL", "1e-10"))
    nondegeneracy_precheck: int = int(os.getenv("MCLP_NONDEG_PRECHECK", "20"))
    nondegeneracy_max_columns: int = int(os.getenv("MCLP_NONDEG_MAX_COLUMNS", "12"))
    nondegeneracy_seed: int = int(os.getenv("MCLP_NONDEG_SEED", "0"))

    # Run history
    run_log_enabled: bool = os.getenv("MCLP_RUN_LOG", "true").lower() == "true"
    run_log_path: Path = Path(os.getenv("MCLP_RUN_LOG_PATH", "./storage/runs.db"))
    debug: bool = os.getenv("DEBUG", "false").lower() == "true"

    class Config:
        env_file = ".env"
        case_sensitive = False
        env_prefix = "MCLP_"
        extra = "ignore"

    def ensure_directories(self):
        """Create directories for the run log and log file if they don't exist."""
        self.run_log_path.parent.mkdir(parents=True, exist_ok=True)
        if self.log_file is not None:
            self.log_file.parent.mkdir(parents=True, exist_ok=True)


# Global settings instance
settings = Settings()
