"""Run history: a SQLite log of CLI solves."""
import hashlib
from contextlib import contextmanager
from datetime import datetime
from pathlib import Path
from typing import List, Optional

from sqlalchemy import Column, DateTime, Float, Integer, String, Text, create_engine, func
from sqlalchemy.orm import Session, declarative_base, sessionmaker

from src.config import settings

Base = declarative_base()


class SolveRecord(Base):
    """One `solve` invocation and its outcome."""
    __tablename__ = "solve_runs"

    id = Column(Integer, primary_key=True, autoincrement=True)
    problem_path = Column(String(512), nullable=False)
    problem_hash = Column(String(64), index=True)  # SHA256 of the problem file
    kind = Column(String(16))  # "mclp" or "sclp"
    status = Column(String(32), index=True)
    v_low = Column(Float)
    v_high = Column(Float)
    certified_gap = Column(Float)
    n_final = Column(Integer, default=0)
    slater_primal = Column(Float)
    slater_dual = Column(Float)
    runtime = Column(Float)  # seconds
    timestamp = Column(DateTime, default=datetime.utcnow, index=True)
    success = Column(Integer, default=1)  # 1 = solver returned a report, 0 = error
    error_message = Column(Text)

    def __repr__(self):
        return f"<SolveRecord(id={self.id}, status={self.status}, time={self.timestamp})>"


def hash_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _finite(value: Optional[float]) -> Optional[float]:
    if value is None or value != value:
        return None
    return float(value)


class DatabaseManager:
    """Manager for the run-log database."""

    def __init__(self, db_path: Optional[Path] = None):
        self.db_path = db_path or settings.run_log_path
        self.engine = create_engine(f"sqlite:///{self.db_path}", echo=settings.debug)
        self.SessionLocal = sessionmaker(autocommit=False, autoflush=False, expire_on_commit=False,
                                         bind=self.engine)
        self._create_tables()

    def _create_tables(self):
        """Create all tables if they don't exist."""
        Base.metadata.create_all(bind=self.engine)

    @contextmanager
    def get_session(self) -> Session:
        """Context manager for database sessions."""
        session = self.SessionLocal()
        try:
            yield session
            session.commit()
        except Exception:
            session.rollback()
            raise
        finally:
            session.close()

    def log_solve(self, problem_path: str, problem_hash: Optional[str] = None, kind: str = "mclp",
                  status: Optional[str] = None, v_low: Optional[float] = None, v_high: Optional[float] = None,
                  certified_gap: Optional[float] = None, n_final: int = 0,
                  slater_primal: Optional[float] = None, slater_dual: Optional[float] = None,
                  runtime: float = 0.0, success: bool = True,
                  error_message: Optional[str] = None) -> SolveRecord:
        """Record one solve."""
        with self.get_session() as session:
            record = SolveRecord(
                problem_path=problem_path,
                problem_hash=problem_hash,
                kind=kind,
                status=status,
                v_low=_finite(v_low),
                v_high=_finite(v_high),
                certified_gap=_finite(certified_gap),
                n_final=n_final,
                slater_primal=_finite(slater_primal),
                slater_dual=_finite(slater_dual),
                runtime=runtime,
                success=1 if success else 0,
                error_message=error_message,
            )
            session.add(record)
            session.flush()
            session.refresh(record)
            return record

    def get_recent_solves(self, limit: int = 20) -> List[SolveRecord]:
        """Most recent solves first."""
        with self.get_session() as session:
            return (session.query(SolveRecord)
                    .order_by(SolveRecord.timestamp.desc(), SolveRecord.id.desc())
                    .limit(limit).all())

    def get_stats(self) -> dict:
        with self.get_session() as session:
            total = session.query(SolveRecord).count()
            optimal = session.query(SolveRecord).filter_by(status="optimal").count()
            failed = session.query(SolveRecord).filter_by(success=0).count()
            average_runtime = session.query(func.avg(SolveRecord.runtime)).scalar() or 0.0

            return {
                "total_solves": total,
                "optimal_solves": optimal,
                "failed_solves": failed,
                "average_runtime": float(average_runtime),
            }


_db_manager: Optional[DatabaseManager] = None


def get_db_manager() -> DatabaseManager:
    """Global run-log manager, created on first use."""
    global _db_manager
    if _db_manager is None:
        settings.ensure_directories()
        _db_manager = DatabaseManager()
    return _db_manager
