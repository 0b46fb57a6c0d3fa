"""
Results store for experiment grids.

Keeps one row per (cell, method, parameter) so an interrupted grid can be
resumed without recomputing finished cells.
"""

from sqlalchemy import create_engine, Column, Integer, String, Float, DateTime, Index
from sqlalchemy.orm import declarative_base, sessionmaker
from pathlib import Path
from typing import Iterable, List, Set
from datetime import datetime
import logging

from models.experiment import ResultRow, RunStatus

logger = logging.getLogger(__name__)

Base = declarative_base()


class ResultRowDB(Base):
    """Database model for one scored parameter."""

    __tablename__ = "result_rows"

    id = Column(Integer, primary_key=True)
    cell_key = Column(String, nullable=False, index=True)
    position = Column(Integer, nullable=False)  # order of the row within its (cell, method)

    variant = Column(String, nullable=False)
    method = Column(String, nullable=False)
    seed = Column(Integer, nullable=False)
    T = Column(Integer, nullable=False)
    N = Column(Integer, nullable=False)
    F = Column(Integer)
    xi = Column(Float)
    leader_frac = Column(Float)
    mu = Column(Float)

    param_name = Column(String, nullable=False)
    truth = Column(Float)
    estimate = Column(Float)
    error = Column(Float)
    wall_time_s = Column(Float, default=0.0)
    status = Column(String, nullable=False)

    created_at = Column(DateTime, default=datetime.utcnow)

    __table_args__ = (Index("ix_cell_method", "cell_key", "method"),)


class ResultsDatabase:
    """SQLite-backed store of grid results."""

    def __init__(self, db_path: Path):
        """
        Initialize database.

        Args:
            db_path: Path to SQLite database file
        """
        self.db_path = Path(db_path)
        self.engine = create_engine(f"sqlite:///{self.db_path}", echo=False)

        # Create tables
        Base.metadata.create_all(self.engine)

        # Create session factory
        self.Session = sessionmaker(bind=self.engine)

    def close(self):
        """Close database connection."""
        self.engine.dispose()

    # === Result Operations ===

    def replace_rows(self, cell_key: str, method: str, rows: Iterable[ResultRow]) -> int:
        """
        Store the rows of one method on one cell, dropping earlier attempts.

        Returns:
            Number of rows written
        """
        session = self.Session()
        try:
            session.query(ResultRowDB).filter_by(cell_key=cell_key, method=method).delete()
            count = 0
            for position, row in enumerate(rows):
                session.add(ResultRowDB(cell_key=cell_key, position=position, **row.to_dict()))
                count += 1
            session.commit()
            return count

        except Exception as e:
            session.rollback()
            logger.error(f"Error storing results for {cell_key} / {method}: {e}")
            raise
        finally:
            session.close()

    def completed_cells(self, methods: Iterable[str]) -> Set[str]:
        """Cell keys where every given method has rows and all of them are ok."""
        methods = set(methods)
        session = self.Session()
        try:
            seen = {}
            for cell_key, method, status in session.query(
                ResultRowDB.cell_key, ResultRowDB.method, ResultRowDB.status
            ):
                ok = seen.setdefault(cell_key, {})
                ok[method] = ok.get(method, True) and status == RunStatus.OK.value
            return {
                key for key, by_method in seen.items()
                if methods <= set(by_method) and all(by_method[m] for m in methods)
            }

        finally:
            session.close()

    def get_all_rows(self) -> List[ResultRow]:
        """All rows ordered by cell key, method and position."""
        session = self.Session()
        try:
            db_rows = (
                session.query(ResultRowDB)
                .order_by(ResultRowDB.cell_key, ResultRowDB.method, ResultRowDB.position)
                .all()
            )
            return [self._db_to_row(r) for r in db_rows]

        finally:
            session.close()

    def count_rows(self) -> int:
        session = self.Session()
        try:
            return session.query(ResultRowDB).count()
        finally:
            session.close()

    # === Conversion Helpers ===

    def _db_to_row(self, db_row: ResultRowDB) -> ResultRow:
        """Convert database row to model."""
        return ResultRow(
            variant=db_row.variant,
            method=db_row.method,
            seed=db_row.seed,
            T=db_row.T,
            N=db_row.N,
            F=db_row.F,
            xi=db_row.xi,
            leader_frac=db_row.leader_frac,
            mu=db_row.mu,
            param_name=db_row.param_name,
            truth=db_row.truth,
            estimate=db_row.estimate,
            error=db_row.error,
            wall_time_s=db_row.wall_time_s,
            status=db_row.status,
        )
