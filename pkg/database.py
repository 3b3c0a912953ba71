# database.py - optional run ledger

from sqlalchemy import create_engine, Column, String, DateTime, Text, Float, Integer
from sqlalchemy.orm import declarative_base, sessionmaker
from datetime import datetime
from typing import Any, Dict, List, Optional
import json
import logging
import uuid

from config import DATABASE_URL

# Configure logging
logger = logging.getLogger(__name__)

Base = declarative_base()
engine = None
SessionLocal = None


class RunRecord(Base):
    __tablename__ = "ehd_runs"

    id = Column(String(36), primary_key=True, default=lambda: str(uuid.uuid4()), index=True)
    status = Column(String(16), nullable=False)
    command = Column(String(16), nullable=False, default="simulate")
    preset = Column(String(32), nullable=True)
    mode = Column(String(16), nullable=True)
    nx = Column(Integer, nullable=True)
    ny = Column(Integer, nullable=True)
    dt = Column(Float, nullable=True)
    t_end = Column(Float, nullable=True)

    # Outcome
    steps = Column(Integer, default=0)
    final_time = Column(Float, nullable=True)
    k_initial = Column(Float, nullable=True)
    k_final = Column(Float, nullable=True)
    dist_sq_final = Column(Float, nullable=True)
    error = Column(Text, nullable=True)

    # Metadata
    started_at = Column(DateTime, nullable=True)
    finished_at = Column(DateTime, nullable=True)
    manifest = Column(Text, nullable=False)
    created_at = Column(DateTime, default=datetime.utcnow)


def configure_database(url: Optional[str]) -> bool:
    """Bind the ledger to ``url``; None disables it."""
    global engine, SessionLocal
    if not url:
        engine = None
        SessionLocal = None
        return False
    engine = create_engine(url)
    SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
    return True


def is_configured() -> bool:
    return SessionLocal is not None


def init_db():
    if engine is None:
        logger.info("No run ledger configured; skipping database initialization.")
        return
    try:
        Base.metadata.create_all(bind=engine)
        logger.info("Database initialization complete.")
    except Exception as e:
        logger.error(f"Database initialization error: {e}")


def _parse_time(value: Optional[str]) -> Optional[datetime]:
    if not value:
        return None
    try:
        return datetime.fromisoformat(value)
    except ValueError:
        return None


def record_run(manifest: Dict[str, Any]) -> Optional[str]:
    """Store a run manifest; returns the run id, or None when the ledger is off or the write fails."""
    if SessionLocal is None:
        return None
    db = SessionLocal()
    try:
        config = manifest.get('config') or {}
        summary = manifest.get('summary') or {}
        error = manifest.get('error')
        run = RunRecord(
            id=manifest.get('run_id') or str(uuid.uuid4()),
            status=manifest.get('status', 'unknown'),
            command=manifest.get('command', 'simulate'),
            preset=config.get('preset'),
            mode=config.get('mode'),
            nx=config.get('nx'),
            ny=config.get('ny'),
            dt=config.get('dt'),
            t_end=config.get('t_end'),
            steps=summary.get('steps', 0),
            final_time=summary.get('final_time'),
            k_initial=summary.get('k_initial'),
            k_final=summary.get('k_final'),
            dist_sq_final=summary.get('dist_sq_final'),
            error=json.dumps(error) if error else None,
            started_at=_parse_time(manifest.get('started_at')),
            finished_at=_parse_time(manifest.get('finished_at')),
            manifest=json.dumps(manifest, default=str),
        )
        db.add(run)
        db.commit()
        logger.info(f"Recorded run {run.id} ({run.status}) in the ledger")
        return run.id
    except Exception as e:
        logger.error(f"Error recording run: {e}")
        db.rollback()
        return None
    finally:
        db.close()


def _to_dict(run: RunRecord) -> Dict[str, Any]:
    return {
        'id': run.id,
        'status': run.status,
        'command': run.command,
        'preset': run.preset,
        'mode': run.mode,
        'nx': run.nx,
        'ny': run.ny,
        'dt': run.dt,
        't_end': run.t_end,
        'steps': run.steps or 0,
        'final_time': run.final_time,
        'k_initial': run.k_initial,
        'k_final': run.k_final,
        'dist_sq_final': run.dist_sq_final,
        'error': json.loads(run.error) if run.error else None,
        'started_at': run.started_at.isoformat() if run.started_at else None,
        'finished_at': run.finished_at.isoformat() if run.finished_at else None,
        'created_at': run.created_at.isoformat() if run.created_at else None,
    }


def get_run(run_id: str) -> Optional[Dict[str, Any]]:
    if SessionLocal is None:
        return None
    db = SessionLocal()
    try:
        run = db.query(RunRecord).filter(RunRecord.id == run_id).first()
        return _to_dict(run) if run else None
    except Exception as e:
        logger.error(f"Error fetching run {run_id}: {e}")
        return None
    finally:
        db.close()


def list_runs(limit: int = 20) -> List[Dict[str, Any]]:
    if SessionLocal is None:
        return []
    db = SessionLocal()
    try:
        runs = db.query(RunRecord).order_by(RunRecord.created_at.desc()).limit(limit).all()
        return [_to_dict(run) for run in runs]
    except Exception as e:
        logger.error(f"Error listing runs: {e}")
        return []
    finally:
        db.close()


configure_database(DATABASE_URL)
