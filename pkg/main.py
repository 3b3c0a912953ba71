# main.py - HTTP surface for steady-state solves, decay fits and the run ledger

from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, field_validator, model_validator
from contextlib import asynccontextmanager
import logging
from slowapi import Limiter, _rate_limit_exceeded_handler
from slowapi.util import get_remote_address
from slowapi.errors import RateLimitExceeded
from typing import Any, Dict, List, Optional
from datetime import datetime

import numpy as np

import database
from analysis import fit_log_linear
from config import LOG_LEVEL, VERSION
from errors import ConvergenceError, EHDError
from grid import GridSpec
from steady import solve_steady

# Configure logging
logging.basicConfig(level=getattr(logging, LOG_LEVEL, logging.INFO))
logger = logging.getLogger(__name__)

MAX_CELLS = 128 * 128

# Rate limiting
limiter = Limiter(key_func=get_remote_address)


@asynccontextmanager
async def lifespan(app: FastAPI):
    logger.info("Initializing run ledger...")
    database.init_db()
    yield


app = FastAPI(lifespan=lifespan, title="EHD Simulator")
app.state.limiter = limiter
app.add_exception_handler(RateLimitExceeded, _rate_limit_exceeded_handler)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.get("/")
def read_root():
    return {"message": "Welcome to the EHD simulator!"}


class SteadyRequest(BaseModel):
    nx: int = 32
    ny: int = 32
    lx: float = 1.0
    ly: float = 1.0
    mu_v: float = 2.0
    mu_w: float = 1.0
    tol: float = 1e-10

    @field_validator('nx', 'ny')
    @classmethod
    def validate_counts(cls, v):
        if v < 3:
            raise ValueError('cell count must be at least 3')
        return v

    @field_validator('tol')
    @classmethod
    def validate_tol(cls, v):
        if not v > 0:
            raise ValueError('tol must be positive')
        return v


class SteadyResponse(BaseModel):
    mu_v: float
    mu_w: float
    residual: float
    iterations: int
    j_value: float
    min_v: float
    max_v: float
    min_w: float
    max_w: float
    pressure_identity_residual: float


class AnalyzeRequest(BaseModel):
    t: List[float]
    values: List[float]
    window: Optional[List[float]] = None

    @model_validator(mode='after')
    def validate_lengths(self):
        if len(self.t) != len(self.values):
            raise ValueError('t and values must have the same length')
        if self.window is not None and len(self.window) != 2:
            raise ValueError('window must be [t_start, t_end]')
        return self


class AnalyzeResponse(BaseModel):
    # "lambda" is a keyword; the field is exposed as decay_rate
    decay_rate: float
    c_dagger: float
    r_squared: float
    window_start: float
    window_end: float
    points: int


def _error_detail(e: EHDError) -> Dict[str, Any]:
    return e.to_record()


@app.post("/steady", response_model=SteadyResponse)
@limiter.limit("10/minute")
def steady_endpoint(request: Request, steady_req: SteadyRequest):
    if steady_req.nx * steady_req.ny > MAX_CELLS:
        raise HTTPException(status_code=400, detail=f"grid too large (max {MAX_CELLS} cells)")
    try:
        logger.info(f"Steady request: {steady_req.nx}x{steady_req.ny}, mu_v={steady_req.mu_v}, mu_w={steady_req.mu_w}")
        grid = GridSpec(nx=steady_req.nx, ny=steady_req.ny, lx=steady_req.lx, ly=steady_req.ly)
        steady = solve_steady(grid, steady_req.mu_v, steady_req.mu_w, tol=steady_req.tol)
        return steady.summary()
    except ConvergenceError as e:
        logger.error(f"Steady solve did not converge: {e}")
        raise HTTPException(status_code=422, detail=_error_detail(e))
    except (EHDError, ValueError) as e:
        logger.error(f"Validation error: {e}")
        raise HTTPException(status_code=400, detail=str(e))


@app.post("/analyze", response_model=AnalyzeResponse)
@limiter.limit("30/minute")
def analyze_endpoint(request: Request, analyze_req: AnalyzeRequest):
    try:
        t = np.asarray(analyze_req.t, dtype=float)
        y = np.asarray(analyze_req.values, dtype=float)
        if analyze_req.window is not None:
            window = (analyze_req.window[0], analyze_req.window[1])
        elif t.size:
            window = (float(t.min()), float(t.max()))
        else:
            window = (0.0, 0.0)
        mask = (t >= window[0]) & (t <= window[1])
        fit = fit_log_linear(t[mask], y[mask], window)
        data = fit.as_dict()
        data['decay_rate'] = data.pop('lambda')
        return data
    except EHDError as e:
        logger.error(f"Analyze error: {e}")
        raise HTTPException(status_code=400, detail=_error_detail(e))


@app.get("/runs")
@limiter.limit("30/minute")
def runs_endpoint(request: Request, limit: int = 20):
    if not database.is_configured():
        raise HTTPException(status_code=503, detail="No run ledger configured (set EHD_DATABASE_URL)")
    return {"runs": database.list_runs(limit)}


@app.get("/runs/{run_id}")
@limiter.limit("30/minute")
def run_endpoint(request: Request, run_id: str):
    if not database.is_configured():
        raise HTTPException(status_code=503, detail="No run ledger configured (set EHD_DATABASE_URL)")
    run = database.get_run(run_id)
    if not run:
        raise HTTPException(status_code=404, detail="Run not found")
    return run


# Health check endpoint
@app.get("/health")
def health_check():
    return {
        "status": "healthy",
        "timestamp": datetime.utcnow().isoformat(),
        "version": VERSION,
    }
