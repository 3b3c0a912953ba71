# snapshots.py - EHD2 field snapshots, diagnostics tables and resumable checkpoints

from typing import List, Optional, TextIO, Tuple
import csv
import logging
import math

import numpy as np

from analysis import DiagnosticsRecord
from errors import ContractError
from fluid import VelocityState
from grid import GridSpec, ScalarField, VectorField
from sim import SimState
from transport import ChargePair

logger = logging.getLogger(__name__)

MAGIC = "EHD2"


def _real(x: float) -> str:
    return format(float(x), '.17g')


def write_snapshot(path: str, name: str, field: ScalarField, time: float) -> None:
    """Text header line, then nx*ny little-endian doubles with y as the outer index."""
    if not name or any(c.isspace() for c in name):
        raise ContractError(f"snapshot name must be a single token, got {name!r}")
    grid = field.grid
    header = f"{MAGIC} {name} {grid.nx} {grid.ny} {_real(grid.lx)} {_real(grid.ly)} {_real(time)}\n"
    payload = np.ascontiguousarray(field.values.T, dtype='<f8').tobytes()
    with open(path, 'wb') as fh:
        fh.write(header.encode('ascii'))
        fh.write(payload)


def read_snapshot(path: str) -> Tuple[str, ScalarField, float]:
    with open(path, 'rb') as fh:
        header = fh.readline().decode('ascii').split()
        payload = fh.read()
    if len(header) != 7 or header[0] != MAGIC:
        raise ContractError(f"{path} is not an {MAGIC} snapshot")
    _, name, nx, ny, lx, ly, time = header
    grid = GridSpec(nx=int(nx), ny=int(ny), lx=float(lx), ly=float(ly))
    expected = grid.nx * grid.ny * 8
    if len(payload) != expected:
        raise ContractError(f"{path}: expected {expected} payload bytes, found {len(payload)}")
    values = np.frombuffer(payload, dtype='<f8').reshape(grid.ny, grid.nx).T.astype(float)
    return name, ScalarField(grid, values), float(time)


def snapshot_fields(state: SimState):
    """The cell fields written for a simulation state; velocity is averaged to cells."""
    ux, uy = state.u.u.cell_average()
    grid = state.grid
    return {
        'v': state.charges.v,
        'w': state.charges.w,
        'phi': state.phi,
        'ux': ScalarField(grid, ux),
        'uy': ScalarField(grid, uy),
    }


def _format_cell(value) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return _real(value)


class DiagnosticsWriter:
    """CSV writer that emits whole rows only and flushes after each."""

    def __init__(self, path: str, mode: str = 'w'):
        self.path = path
        self.handle: Optional[TextIO] = open(path, mode, newline='')
        self.writer = csv.writer(self.handle)
        self.rows = 0
        self.last_step: Optional[int] = None
        if mode == 'w':
            self.writer.writerow(DiagnosticsRecord.field_names())
            self.handle.flush()

    def write(self, record: DiagnosticsRecord) -> None:
        if self.last_step is not None and record.step <= self.last_step:
            raise ContractError(f"diagnostics rows must have increasing steps ({record.step} after {self.last_step})")
        self.writer.writerow([_format_cell(v) for v in record.values()])
        self.handle.flush()
        self.rows += 1
        self.last_step = record.step

    def close(self) -> None:
        if self.handle is not None:
            self.handle.close()
            self.handle = None

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()


def read_diagnostics(path: str) -> List[DiagnosticsRecord]:
    names = DiagnosticsRecord.field_names()
    records = []
    with open(path, newline='') as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != names:
            raise ContractError(f"{path}: unexpected diagnostics header {header}")
        for row in reader:
            if len(row) != len(names):
                raise ContractError(f"{path}: malformed row {row}")
            data = {name: (int(value) if name == 'step' else float(value)) for name, value in zip(names, row)}
            records.append(DiagnosticsRecord(**data))
    return records


def save_checkpoint(path: str, state: SimState) -> None:
    grid = state.grid
    np.savez(
        path,
        ux=state.u.u.xcomp, uy=state.u.u.ycomp, p=state.u.p.values,
        v=state.charges.v.values, w=state.charges.w.values, phi=state.phi.values,
        t=state.t, mu_v=state.mu_v, mu_w=state.mu_w, step=state.step,
        nx=grid.nx, ny=grid.ny, lx=grid.lx, ly=grid.ly,
    )
    logger.info(f"Checkpoint at step {state.step} written to {path}")


def load_checkpoint(path: str) -> SimState:
    with np.load(path) as data:
        grid = GridSpec(nx=int(data['nx']), ny=int(data['ny']), lx=float(data['lx']), ly=float(data['ly']))
        t = float(data['t'])
        if not math.isfinite(t):
            raise ContractError(f"{path}: checkpoint time is not finite")
        return SimState(
            t=t,
            u=VelocityState(VectorField(grid, data['ux'], data['uy']), ScalarField(grid, data['p'])),
            charges=ChargePair(ScalarField(grid, data['v']), ScalarField(grid, data['w'])),
            phi=ScalarField(grid, data['phi']),
            mu_v=float(data['mu_v']),
            mu_w=float(data['mu_w']),
            step=int(data['step']),
        )
