"""Force estimation on top of the resistance estimator: calibration passes and frame streams."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from calibration import CalibrationSample, CellRegressionModel, ForceLaw, predict_forces
from estimator import (EstimationError, EstimationResult, ObjectiveWeights, SolveReport,
                       SolverSettings, estimate)
from netlist_sim import SingularNetworkError, synthesize_frame
from skin_model import (Cell, DimensionMismatchError, DriveSetup, GridSpec, MeasurementFrame,
                        OhmmeterConfig, ResistanceField, SkinModelError, iter_cells)

logger = logging.getLogger(__name__)

STREAM_COLUMNS = ['tick', 'i', 'j', 'conductance', 'force', 'raw_v_r', 'converged']
# Relative spread below which a series counts as constant (solver noise).
FLAT_SERIES_TOL = 1e-6


def calibrate_single_touch(grid: GridSpec, law: ForceLaw, forces: Sequence[float],
                           drive: DriveSetup, top_wire=1e-4, bottom_wire=1e-4,
                           noise_std: float = 0.0, seed=None,
                           settings: Optional[SolverSettings] = None,
                           weights: tuple[Optional[ObjectiveWeights], Optional[ObjectiveWeights]] = (None, None),
                           ) -> list[CalibrationSample]:
    """Press each cell alone at every force and record both regression features.

    Untouched cells sit at the law's zero-force resistance. Stripe resistances
    are scalars or per-segment grids.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    top = np.broadcast_to(np.asarray(top_wire, dtype=float), grid.shape)
    bottom = np.broadcast_to(np.asarray(bottom_wire, dtype=float), grid.shape)
    samples = []
    for cell in iter_cells(grid):
        for force in forces:
            cells = np.full(grid.shape, float(law.resistance(0.0)))
            cells[cell] = law.resistance(force)
            truth = ResistanceField(cells, top, bottom)
            frame = synthesize_frame(truth, drive, noise_std, rng)
            result = estimate(frame, drive, weights[0], weights[1], settings)
            samples.append(CalibrationSample(cell, float(force), float(1.0 / result.resistances[cell]),
                                             float(frame.v_r(OhmmeterConfig.A)[cell])))
    logger.info('collected %d single-touch calibration samples on %s grid', len(samples), grid)
    return samples


@dataclass
class StreamResult:
    """Per-frame outputs of :func:`process_stream`, indexed ``[tick, i, j]``."""
    conductances: np.ndarray
    raw_v_r: np.ndarray
    forces: Optional[np.ndarray]
    converged: list[bool]
    reports: list[Optional[tuple[SolveReport, SolveReport]]] = field(default_factory=list)

    @property
    def ticks(self) -> int:
        return self.conductances.shape[0]

    @property
    def iterations(self) -> list[int]:
        return [sum(r.iterations for r in pair) if pair else 0 for pair in self.reports]

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for tick in range(self.ticks):
            for i, j in iter_cells(GridSpec(*self.conductances.shape[1:])):
                force = self.forces[tick, i, j] if self.forces is not None else np.nan
                rows.append((tick, i, j, self.conductances[tick, i, j], force,
                             self.raw_v_r[tick, i, j], self.converged[tick]))
        return pd.DataFrame(rows, columns=STREAM_COLUMNS)

    def to_csv(self, path: Optional[Union[str, Path]] = None) -> str:
        text = self.to_frame().to_csv(index=False, lineterminator='\n')
        if path is not None:
            Path(path).write_text(text)
        return text


def process_stream(frames: Iterable[MeasurementFrame], drive: DriveSetup,
                   models: Optional[Mapping[Cell, CellRegressionModel]] = None,
                   weights_lsq: Optional[ObjectiveWeights] = None,
                   weights_reg: Optional[ObjectiveWeights] = None,
                   settings: Optional[SolverSettings] = None) -> StreamResult:
    """Estimate a frame sequence, each frame warm-started from the last good solution.

    A frame whose solve raises or does not converge is recorded as failed and
    the previous solution is carried forward.
    """
    frames = list(frames)
    if not frames:
        raise SkinModelError('stream has no frames')
    grid = frames[0].grid
    conductances, raw, converged, reports = [], [], [], []
    previous: Optional[EstimationResult] = None
    for tick, frame in enumerate(frames):
        if frame.grid != grid:
            raise DimensionMismatchError(f'frame {tick} has grid {frame.grid}, stream grid is {grid}')
        raw.append(frame.v_r(OhmmeterConfig.A))
        try:
            result = estimate(frame, drive, weights_lsq, weights_reg, settings, warm_start=previous)
        except (EstimationError, SingularNetworkError) as exc:
            logger.warning('frame %d failed: %s', tick, exc)
            result = None
        ok = result is not None and result.converged
        if not ok and result is not None:
            logger.warning('frame %d did not converge: %s', tick,
                           '; '.join(r.message for r in result.reports))
        if ok or (previous is None and result is not None):
            previous = result
        if previous is None:
            raise EstimationError(f'frame {tick} failed with no earlier solution to carry forward')
        conductances.append(1.0 / previous.resistances)
        converged.append(ok)
        reports.append(result.reports if result is not None else None)

    conductances = np.array(conductances)
    forces = None
    if models is not None:
        forces = np.array([predict_forces(1.0 / g, models) for g in conductances])
    return StreamResult(conductances, np.array(raw), forces, converged, reports)


def ghost_correlation(series: np.ndarray, touched: Cell) -> float:
    """Largest zero-lag |Pearson correlation| between ``touched`` and untouched cells in its row or column.

    A flat series has no defined correlation and counts as 0.
    """
    series = np.asarray(series, dtype=float)
    if series.ndim != 3:
        raise DimensionMismatchError(f'series must be (ticks, rows, cols), got {series.shape}')
    grid = GridSpec(*series.shape[1:])
    touched = tuple(touched)
    if not grid.contains(touched):
        raise SkinModelError(f'cell {touched} outside {grid} grid')
    reference = series[:, touched[0], touched[1]]
    if _is_flat(reference):
        return 0.0
    worst = 0.0
    for i, j in iter_cells(grid):
        if (i, j) == touched or (i != touched[0] and j != touched[1]):
            continue
        other = series[:, i, j]
        if _is_flat(other):
            continue
        worst = max(worst, abs(float(np.corrcoef(reference, other)[0, 1])))
    return worst


def _is_flat(values: np.ndarray) -> bool:
    return bool(np.std(values) <= FLAT_SERIES_TOL * (abs(np.mean(values)) + 1.0))


def press_release_forces(frames: int, peak: float) -> np.ndarray:
    """Half-sine load profile: zero at both ends, ``peak`` in the middle."""
    if frames == 1:
        return np.array([float(peak)])
    return np.clip(peak * np.sin(np.pi * np.arange(frames) / (frames - 1)), 0.0, None)
