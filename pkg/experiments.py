"""Synthetic experiments: resistance sweeps, ghost demo, force pipeline and stream replay.

Every runner writes its tables, reports and heatmaps under the configured
output directory and returns the records it wrote. Outputs depend only on
the configuration and its seed.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from calibration import (FeatureKind, ForceLaw, fit_calibration, models_to_json, predict_forces,
                         rmse, samples_to_csv)
from config import Config
from estimator import EstimationError, ObjectiveWeights, SolverSettings, estimate
from force_model import (calibrate_single_touch, ghost_correlation, press_release_forces,
                         process_stream)
from naive_estimator import naive_force_baseline, naive_resistance
from netlist_sim import SingularNetworkError, synthesize_frame
from skin_model import (Cell, DriveSetup, FormatError, GridSpec, MeasurementFrame,
                        ResistanceField, SkinModelError)

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ['value', 'naive_rmse', 'feasible_rmse', 'regularized_rmse', 'converged',
                 'iterations_lsq', 'iterations_reg', 'message']


class Scenario(Enum):
    WIRE_SWEEP = 'wire_sweep'
    CELL_SWEEP = 'cell_sweep'
    GHOST_DEMO = 'ghost_demo'
    FORCE_PIPELINE = 'force_pipeline'
    STREAM_REPLAY = 'stream_replay'
    CUSTOM = 'custom'


DEFAULT_SWEEPS = {
    Scenario.WIRE_SWEEP: (0.0001, 0.001, 0.005, 0.02, 0.041),
    Scenario.CELL_SWEEP: (0.01, 0.1, 0.3, 0.5, 0.7),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a scenario run depends on.

    ``pressed_cells`` default to three corners of the grid, the pattern that
    makes the fourth corner read as touched. ``loads`` default to two 0.98 N
    weights on the first two cells of column 0.
    """
    scenario: Scenario = Scenario.WIRE_SWEEP
    grid: GridSpec = GridSpec(3, 3)
    drive: DriveSetup = field(default_factory=DriveSetup.from_config)
    sweep_values: Optional[tuple[float, ...]] = None
    pressed_cells: Optional[tuple[Cell, ...]] = None
    pressed: float = 0.001
    unpressed: float = 1.0
    wire: float = 0.001
    noise_std: float = 0.0
    weights_lsq: ObjectiveWeights = field(default_factory=ObjectiveWeights.least_squares)
    weights_reg: ObjectiveWeights = field(default_factory=ObjectiveWeights.regularized)
    seed: int = Config.SEED
    out_dir: Path = Path(Config.OUTPUT_DIR)
    field_path: Optional[Path] = None
    frame_path: Optional[Path] = None
    frames: int = 10
    stream_cell: Optional[Cell] = None
    peak_force: float = 4.0
    calibration_forces: tuple[float, ...] = (0.0, 1.0, 2.0, 4.0)
    loads: Optional[tuple[tuple[Cell, float], ...]] = None
    wire_profile: str = 'uniform'
    heatmap_block: int = 16
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'scenario', Scenario(self.scenario))
        object.__setattr__(self, 'out_dir', Path(self.out_dir))
        n, m = self.grid.shape
        if self.pressed_cells is None:
            corners = ((0, 0), (0, m - 1), (n - 1, 0)) if n > 1 and m > 1 else ()
            object.__setattr__(self, 'pressed_cells', corners)
        if self.loads is None:
            object.__setattr__(self, 'loads', tuple(((i, 0), 0.98) for i in range(min(n, 2))))
        object.__setattr__(self, 'pressed_cells', tuple(tuple(int(c) for c in cell)
                                                        for cell in self.pressed_cells))
        for cell in self.pressed_cells:
            if not self.grid.contains(cell):
                raise SkinModelError(f'pressed cell {cell} outside {self.grid} grid')
        for cell, force in self.loads:
            if not self.grid.contains(tuple(cell)):
                raise SkinModelError(f'load cell {tuple(cell)} outside {self.grid} grid')
            if not force >= 0:
                raise SkinModelError(f'load on {tuple(cell)} must be non-negative, got {force!r}')
        if self.sweep_values is not None:
            values = tuple(float(v) for v in self.sweep_values)
            if not values or any(not (np.isfinite(v) and v > 0) for v in values):
                raise SkinModelError(f'sweep values must be positive, got {self.sweep_values!r}')
            object.__setattr__(self, 'sweep_values', values)
        for name in ('pressed', 'unpressed', 'wire'):
            if not getattr(self, name) > 0:
                raise SkinModelError(f'{name} resistance must be positive, got {getattr(self, name)!r}')
        if not self.noise_std >= 0:
            raise SkinModelError(f'noise_std must be non-negative, got {self.noise_std!r}')
        if self.frames < 1 or self.heatmap_block < 1 or self.workers < 1:
            raise SkinModelError('frames, heatmap_block and workers must be positive')
        if self.wire_profile not in ('uniform', 'stretched'):
            raise SkinModelError(f'unknown wire profile {self.wire_profile!r}')
        self.settings.require_supported(self.grid)

    @property
    def values(self) -> tuple[float, ...]:
        return self.sweep_values or DEFAULT_SWEEPS.get(self.scenario, ())

    @property
    def settings(self) -> SolverSettings:
        return SolverSettings.from_config()

    @classmethod
    def from_dict(cls, data: dict) -> 'ExperimentConfig':
        data = dict(data)
        try:
            if 'grid' in data and isinstance(data['grid'], str):
                data['grid'] = GridSpec.parse(data['grid'])
            elif 'grid' in data:
                data['grid'] = GridSpec(*data['grid'])
            if 'drive' in data:
                data['drive'] = DriveSetup.from_dict(data['drive'])
            for name in ('weights_lsq', 'weights_reg'):
                if name in data:
                    weights = data[name]
                    data[name] = ObjectiveWeights(weights['alpha'], weights['beta'],
                                                  weights.get('lambda', 0.0))
            for name in ('pressed_cells', 'calibration_forces'):
                if name in data:
                    data[name] = tuple(data[name])
            if 'loads' in data:
                data['loads'] = tuple((tuple(cell), float(force)) for cell, force in data['loads'])
            if data.get('stream_cell') is not None:
                data['stream_cell'] = tuple(data['stream_cell'])
            for name in ('field_path', 'frame_path', 'out_dir'):
                if data.get(name) is not None:
                    data[name] = Path(data[name])
            return cls(**data)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SkinModelError):
                raise
            raise FormatError(f'malformed experiment config: {exc}') from exc

    @classmethod
    def from_json_file(cls, path: Union[str, Path]) -> 'ExperimentConfig':
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f'invalid JSON in {path}: {exc}') from exc
        return cls.from_dict(data)

    def with_overrides(self, **overrides) -> 'ExperimentConfig':
        """Copy with every non-None override applied.

        Cell patterns that no longer fit an overridden grid fall back to
        their defaults.
        """
        changes = {k: v for k, v in overrides.items() if v is not None}
        grid = changes.get('grid', self.grid)
        if 'pressed_cells' not in changes and not all(grid.contains(c) for c in self.pressed_cells):
            changes['pressed_cells'] = None
        if 'loads' not in changes and not all(grid.contains(tuple(c)) for c, _ in self.loads):
            changes['loads'] = None
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {'scenario': self.scenario.value, 'grid': str(self.grid),
                'drive': self.drive.to_dict(), 'sweep_values': list(self.values),
                'pressed_cells': [list(c) for c in self.pressed_cells],
                'pressed': self.pressed, 'unpressed': self.unpressed, 'wire': self.wire,
                'noise_std': self.noise_std, 'weights_lsq': self.weights_lsq.to_dict(),
                'weights_reg': self.weights_reg.to_dict(), 'seed': self.seed}


@dataclass
class SweepRecord:
    value: float
    naive_rmse: float
    feasible_rmse: float
    regularized_rmse: float
    converged: bool
    iterations_lsq: int = 0
    iterations_reg: int = 0
    message: str = ''


@dataclass
class PointResult:
    """Grids of one estimated scene, all in MΩ."""
    record: SweepRecord
    truth: np.ndarray
    naive: np.ndarray
    feasible: np.ndarray
    regularized: np.ndarray

    def grids(self) -> dict[str, np.ndarray]:
        return {'truth': self.truth, 'naive': self.naive, 'feasible': self.feasible,
                'regularized': self.regularized}


def render_heatmap(values, path: Optional[Union[str, Path]] = None,
                   scale: Optional[tuple[float, float]] = None, block: int = 16) -> bytes:
    """Binary PGM of ``values``, one ``block``-pixel square per cell.

    Brightness is ``(max - v) / (max - min)`` clamped to [0, 1] so low
    values are bright; pixel = floor(255 * brightness + 0.5). A degenerate
    scale gives uniform gray 128.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or not np.all(np.isfinite(values)):
        raise SkinModelError('heatmap needs a finite 2-D grid')
    low, high = scale if scale is not None else (float(values.min()), float(values.max()))
    if high == low:
        pixels = np.full(values.shape, 128, dtype=np.uint8)
    else:
        brightness = np.clip((high - values) / (high - low), 0.0, 1.0)
        pixels = np.floor(255.0 * brightness + 0.5).astype(np.uint8)
    image = np.kron(pixels, np.ones((block, block), dtype=np.uint8))
    data = f'P5\n{image.shape[1]} {image.shape[0]}\n255\n'.encode('ascii') + image.tobytes()
    if path is not None:
        Path(path).write_bytes(data)
    return data


def _estimate_scene(truth: ResistanceField, value: float, config: ExperimentConfig,
                    seed: int) -> PointResult:
    frame = synthesize_frame(truth, config.drive, config.noise_std, seed)
    naive = naive_resistance(frame, config.drive)
    try:
        result = estimate(frame, config.drive, config.weights_lsq, config.weights_reg, config.settings)
    except (EstimationError, SingularNetworkError) as exc:
        logger.warning('scene at %g failed: %s', value, exc)
        nan = np.full(truth.cell.shape, np.nan)
        record = SweepRecord(value, rmse(naive, truth.cell), math.nan, math.nan, False, message=str(exc))
        return PointResult(record, truth.cell, naive, nan, nan)
    first, second = result.reports
    message = '; '.join(r.message for r in result.reports if not r.converged)
    record = SweepRecord(value, rmse(naive, truth.cell), rmse(result.feasible_resistances, truth.cell),
                         rmse(result.resistances, truth.cell), result.converged,
                         first.iterations, second.iterations, message)
    return PointResult(record, truth.cell, naive, result.feasible_resistances, result.resistances)


def _write_scene(point: PointResult, out_dir: Path, stem: str, config: ExperimentConfig) -> None:
    for row, grid in point.grids().items():
        if np.all(np.isfinite(grid)):
            render_heatmap(grid, out_dir / f'{stem}_{row}.pgm', (0.0, config.unpressed),
                           config.heatmap_block)


def _run_sweep(config: ExperimentConfig, name: str, scene) -> list[SweepRecord]:
    out_dir = config.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    values = config.values
    jobs = [(scene(value), value, config.seed + k) for k, value in enumerate(values)]
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        points = list(pool.map(lambda job: _estimate_scene(job[0], job[1], config, job[2]), jobs))
    for k, point in enumerate(points):
        _write_scene(point, out_dir, f'{name}_{k:02d}', config)
        logger.info('%s point %g: naive %.4g, feasible %.4g, regularized %.4g, converged=%s',
                    name, point.record.value, point.record.naive_rmse, point.record.feasible_rmse,
                    point.record.regularized_rmse, point.record.converged)
    records = [point.record for point in points]
    table = pd.DataFrame([asdict(r) for r in records], columns=SWEEP_COLUMNS)
    table.to_csv(out_dir / f'{name}.csv', index=False, lineterminator='\n')
    return records


def run_wire_sweep(config: ExperimentConfig) -> list[SweepRecord]:
    """Vary the stripe segment resistance; pressed and unpressed cells stay fixed."""
    return _run_sweep(config, 'wire_sweep', lambda wire: ResistanceField.pressed(
        config.grid, config.pressed_cells, config.pressed, config.unpressed, wire))


def run_cell_sweep(config: ExperimentConfig) -> list[SweepRecord]:
    """Vary the pressed-cell resistance at fixed stripe resistance."""
    return _run_sweep(config, 'cell_sweep', lambda pressed: ResistanceField.pressed(
        config.grid, config.pressed_cells, pressed, config.unpressed, config.wire))


def _run_single(config: ExperimentConfig, truth: ResistanceField, name: str) -> PointResult:
    config.out_dir.mkdir(parents=True, exist_ok=True)
    point = _estimate_scene(truth, config.wire, config, config.seed)
    _write_scene(point, config.out_dir, name, config)
    report = {'config': config.to_dict(), 'record': asdict(point.record)}
    report.update({row: (grid.tolist() if np.all(np.isfinite(grid)) else None)
                   for row, grid in point.grids().items()})
    (config.out_dir / f'{name}.json').write_text(json.dumps(report, indent=2, sort_keys=True))
    return point


def run_ghost_demo(config: ExperimentConfig) -> PointResult:
    """2x2 skin with three corners pressed; the fourth reads as touched to a naive readout."""
    grid = GridSpec(2, 2)
    truth = ResistanceField.pressed(grid, [(0, 0), (0, 1), (1, 0)], config.pressed,
                                    config.unpressed, config.wire)
    return _run_single(config.with_overrides(grid=grid, pressed_cells=()), truth, 'ghost_demo')


def run_custom(config: ExperimentConfig) -> PointResult:
    """Estimate a field read from ``field_path``, or the configured pressed pattern."""
    if config.field_path is not None:
        truth = ResistanceField.from_json(Path(config.field_path).read_text())
        config = config.with_overrides(grid=truth.grid, pressed_cells=())
    else:
        truth = ResistanceField.pressed(config.grid, config.pressed_cells, config.pressed,
                                        config.unpressed, config.wire)
    return _run_single(config, truth, 'custom')


def wire_field(grid: GridSpec, wire: float, profile: str) -> tuple[np.ndarray, np.ndarray]:
    """Stripe segment resistances: constant, or growing along each stripe on a stretched surface."""
    top = np.full(grid.shape, wire)
    bottom = np.full(grid.shape, wire)
    if profile == 'stretched':
        top = top * (1.0 + np.arange(grid.cols))[None, :]
        bottom = bottom * (1.0 + np.arange(grid.rows))[:, None]
    return top, bottom


@dataclass
class ForceReport:
    truth: np.ndarray
    solved: np.ndarray
    raw: np.ndarray
    solved_rmse: float
    raw_rmse: float
    converged: bool

    @property
    def improvement(self) -> float:
        """Percent reduction of RMSE against the raw-voltage predictor."""
        if self.raw_rmse == 0:
            return 0.0
        return (self.raw_rmse - self.solved_rmse) / self.raw_rmse * 100.0

    def to_dict(self) -> dict:
        return {'truth': self.truth.tolist(), 'solved': self.solved.tolist(),
                'raw': self.raw.tolist(), 'solved_rmse': self.solved_rmse,
                'raw_rmse': self.raw_rmse, 'improvement_percent': self.improvement,
                'converged': self.converged}


def run_force_pipeline(config: ExperimentConfig, law: ForceLaw = ForceLaw()) -> ForceReport:
    """Single-touch calibration, then a multi-touch scene scored against the generating law."""
    config.out_dir.mkdir(parents=True, exist_ok=True)
    grid, drive = config.grid, config.drive
    top, bottom = wire_field(grid, config.wire, config.wire_profile)
    rng = np.random.default_rng(config.seed)

    samples = calibrate_single_touch(grid, law, config.calibration_forces, drive, top, bottom,
                                     config.noise_std, rng, config.settings,
                                     (config.weights_lsq, config.weights_reg))
    solved_models = fit_calibration(samples, FeatureKind.SOLVED_CONDUCTANCE)
    raw_models = fit_calibration(samples, FeatureKind.RAW_VOLTAGE)
    samples_to_csv(samples, config.out_dir / 'calibration.csv')
    (config.out_dir / 'models.json').write_text(models_to_json(solved_models))

    truth = np.zeros(grid.shape)
    for cell, force in config.loads:
        truth[tuple(cell)] = force
    frame = synthesize_frame(ResistanceField(law.resistance(truth), top, bottom), drive,
                             config.noise_std, rng)
    result = estimate(frame, drive, config.weights_lsq, config.weights_reg, config.settings)
    solved = predict_forces(result.resistances, solved_models)
    raw = naive_force_baseline(frame, raw_models)
    report = ForceReport(truth, solved, raw, rmse(solved, truth), rmse(raw, truth), result.converged)
    (config.out_dir / 'force_report.json').write_text(json.dumps(report.to_dict(), indent=2,
                                                                 sort_keys=True))
    logger.info('force pipeline: solved RMSE %.4f N, raw RMSE %.4f N, improvement %.1f%%',
                report.solved_rmse, report.raw_rmse, report.improvement)
    return report


def synthetic_stream(grid: GridSpec, cell: Cell, drive: DriveSetup, law: ForceLaw, frames: int,
                     peak_force: float, wire: float, noise_std: float = 0.0,
                     seed=None) -> list[MeasurementFrame]:
    """Frames of a press-and-release on ``cell`` with every other cell unloaded."""
    rng = np.random.default_rng(seed)
    stream = []
    for tick, force in enumerate(press_release_forces(frames, peak_force)):
        loads = np.zeros(grid.shape)
        loads[tuple(cell)] = force
        truth = ResistanceField(law.resistance(loads), np.full(grid.shape, wire),
                                np.full(grid.shape, wire))
        stream.append(synthesize_frame(truth, drive, noise_std, rng, timestamp=tick))
    return stream


def load_frames(path: Union[str, Path]) -> list[MeasurementFrame]:
    """A JSON list of frames, or a single-frame CSV."""
    path = Path(path)
    if path.suffix.lower() == '.csv':
        return [MeasurementFrame.from_csv(path)]
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f'invalid JSON in {path}: {exc}') from exc
    if isinstance(data, dict):
        data = [data]
    if not isinstance(data, list) or not data:
        raise FormatError(f'{path} holds no frames')
    return [MeasurementFrame.from_dict(entry) for entry in data]


def run_stream_replay(config: ExperimentConfig, law: ForceLaw = ForceLaw()) -> dict:
    """Estimate a frame stream and compare ghost correlation of raw and solved series."""
    config.out_dir.mkdir(parents=True, exist_ok=True)
    if config.frame_path is not None:
        frames = load_frames(config.frame_path)
        grid = frames[0].grid
    else:
        grid = config.grid
        frames = synthetic_stream(grid, config.stream_cell or (grid.rows - 1, grid.cols - 1),
                                  config.drive, law, config.frames, config.peak_force,
                                  config.wire, config.noise_std, config.seed)
    touched = config.stream_cell or (grid.rows - 1, grid.cols - 1)
    models = {cell: law.model_for(cell) for cell in np.ndindex(*grid.shape)}
    result = process_stream(frames, config.drive, models, config.weights_lsq, config.weights_reg,
                            config.settings)
    result.to_csv(config.out_dir / 'stream.csv')
    report = {'frames': result.ticks, 'touched': list(touched),
              'converged_frames': int(sum(result.converged)),
              'iterations': result.iterations,
              'ghost_correlation_raw': ghost_correlation(result.raw_v_r, touched),
              'ghost_correlation_solved': ghost_correlation(result.conductances, touched)}
    (config.out_dir / 'stream_report.json').write_text(json.dumps(report, indent=2, sort_keys=True))
    logger.info('stream replay: %d frames, ghost correlation raw %.3f, solved %.3f',
                result.ticks, report['ghost_correlation_raw'], report['ghost_correlation_solved'])
    return report


RUNNERS = {
    Scenario.WIRE_SWEEP: run_wire_sweep,
    Scenario.CELL_SWEEP: run_cell_sweep,
    Scenario.GHOST_DEMO: run_ghost_demo,
    Scenario.FORCE_PIPELINE: run_force_pipeline,
    Scenario.STREAM_REPLAY: run_stream_replay,
    Scenario.CUSTOM: run_custom,
}


def run(config: ExperimentConfig):
    return RUNNERS[config.scenario](config)
