"""Per-cell force calibration: linear models from single-touch data, force prediction, RMSE."""
from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

import numpy as np
import pandas as pd

from skin_model import (Cell, DimensionMismatchError, FormatError, GridSpec, SkinModelError,
                        iter_cells)

logger = logging.getLogger(__name__)

CALIBRATION_COLUMNS = ['i', 'j', 'force', 'conductance', 'raw_v_r']


class CalibrationError(ValueError):
    """Raised when calibration data cannot produce a model."""


class MissingModelError(KeyError):
    """Raised when a cell has no regression model."""


class FeatureKind(Enum):
    SOLVED_CONDUCTANCE = 'solved_conductance'
    RAW_VOLTAGE = 'raw_voltage'


@dataclass(frozen=True)
class ForceLaw:
    """Synthetic contact law ``R(F) = r0 / (1 + c*F)``; conductance is affine in force."""
    r0: float = 1.0
    c: float = 0.5

    def __post_init__(self):
        if not (self.r0 > 0 and self.c > 0):
            raise CalibrationError(f'force law needs r0 > 0 and c > 0, got {self.r0}, {self.c}')

    def resistance(self, force):
        return self.r0 / (1.0 + self.c * np.asarray(force, dtype=float))

    def force(self, conductance):
        return (np.asarray(conductance, dtype=float) * self.r0 - 1.0) / self.c

    def model_for(self, cell: Cell) -> 'CellRegressionModel':
        """The exact conductance model this law implies for ``cell``."""
        return CellRegressionModel(tuple(cell), self.r0 / self.c, -1.0 / self.c,
                                   FeatureKind.SOLVED_CONDUCTANCE)


@dataclass(frozen=True)
class CalibrationSample:
    cell: Cell
    force: float
    conductance: float
    raw_v_r: float

    def __post_init__(self):
        if not self.force >= 0:
            raise CalibrationError(f'calibration force must be non-negative, got {self.force!r}')
        object.__setattr__(self, 'cell', tuple(int(c) for c in self.cell))

    def feature(self, kind: FeatureKind) -> float:
        return self.conductance if kind is FeatureKind.SOLVED_CONDUCTANCE else self.raw_v_r


@dataclass(frozen=True)
class CellRegressionModel:
    """Affine map from a per-cell feature to force (N)."""
    cell: Cell
    slope: float
    intercept: float
    feature: FeatureKind

    def predict(self, value):
        return self.slope * value + self.intercept

    def to_dict(self) -> dict:
        return {'cell': list(self.cell), 'slope': self.slope, 'intercept': self.intercept,
                'feature': self.feature.value}

    @classmethod
    def from_dict(cls, data: dict) -> 'CellRegressionModel':
        try:
            return cls(tuple(data['cell']), float(data['slope']), float(data['intercept']),
                       FeatureKind(data['feature']))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f'malformed regression model: {exc}') from exc


def fit_cell_regression(samples: Iterable[CalibrationSample], feature: FeatureKind) -> CellRegressionModel:
    """Ordinary least-squares line through one cell's calibration samples."""
    samples = list(samples)
    cells = {s.cell for s in samples}
    if len(cells) != 1:
        raise CalibrationError(f'samples must belong to exactly one cell, got {sorted(cells)}')
    x = np.array([s.feature(feature) for s in samples], dtype=float)
    y = np.array([s.force for s in samples], dtype=float)
    scale = max(float(np.max(np.abs(x))), np.finfo(float).tiny) if x.size else 1.0
    if x.size < 2 or np.ptp(x) <= 1e-9 * scale:
        raise CalibrationError(f'insufficient calibration spread for cell {cells.pop()}: '
                               f'need two distinct {feature.value} values')
    slope, intercept = np.polyfit(x, y, 1)
    return CellRegressionModel(cells.pop(), float(slope), float(intercept), feature)


def fit_calibration(samples: Iterable[CalibrationSample],
                    feature: FeatureKind) -> dict[Cell, CellRegressionModel]:
    by_cell = defaultdict(list)
    for sample in samples:
        by_cell[sample.cell].append(sample)
    models = {cell: fit_cell_regression(group, feature) for cell, group in sorted(by_cell.items())}
    logger.info('fitted %d %s models from %d samples', len(models), feature.value,
                sum(len(group) for group in by_cell.values()))
    return models


def _model(models: Mapping[Cell, CellRegressionModel], cell: Cell,
           feature: FeatureKind) -> CellRegressionModel:
    try:
        model = models[cell]
    except KeyError:
        raise MissingModelError(f'no regression model for cell {cell}') from None
    if model.feature is not feature:
        raise CalibrationError(f'model for cell {cell} uses {model.feature.value}, '
                               f'expected {feature.value}')
    return model


def predict_feature_forces(features: np.ndarray, models: Mapping[Cell, CellRegressionModel],
                           feature: FeatureKind) -> np.ndarray:
    """Per-cell force from a grid of feature values, clamped below at 0 N."""
    features = np.asarray(features, dtype=float)
    forces = np.empty(features.shape)
    for cell in iter_cells(GridSpec(*features.shape)):
        forces[cell] = _model(models, cell, feature).predict(features[cell])
    return np.maximum(forces, 0.0)


def predict_forces(resistances: np.ndarray, models: Mapping[Cell, CellRegressionModel]) -> np.ndarray:
    """Forces (N) from solved cell resistances (MΩ) through conductance models."""
    return predict_feature_forces(1.0 / np.asarray(resistances, dtype=float), models,
                                  FeatureKind.SOLVED_CONDUCTANCE)


def rmse(estimated, truth, mask=None) -> float:
    """Root mean squared error over all cells, or over ``mask`` (boolean grid or list of cells)."""
    estimated = np.asarray(estimated, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimated.shape != truth.shape:
        raise DimensionMismatchError(f'cannot compare shapes {estimated.shape} and {truth.shape}')
    if mask is None:
        selected = np.ones(truth.shape, dtype=bool)
    else:
        mask = np.asarray(mask)
        if mask.dtype == bool:
            if mask.shape != truth.shape:
                raise DimensionMismatchError(f'mask shape {mask.shape} != {truth.shape}')
            selected = mask
        else:
            selected = np.zeros(truth.shape, dtype=bool)
            for cell in mask.reshape(-1, truth.ndim):
                selected[tuple(cell)] = True
    if not selected.any():
        raise SkinModelError('rmse over an empty mask')
    return float(np.sqrt(np.mean((estimated[selected] - truth[selected]) ** 2)))


def samples_to_frame(samples: Iterable[CalibrationSample]) -> pd.DataFrame:
    return pd.DataFrame([(s.cell[0], s.cell[1], s.force, s.conductance, s.raw_v_r) for s in samples],
                        columns=CALIBRATION_COLUMNS)


def samples_to_csv(samples: Iterable[CalibrationSample],
                   path: Optional[Union[str, Path]] = None) -> str:
    text = samples_to_frame(samples).to_csv(index=False, lineterminator='\n')
    if path is not None:
        Path(path).write_text(text)
    return text


def samples_from_csv(source) -> list[CalibrationSample]:
    try:
        table = pd.read_csv(source, float_precision='round_trip')[CALIBRATION_COLUMNS]
    except (KeyError, ValueError, pd.errors.ParserError) as exc:
        raise FormatError(f'malformed calibration CSV: {exc}') from exc
    return [CalibrationSample((int(r.i), int(r.j)), float(r.force), float(r.conductance),
                              float(r.raw_v_r)) for r in table.itertuples(index=False)]


def models_to_json(models: Mapping[Cell, CellRegressionModel]) -> str:
    return json.dumps([models[cell].to_dict() for cell in sorted(models)])


def models_from_json(text: str) -> dict[Cell, CellRegressionModel]:
    try:
        entries = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f'invalid JSON: {exc}') from exc
    models = [CellRegressionModel.from_dict(entry) for entry in entries]
    return {model.cell: model for model in models}
