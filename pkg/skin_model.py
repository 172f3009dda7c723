"""Domain types for a two-layer resistive skin read out as a crossbar.

Units: resistances in MΩ, voltages in V, conductances in 1/MΩ. Cell and
stripe indices are zero-based ``(row, col)`` tuples.
"""
from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, Optional, Union

import numpy as np
import pandas as pd

from config import Config

logger = logging.getLogger(__name__)

OPEN_CIRCUIT_MOHM = Config.OPEN_CIRCUIT_MOHM

Cell = tuple[int, int]
PathLike = Union[str, Path]


class SkinModelError(ValueError):
    """Raised when a skin description or a frame is malformed."""


class DimensionMismatchError(SkinModelError):
    """Raised when array shapes disagree with the grid."""


class NonPositiveResistanceError(SkinModelError):
    """Raised when a resistance is zero, negative or not finite."""


class IncompleteFrameError(SkinModelError):
    """Raised when a measurement frame has unpopulated readings."""


class FormatError(SkinModelError):
    """Raised when serialized data cannot be decoded."""


@dataclass(frozen=True)
class GridSpec:
    """Crossbar dimensions: ``rows`` top stripes by ``cols`` bottom stripes."""
    rows: int
    cols: int

    def __post_init__(self):
        for name in ('rows', 'cols'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise SkinModelError(f'{name} must be a positive integer, got {value!r}')
            object.__setattr__(self, name, int(value))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def cells(self) -> int:
        return self.rows * self.cols

    @property
    def states(self) -> int:
        """Circuit states per frame: one per cell and ohmmeter configuration."""
        return 4 * self.cells

    def contains(self, cell: Cell) -> bool:
        i, j = cell
        return 0 <= i < self.rows and 0 <= j < self.cols

    def readout_cells(self) -> list[Cell]:
        """Cells in readout order (column-major)."""
        return [(i, j) for j in range(self.cols) for i in range(self.rows)]

    @classmethod
    def parse(cls, text: str) -> 'GridSpec':
        """Parse ``"NxM"`` (rows x cols)."""
        try:
            rows, cols = (int(part) for part in text.lower().split('x'))
        except ValueError as exc:
            raise SkinModelError(f'grid must look like NxM, got {text!r}') from exc
        return cls(rows, cols)

    def __str__(self):
        return f'{self.rows}x{self.cols}'


class DriveLayer(Enum):
    TOP = 'top'
    BOTTOM = 'bottom'


class SenseSide(Enum):
    SOURCE_REF = 'source_ref'
    GROUND_REF = 'ground_ref'


class UnselectedPolicy(Enum):
    FLOATING = 'floating'


class OhmmeterConfig(Enum):
    """The four readout configurations taken for every cell.

    A/B drive the top stripe of the cell's row and ground the bottom stripe
    of its column; C/D swap the layers. Within a pair the drive is the same
    and only the sensing reference differs.
    """
    A = ('A', DriveLayer.TOP, SenseSide.SOURCE_REF)
    B = ('B', DriveLayer.TOP, SenseSide.GROUND_REF)
    C = ('C', DriveLayer.BOTTOM, SenseSide.SOURCE_REF)
    D = ('D', DriveLayer.BOTTOM, SenseSide.GROUND_REF)

    def __init__(self, label, drive_layer, sense_side):
        self.label = label
        self.drive_layer = drive_layer
        self.sense_side = sense_side

    @property
    def position(self) -> int:
        return 'ABCD'.index(self.label)

    @property
    def partner(self) -> 'OhmmeterConfig':
        """The configuration sharing this one's input voltage configuration."""
        return {'A': OhmmeterConfig.B, 'B': OhmmeterConfig.A,
                'C': OhmmeterConfig.D, 'D': OhmmeterConfig.C}[self.label]

    @classmethod
    def from_label(cls, label: str) -> 'OhmmeterConfig':
        try:
            return cls[label.strip().upper()]
        except KeyError as exc:
            raise FormatError(f'unknown ohmmeter configuration {label!r}') from exc


CONFIGS = tuple(OhmmeterConfig)


@dataclass(frozen=True)
class DriveSetup:
    """Source voltage and the two reference resistors of the readout."""
    v_dd: float = 1.0
    r_ref_source: float = 0.1
    r_ref_ground: float = 0.1
    unselected_policy: UnselectedPolicy = UnselectedPolicy.FLOATING

    def __post_init__(self):
        for name in ('v_dd', 'r_ref_source', 'r_ref_ground'):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value <= 0:
                raise SkinModelError(f'{name} must be positive and finite, got {value!r}')
            object.__setattr__(self, name, value)

    @classmethod
    def from_config(cls, config=Config) -> 'DriveSetup':
        return cls(v_dd=config.V_DD, r_ref_source=config.R_REF_SOURCE,
                   r_ref_ground=config.R_REF_GROUND)

    def scaled(self, factor: float) -> 'DriveSetup':
        """Same drive with both reference resistors multiplied by ``factor``."""
        return DriveSetup(self.v_dd, self.r_ref_source * factor, self.r_ref_ground * factor,
                          self.unselected_policy)

    def to_dict(self) -> dict:
        return {'v_dd': self.v_dd, 'r_ref_source': self.r_ref_source,
                'r_ref_ground': self.r_ref_ground,
                'unselected_policy': self.unselected_policy.value}

    @classmethod
    def from_dict(cls, data: dict) -> 'DriveSetup':
        try:
            return cls(v_dd=data['v_dd'], r_ref_source=data['r_ref_source'],
                       r_ref_ground=data['r_ref_ground'],
                       unselected_policy=UnselectedPolicy(data.get('unselected_policy', 'floating')))
        except (KeyError, TypeError) as exc:
            raise FormatError(f'malformed drive setup: {exc}') from exc


def _frozen_array(values, name: str) -> np.ndarray:
    try:
        array = np.array(values, dtype=float)
    except (TypeError, ValueError) as exc:
        raise FormatError(f'{name} is not a numeric array: {exc}') from exc
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ResistanceField:
    """Per-cell contact resistances and per-segment stripe resistances.

    ``top_wire[i][j]`` is the top-layer segment feeding node ``(i, j)`` along
    row stripe ``i`` (``j == 0`` is the segment from the row electrode).
    ``bottom_wire[i][j]`` is the bottom-layer segment feeding node ``(i, j)``
    along column stripe ``j`` (``i == 0`` starts at the column electrode).
    """
    cell: np.ndarray
    top_wire: np.ndarray
    bottom_wire: np.ndarray

    def __post_init__(self):
        for name in ('cell', 'top_wire', 'bottom_wire'):
            object.__setattr__(self, name, _frozen_array(getattr(self, name), name))

    @property
    def grid(self) -> GridSpec:
        if self.cell.ndim != 2:
            raise DimensionMismatchError(f'cell array must be 2-D, got shape {self.cell.shape}')
        return GridSpec(*self.cell.shape)

    def __eq__(self, other):
        if not isinstance(other, ResistanceField):
            return NotImplemented
        return all(np.array_equal(getattr(self, name), getattr(other, name))
                   for name in ('cell', 'top_wire', 'bottom_wire'))

    __hash__ = None

    @classmethod
    def uniform(cls, grid: GridSpec, cell: float = 1.0, wire: float = 1e-3) -> 'ResistanceField':
        return cls(np.full(grid.shape, cell), np.full(grid.shape, wire), np.full(grid.shape, wire))

    @classmethod
    def pressed(cls, grid: GridSpec, pressed_cells, pressed: float = 0.001,
                unpressed: float = 1.0, wire: float = 1e-3) -> 'ResistanceField':
        """Field with ``pressed`` resistance at the given cells, ``unpressed`` elsewhere."""
        cells = np.full(grid.shape, unpressed, dtype=float)
        for cell in pressed_cells:
            if not grid.contains(tuple(cell)):
                raise SkinModelError(f'pressed cell {tuple(cell)} outside {grid} grid')
            cells[tuple(cell)] = pressed
        return cls(cells, np.full(grid.shape, wire), np.full(grid.shape, wire))

    def scaled(self, factor: float) -> 'ResistanceField':
        return ResistanceField(self.cell * factor, self.top_wire * factor, self.bottom_wire * factor)

    def with_cells(self, cells) -> 'ResistanceField':
        return ResistanceField(cells, self.top_wire, self.bottom_wire)

    def require_valid(self, grid: Optional[GridSpec] = None) -> 'ResistanceField':
        """Raise on the first violation reported by :func:`validate_field`."""
        grid = grid or self.grid
        violations = validate_field(self, grid)
        if violations:
            message = '; '.join(violations)
            if any(v.startswith('dimension mismatch') for v in violations):
                raise DimensionMismatchError(message)
            raise NonPositiveResistanceError(message)
        return self

    def to_dict(self) -> dict:
        rows, cols = self.cell.shape
        return {'rows': rows, 'cols': cols,
                'cell': self.cell.tolist(),
                'top_wire': self.top_wire.tolist(),
                'bottom_wire': self.bottom_wire.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> 'ResistanceField':
        try:
            field = cls(data['cell'], data['top_wire'], data['bottom_wire'])
            grid = GridSpec(data['rows'], data['cols'])
        except (KeyError, TypeError) as exc:
            raise FormatError(f'malformed resistance field: {exc}') from exc
        return field.require_valid(grid)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> 'ResistanceField':
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise FormatError(f'invalid JSON: {exc}') from exc


def validate_field(field: ResistanceField, grid: GridSpec) -> list[str]:
    """Return every violation of the field against ``grid`` (empty when valid)."""
    violations = []
    arrays = {'cell': field.cell, 'top_wire': field.top_wire, 'bottom_wire': field.bottom_wire}
    for name, array in arrays.items():
        if array.shape != grid.shape:
            violations.append(f'dimension mismatch: {name} has shape {array.shape}, '
                              f'expected {grid.shape}')
    if violations:
        return violations
    for name, array in arrays.items():
        for i, j in zip(*np.nonzero(~np.isfinite(array))):
            violations.append(f'non-finite resistance at {name} ({i},{j})')
        for i, j in zip(*np.nonzero(np.isfinite(array) & (array <= 0))):
            violations.append(f'non-positive resistance at {name} ({i},{j})')
    return violations


def frame_ordering(grid: GridSpec) -> list[tuple[Cell, OhmmeterConfig]]:
    """Readout sequence: column-major cells, configurations A-D per cell."""
    return [(cell, config) for cell in grid.readout_cells() for config in CONFIGS]


def iter_cells(grid: GridSpec) -> Iterator[Cell]:
    """Cells in row-major order."""
    for i in range(grid.rows):
        for j in range(grid.cols):
            yield (i, j)


@dataclass(frozen=True, eq=False)
class MeasurementFrame:
    """One full scan.

    ``readings[i, j, k]`` holds ``(v_s, v_r)`` for cell ``(i, j)`` under
    configuration ``CONFIGS[k]``. Unpopulated slots are NaN.
    """
    readings: np.ndarray
    timestamp: Optional[int] = None

    def __post_init__(self):
        readings = _frozen_array(self.readings, 'readings')
        if readings.ndim != 4 or readings.shape[2:] != (4, 2):
            raise DimensionMismatchError(
                f'readings must have shape (rows, cols, 4, 2), got {readings.shape}')
        object.__setattr__(self, 'readings', readings)
        if self.timestamp is not None:
            object.__setattr__(self, 'timestamp', int(self.timestamp))

    @property
    def grid(self) -> GridSpec:
        return GridSpec(*self.readings.shape[:2])

    def __eq__(self, other):
        if not isinstance(other, MeasurementFrame):
            return NotImplemented
        return (self.timestamp == other.timestamp
                and np.array_equal(self.readings, other.readings, equal_nan=True))

    __hash__ = None

    def v_s(self, config: OhmmeterConfig) -> np.ndarray:
        return self.readings[:, :, config.position, 0]

    def v_r(self, config: OhmmeterConfig) -> np.ndarray:
        return self.readings[:, :, config.position, 1]

    def reading(self, cell: Cell, config: OhmmeterConfig) -> tuple[float, float]:
        v_s, v_r = self.readings[cell[0], cell[1], config.position]
        return float(v_s), float(v_r)

    @property
    def is_complete(self) -> bool:
        return bool(np.all(np.isfinite(self.readings)))

    def require_complete(self) -> 'MeasurementFrame':
        if not self.is_complete:
            missing = [(int(i), int(j), CONFIGS[k].label)
                       for i, j, k in zip(*np.nonzero(~np.all(np.isfinite(self.readings), axis=3)))]
            raise IncompleteFrameError(f'frame has unpopulated readings at {missing[:5]}')
        return self

    def with_timestamp(self, timestamp: Optional[int]) -> 'MeasurementFrame':
        return MeasurementFrame(self.readings, timestamp)

    def to_dict(self) -> dict:
        rows, cols = self.readings.shape[:2]
        return {'rows': rows, 'cols': cols, 'timestamp': self.timestamp,
                'configs': [c.label for c in CONFIGS],
                'readings': self.readings.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> 'MeasurementFrame':
        try:
            frame = cls(data['readings'], data.get('timestamp'))
            grid = GridSpec(data['rows'], data['cols'])
        except (KeyError, TypeError) as exc:
            raise FormatError(f'malformed measurement frame: {exc}') from exc
        if frame.grid != grid:
            raise DimensionMismatchError(f'readings shape {frame.readings.shape[:2]} '
                                         f'does not match {grid}')
        return frame

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> 'MeasurementFrame':
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise FormatError(f'invalid JSON: {exc}') from exc

    def to_frame(self) -> pd.DataFrame:
        """Tabular form, one row per reading in readout order."""
        rows = [(i, j, config.label) + self.reading((i, j), config)
                for (i, j), config in frame_ordering(self.grid)]
        return pd.DataFrame(rows, columns=['i', 'j', 'config', 'v_s', 'v_r'])

    def to_csv(self, path: Optional[PathLike] = None) -> str:
        """Write ``i,j,config,v_s,v_r`` rows; returns the CSV text."""
        text = self.to_frame().to_csv(index=False, lineterminator='\n')
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source: Union[PathLike, io.StringIO], grid: Optional[GridSpec] = None) -> 'MeasurementFrame':
        try:
            table = pd.read_csv(source, float_precision='round_trip')
            table = table[['i', 'j', 'config', 'v_s', 'v_r']]
        except (KeyError, ValueError, pd.errors.ParserError) as exc:
            raise FormatError(f'malformed frame CSV: {exc}') from exc
        if table.empty:
            raise FormatError('frame CSV has no readings')
        if grid is None:
            grid = GridSpec(int(table['i'].max()) + 1, int(table['j'].max()) + 1)
        readings = np.full(grid.shape + (4, 2), np.nan)
        seen = set()
        for row in table.itertuples(index=False):
            cell = (int(row.i), int(row.j))
            if not grid.contains(cell):
                raise DimensionMismatchError(f'reading for {cell} outside {grid} grid')
            config = OhmmeterConfig.from_label(str(row.config))
            if (cell, config) in seen:
                raise FormatError(f'duplicate reading for {cell} config {config.label}')
            seen.add((cell, config))
            readings[cell[0], cell[1], config.position] = (row.v_s, row.v_r)
        logger.debug('read %d readings for a %s grid', len(table), grid)
        return cls(readings).require_complete()


@dataclass(frozen=True, eq=False)
class CircuitState:
    """Decision variables of one measurement: stripe and cell resistances plus node voltages."""
    config: OhmmeterConfig
    cell_index: Cell
    r_top: np.ndarray
    r_bottom: np.ndarray
    r_cell: np.ndarray
    v_top: np.ndarray
    v_bottom: np.ndarray

    def field(self) -> ResistanceField:
        return ResistanceField(self.r_cell, self.r_top, self.r_bottom)
