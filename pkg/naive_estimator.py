"""Baseline readout that ignores the rest of the array.

Each cell is treated as a lone resistor in series with the ground reference:
the current is ``v_r / r_ref_ground`` and the cell resistance follows from
the drop ``v_s - v_r``. Sneak paths through neighbouring cells are what
this estimate gets wrong.
"""
from __future__ import annotations

import logging
from typing import Mapping

import numpy as np

from calibration import CellRegressionModel, FeatureKind, predict_feature_forces
from config import Config
from skin_model import Cell, DriveSetup, MeasurementFrame, OhmmeterConfig, OPEN_CIRCUIT_MOHM

logger = logging.getLogger(__name__)


def _two_terminal(v_s: np.ndarray, v_r: np.ndarray, r_ref_ground: float,
                  open_circuit: float, floor: float) -> np.ndarray:
    with np.errstate(divide='ignore', invalid='ignore'):
        resistance = (v_s - v_r) * r_ref_ground / v_r
    resistance = np.where(v_r > 0, resistance, open_circuit)
    return np.clip(resistance, floor, open_circuit)


def naive_resistance(frame: MeasurementFrame, drive: DriveSetup,
                     open_circuit: float = OPEN_CIRCUIT_MOHM,
                     floor: float = Config.CELL_FLOOR_MOHM) -> np.ndarray:
    """Per-cell resistance from configurations A and C, averaged.

    Non-positive ``v_r`` reads as an open circuit. Results are clamped to
    ``[floor, open_circuit]``.
    """
    frame.require_complete()
    estimates = [_two_terminal(frame.v_s(config), frame.v_r(config), drive.r_ref_ground,
                               open_circuit, floor)
                 for config in (OhmmeterConfig.A, OhmmeterConfig.C)]
    result = np.clip(np.mean(estimates, axis=0), floor, open_circuit)
    opened = int(np.count_nonzero(result >= open_circuit))
    if opened:
        logger.debug('%d of %d cells read as open circuit', opened, result.size)
    return result


def naive_force_baseline(frame: MeasurementFrame,
                         models: Mapping[Cell, CellRegressionModel]) -> np.ndarray:
    """Forces (N) straight from configuration A's ``v_r`` through raw-voltage models."""
    frame.require_complete()
    return predict_feature_forces(frame.v_r(OhmmeterConfig.A), models, FeatureKind.RAW_VOLTAGE)
