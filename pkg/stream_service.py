"""Live force estimation service."""
import logging
import time

import numpy as np

from calibration import ForceLaw, predict_forces
from config import Config
from estimator import EstimationError, SolverSettings, estimate
from force_model import press_release_forces
from netlist_sim import SingularNetworkError, synthesize_frame
from skin_model import DriveSetup, ResistanceField, SkinModelError

logger = logging.getLogger(__name__)

MAX_LIVE_CELLS = 16


class StreamService:
    """Replays a press-and-release on one cell and estimates every frame.

    Each frame is warm-started from the last converged solution, the way a
    skin is read out continuously.
    """

    def __init__(self, drive=None, law=None, settings=None, frames_per_cycle=20,
                 wire=Config.WIRE_FLOOR_MOHM):
        self.drive = drive or DriveSetup.from_config()
        self.law = law or ForceLaw()
        self.settings = settings or SolverSettings.from_config()
        self.frames_per_cycle = frames_per_cycle
        self.wire = wire
        self.grid = None
        self.cell = None
        self.peak_force = 0.0
        self.tick = 0
        self._profile = np.zeros(1)
        self._models = {}
        self._previous = None

    def configure(self, grid, cell, peak_force):
        """Select the grid, the pressed cell and the peak load; restarts the replay.

        Args:
            grid: GridSpec of the skin
            cell: (row, col) of the pressed cell
            peak_force: Largest load in N

        Raises:
            SkinModelError: If the cell is outside the grid, the grid is too
                large for live use or the force is negative
        """
        cell = tuple(int(c) for c in cell)
        if grid.cells > MAX_LIVE_CELLS:
            raise SkinModelError(f'live streams support up to {MAX_LIVE_CELLS} cells, got {grid}')
        if not grid.contains(cell):
            raise SkinModelError(f'cell {cell} outside {grid} grid')
        if not peak_force >= 0:
            raise SkinModelError(f'peak force must be non-negative, got {peak_force!r}')
        self.grid, self.cell, self.peak_force = grid, cell, float(peak_force)
        self.tick = 0
        self._profile = press_release_forces(self.frames_per_cycle, self.peak_force)
        self._models = {c: self.law.model_for(c) for c in np.ndindex(*grid.shape)}
        self._previous = None

    @property
    def configured(self):
        return self.grid is not None

    def next_frame(self):
        """Synthesize the measurement frame of the current tick."""
        loads = np.zeros(self.grid.shape)
        loads[self.cell] = self._profile[self.tick % len(self._profile)]
        wire = np.full(self.grid.shape, self.wire)
        truth = ResistanceField(self.law.resistance(loads), wire, wire)
        return synthesize_frame(truth, self.drive, timestamp=self.tick)

    def next_update(self):
        """Estimate the next frame.

        Returns:
            Dictionary with tick, per-cell forces and conductances, the
            convergence flag and a timestamp, or None if estimation failed
        """
        if not self.configured:
            return None
        try:
            frame = self.next_frame()
            result = estimate(frame, self.drive, settings=self.settings, warm_start=self._previous)
        except (EstimationError, SingularNetworkError, SkinModelError) as exc:
            logger.error('estimation failed at tick %d: %s', self.tick, exc)
            return None
        if result.converged or self._previous is None:
            self._previous = result
        forces = predict_forces(self._previous.resistances, self._models)
        update = {
            'tick': self.tick,
            'cell_forces': forces.tolist(),
            'conductances': (1.0 / self._previous.resistances).tolist(),
            'converged': result.converged,
            'timestamp': time.time()
        }
        self.tick += 1
        return update

    def describe(self):
        """Status summary for the index route."""
        return {
            'grid': str(self.grid) if self.configured else None,
            'cell': list(self.cell) if self.configured else None,
            'peak_force': self.peak_force,
            'tick': self.tick,
            'drive': self.drive.to_dict()
        }