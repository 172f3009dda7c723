"""Forward simulation of the skin crossbar by nodal analysis.

Node numbering for an ``n x m`` grid: top-layer node ``(i, j)`` is
``i*m + j``, bottom-layer node ``(i, j)`` is ``n*m + i*m + j``, the driven
electrode is ``2*n*m`` and the sensed electrode ``2*n*m + 1``. Only the two
selected electrodes exist in a measurement; the other stripe ends float.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Union

import numpy as np
from scipy import linalg

from config import Config
from skin_model import (Cell, DriveLayer, DriveSetup, GridSpec, MeasurementFrame,
                        OhmmeterConfig, ResistanceField, SkinModelError, frame_ordering)

logger = logging.getLogger(__name__)


class CellIndexError(SkinModelError, IndexError):
    """Raised when a measured cell lies outside the grid."""


class SingularNetworkError(RuntimeError):
    """Raised when the nodal system cannot be factorized."""


@dataclass(frozen=True, eq=False)
class SkinTopology:
    """Skin resistor edges of one measurement.

    Edge ``e`` joins internal node ``node_a[e]`` to ``node_b[e]`` (internal or
    an electrode) and its conductance is entry ``variable[e]`` of the
    parameter vector laid out as ``[cells, top wires, bottom wires]``, each
    block row-major.
    """
    grid: GridSpec
    config: OhmmeterConfig
    cell: Cell
    node_a: np.ndarray
    node_b: np.ndarray
    variable: np.ndarray

    @property
    def internal_nodes(self) -> int:
        return 2 * self.grid.cells

    @property
    def driven(self) -> int:
        return self.internal_nodes

    @property
    def sensed(self) -> int:
        return self.internal_nodes + 1

    @property
    def edge_count(self) -> int:
        return len(self.variable)

    def node_label(self, node: int) -> str:
        nm, m = self.grid.cells, self.grid.cols
        if node == self.driven:
            return 'driven'
        if node == self.sensed:
            return 'sensed'
        layer = 'T' if node < nm else 'B'
        i, j = divmod(node % nm, m)
        return f'{layer}({i},{j})'


@lru_cache(maxsize=256)
def skin_topology(grid: GridSpec, config: OhmmeterConfig, cell: Cell) -> SkinTopology:
    """Edges of the skin network while measuring ``cell`` under ``config``."""
    cell = tuple(int(c) for c in cell)
    if not grid.contains(cell):
        raise CellIndexError(f'cell {cell} outside {grid} grid')
    n, m = grid.shape
    nm = n * m
    driven, sensed = 2 * nm, 2 * nm + 1
    if config.drive_layer is DriveLayer.TOP:
        top_electrode, bottom_electrode = driven, sensed
    else:
        top_electrode, bottom_electrode = sensed, driven
    row, col = cell

    edges = []
    for i in range(n):
        for j in range(m):
            k = i * m + j
            edges.append((k, nm + k, k))
            if j > 0:
                edges.append((k, k - 1, nm + k))
            elif i == row:
                edges.append((k, top_electrode, nm + k))
            if i > 0:
                edges.append((nm + k, nm + k - m, 2 * nm + k))
            elif j == col:
                edges.append((nm + k, bottom_electrode, 2 * nm + k))

    node_a, node_b, variable = (np.array(column, dtype=int) for column in zip(*edges))
    for array in (node_a, node_b, variable):
        array.setflags(write=False)
    return SkinTopology(grid, config, cell, node_a, node_b, variable)


def field_conductances(field: ResistanceField) -> np.ndarray:
    """Parameter vector ``[1/cell, 1/top_wire, 1/bottom_wire]`` (row-major blocks)."""
    return 1.0 / np.concatenate([field.cell.ravel(), field.top_wire.ravel(),
                                 field.bottom_wire.ravel()])


def conductances_to_field(grid: GridSpec, conductances: np.ndarray) -> ResistanceField:
    cells, top, bottom = (1.0 / block.reshape(grid.shape)
                          for block in np.split(np.asarray(conductances, dtype=float), 3))
    return ResistanceField(cells, top, bottom)


@dataclass(frozen=True, eq=False)
class Netlist:
    """Nodal system ``G v = injection`` of one measurement.

    The source reference resistor is folded in as a Norton injection at the
    driven electrode; the ground reference resistor ties the sensed
    electrode to ground.
    """
    topology: SkinTopology
    drive: DriveSetup
    edge_conductance: np.ndarray
    conductance: np.ndarray
    injection: np.ndarray

    @property
    def node_count(self) -> int:
        return self.conductance.shape[0]

    @property
    def edge_count(self) -> int:
        """Skin resistors; the two reference resistors are not counted."""
        return self.topology.edge_count


def build_netlist(field: ResistanceField, drive: DriveSetup, config: OhmmeterConfig,
                  cell: Cell) -> Netlist:
    """Assemble the conductance matrix for measuring ``cell`` under ``config``."""
    grid = field.require_valid().grid
    topology = skin_topology(grid, config, tuple(cell))
    g = field_conductances(field)[topology.variable]
    a, b = topology.node_a, topology.node_b
    size = topology.internal_nodes + 2

    conductance = np.zeros((size, size))
    np.add.at(conductance, (a, a), g)
    np.add.at(conductance, (b, b), g)
    np.add.at(conductance, (a, b), -g)
    np.add.at(conductance, (b, a), -g)
    conductance[topology.driven, topology.driven] += 1.0 / drive.r_ref_source
    conductance[topology.sensed, topology.sensed] += 1.0 / drive.r_ref_ground

    injection = np.zeros(size)
    injection[topology.driven] = drive.v_dd / drive.r_ref_source
    for array in (g, conductance, injection):
        array.setflags(write=False)
    return Netlist(topology, drive, g, conductance, injection)


def solve_nodes(netlist: Netlist) -> np.ndarray:
    """Node voltages solving ``G v = injection``."""
    try:
        factor = linalg.cho_factor(netlist.conductance)
    except linalg.LinAlgError as exc:
        raise SingularNetworkError(f'conductance matrix is not positive definite: {exc}') from exc
    voltages = linalg.cho_solve(factor, netlist.injection)
    if not np.all(np.isfinite(voltages)):
        raise SingularNetworkError('nodal solve produced non-finite voltages')
    return voltages


def worst_kcl_node(netlist: Netlist, voltages: np.ndarray, nodes=None) -> tuple[float, str]:
    """Largest net current imbalance over ``nodes`` and the label of the node carrying it."""
    imbalance = np.abs(netlist.conductance @ np.asarray(voltages, dtype=float) - netlist.injection)
    nodes = np.arange(imbalance.size) if nodes is None else np.asarray(nodes, dtype=int)
    if not nodes.size:
        return 0.0, ''
    worst = int(nodes[np.argmax(imbalance[nodes])])
    return float(imbalance[worst]), netlist.topology.node_label(worst)


def kcl_residual(netlist: Netlist, voltages: np.ndarray, nodes=None) -> float:
    """Largest net current imbalance ``|G v - injection|`` over ``nodes`` (all by default)."""
    return worst_kcl_node(netlist, voltages, nodes)[0]


def simulate_measurement(field: ResistanceField, drive: DriveSetup, config: OhmmeterConfig,
                         cell: Cell) -> tuple[float, float]:
    """``(v_s, v_r)``: voltage at the driven electrode and across the ground reference."""
    netlist = build_netlist(field, drive, config, cell)
    voltages = solve_nodes(netlist)
    return float(voltages[netlist.topology.driven]), float(voltages[netlist.topology.sensed])


def _generator(seed: Union[int, np.random.Generator, None]) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(Config.SEED if seed is None else seed)


def synthesize_frame(field: ResistanceField, drive: DriveSetup, noise_std: float = 0.0,
                     seed: Union[int, np.random.Generator, None] = None,
                     timestamp: Optional[int] = None) -> MeasurementFrame:
    """Simulate every reading of a scan, in readout order, with optional voltage noise."""
    if not noise_std >= 0:
        raise SkinModelError(f'noise_std must be non-negative, got {noise_std!r}')
    grid = field.require_valid().grid
    rng = _generator(seed)
    readings = np.empty(grid.shape + (4, 2))
    for (i, j), config in frame_ordering(grid):
        readings[i, j, config.position] = simulate_measurement(field, drive, config, (i, j))
        if noise_std > 0:
            readings[i, j, config.position] += rng.normal(0.0, noise_std, size=2)
    logger.debug('synthesized %s frame, noise_std %g', grid, noise_std)
    return MeasurementFrame(readings, timestamp)


@dataclass(frozen=True, eq=False)
class ClampedSolution:
    """Skin voltages with both selected electrodes held at measured voltages."""
    voltages: np.ndarray
    current: float
    voltage_jacobian: Optional[np.ndarray] = None
    current_gradient: Optional[np.ndarray] = None


def clamped_solve(topology: SkinTopology, conductances: np.ndarray, v_driven: float,
                  v_sensed: float, sensitivities: bool = False) -> ClampedSolution:
    """Solve internal node voltages with the electrodes clamped.

    ``current`` is what the skin delivers into the sensed electrode. With
    ``sensitivities`` the Jacobians of the internal voltages and of that
    current with respect to the parameter vector are returned as well.
    """
    size = topology.internal_nodes
    g = np.asarray(conductances, dtype=float)[topology.variable]
    a, b = topology.node_a, topology.node_b
    internal = b < size
    electrode_volts = np.where(b == topology.driven, v_driven, v_sensed)

    laplacian = np.zeros((size, size))
    np.add.at(laplacian, (a, a), g)
    bi, ai, gi = b[internal], a[internal], g[internal]
    np.add.at(laplacian, (bi, bi), gi)
    np.add.at(laplacian, (ai, bi), -gi)
    np.add.at(laplacian, (bi, ai), -gi)
    rhs = np.zeros(size)
    np.add.at(rhs, a[~internal], g[~internal] * electrode_volts[~internal])

    try:
        factor = linalg.cho_factor(laplacian)
    except linalg.LinAlgError as exc:
        raise SingularNetworkError(f'skin network is not positive definite: {exc}') from exc
    voltages = linalg.cho_solve(factor, rhs)

    far = np.where(internal, voltages[np.minimum(b, size - 1)], electrode_volts)
    drop = voltages[a] - far
    to_sense = np.nonzero(b == topology.sensed)[0]
    current = float(np.sum(g[to_sense] * drop[to_sense]))
    if not sensitivities:
        return ClampedSolution(voltages, current)

    inverse = linalg.cho_solve(factor, np.eye(size))
    edge_jacobian = -inverse[:, a] * drop
    edge_jacobian[:, internal] += inverse[:, bi] * drop[internal]
    voltage_jacobian = np.zeros((size, 3 * topology.grid.cells))
    voltage_jacobian[:, topology.variable] = edge_jacobian
    current_gradient = (g[to_sense, None] * voltage_jacobian[a[to_sense]]).sum(axis=0)
    current_gradient[topology.variable[to_sense]] += drop[to_sense]
    return ClampedSolution(voltages, current, voltage_jacobian, current_gradient)


def full_voltages(topology: SkinTopology, internal_voltages: np.ndarray, v_driven: float,
                  v_sensed: float) -> np.ndarray:
    """Internal voltages extended with the two electrode voltages (netlist node order)."""
    return np.concatenate([internal_voltages, [v_driven, v_sensed]])
