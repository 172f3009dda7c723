"""Two-stage circuit-state estimation of cell contact resistances.

Every measurement in a frame gets its own circuit state: a full set of cell
and stripe conductances plus the node voltages they imply. Voltages are
eliminated by solving the skin network with the driven electrode held at the
measured ``v_s`` and the sensed electrode at ``v_r``, so node KCL holds by
construction. What remains per state is KCL at the sensed electrode, where
the skin has to deliver exactly ``v_r / r_ref_ground``.

Both stages minimize a weighted sum of pair costs (A vs B, C vs D states of
a cell), chain costs (consecutive readout cells, same configuration) and,
in the second stage, the squared stripe resistances. The minimizer is a
projected Levenberg-Marquardt on the feasible manifold: a damped Gauss-Newton
step restricted to the linearized constraints, followed by a per-state
restoration back onto the constraint surface.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg, optimize, sparse
from scipy.sparse import linalg as sparse_linalg

from config import Config
from naive_estimator import naive_resistance
from netlist_sim import (build_netlist, clamped_solve, conductances_to_field, field_conductances,
                         full_voltages, skin_topology, worst_kcl_node)
from skin_model import (CircuitState, DimensionMismatchError, DriveSetup, GridSpec,
                        MeasurementFrame, ResistanceField, SkinModelError, frame_ordering)

logger = logging.getLogger(__name__)

OBJECTIVE_FLOOR = 1e-14
MIN_DAMPING = 1e-15
MAX_DAMPING = 1e16
ACTIVE_SET_PASSES = 4


class EstimationError(RuntimeError):
    """Raised when an ensemble cannot be built or solved."""


@dataclass(frozen=True)
class ObjectiveWeights:
    """Weights of the pair, chain and stripe-resistance costs."""
    alpha: float = 1.0
    beta: float = 1.0
    lambda_: float = 0.0

    def __post_init__(self):
        for name in ('alpha', 'beta', 'lambda_'):
            value = float(getattr(self, name))
            if not (np.isfinite(value) and value >= 0):
                raise SkinModelError(f'weight {name.rstrip("_")} must be finite and >= 0, got {value!r}')
            object.__setattr__(self, name, value)

    @classmethod
    def least_squares(cls, config=Config) -> 'ObjectiveWeights':
        return cls(config.LSQ_ALPHA, config.LSQ_BETA, 0.0)

    @classmethod
    def regularized(cls, config=Config) -> 'ObjectiveWeights':
        return cls(config.REG_ALPHA, config.REG_BETA, config.REG_LAMBDA)

    def to_dict(self) -> dict:
        return {'alpha': self.alpha, 'beta': self.beta, 'lambda': self.lambda_}


@dataclass(frozen=True)
class SolverSettings:
    max_iterations: int = 200
    feasibility_tol: float = 1e-6
    stationarity_tol: float = 1e-8
    wire_floor: float = 1e-4
    cell_floor: float = 1e-6
    open_circuit: float = 1e6
    wire_stiffness: float = 1e4
    initial_damping: float = 1e-3
    max_cells: int = 36

    def __post_init__(self):
        if self.max_iterations < 0:
            raise SkinModelError(f'max_iterations must be >= 0, got {self.max_iterations}')
        if self.max_cells < 1:
            raise SkinModelError(f'max_cells must be >= 1, got {self.max_cells}')
        for name in ('feasibility_tol', 'stationarity_tol', 'wire_floor', 'cell_floor',
                     'open_circuit', 'wire_stiffness', 'initial_damping'):
            if not getattr(self, name) > 0:
                raise SkinModelError(f'{name} must be positive, got {getattr(self, name)!r}')

    @classmethod
    def from_config(cls, config=Config) -> 'SolverSettings':
        return cls(max_iterations=config.MAX_ITERATIONS,
                   feasibility_tol=config.FEASIBILITY_TOL,
                   stationarity_tol=config.STATIONARITY_TOL,
                   wire_floor=config.WIRE_FLOOR_MOHM,
                   cell_floor=config.CELL_FLOOR_MOHM,
                   open_circuit=config.OPEN_CIRCUIT_MOHM,
                   wire_stiffness=config.WIRE_STIFFNESS,
                   max_cells=config.MAX_ESTIMATE_CELLS)

    def require_supported(self, grid: GridSpec) -> GridSpec:
        """Raise SkinModelError for grids larger than ``max_cells``."""
        if grid.cells > self.max_cells:
            raise SkinModelError(f'estimation supports up to {self.max_cells} cells, got {grid} '
                                 f'({grid.cells} cells)')
        return grid

    def bounds(self, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
        """Conductance bounds for the ``[cells, top wires, bottom wires]`` vector."""
        nm = grid.cells
        lower = np.full(3 * nm, 1.0 / self.open_circuit)
        upper = np.concatenate([np.full(nm, 1.0 / self.cell_floor),
                                np.full(2 * nm, 1.0 / self.wire_floor)])
        return lower, upper


@dataclass(frozen=True)
class SolveReport:
    stage: str
    objective: float
    max_kcl_residual: float
    iterations: int
    wall_time: float
    converged: bool
    message: str = ''

    def to_dict(self) -> dict:
        return {'stage': self.stage, 'objective': self.objective,
                'max_kcl_residual': self.max_kcl_residual, 'iterations': self.iterations,
                'wall_time': self.wall_time, 'converged': self.converged,
                'message': self.message}


@dataclass(frozen=True, eq=False)
class StateEnsemble:
    """One circuit state per ``(cell, config)`` of a frame, in readout order.

    ``conductances[s]`` is state ``s``'s ``[cells, top wires, bottom wires]``
    vector (1/MΩ); ``voltages[s]`` holds its top-layer then bottom-layer
    node voltages.
    """
    grid: GridSpec
    drive: DriveSetup
    frame: MeasurementFrame
    conductances: np.ndarray
    voltages: np.ndarray

    def __post_init__(self):
        if self.frame.grid != self.grid:
            raise DimensionMismatchError(f'frame grid {self.frame.grid} != ensemble grid {self.grid}')
        expected = {'conductances': (self.grid.states, 3 * self.grid.cells),
                    'voltages': (self.grid.states, 2 * self.grid.cells)}
        for name, shape in expected.items():
            array = np.array(getattr(self, name), dtype=float)
            if array.shape != shape:
                raise DimensionMismatchError(f'{name} must have shape {shape}, got {array.shape}')
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    @property
    def order(self):
        return frame_ordering(self.grid)

    @property
    def measured(self) -> np.ndarray:
        """``(states, 2)`` array of the ``(v_s, v_r)`` each state is bound to."""
        return np.array([self.frame.reading(cell, config) for cell, config in self.order])

    @classmethod
    def from_conductances(cls, frame: MeasurementFrame, drive: DriveSetup,
                          conductances: np.ndarray) -> 'StateEnsemble':
        """Ensemble whose voltages are the clamped solves of ``conductances``."""
        grid = frame.require_complete().grid
        conductances = np.asarray(conductances, dtype=float)
        voltages = np.empty((grid.states, 2 * grid.cells))
        for s, (cell, config) in enumerate(frame_ordering(grid)):
            v_s, v_r = frame.reading(cell, config)
            voltages[s] = clamped_solve(skin_topology(grid, config, cell), conductances[s],
                                        v_s, v_r).voltages
        return cls(grid, drive, frame, conductances, voltages)

    @classmethod
    def from_field(cls, frame: MeasurementFrame, drive: DriveSetup,
                   field: ResistanceField) -> 'StateEnsemble':
        """Every state carries the same resistance field."""
        grid = frame.grid
        field.require_valid(grid)
        return cls.from_conductances(frame, drive, np.tile(field_conductances(field), (grid.states, 1)))

    def rebind(self, frame: MeasurementFrame, drive: Optional[DriveSetup] = None) -> 'StateEnsemble':
        """Same conductances bound to a new frame."""
        if frame.grid != self.grid:
            raise DimensionMismatchError(f'cannot rebind a {self.grid} ensemble to a {frame.grid} frame')
        return StateEnsemble.from_conductances(frame, drive or self.drive, self.conductances)

    def state_field(self, s: int) -> ResistanceField:
        return conductances_to_field(self.grid, self.conductances[s])

    @property
    def states(self) -> list[CircuitState]:
        nm = self.grid.cells
        states = []
        for s, (cell, config) in enumerate(self.order):
            field = self.state_field(s)
            states.append(CircuitState(config, cell, field.top_wire, field.bottom_wire, field.cell,
                                       self.voltages[s, :nm].reshape(self.grid.shape),
                                       self.voltages[s, nm:].reshape(self.grid.shape)))
        return states

    def cell_resistances(self) -> np.ndarray:
        """Mean over each cell's four states of that cell's own resistance."""
        m = self.grid.cols
        result = np.empty(self.grid.shape)
        for u, (i, j) in enumerate(self.grid.readout_cells()):
            result[i, j] = np.mean(1.0 / self.conductances[4 * u:4 * u + 4, i * m + j])
        return result


def _pairs(grid: GridSpec) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """State index pairs compared by the pair cost and by the chain cost."""
    pair, chain = [], []
    for u in range(grid.cells):
        pair += [(4 * u, 4 * u + 1), (4 * u + 2, 4 * u + 3)]
        if u + 1 < grid.cells:
            chain += [(4 * u + c, 4 * (u + 1) + c) for c in range(4)]
    return pair, chain


def cost_f(ensemble: StateEnsemble) -> float:
    """Squared A/B and C/D differences of every conductance and node voltage."""
    x, v = ensemble.conductances, ensemble.voltages
    pair, _ = _pairs(ensemble.grid)
    return float(sum(np.sum((x[a] - x[b]) ** 2) + np.sum((v[a] - v[b]) ** 2) for a, b in pair))


def cost_c(ensemble: StateEnsemble) -> float:
    """Squared conductance differences between consecutive readout cells, per configuration."""
    x = ensemble.conductances
    _, chain = _pairs(ensemble.grid)
    return float(sum(np.sum((x[a] - x[b]) ** 2) for a, b in chain))


def cost_r(ensemble: StateEnsemble) -> float:
    """Sum of squared stripe resistances (MΩ²) over all states."""
    wires = ensemble.conductances[:, ensemble.grid.cells:]
    return float(np.sum((1.0 / wires) ** 2))


def weighted_cost(ensemble: StateEnsemble, weights: ObjectiveWeights) -> float:
    total = weights.alpha * cost_f(ensemble) + weights.beta * cost_c(ensemble)
    if weights.lambda_:
        total += weights.lambda_ * cost_r(ensemble)
    return total


def worst_kcl_violation(ensemble: StateEnsemble) -> tuple[float, str]:
    """Worst KCL imbalance over internal nodes and the sensed electrode of every state.

    Rebuilt from the netlist assembly rather than the clamped solve, so it
    checks the ensemble independently. Also returns where the imbalance sits.
    """
    worst, location = 0.0, ''
    for s, ((cell, config), (v_s, v_r)) in enumerate(zip(ensemble.order, ensemble.measured)):
        netlist = build_netlist(ensemble.state_field(s), ensemble.drive, config, cell)
        topology = netlist.topology
        voltages = full_voltages(topology, ensemble.voltages[s], v_s, v_r)
        nodes = list(range(topology.internal_nodes)) + [topology.sensed]
        residual, node = worst_kcl_node(netlist, voltages, nodes)
        if residual > worst or not location:
            worst, location = residual, f'node {node} of state {s} ({cell}, {config.label})'
    return worst, location


def max_kcl_residual(ensemble: StateEnsemble) -> float:
    return worst_kcl_violation(ensemble)[0]


def bootstrap_states(frame: MeasurementFrame, drive: DriveSetup,
                     settings: Optional[SolverSettings] = None) -> StateEnsemble:
    """Naive cell resistances and floor stripe resistances in every state."""
    settings = settings or SolverSettings.from_config()
    grid = frame.require_complete().grid
    cells = naive_resistance(frame, drive, settings.open_circuit, settings.cell_floor)
    wire = np.full(grid.shape, settings.wire_floor)
    return StateEnsemble.from_field(frame, drive, ResistanceField(cells, wire, wire))


@dataclass(frozen=True, eq=False)
class _Evaluation:
    objective: float
    residual: np.ndarray
    jacobian: sparse.csr_matrix
    voltages: np.ndarray
    violation: np.ndarray
    constraint_gradient: np.ndarray


class _StageProblem:
    """Objective, constraints and step computation for one stage."""

    def __init__(self, ensemble: StateEnsemble, weights: ObjectiveWeights,
                 settings: SolverSettings, stiffness: float):
        grid = ensemble.grid
        self.grid = grid
        self.weights = weights
        self.settings = settings
        self.topologies = [skin_topology(grid, config, cell) for cell, config in ensemble.order]
        measured = ensemble.measured
        self.v_s, self.v_r = measured[:, 0], measured[:, 1]
        self.target = self.v_r / ensemble.drive.r_ref_ground
        self.lower, self.upper = settings.bounds(grid)
        self.metric = np.concatenate([np.ones(grid.cells), np.full(2 * grid.cells, stiffness)])
        self.restore_tol = 1e-2 * settings.feasibility_tol
        self.pair, chain = _pairs(grid)
        self.states, self.params = grid.states, 3 * grid.cells
        blocks = []
        if weights.alpha > 0:
            blocks += [(item, np.sqrt(weights.alpha)) for item in self.pair]
        if weights.beta > 0:
            blocks += [(item, np.sqrt(weights.beta)) for item in chain]
        self.linear = self._difference_operator(blocks)

    def _difference_operator(self, blocks) -> sparse.csr_matrix:
        p = self.params
        index = np.arange(p)
        rows, cols, vals = [], [], []
        for row, ((a, b), weight) in enumerate(blocks):
            rows += [row * p + index] * 2
            cols += [a * p + index, b * p + index]
            vals += [np.full(p, weight), np.full(p, -weight)]
        shape = (len(blocks) * p, self.states * p)
        if not blocks:
            return sparse.csr_matrix(shape)
        return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=shape)

    def _solve(self, s: int, conductances: np.ndarray, sensitivities: bool = False):
        return clamped_solve(self.topologies[s], conductances, self.v_s[s], self.v_r[s],
                             sensitivities)

    def evaluate(self, x: np.ndarray) -> _Evaluation:
        solutions = [self._solve(s, x[s], sensitivities=True) for s in range(self.states)]
        voltages = np.array([sol.voltages for sol in solutions])
        violation = np.array([sol.current for sol in solutions]) - self.target
        gradient = np.array([sol.current_gradient for sol in solutions])

        residuals = [self.linear @ x.ravel()]
        jacobians = [self.linear]
        p, size = self.params, voltages.shape[1]
        if self.weights.alpha > 0:
            weight = np.sqrt(self.weights.alpha)
            rows, cols, vals = [], [], []
            row_index = np.repeat(np.arange(size), p)
            col_index = np.tile(np.arange(p), size)
            for k, (a, b) in enumerate(self.pair):
                for state, sign in ((a, weight), (b, -weight)):
                    rows.append(k * size + row_index)
                    cols.append(state * p + col_index)
                    vals.append(sign * solutions[state].voltage_jacobian.ravel())
            residuals.append(weight * np.concatenate([voltages[a] - voltages[b] for a, b in self.pair]))
            jacobians.append(sparse.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(len(self.pair) * size, self.states * p)))
        if self.weights.lambda_ > 0:
            weight = np.sqrt(self.weights.lambda_)
            wires = x[:, self.grid.cells:]
            columns = (np.arange(self.states)[:, None] * p
                       + np.arange(self.grid.cells, p)[None, :]).ravel()
            residuals.append(weight / wires.ravel())
            jacobians.append(sparse.csr_matrix(
                (-weight / wires.ravel() ** 2, (np.arange(columns.size), columns)),
                shape=(columns.size, self.states * p)))

        residual = np.concatenate(residuals)
        return _Evaluation(float(residual @ residual), residual, sparse.vstack(jacobians).tocsr(),
                           voltages, violation, gradient)

    def restore(self, x: np.ndarray) -> tuple[np.ndarray, float]:
        """Project every state back onto its sensed-current constraint."""
        x = np.clip(x, self.lower, self.upper)
        worst = 0.0
        for s in range(self.states):
            x[s], violation = self._restore_state(s, x[s])
            worst = max(worst, abs(violation))
        return x, worst

    def _restore_state(self, s: int, xs: np.ndarray) -> tuple[np.ndarray, float]:
        solution = self._solve(s, xs, sensitivities=True)
        h0 = solution.current - self.target[s]
        if abs(h0) <= self.restore_tol:
            return xs, h0
        # Relative moves along the constraint gradient, stiffer for stripes.
        direction = xs ** 2 / self.metric * solution.current_gradient
        slope = float(solution.current_gradient @ direction)
        if not slope > 0:
            return xs, h0

        def along(t):
            return np.clip(xs + t * direction, self.lower, self.upper)

        def violation(t):
            return self._solve(s, along(t)).current - self.target[s]

        seen = [(0.0, h0)]
        t_prev, h_prev, t = 0.0, h0, -h0 / slope
        for _ in range(6):
            h = violation(t)
            seen.append((t, h))
            if abs(h) <= self.restore_tol:
                return along(t), h
            if h == h_prev or not np.isfinite(h):
                break
            t_prev, h_prev, t = t, h, t - h * (t - t_prev) / (h - h_prev)

        crossing = [t for t, h in seen if np.sign(h) != np.sign(h0)]
        if crossing:
            far = min(crossing, key=abs)
        else:
            far = -h0 / slope
            for _ in range(60):
                far *= 2.0
                if np.sign(violation(far)) != np.sign(h0):
                    break
            else:
                t, h = min(seen, key=lambda item: abs(item[1]))
                return along(t), h
        t = optimize.brentq(violation, min(0.0, far), max(0.0, far),
                            xtol=1e-15 * abs(far) + 1e-300, rtol=4e-15, maxiter=200)
        return along(t), violation(t)

    def step(self, x: np.ndarray, evaluation: _Evaluation,
             damping: float) -> Optional[tuple[np.ndarray, float]]:
        """Damped Gauss-Newton step on the linearized constraints, with an active set at the bounds."""
        flat = x.ravel()
        lower = np.tile(self.lower, self.states)
        upper = np.tile(self.upper, self.states)
        jacobian = evaluation.jacobian
        gradient = jacobian.T @ evaluation.residual
        normal = (jacobian.T @ jacobian).tocsc()
        scale = normal.diagonal() * np.tile(self.metric, self.states)
        scale = np.maximum(scale, 1e-12 * scale.max() if scale.max() > 0 else 1.0)

        # One row per state, nonzero only on that state's own parameters.
        norms = np.linalg.norm(evaluation.constraint_gradient, axis=1)
        norms[norms == 0] = 1.0
        rows = np.repeat(np.arange(self.states), self.params)
        constraint = sparse.csc_matrix(
            ((evaluation.constraint_gradient / norms[:, None]).ravel(), (rows, np.arange(flat.size))),
            shape=(self.states, flat.size))
        violation = evaluation.violation / norms

        free = np.ones(flat.size, dtype=bool)
        for _ in range(ACTIVE_SET_PASSES):
            p = self._newton(normal, scale, damping, gradient, constraint, violation, free)
            if p is None:
                return None
            outward = (((flat <= lower * (1 + 1e-12)) & (p < 0))
                       | ((flat >= upper * (1 - 1e-12)) & (p > 0)))
            pinned = outward & free
            if not pinned.any():
                break
            free &= ~pinned
        predicted = -float(2.0 * gradient @ p + p @ (normal @ p))
        return p.reshape(x.shape), predicted

    @staticmethod
    def _newton(normal, scale, damping, gradient, constraint, violation, free):
        index = np.nonzero(free)[0]
        if index.size == 0:
            return np.zeros(free.size)
        hessian = normal[index][:, index] + sparse.diags(damping * scale[index], format='csc')
        try:
            factor = sparse_linalg.splu(hessian.tocsc())
        except RuntimeError:
            return None
        a = constraint[:, index]
        h_g = factor.solve(gradient[index])
        h_a = factor.solve(a.T.toarray())
        if not (np.all(np.isfinite(h_g)) and np.all(np.isfinite(h_a))):
            return None
        multipliers = linalg.lstsq(a @ h_a, violation - a @ h_g)[0]
        p = np.zeros(free.size)
        p[index] = -(h_g + h_a @ multipliers)
        return p


def _run_stage(ensemble: StateEnsemble, weights: ObjectiveWeights, settings: SolverSettings,
               stiffness: float, stage: str) -> tuple[StateEnsemble, SolveReport]:
    started = time.perf_counter()
    if not np.all(np.isfinite(ensemble.conductances)):
        raise EstimationError(f'{stage} stage started from non-finite conductances')
    problem = _StageProblem(ensemble, weights, settings, stiffness)
    x, _ = problem.restore(np.array(ensemble.conductances))
    current = problem.evaluate(x)
    damping, growth = settings.initial_damping, 2.0
    converged, message = False, 'iteration cap reached'
    iterations = 0

    while iterations < settings.max_iterations:
        if current.objective <= OBJECTIVE_FLOOR:
            converged, message = True, 'objective vanished'
            break
        proposal = problem.step(x, current, damping)
        iterations += 1
        if proposal is not None:
            step, predicted = proposal
            if predicted <= settings.stationarity_tol * current.objective:
                converged, message = True, 'stationary'
                break
            trial, _ = problem.restore(x + step)
            candidate = problem.evaluate(trial)
            actual = current.objective - candidate.objective
            if np.isfinite(candidate.objective) and actual > 0:
                ratio = actual / predicted
                previous = current.objective
                logger.debug('%s iteration %d: objective %.6e -> %.6e, damping %.2e',
                             stage, iterations, previous, candidate.objective, damping)
                x, current = trial, candidate
                damping = max(MIN_DAMPING, damping * max(1.0 / 3.0, 1.0 - (2.0 * ratio - 1.0) ** 3))
                growth = 2.0
                tol = settings.stationarity_tol * previous
                if actual <= tol and predicted <= tol:
                    converged, message = True, 'relative reduction below tolerance'
                    break
                continue
        damping *= growth
        growth *= 2.0
        if damping > MAX_DAMPING:
            converged, message = True, 'no further decrease possible'
            break

    result = StateEnsemble(ensemble.grid, ensemble.drive, ensemble.frame, x, current.voltages)
    residual, location = worst_kcl_violation(result)
    if residual > settings.feasibility_tol:
        converged, message = False, f'infeasible: KCL residual {residual:.3e} at {location}'
    report = SolveReport(stage, current.objective, residual, iterations,
                         time.perf_counter() - started, converged, message)
    log = logger.info if converged else logger.warning
    log('%s stage on %s grid: %d iterations, objective %.6e, KCL residual %.2e, %.3fs (%s)',
        stage, ensemble.grid, iterations, report.objective, residual, report.wall_time, message)
    return result, report


def solve_feasible(ensemble: StateEnsemble, weights: Optional[ObjectiveWeights] = None,
                   settings: Optional[SolverSettings] = None) -> tuple[StateEnsemble, SolveReport]:
    """Minimize the weighted pair and chain costs over feasible ensembles.

    Stripe conductances are stiffened so the many directions the data leave
    open stay near where they started.
    """
    weights = weights or ObjectiveWeights.least_squares()
    settings = settings or SolverSettings.from_config()
    return _run_stage(ensemble, weights, settings, settings.wire_stiffness, 'feasible')


def solve_regularized(ensemble: StateEnsemble, weights: Optional[ObjectiveWeights] = None,
                      settings: Optional[SolverSettings] = None) -> tuple[StateEnsemble, SolveReport]:
    """Second stage: pair and chain costs plus the squared stripe resistances."""
    weights = weights or ObjectiveWeights.regularized()
    settings = settings or SolverSettings.from_config()
    return _run_stage(ensemble, weights, settings, 1.0, 'regularized')


@dataclass(frozen=True, eq=False)
class EstimationResult:
    resistances: np.ndarray
    feasible_resistances: np.ndarray
    naive_resistances: np.ndarray
    reports: tuple[SolveReport, SolveReport]
    ensemble: StateEnsemble

    @property
    def converged(self) -> bool:
        return all(report.converged for report in self.reports)

    @property
    def iterations(self) -> int:
        return sum(report.iterations for report in self.reports)

    def to_dict(self) -> dict:
        return {'resistances': self.resistances.tolist(),
                'feasible_resistances': self.feasible_resistances.tolist(),
                'naive_resistances': self.naive_resistances.tolist(),
                'reports': [report.to_dict() for report in self.reports],
                'converged': self.converged}


def estimate(frame: MeasurementFrame, drive: Optional[DriveSetup] = None,
             weights_lsq: Optional[ObjectiveWeights] = None,
             weights_reg: Optional[ObjectiveWeights] = None,
             settings: Optional[SolverSettings] = None,
             warm_start: Optional[EstimationResult] = None) -> EstimationResult:
    """Bootstrap, then the feasible stage, then the regularized stage.

    Args:
        frame: Complete measurement frame.
        drive: Drive circuit; defaults to the configured one.
        weights_lsq: First-stage weights.
        weights_reg: Second-stage weights.
        settings: Solver settings.
        warm_start: Previous result whose final ensemble replaces the bootstrap.

    Returns:
        EstimationResult with the per-cell mean resistance of the final ensemble.

    Raises:
        SkinModelError: If the frame is incomplete or its grid exceeds
            ``settings.max_cells``.
        EstimationError: If no feasible ensemble can be built.
    """
    drive = drive or DriveSetup.from_config()
    settings = settings or SolverSettings.from_config()
    settings.require_supported(frame.grid)
    frame.require_complete()
    naive = naive_resistance(frame, drive, settings.open_circuit, settings.cell_floor)
    if warm_start is not None:
        ensemble = warm_start.ensemble.rebind(frame, drive)
    else:
        ensemble = bootstrap_states(frame, drive, settings)
    feasible, first = solve_feasible(ensemble, weights_lsq, settings)
    final, second = solve_regularized(feasible, weights_reg, settings)
    return EstimationResult(final.cell_resistances(), feasible.cell_resistances(), naive,
                            (first, second), final)
