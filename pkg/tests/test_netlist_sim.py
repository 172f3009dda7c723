"""Tests for netlist_sim module."""
import numpy as np
import pytest

from netlist_sim import (CellIndexError, build_netlist, clamped_solve, conductances_to_field,
                         field_conductances, kcl_residual, simulate_measurement, skin_topology,
                         solve_nodes, synthesize_frame, worst_kcl_node)
from skin_model import (CONFIGS, DriveLayer, DriveSetup, GridSpec, OhmmeterConfig,
                        ResistanceField, SkinModelError)


def reference_nodes(field, drive, config, cell):
    """Node analysis of the crossbar written out resistor by resistor.

    Keys are ('T', i, j), ('B', i, j), 'D' for the driven electrode and 'S'
    for the sensed one.
    """
    n, m = field.cell.shape
    row, col = cell
    top_end, bottom_end = ('D', 'S') if config.drive_layer is DriveLayer.TOP else ('S', 'D')
    resistors = []
    for i in range(n):
        for j in range(m):
            resistors.append((('T', i, j), ('B', i, j), field.cell[i, j]))
            if j > 0:
                resistors.append((('T', i, j - 1), ('T', i, j), field.top_wire[i, j]))
            if i > 0:
                resistors.append((('B', i - 1, j), ('B', i, j), field.bottom_wire[i, j]))
    resistors.append((top_end, ('T', row, 0), field.top_wire[row, 0]))
    resistors.append((bottom_end, ('B', 0, col), field.bottom_wire[0, col]))
    resistors.append(('source', 'D', drive.r_ref_source))
    resistors.append(('S', 'ground', drive.r_ref_ground))

    fixed = {'source': drive.v_dd, 'ground': 0.0}
    nodes = sorted({node for a, b, _ in resistors for node in (a, b)} - set(fixed), key=str)
    index = {node: k for k, node in enumerate(nodes)}
    matrix = np.zeros((len(nodes), len(nodes)))
    rhs = np.zeros(len(nodes))
    for a, b, resistance in resistors:
        g = 1.0 / resistance
        for here, there in ((a, b), (b, a)):
            if here in fixed:
                continue
            matrix[index[here], index[here]] += g
            if there in fixed:
                rhs[index[here]] += g * fixed[there]
            else:
                matrix[index[here], index[there]] -= g
    voltages = np.linalg.solve(matrix, rhs)
    return {node: voltages[k] for node, k in index.items()}


def reference_readings(field, drive, config, cell):
    nodes = reference_nodes(field, drive, config, cell)
    return nodes['D'], nodes['S']


def random_field(grid, seed):
    rng = np.random.default_rng(seed)
    return ResistanceField(rng.uniform(0.01, 2.0, grid.shape),
                           rng.uniform(1e-4, 0.05, grid.shape),
                           rng.uniform(1e-4, 0.05, grid.shape))


@pytest.mark.unit
def test_single_cell_voltage_divider(unit_drive):
    """Test a 1x1 skin totalling 1 MΩ between 1 MΩ references."""
    field = ResistanceField([[0.8]], [[0.1]], [[0.1]])

    for config in CONFIGS:
        v_s, v_r = simulate_measurement(field, unit_drive, config, (0, 0))
        assert v_s == pytest.approx(2.0 / 3.0, abs=1e-12)
        assert v_r == pytest.approx(1.0 / 3.0, abs=1e-12)


@pytest.mark.unit
@pytest.mark.parametrize('grid,seed', [(GridSpec(2, 2), 1), (GridSpec(3, 2), 2), (GridSpec(2, 4), 3)])
def test_matches_reference_analysis(grid, seed, drive):
    """Test every reading against an independently assembled network."""
    field = random_field(grid, seed)

    frame = synthesize_frame(field, drive)

    for cell in grid.readout_cells():
        for config in CONFIGS:
            expected = reference_readings(field, drive, config, cell)
            assert frame.reading(cell, config) == pytest.approx(expected, abs=1e-12)


@pytest.mark.unit
@pytest.mark.slow
def test_node_voltages_match_reference_on_random_grids(drive):
    """Test every node voltage on 200 grids up to 3x3 with resistances spread over six decades."""
    rng = np.random.default_rng(11)
    worst = 0.0

    for _ in range(200):
        grid = GridSpec(int(rng.integers(1, 4)), int(rng.integers(1, 4)))
        field = ResistanceField(*(10.0 ** rng.uniform(-3.0, 3.0, (3,) + grid.shape)))
        cell = (int(rng.integers(grid.rows)), int(rng.integers(grid.cols)))
        config = CONFIGS[int(rng.integers(len(CONFIGS)))]
        netlist = build_netlist(field, drive, config, cell)
        topology = netlist.topology

        voltages = solve_nodes(netlist)
        expected = reference_nodes(field, drive, config, cell)

        for k in range(topology.internal_nodes):
            layer = 'T' if k < grid.cells else 'B'
            i, j = divmod(k % grid.cells, grid.cols)
            worst = max(worst, abs(voltages[k] - expected[(layer, i, j)]))
        worst = max(worst, abs(voltages[topology.driven] - expected['D']),
                    abs(voltages[topology.sensed] - expected['S']))

    assert worst <= 1e-9


@pytest.mark.unit
def test_scale_invariance(drive):
    """Test that scaling every resistance together leaves the voltages unchanged."""
    field = random_field(GridSpec(2, 3), 4)

    base = synthesize_frame(field, drive)
    scaled = synthesize_frame(field.scaled(7.5), drive.scaled(7.5))

    np.testing.assert_allclose(scaled.readings, base.readings, atol=1e-12)


@pytest.mark.unit
def test_reciprocity_with_equal_references(drive):
    """Test that swapping drive and sense layers changes nothing when both references match."""
    frame = synthesize_frame(random_field(GridSpec(3, 3), 5), drive)

    np.testing.assert_allclose(frame.v_r(OhmmeterConfig.C), frame.v_r(OhmmeterConfig.A), atol=1e-12)
    np.testing.assert_allclose(frame.v_s(OhmmeterConfig.C), frame.v_s(OhmmeterConfig.A), atol=1e-12)


@pytest.mark.unit
def test_voltages_are_bounded_and_ordered(drive):
    """Test 0 < v_r < v_s < v_dd for every reading."""
    frame = synthesize_frame(random_field(GridSpec(3, 2), 6), drive)

    v_s, v_r = frame.readings[..., 0], frame.readings[..., 1]
    assert np.all(v_r > 0)
    assert np.all(v_r < v_s)
    assert np.all(v_s < drive.v_dd)


@pytest.mark.unit
@pytest.mark.parametrize('grid,edges', [(GridSpec(1, 1), 3), (GridSpec(2, 2), 10), (GridSpec(3, 4), 31)])
def test_edge_counts(grid, edges):
    """Test cells plus connected stripe segments, two of them to the electrodes."""
    field = ResistanceField.uniform(grid)

    netlist = build_netlist(field, DriveSetup(), OhmmeterConfig.A, (0, 0))

    assert netlist.edge_count == edges
    assert netlist.node_count == 2 * grid.cells + 2


@pytest.mark.unit
def test_nodal_solution_satisfies_kcl(drive):
    """Test that the solved node voltages balance every node."""
    netlist = build_netlist(random_field(GridSpec(3, 3), 7), drive, OhmmeterConfig.D, (2, 1))

    voltages = solve_nodes(netlist)

    assert kcl_residual(netlist, voltages) < 1e-9
    assert kcl_residual(netlist, voltages, nodes=[netlist.topology.sensed]) < 1e-9


@pytest.mark.unit
def test_worst_kcl_node_is_named(unit_drive):
    """Test that the largest imbalance comes with the node carrying it."""
    field = ResistanceField([[0.8]], [[0.1]], [[0.1]])
    netlist = build_netlist(field, unit_drive, OhmmeterConfig.A, (0, 0))
    zeros = np.zeros(netlist.node_count)

    assert worst_kcl_node(netlist, zeros) == (pytest.approx(1.0), 'driven')
    assert worst_kcl_node(netlist, zeros, nodes=[0, 1]) == (0.0, 'T(0,0)')
    assert worst_kcl_node(netlist, zeros, nodes=[]) == (0.0, '')


@pytest.mark.unit
def test_topology_rejects_outside_cell():
    """Test that measuring a cell outside the grid raises."""
    with pytest.raises(CellIndexError):
        skin_topology(GridSpec(2, 2), OhmmeterConfig.A, (2, 0))


@pytest.mark.unit
def test_node_labels():
    """Test readable node names."""
    topology = skin_topology(GridSpec(2, 3), OhmmeterConfig.A, (0, 0))

    assert topology.node_label(4) == 'T(1,1)'
    assert topology.node_label(6 + 5) == 'B(1,2)'
    assert topology.node_label(12) == 'driven'
    assert topology.node_label(13) == 'sensed'


@pytest.mark.unit
def test_conductance_vector_round_trip():
    """Test the [cells, top, bottom] conductance layout."""
    field = random_field(GridSpec(2, 3), 8)

    x = field_conductances(field)

    assert x.shape == (18,)
    assert x[0] == pytest.approx(1.0 / field.cell[0, 0])
    assert x[6 + 4] == pytest.approx(1.0 / field.top_wire[1, 1])
    back = conductances_to_field(GridSpec(2, 3), x)
    np.testing.assert_allclose(back.bottom_wire, field.bottom_wire)


@pytest.mark.unit
def test_clamped_solve_at_truth(drive):
    """Test that the true field delivers v_r / r_ref_ground when the electrodes are clamped."""
    field = random_field(GridSpec(2, 3), 9)
    cell, config = (1, 2), OhmmeterConfig.C
    netlist = build_netlist(field, drive, config, cell)
    voltages = solve_nodes(netlist)
    v_s, v_r = voltages[netlist.topology.driven], voltages[netlist.topology.sensed]

    solution = clamped_solve(netlist.topology, field_conductances(field), v_s, v_r)

    assert solution.current == pytest.approx(v_r / drive.r_ref_ground, rel=1e-10)
    np.testing.assert_allclose(solution.voltages, voltages[:-2], atol=1e-12)


@pytest.mark.unit
def test_clamped_solve_sensitivities():
    """Test the current gradient and voltage Jacobian against finite differences."""
    grid = GridSpec(2, 2)
    topology = skin_topology(grid, OhmmeterConfig.A, (0, 1))
    x = field_conductances(random_field(grid, 10))

    solution = clamped_solve(topology, x, 0.9, 0.2, sensitivities=True)

    for k in range(x.size):
        step = 1e-6 * x[k]
        plus, minus = x.copy(), x.copy()
        plus[k] += step
        minus[k] -= step
        high = clamped_solve(topology, plus, 0.9, 0.2)
        low = clamped_solve(topology, minus, 0.9, 0.2)
        slope = (high.current - low.current) / (2 * step)
        assert solution.current_gradient[k] == pytest.approx(slope, rel=1e-5, abs=1e-9)
        np.testing.assert_allclose(solution.voltage_jacobian[:, k],
                                   (high.voltages - low.voltages) / (2 * step),
                                   rtol=1e-5, atol=1e-9)


@pytest.mark.unit
def test_noise_is_seeded(drive):
    """Test that noisy frames repeat for the same seed."""
    field = random_field(GridSpec(2, 2), 11)

    first = synthesize_frame(field, drive, noise_std=1e-3, seed=42)
    second = synthesize_frame(field, drive, noise_std=1e-3, seed=42)
    clean = synthesize_frame(field, drive)

    assert first == second
    assert not np.allclose(first.readings, clean.readings)
    with pytest.raises(SkinModelError):
        synthesize_frame(field, drive, noise_std=-1.0)


@pytest.mark.unit
def test_timestamp_is_attached(drive):
    """Test that the frame carries the given timestamp."""
    frame = synthesize_frame(ResistanceField.uniform(GridSpec(1, 1)), drive, timestamp=12)

    assert frame.timestamp == 12
