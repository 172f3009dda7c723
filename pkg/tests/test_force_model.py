"""Tests for force_model module."""
from types import SimpleNamespace

import numpy as np
import pytest

from calibration import ForceLaw
from estimator import EstimationError, SolverSettings, estimate
from experiments import synthetic_stream
from force_model import (calibrate_single_touch, ghost_correlation, press_release_forces,
                         process_stream)
from skin_model import DimensionMismatchError, GridSpec, MeasurementFrame, SkinModelError


def _flat_frame(grid=GridSpec(1, 1), value=0.5):
    return MeasurementFrame(np.full(grid.shape + (4, 2), value))


def _fake_result(resistance, converged=True):
    reports = (SimpleNamespace(iterations=3, message='stationary'),
               SimpleNamespace(iterations=2, message='stationary'))
    return SimpleNamespace(resistances=np.full((1, 1), resistance), converged=converged,
                           reports=reports)


@pytest.mark.unit
def test_press_release_profile():
    """Test a half-sine from zero to the peak and back."""
    forces = press_release_forces(5, 4.0)

    assert forces.tolist() == pytest.approx([0.0, 4.0 * np.sqrt(0.5), 4.0, 4.0 * np.sqrt(0.5), 0.0],
                                            abs=1e-12)
    assert press_release_forces(1, 2.5).tolist() == [2.5]


@pytest.mark.unit
def test_ghost_correlation_picks_row_and_column():
    """Test that only untouched cells sharing a row or column are compared."""
    ramp = np.linspace(0.0, 1.0, 6)
    series = np.zeros((6, 2, 2))
    series[:, 1, 1] = ramp
    series[:, 0, 1] = -2.0 * ramp
    series[:, 0, 0] = ramp

    assert ghost_correlation(series, (1, 1)) == pytest.approx(1.0)

    series[:, 0, 1] = 0.3
    assert ghost_correlation(series, (1, 1)) == 0.0


@pytest.mark.unit
def test_ghost_correlation_of_flat_touched_series():
    """Test that a touched cell that never changes has no correlation."""
    series = np.random.default_rng(0).normal(size=(5, 2, 2))
    series[:, 0, 0] = 1.0

    assert ghost_correlation(series, (0, 0)) == 0.0


@pytest.mark.unit
def test_ghost_correlation_validation():
    """Test shape and cell checks."""
    with pytest.raises(DimensionMismatchError):
        ghost_correlation(np.zeros((3, 3)), (0, 0))
    with pytest.raises(SkinModelError):
        ghost_correlation(np.zeros((3, 2, 2)), (2, 0))


@pytest.mark.unit
def test_empty_stream_rejected(drive):
    """Test that a stream needs at least one frame."""
    with pytest.raises(SkinModelError):
        process_stream([], drive)


@pytest.mark.unit
def test_stream_grid_must_not_change(mocker, drive):
    """Test that every frame of a stream shares one grid."""
    mocker.patch('force_model.estimate', return_value=_fake_result(0.5))

    with pytest.raises(DimensionMismatchError):
        process_stream([_flat_frame(), _flat_frame(GridSpec(1, 2))], drive)


@pytest.mark.unit
def test_failed_frame_carries_previous_solution(mocker, drive):
    """Test that a failing frame repeats the last good estimate and is flagged."""
    estimate = mocker.patch('force_model.estimate', side_effect=[
        _fake_result(0.5), EstimationError('boom'), _fake_result(0.25, converged=False),
        _fake_result(0.2)])

    result = process_stream([_flat_frame() for _ in range(4)], drive)

    assert result.conductances[:, 0, 0].tolist() == pytest.approx([2.0, 2.0, 2.0, 5.0])
    assert result.converged == [True, False, False, True]
    assert result.iterations == [5, 0, 5, 5]
    assert estimate.call_count == 4
    first = estimate.call_args_list[0]
    assert first.kwargs['warm_start'] is None
    assert estimate.call_args_list[3].kwargs['warm_start'].resistances[0, 0] == 0.5


@pytest.mark.unit
def test_first_frame_failure_without_fallback(mocker, drive):
    """Test that a stream whose first frame raises cannot continue."""
    mocker.patch('force_model.estimate', side_effect=EstimationError('boom'))

    with pytest.raises(EstimationError):
        process_stream([_flat_frame()], drive)


@pytest.mark.unit
def test_unconverged_first_frame_is_kept(mocker, drive):
    """Test that an unconverged first result still seeds the stream."""
    mocker.patch('force_model.estimate', return_value=_fake_result(0.5, converged=False))

    result = process_stream([_flat_frame(), _flat_frame()], drive)

    assert result.conductances[:, 0, 0].tolist() == pytest.approx([2.0, 2.0])
    assert result.converged == [False, False]


@pytest.mark.unit
def test_stream_table(mocker, drive):
    """Test the per-tick, per-cell stream table."""
    mocker.patch('force_model.estimate', return_value=_fake_result(0.5))
    law = ForceLaw()

    result = process_stream([_flat_frame(), _flat_frame()], drive, {(0, 0): law.model_for((0, 0))})
    lines = result.to_csv().splitlines()

    assert lines[0] == 'tick,i,j,conductance,force,raw_v_r,converged'
    assert len(lines) == 3
    assert result.forces[:, 0, 0].tolist() == pytest.approx([2.0, 2.0])


@pytest.mark.integration
def test_single_touch_calibration_matches_law(drive):
    """Test that solved conductances of lone presses follow the generating law."""
    law = ForceLaw()

    samples = calibrate_single_touch(GridSpec(1, 2), law, (0.0, 2.0), drive)

    assert len(samples) == 4
    assert {s.cell for s in samples} == {(0, 0), (0, 1)}
    for sample in samples:
        assert sample.conductance == pytest.approx(1.0 + 0.5 * sample.force, rel=1e-3)
        assert 0 < sample.raw_v_r < drive.v_dd


@pytest.mark.integration
@pytest.mark.slow
def test_press_release_stream(drive):
    """Test forces and ghost correlation over a press-and-release on one cell."""
    law = ForceLaw()
    grid = GridSpec(2, 2)
    frames = synthetic_stream(grid, (1, 1), drive, law, frames=5, peak_force=4.0, wire=1e-4)
    models = {cell: law.model_for(cell) for cell in np.ndindex(2, 2)}

    result = process_stream(frames, drive, models)

    assert result.ticks == 5
    assert all(result.converged)
    np.testing.assert_allclose(result.forces[:, 1, 1], press_release_forces(5, 4.0), atol=0.05)
    assert ghost_correlation(result.raw_v_r, (1, 1)) > 0.9


@pytest.fixture
def press_stream(drive):
    """Ten frames of a press-and-release on (1, 1) of a 2x2 skin with 0.001 MΩ stripes."""
    return synthetic_stream(GridSpec(2, 2), (1, 1), drive, ForceLaw(), frames=10,
                            peak_force=4.0, wire=1e-3)


@pytest.mark.integration
@pytest.mark.slow
def test_solved_series_decorrelates_the_press(press_stream, drive):
    """Test that neighbours of the pressed cell follow it in raw voltages but not once solved."""
    result = process_stream(press_stream, drive)

    raw = ghost_correlation(result.raw_v_r, (1, 1))
    solved = ghost_correlation(result.conductances, (1, 1))

    assert raw > 0.9
    assert solved < raw


@pytest.mark.integration
@pytest.mark.slow
def test_warm_start_needs_fewer_iterations(press_stream, drive):
    """Test that chaining frames saves iterations against solving each from the bootstrap."""
    warm = process_stream(press_stream, drive)

    cold = [estimate(frame, drive).iterations for frame in press_stream]

    assert np.mean(warm.iterations) < np.mean(cold)


@pytest.mark.integration
@pytest.mark.slow
def test_constant_stream_is_stationary(drive):
    """Test that an unchanging scene gives the same solution every frame."""
    settings = SolverSettings.from_config()
    frames = synthetic_stream(GridSpec(2, 2), (1, 1), drive, ForceLaw(), frames=1,
                              peak_force=2.0, wire=1e-3)
    stream = [frames[0].with_timestamp(tick) for tick in range(5)]

    result = process_stream(stream, drive, settings=settings)

    deviation = np.max(np.abs(result.conductances - result.conductances[0]))
    assert deviation <= 10 * settings.feasibility_tol
