"""Shared test fixtures for all tests."""
import pytest

from skin_model import DriveSetup, GridSpec, ResistanceField


@pytest.fixture
def app():
    """Create Flask app for testing."""
    # Import app here to avoid issues with module-level imports
    from app import app
    import app as app_module

    # Configure app for testing
    app.config['TESTING'] = True

    # Reset global state before each test
    app_module.stream_thread = None
    app_module.stop_event.clear()
    app_module.current_interval = app.config.get('STREAM_INTERVAL', 1.0)

    yield app

    # Cleanup: stop any running threads
    if app_module.stream_thread and app_module.stream_thread.is_alive():
        app_module.stop_event.set()
        app_module.stream_thread.join(timeout=5)


@pytest.fixture
def client(app):
    """Flask test client."""
    return app.test_client()


@pytest.fixture
def socketio_client(app):
    """SocketIO test client."""
    from app import socketio
    return socketio.test_client(app)


@pytest.fixture
def mock_stream_update(mocker):
    """Patch the stream service so every tick yields the same update."""
    update = {
        'tick': 0,
        'cell_forces': [[0.0, 0.0], [0.0, 2.5]],
        'conductances': [[1.0, 1.0], [1.0, 2.25]],
        'converged': True,
        'timestamp': 1700000000.0
    }
    return mocker.patch('app.stream_service.next_update', return_value=update)


@pytest.fixture
def mock_stream_failure(mocker):
    """Patch the stream service so every tick fails to estimate."""
    return mocker.patch('app.stream_service.next_update', return_value=None)


@pytest.fixture
def drive():
    """Default drive circuit: 1 V source, 0.1 MΩ references."""
    return DriveSetup()


@pytest.fixture
def unit_drive():
    """Drive circuit with 1 MΩ references."""
    return DriveSetup(1.0, 1.0, 1.0)


@pytest.fixture
def ghost_field():
    """2x2 skin with three pressed cells; (1, 1) shows a phantom press to a naive readout."""
    return ResistanceField.pressed(GridSpec(2, 2), [(0, 0), (0, 1), (1, 0)],
                                   pressed=0.001, unpressed=1.0, wire=1e-4)


@pytest.fixture
def ghost_frame(ghost_field, drive):
    """Noise-free scan of the ghost field."""
    from netlist_sim import synthesize_frame
    return synthesize_frame(ghost_field, drive)


@pytest.fixture
def mock_env(monkeypatch):
    """Mock environment variables for testing."""
    def _set_env(**kwargs):
        for key, value in kwargs.items():
            monkeypatch.setenv(key, value)

    return _set_env
