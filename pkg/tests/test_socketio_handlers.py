"""Tests for SocketIO handlers."""
import pytest
import time


def _events(client, name):
    return [r for r in client.get_received() if r['name'] == name]


@pytest.mark.socketio
def test_handle_connect(socketio_client):
    """Test that client connection emits 'connected' event."""
    # Connect is automatic when creating the client
    received = socketio_client.get_received()

    assert len(received) > 0
    assert received[0]['name'] == 'connected'
    assert received[0]['args'][0]['status'] == 'Connected to server'


@pytest.mark.socketio
def test_start_stream_success(socketio_client, mock_stream_update):
    """Test successful start of a force stream."""
    socketio_client.emit('start_stream', {
        'grid': '2x2',
        'cell': [1, 0],
        'interval': 5,
        'peak_force': 3.0
    })

    started_events = _events(socketio_client, 'started')

    assert len(started_events) > 0
    assert started_events[0]['args'][0] == {'grid': '2x2', 'cell': [1, 0], 'interval': 5.0,
                                            'peak_force': 3.0}


@pytest.mark.socketio
def test_start_stream_defaults(socketio_client, mock_stream_update):
    """Test that an empty request streams the last cell of a 2x2 skin."""
    socketio_client.emit('start_stream', {})

    started = _events(socketio_client, 'started')[0]['args'][0]

    assert started['grid'] == '2x2'
    assert started['cell'] == [1, 1]
    assert started['interval'] == 1.0
    assert started['peak_force'] == 4.0


@pytest.mark.socketio
def test_start_stream_minimum_interval(socketio_client, mock_stream_update):
    """Test that the interval is raised to the minimum."""
    socketio_client.emit('start_stream', {'interval': 0.001})

    started = _events(socketio_client, 'started')[0]['args'][0]

    assert started['interval'] == 0.1


@pytest.mark.socketio
def test_start_stream_string_values(socketio_client, mock_stream_update):
    """Test that numeric fields given as strings are accepted."""
    socketio_client.emit('start_stream', {'grid': '3x3', 'cell': ['2', '1'], 'interval': '2'})

    started = _events(socketio_client, 'started')[0]['args'][0]

    assert started['cell'] == [2, 1]
    assert started['interval'] == 2.0


@pytest.mark.socketio
@pytest.mark.parametrize('request_data', [
    {'grid': 'big'},
    {'grid': '2x2', 'cell': [2, 0]},
    {'grid': '2x2', 'cell': 'corner'},
    {'grid': '5x5'},
    {'interval': 'soon'},
    {'peak_force': -1.0},
])
def test_start_stream_invalid_request(socketio_client, request_data):
    """Test that invalid requests emit an error and start nothing."""
    import app as app_module

    socketio_client.emit('start_stream', request_data)

    error_events = _events(socketio_client, 'error')
    assert len(error_events) > 0
    assert error_events[0]['args'][0]['message'].startswith('Invalid stream request')
    assert app_module.stream_thread is None


@pytest.mark.socketio
def test_start_stream_replaces_existing(socketio_client, mock_stream_update, app):
    """Test that starting again replaces the running thread."""
    import app as app_module

    socketio_client.emit('start_stream', {'interval': 10})
    first = app_module.stream_thread
    socketio_client.emit('start_stream', {'interval': 10, 'cell': [0, 0]})
    second = app_module.stream_thread

    assert first is not second
    assert not first.is_alive()
    assert second.is_alive()


@pytest.mark.socketio
def test_stop_stream(socketio_client, mock_stream_update, app):
    """Test stopping a running stream."""
    import app as app_module

    socketio_client.emit('start_stream', {'interval': 10})
    socketio_client.emit('stop_stream')

    stopped_events = _events(socketio_client, 'stopped')
    assert len(stopped_events) > 0
    assert stopped_events[0]['args'][0]['status'] == 'Stream stopped'
    assert app_module.stop_event.is_set()
    assert not app_module.stream_thread.is_alive()


@pytest.mark.socketio
def test_stop_stream_when_not_running(socketio_client):
    """Test that stopping without a stream still acknowledges."""
    socketio_client.emit('stop_stream')

    assert len(_events(socketio_client, 'stopped')) > 0


@pytest.mark.socketio
def test_publish_emits_force_update(socketio_client, mock_stream_update, app):
    """Test that background thread emits force_update events."""
    socketio_client.emit('start_stream', {'interval': 10})
    time.sleep(0.5)

    updates = _events(socketio_client, 'force_update')

    assert len(updates) > 0
    assert updates[0]['args'][0]['cell_forces'][1][1] == 2.5
    assert mock_stream_update.called


@pytest.mark.socketio
def test_publish_emits_error_on_failure(socketio_client, mock_stream_failure, app):
    """Test that a failed estimate emits an error event."""
    socketio_client.emit('start_stream', {'interval': 10})
    time.sleep(0.5)

    error_events = _events(socketio_client, 'error')

    assert len(error_events) > 0
    assert 'Could not estimate frame' in error_events[0]['args'][0]['message']


@pytest.mark.socketio
def test_thread_is_daemon(socketio_client, mock_stream_update, app):
    """Test that the stream thread is a daemon thread."""
    import app as app_module

    socketio_client.emit('start_stream', {'interval': 10})

    assert app_module.stream_thread is not None
    assert app_module.stream_thread.daemon is True


@pytest.mark.socketio
def test_index_reports_streaming(socketio_client, client, mock_stream_update):
    """Test that the index route reflects a running stream."""
    socketio_client.emit('start_stream', {'grid': '1x2', 'cell': [0, 1], 'interval': 10})

    data = client.get('/').get_json()

    assert data['streaming'] is True
    assert data['grid'] == '1x2'
    assert data['cell'] == [0, 1]
