"""Main Flask application."""
import logging
from threading import Thread, Event

from flask import Flask, jsonify, request
from flask_socketio import SocketIO, emit

from config import Config
from estimator import EstimationError, estimate
from netlist_sim import SingularNetworkError
from skin_model import DriveSetup, GridSpec, MeasurementFrame, SkinModelError
from stream_service import StreamService

logger = logging.getLogger(__name__)

MIN_INTERVAL = 0.1

# Initialize Flask app
app = Flask(__name__)
app.config.from_object(Config)

# Initialize SocketIO
socketio = SocketIO(app, cors_allowed_origins="*")

# Initialize stream service
stream_service = StreamService()

# Global state for the update thread
stream_thread = None
stop_event = Event()
current_interval = Config.STREAM_INTERVAL


def publish_updates():
    """Background thread estimating frames and emitting force updates."""
    while not stop_event.is_set():
        update = stream_service.next_update()

        if update:
            socketio.emit('force_update', update)
        else:
            socketio.emit('error', {
                'message': f'Could not estimate frame {stream_service.tick}'
            })

        # Wait for interval or until stopped
        stop_event.wait(current_interval)


def stop_stream_thread():
    """Stop the update thread if it is running."""
    stop_event.set()
    if stream_thread and stream_thread.is_alive():
        stream_thread.join()


@app.route('/')
def index():
    """Report service status."""
    return jsonify({
        'service': 'skin-readout',
        'streaming': bool(stream_thread and stream_thread.is_alive() and not stop_event.is_set()),
        'interval': current_interval,
        **stream_service.describe()
    })


@app.route('/estimate', methods=['POST'])
def estimate_frame():
    """Estimate cell resistances of one posted measurement frame.

    The body is a frame JSON, or ``{"frame": ..., "drive": ...}``.
    """
    data = request.get_json(silent=True)
    if not isinstance(data, dict):
        return jsonify({'error': 'Expected a JSON measurement frame'}), 400

    try:
        frame = MeasurementFrame.from_dict(data.get('frame', data))
        drive = DriveSetup.from_dict(data['drive']) if 'drive' in data else stream_service.drive
        result = estimate(frame, drive, settings=stream_service.settings)
    except SkinModelError as exc:
        return jsonify({'error': str(exc)}), 400
    except (EstimationError, SingularNetworkError) as exc:
        logger.error('estimation failed: %s', exc)
        return jsonify({'error': str(exc)}), 422

    return jsonify(result.to_dict())


@socketio.on('connect')
def handle_connect():
    """Handle client connection."""
    emit('connected', {'status': 'Connected to server'})


@socketio.on('start_stream')
def handle_start(data):
    """Start streaming force updates.

    Args:
        data: Dictionary with 'grid' ("NxM"), 'cell' ([row, col]),
            'interval' (seconds) and 'peak_force' (N) keys
    """
    global stream_thread, current_interval

    data = data or {}
    try:
        grid = GridSpec.parse(str(data.get('grid', '2x2')))
        cell = data.get('cell', [grid.rows - 1, grid.cols - 1])
        interval = float(data.get('interval', Config.STREAM_INTERVAL))
        peak_force = float(data.get('peak_force', 4.0))
        if not isinstance(cell, (list, tuple)) or len(cell) != 2:
            raise SkinModelError(f'cell must be [row, col], got {cell!r}')
    except (SkinModelError, TypeError, ValueError) as exc:
        emit('error', {'message': f'Invalid stream request: {exc}'})
        return

    # Stop existing thread if running
    stop_stream_thread()

    try:
        stream_service.configure(grid, cell, peak_force)
    except (SkinModelError, TypeError, ValueError) as exc:
        emit('error', {'message': f'Invalid stream request: {exc}'})
        return

    # Reset and start new thread
    stop_event.clear()
    current_interval = max(MIN_INTERVAL, interval)

    stream_thread = Thread(target=publish_updates)
    stream_thread.daemon = True
    stream_thread.start()

    emit('started', {
        'grid': str(grid),
        'cell': list(stream_service.cell),
        'interval': current_interval,
        'peak_force': stream_service.peak_force
    })


@socketio.on('stop_stream')
def handle_stop():
    """Stop streaming force updates."""
    stop_stream_thread()

    emit('stopped', {'status': 'Stream stopped'})


if __name__ == '__main__':
    logging.basicConfig(level=Config.LOG_LEVEL,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    socketio.run(app, host='0.0.0.0', debug=Config.DEBUG, port=5005)
