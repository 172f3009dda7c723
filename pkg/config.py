"""Application configuration."""
import os
from dotenv import load_dotenv

load_dotenv()


class Config:
    """Base configuration.

    Resistances are in MΩ and voltages in V everywhere in the package.
    """
    SECRET_KEY = os.getenv('SECRET_KEY', 'dev-secret-key-change-in-production')
    DEBUG = os.getenv('FLASK_ENV') == 'development'
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO').upper()

    # Drive circuit
    V_DD = float(os.getenv('V_DD', '1.0'))
    R_REF_SOURCE = float(os.getenv('R_REF_SOURCE', '0.1'))
    R_REF_GROUND = float(os.getenv('R_REF_GROUND', '0.1'))

    # Resistance representation
    OPEN_CIRCUIT_MOHM = float(os.getenv('OPEN_CIRCUIT_MOHM', '1e6'))
    WIRE_FLOOR_MOHM = float(os.getenv('WIRE_FLOOR_MOHM', '1e-4'))
    CELL_FLOOR_MOHM = float(os.getenv('CELL_FLOOR_MOHM', '1e-6'))

    # Objective weights: least-squares stage, then regularized stage
    LSQ_ALPHA = float(os.getenv('LSQ_ALPHA', '1e6'))
    LSQ_BETA = float(os.getenv('LSQ_BETA', '1e6'))
    REG_ALPHA = float(os.getenv('REG_ALPHA', '1.0'))
    REG_BETA = float(os.getenv('REG_BETA', '1.0'))
    REG_LAMBDA = float(os.getenv('REG_LAMBDA', '1e9'))

    # Solver
    MAX_ITERATIONS = int(os.getenv('MAX_ITERATIONS', '200'))
    FEASIBILITY_TOL = float(os.getenv('FEASIBILITY_TOL', '1e-6'))
    STATIONARITY_TOL = float(os.getenv('STATIONARITY_TOL', '1e-8'))
    WIRE_STIFFNESS = float(os.getenv('WIRE_STIFFNESS', '1e4'))
    MAX_ESTIMATE_CELLS = int(os.getenv('MAX_ESTIMATE_CELLS', '36'))

    # Experiments and live replay
    SEED = int(os.getenv('SEED', '0'))
    OUTPUT_DIR = os.getenv('OUTPUT_DIR', 'results')
    STREAM_INTERVAL = float(os.getenv('STREAM_INTERVAL', '1.0'))
