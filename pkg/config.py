# config.py
import os

# --- .env laden (lokal überschreibt) ---
try:
    from dotenv import load_dotenv

    load_dotenv(".env.local", override=True)
    load_dotenv()
except Exception:
    pass

VERSION = "0.1.0"

# --- ENV direkt lesen (außerhalb der Klasse!) ---
DEFAULT_SEED = int(os.getenv("COMBAND_SEED", "42"))
DEFAULT_WORKERS = int(os.getenv("COMBAND_WORKERS", "1"))
LOG_LEVEL = os.getenv("COMBAND_LOG_LEVEL", "INFO").upper()
MAX_ARMS = int(os.getenv("COMBAND_MAX_ARMS", "1000000"))
MAX_TRACKED_ARMS = int(os.getenv("COMBAND_MAX_TRACKED_ARMS", "10000"))
PROJECTION_MAX_ITER = int(os.getenv("COMBAND_PROJECTION_MAX_ITER", "20000"))
OUTPUT_DIR = os.getenv("COMBAND_OUTPUT_DIR", "results")

# --- Abgeleitete Helfer / Mappings ---
REFERENCE_ALPHAS = (0.0, 0.25, 0.5, 1.0)
REFERENCE_CONFIGS = {
    "kl": {"d": 8, "m": 3, "n": 5000},
    "ucb": {"d": 9, "m": 4, "n": 2000},
}
REFERENCE_TRIALS = 20
MEAN_RANGE = (0.1, 0.9)

# Large-Gap-Eigenschaft gilt, wenn jedes Δ_{e,min} mindestens diesen Wert hat
LARGE_GAP_THRESHOLD = float(os.getenv("COMBAND_LARGE_GAP_THRESHOLD", "0.05"))


# --- App-Config (reicht die oben definierten Werte durch) ---
class Config:
    VERSION = VERSION

    DEFAULT_SEED = DEFAULT_SEED
    DEFAULT_WORKERS = DEFAULT_WORKERS
    LOG_LEVEL = LOG_LEVEL

    MAX_ARMS = MAX_ARMS
    MAX_TRACKED_ARMS = MAX_TRACKED_ARMS
    PROJECTION_MAX_ITER = PROJECTION_MAX_ITER
    OUTPUT_DIR = OUTPUT_DIR

    REFERENCE_ALPHAS = REFERENCE_ALPHAS
    REFERENCE_CONFIGS = REFERENCE_CONFIGS
    REFERENCE_TRIALS = REFERENCE_TRIALS
    MEAN_RANGE = MEAN_RANGE
    LARGE_GAP_THRESHOLD = LARGE_GAP_THRESHOLD
