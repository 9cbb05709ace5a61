# config.py
import logging
import os

from dotenv import load_dotenv

load_dotenv()

LOG_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"

LOG_LEVEL = os.getenv("PERFSIM_LOG_LEVEL", "WARNING")
MAX_EVENTS = int(os.getenv("PERFSIM_MAX_EVENTS", "1000000"))
THREADS = int(os.getenv("PERFSIM_THREADS", "1"))
# certified truncation target for γ and the other interaction series
GAMMA_TOL = float(os.getenv("PERFSIM_GAMMA_TOL", "1e-10"))


def setup_logging(level: str | None = None) -> None:
    """Configure root logging once; stderr only so stdout artifacts stay byte-stable."""
    root = logging.getLogger()
    if root.handlers:
        root.setLevel((level or LOG_LEVEL).upper())
        return
    logging.basicConfig(level=(level or LOG_LEVEL).upper(), format=LOG_FORMAT)
