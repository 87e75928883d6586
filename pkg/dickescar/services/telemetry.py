"""Run manifest (JSON lines) and Prometheus counters"""

import logging
import platform
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, Optional

import numpy as np
import scipy
from prometheus_client import CollectorRegistry, Counter, Histogram, write_to_textfile
from pythonjsonlogger import jsonlogger

from dickescar import __version__
from dickescar.config import get_settings

logger = logging.getLogger(__name__)
settings = get_settings()

MANIFEST_LOGGER = "dickescar.manifest"
MANIFEST_FILE = "run_manifest.jsonl"
METRICS_FILE = "metrics.prom"

registry = CollectorRegistry()

CACHE_HITS = Counter(
    'dickescar_cache_hits', 'Cache entries served from disk', ['kind'], registry=registry
)
CACHE_MISSES = Counter(
    'dickescar_cache_misses', 'Cache entries computed and stored', ['kind'], registry=registry
)
HUSIMI_POINTS = Counter(
    'dickescar_husimi_points', 'Phase points at which Husimi functions were evaluated',
    registry=registry
)
NEWTON_ITERATIONS = Counter(
    'dickescar_newton_iterations', 'Monodromy Newton iterations of refined orbits', registry=registry
)
ORBITS_FOUND = Counter(
    'dickescar_orbits_found', 'Distinct periodic orbits added to a catalog', registry=registry
)
ORBIT_FAILURES = Counter(
    'dickescar_orbit_failures', 'Seeds that did not yield an orbit', ['stage'], registry=registry
)
COMMAND_SECONDS = Histogram(
    'dickescar_command_seconds', 'Wall time per CLI command', ['command'], registry=registry,
    buckets=(0.1, 1, 10, 60, 300, 900, 3600)
)


def manifest_logger(out_dir: str) -> logging.Logger:
    """JSON-lines logger appending to <out_dir>/run_manifest.jsonl"""
    path = Path(out_dir).expanduser() / MANIFEST_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    run_logger = logging.getLogger(MANIFEST_LOGGER)
    run_logger.setLevel(logging.INFO)
    run_logger.propagate = False

    target = str(path.resolve())
    for handler in list(run_logger.handlers):
        if getattr(handler, 'baseFilename', None) != target:
            run_logger.removeHandler(handler)
            handler.close()
    if not run_logger.handlers:
        handler = logging.FileHandler(target)
        handler.setFormatter(jsonlogger.JsonFormatter('%(asctime)s %(name)s %(levelname)s %(message)s'))
        run_logger.addHandler(handler)
    return run_logger


def versions() -> Dict[str, str]:
    return {
        'dickescar': __version__,
        'numpy': np.__version__,
        'scipy': scipy.__version__,
        'python': platform.python_version()
    }


def write_metrics(out_dir: str) -> Optional[Path]:
    path = Path(out_dir).expanduser() / METRICS_FILE
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        write_to_textfile(str(path), registry)
        return path
    except OSError as e:
        logger.warning(f"Could not write metrics to {path}: {e}")
        return None


@contextmanager
def command_run(command: str, out_dir: str, inputs: Dict[str, Any]) -> Iterator[Dict[str, Any]]:
    """Time a command and append its manifest record; callers fill `record`"""
    record: Dict[str, Any] = {'outcome': 'success'}
    start = time.perf_counter()
    try:
        yield record
    except Exception as e:
        record['outcome'] = 'error'
        record['error'] = str(e)
        raise
    finally:
        elapsed = time.perf_counter() - start
        COMMAND_SECONDS.labels(command=command).observe(elapsed)
        try:
            manifest_logger(out_dir).info(command, extra={
                'command': command,
                'service': settings.SERVICE_NAME,
                'inputs': inputs,
                'versions': versions(),
                'wall_time': elapsed,
                **record
            })
        except OSError as e:
            logger.warning(f"Could not write run manifest: {e}")
        write_metrics(out_dir)
