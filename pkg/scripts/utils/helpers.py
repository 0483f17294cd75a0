"""
Utility Helper Functions
========================

Shared utilities: seeded noise blocks, worker counts, Monte Carlo
statistics and file helpers.
"""

import os
import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, List

import numpy as np

logger = logging.getLogger(__name__)

# Paths per noise block; fixed so arrays never depend on the worker count
NOISE_BLOCK_SIZE = 4096
THREADS_ENV_VAR = "TEAMOPT_THREADS"


def resolve_worker_count() -> int:
    """Worker cap from TEAMOPT_THREADS (default: CPU count)"""
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            logger.warning("ignoring non-integer %s=%r", THREADS_ENV_VAR, raw)
    return os.cpu_count() or 1


def block_generator(seed: int, block: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by (seed, block, stream)"""
    sequence = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, block, stream])
    return np.random.Generator(np.random.Philox(sequence))


def path_blocks(num_paths: int) -> List[slice]:
    """Fixed-size path blocks covering 0..num_paths"""
    return [slice(start, min(start + NOISE_BLOCK_SIZE, num_paths))
            for start in range(0, num_paths, NOISE_BLOCK_SIZE)]


def map_blocks(func: Callable[[int, slice], np.ndarray], num_paths: int) -> np.ndarray:
    """Evaluate func(block_index, block_slice) in parallel, concatenate in block order"""
    blocks = path_blocks(num_paths)
    workers = min(resolve_worker_count(), len(blocks))
    if workers <= 1:
        parts = [func(b, sl) for b, sl in enumerate(blocks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(func, range(len(blocks)), blocks))
    return np.concatenate(parts, axis=0)


def map_chunks(func: Callable[[np.ndarray], np.ndarray], items: np.ndarray,
               chunk: int = NOISE_BLOCK_SIZE) -> np.ndarray:
    """Apply func to fixed row chunks of items in parallel, keeping row order"""
    chunks = [items[start:start + chunk] for start in range(0, len(items), chunk)]
    workers = min(resolve_worker_count(), len(chunks))
    if workers <= 1:
        parts = [func(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(func, chunks))
    return np.concatenate(parts, axis=0)


def standard_error(samples: np.ndarray) -> float:
    """Standard error of the mean of a 1-d sample"""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        return 0.0
    return float(np.std(samples, ddof=1) / np.sqrt(samples.size))


def effective_sample_size(weights: np.ndarray) -> float:
    """(sum w)^2 / sum w^2 for importance weights"""
    weights = np.asarray(weights, dtype=float)
    denominator = float(np.sum(weights ** 2))
    if denominator == 0.0:
        return 0.0
    return float(np.sum(weights) ** 2 / denominator)


def time_to_index(times: np.ndarray, t: float, tolerance: float = 1e-9) -> int:
    """Grid index of time t; t must lie on the grid"""
    idx = int(np.argmin(np.abs(times - t)))
    if abs(times[idx] - t) > tolerance * max(1.0, abs(t)):
        raise ValueError(f"time {t} is not on the grid (nearest {times[idx]})")
    return idx


def file_sha256(path: Path) -> str:
    """Content hash of a file"""
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


def validate_output_directory(output_dir: Path) -> Path:
    """Create the output directory if needed"""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    return output_dir
