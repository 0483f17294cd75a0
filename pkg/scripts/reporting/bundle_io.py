"""
Bundle Export Module
====================

PathBundle and AdjointPath export. CSV files hold one row per (path, step);
the binary layout is

    b"TOPB1" | uint32 LE header length | JSON header | float64 LE blocks

with the blocks states (P, M+1, n) | increments (P, M, n) | log-likelihood (P, M+1).
"""

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict

import numpy as np
import pandas as pd

from adjoint.fbsde import AdjointPath
from simulation.path_simulator import PathBundle

MAGIC = b"TOPB1"
_LENGTH = struct.Struct("<I")
_FLOAT = np.dtype("<f8")


def _long_frame(bundle: PathBundle, columns: Dict[str, np.ndarray]) -> pd.DataFrame:
    num_paths, length = bundle.num_paths, bundle.num_steps + 1
    frame = {
        'path': np.repeat(np.arange(num_paths), length),
        'step': np.tile(np.arange(length), num_paths),
        't': np.tile(bundle.grid.times, num_paths),
    }
    frame.update({name: values.reshape(-1) for name, values in columns.items()})
    return pd.DataFrame(frame)


def _pad_last(values: np.ndarray) -> np.ndarray:
    """Append a NaN step so (P, M) arrays line up with (P, M+1) states"""
    pad = np.full((values.shape[0], 1) + values.shape[2:], np.nan)
    return np.concatenate([values, pad], axis=1)


def bundle_frame(bundle: PathBundle) -> pd.DataFrame:
    columns = {f'x_{j}': bundle.states[:, :, j] for j in range(bundle.state_dim)}
    increments = _pad_last(bundle.noise_increments)
    columns.update({f'dw_{j}': increments[:, :, j] for j in range(bundle.state_dim)})
    columns['log_likelihood'] = bundle.log_likelihood
    return _long_frame(bundle, columns)


def adjoint_frame(adjoint: AdjointPath, bundle: PathBundle) -> pd.DataFrame:
    q = _pad_last(adjoint.q)
    columns = {'psi': adjoint.psi}
    columns.update({f'q_{j}': q[:, :, j] for j in range(q.shape[2])})
    return _long_frame(bundle, columns)


def write_bundle_csv(bundle: PathBundle, path: Path) -> Path:
    bundle_frame(bundle).to_csv(path, index=False)
    return Path(path)


def write_adjoint_csv(adjoint: AdjointPath, bundle: PathBundle, path: Path) -> Path:
    adjoint_frame(adjoint, bundle).to_csv(path, index=False)
    return Path(path)


def write_bundle_binary(bundle: PathBundle, path: Path) -> Path:
    header = json.dumps({
        'state_dim': bundle.state_dim,
        'num_paths': bundle.num_paths,
        'num_steps': bundle.num_steps,
        'seed': bundle.seed,
        'measure': bundle.measure_tag,
        'horizon': bundle.grid.horizon,
    }, sort_keys=True).encode('utf-8')
    with open(path, 'wb') as f:
        f.write(MAGIC)
        f.write(_LENGTH.pack(len(header)))
        f.write(header)
        for block in (bundle.states, bundle.noise_increments, bundle.log_likelihood):
            f.write(np.ascontiguousarray(block, dtype=_FLOAT).tobytes())
    return Path(path)


@dataclass(frozen=True, eq=False)
class BundleRecord:
    header: Dict
    states: np.ndarray
    noise_increments: np.ndarray
    log_likelihood: np.ndarray


def read_bundle_binary(path: Path) -> BundleRecord:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ValueError(f"{path}: not a TOPB1 bundle file")
    offset = len(MAGIC)
    (length,) = _LENGTH.unpack_from(data, offset)
    offset += _LENGTH.size
    header = json.loads(data[offset:offset + length].decode('utf-8'))
    offset += length
    P, M, n = header['num_paths'], header['num_steps'], header['state_dim']
    blocks = []
    for shape in ((P, M + 1, n), (P, M, n), (P, M + 1)):
        count = int(np.prod(shape))
        blocks.append(np.frombuffer(data, dtype=_FLOAT, count=count, offset=offset).reshape(shape).astype(float))
        offset += count * _FLOAT.itemsize
    if offset != len(data):
        raise ValueError(f"{path}: {len(data) - offset} trailing bytes")
    return BundleRecord(header, *blocks)
