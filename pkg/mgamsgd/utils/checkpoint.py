"""
Checkpoint - Binary persistence of trained network parameters.

Layout: the magic bytes MGAMSGD1, N_h and N_nh as little-endian uint32, then
the flat parameter vector as little-endian float64 in flatten order.
"""
import logging
import os
from typing import Tuple

import numpy as np
import torch

from mgamsgd.core.errors import CheckpointError, ConfigurationError
from mgamsgd.core.network import DTYPE, Architecture, NetworkParams, flatten, param_count, unflatten

logger = logging.getLogger(__name__)

MAGIC = b"MGAMSGD1"
HEADER_DTYPE = np.dtype("<u4")
VALUE_DTYPE = np.dtype("<f8")
HEADER_SIZE = len(MAGIC) + 2 * HEADER_DTYPE.itemsize


def to_bytes(params: NetworkParams, arch: Architecture) -> bytes:
    """Serialize parameters of a network with three inputs and outputs."""
    params.check(arch)
    header = np.array([arch.n_hidden, arch.n_neurons], dtype=HEADER_DTYPE)
    values = flatten(params).detach().numpy().astype(VALUE_DTYPE)
    return MAGIC + header.tobytes() + values.tobytes()


def from_bytes(data: bytes) -> Tuple[Architecture, NetworkParams]:
    """
    Parse checkpoint bytes.

    Raises:
        CheckpointError: On a bad magic, a truncated header or a parameter
            count that does not match the header
    """
    if len(data) < HEADER_SIZE or data[:len(MAGIC)] != MAGIC:
        raise CheckpointError("Not a checkpoint: bad magic or truncated header")
    n_h, n_nh = (int(v) for v in np.frombuffer(data, dtype=HEADER_DTYPE, count=2, offset=len(MAGIC)))
    try:
        arch = Architecture(n_hidden=n_h, n_neurons=n_nh)
    except ConfigurationError as e:
        raise CheckpointError(f"Invalid architecture in checkpoint header: {e}")

    body = data[HEADER_SIZE:]
    expected = param_count(arch)
    if len(body) != expected * VALUE_DTYPE.itemsize:
        raise CheckpointError(
            f"Checkpoint holds {len(body)} parameter bytes, expected {expected * VALUE_DTYPE.itemsize} "
            f"for N_h={n_h}, N_nh={n_nh}"
        )
    vector = torch.from_numpy(np.frombuffer(body, dtype=VALUE_DTYPE).astype(np.float64)).to(DTYPE)
    return arch, unflatten(vector, arch)


def save_checkpoint(path: str, params: NetworkParams, arch: Architecture) -> str:
    """Write a checkpoint file and return its path."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(to_bytes(params, arch))
    logger.info(f"Saved checkpoint to {path}")
    return path


def load_checkpoint(path: str) -> Tuple[Architecture, NetworkParams]:
    """
    Read a checkpoint file.

    Raises:
        CheckpointError: If the file is missing or corrupt
    """
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}")
    arch, params = from_bytes(data)
    logger.info(f"Loaded checkpoint {path} (N_h={arch.n_hidden}, N_nh={arch.n_neurons})")
    return arch, params
