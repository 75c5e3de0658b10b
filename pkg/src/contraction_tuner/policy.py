"""Fully connected Q-network in numpy, its optimizer and checkpoint format.

Checkpoint layout (little-endian)::

    b"CTQN" | u16 version | u16 n_dims | u32 dims[n_dims] | f32 params... | u32 crc32

Parameters are stored layer by layer, weights (n_in x n_out, row-major) then
biases. The CRC covers everything before it.
"""

import logging
import struct
import zlib
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import CheckpointError, CheckpointVersionError, PolicyDimensionError
from .features import FEATURES_PER_LOOP, MAX_LOOPS, OBSERVATION_SIZE, SIZE_COL, TAIL_COL
from .models import Action


logger = logging.getLogger(__name__)

N_ACTIONS = len(Action)
SIZE_SCALE = 1.0 / 256.0

CHECKPOINT_MAGIC = b"CTQN"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sHH")
_CRC = struct.Struct("<I")

LayerCache = List[Tuple[np.ndarray, np.ndarray]]


def normalize_observation(observation: np.ndarray, dtype: np.dtype = np.float32) -> np.ndarray:
    """Scale loop sizes and tails by 1/256; flags and histogram counts stay raw.

    Accepts one observation or a batch of them.
    """
    x = np.asarray(observation)
    if x.shape[-1] != OBSERVATION_SIZE:
        raise PolicyDimensionError(f"observation has {x.shape[-1]} features, expected {OBSERVATION_SIZE}")
    slots = x.reshape(x.shape[:-1] + (MAX_LOOPS, FEATURES_PER_LOOP)).astype(dtype)
    slots[..., SIZE_COL] *= SIZE_SCALE
    slots[..., TAIL_COL] *= SIZE_SCALE
    return slots.reshape(x.shape)


class MLPPolicy:
    """ReLU hidden layers and a linear output of one Q-value per action."""

    def __init__(self, dims: Sequence[int], seed: Optional[int] = 0, dtype: np.dtype = np.float32):
        if len(dims) < 2 or any(int(d) < 1 for d in dims):
            raise ValueError(f"invalid layer dimensions: {list(dims)}")
        self.dims: Tuple[int, ...] = tuple(int(d) for d in dims)
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        for n_in, n_out in zip(self.dims[:-1], self.dims[1:]):
            # He initialisation for ReLU layers.
            scale = np.sqrt(2.0 / n_in)
            self.weights.append((rng.standard_normal((n_in, n_out)) * scale).astype(self.dtype))
            self.biases.append(np.zeros(n_out, dtype=self.dtype))

    @classmethod
    def for_observations(cls, hidden: Sequence[int], seed: Optional[int] = 0, dtype: np.dtype = np.float32) -> "MLPPolicy":
        """Network sized for encoded schedules and the action set."""
        return cls((OBSERVATION_SIZE, *hidden, N_ACTIONS), seed=seed, dtype=dtype)

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    @property
    def output_dim(self) -> int:
        return self.dims[-1]

    def parameters(self) -> List[np.ndarray]:
        """Live parameter arrays, layer by layer: W0, b0, W1, b1, ..."""
        params: List[np.ndarray] = []
        for weight, bias in zip(self.weights, self.biases):
            params.extend((weight, bias))
        return params

    def set_parameters(self, params: Sequence[np.ndarray]) -> None:
        own = self.parameters()
        if len(params) != len(own):
            raise ValueError(f"expected {len(own)} parameter arrays, got {len(params)}")
        for target, source in zip(own, params):
            if target.shape != np.shape(source):
                raise ValueError(f"parameter shape {np.shape(source)} does not match {target.shape}")
            target[...] = source

    def copy(self) -> "MLPPolicy":
        clone = MLPPolicy.__new__(MLPPolicy)
        clone.dims = self.dims
        clone.dtype = self.dtype
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim not in (1, 2) or x.shape[-1] != self.input_dim:
            raise PolicyDimensionError(f"input shape {x.shape} does not match input dimension {self.input_dim}")
        return x

    def forward_cached(self, x: np.ndarray) -> Tuple[np.ndarray, LayerCache]:
        """Forward pass keeping each layer's input and pre-activation."""
        h = self._check_input(x)
        cache: LayerCache = []
        last = len(self.weights) - 1
        for i, (weight, bias) in enumerate(zip(self.weights, self.biases)):
            z = h @ weight + bias
            cache.append((h, z))
            h = z if i == last else np.maximum(z, 0)
        return h, cache

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_cached(x)[0]

    def backward(self, cache: LayerCache, dout: np.ndarray) -> List[np.ndarray]:
        """Gradients of sum(dout * output) in parameters() order."""
        grads: List[np.ndarray] = [None] * (2 * len(self.weights))  # type: ignore[list-item]
        delta = np.asarray(dout, dtype=self.dtype)
        for i in range(len(self.weights) - 1, -1, -1):
            h, z = cache[i]
            if i != len(self.weights) - 1:
                delta = delta * (z > 0)
            h2 = np.atleast_2d(h)
            d2 = np.atleast_2d(delta)
            grads[2 * i] = h2.T @ d2
            grads[2 * i + 1] = d2.sum(axis=0)
            delta = delta @ self.weights[i].T
        return grads

    def q_values(self, observation: np.ndarray) -> np.ndarray:
        """Q-values of a raw encoded observation (or batch)."""
        return self.forward(normalize_observation(observation, self.dtype))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())


class AdamOptimizer:
    """Adam updating a list of arrays in place."""

    def __init__(self, params: Sequence[np.ndarray], lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p, dtype=np.float64) for p in self.params]
        self.v = [np.zeros_like(p, dtype=np.float64) for p in self.params]

    def step(self, grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for param, grad, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(grad)
            update = self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            param -= update.astype(param.dtype)


def checkpoint_bytes(policy: MLPPolicy) -> bytes:
    """Serialise a policy in the versioned little-endian format."""
    header = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(policy.dims))
    header += struct.pack(f"<{len(policy.dims)}I", *policy.dims)
    body = b"".join(np.ascontiguousarray(p, dtype="<f4").tobytes() for p in policy.parameters())
    payload = header + body
    return payload + _CRC.pack(zlib.crc32(payload) & 0xFFFFFFFF)


def policy_from_bytes(data: bytes) -> MLPPolicy:
    """Inverse of checkpoint_bytes; the result holds float32 parameters."""
    if len(data) < _HEADER.size + _CRC.size:
        raise CheckpointError(f"checkpoint truncated: {len(data)} bytes")
    magic, version, n_dims = _HEADER.unpack_from(data, 0)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"not a policy checkpoint (magic {magic!r})")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}")

    dims_end = _HEADER.size + 4 * n_dims
    if n_dims < 2 or len(data) < dims_end + _CRC.size:
        raise CheckpointError("checkpoint truncated in the layer table")
    dims = struct.unpack_from(f"<{n_dims}I", data, _HEADER.size)
    n_params = sum(n_in * n_out + n_out for n_in, n_out in zip(dims[:-1], dims[1:]))
    expected = dims_end + 4 * n_params + _CRC.size
    if len(data) != expected:
        raise CheckpointError(f"checkpoint has {len(data)} bytes, expected {expected}")

    (stored_crc,) = _CRC.unpack_from(data, expected - _CRC.size)
    if zlib.crc32(data[: expected - _CRC.size]) & 0xFFFFFFFF != stored_crc:
        raise CheckpointError("checkpoint checksum mismatch")

    flat = np.frombuffer(data, dtype="<f4", count=n_params, offset=dims_end).astype(np.float32)
    policy = MLPPolicy(dims, seed=None, dtype=np.float32)
    offset = 0
    for param in policy.parameters():
        param[...] = flat[offset : offset + param.size].reshape(param.shape)
        offset += param.size
    return policy


def save_checkpoint(policy: MLPPolicy, path: Union[str, Path]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(checkpoint_bytes(policy))
    logger.debug(f"Saved policy {list(policy.dims)} to {target}")
    return target


def load_checkpoint(path: Union[str, Path]) -> MLPPolicy:
    target = Path(path)
    if not target.is_file():
        raise CheckpointError(f"checkpoint not found: {target}")
    policy = policy_from_bytes(target.read_bytes())
    logger.debug(f"Loaded policy {list(policy.dims)} from {target}")
    return policy
