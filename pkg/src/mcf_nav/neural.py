"""Dense ReLU networks with hand-written reverse mode and an Adam optimizer.

Layers compute ``Y = X @ W + b`` with ``W`` of shape (fan_in, fan_out), so the
weight gradient of a single example is ``outer(x, upstream)``.

Checkpoint layout (little-endian)::

    bytes 0..7    magic b"MCFMLP\\x00\\x01"
    bytes 8..11   uint32 header length H
    bytes 12..    H bytes UTF-8 JSON header:
                  {"format_version", "layer_sizes", "activation", "head",
                   "action_dim", "dtype": "<f8", "shapes": [[rows, cols] | [n]]}
    then          float64 parameters W0, b0, W1, b1, ... each flattened row-major
"""

import json
import math
import struct
from pathlib import Path
from typing import Any, Literal

import numpy as np

from .errors import DimensionError, TrainingDivergenceError, UsageError

Head = Literal["linear", "gaussian"]

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
LOG_STD_BIAS_INIT = -0.5
MEAN_HEAD_INIT_GAIN = 3.0
LOG_STD_INIT_GAIN = 0.1

CHECKPOINT_MAGIC = b"MCFMLP\x00\x01"
CHECKPOINT_VERSION = 1


class Mlp:
    """Multilayer perceptron with ReLU hidden layers.

    A ``gaussian`` head splits the final layer into a mean block and a
    ``log_std`` block (clamped to [-20, 2]), one entry per action dimension.
    """

    def __init__(
        self,
        layer_sizes: list[int],
        head: Head = "linear",
        rng: np.random.Generator | None = None,
    ) -> None:
        if len(layer_sizes) < 2 or any(n < 1 for n in layer_sizes):
            raise DimensionError(f"invalid layer sizes: {layer_sizes}")
        if head == "gaussian" and layer_sizes[-1] % 2:
            raise DimensionError("gaussian head needs an even output size (mean + log_std)")
        self.layer_sizes = list(layer_sizes)
        self.head: Head = head
        self.activation = "relu"
        self.params: list[np.ndarray] = []
        self._cache: list[tuple[np.ndarray, np.ndarray]] | None = None
        self._clamp_mask: np.ndarray | None = None
        self._squeeze = False
        rng = rng if rng is not None else np.random.default_rng(0)
        last = self.n_layers - 1
        for index, (fan_in, fan_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:], strict=True)):
            if index < last:
                # He-uniform for ReLU layers
                W = rng.uniform(-1.0, 1.0, size=(fan_in, fan_out)) * math.sqrt(6.0 / fan_in)
                b = np.zeros(fan_out)
            else:
                bound = 1.0 / math.sqrt(fan_in)
                W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
                b = np.zeros(fan_out) if head == "gaussian" else rng.uniform(-bound, bound, size=fan_out)
            self.params += [W, b]
        if head == "gaussian":
            # Mean weights get variance gain**2 / fan_in so independently seeded
            # members disagree across the squashed action range.
            k = self.action_dim
            self.params[-2][:, :k] *= MEAN_HEAD_INIT_GAIN * math.sqrt(3.0)
            self.params[-2][:, k:] *= LOG_STD_INIT_GAIN
            self.params[-1][k:] = LOG_STD_BIAS_INIT

    @property
    def action_dim(self) -> int:
        return self.layer_sizes[-1] // 2 if self.head == "gaussian" else self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def forward(self, x: np.ndarray) -> Any:
        """Evaluate the network and cache activations for :meth:`backward`.

        Returns the output array, or ``(mean, log_std)`` for a gaussian head.
        A 1-D input gives 1-D outputs.
        """
        x = np.asarray(x, dtype=np.float64)
        self._squeeze = x.ndim == 1
        batch = x[None, :] if self._squeeze else x
        if batch.ndim != 2 or batch.shape[1] != self.layer_sizes[0]:
            raise DimensionError(
                f"expected input width {self.layer_sizes[0]}, got shape {x.shape}"
            )

        cache: list[tuple[np.ndarray, np.ndarray]] = []
        h = batch
        for i in range(self.n_layers):
            W, b = self.params[2 * i], self.params[2 * i + 1]
            z = h @ W + b
            cache.append((h, z))
            h = np.maximum(z, 0.0) if i < self.n_layers - 1 else z
        self._cache = cache

        if self.head == "linear":
            self._clamp_mask = None
            return h[0] if self._squeeze else h
        k = self.action_dim
        mean = h[:, :k]
        raw_log_std = h[:, k:]
        self._clamp_mask = (raw_log_std >= LOG_STD_MIN) & (raw_log_std <= LOG_STD_MAX)
        log_std = np.clip(raw_log_std, LOG_STD_MIN, LOG_STD_MAX)
        if self._squeeze:
            return mean[0], log_std[0]
        return mean, log_std

    def backward(self, upstream: Any) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradients of ``sum(upstream * output)`` for every parameter and the input.

        For a gaussian head pass ``(d_mean, d_log_std)``. Returns gradients in
        ``params`` order and the input gradient, shaped like the last forward.
        """
        if self._cache is None:
            raise UsageError("backward() called before forward()")
        if self.head == "gaussian":
            d_mean, d_log_std = upstream
            d_mean = np.atleast_2d(np.asarray(d_mean, dtype=np.float64))
            d_log_std = np.atleast_2d(np.asarray(d_log_std, dtype=np.float64))
            assert self._clamp_mask is not None
            grad = np.concatenate([d_mean, d_log_std * self._clamp_mask], axis=1)
        else:
            grad = np.atleast_2d(np.asarray(upstream, dtype=np.float64))

        if grad.shape != self._cache[-1][1].shape:
            raise DimensionError(
                f"upstream shape {grad.shape} does not match output {self._cache[-1][1].shape}"
            )

        grads: list[np.ndarray] = [np.empty(0)] * len(self.params)
        for i in reversed(range(self.n_layers)):
            h_in, z = self._cache[i]
            if i < self.n_layers - 1:
                grad = grad * (z > 0.0)
            grads[2 * i] = h_in.T @ grad
            grads[2 * i + 1] = grad.sum(axis=0)
            grad = grad @ self.params[2 * i].T
        return grads, (grad[0] if self._squeeze else grad)

    def copy(self) -> "Mlp":
        clone = Mlp.__new__(Mlp)
        clone.layer_sizes = list(self.layer_sizes)
        clone.head = self.head
        clone.activation = self.activation
        clone.params = [p.copy() for p in self.params]
        clone._cache = None
        clone._clamp_mask = None
        clone._squeeze = False
        return clone

    def load_params(self, other: "Mlp") -> None:
        if other.layer_sizes != self.layer_sizes or other.head != self.head:
            raise DimensionError("cannot copy parameters between different architectures")
        for mine, theirs in zip(self.params, other.params, strict=True):
            mine[...] = theirs

    def polyak_update(self, source: "Mlp", polyak: float) -> None:
        """``self <- polyak * self + (1 - polyak) * source``."""
        if polyak >= 1.0:
            return
        for mine, theirs in zip(self.params, source.params, strict=True):
            mine *= polyak
            mine += (1.0 - polyak) * theirs

    def same_architecture(self, other: "Mlp") -> bool:
        return self.layer_sizes == other.layer_sizes and self.head == other.head

    def header(self) -> dict[str, Any]:
        return {
            "format_version": CHECKPOINT_VERSION,
            "layer_sizes": self.layer_sizes,
            "activation": self.activation,
            "head": self.head,
            "action_dim": self.action_dim,
            "dtype": "<f8",
            "shapes": [list(p.shape) for p in self.params],
        }

    def save(self, path: Path) -> None:
        """Write the versioned binary checkpoint described in the module docstring."""
        header = json.dumps(self.header(), sort_keys=True).encode("utf-8")
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(struct.pack("<I", len(header)))
            f.write(header)
            for p in self.params:
                f.write(np.ascontiguousarray(p, dtype="<f8").tobytes(order="C"))

    @classmethod
    def load(cls, path: Path) -> "Mlp":
        data = path.read_bytes()
        if data[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
            raise UsageError(f"{path} is not an mcf-nav network checkpoint")
        offset = len(CHECKPOINT_MAGIC)
        (header_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        header = json.loads(data[offset : offset + header_len].decode("utf-8"))
        offset += header_len
        if header.get("format_version") != CHECKPOINT_VERSION:
            raise UsageError(f"unsupported checkpoint version {header.get('format_version')}")

        net = cls.__new__(cls)
        net.layer_sizes = [int(n) for n in header["layer_sizes"]]
        net.head = header["head"]
        net.activation = header["activation"]
        net._cache = None
        net._clamp_mask = None
        net._squeeze = False
        net.params = []
        for shape in header["shapes"]:
            count = int(np.prod(shape))
            flat = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
            net.params.append(flat.astype(np.float64).reshape(shape))
            offset += count * 8
        if offset != len(data):
            raise UsageError(f"{path}: trailing bytes after parameters")
        return net


class Adam:
    """Adaptive-moment optimizer over a fixed list of parameter arrays."""

    def __init__(
        self,
        params: list[np.ndarray],
        learning_rate: float = 3e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """Update ``params`` in place. Non-finite gradients raise, they are never clipped."""
        if len(params) != len(grads):
            raise DimensionError("parameter and gradient lists differ in length")
        for p, g in zip(params, grads, strict=True):
            if p.shape != g.shape:
                raise DimensionError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            if not np.all(np.isfinite(g)):
                raise TrainingDivergenceError("non-finite gradient")

        self.step_count += 1
        correction1 = 1.0 - self.beta1**self.step_count
        correction2 = 1.0 - self.beta2**self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v, strict=True):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / correction1
            v_hat = v / correction2
            p -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
