"""Dense displacement network: forward pass, analytic gradients, optimizer.

Pure numpy, double precision by default.  Hidden layers use an ELU
nonlinearity (continuously differentiable, so finite-difference gradient
checks are clean); the output layer is linear and two-wide (planar
displacement in meters).  Inputs are standardized with per-feature
statistics stored on the parameter struct.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np


def elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


@dataclass(frozen=True)
class MlpParams:
    """Weights, biases, and input-normalization statistics.

    ``weights[i]`` has shape (layer_sizes[i+1], layer_sizes[i]) (row-major,
    output rows).  ``norm_std`` entries are clamped to >= 1e-6 upstream.
    """

    layer_sizes: tuple
    weights: tuple
    biases: tuple
    norm_mean: np.ndarray
    norm_std: np.ndarray

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise ValueError("need at least an input and an output layer")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("weights/biases count must match layer transitions")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i + 1], sizes[i]):
                raise ValueError(f"weight {i} has shape {w.shape}, expected {(sizes[i+1], sizes[i])}")
            if b.shape != (sizes[i + 1],):
                raise ValueError(f"bias {i} has shape {b.shape}, expected ({sizes[i+1]},)")
        if self.norm_mean.shape != (sizes[0],) or self.norm_std.shape != (sizes[0],):
            raise ValueError("norm stats must match the input width")
        if np.any(self.norm_std < 1e-6):
            raise ValueError("norm_std entries must be >= 1e-6")
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "weights", tuple(self.weights))
        object.__setattr__(self, "biases", tuple(self.biases))

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def param_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    @property
    def dtype(self):
        return self.weights[0].dtype

    def astype(self, dtype) -> "MlpParams":
        """Cast all parameters (float32 is fine for inference)."""
        return replace(
            self,
            weights=tuple(w.astype(dtype) for w in self.weights),
            biases=tuple(b.astype(dtype) for b in self.biases),
            norm_mean=self.norm_mean.astype(dtype),
            norm_std=self.norm_std.astype(dtype),
        )

    def with_norm_stats(self, mean: np.ndarray, std: np.ndarray) -> "MlpParams":
        mean = np.asarray(mean, dtype=self.dtype)
        std = np.asarray(std, dtype=self.dtype)
        return replace(self, norm_mean=mean, norm_std=std)


def init_mlp(seed: int, layer_sizes: Sequence[int]) -> MlpParams:
    """Fan-in-scaled random weights, zero biases, identity norm stats."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2:
        raise ValueError("need at least an input and an output layer")
    if any(s < 1 for s in sizes):
        raise ValueError("layer sizes must be positive")
    if sizes[-1] != 2:
        raise ValueError("output layer must be 2-wide (planar displacement)")
    rng = np.random.default_rng(seed)
    weights = tuple(
        rng.normal(0.0, 1.0 / np.sqrt(sizes[i]), size=(sizes[i + 1], sizes[i]))
        for i in range(len(sizes) - 1)
    )
    biases = tuple(np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1))
    return MlpParams(sizes, weights, biases, np.zeros(sizes[0]), np.ones(sizes[0]))


def forward_batch(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """(n, d_in) -> (n, 2) in the parameters' dtype."""
    a = (np.asarray(x, dtype=params.dtype) - params.norm_mean) / params.norm_std
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        a = elu(a @ w.T + b)
    return a @ params.weights[-1].T + params.biases[-1]


def forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Predicted body-frame displacement (2-vector) for one feature vector."""
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] != params.input_dim:
        raise ValueError(f"input must have shape ({params.input_dim},), got {x.shape}")
    return forward_batch(params, x[None, :])[0]


def loss_and_grad(params: MlpParams, x: np.ndarray, targets: np.ndarray):
    """Mean-squared-error loss over a batch and its exact gradients.

    loss = (1/N) sum_j ||target_j - pred_j||^2.  Returns (loss, grads)
    with grads ordered [dW0, db0, dW1, db1, ...], matching params_to_list.
    """
    x = np.atleast_2d(np.asarray(x, dtype=params.dtype))
    targets = np.atleast_2d(np.asarray(targets, dtype=params.dtype))
    n = x.shape[0]
    if n == 0:
        raise ValueError("batch must be non-empty")
    if x.shape[1] != params.input_dim or targets.shape != (n, params.layer_sizes[-1]):
        raise ValueError("batch dimensions do not match the network")

    acts = [(x - params.norm_mean) / params.norm_std]
    pres = []
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        pres.append(acts[-1] @ w.T + b)
        acts.append(elu(pres[-1]))
    out = acts[-1] @ params.weights[-1].T + params.biases[-1]

    diff = out - targets
    loss = float(np.sum(diff * diff) / n)

    delta = 2.0 * diff / n
    grads = [None] * (2 * len(params.weights))
    li = len(params.weights) - 1
    grads[2 * li] = delta.T @ acts[-1]
    grads[2 * li + 1] = delta.sum(axis=0)
    for li in range(len(params.weights) - 2, -1, -1):
        delta = (delta @ params.weights[li + 1]) * elu_grad(pres[li])
        grads[2 * li] = delta.T @ acts[li]
        grads[2 * li + 1] = delta.sum(axis=0)
    return loss, grads


def params_to_list(params: MlpParams) -> list:
    out = []
    for w, b in zip(params.weights, params.biases):
        out.extend([w, b])
    return out


def list_to_params(params: MlpParams, values: Sequence[np.ndarray]) -> MlpParams:
    weights = tuple(values[2 * i] for i in range(len(params.weights)))
    biases = tuple(values[2 * i + 1] for i in range(len(params.weights)))
    return replace(params, weights=weights, biases=biases)


@dataclass(frozen=True)
class OptimizerState:
    """Adaptive-moment optimizer state over a list of parameter arrays."""

    step: int
    m: tuple
    v: tuple
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if len(self.m) != len(self.v):
            raise ValueError("moment lists must have equal length")
        for mi, vi in zip(self.m, self.v):
            if mi.shape != vi.shape:
                raise ValueError("moment shapes are inconsistent")


def init_adam(params: Sequence[np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> OptimizerState:
    m = tuple(np.zeros_like(p) for p in params)
    v = tuple(np.zeros_like(p) for p in params)
    return OptimizerState(0, m, v, lr, beta1, beta2, eps)


def adam_update(state: OptimizerState, params: Sequence[np.ndarray],
                grads: Sequence[np.ndarray]):
    """One bias-corrected adaptive update; returns (state', params')."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params/grads/state lengths differ")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
    t = state.step + 1
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        new_m.append(m)
        new_v.append(v)
        new_p.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
    return replace(state, step=t, m=tuple(new_m), v=tuple(new_v)), new_p
