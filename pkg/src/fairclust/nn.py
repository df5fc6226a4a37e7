"""Dense feed-forward networks in float64 numpy with hand-written backprop.

Every network in the package (encoder, decoders, sensitive-attribute
predictor, correlation estimators, transfer classifier) is an `MlpParams`
value pushed through `forward` / `backward` and updated with `adam_step`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalAbort, ShapeError

ACTIVATIONS = ("relu", "linear", "softmax")


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple[int, ...]
    activations: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        object.__setattr__(self, "activations", tuple(self.activations))
        if len(self.layer_sizes) < 2:
            raise ValueError("an MLP needs at least an input and an output size")
        if any(s < 1 for s in self.layer_sizes):
            raise ValueError(f"layer sizes must be positive, got {self.layer_sizes}")
        if len(self.activations) != len(self.layer_sizes) - 1:
            raise ValueError(
                f"{len(self.layer_sizes) - 1} layers need as many activations, "
                f"got {len(self.activations)}"
            )
        for act in self.activations:
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        if "softmax" in self.activations[:-1]:
            raise ValueError("softmax is only supported on the output layer")

    @property
    def n_layers(self) -> int:
        return len(self.activations)

    @classmethod
    def build(cls, d_in: int, hidden: Sequence[int], d_out: int, output: str = "linear") -> "MlpSpec":
        """Relu hidden layers followed by an `output`-activated final layer."""
        sizes = (d_in, *hidden, d_out)
        return cls(sizes, ("relu",) * len(hidden) + (output,))


@dataclass
class MlpParams:
    spec: MlpSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != self.spec.n_layers or len(self.biases) != self.spec.n_layers:
            raise ShapeError("parameter list length does not match the spec")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.spec.layer_sizes[i + 1], self.spec.layer_sizes[i])
            if w.shape != expected or b.shape != (expected[0],):
                raise ShapeError(f"layer {i}: got W{w.shape}, b{b.shape}, expected W{expected}")

    @property
    def d_in(self) -> int:
        return self.spec.layer_sizes[0]

    @property
    def d_out(self) -> int:
        return self.spec.layer_sizes[-1]

    def arrays(self) -> list[np.ndarray]:
        """Weights and biases interleaved: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "MlpParams":
        return MlpParams(
            self.spec, [np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases]
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def equals(self, other: "MlpParams") -> bool:
        """Bitwise equality of spec and every parameter array."""
        if self.spec != other.spec:
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


def init_params(spec: MlpSpec, seed: int | np.random.Generator) -> MlpParams:
    """He-uniform for relu layers, Xavier-uniform otherwise; zero biases."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for i, act in enumerate(spec.activations):
        fan_in, fan_out = spec.layer_sizes[i], spec.layer_sizes[i + 1]
        if act == "relu":
            limit = np.sqrt(6.0 / fan_in)
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(spec, weights, biases)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _as_batch(params: MlpParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.d_in:
        raise ShapeError(f"expected a batch with {params.d_in} columns, got shape {x.shape}")
    return x


def forward(params: MlpParams, x) -> list[np.ndarray]:
    """Return the activation of every layer, input first; the last entry is the output."""
    h = _as_batch(params, x)
    acts = [h]
    for w, b, act in zip(params.weights, params.biases, params.spec.activations):
        pre = h @ w.T + b
        if act == "relu":
            h = np.maximum(pre, 0.0)
        elif act == "softmax":
            h = softmax(pre)
        else:
            h = pre
        acts.append(h)
    return acts


def predict(params: MlpParams, x) -> np.ndarray:
    return forward(params, x)[-1]


def backward(params: MlpParams, acts: list[np.ndarray], upstream) -> tuple[MlpParams, np.ndarray]:
    """Reverse-mode pass for a cached `forward`.

    `upstream` is dLoss/d(output). Returns parameter gradients (as an
    `MlpParams` container) and dLoss/d(input).
    """
    if len(acts) != params.spec.n_layers + 1:
        raise ShapeError("activation cache does not match the network depth")
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != acts[-1].shape:
        raise ShapeError(f"upstream gradient {g.shape} vs output {acts[-1].shape}")
    grad_w = [None] * params.spec.n_layers
    grad_b = [None] * params.spec.n_layers
    for i in reversed(range(params.spec.n_layers)):
        act = params.spec.activations[i]
        out = acts[i + 1]
        if act == "relu":
            g = g * (out > 0.0)
        elif act == "softmax":
            g = out * (g - np.sum(g * out, axis=1, keepdims=True))
        grad_w[i] = g.T @ acts[i]
        grad_b[i] = g.sum(axis=0)
        g = g @ params.weights[i]
    return MlpParams(params.spec, grad_w, grad_b), g


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams) -> "AdamState":
        arrays = params.arrays()
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])

    def copy(self) -> "AdamState":
        return AdamState(
            [a.copy() for a in self.m], [a.copy() for a in self.v], self.step, self.beta1, self.beta2, self.eps
        )


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState, lr: float) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update. Inputs are left untouched."""
    g_arrays = grads.arrays()
    p_arrays = params.arrays()
    if len(g_arrays) != len(p_arrays) or any(g.shape != p.shape for g, p in zip(g_arrays, p_arrays)):
        raise ShapeError("gradient shapes do not match parameters")
    if not all(np.all(np.isfinite(g)) for g in g_arrays):
        raise NumericalAbort("non-finite gradient passed to adam_step")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(p_arrays, g_arrays, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_p.append(p - lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    out = MlpParams(params.spec, new_p[0::2], new_p[1::2])
    return out, AdamState(new_m, new_v, t, b1, b2, state.eps)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Largest elementwise |a - n| / max(|a|, |n|, floor)."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar `f` with respect to every entry of `x`."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f(x)
        flat[i] = old - h
        down = f(x)
        flat[i] = old
        gflat[i] = (up - down) / (2.0 * h)
    return grad


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    per_array: list[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def grad_check(
    params: MlpParams,
    loss_fn: Callable[[MlpParams], tuple[float, MlpParams]],
    tolerance: float = 1e-4,
    h: float = 1e-5,
) -> GradCheckReport:
    """Compare `loss_fn`'s analytic parameter gradients against central differences.

    `loss_fn(params)` must return `(loss, grads)`.
    """
    _, analytic = loss_fn(params)
    probe = params.copy()
    errors = []
    for arr, g in zip(probe.arrays(), analytic.arrays()):

        def f(values, arr=arr):
            arr[...] = values
            return loss_fn(probe)[0]

        original = arr.copy()
        numeric = numeric_gradient(f, original, h)
        arr[...] = original
        errors.append(relative_error(g, numeric))
    return GradCheckReport(max(errors) if errors else 0.0, tolerance, errors)
