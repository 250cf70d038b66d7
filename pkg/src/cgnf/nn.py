"""Small fully connected networks with explicit reverse-mode gradients.

An ``Mlp`` may carry a leading *stack* shape: ``stack=(d,)`` holds ``d``
independent networks with identical layer widths whose forward passes run
as one batched matmul. Inputs then have shape ``(d, batch, fan_in)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ShapeMismatch

ACTIVATIONS = ("elu", "relu", "identity")


def activation(name: str, h: np.ndarray) -> np.ndarray:
    if name == "elu":
        out = np.expm1(np.minimum(h, 0.0))
        out += np.maximum(h, 0.0)
        return out
    if name == "relu":
        return np.maximum(h, 0.0)
    return h


def activation_grad(name: str, h: np.ndarray, out: np.ndarray, g: np.ndarray) -> np.ndarray:
    if name == "elu":
        # for h <= 0, out + 1 == exp(h); for h > 0 the slope is 1
        return g * (np.minimum(out, 0.0) + 1.0)
    if name == "relu":
        return g * (h > 0)
    return g


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Mlp:
    """Affine layers with per-layer activations.

    ``widths`` lists every layer size including input and output. Hidden
    layers default to ELU and the output layer to identity.
    """

    def __init__(self, widths: Sequence[int], activations: Sequence[str] | None = None,
                 rng: np.random.Generator | None = None, stack: tuple[int, ...] = ()):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ValueError(f"invalid layer widths {widths}")
        if activations is None:
            activations = ["elu"] * (len(widths) - 2) + ["identity"]
        if len(activations) != len(widths) - 1:
            raise ValueError("need one activation per layer")
        for a in activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        self.widths = widths
        self.activations = list(activations)
        self.stack = tuple(stack)
        rng = rng if rng is not None else np.random.default_rng()
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, self.stack + (fan_in, fan_out)))
            self.biases.append(np.zeros(self.stack + (1, fan_out)))

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @params.setter
    def params(self, values: Sequence[np.ndarray]) -> None:
        values = list(values)
        if len(values) != 2 * len(self.weights):
            raise ShapeMismatch("parameter list length does not match the network")
        for k in range(len(self.weights)):
            w, b = np.asarray(values[2 * k], float), np.asarray(values[2 * k + 1], float)
            if w.shape != self.weights[k].shape or b.shape != self.biases[k].shape:
                raise ShapeMismatch(f"layer {k}: got {w.shape}/{b.shape}")
            self.weights[k], self.biases[k] = w, b

    def n_params(self) -> int:
        per_net = sum((i + 1) * o for i, o in zip(self.widths[:-1], self.widths[1:]))
        return per_net * int(np.prod(self.stack, dtype=int))

    def unstack(self, index) -> "Mlp":
        """A view on one network of a stacked ``Mlp`` (shares arrays)."""
        net = object.__new__(Mlp)
        net.widths = self.widths
        net.activations = self.activations
        net.stack = self.weights[0][index].shape[:-2]
        net.weights = [w[index] for w in self.weights]
        net.biases = [b[index] for b in self.biases]
        return net

    def tail(self, start: int) -> "Mlp":
        """A view on layers ``start:`` (shares arrays)."""
        net = object.__new__(Mlp)
        net.widths = self.widths[start:]
        net.activations = self.activations[start:]
        net.stack = self.stack
        net.weights = self.weights[start:]
        net.biases = self.biases[start:]
        return net

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.widths[0]:
            raise ShapeMismatch(f"expected input width {self.widths[0]}, got {x.shape[-1]}")
        return x

    def forward(self, x) -> np.ndarray:
        x = self._check(x)
        vector = x.ndim == 1
        h = x[None, :] if vector else x
        for w, b, act in zip(self.weights, self.biases, self.activations):
            h = activation(act, h @ w + b)
        return h[0] if vector else h

    __call__ = forward

    def forward_cached(self, x) -> tuple[np.ndarray, list]:
        """Forward pass that also returns the tape needed by ``backward``."""
        x = self._check(x)
        h = x
        tape = []
        for w, b, act in zip(self.weights, self.biases, self.activations):
            pre = h @ w + b
            out = activation(act, pre)
            tape.append((h, pre, out))
            h = out
        return h, tape

    def backward(self, tape: list, grad_out, need_input_grad: bool = True):
        """Reverse-mode pass; returns ``(input_grad, param_grads)``.

        ``param_grads`` is ordered like ``params``. Batch axes are summed.
        """
        g = np.asarray(grad_out, dtype=float)
        if g.shape != tape[-1][2].shape:
            raise ShapeMismatch(f"upstream gradient shape {g.shape} != output {tape[-1][2].shape}")
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))
        for k in range(len(self.weights) - 1, -1, -1):
            h_in, pre, out = tape[k]
            g = activation_grad(self.activations[k], pre, out, g)
            grads[2 * k] = self._reduce(np.swapaxes(h_in, -1, -2) @ g, self.weights[k].shape)
            grads[2 * k + 1] = self._reduce(g.sum(axis=-2, keepdims=True), self.biases[k].shape)
            if k > 0 or need_input_grad:
                g = g @ np.swapaxes(self.weights[k], -1, -2)
        return (g if need_input_grad else None), grads

    @staticmethod
    def _reduce(grad: np.ndarray, shape: tuple) -> np.ndarray:
        # sum out broadcast batch axes so the gradient matches the parameter shape
        while grad.ndim > len(shape):
            grad = grad.sum(axis=0)
        return grad

    def to_dict(self) -> dict:
        return {
            "widths": self.widths,
            "activations": self.activations,
            "stack": list(self.stack),
            "params": [p.tolist() for p in self.params],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Mlp":
        net = cls(obj["widths"], obj["activations"], np.random.default_rng(0), tuple(obj["stack"]))
        net.params = [np.array(p, dtype=float) for p in obj["params"]]
        return net


@dataclass
class AdamW:
    """Adam with decoupled weight decay, updating parameter arrays in place."""

    params: list[np.ndarray]
    lr: float = 1e-3
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.m:
            self.m = [np.zeros_like(p) for p in self.params]
            self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads: Sequence[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ShapeMismatch("one gradient per parameter required")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ShapeMismatch(f"gradient shape {g.shape} != parameter {p.shape}")
            if self.weight_decay:
                p *= 1.0 - self.lr * self.weight_decay
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def finite_difference_grad(loss, params: Sequence[np.ndarray], step: float = 1e-4) -> list[np.ndarray]:
    """Central differences of scalar ``loss()`` with respect to each array in ``params``.

    Arrays are perturbed in place and restored.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up = loss()
            flat[k] = orig - step
            down = loss()
            flat[k] = orig
            gflat[k] = (up - down) / (2 * step)
        grads.append(g)
    return grads
