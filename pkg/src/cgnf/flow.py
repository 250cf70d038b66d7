"""Causal graphical normalizing flow with monotone integral transformers.

Each node ``i`` maps its standardized value to base noise with

    z_i = offset_i(c_i) + integral_0^{x_i} g_i(t, c_i) dt,

where ``c_i`` is an embedding of the node's parents (inputs masked by the
DAG) and ``g_i > 0``. The Jacobian is triangular in topological order, so
``log|det J| = sum_i log g_i(x_i, c_i)``. Generation inverts the nodes one
at a time in topological order, clamping intervened nodes.
"""
from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .dag import CausalDAG
from .dequant import DEFAULT_SIGMA2, DequantSpec, dequantize
from .errors import DivergedLoss, InsufficientData, NonFiniteValue
from .nn import AdamW, Mlp, activation, activation_grad, sigmoid, softplus
from .numerics import bisect_increasing, clenshaw_curtis_unit

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
POSITIVITY_FLOOR = 1e-6
HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 300
    patience: int = 10
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    n_steps: int = 20
    seed: int = 0
    weight_decay: float = 0.0
    sigma2: float = DEFAULT_SIGMA2
    embed: int = 10
    cond_hidden: tuple[int, ...] = (20, 15)
    int_hidden: tuple[int, ...] = (15, 10, 5)

    def __post_init__(self):
        if abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise ValueError(f"split ratios must be non-negative and sum to 1, got {self.split}")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("batch_size must be positive and max_epochs non-negative")


class FlowModel:
    def __init__(self, dag: CausalDAG, embed: int = 10, cond_hidden=(20, 15), int_hidden=(15, 10, 5),
                 n_steps: int = 20, rng: np.random.Generator | None = None, sigma2: float = DEFAULT_SIGMA2):
        dag.validate()
        rng = rng if rng is not None else np.random.default_rng(0)
        d = dag.d
        self.dag = dag
        self.n_steps = int(n_steps)
        self.sigma2 = float(sigma2)
        self.conditioner = Mlp([d, *cond_hidden, embed], rng=rng, stack=(d,))
        self.integrand = Mlp([1 + embed, *int_hidden, 1], rng=rng, stack=(d,))
        self.offset = Mlp([embed, 1], rng=rng, stack=(d,))
        self.mean = np.zeros(d)
        self.std = np.ones(d)
        self.masks = dag.masks()
        self.order = dag.topological_order()
        self.metadata: dict = {}

    @classmethod
    def identity(cls, dag: CausalDAG, **kwargs) -> "FlowModel":
        """A flow whose integrand is 1 and offset 0 everywhere, so ``z = x``."""
        model = cls(dag, **kwargs)
        target = math.log(math.expm1(1.0 - POSITIVITY_FLOOR))
        model.integrand.weights[-1][...] = 0.0
        model.integrand.biases[-1][...] = target
        model.offset.weights[-1][...] = 0.0
        model.offset.biases[-1][...] = 0.0
        return model

    @property
    def d(self) -> int:
        return self.dag.d

    @property
    def params(self) -> list[np.ndarray]:
        return self.conditioner.params + self.integrand.params + self.offset.params

    @params.setter
    def params(self, values) -> None:
        values = list(values)
        nc, ni = len(self.conditioner.params), len(self.integrand.params)
        self.conditioner.params = values[:nc]
        self.integrand.params = values[nc:nc + ni]
        self.offset.params = values[nc + ni:]

    # -- standardization -------------------------------------------------

    def fit_standardization(self, data: np.ndarray) -> None:
        """Column z-scores; discrete columns use the moments of their dequantized law."""
        data = np.asarray(data, dtype=float)
        self.mean = data.mean(axis=0)
        var = data.var(axis=0)
        for node in self.dag.nodes:
            if node.discrete:
                var[node.index] += self.sigma2
        self.std = np.sqrt(np.where(var > 0, var, 1.0))

    def standardize(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def destandardize(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) * self.std + self.mean

    # -- forward ---------------------------------------------------------

    def _integrand_first_layer(self, emb: np.ndarray):
        """Split first integrand layer: returns the t-weights and the embedding part of the pre-activation.

        ``pre = t * w_t + (emb @ w_emb + b)`` avoids repeating the embedding for
        every quadrature abscissa.
        """
        w1, b1 = self.integrand.weights[0], self.integrand.biases[0]
        return w1[..., :1, :], emb @ w1[..., 1:, :] + b1

    def _pass(self, x: np.ndarray, keep_tape: bool):
        B = x.shape[0]
        d = self.d
        s, w = clenshaw_curtis_unit(self.n_steps)
        xin = self.masks[:, None, :] * x[None, :, :]
        emb, tape_c = self.conditioner.forward_cached(xin)
        beta, tape_b = self.offset.forward_cached(emb)
        xt = x.T
        t = np.concatenate([xt[..., None] * s, xt[..., None]], axis=-1)
        P = t.shape[-1]
        w_t, base = self._integrand_first_layer(emb)
        pre1 = t[..., None] * w_t[:, None, :, :] + base[:, :, None, :]
        act1 = activation(self.integrand.activations[0], pre1)
        H1 = act1.shape[-1]
        h, tape_g = self.integrand.tail(1).forward_cached(act1.reshape(d, B * P, H1))
        h = h.reshape(d, B, P)
        g = softplus(h) + POSITIVITY_FLOOR
        z = beta[..., 0] + xt * (g[..., :-1] @ w)
        logdiag = np.log(g[..., -1])
        if not keep_tape:
            return z.T, logdiag.T
        return z.T, logdiag.T, (tape_c, tape_b, tape_g, emb, t, pre1, act1, h, g, xt, w)

    def transform_forward(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Map standardized ``x`` (shape ``(d,)`` or ``(n, d)``) to ``(z, logdet)``."""
        x = np.asarray(x, dtype=float)
        vector = x.ndim == 1
        z, logdiag = self._pass(np.atleast_2d(x), keep_tape=False)
        logdet = logdiag.sum(axis=1)
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(logdet))):
            raise NonFiniteValue("forward transform produced non-finite values")
        return (z[0], logdet[0]) if vector else (z, logdet)

    def node_transform(self, i: int, x_i, x_parents: np.ndarray) -> np.ndarray:
        """``tau_i`` evaluated at every entry of ``x_i`` given standardized rows ``x_parents``."""
        first, beta, net_g = self._node_context(i, np.atleast_2d(x_parents))
        return self._tau(net_g, first, beta, np.asarray(x_i, dtype=float))

    def _node_context(self, i: int, x: np.ndarray):
        emb = self.conditioner.unstack(i).forward(x * self.masks[i])
        beta = self.offset.unstack(i).forward(emb)[:, 0]
        w1, b1 = self.integrand.weights[0][i], self.integrand.biases[0][i]
        return (w1[:1], emb @ w1[1:] + b1), beta, self.integrand.unstack(i).tail(1)

    def _tau(self, net_g: Mlp, first, beta: np.ndarray, xv: np.ndarray) -> np.ndarray:
        s, w = clenshaw_curtis_unit(self.n_steps)
        w_t, base = first
        B = base.shape[0]
        t = xv[:, None] * s
        act1 = activation(self.integrand.activations[0], t[..., None] * w_t + base[:, None, :])
        g = softplus(net_g.forward(act1.reshape(B * s.size, -1))).reshape(B, s.size) + POSITIVITY_FLOOR
        return beta + xv * (g @ w)

    # -- inverse ---------------------------------------------------------

    def intervention_values(self, interventions: Mapping[str, float] | None) -> dict[int, float]:
        """Map ``{name: data-scale value}`` to ``{index: standardized value}``."""
        out = {}
        for name, value in (interventions or {}).items():
            i = self.dag.index(name)
            node = self.dag.nodes[i]
            if node.discrete and (value != round(value) or not 0 <= value < node.n_classes):
                raise ValueError(f"{value} is not a class label of {name}")
            out[i] = (float(value) - self.mean[i]) / self.std[i]
        return out

    def transform_inverse(self, z, interventions: Mapping[str, float] | None = None,
                          tol: float = 1e-6, max_iter: int = 200) -> np.ndarray:
        """Generate standardized ``x`` from ``z`` node by node, clamping interventions."""
        z = np.asarray(z, dtype=float)
        vector = z.ndim == 1
        z = np.atleast_2d(z)
        clamp = self.intervention_values(interventions)
        x = np.zeros_like(z)
        for i in self.order:
            if i in clamp:
                x[:, i] = clamp[i]
                continue
            first, beta, net_g = self._node_context(i, x)
            x[:, i] = bisect_increasing(lambda v: self._tau(net_g, first, beta, v), z[:, i], tol, max_iter)
        if not np.all(np.isfinite(x)):
            raise NonFiniteValue("inverse transform produced non-finite values")
        return x[0] if vector else x

    # -- likelihood ------------------------------------------------------

    def log_prob(self, data) -> np.ndarray:
        """Per-row log-density of data-scale (dequantized) observations."""
        x = self.standardize(np.atleast_2d(data))
        z, logdet = self.transform_forward(x)
        return -0.5 * np.sum(z * z, axis=1) - self.d * HALF_LOG_2PI + logdet - np.sum(np.log(self.std))

    def loss_and_grads(self, x_std: np.ndarray) -> tuple[float, list[np.ndarray]]:
        """Mean negative log-likelihood of a standardized batch and its parameter gradients."""
        B = x_std.shape[0]
        z, logdiag, tape = self._pass(x_std, keep_tape=True)
        tape_c, tape_b, tape_g, emb, t, pre1, act1, h, g, xt, w = tape
        loss = (0.5 * np.sum(z * z) - np.sum(logdiag)) / B + self.d * HALF_LOG_2PI + np.sum(np.log(self.std))
        if not np.isfinite(loss):
            raise DivergedLoss(f"non-finite loss {loss}")
        d, _, P = g.shape
        dz = z.T / B
        dg = np.empty_like(g)
        dg[..., :-1] = (dz * xt)[..., None] * w
        dg[..., -1] = -1.0 / (B * g[..., -1])
        dh = dg * sigmoid(h)
        dact1, grads_tail = self.integrand.tail(1).backward(tape_g, dh.reshape(d, B * P, 1))
        dpre1 = activation_grad(self.integrand.activations[0], pre1, act1, dact1.reshape(pre1.shape))
        dbase = dpre1.sum(axis=2)
        w1 = self.integrand.weights[0]
        dw1 = np.concatenate([np.einsum("dbp,dbph->dh", t, dpre1)[:, None, :],
                              np.swapaxes(emb, -1, -2) @ dbase], axis=1)
        db1 = dbase.sum(axis=1, keepdims=True)
        demb = dbase @ np.swapaxes(w1[..., 1:, :], -1, -2)
        demb_b, grads_b = self.offset.backward(tape_b, dz[..., None])
        _, grads_c = self.conditioner.backward(tape_c, demb + demb_b, need_input_grad=False)
        return float(loss), grads_c + [dw1, db1] + grads_tail + grads_b

    # -- persistence -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": "cgnf-model",
            "version": FORMAT_VERSION,
            "dag": self.dag.to_dict(),
            "n_steps": self.n_steps,
            "sigma2": self.sigma2,
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "conditioner": self.conditioner.to_dict(),
            "integrand": self.integrand.to_dict(),
            "offset": self.offset.to_dict(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "FlowModel":
        if obj.get("format") != "cgnf-model" or obj.get("version") != FORMAT_VERSION:
            raise ValueError("not a supported model file")
        model = object.__new__(cls)
        model.dag = CausalDAG.from_dict(obj["dag"])
        model.n_steps = int(obj["n_steps"])
        model.sigma2 = float(obj["sigma2"])
        model.mean = np.array(obj["mean"], dtype=float)
        model.std = np.array(obj["std"], dtype=float)
        model.conditioner = Mlp.from_dict(obj["conditioner"])
        model.integrand = Mlp.from_dict(obj["integrand"])
        model.offset = Mlp.from_dict(obj["offset"])
        model.masks = model.dag.masks()
        model.order = model.dag.topological_order()
        model.metadata = obj.get("metadata", {})
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path) -> "FlowModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def log_likelihood(model: FlowModel, batch) -> float:
    """Total log-likelihood of a data-scale batch."""
    return float(np.sum(model.log_prob(batch)))


def dequantize_columns(dag: CausalDAG, data: np.ndarray, sigma2: float, seed) -> np.ndarray:
    """Copy of ``data`` with every discrete column Gaussian-dequantized."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = np.array(data, dtype=float, copy=True)
    for node in dag.nodes:
        if node.discrete:
            out[:, node.index] = dequantize(out[:, node.index], DequantSpec(node.n_classes, sigma2), rng)
    return out


def split_indices(n: int, ratios, seed) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]


@dataclass
class TrainingLog:
    train_nll: list[float] = field(default_factory=list)
    val_nll: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val_nll: float = math.inf
    test_nll: float = math.nan
    epochs_run: int = 0
    stop_reason: str = ""
    train_idx: list[int] = field(default_factory=list)
    val_idx: list[int] = field(default_factory=list)
    test_idx: list[int] = field(default_factory=list)

    def summary(self) -> dict:
        out = asdict(self)
        for key in ("train_idx", "val_idx", "test_idx"):
            out[key] = len(out[key])
        return out


def _mean_nll(model: FlowModel, data_std: np.ndarray, chunk: int = 1024) -> float:
    total = 0.0
    for start in range(0, data_std.shape[0], chunk):
        z, logdet = model.transform_forward(data_std[start:start + chunk])
        total += float(np.sum(0.5 * np.sum(z * z, axis=1) - logdet))
    n = data_std.shape[0]
    return total / n + model.d * HALF_LOG_2PI + float(np.sum(np.log(model.std)))


def fit(dag: CausalDAG, data, config: TrainConfig | None = None) -> tuple[FlowModel, TrainingLog]:
    """Maximum-likelihood training with early stopping on validation NLL.

    ``data`` holds data-scale observations with discrete columns given as
    class labels; they are dequantized here, afresh every epoch for the
    training split and once (fixed seed) for validation and test.
    """
    config = config or TrainConfig()
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != dag.d:
        raise ValueError(f"data must have shape (n, {dag.d})")
    train_idx, val_idx, test_idx = split_indices(data.shape[0], config.split, [config.seed, 0])
    if min(len(train_idx), len(val_idx), len(test_idx)) == 0:
        raise InsufficientData(f"{data.shape[0]} rows leave an empty split under {config.split}")

    rng = np.random.default_rng([config.seed, 1])
    model = FlowModel(dag, config.embed, config.cond_hidden, config.int_hidden, config.n_steps,
                      rng=np.random.default_rng([config.seed, 3]), sigma2=config.sigma2)
    train_raw = data[train_idx]
    model.fit_standardization(train_raw)
    fixed = np.random.default_rng([config.seed, 2])
    val = model.standardize(dequantize_columns(dag, data[val_idx], config.sigma2, fixed))
    test = model.standardize(dequantize_columns(dag, data[test_idx], config.sigma2, fixed))

    opt = AdamW(model.params, lr=config.lr, weight_decay=config.weight_decay)
    history = TrainingLog(train_idx=train_idx.tolist(), val_idx=val_idx.tolist(), test_idx=test_idx.tolist())
    train0 = model.standardize(dequantize_columns(dag, train_raw, config.sigma2, rng))
    history.train_nll.append(_mean_nll(model, train0))
    history.val_nll.append(_mean_nll(model, val))
    history.best_val_nll = history.val_nll[0]
    best_params = [p.copy() for p in model.params]
    bad_epochs = 0
    history.stop_reason = "max_epochs"
    for epoch in range(1, config.max_epochs + 1):
        train = model.standardize(dequantize_columns(dag, train_raw, config.sigma2, rng))
        perm = rng.permutation(train.shape[0])
        losses, sizes = [], []
        for start in range(0, len(perm), config.batch_size):
            batch = train[perm[start:start + config.batch_size]]
            loss, grads = model.loss_and_grads(batch)
            opt.step(grads)
            losses.append(loss)
            sizes.append(batch.shape[0])
        history.train_nll.append(float(np.average(losses, weights=sizes)))
        val_nll = _mean_nll(model, val)
        if not np.isfinite(val_nll):
            raise DivergedLoss(f"validation NLL became {val_nll} at epoch {epoch}")
        history.val_nll.append(val_nll)
        history.epochs_run = epoch
        if val_nll < history.best_val_nll:
            history.best_val_nll = val_nll
            history.best_epoch = epoch
            best_params = [p.copy() for p in model.params]
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                history.stop_reason = "patience"
                break
        log.debug("epoch %d train %.4f val %.4f", epoch, history.train_nll[-1], val_nll)
    model.params = best_params
    history.test_nll = _mean_nll(model, test)
    model.metadata = {
        "train_config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(config).items()},
        "best_epoch": history.best_epoch,
        "best_val_nll": history.best_val_nll,
        "test_nll": history.test_nll,
        "epochs_run": history.epochs_run,
        "n_rows": int(data.shape[0]),
        "val_idx": history.val_idx,
        "test_idx": history.test_idx,
    }
    log.info("trained %d epochs, best %d, val %.4f, test %.4f", history.epochs_run,
             history.best_epoch, history.best_val_nll, history.test_nll)
    return model, history
