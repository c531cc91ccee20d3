#!/usr/bin/env python3
"""
Weighted Hypergraph Convolution Module
======================================

Two-layer hypergraph convolutional network that propagates seed labels to
every superpoint vertex.

Per layer:
    w(e)    = mean over ordered member pairs (i != j) of exp(-LeakyReLU(sim_ij) / mu),
              sim_ij = a . [x_i Theta || x_j Theta]
    X_next  = act(D^-1/2 H W B^-1 H^T D^-1/2 X Theta)

Hidden layers use ReLU (and dropout while training); the last layer is
followed by a row softmax. Training minimizes cross-entropy on the seed
vertices with Adam; gradients are derived by hand through the softmax, both
layers and the attention weights.
"""

import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.core.cutpursuit import SuperpointPartition
from src.core.numcore import ParameterSet
from src.labeling.hypergraph import Hypergraph, inverse_sqrt_degrees
from src.utils.errors import (CloudIoError, DegenerateHyperedge, NoLabeledVertices, ParseError,
                              ShapeMismatch)

logger = logging.getLogger(__name__)

MODEL_MAGIC = "WHCN-MODEL"
MODEL_VERSION = "v1"
LOG_CLAMP = 1e-12
# exp(-LeakyReLU(s)/mu) is evaluated with its exponent capped here
MAX_EXPONENT = 50.0


@dataclass
class WhcnModel:
    """
    Per-layer transforms ``thetas[l]`` (d_in x d_out) and attention vectors
    ``attentions[l]`` (2 * d_out).
    """
    thetas: List[np.ndarray]
    attentions: List[np.ndarray]
    hidden_dim: int
    dropout_rate: float = 0.5
    mu: float = 1.0
    leaky_slope: float = 0.01
    rng_seed: int = 0
    use_attention: bool = True

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.dropout_rate}")
        if len(self.thetas) != len(self.attentions):
            raise ShapeMismatch("one attention vector per layer is required")
        for theta, att in zip(self.thetas, self.attentions):
            if att.shape != (2 * theta.shape[1],):
                raise ShapeMismatch(f"attention vector {att.shape} for theta {theta.shape}")

    @property
    def n_layers(self) -> int:
        return len(self.thetas)

    def parameters(self) -> Dict[str, np.ndarray]:
        params = {f"theta{l}": t for l, t in enumerate(self.thetas)}
        params.update({f"attention{l}": a for l, a in enumerate(self.attentions)})
        return params

    def load_parameters(self, params: Dict[str, np.ndarray]) -> None:
        self.thetas = [np.asarray(params[f"theta{l}"], dtype=np.float64) for l in range(self.n_layers)]
        self.attentions = [np.asarray(params[f"attention{l}"], dtype=np.float64) for l in range(self.n_layers)]


@dataclass(frozen=True)
class VertexLabeling:
    probabilities: np.ndarray
    labels: np.ndarray

    @classmethod
    def from_probabilities(cls, probabilities: np.ndarray) -> "VertexLabeling":
        return cls(probabilities, np.argmax(probabilities, axis=1).astype(np.int64))


def init_model(in_dim: int, n_categories: int, hidden_dim: int = 32, dropout_rate: float = 0.5,
               mu: float = 1.0, leaky_slope: float = 0.01, rng_seed: int = 0,
               use_attention: bool = True, n_layers: int = 2) -> WhcnModel:
    """
    Scaled-uniform initialization

    Theta entries are uniform in +-sqrt(6 / (d_in + d_out)); attention
    entries in +-0.05.
    """
    rng = np.random.default_rng(rng_seed)
    dims = [in_dim] + [hidden_dim] * (n_layers - 1) + [n_categories]
    thetas, attentions = [], []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (d_in + d_out))
        thetas.append(rng.uniform(-bound, bound, size=(d_in, d_out)))
        attentions.append(rng.uniform(-0.05, 0.05, size=2 * d_out))
    return WhcnModel(thetas, attentions, hidden_dim, dropout_rate, mu, leaky_slope, rng_seed, use_attention)


@dataclass(frozen=True)
class PairIndex:
    """Ordered member pairs of every hyperedge, flattened."""
    edge: np.ndarray
    first: np.ndarray
    second: np.ndarray
    n_pairs: np.ndarray


def pair_index(hg: Hypergraph) -> PairIndex:
    edges, firsts, seconds, counts = [], [], [], []
    for e in range(hg.n_edges):
        members = hg.members(e)
        r = len(members)
        if r < 2:
            raise DegenerateHyperedge(f"hyperedge {e} ({hg.edge_kind[e]}) has {r} member(s)")
        ii, jj = np.meshgrid(members, members, indexing="ij")
        off = ~np.eye(r, dtype=bool)
        firsts.append(ii[off])
        seconds.append(jj[off])
        edges.append(np.full(r * (r - 1), e, dtype=np.int64))
        counts.append(r * (r - 1))
    return PairIndex(np.concatenate(edges), np.concatenate(firsts), np.concatenate(seconds),
                     np.array(counts, dtype=np.float64))


def _leaky(s: np.ndarray, slope: float) -> np.ndarray:
    return np.where(s > 0, s, slope * s)


def _attention(z: np.ndarray, a: np.ndarray, pairs: PairIndex, mu: float, slope: float):
    d = z.shape[1]
    p, q = z @ a[:d], z @ a[d:]
    s = p[pairs.first] + q[pairs.second]
    exponent = -_leaky(s, slope) / mu
    capped = exponent > MAX_EXPONENT
    ex = np.exp(np.minimum(exponent, MAX_EXPONENT))
    w = np.bincount(pairs.edge, weights=ex, minlength=len(pairs.n_pairs)) / pairs.n_pairs
    return w, (s, ex, capped)


def hyperedge_attention_weights(x: np.ndarray, theta: np.ndarray, a: np.ndarray, hg: Hypergraph,
                                mu: float = 1.0, leaky_slope: float = 0.01) -> np.ndarray:
    """
    Attention weight of every hyperedge

    Args:
        x (np.ndarray): (N, d) vertex features
        theta (np.ndarray): (d, d') transform
        a (np.ndarray): (2 d',) attention vector
        hg (Hypergraph): Hypergraph, every hyperedge with at least two members
        mu (float): Scale, > 0
        leaky_slope (float): Negative-side slope of LeakyReLU

    Returns:
        np.ndarray: (E,) strictly positive weights
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != hg.n_vertices or x.shape[1] != theta.shape[0] or a.shape != (2 * theta.shape[1],):
        raise ShapeMismatch(f"x {x.shape}, theta {theta.shape}, a {a.shape}")
    w, _ = _attention(x @ theta, a, pair_index(hg), mu, leaky_slope)
    return w


def _operator(incidence: np.ndarray, w: np.ndarray):
    b = incidence.sum(axis=0)
    degrees = incidence @ w
    dinv = inverse_sqrt_degrees(degrees)
    mixing = (incidence * (w / b)) @ incidence.T
    op = dinv[:, None] * mixing * dinv[None, :]
    return op, mixing, dinv, degrees, b


def whcn_layer(x: np.ndarray, hg: Hypergraph, theta: np.ndarray, activation: str = "relu") -> np.ndarray:
    """
    One propagation step act(D^-1/2 H W B^-1 H^T D^-1/2 X Theta) with the
    hypergraph's current weights

    Args:
        activation (str): "relu" or "identity"
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != hg.n_vertices or x.shape[1] != theta.shape[0]:
        raise ShapeMismatch(f"x {x.shape} vs theta {theta.shape} on {hg.n_vertices} vertices")
    if np.any(hg.incidence.sum(axis=0) < 2):
        raise DegenerateHyperedge("every hyperedge needs at least two vertices")
    op, _, _, _, _ = _operator(hg.incidence, hg.weights)
    out = op @ (x @ theta)
    if activation == "relu":
        return np.maximum(out, 0.0)
    if activation == "identity":
        return out
    raise ValueError(f"unknown activation '{activation}'")


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class ForwardCache:
    layers: List[dict] = field(default_factory=list)
    logits: Optional[np.ndarray] = None


def forward(model: WhcnModel, x0: np.ndarray, hg: Hypergraph, training_mode: bool = False,
            rng: Optional[np.random.Generator] = None,
            pairs: Optional[PairIndex] = None) -> Tuple[VertexLabeling, ForwardCache]:
    """
    Run every layer, recomputing hyperedge weights from each layer's input

    Args:
        model (WhcnModel): Network
        x0 (np.ndarray): (N, d0) superpoint descriptors
        hg (Hypergraph): Hypergraph over the same vertices
        training_mode (bool): Apply inverted dropout to hidden activations
        rng (np.random.Generator, optional): Dropout source
        pairs (PairIndex, optional): Precomputed pair index of ``hg``

    Returns:
        Tuple[VertexLabeling, ForwardCache]: Softmax output and backprop cache
    """
    x = np.asarray(x0, dtype=np.float64)
    if x.shape != (hg.n_vertices, model.thetas[0].shape[0]):
        raise ShapeMismatch(f"x0 {x.shape} vs {hg.n_vertices} vertices x {model.thetas[0].shape[0]} features")
    if pairs is None and model.use_attention:
        pairs = pair_index(hg)
    if np.any(hg.incidence.sum(axis=0) < 2):
        raise DegenerateHyperedge("every hyperedge needs at least two vertices")
    if training_mode and rng is None:
        rng = np.random.default_rng(model.rng_seed)

    cache = ForwardCache()
    for l, (theta, a) in enumerate(zip(model.thetas, model.attentions)):
        z = x @ theta
        if model.use_attention:
            w, att = _attention(z, a, pairs, model.mu, model.leaky_slope)
        else:
            w, att = np.ones(hg.n_edges), None
        op, mixing, dinv, degrees, b = _operator(hg.incidence, w)
        pre = op @ z
        entry = dict(x=x, z=z, w=w, att=att, op=op, mixing=mixing, dinv=dinv, degrees=degrees, b=b, pre=pre)
        if l < model.n_layers - 1:
            out = np.maximum(pre, 0.0)
            if training_mode and model.dropout_rate > 0:
                keep = rng.random(out.shape) >= model.dropout_rate
                entry["mask"] = keep / (1.0 - model.dropout_rate)
                out = out * entry["mask"]
            x = out
        cache.layers.append(entry)
    cache.logits = pre
    return VertexLabeling.from_probabilities(_softmax(pre)), cache


def _layer_backward(model: WhcnModel, l: int, entry: dict, grad_pre: np.ndarray,
                    hg: Hypergraph, pairs: Optional[PairIndex]):
    theta, a = model.thetas[l], model.attentions[l]
    z, op = entry["z"], entry["op"]
    grad_z = op.T @ grad_pre
    grad_a = np.zeros_like(a)

    if model.use_attention:
        h = hg.incidence
        dinv, mixing, degrees, b = entry["dinv"], entry["mixing"], entry["degrees"], entry["b"]
        grad_op = grad_pre @ z.T
        grad_mixing = dinv[:, None] * grad_op * dinv[None, :]
        grad_dinv = ((grad_op + grad_op.T) * mixing) @ dinv
        grad_deg = np.zeros_like(degrees)
        positive = degrees > 0
        grad_deg[positive] = -0.5 * degrees[positive] ** -1.5 * grad_dinv[positive]
        grad_w = h.T @ grad_deg + np.sum((grad_mixing @ h) * h, axis=0) / b

        s, ex, capped = entry["att"]
        slope = np.where(s > 0, 1.0, model.leaky_slope)
        grad_s = (grad_w[pairs.edge] / pairs.n_pairs[pairs.edge]) * ex * (-1.0 / model.mu) * slope
        grad_s[capped] = 0.0
        n = hg.n_vertices
        grad_p = np.bincount(pairs.first, weights=grad_s, minlength=n)
        grad_q = np.bincount(pairs.second, weights=grad_s, minlength=n)
        d = z.shape[1]
        grad_a = np.concatenate([z.T @ grad_p, z.T @ grad_q])
        grad_z = grad_z + np.outer(grad_p, a[:d]) + np.outer(grad_q, a[d:])

    grad_theta = entry["x"].T @ grad_z
    grad_x = grad_z @ theta.T
    return grad_theta, grad_a, grad_x


def backward(model: WhcnModel, cache: ForwardCache, grad_logits: np.ndarray, hg: Hypergraph,
             pairs: Optional[PairIndex] = None) -> Dict[str, np.ndarray]:
    """
    Reverse-mode gradients of a scalar objective given its logit gradient

    Returns:
        Dict[str, np.ndarray]: Gradients keyed like ``model.parameters()``;
        attention gradients are zero when attention is disabled
    """
    if pairs is None and model.use_attention:
        pairs = pair_index(hg)
    grads: Dict[str, np.ndarray] = {}
    grad_pre = grad_logits
    for l in reversed(range(model.n_layers)):
        entry = cache.layers[l]
        grad_theta, grad_a, grad_x = _layer_backward(model, l, entry, grad_pre, hg, pairs)
        grads[f"theta{l}"] = grad_theta
        grads[f"attention{l}"] = grad_a
        if l > 0:
            below = cache.layers[l - 1]
            if "mask" in below:
                grad_x = grad_x * below["mask"]
            grad_pre = grad_x * (below["pre"] > 0)
    return grads


def _labeled_arrays(labeled_vertices: Sequence[Tuple[int, int]]) -> Tuple[np.ndarray, np.ndarray]:
    if len(labeled_vertices) == 0:
        raise NoLabeledVertices("cross-entropy needs at least one labeled vertex")
    vertices = np.array([v for v, _ in labeled_vertices], dtype=np.int64)
    categories = np.array([c for _, c in labeled_vertices], dtype=np.int64)
    return vertices, categories


def loss(labeling: VertexLabeling, labeled_vertices: Sequence[Tuple[int, int]]) -> float:
    """
    Cross-entropy over the labeled vertices, -sum_i log p_{i, y_i}

    Args:
        labeling (VertexLabeling): Network output
        labeled_vertices: (vertex, category) pairs

    Returns:
        float: Summed loss with log clamped at 1e-12
    """
    vertices, categories = _labeled_arrays(labeled_vertices)
    p = labeling.probabilities[vertices, categories]
    return float(-np.sum(np.log(np.maximum(p, LOG_CLAMP))))


def loss_gradient(labeling: VertexLabeling, labeled_vertices: Sequence[Tuple[int, int]]) -> np.ndarray:
    """d loss / d logits: P - Y on labeled rows, 0 elsewhere."""
    vertices, categories = _labeled_arrays(labeled_vertices)
    grad = np.zeros_like(labeling.probabilities)
    np.add.at(grad, vertices, labeling.probabilities[vertices])
    np.add.at(grad, (vertices, categories), -1.0)
    return grad


def train(model: WhcnModel, x0: np.ndarray, hg: Hypergraph, labeled_vertices: Sequence[Tuple[int, int]],
          epochs: int = 500, lr: float = 0.003) -> Tuple[WhcnModel, List[float]]:
    """
    Full-batch Adam on the seed cross-entropy

    Dropout masks for epoch ``t`` come from ``default_rng([rng_seed, t])``.

    Returns:
        Tuple[WhcnModel, List[float]]: The trained model (updated in place)
        and the loss of each epoch before its update
    """
    _labeled_arrays(labeled_vertices)
    pairs = pair_index(hg) if model.use_attention else None
    optimizer = ParameterSet(model.parameters())
    trace: List[float] = []
    for epoch in range(epochs):
        rng = np.random.default_rng([model.rng_seed, epoch])
        labeling, cache = forward(model, x0, hg, training_mode=True, rng=rng, pairs=pairs)
        trace.append(loss(labeling, labeled_vertices))
        grads = backward(model, cache, loss_gradient(labeling, labeled_vertices), hg, pairs)
        if not model.use_attention:
            grads = {k: v for k, v in grads.items() if k.startswith("theta")}
        optimizer.step(grads, lr)
        model.load_parameters(optimizer.params)
    if trace:
        logger.debug("whcn: %d epochs, loss %.4f -> %.4f", epochs, trace[0], trace[-1])
    return model, trace


def predict(model: WhcnModel, x0: np.ndarray, hg: Hypergraph) -> VertexLabeling:
    labeling, _ = forward(model, x0, hg, training_mode=False)
    return labeling


def expand_to_points(labeling: VertexLabeling, partition: SuperpointPartition) -> np.ndarray:
    """Each point takes its superpoint's predicted label."""
    if len(labeling.labels) != partition.n_superpoints:
        raise ShapeMismatch(f"{len(labeling.labels)} vertex labels for {partition.n_superpoints} superpoints")
    return labeling.labels[partition.assignment]


def save_model(model: WhcnModel, path: str) -> None:
    """Write a WHCN-MODEL v1 checkpoint with round-trip float precision."""
    lines = [f"{MODEL_MAGIC} {MODEL_VERSION}",
             f"layers {model.n_layers} hidden_dim {model.hidden_dim} dropout {model.dropout_rate!r} "
             f"mu {model.mu!r} leaky_slope {model.leaky_slope!r} rng_seed {model.rng_seed} "
             f"use_attention {int(model.use_attention)}"]
    for l, (theta, a) in enumerate(zip(model.thetas, model.attentions)):
        lines.append(f"theta {l} {theta.shape[0]} {theta.shape[1]}")
        lines.extend(" ".join(repr(float(v)) for v in row) for row in theta)
        lines.append(f"attention {l} {a.shape[0]}")
        lines.append(" ".join(repr(float(v)) for v in a))
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as e:
        raise CloudIoError(f"cannot write model to '{path}': {e}") from e


def load_model(path: str) -> WhcnModel:
    if not os.path.isfile(path):
        raise CloudIoError(f"model file '{path}' not found")
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].split() != [MODEL_MAGIC, MODEL_VERSION]:
        raise ParseError(1, lines[0] if lines else "", "expected WHCN-MODEL v1 header")
    tokens = lines[1].split()
    meta = dict(zip(tokens[::2], tokens[1::2]))
    n_layers = int(meta["layers"])
    thetas, attentions = [], []
    pos = 2
    try:
        for _ in range(n_layers):
            _, _, rows, cols = lines[pos].split()
            rows, cols = int(rows), int(cols)
            thetas.append(np.array([[float(v) for v in lines[pos + 1 + r].split()] for r in range(rows)]
                                   ).reshape(rows, cols))
            pos += 1 + rows
            attentions.append(np.array([float(v) for v in lines[pos + 1].split()]))
            pos += 2
    except (ValueError, IndexError):
        raise ParseError(pos + 1, lines[pos] if pos < len(lines) else "") from None
    return WhcnModel(thetas, attentions, hidden_dim=int(meta["hidden_dim"]),
                     dropout_rate=float(meta["dropout"]), mu=float(meta["mu"]),
                     leaky_slope=float(meta["leaky_slope"]), rng_seed=int(meta["rng_seed"]),
                     use_attention=bool(int(meta["use_attention"])))


def save_loss_trace(trace: Sequence[float], path: str) -> None:
    """CSV with columns ``epoch,loss``."""
    pd.DataFrame({"epoch": np.arange(len(trace)), "loss": np.asarray(trace, dtype=np.float64)}).to_csv(
        path, index=False, float_format="%.17g")
