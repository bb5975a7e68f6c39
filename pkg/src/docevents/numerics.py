"""Dense numeric core.

A small multi-layer perceptron with hand-derived backward rules for both
parameters and inputs (input gradients drive the refinement loop), an
adaptive-moment optimizer with decoupled weight decay, a central-difference
gradient checker, and a byte-stable checkpoint container.

Everything is float64.  Refinement chains twenty dependent gradient steps,
so single precision drift would blur the monotonicity guarantees the tests
rely on.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Mapping, Optional, Sequence

import numpy as np


class NumericError(Exception):
    """A numeric contract was violated (non-finite values, stale cache...)."""


_ACTIVATIONS = ("relu", "identity", "logistic")


@dataclass
class MlpParams:
    """Weights of a feed-forward network.

    ``weights[i]`` has shape (d_in, d_out); biases match the output side.
    Hidden layers use the rectifier or tanh; the output layer is identity
    or logistic.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases) or not self.weights:
            raise NumericError("weights and biases must be non-empty parallel lists")
        if self.hidden_activation not in ("relu", "tanh"):
            raise NumericError(f"unsupported hidden activation {self.hidden_activation!r}")
        if self.output_activation not in ("identity", "logistic"):
            raise NumericError(f"unsupported output activation {self.output_activation!r}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise NumericError(f"layer {i} weight/bias shapes disagree: {w.shape} vs {b.shape}")
            if i > 0 and self.weights[i - 1].shape[1] != w.shape[0]:
                raise NumericError(
                    f"layer {i} input dim {w.shape[0]} does not match previous output "
                    f"{self.weights[i - 1].shape[1]}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise NumericError(f"layer {i} contains non-finite entries")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]


@dataclass
class MlpGrads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class MlpCache:
    params: MlpParams
    x: np.ndarray
    pre: list[np.ndarray]
    post: list[np.ndarray]

    @property
    def y(self) -> np.ndarray:
        return self.post[-1]


def mlp_init(rng: np.random.Generator, dims: Sequence[int],
             output_activation: str = "identity",
             hidden_activation: str = "relu") -> MlpParams:
    """He-scaled random initialization for the given layer sizes."""
    if len(dims) < 2:
        raise NumericError("an MLP needs at least input and output dimensions")
    weights, biases = [], []
    for i in range(len(dims) - 1):
        fan_in = dims[i]
        scale = np.sqrt(2.0 / fan_in) if i < len(dims) - 2 else np.sqrt(1.0 / fan_in)
        weights.append(rng.standard_normal((dims[i], dims[i + 1])) * scale)
        biases.append(np.zeros(dims[i + 1]))
    return MlpParams(weights=weights, biases=biases, output_activation=output_activation,
                     hidden_activation=hidden_activation)


def mlp_forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, MlpCache]:
    """Forward pass over a batch of rows; the cache feeds mlp_backward."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise NumericError(f"input shape {x.shape} does not match first layer ({params.in_dim} columns)")
    pre, post = [], []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        pre.append(z)
        if i < last:
            h = np.tanh(z) if params.hidden_activation == "tanh" else np.maximum(z, 0.0)
        elif params.output_activation == "logistic":
            h = _sigmoid(z)
        else:
            h = z
        post.append(h)
    if not np.isfinite(h).all():
        raise NumericError("mlp_forward produced non-finite activations")
    return h, MlpCache(params=params, x=x, pre=pre, post=post)


def mlp_backward(params: MlpParams, cache: MlpCache, grad_y: np.ndarray,
                 need_input_grad: bool = True) -> tuple[MlpGrads, Optional[np.ndarray]]:
    """Exact gradients with respect to all parameters and the input rows.

    ``need_input_grad=False`` skips the input-gradient matmul and returns
    None in its place.
    """
    if cache.params is not params:
        raise NumericError("stale cache: it was produced by different parameters")
    grad_y = np.asarray(grad_y, dtype=np.float64)
    if grad_y.shape != cache.y.shape:
        raise NumericError(f"grad_y shape {grad_y.shape} does not match output {cache.y.shape}")

    last = len(params.weights) - 1
    if params.output_activation == "logistic":
        y = cache.post[last]
        dz = grad_y * y * (1.0 - y)
    else:
        dz = grad_y
    d_weights: list[np.ndarray] = [None] * len(params.weights)  # type: ignore[list-item]
    d_biases: list[np.ndarray] = [None] * len(params.biases)  # type: ignore[list-item]
    for i in range(last, -1, -1):
        inp = cache.x if i == 0 else cache.post[i - 1]
        d_weights[i] = inp.T @ dz
        d_biases[i] = dz.sum(axis=0)
        if i > 0:
            da = dz @ params.weights[i].T
            if params.hidden_activation == "tanh":
                dz = da * (1.0 - cache.post[i - 1] ** 2)
            else:
                dz = da * (cache.pre[i - 1] > 0.0)
    grad_x = dz @ params.weights[0].T if need_input_grad else None
    return MlpGrads(weights=d_weights, biases=d_biases), grad_x


def mlp_arrays(prefix: str, params: MlpParams) -> Iterator[tuple[str, np.ndarray]]:
    """Stable (name, array) pairs for checkpointing and the optimizer."""
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        yield f"{prefix}/w{i}", w
        yield f"{prefix}/b{i}", b


def mlp_grad_arrays(prefix: str, grads: MlpGrads) -> Iterator[tuple[str, np.ndarray]]:
    for i, (w, b) in enumerate(zip(grads.weights, grads.biases)):
        yield f"{prefix}/w{i}", w
        yield f"{prefix}/b{i}", b


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=axis, keepdims=True)


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over rows and its gradient w.r.t. the logits."""
    n = logits.shape[0]
    if n == 0:
        return 0.0, np.zeros_like(logits)
    rows = np.arange(n)
    logp = log_softmax(logits, axis=1)
    loss = -float(logp[rows, labels].mean())
    dlogits = np.exp(logp)
    dlogits[rows, labels] -= 1.0
    dlogits /= n
    return loss, dlogits


@dataclass
class OptimState:
    """Adaptive-moment optimizer state with decoupled weight decay."""

    lr: float = 1e-3
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def optim_step(state: OptimState, params: Mapping[str, np.ndarray],
               grads: Mapping[str, np.ndarray]) -> Mapping[str, np.ndarray]:
    """One in-place update of every parameter named in ``grads``."""
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name in sorted(grads):
        g = grads[name]
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        p = params[name]
        if p.shape != g.shape:
            raise NumericError(f"gradient shape {g.shape} does not match parameter {name!r} {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if state.weight_decay:
            p -= state.lr * state.weight_decay * p
    return params


def finite_diff_check(f: Callable[[np.ndarray], tuple[float, np.ndarray]],
                      x: np.ndarray, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must be pure and return (scalar value, gradient w.r.t. x).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x, dtype=np.float64)
    _, grad = f(x)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != x.shape:
        raise NumericError(f"gradient shape {grad.shape} does not match input {x.shape}")
    worst = 0.0
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += eps
        xm[i] -= eps
        fp, _ = f(xp.reshape(x.shape))
        fm, _ = f(xm.reshape(x.shape))
        numeric = (fp - fm) / (2.0 * eps)
        err = abs(gflat[i] - numeric) / max(1.0, abs(gflat[i]))
        worst = max(worst, err)
    return worst


CHECKPOINT_MAGIC = b"DEVCKPT1"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, arrays: Mapping[str, np.ndarray],
                    meta: Mapping | None = None) -> None:
    """Write named arrays plus a JSON meta block; bytes are deterministic."""
    names = sorted(arrays)
    index = []
    offset = 0
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(arrays[name])
        raw = arr.tobytes()
        index.append({
            "name": name,
            "dtype": arr.dtype.str,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(raw),
        })
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"version": CHECKPOINT_VERSION, "meta": dict(meta or {}),
                         "arrays": index}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    if data[:8] != CHECKPOINT_MAGIC:
        raise NumericError(f"{path} is not a checkpoint file")
    hlen = int.from_bytes(data[8:16], "little")
    header = json.loads(data[16:16 + hlen].decode("utf-8"))
    if header.get("version") != CHECKPOINT_VERSION:
        raise NumericError(f"unsupported checkpoint version {header.get('version')!r}")
    base = 16 + hlen
    arrays = {}
    for entry in header["arrays"]:
        start = base + entry["offset"]
        raw = data[start:start + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"]).copy()
        arrays[entry["name"]] = arr
    return arrays, header.get("meta", {})
