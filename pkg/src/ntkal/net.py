"""Feed-forward network with tangent-kernel parameterization.

Weights and biases are drawn from the standard normal distribution; the
layer scaling 1/sqrt(n_l) and the bias scale beta live in the forward
pass, so pre-activations stay O(1) at any width:

    h[l+1] = a[l] @ W[l] / sqrt(n_l) + beta * b[l]

with the nonlinearity applied between layers and never at the output.
Forward, backward, and SGD are written directly in numpy so that
per-example gradients of the first output logit (the features behind the
empirical tangent kernel) are available both as flat vectors and in the
factorized activation/delta form used for fast Gram computation.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import erf as _erf

from .errors import ContractError, DivergenceError, FormatError, ShapeError

__all__ = [
    "MlpConfig",
    "MlpParams",
    "TrainConfig",
    "init",
    "forward",
    "grad_first_logit",
    "grad_factors",
    "train_sgd",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_MAGIC = "NTKAL-MLP-v1"

_TWO_OVER_SQRT_PI = 2.0 / np.sqrt(np.pi)

NONLINEARITIES = ("relu", "erf", "identity")


def _act(name, h):
    if name == "relu":
        return np.maximum(h, 0.0)
    if name == "erf":
        return _erf(h)
    return h


def _act_deriv(name, h):
    if name == "relu":
        return (h > 0.0).astype(np.float64)
    if name == "erf":
        return _TWO_OVER_SQRT_PI * np.exp(-h * h)
    return np.ones_like(h)


@dataclass(frozen=True)
class MlpConfig:
    """Architecture: layer widths n_0..n_L, nonlinearity, bias scale, seed."""

    widths: tuple
    nonlinearity: str = "relu"
    beta: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2:
            raise ContractError("need at least input and output widths")
        if any(w < 1 for w in self.widths):
            raise ContractError(f"all widths must be >= 1, got {self.widths}")
        if self.nonlinearity not in NONLINEARITIES:
            raise ContractError(
                f"unknown nonlinearity {self.nonlinearity!r}; "
                f"choose from {NONLINEARITIES}"
            )
        if self.beta < 0:
            raise ContractError("beta must be >= 0")

    @property
    def input_dim(self):
        return self.widths[0]

    @property
    def output_dim(self):
        return self.widths[-1]

    @property
    def n_layers(self):
        return len(self.widths) - 1

    @property
    def param_count(self):
        return sum(
            (self.widths[l] + 1) * self.widths[l + 1] for l in range(self.n_layers)
        )


@dataclass(frozen=True)
class MlpParams:
    """Per-layer weight matrices (n_l x n_{l+1}) and bias vectors (n_{l+1},)."""

    config: MlpConfig
    weights: tuple
    biases: tuple

    @property
    def param_count(self):
        return self.config.param_count

    def flat(self):
        """Parameters flattened in the fixed order W0, b0, W1, b1, ..."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)


def init(config):
    """Fresh parameters, every entry i.i.d. standard normal from the seed."""
    rng = np.random.default_rng(config.seed)
    weights, biases = [], []
    for l in range(config.n_layers):
        weights.append(rng.standard_normal((config.widths[l], config.widths[l + 1])))
        biases.append(rng.standard_normal(config.widths[l + 1]))
    return MlpParams(config=config, weights=tuple(weights), biases=tuple(biases))


def params_from_flat(config, flat):
    """Inverse of MlpParams.flat()."""
    flat = np.asarray(flat, dtype=np.float64)
    if flat.shape != (config.param_count,):
        raise ShapeError(
            f"expected {config.param_count} parameters, got {flat.shape}"
        )
    weights, biases, pos = [], [], 0
    for l in range(config.n_layers):
        n_in, n_out = config.widths[l], config.widths[l + 1]
        weights.append(flat[pos : pos + n_in * n_out].reshape(n_in, n_out))
        pos += n_in * n_out
        biases.append(flat[pos : pos + n_out])
        pos += n_out
    return MlpParams(config=config, weights=tuple(weights), biases=tuple(biases))


def _check_input(params, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != params.config.input_dim:
        raise ShapeError(
            f"input has shape {x.shape}, network expects "
            f"(batch, {params.config.input_dim})"
        )
    return x, single


def _forward_trace(params, x):
    """Forward pass keeping activations and pre-activations for backprop."""
    cfg = params.config
    acts = [x]
    preacts = []
    a = x
    for l in range(cfg.n_layers):
        h = a @ params.weights[l] / np.sqrt(cfg.widths[l]) + cfg.beta * params.biases[l]
        preacts.append(h)
        a = _act(cfg.nonlinearity, h) if l + 1 < cfg.n_layers else h
        acts.append(a)
    return acts, preacts


def forward(params, x):
    """Network outputs, shape (batch, C); a 1-D input returns a 1-D output."""
    x, single = _check_input(params, x)
    acts, _ = _forward_trace(params, x)
    out = acts[-1]
    return out[0] if single else out


def _backprop_from(params, acts, preacts, g_out):
    """Gradients of sum(g_out * f) w.r.t. every parameter.

    g_out has shape (batch, C). Returns (weight_grads, bias_grads) summed
    over the batch.
    """
    cfg = params.config
    w_grads = [None] * cfg.n_layers
    b_grads = [None] * cfg.n_layers
    g = g_out
    for l in range(cfg.n_layers - 1, -1, -1):
        w_grads[l] = acts[l].T @ g / np.sqrt(cfg.widths[l])
        b_grads[l] = cfg.beta * g.sum(axis=0)
        if l > 0:
            g = (g @ params.weights[l].T) / np.sqrt(cfg.widths[l])
            g *= _act_deriv(cfg.nonlinearity, preacts[l - 1])
    return w_grads, b_grads


def grad_factors(params, x):
    """Per-example first-logit gradients in factorized form.

    Returns a list with one (activation, delta) pair per layer, where
    activation has shape (batch, n_l) and delta shape (batch, n_{l+1}).
    The gradient of logit 1 w.r.t. W[l] for example i is
    outer(activation[i], delta[i]) / sqrt(n_l), and w.r.t. b[l] it is
    beta * delta[i]; Gram matrices contract these factors directly
    without materializing the flat vectors.
    """
    x, _ = _check_input(params, x)
    cfg = params.config
    acts, preacts = _forward_trace(params, x)
    batch = x.shape[0]
    g = np.zeros((batch, cfg.output_dim))
    g[:, 0] = 1.0
    deltas = [None] * cfg.n_layers
    for l in range(cfg.n_layers - 1, -1, -1):
        deltas[l] = g
        if l > 0:
            g = (g @ params.weights[l].T) / np.sqrt(cfg.widths[l])
            g = g * _act_deriv(cfg.nonlinearity, preacts[l - 1])
    return [(acts[l], deltas[l]) for l in range(cfg.n_layers)]


def grad_first_logit(params, x):
    """Exact gradient of output neuron 1 w.r.t. all parameters, flattened.

    Flat order matches MlpParams.flat(): W0, b0, W1, b1, ...
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        x = x.reshape(-1)
    factors = grad_factors(params, x.reshape(1, -1))
    cfg = params.config
    parts = []
    for l, (a, d) in enumerate(factors):
        parts.append(np.outer(a[0], d[0]).ravel() / np.sqrt(cfg.widths[l]))
        parts.append(cfg.beta * d[0])
    return np.concatenate(parts)


@dataclass(frozen=True)
class TrainConfig:
    """Minibatch SGD settings for squared-loss training."""

    learning_rate: float
    epochs: int
    minibatch_size: int = 32
    shuffle_seed: int = 0
    warm_start: bool = True
    lr_decay: float = 1.0  # multiplicative, applied after each epoch

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ContractError("learning_rate must be > 0")
        if self.minibatch_size < 1:
            raise ContractError("minibatch_size must be >= 1")
        if self.lr_decay <= 0:
            raise ContractError("lr_decay must be > 0")


def squared_loss(params, inputs, targets):
    """0.5 * sum of squared output errors."""
    diff = forward(params, inputs) - targets
    return 0.5 * float(np.sum(diff * diff))


def train_sgd(params, data, cfg):
    """Minibatch SGD on the squared loss for cfg.epochs epochs.

    Targets are the dataset's one-hot rows. With warm_start the given
    parameters are the starting point; otherwise training restarts from
    the configuration seed. Aborts with DivergenceError if the full-data
    loss ever exceeds 1e6 times its initial value (or turns non-finite).
    """
    if cfg.epochs < 1:
        raise ContractError("epochs must be >= 1")
    if len(data) < 1:
        raise ContractError("training data is empty")
    x = np.asarray(data.inputs, dtype=np.float64)
    y = np.asarray(data.one_hot, dtype=np.float64)
    if x.shape[1] != params.config.input_dim:
        raise ShapeError(
            f"data dim {x.shape[1]} does not match network input "
            f"{params.config.input_dim}"
        )
    if y.shape[1] != params.config.output_dim:
        raise ShapeError(
            f"target dim {y.shape[1]} does not match network output "
            f"{params.config.output_dim}"
        )

    if not cfg.warm_start:
        params = init(params.config)
    weights = [w.copy() for w in params.weights]
    biases = [b.copy() for b in params.biases]
    work = MlpParams(params.config, tuple(weights), tuple(biases))

    n = len(x)
    rng = np.random.default_rng(cfg.shuffle_seed)
    initial_loss = squared_loss(work, x, y)
    divergence_bar = 1e6 * max(initial_loss, 1e-12)
    lr = cfg.learning_rate

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            batch = order[start : start + cfg.minibatch_size]
            acts, preacts = _forward_trace(work, x[batch])
            g = acts[-1] - y[batch]
            w_grads, b_grads = _backprop_from(work, acts, preacts, g)
            for l in range(work.config.n_layers):
                weights[l] -= lr * w_grads[l]
                biases[l] -= lr * b_grads[l]
        loss = squared_loss(work, x, y)
        if not np.isfinite(loss) or loss > divergence_bar:
            raise DivergenceError(
                f"training diverged at epoch {epoch + 1}: loss {loss:.3e} vs "
                f"initial {initial_loss:.3e}",
                epoch=epoch + 1,
            )
        lr *= cfg.lr_decay
    return work


# --- checkpoint io -------------------------------------------------------
#
# Layout: magic line, one JSON line with the architecture, then the flat
# parameter vector as little-endian float64 bytes.


def save_checkpoint(params, path):
    header = {
        "widths": list(params.config.widths),
        "nonlinearity": params.config.nonlinearity,
        "beta": params.config.beta,
        "seed": params.config.seed,
    }
    with open(path, "wb") as f:
        f.write((CHECKPOINT_MAGIC + "\n").encode("ascii"))
        f.write((json.dumps(header) + "\n").encode("ascii"))
        f.write(params.flat().astype("<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as f:
        magic = f.readline().decode("ascii", errors="replace").rstrip("\n")
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(
                f"bad checkpoint magic: got {magic!r}, want {CHECKPOINT_MAGIC!r}"
            )
        header = json.loads(f.readline().decode("ascii"))
        blob = f.read()
    config = MlpConfig(
        widths=tuple(header["widths"]),
        nonlinearity=header["nonlinearity"],
        beta=header["beta"],
        seed=header["seed"],
    )
    flat = np.frombuffer(blob, dtype="<f8")
    if flat.size != config.param_count:
        raise FormatError(
            f"checkpoint payload has {flat.size} parameters, "
            f"architecture needs {config.param_count}"
        )
    return params_from_flat(config, flat.astype(np.float64))
