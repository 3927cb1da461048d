"""Four-layer hierarchy of BiLSTM/CNN pairs fused by GMBC, with a softmax head.

Layer wiring (``+`` is vector concatenation, every vector is read as a
1-channel scalar sequence)::

    layer 1: c1 = BiLSTM(x)        l1 = CNN(x)         f1 = GMBC(c1, l1)
    layer 2: c2 = BiLSTM(f1)       l2 = CNN(f1 + x)    f2 = GMBC(c2, l2)
    layer 3: c3 = BiLSTM(f1 + f2)  l3 = CNN(f2)        f3 = GMBC(c3, l3)
    layer 4: c4 = BiLSTM(f3)       l4 = CNN(f3 + f2)   f4 = c4 + l4
    logits = FC(f4)

Parameters live in one flat ``dict[str, ndarray]`` whose key order
(:func:`param_names`) is the documented serialization order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInput
from . import layers

LAYERS = 4
GATED_LAYERS = 3  # layer 4 concatenates instead of gating


@dataclass(frozen=True)
class HgnnConfig:
    fusion_dim: int = 64
    kernel_size: int = 3
    num_classes: int = 5
    seed: int = 0
    rho_mode: str = "one_minus_psi"

    def __post_init__(self):
        if self.fusion_dim < 2 or self.fusion_dim % 2:
            raise InvalidInput("fusion_dim must be an even integer >= 2")
        if self.kernel_size < 1 or self.kernel_size > self.fusion_dim:
            raise InvalidInput("kernel_size must lie in [1, fusion_dim]")
        if self.num_classes < 2:
            raise InvalidInput("num_classes must be >= 2")
        if self.rho_mode != "one_minus_psi":
            raise InvalidInput(f"unsupported rho_mode {self.rho_mode!r}")

    @property
    def hidden(self) -> int:
        return self.fusion_dim // 2

    @property
    def filters(self) -> int:
        return self.fusion_dim

    def to_dict(self) -> dict:
        return {"fusion_dim": self.fusion_dim, "kernel_size": self.kernel_size,
                "num_classes": self.num_classes, "seed": self.seed, "rho_mode": self.rho_mode}

    @classmethod
    def from_dict(cls, data: dict) -> "HgnnConfig":
        return cls(**{k: data[k] for k in ("fusion_dim", "kernel_size", "num_classes", "seed", "rho_mode") if k in data})


def param_shapes(config: HgnnConfig) -> dict[str, tuple[int, ...]]:
    h, df, F, d = config.hidden, config.fusion_dim, config.filters, config.kernel_size
    shapes = {}
    for k in range(1, LAYERS + 1):
        for direction in ("fwd", "bwd"):
            shapes[f"L{k}.lstm_{direction}.Wx"] = (1, 4 * h)
            shapes[f"L{k}.lstm_{direction}.Wh"] = (h, 4 * h)
            shapes[f"L{k}.lstm_{direction}.b"] = (4 * h,)
        shapes[f"L{k}.conv.W"] = (F, d)
        shapes[f"L{k}.conv.b"] = (F,)
        if k <= GATED_LAYERS:
            shapes[f"L{k}.gmbc.Wc"] = (df, df)
            shapes[f"L{k}.gmbc.bc"] = (df,)
            shapes[f"L{k}.gmbc.Wl"] = (df, df)
            shapes[f"L{k}.gmbc.bl"] = (df,)
    shapes["fc.W"] = (config.num_classes, 2 * df)
    shapes["fc.b"] = (config.num_classes,)
    return shapes


def param_names(config: HgnnConfig) -> list[str]:
    return list(param_shapes(config))


def param_count(config: HgnnConfig) -> int:
    return int(sum(np.prod(s) for s in param_shapes(config).values()))


def _fan_in(name: str, config: HgnnConfig) -> int:
    if ".lstm_" in name:
        return 1 + config.hidden
    if ".conv." in name:
        return config.kernel_size
    if ".gmbc." in name:
        return config.fusion_dim
    return 2 * config.fusion_dim


def init_params(config: HgnnConfig) -> dict[str, np.ndarray]:
    """Uniform in +-1/sqrt(fan_in), drawn in :func:`param_names` order."""
    rng = np.random.Generator(np.random.PCG64(config.seed))
    params = {}
    for name, shape in param_shapes(config).items():
        bound = 1.0 / np.sqrt(_fan_in(name, config))
        params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def flatten(params: dict[str, np.ndarray], config: HgnnConfig) -> np.ndarray:
    return np.concatenate([np.asarray(params[n], dtype=np.float64).reshape(-1) for n in param_names(config)])


def unflatten(flat, config: HgnnConfig) -> dict[str, np.ndarray]:
    flat = np.asarray(flat, dtype=np.float64)
    if flat.size != param_count(config):
        raise InvalidInput(f"expected {param_count(config)} values, got {flat.size}")
    params, pos = {}, 0
    for name, shape in param_shapes(config).items():
        n = int(np.prod(shape))
        params[name] = flat[pos:pos + n].reshape(shape).copy()
        pos += n
    return params


def _group(params: dict, prefix: str) -> dict:
    return {name[len(prefix):]: value for name, value in params.items() if name.startswith(prefix)}


@dataclass
class ForwardTrace:
    features: dict[str, np.ndarray]  # c1..c4, l1..l4, f1..f4
    gates: dict[str, np.ndarray]  # lambda1, eta1, psi1, ... for the gated layers
    logits: np.ndarray
    probabilities: np.ndarray
    single: bool = False
    _caches: dict = field(default_factory=dict, repr=False)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def hgnn_forward(hfs, params: dict, config: HgnnConfig) -> ForwardTrace:
    """Forward pass on one H(q) vector or a ``(batch, N_q)`` array."""
    x = np.asarray(hfs, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] < config.kernel_size:
        raise InvalidInput(f"input length {x.shape[1]} shorter than kernel {config.kernel_size}")
    feats, gates, caches = {}, {}, {}

    def pair(k, lstm_in, conv_in):
        p = f"L{k}."
        c, caches[f"lstm{k}"] = layers.bilstm_forward(
            lstm_in, _group(params, p + "lstm_fwd."), _group(params, p + "lstm_bwd."))
        l, caches[f"conv{k}"] = layers.conv_forward(conv_in, _group(params, p + "conv."))
        feats[f"c{k}"], feats[f"l{k}"] = c, l
        if k <= GATED_LAYERS:
            f, cache = layers.gmbc_forward(c, l, _group(params, p + "gmbc."))
            caches[f"gmbc{k}"] = cache
            gates[f"lambda{k}"], gates[f"eta{k}"], gates[f"psi{k}"] = cache[2], cache[3], cache[4]
        else:
            f = np.concatenate([c, l], axis=1)
        feats[f"f{k}"] = f
        return f

    f1 = pair(1, x, x)
    f2 = pair(2, f1, np.concatenate([f1, x], axis=1))
    f3 = pair(3, np.concatenate([f1, f2], axis=1), f2)
    f4 = pair(4, f3, np.concatenate([f3, f2], axis=1))
    logits = f4 @ params["fc.W"].T + params["fc.b"]
    caches["input"] = x
    return ForwardTrace(feats, gates, logits, softmax(logits), single, caches)


def cross_entropy(trace: ForwardTrace, targets: np.ndarray) -> float:
    """Mean negative log-likelihood; ``targets`` are 0-based class indices."""
    logits = trace.logits
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(targets)), targets].mean())


def backward(trace: ForwardTrace, targets: np.ndarray, params: dict, config: HgnnConfig):
    """Gradients of :func:`cross_entropy`: ``(param_grads, input_grad)``."""
    caches, feats = trace._caches, trace.features
    batch = trace.logits.shape[0]
    df = config.fusion_dim
    grads = {name: np.zeros_like(value) for name, value in params.items()}

    dlogits = trace.probabilities.copy()
    dlogits[np.arange(batch), targets] -= 1.0
    dlogits /= batch
    grads["fc.W"] = dlogits.T @ feats["f4"]
    grads["fc.b"] = dlogits.sum(axis=0)
    dfeat = {f"f{k}": np.zeros_like(feats[f"f{k}"]) for k in range(1, LAYERS + 1)}
    dfeat["f4"] = dlogits @ params["fc.W"]
    dx = np.zeros_like(caches["input"])

    def store(prefix, g):
        for key, value in g.items():
            grads[prefix + key] += value

    def pair_back(k):
        p = f"L{k}."
        if k <= GATED_LAYERS:
            dc, dl, g = layers.gmbc_backward(dfeat[f"f{k}"], caches[f"gmbc{k}"], _group(params, p + "gmbc."))
            store(p + "gmbc.", g)
        else:
            dc, dl = dfeat["f4"][:, :df], dfeat["f4"][:, df:]
        dconv_in, g = layers.conv_backward(dl, caches[f"conv{k}"], _group(params, p + "conv."))
        store(p + "conv.", g)
        dlstm_in, g_f, g_b = layers.bilstm_backward(
            dc, caches[f"lstm{k}"], _group(params, p + "lstm_fwd."), _group(params, p + "lstm_bwd."))
        store(p + "lstm_fwd.", g_f)
        store(p + "lstm_bwd.", g_b)
        return dlstm_in, dconv_in

    dl_in, dc_in = pair_back(4)  # in: f3 | f3 + f2
    dfeat["f3"] += dl_in + dc_in[:, :df]
    dfeat["f2"] += dc_in[:, df:]
    dl_in, dc_in = pair_back(3)  # in: f1 + f2 | f2
    dfeat["f1"] += dl_in[:, :df]
    dfeat["f2"] += dl_in[:, df:] + dc_in
    dl_in, dc_in = pair_back(2)  # in: f1 | f1 + x
    dfeat["f1"] += dl_in + dc_in[:, :df]
    dx += dc_in[:, df:]
    dl_in, dc_in = pair_back(1)  # in: x | x
    dx += dl_in + dc_in
    return grads, dx


def loss_and_grad(x: np.ndarray, targets: np.ndarray, params: dict, config: HgnnConfig):
    trace = hgnn_forward(x, params, config)
    loss = cross_entropy(trace, targets)
    grads, _ = backward(trace, targets, params, config)
    return loss, grads


def predict(trace_or_probs):
    """Most probable class, 1-based; ties go to the lowest index."""
    if isinstance(trace_or_probs, ForwardTrace):
        probs, single = trace_or_probs.probabilities, trace_or_probs.single
    else:
        probs = np.asarray(trace_or_probs, dtype=np.float64)
        single = probs.ndim == 1
    classes = np.argmax(np.atleast_2d(probs), axis=1) + 1
    return int(classes[0]) if single else classes
