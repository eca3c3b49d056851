"""Sentence-encoder regressor.

Embedded tokens feed a 2-layer bidirectional LSTM; the top layer's states
are pooled either by single-head additive self-attention (a weighted
average with weights softmax(v . tanh(W h_t))) or by concatenating the
two directions' final states; an affine head with a logistic sigmoid maps
the pooled vector to a score in (0, 1).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Node, _accum, concat, constant, parameter, stack
from .autodiff import sigmoid as np_sigmoid
from .errors import ContractError, IntegrityError
from .seeding import rng_for

CHECKPOINT_MAGIC = b"SIL1"
CHECKPOINT_VERSION = 1

POOLING_MODES = ("attention", "final_state")


@dataclass
class ModelConfig:
    input_dim: int
    hidden_dim: int
    num_layers: int = 2
    dropout_rate: float = 0.2
    use_attention: bool = True
    # dropout on the attention scorer / head inputs; both off by default
    attention_dropout: bool = False
    head_dropout: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_dim < 1 or self.num_layers < 1:
            raise ContractError("model dimensions must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ContractError("dropout_rate must be in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim, "hidden_dim": self.hidden_dim,
            "num_layers": self.num_layers, "dropout_rate": self.dropout_rate,
            "use_attention": self.use_attention,
            "attention_dropout": self.attention_dropout,
            "head_dropout": self.head_dropout, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        return cls(**obj)


@dataclass
class ModelParams:
    """All trainable tensors, keyed by dotted names (e.g. "lstm.0.fw.W")."""

    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def clone(self) -> "ModelParams":
        return ModelParams({n: a.copy() for n, a in self.tensors.items()})

    def names(self) -> list[str]:
        return sorted(self.tensors)


@dataclass
class PredictionReport:
    id: str
    score: float
    attention: list[float]


@dataclass
class ForwardPass:
    """One forward evaluation; `score` is a live graph node for training."""

    score: Node
    attention: np.ndarray | None
    hidden: np.ndarray  # top-layer states, (T, 2*hidden_dim)


def _xavier(rng, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def init_params(config: ModelConfig) -> ModelParams:
    """Deterministic init: Xavier-uniform weights, zero biases, forget bias 1.

    Each tensor draws from its own name-derived stream, so the layout of
    one tensor never perturbs another.
    """
    H = config.hidden_dim
    tensors: dict[str, np.ndarray] = {}

    def mat(name: str, rows: int, cols: int) -> None:
        tensors[name] = _xavier(rng_for(config.seed, f"init:{name}"), rows, cols)

    def vec(name: str, n: int) -> None:
        rng = rng_for(config.seed, f"init:{name}")
        limit = np.sqrt(6.0 / (n + 1))
        tensors[name] = rng.uniform(-limit, limit, size=n)

    for layer in range(config.num_layers):
        in_dim = config.input_dim if layer == 0 else 2 * H
        for direction in ("fw", "bw"):
            prefix = f"lstm.{layer}.{direction}"
            mat(f"{prefix}.W", 4 * H, in_dim)
            mat(f"{prefix}.U", 4 * H, H)
            bias = np.zeros(4 * H)
            bias[H:2 * H] = 1.0  # forget gate opens at init
            tensors[f"{prefix}.b"] = bias
    if config.use_attention:
        # stored as (2H x A) so scoring is a single matrix product
        mat("attn.W", 2 * H, H)
        vec("attn.v", H)
    vec("head.w", 2 * H)
    tensors["head.b"] = np.zeros(())
    return ModelParams(tensors)


def lstm_cell(x: Node, h_prev: Node, c_prev: Node,
              W: Node, U: Node, b: Node) -> Node:
    """One LSTM step as a single fused graph node returning [h; c].

    Gate order (i, f, g, o); c = f*c_prev + i*g; h = o*tanh(c). Fusing the
    step keeps the tape short: the hand-written backward below is checked
    against finite differences and against a composed-ops reference.
    """
    H = h_prev.value.shape[0]
    z = W.value @ x.value + U.value @ h_prev.value + b.value
    i = np_sigmoid(z[:H])
    f = np_sigmoid(z[H:2 * H])
    g = np.tanh(z[2 * H:3 * H])
    o = np_sigmoid(z[3 * H:])
    c = f * c_prev.value + i * g
    tc = np.tanh(c)
    out = Node(np.concatenate([o * tc, c]), (x, h_prev, c_prev, W, U, b),
               "lstm_cell")

    def bw():
        grad = out.grad
        gh = grad[:H]
        gc = grad[H:] + gh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            (gc * g) * i * (1.0 - i),
            (gc * c_prev.value) * f * (1.0 - f),
            (gc * i) * (1.0 - g * g),
            (gh * tc) * o * (1.0 - o),
        ])
        _accum(W, np.outer(dz, x.value))
        _accum(U, np.outer(dz, h_prev.value))
        _accum(b, dz)
        _accum(x, W.value.T @ dz)
        _accum(h_prev, U.value.T @ dz)
        _accum(c_prev, gc * f)

    out._backward = bw
    return out


def _attention_nodes(h_mat: Node, attn_w: Node, attn_v: Node):
    scores = (h_mat @ attn_w).tanh() @ attn_v
    weights = scores.softmax()
    pooled = weights @ h_mat
    return weights, pooled


def forward(embedded: np.ndarray, params: ModelParams, config: ModelConfig,
            train: bool = False, rng=None, pooling: str | None = None
            ) -> ForwardPass:
    """Run the encoder on one utterance's embedding matrix (T x input_dim).

    Train mode applies inverted dropout to the outputs of every non-final
    biLSTM layer and requires an rng; eval mode is deterministic.
    """
    embedded = np.asarray(embedded, dtype=np.float64)
    if embedded.ndim != 2 or embedded.shape[0] < 1:
        raise ContractError("embedded input must be a nonempty T x D matrix")
    if embedded.shape[1] != config.input_dim:
        raise ContractError(
            f"embedding width {embedded.shape[1]} != input_dim "
            f"{config.input_dim}")
    if pooling is None:
        pooling = "attention" if config.use_attention else "final_state"
    if pooling not in POOLING_MODES:
        raise ContractError(f"unknown pooling {pooling!r}")
    if pooling == "attention" and "attn.W" not in params.tensors:
        raise ContractError("attention pooling requires attention parameters")
    if train and config.dropout_rate > 0.0 and rng is None:
        raise ContractError("train-mode forward needs an rng for dropout")

    H = config.hidden_dim
    T = embedded.shape[0]
    nodes = {name: parameter(arr, name) for name, arr in params.tensors.items()}

    inputs = [constant(embedded[t]) for t in range(T)]
    fw_states: list[Node] = []
    bw_states: list[Node] = []
    for layer in range(config.num_layers):
        W_f = nodes[f"lstm.{layer}.fw.W"]
        U_f = nodes[f"lstm.{layer}.fw.U"]
        b_f = nodes[f"lstm.{layer}.fw.b"]
        W_b = nodes[f"lstm.{layer}.bw.W"]
        U_b = nodes[f"lstm.{layer}.bw.U"]
        b_b = nodes[f"lstm.{layer}.bw.b"]

        h = constant(np.zeros(H))
        c = constant(np.zeros(H))
        fw_states = []
        for t in range(T):
            hc = lstm_cell(inputs[t], h, c, W_f, U_f, b_f)
            h = hc.slice(0, H)
            c = hc.slice(H, 2 * H)
            fw_states.append(h)

        h = constant(np.zeros(H))
        c = constant(np.zeros(H))
        bw_states = [None] * T
        for t in reversed(range(T)):
            hc = lstm_cell(inputs[t], h, c, W_b, U_b, b_b)
            h = hc.slice(0, H)
            c = hc.slice(H, 2 * H)
            bw_states[t] = h

        outputs = [concat([fw_states[t], bw_states[t]]) for t in range(T)]
        if layer < config.num_layers - 1 and train and config.dropout_rate > 0:
            p = config.dropout_rate
            outputs = [
                out * constant((rng.random(2 * H) >= p) / (1.0 - p))
                for out in outputs
            ]
        inputs = outputs

    h_mat = stack(inputs)
    if pooling == "attention":
        weights, pooled = _attention_nodes(h_mat, nodes["attn.W"],
                                           nodes["attn.v"])
        attention = weights.value.copy()
    else:
        pooled = concat([fw_states[-1], bw_states[0]])
        attention = None

    score = (nodes["head.w"] @ pooled + nodes["head.b"]).sigmoid()
    return ForwardPass(score=score, attention=attention,
                       hidden=h_mat.value.copy())


def attention_pool(hidden: np.ndarray, params: ModelParams
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Attention weights and pooled vector for given top-layer states."""
    hidden = np.asarray(hidden, dtype=np.float64)
    if hidden.ndim != 2 or hidden.shape[0] < 1:
        raise ContractError("hidden states must be a nonempty T x 2H matrix")
    weights, pooled = _attention_nodes(
        constant(hidden), constant(params.tensors["attn.W"]),
        constant(params.tensors["attn.v"]))
    return weights.value.copy(), pooled.value.copy()


def final_state_pool(hidden: np.ndarray) -> np.ndarray:
    """Concatenate the forward last-step and backward first-step states."""
    hidden = np.asarray(hidden, dtype=np.float64)
    if hidden.ndim != 2 or hidden.shape[0] < 1:
        raise ContractError("hidden states must be a nonempty T x 2H matrix")
    H = hidden.shape[1] // 2
    return np.concatenate([hidden[-1, :H], hidden[0, H:]])


def predict(record_id: str, embedded: np.ndarray, params: ModelParams,
            config: ModelConfig, pooling: str | None = None
            ) -> PredictionReport:
    """Deterministic eval-mode prediction for one utterance."""
    fp = forward(embedded, params, config, train=False, pooling=pooling)
    attention = [] if fp.attention is None else [float(w) for w in fp.attention]
    return PredictionReport(id=record_id, score=float(fp.score.value),
                            attention=attention)


# ---------------------------------------------------------------------------
# Checkpoints: magic, u32 header length, JSON header, float64 blobs
# ---------------------------------------------------------------------------

def save_checkpoint(params: ModelParams, config: ModelConfig, path) -> None:
    """Write a versioned binary checkpoint; byte-identical for equal inputs."""
    names = params.names()
    header = {
        "config": config.to_dict(),
        "dtype": "<f8",
        "format_version": CHECKPOINT_VERSION,
        "params": [{"name": n, "shape": list(params.tensors[n].shape)}
                   for n in names],
    }
    header_bytes = json.dumps(header, sort_keys=True,
                              separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for n in names:
            fh.write(np.ascontiguousarray(
                params.tensors[n], dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelParams, ModelConfig]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise IntegrityError("not a model checkpoint (bad magic)")
    (header_len,) = struct.unpack("<I", blob[4:8])
    try:
        header = json.loads(blob[8:8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise IntegrityError("corrupt checkpoint header") from None
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise IntegrityError(
            f"unsupported checkpoint version {header.get('format_version')}")
    config = ModelConfig.from_dict(header["config"])
    tensors: dict[str, np.ndarray] = {}
    offset = 8 + header_len
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        chunk = blob[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise IntegrityError(
                f"checkpoint truncated at tensor {entry['name']!r}")
        tensors[entry["name"]] = np.frombuffer(
            chunk, dtype="<f8").reshape(shape).copy()
        offset += nbytes
    if offset != len(blob):
        raise IntegrityError("trailing bytes after checkpoint tensors")
    return ModelParams(tensors), config
