"""NeuroPathNet forward computation.

Per subject, each community-pair trajectory ``w`` (length ``T``) is lifted to
``T x d`` tokens, encoded by a stack of self-attention layers whose weights
are shared by all paths, and pooled over time to one vector. The ``L`` path
vectors are then mixed by a small set transformer (no positional terms),
attention-pooled to a subject vector ``z`` and classified.

All functions operate on batches: leading axes are carried through untouched.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import tensor as tn
from .errors import ConfigError, ContractError, DataError
from .tensor import Tensor


@dataclass(frozen=True)
class ModelConfig:
    d: int = 32
    heads: int = 4
    layers: int = 6
    fusion_layers: int = 1
    dropout: float = 0.1
    num_classes: int = 2
    ffn: bool = True
    ffn_mult: int = 4
    ln_eps: float = 1e-5
    use_path_encoder: bool = True
    use_global_fusion: bool = True
    use_multihead: bool = True
    use_temporal_pool: bool = True

    def __post_init__(self):
        if self.d < 1 or self.heads < 1 or self.d % self.heads:
            raise ConfigError(f"d={self.d} must be a positive multiple of heads={self.heads}")
        if self.layers < 1:
            raise ConfigError(f"layers must be >= 1, got {self.layers}")
        if self.fusion_layers < 1:
            raise ConfigError(f"fusion_layers must be >= 1, got {self.fusion_layers}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.ffn_mult < 1:
            raise ConfigError(f"ffn_mult must be >= 1, got {self.ffn_mult}")

    @property
    def head_width(self) -> int:
        return self.d // self.active_heads

    @property
    def active_heads(self) -> int:
        return self.heads if self.use_multihead else 1

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ForwardContext:
    """Run mode plus the counters that key dropout masks."""

    training: bool = False
    seed: int = 0
    step: int = 0

    def key(self, site: str) -> tuple[int, int, int]:
        return (self.seed, zlib.crc32(site.encode()), self.step)


EVAL = ForwardContext()


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

def _layer_shapes(prefix: str, cfg: ModelConfig) -> list[tuple[str, tuple[int, ...], int | None]]:
    d = cfg.d
    shapes = [
        (f"{prefix}.wq", (d, d), d),
        (f"{prefix}.wk", (d, d), d),
        (f"{prefix}.wv", (d, d), d),
        (f"{prefix}.wo", (d, d), d),
        (f"{prefix}.ln1.g", (d,), None),
        (f"{prefix}.ln1.b", (d,), None),
    ]
    if cfg.ffn:
        h = d * cfg.ffn_mult
        shapes += [
            (f"{prefix}.ffn.w1", (d, h), d),
            (f"{prefix}.ffn.b1", (h,), None),
            (f"{prefix}.ffn.w2", (h, d), h),
            (f"{prefix}.ffn.b2", (d,), None),
            (f"{prefix}.ln2.g", (d,), None),
            (f"{prefix}.ln2.b", (d,), None),
        ]
    return shapes


def parameter_shapes(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...], int | None]]:
    """``(name, shape, fan_in)`` for every parameter; ``fan_in`` is None for biases and gains."""
    d, c = cfg.d, cfg.num_classes
    shapes = [("embed.e", (d,), 1), ("embed.b", (d,), None)]
    for layer in range(cfg.layers):
        shapes += _layer_shapes(f"path.{layer}", cfg)
    shapes += [("tpool.w", (d, d), d), ("tpool.q", (d, 1), d)]
    for layer in range(cfg.fusion_layers):
        shapes += _layer_shapes(f"fuse.{layer}", cfg)
    shapes += [("apool.w", (d, d), d), ("apool.u", (d, 1), d), ("cls.w", (d, c), d), ("cls.b", (c,), None)]
    return shapes


def init_params(cfg: ModelConfig, seed: int = 0) -> dict[str, Tensor]:
    """Uniform(+-1/sqrt(fan_in)) weights, unit gains, zero biases.

    The scalar embedding ``embed.e`` is drawn ``sqrt(d)`` times wider so that
    trajectory values are not swamped by the unit-amplitude positional table.
    """
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape, fan_in in parameter_shapes(cfg):
        if fan_in is not None:
            bound = 1.0 / math.sqrt(fan_in)
            if name == "embed.e":
                bound *= math.sqrt(cfg.d)
            value = rng.uniform(-bound, bound, size=shape)
        elif name.endswith(".g"):
            value = np.ones(shape)
        else:
            value = np.zeros(shape)
        params[name] = Tensor(value, requires_grad=True, name=name)
    return params


def count_parameters(cfg: ModelConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape, _ in parameter_shapes(cfg))


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _pe(length: int, d: int) -> np.ndarray:
    table = tn.sinusoidal_table(length, d)
    table.setflags(write=False)
    return table


def positional_table(length: int, d: int) -> np.ndarray:
    return _pe(length, d).copy()


def embed_path(weights, params: dict[str, Tensor], cfg: ModelConfig) -> Tensor:
    """``(..., T)`` trajectory weights -> ``(..., T, d)`` tokens: ``w * e + b + PE(t)``."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape[-1] < 1:
        raise ContractError("trajectory must have at least one window")
    lifted = tn.mul(Tensor(w[..., None]), params["embed.e"])
    return tn.add(tn.add(lifted, params["embed.b"]), Tensor(_pe(w.shape[-1], cfg.d)))


def multi_head_attention(x: Tensor, params, prefix: str, heads: int, trace: dict | None = None) -> Tensor:
    """Scaled dot-product self-attention over axis -2 of ``x`` (shape ``(S, T, d)``)."""
    q = tn.linear(x, params[f"{prefix}.wq"])
    k = tn.linear(x, params[f"{prefix}.wk"])
    v = tn.linear(x, params[f"{prefix}.wv"])
    out, attn = tn.attention(q, k, v, heads)
    if trace is not None:
        trace.setdefault(f"{prefix}.attn", attn)
    return tn.linear(out, params[f"{prefix}.wo"])


def encoder_layer(x: Tensor, params, cfg: ModelConfig, prefix: str, ctx: ForwardContext = EVAL,
                  trace: dict | None = None) -> Tensor:
    """One post-norm transformer layer on ``(S, T, d)`` tokens."""
    squeeze = x.ndim == 2
    if squeeze:
        x = tn.reshape(x, (1,) + x.shape)
    att = multi_head_attention(x, params, prefix, cfg.active_heads, trace)
    att = tn.dropout(att, cfg.dropout, ctx.key(f"{prefix}.attn"), ctx.training)
    z = tn.layer_norm(tn.add(x, att), params[f"{prefix}.ln1.g"], params[f"{prefix}.ln1.b"], cfg.ln_eps)
    if cfg.ffn:
        hdn = tn.relu(tn.linear(z, params[f"{prefix}.ffn.w1"], params[f"{prefix}.ffn.b1"]))
        f = tn.linear(hdn, params[f"{prefix}.ffn.w2"], params[f"{prefix}.ffn.b2"])
        f = tn.dropout(f, cfg.dropout, ctx.key(f"{prefix}.ffn"), ctx.training)
        z = tn.layer_norm(tn.add(z, f), params[f"{prefix}.ln2.g"], params[f"{prefix}.ln2.b"], cfg.ln_eps)
    if squeeze:
        z = tn.reshape(z, z.shape[1:])
    return z


def _score_pool(x: Tensor, w: Tensor, u: Tensor) -> tuple[Tensor, Tensor]:
    # x: (S, K, d) -> weights (S, K), pooled (S, d)
    s, k, d = x.shape
    logits = tn.reshape(tn.linear(tn.tanh(tn.linear(x, w)), u), (s, k))
    weights = tn.softmax(logits, axis=-1)
    pooled = tn.reshape(tn.matmul(tn.reshape(weights, (s, 1, k)), x), (s, d))
    return weights, pooled


def temporal_pool(z: Tensor, params, cfg: ModelConfig, trace: dict | None = None) -> Tensor:
    """``(S, T, d)`` -> ``(S, d)``: attention over time, or the plain mean."""
    squeeze = z.ndim == 2
    if squeeze:
        z = tn.reshape(z, (1,) + z.shape)
    if cfg.use_temporal_pool:
        beta, h = _score_pool(z, params["tpool.w"], params["tpool.q"])
        if trace is not None:
            trace["beta"] = beta.data
    else:
        h = tn.mean(z, axis=1)
    return tn.reshape(h, h.shape[1:]) if squeeze else h


def cross_path_fuse(h: Tensor, params, cfg: ModelConfig, ctx: ForwardContext = EVAL,
                    trace: dict | None = None) -> Tensor:
    """Transformer over the ``L`` path tokens of each subject: ``(B, L, d)`` -> ``(B, L, d)``."""
    if not cfg.use_global_fusion:
        return h
    out = h
    for layer in range(cfg.fusion_layers):
        out = encoder_layer(out, params, cfg, f"fuse.{layer}", ctx, trace)
    return out


def attention_pool(hf: Tensor, params, trace: dict | None = None) -> Tensor:
    """``(B, L, d)`` -> ``(B, d)`` with ``alpha = softmax_l(u . tanh(W h_l))``."""
    squeeze = hf.ndim == 2
    if squeeze:
        hf = tn.reshape(hf, (1,) + hf.shape)
    alpha, z = _score_pool(hf, params["apool.w"], params["apool.u"])
    if trace is not None:
        trace["alpha"] = alpha.data
    return tn.reshape(z, z.shape[1:]) if squeeze else z


def classify(z: Tensor, params) -> Tensor:
    """Class probabilities ``softmax(z W + b)`` for ``(B, d)`` (or ``(d,)``) input."""
    squeeze = z.ndim == 1
    if squeeze:
        z = tn.reshape(z, (1,) + z.shape)
    probs = tn.softmax(tn.linear(z, params["cls.w"], params["cls.b"]), axis=-1)
    return tn.reshape(probs, probs.shape[1:]) if squeeze else probs


def encode_paths(x: Tensor, params, cfg: ModelConfig, ctx: ForwardContext = EVAL,
                 trace: dict | None = None) -> Tensor:
    """Embedded tokens ``(S, T, d)`` -> path vectors ``(S, d)``."""
    if not cfg.use_path_encoder:
        return tn.mean(x, axis=1)
    for layer in range(cfg.layers):
        x = encoder_layer(x, params, cfg, f"path.{layer}", ctx, trace)
    if trace is not None:
        trace["Z"] = x.data
    return temporal_pool(x, params, cfg, trace)


def forward(paths, params, cfg: ModelConfig, ctx: ForwardContext = EVAL, trace: dict | None = None) -> Tensor:
    """Class probabilities for a batch.

    Parameters
    ----------
    paths : array_like
        ``(B, L, T)`` trajectory weights, or ``(L, T)`` for a single subject.
    trace : dict, optional
        Filled with intermediate arrays (``H``, ``H_fused``, ``z``, ``alpha``, ``beta``...).

    Returns
    -------
    Tensor
        ``(B, C)`` probabilities (``(C,)`` for unbatched input).
    """
    w = _as_batch(paths)
    squeeze = not (isinstance(paths, np.ndarray) and paths.ndim == 3)
    b, n_paths, t = w.shape
    tokens = embed_path(w.reshape(b * n_paths, t), params, cfg)
    h = tn.reshape(encode_paths(tokens, params, cfg, ctx, trace), (b, n_paths, cfg.d))
    hf = cross_path_fuse(h, params, cfg, ctx, trace)
    z = attention_pool(hf, params, trace)
    if trace is not None:
        trace["H"] = h.data
        trace["H_fused"] = hf.data
        trace["z"] = z.data
    probs = classify(z, params)
    return tn.reshape(probs, probs.shape[1:]) if squeeze else probs


def _as_batch(paths) -> np.ndarray:
    if hasattr(paths, "weights") and hasattr(paths, "pairs"):
        paths = list(paths)
    if isinstance(paths, list):
        lengths = {len(traj) for traj in paths}
        if len(lengths) > 1:
            raise ContractError(f"trajectories have mixed lengths {sorted(lengths)}")
        return np.asarray([traj.weights for traj in paths], dtype=np.float64)[None]
    w = np.asarray(paths, dtype=np.float64)
    if w.ndim == 2:
        w = w[None]
    if w.ndim != 3:
        raise ContractError(f"expected (B, L, T) trajectories, got shape {w.shape}")
    return w


class NeuroPathNet:
    """Config plus parameters, with convenience wrappers around :func:`forward`."""

    def __init__(self, cfg: ModelConfig, params: dict[str, Tensor] | None = None, seed: int = 0):
        self.cfg = cfg
        self.params = params if params is not None else init_params(cfg, seed)

    def __call__(self, paths, ctx: ForwardContext = EVAL, trace=None) -> Tensor:
        return forward(paths, self.params, self.cfg, ctx, trace)

    def predict_proba(self, paths, batch_size: int = 64) -> np.ndarray:
        w = _as_batch(paths)
        with tn.no_grad():
            chunks = [forward(w[i:i + batch_size], self.params, self.cfg).data for i in range(0, len(w), batch_size)]
        return np.concatenate(chunks)

    def representations(self, paths, batch_size: int = 64) -> np.ndarray:
        w = _as_batch(paths)
        out = []
        for i in range(0, len(w), batch_size):
            trace: dict = {}
            with tn.no_grad():
                forward(w[i:i + batch_size], self.params, self.cfg, trace=trace)
            out.append(trace["z"])
        return np.concatenate(out)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def restore(self, snap: dict[str, np.ndarray]):
        for k, v in snap.items():
            self.params[k].data[...] = v


# ---------------------------------------------------------------------------
# checkpoint container
# ---------------------------------------------------------------------------

MAGIC = b"NPNCKPT1\n"


def save_checkpoint(path, model: NeuroPathNet, meta: dict | None = None):
    """Write config + raw little-endian float64 tensors (layout in ``docs/formats.md``)."""
    entries, blobs, offset = [], [], 0
    for name, t in model.params.items():
        raw = t.data.astype("<f8").tobytes()
        entries.append({"name": name, "shape": list(t.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"format": 1, "config": model.cfg.to_dict(), "meta": meta or {}, "tensors": entries},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(f"{len(header):016d}\n".encode())
        fh.write(header)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path) -> tuple[NeuroPathNet, dict]:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"checkpoint not found: {p}")
    buf = p.read_bytes()
    if not buf.startswith(MAGIC):
        raise DataError(f"{p}: not a checkpoint file")
    pos = len(MAGIC)
    hlen = int(buf[pos:pos + 16])
    pos += 17
    header = json.loads(buf[pos:pos + hlen].decode("utf-8"))
    base = pos + hlen
    cfg = ModelConfig.from_dict(header["config"])
    params = {}
    for e in header["tensors"]:
        start = base + e["offset"]
        arr = np.frombuffer(buf[start:start + e["nbytes"]], dtype="<f8").reshape(e["shape"]).astype(np.float64)
        params[e["name"]] = Tensor(arr, requires_grad=True, name=e["name"])
    expected = {name for name, _, _ in parameter_shapes(cfg)}
    if set(params) != expected:
        raise DataError(f"{p}: tensor set does not match its config")
    return NeuroPathNet(cfg, params), header.get("meta", {})
