"""Parameter storage and the transformer building blocks."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import DimensionError, Parameter, Tensor


@dataclass(frozen=True)
class AttentionConfig:
    d_model: int = 256
    heads: int = 8
    layers: int = 6

    def __post_init__(self):
        if self.d_model % self.heads:
            raise DimensionError(f"d_model {self.d_model} not divisible by heads {self.heads}")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")


def _name_seed(seed: int, name: str) -> list[int]:
    h = hashlib.blake2b(name.encode(), digest_size=8).digest()
    return [seed & 0xFFFFFFFFFFFFFFFF, int.from_bytes(h, "little")]


class ParamStore:
    """Named parameters, each initialized from its own ``(seed, name)`` stream.

    Per-name streams keep values independent of creation order, so switching
    an architecture option never shifts the initialization of other weights.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._params: dict[str, Parameter] = {}

    def rng(self, name: str) -> np.random.Generator:
        return np.random.default_rng(_name_seed(self.seed, name))

    def add(self, name: str, value: np.ndarray) -> Parameter:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        p = Parameter(name, np.array(value, dtype=np.float64))
        self._params[name] = p
        return p

    def uniform(self, name: str, rows: int, cols: int, bound: float) -> Parameter:
        return self.add(name, self.rng(name).uniform(-bound, bound, size=(rows, cols)))

    def weight(self, name: str, out_dim: int, in_dim: int) -> Parameter:
        return self.uniform(name, out_dim, in_dim, 1.0 / np.sqrt(in_dim))

    def constant(self, name: str, rows: int, cols: int, value: float) -> Parameter:
        return self.add(name, np.full((rows, cols), value))

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def state(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        from .checkpoint import CompatibilityError

        for name, p in self._params.items():
            if name not in state:
                if strict:
                    raise CompatibilityError(f"checkpoint is missing parameter {name!r}")
                continue
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise CompatibilityError(
                    f"parameter {name!r}: checkpoint shape {value.shape} vs model {p.shape}"
                )
            p.data = value.copy()


class Linear:
    def __init__(self, store: ParamStore, name: str, in_dim: int, out_dim: int, bias: bool = True):
        self.weight = store.weight(f"{name}.weight", out_dim, in_dim)
        self.bias = store.uniform(f"{name}.bias", 1, out_dim, 1.0 / np.sqrt(in_dim)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return T.linear(x, self.weight, self.bias)


class LayerNorm:
    def __init__(self, store: ParamStore, name: str, dim: int):
        self.gain = store.constant(f"{name}.gain", 1, dim, 1.0)
        self.shift = store.constant(f"{name}.shift", 1, dim, 0.0)

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.shift)


class MultiHeadAttention:
    def __init__(self, store: ParamStore, name: str, d_model: int, heads: int):
        if d_model % heads:
            raise DimensionError(f"d_model {d_model} not divisible by heads {heads}")
        self.heads = heads
        self.d_model = d_model
        self.q = Linear(store, f"{name}.q", d_model, d_model)
        self.k = Linear(store, f"{name}.k", d_model, d_model)
        self.v = Linear(store, f"{name}.v", d_model, d_model)
        self.out = Linear(store, f"{name}.out", d_model, d_model)

    def __call__(self, query: Tensor, key: Tensor, value: Tensor) -> Tensor:
        if key.rows == 0:
            raise DimensionError("attention over an empty key set")
        h = T.attention(self.q(query), self.k(key), self.v(value), self.heads)
        return self.out(h)


class FeedForward:
    def __init__(self, store: ParamStore, name: str, d_model: int, hidden: int):
        self.inner = Linear(store, f"{name}.inner", d_model, hidden)
        self.outer = Linear(store, f"{name}.outer", hidden, d_model)

    def __call__(self, x: Tensor) -> Tensor:
        return self.outer(T.gelu(self.inner(x)))


class MLP:
    """``depth`` linear layers with GELU between them."""

    def __init__(self, store: ParamStore, name: str, in_dim: int, hidden: int, out_dim: int, depth: int = 3):
        dims = [in_dim] + [hidden] * (depth - 1) + [out_dim]
        self.layers = [Linear(store, f"{name}.{i}", a, b) for i, (a, b) in enumerate(zip(dims[:-1], dims[1:]))]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = T.gelu(x)
        return x


class EncoderLayer:
    """Post-norm self-attention block: ``Q = K = V = x``."""

    def __init__(self, store: ParamStore, name: str, d_model: int, heads: int, hidden: int):
        self.attn = MultiHeadAttention(store, f"{name}.self_attn", d_model, heads)
        self.norm1 = LayerNorm(store, f"{name}.norm1", d_model)
        self.ffn = FeedForward(store, f"{name}.ffn", d_model, hidden)
        self.norm2 = LayerNorm(store, f"{name}.norm2", d_model)

    def __call__(self, x: Tensor) -> Tensor:
        x = self.norm1(x + self.attn(x, x, x))
        return self.norm2(x + self.ffn(x))


class DecoderLayer:
    """Self-attention over the queries, cross-attention into a memory, FFN.

    The position component is re-added to the query stream at both attention
    inputs of every layer.
    """

    def __init__(self, store: ParamStore, name: str, d_model: int, heads: int, hidden: int):
        self.self_attn = MultiHeadAttention(store, f"{name}.self_attn", d_model, heads)
        self.norm1 = LayerNorm(store, f"{name}.norm1", d_model)
        self.cross_attn = MultiHeadAttention(store, f"{name}.cross_attn", d_model, heads)
        self.norm2 = LayerNorm(store, f"{name}.norm2", d_model)
        self.ffn = FeedForward(store, f"{name}.ffn", d_model, hidden)
        self.norm3 = LayerNorm(store, f"{name}.norm3", d_model)

    def __call__(self, tgt: Tensor, pos: Tensor, memory: Tensor) -> Tensor:
        q = tgt + pos
        tgt = self.norm1(tgt + self.self_attn(q, q, q))
        tgt = self.norm2(tgt + self.cross_attn(tgt + pos, memory, memory))
        return self.norm3(tgt + self.ffn(tgt))


def multi_head_attention(Q: Tensor, K: Tensor, V: Tensor, params: MultiHeadAttention,
                         cfg: AttentionConfig) -> Tensor:
    if Q.cols != cfg.d_model or K.cols != cfg.d_model or V.cols != cfg.d_model:
        raise DimensionError(f"inputs must have {cfg.d_model} columns")
    if params.heads != cfg.heads:
        raise DimensionError(f"attention params have {params.heads} heads, config says {cfg.heads}")
    return params(Q, K, V)


def set_identity(attn: MultiHeadAttention) -> None:
    """Identity projections with zero biases; used by hand-traced checks."""
    d = attn.d_model
    for lin in (attn.q, attn.k, attn.v, attn.out):
        lin.weight.data = np.eye(d)
        if lin.bias is not None:
            lin.bias.data = np.zeros((1, d))


def sinusoidal_pe(length: int, d: int) -> np.ndarray:
    """Interleaved sin/cos encodings: column ``2i`` is ``sin(pos / 10000^(2i/d))``,
    column ``2i+1`` the matching cosine."""
    if d % 2:
        raise DimensionError(f"sinusoidal encoding needs an even width, got {d}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    freq = 1.0 / 10000.0 ** (np.arange(0, d, 2, dtype=np.float64) / d)
    pe = np.zeros((length, d))
    pe[:, 0::2] = np.sin(pos * freq)
    pe[:, 1::2] = np.cos(pos * freq)
    return pe


def sinusoidal_pe_2d(height: int, width: int, d: int) -> np.ndarray:
    """Row-major grid encodings: first half of the columns encode the row,
    second half the column."""
    if d % 4:
        raise DimensionError(f"2-D sinusoidal encoding needs width divisible by 4, got {d}")
    rows = sinusoidal_pe(height, d // 2)
    cols = sinusoidal_pe(width, d // 2)
    return np.concatenate(
        [np.repeat(rows, width, axis=0), np.tile(cols, (height, 1))], axis=1
    )
