"""The TWiX affinity network.

Every (past, future) tracklet pair becomes one token sequence: the past
observations followed by the future ones, each a 4-vector of corner
coordinates scaled into (-1, 1) per pair.  Tokens are projected to ``dim``,
tagged with a sinusoidal encoding of their frame offset to the first future
observation, and summarized by a CLS token through the intra-pair encoder.
The inter-pair encoder then lets all pair embeddings of the batch attend to
each other; its output is added back to the pair embedding and a linear layer
with tanh gives the affinity.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .tensor import Tensor

NORM_EPS = 1e-3
MAGIC = b"TWX1"


@dataclass(frozen=True)
class TwixHyper:
    dim: int = 32
    heads: int = 16
    ffn_dim: int = 32
    intra_layers: int = 1
    inter_layers: int = 1

    def __post_init__(self):
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} is not divisible by heads {self.heads}")
        if self.dim % 2:
            raise ValueError("dim must be even for the sinusoidal encoding")
        if min(self.dim, self.heads, self.ffn_dim) < 1 or self.intra_layers < 1 or self.inter_layers < 0:
            raise ValueError(f"invalid hyper-parameters {self}")

    def as_ints(self) -> tuple[int, ...]:
        return (self.dim, self.heads, self.ffn_dim, self.intra_layers, self.inter_layers)


def _layer_shapes(prefix: str, d: int, f: int) -> list[tuple[str, tuple]]:
    return [
        (f"{prefix}.ln1.g", (d,)), (f"{prefix}.ln1.b", (d,)),
        (f"{prefix}.attn.wqkv", (d, 3 * d)), (f"{prefix}.attn.bqkv", (3 * d,)),
        (f"{prefix}.attn.wo", (d, d)), (f"{prefix}.attn.bo", (d,)),
        (f"{prefix}.ln2.g", (d,)), (f"{prefix}.ln2.b", (d,)),
        (f"{prefix}.ffn.w1", (d, f)), (f"{prefix}.ffn.b1", (f,)),
        (f"{prefix}.ffn.w2", (f, d)), (f"{prefix}.ffn.b2", (d,)),
    ]


def parameter_layout(h: TwixHyper) -> list[tuple[str, tuple]]:
    """Names and shapes of all parameters, in checkpoint order."""
    d, f = h.dim, h.ffn_dim
    out = [("proj.w", (4, d)), ("proj.b", (d,)), ("cls", (d,))]
    for i in range(h.intra_layers):
        out += _layer_shapes(f"intra.{i}", d, f)
    out += [("intra.norm.g", (d,)), ("intra.norm.b", (d,))]
    for i in range(h.inter_layers):
        out += _layer_shapes(f"inter.{i}", d, f)
    out += [("inter.norm.g", (d,)), ("inter.norm.b", (d,)),
            ("inter.out.w", (d, d)), ("inter.out.b", (d,)),
            ("head.w", (d, 1)), ("head.b", (1,))]
    return out


def _fan_in(name: str, shape: tuple, h: TwixHyper) -> int:
    if len(shape) == 2:
        return shape[0]
    if name == "proj.b":
        return 4
    if name.endswith(".b2"):
        return h.ffn_dim
    return h.dim


class TwixWeights:
    """All learnable tensors of one TWiX module plus its hyper-parameters."""

    def __init__(self, hyper: TwixHyper, params: dict[str, Tensor]):
        layout = parameter_layout(hyper)
        if [n for n, _ in layout] != list(params):
            raise ValueError("parameter names do not follow the layout for these hyper-parameters")
        for name, shape in layout:
            if params[name].shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {params[name].shape}")
            if not np.isfinite(params[name].data).all():
                raise ValueError(f"{name}: non-finite values")
        self.hyper = hyper
        self.params = params

    @classmethod
    def init(cls, hyper: TwixHyper, seed: int = 0) -> "TwixWeights":
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in parameter_layout(hyper):
            if ".ln" in name or ".norm." in name:
                data = np.ones(shape) if name.endswith(".g") else np.zeros(shape)
            else:
                bound = 1.0 / np.sqrt(_fan_in(name, shape, hyper))
                data = rng.uniform(-bound, bound, size=shape)
            params[name] = Tensor(data, requires_grad=True, name=name)
        return cls(hyper, params)

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    @property
    def dtype(self):
        return self.params["proj.w"].data.dtype

    def astype(self, dtype) -> "TwixWeights":
        """Copy with every tensor cast to ``dtype``; the copy tracks no gradients."""
        return TwixWeights(self.hyper, {n: Tensor(p.data.astype(dtype), name=n)
                                        for n, p in self.params.items()})

    def copy(self) -> "TwixWeights":
        return TwixWeights(self.hyper, {n: Tensor(p.data.copy(), requires_grad=p.requires_grad, name=n)
                                        for n, p in self.params.items()})

    def frozen(self) -> "TwixWeights":
        return self.astype(self.dtype)

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    # -- checkpoint --------------------------------------------------------------

    def to_bytes(self) -> bytes:
        h = self.hyper.as_ints()
        chunks = [MAGIC, struct.pack("<5q", *h), struct.pack("<q", len(self.params))]
        for p in self.params.values():
            chunks.append(struct.pack("<q", p.data.ndim))
            chunks.append(struct.pack(f"<{p.data.ndim}q", *p.data.shape))
            chunks.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
        return b"".join(chunks)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "TwixWeights":
        if blob[:4] != MAGIC:
            raise ValueError("not a TWiX checkpoint (bad magic)")
        off = 4
        hyper = TwixHyper(*struct.unpack_from("<5q", blob, off))
        off += 40
        (count,) = struct.unpack_from("<q", blob, off)
        off += 8
        layout = parameter_layout(hyper)
        if count != len(layout):
            raise ValueError(f"checkpoint has {count} tensors, hyper-parameters need {len(layout)}")
        params = {}
        for name, shape in layout:
            (ndim,) = struct.unpack_from("<q", blob, off)
            off += 8
            got = struct.unpack_from(f"<{ndim}q", blob, off)
            off += 8 * ndim
            if tuple(got) != shape:
                raise ValueError(f"{name}: checkpoint shape {got} does not match expected {shape}")
            n = int(np.prod(shape))
            data = np.frombuffer(blob, dtype="<f8", count=n, offset=off).reshape(shape).astype(np.float64)
            off += 8 * n
            params[name] = Tensor(data, requires_grad=True, name=name)
        if off != len(blob):
            raise ValueError("trailing bytes after last tensor")
        return cls(hyper, params)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "TwixWeights":
        return cls.from_bytes(Path(path).read_bytes())


# -- inputs ------------------------------------------------------------------------------

@dataclass
class PairInputs:
    """Token sequences for all pairs of a batch, row-major over (past, future).

    ``tokens`` is ``(P, L, 4)`` normalized corner coordinates, ``dist`` the
    frame offset of each token to the first future observation and ``valid``
    marks real (non-padding) tokens.
    """

    tokens: np.ndarray
    dist: np.ndarray
    valid: np.ndarray
    n_past: int
    n_future: int

    @property
    def num_pairs(self) -> int:
        return self.n_past * self.n_future


def _pad(tracks, width: int):
    n = len(tracks)
    coords = np.zeros((n, width, 4))
    frames = np.zeros((n, width))
    valid = np.zeros((n, width), dtype=bool)
    for i, (fr, xywh) in enumerate(tracks):
        k = len(fr)
        coords[i, :k, :2] = xywh[:, :2]
        coords[i, :k, 2:] = xywh[:, :2] + xywh[:, 2:]
        frames[i, :k] = fr
        valid[i, :k] = True
    return coords, frames, valid


def minmax_normalize(corners: np.ndarray, valid: np.ndarray, eps: float = NORM_EPS) -> np.ndarray:
    """Scale corner coordinates of each sequence into ``[-1 + eps, 1 - eps]``.

    ``corners`` is ``(..., L, 4)`` as ``(x1, y1, x2, y2)``; x and y are scaled
    independently using the extremes over the valid tokens of each sequence.
    A degenerate axis maps to 0.
    """
    corners = np.asarray(corners, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    out = np.zeros_like(corners)
    for cols in ((0, 2), (1, 3)):
        vals = corners[..., cols]
        lo = np.where(valid[..., None], vals, np.inf).min(axis=(-1, -2))
        hi = np.where(valid[..., None], vals, -np.inf).max(axis=(-1, -2))
        span = hi - lo
        ok = span > 0
        scale = np.where(ok, (2.0 - 2.0 * eps) / np.where(ok, span, 1.0), 0.0)
        mapped = (vals - lo[..., None, None]) * scale[..., None, None] + np.where(ok, -1.0 + eps, 0.0)[..., None, None]
        out[..., cols] = mapped
    out[~valid] = 0.0
    return out


def pair_inputs(past, future) -> PairInputs:
    """Build pair sequences from ``(frames, xywh)`` tuples.

    Pairs are ordered row-major: past index outer, future index inner.
    """
    n_p, n_f = len(past), len(future)
    if n_p == 0 or n_f == 0:
        raise ValueError("need at least one past and one future tracklet")
    wp = max(len(fr) for fr, _ in past)
    wf = max(len(fr) for fr, _ in future)
    pc, pfr, pv = _pad(past, wp)
    fc, ffr, fv = _pad(future, wf)
    first = ffr[:, 0]

    shape = (n_p, n_f, wp + wf)
    corners = np.empty(shape + (4,))
    corners[:, :, :wp] = pc[:, None]
    corners[:, :, wp:] = fc[None, :]
    valid = np.empty(shape, dtype=bool)
    valid[:, :, :wp] = pv[:, None]
    valid[:, :, wp:] = fv[None, :]
    dist = np.empty(shape)
    dist[:, :, :wp] = pfr[:, None, :] - first[None, :, None]
    dist[:, :, wp:] = ffr[None, :, :] - first[None, :, None]
    dist[~valid] = 0.0

    tokens = minmax_normalize(corners, valid)
    L = wp + wf
    return PairInputs(tokens.reshape(-1, L, 4), dist.reshape(-1, L), valid.reshape(-1, L), n_p, n_f)


def build_pair_sequences(batch) -> PairInputs:
    return pair_inputs([(t.frames, t.coords) for t in batch.past],
                       [(t.frames, t.coords) for t in batch.future])


def temporal_encoding(distances, dim: int) -> np.ndarray:
    """Sinusoidal encoding of (signed) frame offsets: sin on even, cos on odd channels."""
    d = np.asarray(distances, dtype=np.float64)[..., None]
    freq = 1.0 / 10000.0 ** (np.arange(0, dim, 2) / dim)
    out = np.empty(d.shape[:-1] + (dim,))
    out[..., 0::2] = np.sin(d * freq)
    out[..., 1::2] = np.cos(d * freq)
    return out


# -- network -------------------------------------------------------------------------------

def attention(x_q: Tensor, x_kv: Tensor, w: TwixWeights, prefix: str, key_mask=None) -> Tensor:
    """Multi-head attention; ``x_q`` is ``(B, Lq, D)``, ``x_kv`` is ``(B, L, D)``.

    ``key_mask`` is a ``(B, L)`` boolean array of keys to hide.
    """
    d, nh = w.hyper.dim, w.hyper.heads
    dh = d // nh
    wqkv, bqkv = w[f"{prefix}.attn.wqkv"], w[f"{prefix}.attn.bqkv"]
    B, Lq, L = x_q.shape[0], x_q.shape[1], x_kv.shape[1]
    if x_q is x_kv:
        qkv = T.transpose(T.reshape(T.linear(x_kv, wqkv, bqkv), (B, L, 3, nh, dh)), (2, 0, 3, 1, 4))
        q, k, v = qkv[0], qkv[1], qkv[2]
    else:
        q = T.swapaxes(T.reshape(T.linear(x_q, wqkv[:, :d], bqkv[:d]), (B, Lq, nh, dh)), 1, 2)
        kv = T.transpose(T.reshape(T.linear(x_kv, wqkv[:, d:], bqkv[d:]), (B, L, 2, nh, dh)), (2, 0, 3, 1, 4))
        k, v = kv[0], kv[1]
    mask = None if key_mask is None else key_mask[:, None, None, :]
    out = T.attention_core(q, k, v, mask)
    out = T.reshape(T.swapaxes(out, 1, 2), (B, Lq, d))
    return T.linear(out, w[f"{prefix}.attn.wo"], w[f"{prefix}.attn.bo"])


def encoder_layer(x: Tensor, w: TwixWeights, prefix: str, key_mask=None, first_only: bool = False) -> Tensor:
    """Pre-norm layer: x + MHA(LN(x)), then + FFN(LN(.)).

    With ``first_only`` only the first position is updated and returned, which
    is all the last intra-pair layer needs for the CLS output.
    """
    n1 = T.layer_norm(x, w[f"{prefix}.ln1.g"], w[f"{prefix}.ln1.b"])
    if first_only:
        x = x[:, :1]
        q = n1[:, :1]
    else:
        q = n1
    x = x + attention(q, n1, w, prefix, key_mask)
    n2 = T.layer_norm(x, w[f"{prefix}.ln2.g"], w[f"{prefix}.ln2.b"])
    hdn = T.relu(T.linear(n2, w[f"{prefix}.ffn.w1"], w[f"{prefix}.ffn.b1"]))
    return x + T.linear(hdn, w[f"{prefix}.ffn.w2"], w[f"{prefix}.ffn.b2"])


def embed_tokens(inputs: PairInputs, w: TwixWeights) -> Tensor:
    """Projected tokens plus temporal encoding, with the CLS token in front."""
    dt = w.dtype
    d = w.hyper.dim
    x = T.linear(Tensor(inputs.tokens.astype(dt)), w["proj.w"], w["proj.b"])
    pe = temporal_encoding(inputs.dist, d).astype(dt)
    pe[~inputs.valid] = 0.0
    x = x + Tensor(pe)
    P = inputs.num_pairs
    cls = T.reshape(w["cls"], (1, 1, d)) * Tensor(np.ones((P, 1, 1), dtype=dt))
    return T.concat([cls, x], axis=1)


def intra_pair_encode(inputs: PairInputs, w: TwixWeights) -> Tensor:
    """One ``dim``-vector per pair: the CLS output of the intra-pair encoder."""
    x = embed_tokens(inputs, w)
    mask = np.concatenate([np.zeros((inputs.num_pairs, 1), dtype=bool), ~inputs.valid], axis=1)
    n = w.hyper.intra_layers
    for i in range(n):
        x = encoder_layer(x, w, f"intra.{i}", mask, first_only=(i == n - 1))
    x = T.layer_norm(x, w["intra.norm.g"], w["intra.norm.b"])
    return T.reshape(x, (inputs.num_pairs, w.hyper.dim))


def canonical_order(emb: np.ndarray) -> np.ndarray:
    """Lexicographic row order, so set attention sums in an input-independent order."""
    return np.lexsort(emb.T[::-1])


def _inter_sorted(emb: Tensor, w: TwixWeights) -> Tensor:
    """Inter-pair block plus skip on embeddings already in canonical order."""
    x = T.reshape(emb, (1, emb.shape[0], w.hyper.dim))
    for i in range(w.hyper.inter_layers):
        x = encoder_layer(x, w, f"inter.{i}")
    x = T.layer_norm(x, w["inter.norm.g"], w["inter.norm.b"])
    x = T.linear(x, w["inter.out.w"], w["inter.out.b"])
    return emb + T.reshape(x, emb.shape)


def inter_pair_encode(emb: Tensor, w: TwixWeights) -> Tensor:
    """Attention across all pair embeddings, added back through a skip connection."""
    order = canonical_order(emb.data)
    out = _inter_sorted(T.take(emb, order, axis=0), w)
    return T.take(out, np.argsort(order), axis=0)


def affinity_from_inputs(inputs: PairInputs, w: TwixWeights) -> Tensor:
    emb = intra_pair_encode(inputs, w)
    # stay in canonical order through the head: BLAS rounding depends on row position
    order = canonical_order(emb.data)
    out = _inter_sorted(T.take(emb, order, axis=0), w)
    score = T.tanh(T.linear(out, w["head.w"], w["head.b"]))
    score = T.take(score, np.argsort(order), axis=0)
    return T.reshape(score, (inputs.n_past, inputs.n_future))


def affinity_forward(batch, w: TwixWeights) -> Tensor:
    """Affinity matrix ``(n_P, n_F)`` in (-1, 1) for a tracklet batch."""
    return affinity_from_inputs(build_pair_sequences(batch), w)


def isolated_affinities(past, future, w: TwixWeights) -> np.ndarray:
    """Affinity of each (past[i], future[i]) pair as if it were alone in its batch.

    Same result as ``affinity_matrix([past[i]], [future[i]], w)`` for every i,
    computed in one pass.
    """
    if len(past) != len(future):
        raise ValueError("past and future must pair up one to one")
    if not past:
        return np.zeros(0)
    parts = [pair_inputs([p], [f]) for p, f in zip(past, future)]
    L = max(p.tokens.shape[1] for p in parts)

    def stack(name, fill):
        rows = []
        for p in parts:
            a = getattr(p, name)
            pad = np.full((1, L - a.shape[1]) + a.shape[2:], fill, dtype=a.dtype)
            rows.append(np.concatenate([a, pad], axis=1))
        return np.concatenate(rows, axis=0)

    inputs = PairInputs(stack("tokens", 0.0), stack("dist", 0.0), stack("valid", False), len(parts), 1)
    emb = intra_pair_encode(inputs, w)
    # a set of one: run the inter encoder with every pair as its own sequence
    x = T.reshape(emb, (len(parts), 1, w.hyper.dim))
    for i in range(w.hyper.inter_layers):
        x = encoder_layer(x, w, f"inter.{i}")
    x = T.layer_norm(x, w["inter.norm.g"], w["inter.norm.b"])
    x = T.linear(x, w["inter.out.w"], w["inter.out.b"])
    emb = emb + T.reshape(x, emb.shape)
    return T.tanh(T.linear(emb, w["head.w"], w["head.b"])).data.reshape(-1).astype(np.float64)


def affinity_matrix(past, future, w: TwixWeights) -> np.ndarray:
    """Affinities between ``(frames, xywh)`` past tracks and future tracks, as numpy."""
    if len(past) == 0 or len(future) == 0:
        return np.zeros((len(past), len(future)))
    return affinity_from_inputs(pair_inputs(past, future), w).data.astype(np.float64)
