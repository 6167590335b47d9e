"""A small transformer token classifier over packed windows.

Float64 numpy throughout, with the bandwidth-bound kernels routed through
`backend` (numba or pure numpy).  Self-attention sees only positions whose
attention mask is true; the classifier reads only positions whose
classifier mask is true, so context subtokens shape the representations
without ever entering the loss.  Batches are cropped to the longest
attention run, which leaves active logits bit-identical (masked key
columns are exact zeros) while skipping padded tail positions.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .backend import kernels as K
from .packing import EncodedWindow

__all__ = [
    "Batch",
    "ModelConfig",
    "checkpoint_from_bytes",
    "checkpoint_to_bytes",
    "classifier_logits",
    "forward",
    "forward_hidden",
    "init",
    "load_checkpoint",
    "loss_and_grad",
    "save_checkpoint",
]


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    label_count: int
    model_dim: int = 64
    heads: int = 4
    layers: int = 2
    max_len: int = 256
    dropout: float = 0.2
    seed: int = 0

    def __post_init__(self):
        for name in ("vocab_size", "label_count", "model_dim", "heads", "layers", "max_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.model_dim % self.heads != 0:
            raise ValueError("model_dim must be divisible by heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads

    @property
    def ffn_dim(self) -> int:
        return 4 * self.model_dim


def init(config: ModelConfig) -> dict[str, np.ndarray]:
    """Seeded random initialization; same seed gives bit-identical tensors."""
    rng = np.random.default_rng(config.seed)
    d, f = config.model_dim, config.ffn_dim
    std = 0.02

    def w(*shape):
        return rng.normal(0.0, std, shape)

    params: dict[str, np.ndarray] = {}
    params["tok_emb"] = w(config.vocab_size, d)
    params["pos_emb"] = w(config.max_len, d)
    for i in range(config.layers):
        p = f"block{i}."
        params[p + "ln1.g"] = np.ones(d)
        params[p + "ln1.b"] = np.zeros(d)
        for name in ("wq", "wk", "wv", "wo"):
            params[p + "attn." + name] = w(d, d)
        for name in ("bq", "bk", "bv", "bo"):
            params[p + "attn." + name] = np.zeros(d)
        params[p + "ln2.g"] = np.ones(d)
        params[p + "ln2.b"] = np.zeros(d)
        params[p + "ffn.w1"] = w(d, f)
        params[p + "ffn.b1"] = np.zeros(f)
        params[p + "ffn.w2"] = w(f, d)
        params[p + "ffn.b2"] = np.zeros(d)
    params["ln_f.g"] = np.ones(d)
    params["ln_f.b"] = np.zeros(d)
    params["cls.w"] = w(d, config.label_count)
    params["cls.b"] = np.zeros(config.label_count)
    return params


@dataclass
class Batch:
    ids: np.ndarray      # (B, L) int64
    att: np.ndarray      # (B, L) bool
    cls: np.ndarray      # (B, L) bool
    labels: np.ndarray   # (B, L) int64

    @classmethod
    def from_windows(
        cls,
        windows: Sequence[EncodedWindow],
        expected_len: int | None = None,
        crop: bool = True,
    ) -> "Batch":
        if not windows:
            raise ValueError("empty batch")
        ids = np.stack([w.subtoken_ids for w in windows]).astype(np.int64)
        att = np.stack([w.attention_mask for w in windows]).astype(bool)
        clm = np.stack([w.classifier_mask for w in windows]).astype(bool)
        lab = np.stack([w.label_ids for w in windows]).astype(np.int64)
        if expected_len is not None and ids.shape[1] != expected_len:
            raise ValueError(f"window length {ids.shape[1]} does not match model max_len {expected_len}")
        if crop:
            # Dropping all-masked tail columns is exact: masked keys are
            # already zeroed in attention and the rows are never read.
            length = int(np.max(np.where(att, np.arange(ids.shape[1])[None, :], -1))) + 1
            length = max(length, 2)
            ids, att, clm, lab = ids[:, :length], att[:, :length], clm[:, :length], lab[:, :length]
        return cls(np.ascontiguousarray(ids), np.ascontiguousarray(att),
                   np.ascontiguousarray(clm), np.ascontiguousarray(lab))

    @property
    def shape(self):
        return self.ids.shape


def _dropout_mask(rng, shape, keep):
    return (rng.random(shape) < keep).astype(np.float64) / keep


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    b, l, d = x.shape
    return np.ascontiguousarray(x.reshape(b, l, heads, d // heads).transpose(0, 2, 1, 3))


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, l, dh = x.shape
    return np.ascontiguousarray(x.transpose(0, 2, 1, 3)).reshape(b, l, h * dh)


def forward_hidden(
    params: dict[str, np.ndarray],
    config: ModelConfig,
    batch: Batch,
    dropout_rng: np.random.Generator | None = None,
    need_cache: bool = False,
):
    """Run the encoder stack; returns final hidden states (B, L, D).

    Dropout is applied only when a generator is passed (training mode).
    With need_cache, also returns the intermediates for the backward pass.
    """
    B, L = batch.shape
    if L > config.max_len:
        raise ValueError("batch longer than model max_len")
    if batch.ids.min() < 0 or batch.ids.max() >= config.vocab_size:
        raise ValueError("token id out of vocabulary range")
    d = config.model_dim
    keep = 1.0 - config.dropout
    use_dropout = dropout_rng is not None and config.dropout > 0.0
    scale = 1.0 / math.sqrt(config.head_dim)

    cache: dict = {"layers": []}
    x = params["tok_emb"][batch.ids] + params["pos_emb"][:L][None, :, :]
    if use_dropout:
        mask = _dropout_mask(dropout_rng, x.shape, keep)
        x = x * mask
        cache["emb_drop"] = mask

    for i in range(config.layers):
        p = f"block{i}."
        lc: dict = {}

        a2, xhat1, rstd1 = K.layer_norm(x.reshape(B * L, d), params[p + "ln1.g"], params[p + "ln1.b"])
        q = (a2 @ params[p + "attn.wq"] + params[p + "attn.bq"]).reshape(B, L, d)
        k = (a2 @ params[p + "attn.wk"] + params[p + "attn.bk"]).reshape(B, L, d)
        v = (a2 @ params[p + "attn.wv"] + params[p + "attn.bv"]).reshape(B, L, d)
        qh, kh, vh = (_split_heads(t, config.heads) for t in (q, k, v))
        scores = np.matmul(qh, kh.transpose(0, 1, 3, 2)) * scale
        probs = K.masked_softmax(scores, batch.att)
        ctx = _merge_heads(np.matmul(probs, vh))
        o = (ctx.reshape(B * L, d) @ params[p + "attn.wo"] + params[p + "attn.bo"]).reshape(B, L, d)
        if use_dropout:
            mask = _dropout_mask(dropout_rng, o.shape, keep)
            o = o * mask
            lc["attn_drop"] = mask
        x = x + o

        f2, xhat2, rstd2 = K.layer_norm(x.reshape(B * L, d), params[p + "ln2.g"], params[p + "ln2.b"])
        h1 = f2 @ params[p + "ffn.w1"] + params[p + "ffn.b1"]
        g1 = K.gelu(h1)
        h2 = (g1 @ params[p + "ffn.w2"] + params[p + "ffn.b2"]).reshape(B, L, d)
        if use_dropout:
            mask = _dropout_mask(dropout_rng, h2.shape, keep)
            h2 = h2 * mask
            lc["ffn_drop"] = mask
        x = x + h2

        if need_cache:
            lc.update(a2=a2, xhat1=xhat1, rstd1=rstd1, qh=qh, kh=kh, vh=vh, probs=probs,
                      ctx=ctx, f2=f2, xhat2=xhat2, rstd2=rstd2, h1=h1, g1=g1)
            cache["layers"].append(lc)

    h, xhatf, rstdf = K.layer_norm(x.reshape(B * L, d), params["ln_f.g"], params["ln_f.b"])
    hidden = h.reshape(B, L, d)
    if need_cache:
        cache.update(xhatf=xhatf, rstdf=rstdf)
        return hidden, cache
    return hidden


def classifier_logits(params: dict[str, np.ndarray], hidden_rows: np.ndarray) -> np.ndarray:
    """Apply the classifier head to already-gathered hidden rows (A, D)."""
    return hidden_rows @ params["cls.w"] + params["cls.b"]


def forward(
    params: dict[str, np.ndarray],
    config: ModelConfig,
    windows: Sequence[EncodedWindow],
) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Evaluation-mode logits at classifier-active positions.

    Returns (logits (A, label_count), index) where index[i] is the
    (window, position) pair of row i, ordered by window then position;
    this matches the order of each window's provenance list.
    """
    batch = Batch.from_windows(windows, expected_len=config.max_len)
    hidden = forward_hidden(params, config, batch)
    rows_b, rows_p = np.nonzero(batch.cls)
    logits = classifier_logits(params, hidden[rows_b, rows_p])
    return logits, list(zip(rows_b.tolist(), rows_p.tolist()))


def _cross_entropy(logits: np.ndarray, labels: np.ndarray):
    a = logits.shape[0]
    m = logits.max(axis=1, keepdims=True)
    z = logits - m
    lse = np.log(np.sum(np.exp(z), axis=1, keepdims=True))
    logp = z - lse
    loss = -float(np.mean(logp[np.arange(a), labels]))
    dlogits = np.exp(logp)
    dlogits[np.arange(a), labels] -= 1.0
    dlogits /= a
    return loss, dlogits


def loss_and_grad(
    params: dict[str, np.ndarray],
    config: ModelConfig,
    windows: Sequence[EncodedWindow],
    dropout_rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over classifier-active positions, plus gradients
    for every parameter tensor."""
    batch = Batch.from_windows(windows, expected_len=config.max_len)
    B, L = batch.shape
    d = config.model_dim
    keep = 1.0 - config.dropout
    use_dropout = dropout_rng is not None and config.dropout > 0.0
    scale = 1.0 / math.sqrt(config.head_dim)

    hidden, cache = forward_hidden(params, config, batch, dropout_rng, need_cache=True)
    rows_b, rows_p = np.nonzero(batch.cls)
    if rows_b.size == 0:
        raise ValueError("batch has no classifier-active positions")
    labels = batch.labels[rows_b, rows_p]
    if labels.min() < 0 or labels.max() >= config.label_count:
        raise ValueError("labels must be defined at all classifier-active positions")

    hb = hidden[rows_b, rows_p]
    logits = classifier_logits(params, hb)
    loss, dlogits = _cross_entropy(logits, labels)

    grads: dict[str, np.ndarray] = {}
    grads["cls.w"] = hb.T @ dlogits
    grads["cls.b"] = dlogits.sum(axis=0)

    dhidden = np.zeros_like(hidden)
    dhidden[rows_b, rows_p] = dlogits @ params["cls.w"].T

    dx2, dg, db = K.layer_norm_grad(
        dhidden.reshape(B * L, d), cache["xhatf"], cache["rstdf"], params["ln_f.g"]
    )
    grads["ln_f.g"] = dg
    grads["ln_f.b"] = db
    dx = dx2.reshape(B, L, d)

    for i in reversed(range(config.layers)):
        p = f"block{i}."
        lc = cache["layers"][i]

        # feed-forward branch
        dh2 = dx
        if use_dropout:
            dh2 = dh2 * lc["ffn_drop"]
        dh2_2 = dh2.reshape(B * L, d)
        grads[p + "ffn.w2"] = lc["g1"].T @ dh2_2
        grads[p + "ffn.b2"] = dh2_2.sum(axis=0)
        dg1 = dh2_2 @ params[p + "ffn.w2"].T
        dh1 = K.gelu_grad(lc["h1"], dg1)
        grads[p + "ffn.w1"] = lc["f2"].T @ dh1
        grads[p + "ffn.b1"] = dh1.sum(axis=0)
        df2 = dh1 @ params[p + "ffn.w1"].T
        dxa, dg, db = K.layer_norm_grad(df2, lc["xhat2"], lc["rstd2"], params[p + "ln2.g"])
        grads[p + "ln2.g"] = dg
        grads[p + "ln2.b"] = db
        dx = dx + dxa.reshape(B, L, d)

        # attention branch
        do = dx
        if use_dropout:
            do = do * lc["attn_drop"]
        do2 = do.reshape(B * L, d)
        grads[p + "attn.wo"] = lc["ctx"].reshape(B * L, d).T @ do2
        grads[p + "attn.bo"] = do2.sum(axis=0)
        dctx = _split_heads((do2 @ params[p + "attn.wo"].T).reshape(B, L, d), config.heads)
        dprobs = np.matmul(dctx, lc["vh"].transpose(0, 1, 3, 2))
        dvh = np.matmul(lc["probs"].transpose(0, 1, 3, 2), dctx)
        dscores = K.masked_softmax_grad(lc["probs"], dprobs)
        dqh = np.matmul(dscores, lc["kh"]) * scale
        dkh = np.matmul(dscores.transpose(0, 1, 3, 2), lc["qh"]) * scale
        da2 = np.zeros((B * L, d))
        for w_name, b_name, dt in (("wq", "bq", dqh), ("wk", "bk", dkh), ("wv", "bv", dvh)):
            dt2 = _merge_heads(dt).reshape(B * L, d)
            grads[p + "attn." + w_name] = lc["a2"].T @ dt2
            grads[p + "attn." + b_name] = dt2.sum(axis=0)
            da2 += dt2 @ params[p + "attn." + w_name].T
        dxa, dg, db = K.layer_norm_grad(da2, lc["xhat1"], lc["rstd1"], params[p + "ln1.g"])
        grads[p + "ln1.g"] = dg
        grads[p + "ln1.b"] = db
        dx = dx + dxa.reshape(B, L, d)

    if use_dropout:
        dx = dx * cache["emb_drop"]
    grads["pos_emb"] = np.zeros_like(params["pos_emb"])
    grads["pos_emb"][:L] = dx.sum(axis=0)
    grads["tok_emb"] = np.zeros_like(params["tok_emb"])
    np.add.at(grads["tok_emb"], batch.ids.reshape(-1), dx.reshape(-1, d))

    return loss, grads


# ---------------------------------------------------------------------------
# Checkpoints: deterministic JSON blob with config and raw tensor bytes.

_CKPT_FORMAT = "nerpack-checkpoint-v1"


def checkpoint_to_bytes(params: dict[str, np.ndarray], config: ModelConfig) -> bytes:
    tensors = {
        name: {
            "shape": list(t.shape),
            "dtype": str(t.dtype),
            "data": base64.b64encode(np.ascontiguousarray(t).tobytes()).decode("ascii"),
        }
        for name, t in params.items()
    }
    obj = {"format": _CKPT_FORMAT, "config": asdict(config), "tensors": tensors}
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def checkpoint_from_bytes(blob: bytes) -> tuple[dict[str, np.ndarray], ModelConfig]:
    obj = json.loads(blob.decode("utf-8"))
    if obj.get("format") != _CKPT_FORMAT:
        raise ValueError("not a nerpack checkpoint")
    config = ModelConfig(**obj["config"])
    params = {}
    for name, t in obj["tensors"].items():
        arr = np.frombuffer(base64.b64decode(t["data"]), dtype=np.dtype(t["dtype"]))
        params[name] = arr.reshape(t["shape"]).copy()
    return params, config


def save_checkpoint(path, params: dict[str, np.ndarray], config: ModelConfig) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_to_bytes(params, config))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], ModelConfig]:
    with open(path, "rb") as fh:
        return checkpoint_from_bytes(fh.read())
