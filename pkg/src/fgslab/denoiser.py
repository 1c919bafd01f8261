"""Tiny trainable attention denoiser over 16x16 grids, with exact
hand-derived gradients (no ML framework), plus a logistic pixel
classifier used for editability scoring.

Architecture (shapes documented in docs/architecture.md): each pixel is a
token. A token embedding is the sum of a per-pixel linear map of the
scalar intensity, a learned positional embedding, a projected sinusoidal
timestep embedding, and a condition embedding (one row per condition id
plus a null row). One single-head softmax self-attention block and a
two-layer tanh feed-forward follow, both with residual connections, and a
final per-pixel linear map emits the scalar noise prediction.

The post-softmax attention matrix is exposed on every forward pass and
can be replaced wholesale by an externally supplied row-stochastic matrix
before the value aggregation, which is how reconstruction-path attention
is injected into the editing path.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields

import numpy as np

from .arrays import SeededRng
from .diffusion import NoiseSchedule

__all__ = [
    "DenoiserParams",
    "TrainConfig",
    "init_params",
    "time_embedding",
    "forward",
    "loss_and_grads",
    "train",
    "ClassifierParams",
    "classifier_train",
    "classify",
]

log = logging.getLogger(__name__)

GRID_SIDE = 16
N_TOKENS = GRID_SIDE * GRID_SIDE
WIDTH = 32
FF_HIDDEN = 64
TIME_DIM = 32
ATT_ROW_TOL = 1e-9


@dataclass
class DenoiserParams:
    """All trainable tensors. Field order is the canonical flattening order."""

    tok_w: np.ndarray  # (WIDTH,)
    tok_b: np.ndarray  # (WIDTH,)
    pos: np.ndarray  # (N_TOKENS, WIDTH)
    time_w: np.ndarray  # (TIME_DIM, WIDTH)
    time_b: np.ndarray  # (WIDTH,)
    cond_emb: np.ndarray  # (n_cond + 1, WIDTH); last row is the null condition
    wq: np.ndarray  # (WIDTH, WIDTH)
    bq: np.ndarray  # (WIDTH,)
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    ff_w1: np.ndarray  # (WIDTH, FF_HIDDEN)
    ff_b1: np.ndarray  # (FF_HIDDEN,)
    ff_w2: np.ndarray  # (FF_HIDDEN, WIDTH)
    ff_b2: np.ndarray  # (WIDTH,)
    out_w: np.ndarray  # (WIDTH,)
    out_b: np.ndarray  # ()

    @property
    def n_cond(self) -> int:
        return self.cond_emb.shape[0] - 1

    def names(self) -> list:
        return [f.name for f in fields(self)]

    def tensors(self) -> dict:
        return {name: getattr(self, name) for name in self.names()}

    def copy(self) -> "DenoiserParams":
        return DenoiserParams(**{k: v.copy() for k, v in self.tensors().items()})

    def zeros_like(self) -> "DenoiserParams":
        return DenoiserParams(**{k: np.zeros_like(v) for k, v in self.tensors().items()})

    def to_vector(self) -> np.ndarray:
        return np.concatenate([np.ravel(getattr(self, n)) for n in self.names()])

    def from_vector(self, vec: np.ndarray) -> "DenoiserParams":
        out = {}
        offset = 0
        for name in self.names():
            ref = getattr(self, name)
            size = ref.size
            out[name] = vec[offset:offset + size].reshape(ref.shape).copy()
            offset += size
        if offset != vec.size:
            raise ValueError(f"vector length {vec.size} does not match parameter count {offset}")
        return DenoiserParams(**out)

    def validate_finite(self) -> None:
        for name, arr in self.tensors().items():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"parameter tensor {name} contains non-finite values")


def init_params(rng: SeededRng, n_cond: int) -> DenoiserParams:
    d, f, n = WIDTH, FF_HIDDEN, N_TOKENS

    def normal(shape, scale):
        return scale * rng.standard_normal(shape)

    return DenoiserParams(
        tok_w=normal((d,), 1.0),
        tok_b=np.zeros(d),
        pos=normal((n, d), 0.1),
        time_w=normal((TIME_DIM, d), 1.0 / np.sqrt(TIME_DIM)),
        time_b=np.zeros(d),
        cond_emb=normal((n_cond + 1, d), 0.1),
        wq=normal((d, d), 1.0 / np.sqrt(d)),
        bq=np.zeros(d),
        wk=normal((d, d), 1.0 / np.sqrt(d)),
        bk=np.zeros(d),
        wv=normal((d, d), 1.0 / np.sqrt(d)),
        bv=np.zeros(d),
        wo=normal((d, d), 1.0 / np.sqrt(d)),
        bo=np.zeros(d),
        ff_w1=normal((d, f), 1.0 / np.sqrt(d)),
        ff_b1=np.zeros(f),
        ff_w2=normal((f, d), 1.0 / np.sqrt(f)),
        ff_b2=np.zeros(d),
        out_w=normal((d,), 1.0 / np.sqrt(d)),
        out_b=np.zeros(()),
    )


def time_embedding(t, dim: int = TIME_DIM, max_period: float = 10000.0) -> np.ndarray:
    """Sinusoidal features of the timestep: half sines, half cosines."""
    t = np.asarray(t, dtype=np.float64)
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / half)
    angles = t[..., None] * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)


def _cond_rows(params: DenoiserParams, cond_ids) -> np.ndarray:
    idx = np.asarray([params.n_cond if c is None else int(c) for c in cond_ids])
    if np.any(idx < 0) or np.any(idx > params.n_cond):
        raise ValueError(f"condition id outside [0, {params.n_cond}]")
    return idx


def _forward_batch(params: DenoiserParams, x: np.ndarray, t: np.ndarray, cond_idx: np.ndarray,
                   inject: np.ndarray | None = None) -> dict:
    """Batched forward pass; returns every intermediate needed for backward."""
    if x.ndim != 2 or x.shape[1] != N_TOKENS:
        raise ValueError(f"expected inputs of shape (B, {N_TOKENS}), got {x.shape}")
    d = WIDTH
    temb_raw = time_embedding(t)  # (B, TIME_DIM)
    temb = temb_raw @ params.time_w + params.time_b  # (B, d)
    cond_vec = params.cond_emb[cond_idx]  # (B, d)
    h0 = (
        x[:, :, None] * params.tok_w
        + params.tok_b
        + params.pos
        + temb[:, None, :]
        + cond_vec[:, None, :]
    )  # (B, N, d)
    q = h0 @ params.wq + params.bq
    k = h0 @ params.wk + params.bk
    v = h0 @ params.wv + params.bv
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(d)
    scores = scores - scores.max(axis=-1, keepdims=True)
    exp = np.exp(scores)
    att = exp / exp.sum(axis=-1, keepdims=True)  # (B, N, N)
    if inject is not None:
        if inject.shape != (N_TOKENS, N_TOKENS):
            raise ValueError(f"injected attention must be {(N_TOKENS, N_TOKENS)}, got {inject.shape}")
        if np.any(inject < -ATT_ROW_TOL) or np.any(np.abs(inject.sum(axis=-1) - 1.0) > ATT_ROW_TOL):
            raise ValueError("injected attention must be row-stochastic")
        att_used = np.broadcast_to(inject, att.shape)
    else:
        att_used = att
    u = att_used @ v
    o = u @ params.wo + params.bo
    h1 = h0 + o
    f1 = h1 @ params.ff_w1 + params.ff_b1
    g = np.tanh(f1)
    f2 = g @ params.ff_w2 + params.ff_b2
    h2 = h1 + f2
    eps = h2 @ params.out_w + params.out_b  # (B, N)
    return {
        "x": x, "temb_raw": temb_raw, "cond_idx": cond_idx, "h0": h0,
        "q": q, "k": k, "v": v, "att": att, "att_used": att_used, "injected": inject is not None,
        "u": u, "h1": h1, "g": g, "h2": h2, "eps": eps,
    }


def _flat_outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """sum_{batch, token} outer(a, b): contraction over the leading two axes."""
    return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])


def _backward_batch(params: DenoiserParams, cache: dict, d_eps: np.ndarray) -> DenoiserParams:
    """Exact reverse pass for the forward above; returns parameter gradients."""
    d = WIDTH
    grads = params.zeros_like()
    h2, g, h1, u, att, att_used = (
        cache["h2"], cache["g"], cache["h1"], cache["u"], cache["att"], cache["att_used"],
    )
    q, k, v, h0, x = cache["q"], cache["k"], cache["v"], cache["h0"], cache["x"]

    grads.out_w += h2.reshape(-1, d).T @ d_eps.ravel()
    grads.out_b += d_eps.sum()
    d_h2 = d_eps[:, :, None] * params.out_w

    d_f2 = d_h2
    grads.ff_w2 += _flat_outer(g, d_f2)
    grads.ff_b2 += d_f2.sum(axis=(0, 1))
    d_g = d_f2 @ params.ff_w2.T
    d_f1 = d_g * (1.0 - g * g)
    grads.ff_w1 += _flat_outer(h1, d_f1)
    grads.ff_b1 += d_f1.sum(axis=(0, 1))
    d_h1 = d_h2 + d_f1 @ params.ff_w1.T

    d_o = d_h1
    grads.wo += _flat_outer(u, d_o)
    grads.bo += d_o.sum(axis=(0, 1))
    d_u = d_o @ params.wo.T

    d_v = att_used.transpose(0, 2, 1) @ d_u
    if cache["injected"]:
        d_q = np.zeros_like(q)
        d_k = np.zeros_like(k)
    else:
        d_att = d_u @ v.transpose(0, 2, 1)
        d_scores = att * (d_att - np.sum(d_att * att, axis=-1, keepdims=True))
        d_q = d_scores @ k / np.sqrt(d)
        d_k = d_scores.transpose(0, 2, 1) @ q / np.sqrt(d)

    grads.wq += _flat_outer(h0, d_q)
    grads.bq += d_q.sum(axis=(0, 1))
    grads.wk += _flat_outer(h0, d_k)
    grads.bk += d_k.sum(axis=(0, 1))
    grads.wv += _flat_outer(h0, d_v)
    grads.bv += d_v.sum(axis=(0, 1))
    d_h0 = d_h1 + d_q @ params.wq.T + d_k @ params.wk.T + d_v @ params.wv.T

    grads.tok_w += x.ravel() @ d_h0.reshape(-1, d)
    grads.tok_b += d_h0.sum(axis=(0, 1))
    grads.pos += d_h0.sum(axis=0)
    d_row = d_h0.sum(axis=1)  # (B, d): shared by time and condition embeddings
    grads.time_w += cache["temb_raw"].T @ d_row
    grads.time_b += d_row.sum(axis=0)
    np.add.at(grads.cond_emb, cache["cond_idx"], d_row)
    return grads


def forward(params: DenoiserParams, value: np.ndarray, t: int, cond_id=None,
            inject: np.ndarray | None = None) -> tuple:
    """Single-sample noise prediction.

    Returns (eps_hat, attention): eps_hat has the input's flat shape and
    attention is the model's own post-softmax matrix (also when an
    injected matrix replaced it for the value aggregation).
    """
    x = np.asarray(value, dtype=np.float64).reshape(1, N_TOKENS)
    cond_idx = _cond_rows(params, [cond_id])
    cache = _forward_batch(params, x, np.asarray([t], dtype=np.float64), cond_idx, inject)
    return cache["eps"][0], cache["att"][0]


def loss_and_grads(params: DenoiserParams, batch_z0: np.ndarray, batch_cond,
                   rng: SeededRng, sched: NoiseSchedule) -> tuple:
    """Denoising loss mean((eps - eps_hat)^2) on one sampled batch, with grads.

    Per item, a timestep t ~ Uniform{1..T} and eps ~ N(0, I) are drawn from
    rng, the noisy latent is formed from the forward marginal, and the
    model predicts eps. Gradients are exact for the sampled batch.
    """
    z0 = np.asarray(batch_z0, dtype=np.float64).reshape(-1, N_TOKENS)
    if z0.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    b = z0.shape[0]
    t = rng.integers(1, sched.T + 1, b)
    eps = rng.standard_normal((b, N_TOKENS))
    a = sched.alpha[t][:, None]
    zt = np.sqrt(a) * z0 + np.sqrt(1.0 - a) * eps
    cond_idx = _cond_rows(params, list(batch_cond))
    cache = _forward_batch(params, zt, t.astype(np.float64), cond_idx)
    resid = cache["eps"] - eps
    loss = float(np.mean(resid * resid))
    d_eps = 2.0 * resid / resid.size
    grads = _backward_batch(params, cache, d_eps)
    return loss, grads


@dataclass
class TrainConfig:
    steps: int = 2000
    batch: int = 16
    learning_rate: float = 3e-3
    momentum: float = 0.9
    seed: int = 0
    log_every: int = 100


def train(dataset, hyper: TrainConfig, sched: NoiseSchedule,
          params: DenoiserParams | None = None) -> DenoiserParams:
    """Plain SGD with momentum on the denoising loss.

    dataset: sequence of (image, cond_id) pairs; images are 16x16 grids or
    flat 256-vectors. Aborts with a diagnostic if the loss turns NaN.
    """
    items = [(np.asarray(img, dtype=np.float64).ravel(), cid) for img, cid in dataset]
    if not items:
        raise ValueError("dataset must be nonempty")
    n_cond = max(cid for _, cid in items) + 1
    rng = SeededRng(hyper.seed, 101)
    if params is None:
        params = init_params(rng.child(0), n_cond)
    else:
        params = params.copy()
    velocity = params.zeros_like()
    data = np.stack([img for img, _ in items])
    conds = np.asarray([cid for _, cid in items])
    for step in range(hyper.steps):
        pick = rng.integers(0, len(items), hyper.batch)
        loss, grads = loss_and_grads(params, data[pick], conds[pick], rng, sched)
        if not np.isfinite(loss):
            raise RuntimeError(f"training diverged: loss={loss} at step {step}")
        for name in params.names():
            v = getattr(velocity, name)
            v *= hyper.momentum
            v += getattr(grads, name)
            p = getattr(params, name)
            p -= hyper.learning_rate * v
        if step % hyper.log_every == 0:
            log.info("step %d loss %.6f", step, loss)
    params.validate_finite()
    return params


@dataclass
class ClassifierParams:
    """Multinomial logistic regression on raw pixels (plus bias)."""

    weights: np.ndarray  # (N_TOKENS + 1, n_classes)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[1]


def _class_logits(weights: np.ndarray, images: np.ndarray) -> np.ndarray:
    x = images.reshape(images.shape[0], -1)
    return x @ weights[:-1] + weights[-1]


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def classifier_train(dataset, n_classes: int | None = None, steps: int = 400,
                     learning_rate: float = 2.0, weight_decay: float = 1e-3) -> ClassifierParams:
    """Full-batch gradient descent on softmax cross-entropy; deterministic.

    The small L2 penalty keeps the solution away from the separable-data
    blow-up so probabilities stay calibrated enough to rank edits.
    """
    images = np.stack([np.asarray(img, dtype=np.float64).ravel() for img, _ in dataset])
    labels = np.asarray([cid for _, cid in dataset])
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    w = np.zeros((images.shape[1] + 1, n_classes))
    onehot = np.eye(n_classes)[labels]
    for _ in range(steps):
        probs = _softmax(_class_logits(w, images))
        diff = (probs - onehot) / images.shape[0]
        w[:-1] -= learning_rate * (images.T @ diff + weight_decay * w[:-1])
        w[-1] -= learning_rate * diff.sum(axis=0)
    return ClassifierParams(weights=w)


def classify(classifier: ClassifierParams, image: np.ndarray) -> np.ndarray:
    """Class probabilities for one image; rows sum to 1."""
    x = np.asarray(image, dtype=np.float64).reshape(1, -1)
    if x.shape[1] + 1 != classifier.weights.shape[0]:
        raise ValueError("image size does not match the trained classifier")
    return _softmax(_class_logits(classifier.weights, x))[0]
