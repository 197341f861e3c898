"""Recurrent context encoder with additive attention.

The model reads a context window of event indices through a GRU cell,
scores every position with a single-layer additive attention, and
predicts the target event from the attention-weighted summary of the
hidden states.  Attention weights double as the explanation of the
prediction: aggregated per event type they form the vector of total
attention that the clustering stage consumes.

Everything is plain numpy with hand-written gradients so that training
is deterministic for a fixed seed and the gradients can be checked
against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import TrainingDivergedError, UnseenEventError, ValidationError
from .sequencer import UNSEEN, Sequence, sequences_to_arrays

WEIGHT_NAMES = ("emb", "w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_g", "u_g", "b_g",
                "w_att", "b_att", "v_att", "w_out", "b_out")


@dataclass
class ModelParams:
    """All trainable weights plus the shape/seed metadata to rebuild them."""

    hidden_nodes: int
    vocab_size: int
    seed: int
    weights: dict[str, np.ndarray]

    @property
    def pad_index(self) -> int:
        return self.vocab_size

    def validate(self):
        for name in WEIGHT_NAMES:
            if name not in self.weights:
                raise ValidationError(f"missing weight {name}")
            if not np.isfinite(self.weights[name]).all():
                raise ValidationError(f"non-finite values in weight {name}")

    def copy(self) -> "ModelParams":
        return ModelParams(self.hidden_nodes, self.vocab_size, self.seed,
                           {k: v.copy() for k, v in self.weights.items()})


@dataclass
class TrainConfig:
    """Mini-batch gradient descent settings; delta is the label-smoothing weight."""

    delta: float = 0.0
    epochs: int = 10
    batch_size: int = 128
    learning_rate: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValidationError("delta must be in [0, 1]")
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValidationError("epochs/batch_size must be >= 1 and learning_rate > 0")


@dataclass
class Prediction:
    """Distribution over event types with the argmax and its probability."""

    distribution: np.ndarray
    predicted: int
    confidence: float


@dataclass
class AttentionVector:
    """Per-context-position relevance weights; sums to 1."""

    weights: np.ndarray

    def __post_init__(self):
        if abs(float(self.weights.sum()) - 1.0) > 1e-6:
            raise ValidationError("attention weights must sum to 1")
        if (self.weights < 0).any():
            raise ValidationError("attention weights must be non-negative")


def init_params(vocab_size: int, hidden_nodes: int, seed: int) -> ModelParams:
    """Seeded weight initialization; the embedding table has a PAD row."""
    if vocab_size < 1 or hidden_nodes < 1:
        raise ValidationError("vocab_size and hidden_nodes must be >= 1")
    rng = np.random.default_rng(seed)
    h = hidden_nodes
    e = hidden_nodes  # embedding width tied to the hidden size
    scale_in = 1.0 / np.sqrt(e)
    scale_h = 1.0 / np.sqrt(h)
    weights = {
        "emb": rng.standard_normal((vocab_size + 1, e)) * 0.5,
        "w_z": rng.standard_normal((h, e)) * scale_in,
        "u_z": rng.standard_normal((h, h)) * scale_h,
        "b_z": np.zeros(h),
        "w_r": rng.standard_normal((h, e)) * scale_in,
        "u_r": rng.standard_normal((h, h)) * scale_h,
        "b_r": np.zeros(h),
        "w_g": rng.standard_normal((h, e)) * scale_in,
        "u_g": rng.standard_normal((h, h)) * scale_h,
        "b_g": np.zeros(h),
        "w_att": rng.standard_normal((h, h)) * scale_h,
        "b_att": np.zeros(h),
        "v_att": rng.standard_normal(h) * scale_h,
        "w_out": rng.standard_normal((vocab_size, h)) * scale_h,
        "b_out": np.zeros(vocab_size),
    }
    return ModelParams(hidden_nodes=h, vocab_size=vocab_size, seed=seed, weights=weights)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _forward(params: ModelParams, ctx: np.ndarray):
    """Run the encoder on an integer context batch (B, n).

    Returns (log_probs, probs, alpha, cache).  PAD positions are masked
    out of the attention softmax; rows whose context is entirely PAD get
    a constant uniform attention.
    """
    w = params.weights
    B, n = ctx.shape
    h = params.hidden_nodes
    pad = params.pad_index
    if (ctx == UNSEEN).any():
        raise UnseenEventError("context contains an event type unseen in training")
    if ctx.min() < 0 or ctx.max() > pad:
        raise ValidationError("context index out of range for this vocabulary")

    X = w["emb"][ctx]  # (B, n, e)
    H = np.zeros((B, n + 1, h))
    Z = np.empty((B, n, h))
    R = np.empty((B, n, h))
    G = np.empty((B, n, h))
    for t in range(n):
        x_t = X[:, t]
        h_prev = H[:, t]
        z_t = _sigmoid(x_t @ w["w_z"].T + h_prev @ w["u_z"].T + w["b_z"])
        r_t = _sigmoid(x_t @ w["w_r"].T + h_prev @ w["u_r"].T + w["b_r"])
        g_t = np.tanh(x_t @ w["w_g"].T + (r_t * h_prev) @ w["u_g"].T + w["b_g"])
        H[:, t + 1] = (1.0 - z_t) * h_prev + z_t * g_t
        Z[:, t], R[:, t], G[:, t] = z_t, r_t, g_t

    Hs = H[:, 1:]  # hidden state per position, (B, n, h)
    U = np.tanh(Hs @ w["w_att"].T + w["b_att"])
    scores = U @ w["v_att"]  # (B, n)
    mask = ctx != pad
    any_real = mask.any(axis=1)
    neg = np.where(mask, scores, -np.inf)
    mx = np.where(any_real, neg.max(axis=1), 0.0)
    expd = np.exp(neg - mx[:, None])
    expd[~np.isfinite(expd)] = 0.0
    denom = expd.sum(axis=1)
    alpha = np.empty((B, n))
    alpha[any_real] = expd[any_real] / denom[any_real, None]
    alpha[~any_real] = 1.0 / n  # all-PAD context: constant uniform attention

    context_vec = np.einsum("bt,bth->bh", alpha, Hs)
    logits = context_vec @ w["w_out"].T + w["b_out"]
    shift = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shift).sum(axis=1, keepdims=True))
    log_probs = shift - log_norm
    probs = np.exp(log_probs)
    cache = dict(ctx=ctx, X=X, H=H, Z=Z, R=R, G=G, U=U, alpha=alpha, mask=mask,
                 any_real=any_real, context_vec=context_vec, probs=probs)
    return log_probs, probs, alpha, cache


def _smoothed_targets(targets: np.ndarray, vocab_size: int, delta: float) -> np.ndarray:
    q = np.full((targets.size, vocab_size), delta / vocab_size)
    q[np.arange(targets.size), targets] += 1.0 - delta
    return q


def loss_and_gradients(params: ModelParams, ctx: np.ndarray, targets: np.ndarray,
                       delta: float):
    """Mean label-smoothed cross-entropy over the batch and its gradients.

    The returned dict maps every weight name to the analytic gradient;
    this is the surface checked against central finite differences.
    """
    if (targets == UNSEEN).any():
        raise UnseenEventError("target contains an event type unseen in training")
    w = params.weights
    B, n = ctx.shape
    log_probs, probs, alpha, cache = _forward(params, ctx)
    q = _smoothed_targets(targets, params.vocab_size, delta)
    loss = float(-(q * log_probs).sum() / B)

    grads = {name: np.zeros_like(w[name]) for name in WEIGHT_NAMES}
    Hs = cache["H"][:, 1:]
    dlogits = (probs - q) / B
    grads["w_out"] = dlogits.T @ cache["context_vec"]
    grads["b_out"] = dlogits.sum(axis=0)
    dctx_vec = dlogits @ w["w_out"]

    dalpha = np.einsum("bh,bth->bt", dctx_vec, Hs)
    dH = alpha[:, :, None] * dctx_vec[:, None, :]

    # Softmax backward; rows with all-PAD context have constant attention.
    ds = alpha * (dalpha - (dalpha * alpha).sum(axis=1, keepdims=True))
    ds[~cache["any_real"]] = 0.0

    U = cache["U"]
    grads["v_att"] = np.einsum("bt,bth->h", ds, U)
    dpre_att = ds[:, :, None] * w["v_att"] * (1.0 - U ** 2)
    grads["w_att"] = np.einsum("bta,bth->ah", dpre_att, Hs)
    grads["b_att"] = dpre_att.sum(axis=(0, 1))
    dH += dpre_att @ w["w_att"]

    carry = np.zeros((B, params.hidden_nodes))
    for t in range(n - 1, -1, -1):
        h_prev = cache["H"][:, t]
        z_t, r_t, g_t = cache["Z"][:, t], cache["R"][:, t], cache["G"][:, t]
        x_t = cache["X"][:, t]
        dh = dH[:, t] + carry
        dz_pre = dh * (g_t - h_prev) * z_t * (1.0 - z_t)
        dg_pre = dh * z_t * (1.0 - g_t ** 2)
        dh_prev = dh * (1.0 - z_t)

        grads["w_g"] += dg_pre.T @ x_t
        grads["u_g"] += dg_pre.T @ (r_t * h_prev)
        grads["b_g"] += dg_pre.sum(axis=0)
        dx = dg_pre @ w["w_g"]
        d_rh = dg_pre @ w["u_g"]
        dr_pre = d_rh * h_prev * r_t * (1.0 - r_t)
        dh_prev += d_rh * r_t

        grads["w_r"] += dr_pre.T @ x_t
        grads["u_r"] += dr_pre.T @ h_prev
        grads["b_r"] += dr_pre.sum(axis=0)
        dx += dr_pre @ w["w_r"]
        dh_prev += dr_pre @ w["u_r"]

        grads["w_z"] += dz_pre.T @ x_t
        grads["u_z"] += dz_pre.T @ h_prev
        grads["b_z"] += dz_pre.sum(axis=0)
        dx += dz_pre @ w["w_z"]
        dh_prev += dz_pre @ w["u_z"]

        np.add.at(grads["emb"], cache["ctx"][:, t], dx)
        carry = dh_prev

    return loss, grads


def label_smoothed_loss(distribution, target: int, delta: float) -> float:
    """Cross-entropy of a distribution against the smoothed target.

    The target is (1-delta)*onehot(target) + delta*uniform; probabilities
    are clamped at 1e-12 before the log.
    """
    p = np.asarray(distribution, dtype=np.float64)
    if not 0.0 <= delta <= 1.0:
        raise ValidationError("delta must be in [0, 1]")
    if abs(float(p.sum()) - 1.0) > 1e-6 or (p < 0).any():
        raise ValidationError("distribution must be a probability vector")
    if not 0 <= target < p.size:
        raise ValidationError("target index out of range")
    q = np.full(p.size, delta / p.size)
    q[target] += 1.0 - delta
    return float(-(q * np.log(np.maximum(p, 1e-12))).sum())


def train(seqs: list[Sequence], cfg: TrainConfig, hp=None,
          vocab_size: Optional[int] = None) -> ModelParams:
    """Mini-batch gradient descent on the label-smoothed prediction loss.

    ``hp`` only contributes the hidden-layer width here (anything with a
    ``hidden_nodes`` attribute works); the smoothing weight comes from
    ``cfg.delta``.  Deterministic for fixed data and ``cfg.seed``.
    """
    if not seqs:
        raise ValidationError("cannot train on an empty sequence list")
    hidden = getattr(hp, "hidden_nodes", None) or 32
    ctx, targets, _, _ = sequences_to_arrays(seqs)
    if vocab_size is None:
        raise ValidationError("vocab_size is required")
    if (targets == UNSEEN).any() or (ctx == UNSEEN).any():
        raise UnseenEventError("training data contains unseen-event markers")
    if targets.max() >= vocab_size or ctx.max() > vocab_size:
        raise ValidationError("event index out of range for vocab_size")

    params = init_params(vocab_size, hidden, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    n_samples = len(seqs)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_samples)
        total = 0.0
        for start in range(0, n_samples, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, grads = loss_and_gradients(params, ctx[batch], targets[batch], cfg.delta)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            total += loss * batch.size
            for name in WEIGHT_NAMES:
                params.weights[name] -= cfg.learning_rate * grads[name]
        if not np.isfinite(total):
            raise TrainingDivergedError(epoch)
    return params


def predict_batch(params: ModelParams, ctx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(distributions, attention weights) for a batch of contexts."""
    log_probs, probs, alpha, _ = _forward(params, np.asarray(ctx))
    return probs, alpha


def predict(params: ModelParams, seq: Sequence) -> tuple[Prediction, AttentionVector]:
    """Predict the target event of one sequence from its context.

    Raises UnseenEventError when the sequence contains an event type the
    vocabulary never saw; the classifier maps that onto a rejection.
    """
    if seq.target == UNSEEN or UNSEEN in seq.context:
        raise UnseenEventError("sequence contains an event type unseen in training")
    ctx = np.asarray([seq.context])
    probs, alpha = predict_batch(params, ctx)
    dist = probs[0]
    predicted = int(dist.argmax())
    return (Prediction(distribution=dist, predicted=predicted, confidence=float(dist[predicted])),
            AttentionVector(weights=alpha[0]))


def total_attention_batch(ctx: np.ndarray, alpha: np.ndarray, vocab_size: int,
                          pad_index: int) -> np.ndarray:
    """Aggregate attention per event type for a batch of contexts.

    PAD weight is redistributed proportionally over the non-PAD positions
    before summing; contexts that are entirely PAD yield a zero vector.
    """
    ctx = np.asarray(ctx)
    alpha = np.asarray(alpha, dtype=np.float64)
    mask = (ctx != pad_index) & (ctx >= 0)
    w = np.where(mask, alpha, 0.0)
    sums = w.sum(axis=1, keepdims=True)
    nonzero = sums[:, 0] > 0
    w[nonzero] /= sums[nonzero]
    out = np.zeros((ctx.shape[0], vocab_size))
    rows = np.repeat(np.arange(ctx.shape[0]), ctx.shape[1])
    cols = np.where(mask, ctx, 0).ravel()
    np.add.at(out, (rows, cols), w.ravel())
    return out


def total_attention(seq: Sequence, attention: AttentionVector, vocab_size: int,
                    pad_index: int) -> np.ndarray:
    """Vector of total attention for one sequence (length = vocab size)."""
    if len(attention.weights) != len(seq.context):
        raise ValidationError("attention length must equal the context length")
    return total_attention_batch(np.asarray([seq.context]), attention.weights[None, :],
                                 vocab_size, pad_index)[0]


def save_checkpoint(params: ModelParams, rules: list[str], path) -> None:
    """Versioned model checkpoint; loading reproduces predictions exactly."""
    arrays = {f"weight_{k}": v for k, v in params.weights.items()}
    np.savez(path, format_version=np.array([1]),
             hidden_nodes=np.array([params.hidden_nodes]),
             vocab_size=np.array([params.vocab_size]),
             seed=np.array([params.seed]),
             rules=np.array(rules, dtype=object) if rules else np.array([], dtype=object),
             **arrays)


def load_checkpoint(path) -> tuple[ModelParams, list[str]]:
    with np.load(path, allow_pickle=True) as data:
        version = int(data["format_version"][0])
        if version != 1:
            raise ValidationError(f"unsupported checkpoint version {version}")
        weights = {k[len("weight_"):]: data[k] for k in data.files if k.startswith("weight_")}
        params = ModelParams(hidden_nodes=int(data["hidden_nodes"][0]),
                             vocab_size=int(data["vocab_size"][0]),
                             seed=int(data["seed"][0]), weights=weights)
        params.validate()
        rules = [str(r) for r in data["rules"]]
    return params, rules
