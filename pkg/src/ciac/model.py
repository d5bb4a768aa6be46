"""Encoder-only transformer over kinematic windows, trained by hand.

The classifier consumes a window of 60 time steps x 28 features (linear
velocity, angular velocity and gripper angle for each of the four devices)
and outputs a probability over the five gesture classes. Two encoder blocks
(multi-head self-attention + feed-forward, post-norm residuals) feed a mean
pool over time, two 64-unit dense layers and a softmax head.

Backpropagation is written out explicitly; there is no autodiff dependency.
Every gradient path is validated against central finite differences in the
test suite. Everything runs in float64, which at this desk scale is both
fast enough and what makes the gradient checks tight.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .gestures import N_CLASSES

WINDOW_LEN = 60
N_FEATURES = 28


@dataclass(frozen=True)
class ModelConfig:
    window: int = WINDOW_LEN
    features: int = N_FEATURES
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 0            # 0 means the conventional 4 * d_model
    n_blocks: int = 2
    dense_units: int = 64
    n_classes: int = N_CLASSES

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("head count must divide d_model")
        if self.d_ff == 0:
            object.__setattr__(self, "d_ff", 4 * self.d_model)
        for name in ("window", "features", "d_model", "n_heads", "d_ff",
                     "n_blocks", "dense_units", "n_classes"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    dropout: float = 0.1
    d_model: int = 64
    n_heads: int = 4
    dense_units: int = 64

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.epochs < 0:
            raise ValueError("learning rate and batch size must be positive, epochs >= 0")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError("dropout must lie in [0, 1)")
        if self.d_model % self.n_heads != 0:
            raise ValueError("head count must divide d_model")


def sinusoidal_positions(window: int, d_model: int) -> np.ndarray:
    """Fixed sine/cosine positional table, (window, d_model)."""
    pos = np.arange(window)[:, None]
    i = np.arange(d_model)[None, :]
    angles = pos / np.power(10000.0, (2 * (i // 2)) / d_model)
    enc = np.zeros((window, d_model))
    enc[:, 0::2] = np.sin(angles[:, 0::2])
    enc[:, 1::2] = np.cos(angles[:, 1::2])
    return enc


class ModelParams:
    """Named parameter arrays plus the (untrained) positional table."""

    def __init__(self, config: ModelConfig, arrays: dict[str, np.ndarray],
                 pos_enc: np.ndarray):
        self.config = config
        self.arrays = arrays
        self.pos_enc = pos_enc
        self._validate()

    def _validate(self):
        expected = param_shapes(self.config)
        if set(self.arrays) != set(expected):
            missing = set(expected) ^ set(self.arrays)
            raise ValueError(f"parameter name mismatch: {sorted(missing)}")
        for name, shape in expected.items():
            a = self.arrays[name]
            if a.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {a.shape}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name}: non-finite entries")
        if self.pos_enc.shape != (self.config.window, self.config.d_model):
            raise ValueError("positional table shape mismatch")

    def n_parameters(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.arrays.items()},
                           self.pos_enc.copy())

    def names(self) -> list[str]:
        return sorted(self.arrays)


def param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    d, ff, u = cfg.d_model, cfg.d_ff, cfg.dense_units
    shapes = {
        "embed.w": (cfg.features, d), "embed.b": (d,),
        "dense1.w": (d, u), "dense1.b": (u,),
        "dense2.w": (u, u), "dense2.b": (u,),
        "head.w": (u, cfg.n_classes), "head.b": (cfg.n_classes,),
    }
    for b in range(cfg.n_blocks):
        p = f"block{b}."
        for proj in ("wq", "wk", "wv", "wo"):
            shapes[p + f"attn.{proj}"] = (d, d)
        for proj in ("bq", "bk", "bv", "bo"):
            shapes[p + f"attn.{proj}"] = (d,)
        shapes[p + "ln1.g"] = (d,)
        shapes[p + "ln1.b"] = (d,)
        shapes[p + "ffn.w1"] = (d, ff)
        shapes[p + "ffn.b1"] = (ff,)
        shapes[p + "ffn.w2"] = (ff, d)
        shapes[p + "ffn.b2"] = (d,)
        shapes[p + "ln2.g"] = (d,)
        shapes[p + "ln2.b"] = (d,)
    return shapes


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> ModelParams:
    arrays = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".g"):
            arrays[name] = np.ones(shape)
        elif len(shape) == 1:
            arrays[name] = np.zeros(shape)
        else:
            fan_in, fan_out = shape
            arrays[name] = rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), shape)
    return ModelParams(cfg, arrays, sinusoidal_positions(cfg.window, cfg.d_model))


# --- forward / backward -----------------------------------------------------

_LN_EPS = 1e-6


def _layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (x - mu) * inv
    return g * xhat + b, (xhat, inv, g)


def _layer_norm_backward(dy, cache):
    xhat, inv, g = cache
    dxhat = dy * g
    dg = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    db = dy.sum(axis=tuple(range(dy.ndim - 1)))
    m = dxhat.mean(axis=-1, keepdims=True)
    mx = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - m - xhat * mx)
    return dx, dg, db


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params: ModelParams, windows: np.ndarray,
            dropout: float = 0.0, rng: np.random.Generator | None = None,
            with_cache: bool = False):
    """Class probabilities for a batch of windows (B, T, F) or one (T, F).

    Deterministic when dropout is zero. Output rows sum to one.
    """
    cfg = params.config
    x = np.asarray(windows, dtype=float)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.shape[1:] != (cfg.window, cfg.features):
        raise ValueError(
            f"window shape {x.shape[1:]} does not match model "
            f"({cfg.window}, {cfg.features})")
    if not np.all(np.isfinite(x)):
        raise ValueError("window contains non-finite values")
    a = params.arrays
    cache: dict = {"x": x, "drop": {}}
    use_dropout = dropout > 0.0 and rng is not None

    def dropmask(name, shape):
        if not use_dropout:
            return None
        mask = (rng.random(shape) >= dropout) / (1.0 - dropout)
        cache["drop"][name] = mask
        return mask

    h = x @ a["embed.w"] + a["embed.b"] + params.pos_enc
    B, T, d = h.shape
    H = cfg.n_heads
    dk = d // H
    scale = 1.0 / np.sqrt(dk)

    for bi in range(cfg.n_blocks):
        p = f"block{bi}."
        c: dict = {"h_in": h}
        q = h @ a[p + "attn.wq"] + a[p + "attn.bq"]
        k = h @ a[p + "attn.wk"] + a[p + "attn.bk"]
        v = h @ a[p + "attn.wv"] + a[p + "attn.bv"]
        # (B, T, d) -> (B, H, T, dk)
        qh = q.reshape(B, T, H, dk).transpose(0, 2, 1, 3)
        kh = k.reshape(B, T, H, dk).transpose(0, 2, 1, 3)
        vh = v.reshape(B, T, H, dk).transpose(0, 2, 1, 3)
        scores = (qh @ kh.transpose(0, 1, 3, 2)) * scale
        attn = _softmax(scores)          # full bidirectional attention, no mask
        ctx = attn @ vh                  # (B, H, T, dk)
        ctx_m = ctx.transpose(0, 2, 1, 3).reshape(B, T, d)
        out = ctx_m @ a[p + "attn.wo"] + a[p + "attn.bo"]
        mask = dropmask(p + "attn", out.shape)
        if mask is not None:
            out = out * mask
        c.update(qh=qh, kh=kh, vh=vh, attn=attn, ctx_m=ctx_m)
        h1, c["ln1"] = _layer_norm(h + out, a[p + "ln1.g"], a[p + "ln1.b"])

        z1 = h1 @ a[p + "ffn.w1"] + a[p + "ffn.b1"]
        r1 = np.maximum(z1, 0.0)
        f = r1 @ a[p + "ffn.w2"] + a[p + "ffn.b2"]
        mask = dropmask(p + "ffn", f.shape)
        if mask is not None:
            f = f * mask
        c.update(h1=h1, z1=z1, r1=r1)
        h, c["ln2"] = _layer_norm(h1 + f, a[p + "ln2.g"], a[p + "ln2.b"])
        cache[f"block{bi}"] = c

    pooled = h.mean(axis=1)
    d1 = np.maximum(pooled @ a["dense1.w"] + a["dense1.b"], 0.0)
    d2 = np.maximum(d1 @ a["dense2.w"] + a["dense2.b"], 0.0)
    logits = d2 @ a["head.w"] + a["head.b"]
    probs = _softmax(logits)
    cache.update(h_final=h, pooled=pooled, d1=d1, d2=d2, logits=logits, probs=probs)

    result = probs[0] if single else probs
    if with_cache:
        return result, cache
    return result


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood; raises on non-finite results."""
    probs = np.atleast_2d(probs)
    idx = np.arange(len(probs))
    with np.errstate(divide="ignore"):
        logp = np.log(probs[idx, labels])
    loss = float(-logp.mean())
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite cross-entropy loss")
    return loss


def loss_and_gradients(params: ModelParams, windows: np.ndarray, labels: np.ndarray,
                       dropout: float = 0.0, rng: np.random.Generator | None = None):
    """Mean cross-entropy over the batch and gradients for every array."""
    labels = np.asarray(labels, dtype=int)
    if labels.ndim != 1 or len(labels) == 0:
        raise ValueError("labels must be a non-empty 1-D integer array")
    probs, cache = forward(params, windows, dropout=dropout, rng=rng, with_cache=True)
    probs = np.atleast_2d(probs)
    loss = cross_entropy(probs, labels)

    cfg = params.config
    a = params.arrays
    g = {name: np.zeros_like(arr) for name, arr in a.items()}
    B = len(labels)
    T, d = cfg.window, cfg.d_model
    H = cfg.n_heads
    dk = d // H
    scale = 1.0 / np.sqrt(dk)

    dlogits = probs.copy()
    dlogits[np.arange(B), labels] -= 1.0
    dlogits /= B

    g["head.w"] += cache["d2"].T @ dlogits
    g["head.b"] += dlogits.sum(axis=0)
    dd2 = dlogits @ a["head.w"].T
    dd2 *= cache["d2"] > 0
    g["dense2.w"] += cache["d1"].T @ dd2
    g["dense2.b"] += dd2.sum(axis=0)
    dd1 = dd2 @ a["dense2.w"].T
    dd1 *= cache["d1"] > 0
    g["dense1.w"] += cache["pooled"].T @ dd1
    g["dense1.b"] += dd1.sum(axis=0)
    dpooled = dd1 @ a["dense1.w"].T
    dh = np.broadcast_to(dpooled[:, None, :] / T, (B, T, d)).copy()

    for bi in reversed(range(cfg.n_blocks)):
        p = f"block{bi}."
        c = cache[f"block{bi}"]
        dsum2, dg2, db2 = _layer_norm_backward(dh, c["ln2"])
        g[p + "ln2.g"] += dg2
        g[p + "ln2.b"] += db2
        dh1 = dsum2.copy()
        df = dsum2
        mask = cache["drop"].get(p + "ffn")
        if mask is not None:
            df = df * mask
        g[p + "ffn.w2"] += np.einsum("btf,btd->fd", c["r1"], df)
        g[p + "ffn.b2"] += df.sum(axis=(0, 1))
        dr1 = df @ a[p + "ffn.w2"].T
        dr1 *= c["z1"] > 0
        g[p + "ffn.w1"] += np.einsum("btd,btf->df", c["h1"], dr1)
        g[p + "ffn.b1"] += dr1.sum(axis=(0, 1))
        dh1 += dr1 @ a[p + "ffn.w1"].T

        dsum1, dg1, db1 = _layer_norm_backward(dh1, c["ln1"])
        g[p + "ln1.g"] += dg1
        g[p + "ln1.b"] += db1
        dh_res = dsum1.copy()
        dout = dsum1
        mask = cache["drop"].get(p + "attn")
        if mask is not None:
            dout = dout * mask
        g[p + "attn.wo"] += np.einsum("btd,bte->de", c["ctx_m"], dout)
        g[p + "attn.bo"] += dout.sum(axis=(0, 1))
        dctx_m = dout @ a[p + "attn.wo"].T
        dctx = dctx_m.reshape(B, T, H, dk).transpose(0, 2, 1, 3)
        dattn = dctx @ c["vh"].transpose(0, 1, 3, 2)
        dvh = c["attn"].transpose(0, 1, 3, 2) @ dctx
        # softmax over keys
        ds = c["attn"] * (dattn - (dattn * c["attn"]).sum(axis=-1, keepdims=True))
        ds *= scale
        dqh = ds @ c["kh"]
        dkh = ds.transpose(0, 1, 3, 2) @ c["qh"]
        dq = dqh.transpose(0, 2, 1, 3).reshape(B, T, d)
        dk_ = dkh.transpose(0, 2, 1, 3).reshape(B, T, d)
        dv = dvh.transpose(0, 2, 1, 3).reshape(B, T, d)
        h_in = c["h_in"]
        for name, dz in (("wq", dq), ("wk", dk_), ("wv", dv)):
            g[p + f"attn.{name}"] += np.einsum("btd,bte->de", h_in, dz)
        g[p + "attn.bq"] += dq.sum(axis=(0, 1))
        g[p + "attn.bk"] += dk_.sum(axis=(0, 1))
        g[p + "attn.bv"] += dv.sum(axis=(0, 1))
        dh_res += dq @ a[p + "attn.wq"].T
        dh_res += dk_ @ a[p + "attn.wk"].T
        dh_res += dv @ a[p + "attn.wv"].T
        dh = dh_res

    g["embed.w"] += np.einsum("btf,btd->fd", cache["x"], dh)
    g["embed.b"] += dh.sum(axis=(0, 1))
    return loss, g


# --- training ----------------------------------------------------------------


@dataclass(frozen=True)
class Standardizer:
    """Per-feature affine normalization fitted on the training fold only."""

    mean: np.ndarray
    std: np.ndarray

    @staticmethod
    def fit(windows: np.ndarray) -> "Standardizer":
        flat = windows.reshape(-1, windows.shape[-1])
        mean = flat.mean(axis=0)
        std = flat.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)
        return Standardizer(mean, std)

    @staticmethod
    def identity(n_features: int) -> "Standardizer":
        return Standardizer(np.zeros(n_features), np.ones(n_features))

    def apply(self, windows: np.ndarray) -> np.ndarray:
        return (np.asarray(windows, dtype=float) - self.mean) / self.std


@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float


@dataclass
class TrainedModel:
    params: ModelParams
    standardizer: Standardizer
    train_config: TrainConfig
    history: list[EpochStats] = field(default_factory=list)

    def predict_proba(self, windows: np.ndarray) -> np.ndarray:
        return forward(self.params, self.standardizer.apply(windows))

    def predict(self, windows: np.ndarray) -> np.ndarray:
        probs = np.atleast_2d(self.predict_proba(windows))
        return probs.argmax(axis=1)


class AdamState:
    def __init__(self, params: ModelParams):
        self.m = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.t = 0

    def step(self, params: ModelParams, grads: dict, cfg: TrainConfig):
        self.t += 1
        b1, b2 = cfg.beta1, cfg.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, arr in params.arrays.items():
            gr = grads[name]
            self.m[name] = b1 * self.m[name] + (1 - b1) * gr
            self.v[name] = b2 * self.v[name] + (1 - b2) * gr * gr
            mhat = self.m[name] / bias1
            vhat = self.v[name] / bias2
            arr -= cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.adam_eps)


def train(config: TrainConfig, windows: np.ndarray, labels: np.ndarray,
          model_config: ModelConfig | None = None) -> TrainedModel:
    """Fit the classifier; deterministic for a fixed seed.

    The standardizer is fitted on this data only, so held-out folds never
    leak into normalization statistics.
    """
    windows = np.asarray(windows, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if len(windows) == 0:
        raise ValueError("training dataset is empty")
    if len(np.unique(labels)) < 2:
        raise ValueError("training dataset needs at least two classes")
    if model_config is None:
        model_config = ModelConfig(
            window=windows.shape[1], features=windows.shape[2],
            d_model=config.d_model, n_heads=config.n_heads,
            dense_units=config.dense_units)
    rng = np.random.default_rng(config.seed)
    params = init_params(model_config, rng)
    std = Standardizer.fit(windows)
    x = std.apply(windows)
    adam = AdamState(params)
    history: list[EpochStats] = []
    n = len(x)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = loss_and_gradients(params, x[idx], labels[idx],
                                             dropout=config.dropout, rng=rng)
            adam.step(params, grads, config)
            losses.append(loss * len(idx))
        preds = _predict_in_batches(params, x)
        acc = float((preds == labels).mean())
        history.append(EpochStats(epoch, float(np.sum(losses) / n), acc))
    return TrainedModel(params, std, config, history)


def _predict_in_batches(params: ModelParams, x: np.ndarray,
                        batch: int = 256) -> np.ndarray:
    out = []
    for start in range(0, len(x), batch):
        out.append(forward(params, x[start:start + batch]).argmax(axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=int)


# --- recording-level k-fold ---------------------------------------------------


def kfold_evaluate(config: TrainConfig, windows: np.ndarray, labels: np.ndarray,
                   recording_ids, k: int = 5, train_fn=None):
    """Cross-validate with folds split by recording, never by row.

    Returns (per-fold confusion matrices, aggregate confusion matrix).
    `train_fn(config, windows, labels) -> predict(windows) -> labels` can
    replace real training, e.g. with a stub classifier.
    """
    if k < 2:
        raise ValueError("need at least two folds")
    recording_ids = np.asarray(recording_ids)
    unique = sorted(set(recording_ids.tolist()))
    if len(unique) < k:
        raise ValueError(f"{len(unique)} recordings cannot fill {k} folds")
    if train_fn is None:
        def train_fn(cfg, w, y):
            return train(cfg, w, y).predict

    folds = [list(chunk) for chunk in np.array_split(unique, k)]
    n_classes = N_CLASSES
    per_fold = []
    for fold_recs in folds:
        test_mask = np.isin(recording_ids, fold_recs)
        predict = train_fn(config, windows[~test_mask], labels[~test_mask])
        preds = np.asarray(predict(windows[test_mask]), dtype=int)
        conf = np.zeros((n_classes, n_classes), dtype=int)
        for t, p in zip(labels[test_mask], preds):
            conf[t, p] += 1
        per_fold.append(conf)
    return per_fold, np.sum(per_fold, axis=0)


def accuracy_from_confusion(conf: np.ndarray) -> float:
    total = conf.sum()
    return float(np.trace(conf) / total) if total else 0.0


# --- checkpoint I/O -----------------------------------------------------------

CHECKPOINT_FORMAT = "ciac-model"
CHECKPOINT_VERSION = 1


def _encode(a: np.ndarray) -> dict:
    return {"shape": list(a.shape),
            "data": base64.b64encode(np.ascontiguousarray(a, dtype=np.float64).tobytes()).decode()}


def _decode(entry: dict) -> np.ndarray:
    a = np.frombuffer(base64.b64decode(entry["data"]), dtype=np.float64)
    return a.reshape(entry["shape"]).copy()


def save_model(path, model: TrainedModel) -> None:
    cfg = model.params.config
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_config": {k: getattr(cfg, k) for k in (
            "window", "features", "d_model", "n_heads", "d_ff", "n_blocks",
            "dense_units", "n_classes")},
        "train_config": {k: getattr(model.train_config, k) for k in (
            "learning_rate", "batch_size", "epochs", "beta1", "beta2",
            "adam_eps", "seed", "dropout", "d_model", "n_heads", "dense_units")},
        "standardizer": {"mean": _encode(model.standardizer.mean),
                         "std": _encode(model.standardizer.std)},
        "arrays": {name: _encode(a) for name, a in model.params.arrays.items()},
        "history": [{"epoch": h.epoch, "loss": h.loss, "accuracy": h.accuracy}
                    for h in model.history],
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_model(path) -> TrainedModel:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a model checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    cfg = ModelConfig(**doc["model_config"])
    arrays = {name: _decode(entry) for name, entry in doc["arrays"].items()}
    params = ModelParams(cfg, arrays, sinusoidal_positions(cfg.window, cfg.d_model))
    std = Standardizer(_decode(doc["standardizer"]["mean"]),
                       _decode(doc["standardizer"]["std"]))
    tc = TrainConfig(**doc["train_config"])
    history = [EpochStats(**h) for h in doc.get("history", [])]
    return TrainedModel(params, std, tc, history)
