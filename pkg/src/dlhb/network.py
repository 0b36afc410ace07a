"""Ten-layer convolutional regression network with from-scratch backprop.

Layer stack (input -> output):

    input (rows x cols x 3)
    conv 3x3 "same" -> batchnorm -> ReLU
    conv 3x3 "same" -> batchnorm -> ReLU
    flatten -> fc -> ReLU -> dropout(p)
    fc -> ReLU -> dropout(p)
    linear regression head

Training math is float64 throughout; model files store float32, and a
trained model's weights are rounded through float32 so save/load round
trips reproduce its outputs bit-for-bit.
"""

import hashlib
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .beamforming import HybridBeamformer
from .channel import FrequencyChannel
from .dataset import (
    BeamformerDims,
    Dataset,
    FeatureTensor,
    FormatError,
    build_features,
    reconstruct_beamformers,
)

KERNEL = 3
BN_EPS = 1e-5
BN_MOMENTUM = 0.9  # running <- 0.9 running + 0.1 batch

MODEL_MAGIC = b"DLHM"
MODEL_VERSION = 1

PARAM_KEYS = (
    "conv1_w", "conv1_b", "bn1_gamma", "bn1_beta",
    "conv2_w", "conv2_b", "bn2_gamma", "bn2_beta",
    "fc1_w", "fc1_b", "fc2_w", "fc2_b", "out_w", "out_b",
)
RUNNING_KEYS = ("bn1_mean", "bn1_var", "bn2_mean", "bn2_var")


@dataclass(frozen=True)
class CnnConfig:
    input_shape: tuple        # (rows, cols, 3)
    output_len: int
    conv_filters: int = 16    # paper-scale 512
    fc_units: int = 128       # paper-scale 1024
    dropout_p: float = 0.5

    def __post_init__(self):
        if len(self.input_shape) != 3 or self.input_shape[2] != 3:
            raise ValueError("input_shape must be (rows, cols, 3)")
        if min(self.input_shape[0], self.input_shape[1]) < 1:
            raise ValueError("input rows/cols must be >= 1")
        if self.output_len < 1 or self.conv_filters < 1 or self.fc_units < 1:
            raise ValueError("layer sizes must be >= 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")

    @property
    def flat_dim(self) -> int:
        return self.input_shape[0] * self.input_shape[1] * self.conv_filters


@dataclass
class CnnModel:
    config: CnnConfig
    params: dict
    running: dict
    dims: BeamformerDims | None = None


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.005
    momentum: float = 0.9
    batch: int = 128
    epochs: int = 100
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.batch < 1 or self.epochs < 1:
            raise ValueError("batch and epochs must be >= 1")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in (0, 1)")


@dataclass
class TrainReport:
    train_losses: list = field(default_factory=list)
    val_losses: list = field(default_factory=list)
    wall_time: float = 0.0
    checksum: str = ""
    best_epoch: int = 0  # 1-based epoch whose weights were kept


def _expected_shapes(cfg: CnnConfig) -> dict:
    f, u = cfg.conv_filters, cfg.fc_units
    shapes = {
        "conv1_w": (KERNEL, KERNEL, 3, f), "conv1_b": (f,),
        "bn1_gamma": (f,), "bn1_beta": (f,),
        "conv2_w": (KERNEL, KERNEL, f, f), "conv2_b": (f,),
        "bn2_gamma": (f,), "bn2_beta": (f,),
        "fc1_w": (cfg.flat_dim, u), "fc1_b": (u,),
        "fc2_w": (u, u), "fc2_b": (u,),
        "out_w": (u, cfg.output_len), "out_b": (cfg.output_len,),
    }
    for key in RUNNING_KEYS:
        shapes[key] = (f,)
    return shapes


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_model(cfg: CnnConfig, dims: BeamformerDims | None = None, seed: int = 0) -> CnnModel:
    """Glorot-uniform weights, zero biases, unit BN scales, fresh running stats."""
    rng = np.random.default_rng(seed)
    f, u = cfg.conv_filters, cfg.fc_units
    k2 = KERNEL * KERNEL
    params = {
        "conv1_w": _glorot(rng, (KERNEL, KERNEL, 3, f), k2 * 3, k2 * f),
        "conv1_b": np.zeros(f),
        "bn1_gamma": np.ones(f), "bn1_beta": np.zeros(f),
        "conv2_w": _glorot(rng, (KERNEL, KERNEL, f, f), k2 * f, k2 * f),
        "conv2_b": np.zeros(f),
        "bn2_gamma": np.ones(f), "bn2_beta": np.zeros(f),
        "fc1_w": _glorot(rng, (cfg.flat_dim, u), cfg.flat_dim, u),
        "fc1_b": np.zeros(u),
        "fc2_w": _glorot(rng, (u, u), u, u), "fc2_b": np.zeros(u),
        "out_w": _glorot(rng, (u, cfg.output_len), u, cfg.output_len),
        "out_b": np.zeros(cfg.output_len),
    }
    running = {key: np.zeros(f) if "mean" in key else np.ones(f) for key in RUNNING_KEYS}
    return CnnModel(config=cfg, params=params, running=running, dims=dims)


def _conv_forward(x, w, b):
    n, h, wd, c = x.shape
    f = w.shape[-1]
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.empty((n, h, wd, KERNEL, KERNEL, c), dtype=x.dtype)
    for ki in range(KERNEL):
        for kj in range(KERNEL):
            cols[:, :, :, ki, kj, :] = xp[:, ki : ki + h, kj : kj + wd, :]
    flat = cols.reshape(n * h * wd, KERNEL * KERNEL * c)
    out = flat @ w.reshape(KERNEL * KERNEL * c, f) + b
    return out.reshape(n, h, wd, f), cols


def _conv_infer(x, w, b):
    # cache-free variant: nine accumulated matmuls, no column matrix
    n, h, wd, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    out = np.zeros((n, h, wd, w.shape[-1]), dtype=x.dtype) + b
    for ki in range(KERNEL):
        for kj in range(KERNEL):
            out += xp[:, ki : ki + h, kj : kj + wd, :] @ w[ki, kj]
    return out


def _conv_backward(dout, cols, w, x_shape):
    n, h, wd, c = x_shape
    f = w.shape[-1]
    dflat = dout.reshape(n * h * wd, f)
    flat_cols = cols.reshape(n * h * wd, KERNEL * KERNEL * c)
    dw = (flat_cols.T @ dflat).reshape(KERNEL, KERNEL, c, f)
    db = dflat.sum(axis=0)
    dcols = (dflat @ w.reshape(KERNEL * KERNEL * c, f).T).reshape(
        n, h, wd, KERNEL, KERNEL, c
    )
    dxp = np.zeros((n, h + 2, wd + 2, c))
    for ki in range(KERNEL):
        for kj in range(KERNEL):
            dxp[:, ki : ki + h, kj : kj + wd, :] += dcols[:, :, :, ki, kj, :]
    return dxp[:, 1 : h + 1, 1 : wd + 1, :], dw, db


def _bn_train(x, gamma, beta):
    axes = tuple(range(x.ndim - 1))
    mean = x.mean(axis=axes)
    var = x.var(axis=axes)
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean) * inv
    return gamma * xhat + beta, (xhat, inv, gamma), mean, var


def _bn_infer(x, gamma, beta, rmean, rvar):
    return gamma * (x - rmean) / np.sqrt(rvar + BN_EPS) + beta


def _bn_backward(dout, cache):
    xhat, inv, gamma = cache
    axes = tuple(range(dout.ndim - 1))
    n = dout.size // dout.shape[-1]
    dgamma = np.sum(dout * xhat, axis=axes)
    dbeta = np.sum(dout, axis=axes)
    dx = (gamma * inv / n) * (n * dout - dbeta - xhat * dgamma)
    return dx, dgamma, dbeta


def _forward_batch(model: CnnModel, x, train: bool, rng=None, keep=False):
    """Whole-network pass on a batch (n, rows, cols, 3) of float64.

    Returns (out, cache); cache is None unless keep=True.  Train mode uses
    batch statistics and draws dropout masks from rng; the caller owns any
    running-stat update (cache carries the batch moments).
    """
    p = model.params
    cfg = model.config
    drop = cfg.dropout_p
    if train and drop > 0.0 and rng is None:
        raise ValueError("train-mode forward with dropout needs an rng")
    cache = {} if keep else None

    if keep:
        a1, cols1 = _conv_forward(x, p["conv1_w"], p["conv1_b"])
    else:
        a1, cols1 = _conv_infer(x, p["conv1_w"], p["conv1_b"]), None
    if train:
        z1, bn1c, m1, v1 = _bn_train(a1, p["bn1_gamma"], p["bn1_beta"])
    else:
        z1 = _bn_infer(a1, p["bn1_gamma"], p["bn1_beta"],
                       model.running["bn1_mean"], model.running["bn1_var"])
    r1 = np.maximum(z1, 0.0)

    if keep:
        a2, cols2 = _conv_forward(r1, p["conv2_w"], p["conv2_b"])
    else:
        a2, cols2 = _conv_infer(r1, p["conv2_w"], p["conv2_b"]), None
    if train:
        z2, bn2c, m2, v2 = _bn_train(a2, p["bn2_gamma"], p["bn2_beta"])
    else:
        z2 = _bn_infer(a2, p["bn2_gamma"], p["bn2_beta"],
                       model.running["bn2_mean"], model.running["bn2_var"])
    r2 = np.maximum(z2, 0.0)

    flat = r2.reshape(x.shape[0], -1)
    h1 = flat @ p["fc1_w"] + p["fc1_b"]
    g1 = np.maximum(h1, 0.0)
    if train and drop > 0.0:
        mask1 = rng.random(g1.shape) >= drop
        d1 = g1 * mask1 / (1.0 - drop)
    else:
        mask1 = None
        d1 = g1

    h2 = d1 @ p["fc2_w"] + p["fc2_b"]
    g2 = np.maximum(h2, 0.0)
    if train and drop > 0.0:
        mask2 = rng.random(g2.shape) >= drop
        d2 = g2 * mask2 / (1.0 - drop)
    else:
        mask2 = None
        d2 = g2

    out = d2 @ p["out_w"] + p["out_b"]

    if keep:
        cache.update(
            x=x, cols1=cols1, a1=a1, z1=z1, r1=r1,
            cols2=cols2, a2=a2, z2=z2, r2=r2, flat=flat,
            h1=h1, g1=g1, mask1=mask1, d1=d1,
            h2=h2, g2=g2, mask2=mask2, d2=d2,
            train=train,
        )
        if train:
            cache.update(bn1c=bn1c, bn2c=bn2c,
                         bn_stats={"bn1_mean": m1, "bn1_var": v1,
                                   "bn2_mean": m2, "bn2_var": v2})
    return out, cache


def _backward_batch(model: CnnModel, cache, dout):
    """Gradients of every parameter given d(loss)/d(out)."""
    if not cache.get("train", False):
        raise ValueError("backward needs artifacts from a train-mode forward pass")
    p = model.params
    drop = model.config.dropout_p
    grads = {}

    grads["out_w"] = cache["d2"].T @ dout
    grads["out_b"] = dout.sum(axis=0)
    dd2 = dout @ p["out_w"].T
    if cache["mask2"] is not None:
        dd2 = dd2 * cache["mask2"] / (1.0 - drop)
    dh2 = dd2 * (cache["h2"] > 0.0)

    grads["fc2_w"] = cache["d1"].T @ dh2
    grads["fc2_b"] = dh2.sum(axis=0)
    dd1 = dh2 @ p["fc2_w"].T
    if cache["mask1"] is not None:
        dd1 = dd1 * cache["mask1"] / (1.0 - drop)
    dh1 = dd1 * (cache["h1"] > 0.0)

    grads["fc1_w"] = cache["flat"].T @ dh1
    grads["fc1_b"] = dh1.sum(axis=0)
    dflat = dh1 @ p["fc1_w"].T
    dr2 = dflat.reshape(cache["r2"].shape)

    dz2 = dr2 * (cache["z2"] > 0.0)
    da2, grads["bn2_gamma"], grads["bn2_beta"] = _bn_backward(dz2, cache["bn2c"])
    dr1, grads["conv2_w"], grads["conv2_b"] = _conv_backward(
        da2, cache["cols2"], p["conv2_w"], cache["r1"].shape
    )

    dz1 = dr1 * (cache["z1"] > 0.0)
    da1, grads["bn1_gamma"], grads["bn1_beta"] = _bn_backward(dz1, cache["bn1c"])
    _, grads["conv1_w"], grads["conv1_b"] = _conv_backward(
        da1, cache["cols1"], p["conv1_w"], cache["x"].shape
    )
    return grads


def _as_input(x) -> np.ndarray:
    data = getattr(x, "data", x)
    return np.asarray(data, dtype=np.float64)


def forward(model: CnnModel, x, mode: str = "infer", rng=None) -> np.ndarray:
    """Single-sample network output; mode is "infer" or "train".

    Infer mode is deterministic (running BN stats, dropout off); train mode
    uses the sample's own batch statistics and draws dropout masks from rng.
    """
    y, _ = forward_with_artifacts(model, x, mode=mode, rng=rng)
    return y


def forward_with_artifacts(model: CnnModel, x, mode: str = "infer", rng=None):
    """forward() that also returns the artifacts backward() consumes."""
    if mode not in ("infer", "train"):
        raise ValueError(f"unknown mode {mode!r}")
    arr = _as_input(x)
    if arr.shape != model.config.input_shape:
        raise ValueError(
            f"input shape {arr.shape} != configured {model.config.input_shape}"
        )
    train = mode == "train"
    out, cache = _forward_batch(model, arr[None], train=train, rng=rng, keep=train)
    if cache is not None:
        cache["input_ref"] = x
    return out[0], cache


def loss(pred, target) -> float:
    """Mean squared error between prediction and label."""
    pred = np.asarray(pred, dtype=np.float64)
    tgt = np.asarray(getattr(target, "data", target), dtype=np.float64)
    if pred.shape != tgt.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {tgt.shape}")
    diff = pred - tgt
    return float(np.mean(diff * diff))


def backward(model: CnnModel, x, target, artifacts, frozen=()) -> dict:
    """Parameter gradients of loss(forward(model, x), target).

    `artifacts` must come from forward_with_artifacts on the same x in train
    mode; anything else raises.  Keys listed in `frozen` get exactly-zero
    gradients (test hook).
    """
    if artifacts is None or artifacts.get("input_ref") is not x:
        raise ValueError("stale artifacts: not produced by a forward pass on this input")
    tgt = np.asarray(getattr(target, "data", target), dtype=np.float64)
    y = artifacts["d2"] @ model.params["out_w"] + model.params["out_b"]
    dout = 2.0 * (y - tgt[None]) / tgt.size
    grads = _backward_batch(model, artifacts, dout)
    for key in frozen:
        grads[key] = np.zeros_like(grads[key])
    return grads


def train(ds: Dataset, cfg: TrainConfig, net_cfg: CnnConfig):
    """SGD-with-momentum training; returns (CnnModel, TrainReport).

    Deterministic in cfg.seed: the split is the first ceil((1-val)T) of one
    seeded shuffle, training indices reshuffle each epoch, dropout masks are
    drawn in batch order.  The returned weights are those of the best
    validation epoch.  A one-sample dataset trains with the training set
    doubling as validation.
    """
    t0 = time.perf_counter()
    t_count = len(ds.samples)
    if t_count < 1:
        raise ValueError("dataset is empty")
    feats = np.stack([s[0].data for s in ds.samples]).astype(np.float64)
    labels = np.stack([s[1].data for s in ds.samples]).astype(np.float64)
    if feats.shape[1:] != net_cfg.input_shape or labels.shape[1] != net_cfg.output_len:
        raise ValueError("dataset sample shapes do not match the network config")

    rng = np.random.default_rng(cfg.seed)
    model = init_model(net_cfg, dims=ds.dims, seed=int(rng.integers(2**31 - 1)))
    perm = rng.permutation(t_count)
    n_train = int(np.ceil((1.0 - cfg.val_fraction) * t_count))
    train_idx, val_idx = perm[:n_train], perm[n_train:]
    if len(val_idx) == 0:
        val_idx = train_idx  # degenerate tiny dataset: validate on what we have
    batch = min(cfg.batch, n_train)

    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    report = TrainReport()
    best_val = np.inf
    best_state = None

    for epoch in range(1, cfg.epochs + 1):
        order = train_idx[rng.permutation(n_train)]
        epoch_loss = 0.0
        for start in range(0, n_train, batch):
            idx = order[start : start + batch]
            xb, zb = feats[idx], labels[idx]
            out, cache = _forward_batch(model, xb, train=True, rng=rng, keep=True)
            diff = out - zb
            batch_loss = float(np.mean(diff * diff))
            if not np.isfinite(batch_loss):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, batch {start // batch}"
                )
            epoch_loss += batch_loss * len(idx)
            for key, stat in cache["bn_stats"].items():
                model.running[key] = BN_MOMENTUM * model.running[key] + (1 - BN_MOMENTUM) * stat
            grads = _backward_batch(model, cache, 2.0 * diff / diff.size)
            for key in PARAM_KEYS:
                velocity[key] = cfg.momentum * velocity[key] - cfg.lr * grads[key]
                model.params[key] = model.params[key] + velocity[key]
        report.train_losses.append(epoch_loss / n_train)

        val_loss = 0.0
        for start in range(0, len(val_idx), 256):
            idx = val_idx[start : start + 256]
            out, _ = _forward_batch(model, feats[idx], train=False)
            val_loss += float(np.sum((out - labels[idx]) ** 2)) / labels.shape[1]
        val_loss /= len(val_idx)
        report.val_losses.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            report.best_epoch = epoch
            best_state = (
                {k: v.copy() for k, v in model.params.items()},
                {k: v.copy() for k, v in model.running.items()},
            )

    model.params, model.running = best_state
    report.wall_time = time.perf_counter() - t0
    report.checksum = hashlib.sha256(save_bytes(model)).hexdigest()
    return model, report


def predict_beamformers(model: CnnModel, fc: FrequencyChannel) -> HybridBeamformer:
    """Feed a channel through the network and rebuild feasible beamformers."""
    if model.dims is None:
        raise ValueError("model carries no beamformer dims; cannot predict")
    d = model.dims
    if (fc.n_subcarriers, fc.n_rx, fc.n_tx) != (d.n_subcarriers, d.n_rx, d.n_tx):
        raise ValueError(
            f"channel dims {(fc.n_subcarriers, fc.n_rx, fc.n_tx)} do not match "
            f"model dims {(d.n_subcarriers, d.n_rx, d.n_tx)}"
        )
    z = forward(model, build_features(fc), mode="infer")
    return reconstruct_beamformers(z, d)


def save_bytes(model: CnnModel) -> bytes:
    """Serialize to the little-endian DLHM format (float32 payload)."""
    cfg = model.config
    d = model.dims or BeamformerDims(0, 0, 0, 0, 0)
    shapes = _expected_shapes(cfg)
    head = [
        struct.pack(
            "<4sH11If",
            MODEL_MAGIC, MODEL_VERSION,
            d.n_tx, d.n_rx, d.n_rf, d.n_streams, d.n_subcarriers,
            cfg.input_shape[0], cfg.input_shape[1], cfg.input_shape[2],
            cfg.conv_filters, cfg.fc_units, cfg.output_len,
            cfg.dropout_p,
        )
    ]
    keys = PARAM_KEYS + RUNNING_KEYS
    head.append(struct.pack("<I", len(keys)))
    payload = []
    for key in keys:
        arr = model.params[key] if key in model.params else model.running[key]
        if arr.shape != shapes[key]:
            raise ValueError(f"tensor {key} has shape {arr.shape}, expected {shapes[key]}")
        head.append(struct.pack("<I", arr.ndim))
        head.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        payload.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(head) + b"".join(payload)


def save_model(model: CnnModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(save_bytes(model))


def load_model(path) -> CnnModel:
    """Read a DLHM file, verifying magic, version, shape table and length."""
    with open(path, "rb") as fh:
        raw = fh.read()
    fixed = struct.calcsize("<4sH11If")
    if len(raw) < fixed + 4:
        raise FormatError(f"model file too short ({len(raw)} bytes)")
    magic, version, *ints, drop = struct.unpack_from("<4sH11If", raw, 0)
    if magic != MODEL_MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0 (expected {MODEL_MAGIC!r})")
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}")
    n_tx, n_rx, n_rf, n_s, m_count, rows, cols, chans, filters, units, out_len = ints
    cfg = CnnConfig(
        input_shape=(rows, cols, chans), output_len=out_len,
        conv_filters=filters, fc_units=units, dropout_p=round(float(drop), 6),
    )
    dims = None
    if n_tx:
        dims = BeamformerDims(n_tx=n_tx, n_rx=n_rx, n_rf=n_rf, n_streams=n_s, n_subcarriers=m_count)
    shapes = _expected_shapes(cfg)
    keys = PARAM_KEYS + RUNNING_KEYS
    pos = fixed
    (count,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    if count != len(keys):
        raise FormatError(f"layer count {count} != expected {len(keys)}")
    read_shapes = []
    for key in keys:
        (ndim,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}I", raw, pos)
        pos += 4 * ndim
        if shape != shapes[key]:
            raise FormatError(f"tensor {key} has shape {shape}, expected {shapes[key]}")
        read_shapes.append(shape)
    expected = pos + 4 * sum(int(np.prod(s)) for s in read_shapes)
    if len(raw) != expected:
        raise FormatError(
            f"model file length {len(raw)} != expected {expected} "
            f"(truncated near offset {min(len(raw), expected)})"
        )
    params, running = {}, {}
    for key, shape in zip(keys, read_shapes):
        n_el = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f4", count=n_el, offset=pos).astype(np.float64)
        pos += 4 * n_el
        (params if key in PARAM_KEYS else running)[key] = arr.reshape(shape)
    return CnnModel(config=cfg, params=params, running=running, dims=dims)
