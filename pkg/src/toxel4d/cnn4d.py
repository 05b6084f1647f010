"""A small 4D convolutional network with hand-derived gradients.

Architecture: a stack of (4D convolution, ReLU, 2^4 max-pool) stages, a
flatten, and two fully connected layers, ending in four softmax heads that
classify the four Betti numbers (b0 in {0,1}; b1..b3 in 0..16, one output
neuron per value).

Convolutions use kernel 5^4 with padding 2 and stride 1, evaluated
spectrally: circular FFT correlation on the padded block is exact linear
correlation because the padded extent s+4 leaves no wrap-around for output
positions 0..s-1.  The backward pass applies the adjoint relations (full
convolution for the input gradient, correlation with the upstream signal
for the weight gradient) through the same transforms.  Everything runs in
float64; finite-difference tests pin each layer's gradients.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .betti import BettiVector
from .downscale import DownscaleMode, avgpool, downsample
from .errors import GridFormatError, LabelRangeError
from .generator import read_manifest
from .grid4 import read as read_grid
from .homology import AgreementReport, agreement
from .rotation import rotate90_data

_SPATIAL = (-4, -3, -2, -1)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class CNNConfig:
    input_size: int = 32
    conv_channels: tuple = (8, 16, 32, 64)
    kernel: int = 5
    padding: int = 2
    pool: int = 2
    fc_hidden: int = 256
    head_sizes: tuple = (2, 17, 17, 17)

    def __post_init__(self):
        if self.kernel != 2 * self.padding + 1:
            raise ValueError("kernel must equal 2*padding+1 so stages preserve extent")
        s = self.input_size
        for _ in self.conv_channels:
            if s % self.pool:
                raise ValueError(f"pooling does not divide spatial extent {s}")
            s //= self.pool
        if s < 1:
            raise ValueError("too many stages for this input size")
        if len(self.head_sizes) != 4 or any(h < 1 for h in self.head_sizes):
            raise ValueError("need four positive head sizes")

    @property
    def final_extent(self) -> int:
        return self.input_size // self.pool ** len(self.conv_channels)

    @property
    def flatten_len(self) -> int:
        return self.conv_channels[-1] * self.final_extent**4

    @property
    def total_outputs(self) -> int:
        return int(sum(self.head_sizes))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 192
    lr: float | None = None  # None: 1e-3 for stride input, 1e-4 for avgpool
    lr_drop_epochs: tuple = (160, 190)
    lr_drop_factor: float = 10.0
    split: tuple = (0.90, 0.05, 0.05)
    augment: bool = True
    seed: int = 0

    def __post_init__(self):
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError(f"split must sum to 1, got {self.split}")
        if any(e >= self.epochs for e in self.lr_drop_epochs):
            raise ValueError("lr drop epochs must precede the final epoch")

    def resolve_lr(self, mode: DownscaleMode) -> float:
        if self.lr is not None:
            return self.lr
        return 1e-3 if DownscaleMode(mode) is DownscaleMode.STRIDE else 1e-4


def proportional_drop_epochs(epochs: int, fractions=(0.8, 0.95)) -> tuple:
    """Drop points at the same relative positions as the 160/190-of-200 schedule,
    clamped inside the epoch range (short runs may collapse to one drop)."""
    drops = sorted({min(max(int(round(f * epochs)), 0), epochs - 1) for f in fractions})
    return tuple(drops)


def lr_schedule(epoch: int, base_lr: float, drop_epochs, factor: float = 10.0) -> float:
    """Base rate divided by ``factor`` once per drop epoch reached so far."""
    drops = sum(1 for e in drop_epochs if epoch >= e)
    return base_lr / factor**drops


# ---------------------------------------------------------------------------
# parameters and layers


class Parameter:
    """A float64 value array with a matching gradient slot."""

    __slots__ = ("value", "grad", "name")

    def __init__(self, value: np.ndarray, name: str = ""):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.name = name

    @property
    def shape(self):
        return self.value.shape


def _fan_in_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv4D:
    """4D cross-correlation, stride 1, same-size output (kernel 5, padding 2)."""

    def __init__(self, c_in: int, c_out: int, kernel: int = 5, padding: int = 2,
                 rng: np.random.Generator | None = None, name: str = "conv"):
        if kernel != 2 * padding + 1:
            raise ValueError("kernel must equal 2*padding+1")
        self.c_in = c_in
        self.c_out = c_out
        self.kernel = kernel
        self.padding = padding
        rng = rng or np.random.default_rng(0)
        fan_in = c_in * kernel**4
        self.w = Parameter(
            _fan_in_uniform(rng, (c_out, c_in) + (kernel,) * 4, fan_in), f"{name}.w"
        )
        self.b = Parameter(np.zeros(c_out), f"{name}.b")
        self._cache = None

    def params(self):
        return [self.w, self.b]

    def _spectra(self, x):
        s = x.shape[-1]
        L = s + 2 * self.padding
        x_pad = np.pad(
            x, ((0, 0), (0, 0)) + ((self.padding, self.padding),) * 4, mode="constant"
        )
        fft_shape = (L,) * 4
        X = np.fft.rfftn(x_pad, s=fft_shape, axes=_SPATIAL)
        W = np.fft.rfftn(self.w.value, s=fft_shape, axes=_SPATIAL)
        return X, W, L, s

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 6 or x.shape[1] != self.c_in:
            raise ValueError(f"expected (N,{self.c_in},s,s,s,s), got {x.shape}")
        X, W, L, s = self._spectra(x)
        Y = np.einsum("ni...,oi...->no...", X, W.conj())
        y = np.fft.irfftn(Y, s=(L,) * 4, axes=_SPATIAL)[..., :s, :s, :s, :s]
        y = y + self.b.value[None, :, None, None, None, None]
        self._cache = (X, W, L, s)
        return y

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        X, W, L, s = self._cache
        p = self.padding
        g_pad = np.zeros(upstream.shape[:2] + (L,) * 4)
        g_pad[..., :s, :s, :s, :s] = upstream
        G = np.fft.rfftn(g_pad, axes=_SPATIAL)
        # dL/dw[o,i,t] = sum_n corr(x_pad[n,i], g[n,o])[t], t in [0,kernel)
        GW = np.einsum("no...,ni...->oi...", G.conj(), X)
        k = self.kernel
        self.w.grad += np.fft.irfftn(GW, s=(L,) * 4, axes=_SPATIAL)[..., :k, :k, :k, :k]
        self.b.grad += upstream.sum(axis=(0, 2, 3, 4, 5))
        # dL/dx_pad[n,i,q] = sum_o conv(g[n,o], w[o,i])[q]; crop the padding ring
        GX = np.einsum("no...,oi...->ni...", G, W)
        gx_pad = np.fft.irfftn(GX, s=(L,) * 4, axes=_SPATIAL)
        return gx_pad[..., p : p + s, p : p + s, p : p + s, p : p + s]


class MaxPool4D:
    """Non-overlapping 2^4 max pooling; gradient routes to the argmax, ties to
    the first element in block scan order."""

    def __init__(self, factor: int = 2):
        self.factor = factor
        self._cache = None

    def params(self):
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        f = self.factor
        n, c, *spatial = x.shape
        if any(d % f for d in spatial):
            raise ValueError(f"pool factor {f} does not divide spatial extents {spatial}")
        s2 = [d // f for d in spatial]
        blocks = x.reshape(n, c, s2[0], f, s2[1], f, s2[2], f, s2[3], f)
        blocks = blocks.transpose(0, 1, 2, 4, 6, 8, 3, 5, 7, 9).reshape(
            n, c, *s2, f**4
        )
        idx = blocks.argmax(axis=-1)
        pooled = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
        self._cache = (idx, x.shape)
        return pooled

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        idx, shape = self._cache
        f = self.factor
        n, c, *spatial = shape
        s2 = [d // f for d in spatial]
        flat = np.zeros((n, c, *s2, f**4))
        np.put_along_axis(flat, idx[..., None], upstream[..., None], axis=-1)
        blocks = flat.reshape(n, c, *s2, f, f, f, f).transpose(0, 1, 2, 6, 3, 7, 4, 8, 5, 9)
        return blocks.reshape(shape)


class ReLU:
    def __init__(self):
        self._mask = None

    def params(self):
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0  # subgradient at 0 is taken as 0
        return np.where(self._mask, x, 0.0)

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        return np.where(self._mask, upstream, 0.0)


class Flatten:
    def __init__(self):
        self._shape = None

    def params(self):
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        return upstream.reshape(self._shape)


class Linear:
    def __init__(self, f_in: int, f_out: int, rng: np.random.Generator | None = None,
                 name: str = "linear"):
        rng = rng or np.random.default_rng(0)
        self.w = Parameter(_fan_in_uniform(rng, (f_out, f_in), f_in), f"{name}.w")
        self.b = Parameter(np.zeros(f_out), f"{name}.b")
        self._cache = None

    def params(self):
        return [self.w, self.b]

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._cache = x
        return x @ self.w.value.T + self.b.value

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        x = self._cache
        self.w.grad += upstream.T @ x
        self.b.grad += upstream.sum(axis=0)
        return upstream @ self.w.value


# ---------------------------------------------------------------------------
# multi-head cross-entropy


def multihead_loss(logits: list, targets: np.ndarray) -> tuple[float, list]:
    """Summed softmax cross-entropy over the four Betti heads, batch-averaged.

    ``targets`` is (N, 4) integer Betti values.  Values outside a head's
    class range raise LabelRangeError: clipping would silently corrupt labels.
    Returns the scalar loss and per-head logit gradients.
    """
    n = targets.shape[0]
    loss = 0.0
    grads = []
    for h, logit in enumerate(logits):
        t = targets[:, h]
        size = logit.shape[1]
        if t.min() < 0 or t.max() >= size:
            raise LabelRangeError(
                f"betti value {int(t.max())} outside head {h} range 0..{size - 1}"
            )
        shifted = logit - logit.max(axis=1, keepdims=True)
        logsumexp = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        logprob = shifted - logsumexp
        loss += -logprob[np.arange(n), t].sum() / n
        g = np.exp(logprob)
        g[np.arange(n), t] -= 1.0
        grads.append(g / n)
    return float(loss), grads


# ---------------------------------------------------------------------------
# the network


class BettiNet:
    """Conv/ReLU/pool stages, two fully connected layers, four class heads."""

    def __init__(self, config: CNNConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        self.layers = []
        c_prev = 1
        for i, c_out in enumerate(config.conv_channels):
            self.layers.append(
                Conv4D(c_prev, c_out, config.kernel, config.padding, rng, f"conv{i + 1}")
            )
            self.layers.append(ReLU())
            self.layers.append(MaxPool4D(config.pool))
            c_prev = c_out
        self.layers.append(Flatten())
        self.layers.append(Linear(config.flatten_len, config.fc_hidden, rng, "fc1"))
        self.layers.append(ReLU())
        self.layers.append(Linear(config.fc_hidden, config.total_outputs, rng, "fc2"))

    def params(self) -> list:
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def zero_grad(self):
        for p in self.params():
            p.grad[...] = 0.0

    def _split_heads(self, out: np.ndarray) -> list:
        heads = []
        start = 0
        for size in self.config.head_sizes:
            heads.append(out[:, start : start + size])
            start += size
        return heads

    def forward(self, x: np.ndarray) -> list:
        out = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            out = layer.forward(out)
        return self._split_heads(out)

    def backward(self, head_grads: list) -> np.ndarray:
        g = np.concatenate(head_grads, axis=1)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def predict(self, x: np.ndarray, batch_size: int = 16) -> np.ndarray:
        """Per-head argmax Betti estimates, shape (N, 4)."""
        outs = []
        for start in range(0, x.shape[0], batch_size):
            logits = self.forward(x[start : start + batch_size])
            outs.append(np.stack([l.argmax(axis=1) for l in logits], axis=1))
        return np.concatenate(outs, axis=0)


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Standard Adam with bias correction."""

    def __init__(self, params: list, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            m *= b1
            m += (1 - b1) * p.grad
            v *= b2
            v += (1 - b2) * p.grad**2
            p.value -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


def adam_step(param: Parameter, state: dict, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One Adam update on a single parameter; ``state`` holds m, v, t."""
    state.setdefault("m", np.zeros_like(param.value))
    state.setdefault("v", np.zeros_like(param.value))
    state["t"] = state.get("t", 0) + 1
    t = state["t"]
    state["m"] = beta1 * state["m"] + (1 - beta1) * param.grad
    state["v"] = beta2 * state["v"] + (1 - beta2) * param.grad**2
    m_hat = state["m"] / (1 - beta1**t)
    v_hat = state["v"] / (1 - beta2**t)
    param.value -= lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# checkpoint format

_CKPT_MAGIC = b"TOXN"
_CKPT_VERSION = 1


def save_checkpoint(path, net: BettiNet, optimizer: Adam | None = None) -> None:
    """Header (magic, version, architecture) then raw little-endian float64
    buffers: every parameter in layer order, then Adam's step count and its
    first/second-moment buffers in the same order."""
    cfg = net.config
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI", _CKPT_MAGIC, _CKPT_VERSION))
        fh.write(
            struct.pack(
                "<6I",
                cfg.input_size,
                len(cfg.conv_channels),
                cfg.kernel,
                cfg.padding,
                cfg.pool,
                cfg.fc_hidden,
            )
        )
        fh.write(struct.pack(f"<{len(cfg.conv_channels)}I", *cfg.conv_channels))
        fh.write(struct.pack("<4I", *cfg.head_sizes))
        for p in net.params():
            fh.write(p.value.astype("<f8").tobytes())
        has_opt = optimizer is not None
        fh.write(struct.pack("<B", 1 if has_opt else 0))
        if has_opt:
            fh.write(struct.pack("<Q", optimizer.t))
            for m in optimizer.m:
                fh.write(m.astype("<f8").tobytes())
            for v in optimizer.v:
                fh.write(v.astype("<f8").tobytes())


def load_checkpoint(path, lr: float = 1e-3) -> tuple[BettiNet, Adam | None]:
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) < 8:
            raise GridFormatError("truncated checkpoint header")
        magic, version = struct.unpack("<4sI", head)
        if magic != _CKPT_MAGIC:
            raise GridFormatError(f"bad checkpoint magic {magic!r}")
        if version != _CKPT_VERSION:
            raise GridFormatError(f"unknown checkpoint version {version}")
        input_size, n_stages, kernel, padding, pool, fc_hidden = struct.unpack(
            "<6I", fh.read(24)
        )
        channels = struct.unpack(f"<{n_stages}I", fh.read(4 * n_stages))
        head_sizes = struct.unpack("<4I", fh.read(16))
        cfg = CNNConfig(
            input_size=input_size,
            conv_channels=channels,
            kernel=kernel,
            padding=padding,
            pool=pool,
            fc_hidden=fc_hidden,
            head_sizes=head_sizes,
        )
        net = BettiNet(cfg, seed=0)

        def read_array(like: np.ndarray) -> np.ndarray:
            raw = fh.read(like.size * 8)
            if len(raw) < like.size * 8:
                raise GridFormatError("truncated checkpoint payload")
            return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(like.shape)

        for p in net.params():
            p.value = read_array(p.value)
        (has_opt,) = struct.unpack("<B", fh.read(1))
        optimizer = None
        if has_opt:
            optimizer = Adam(net.params(), lr=lr)
            (optimizer.t,) = struct.unpack("<Q", fh.read(8))
            optimizer.m = [read_array(p.value) for p in net.params()]
            optimizer.v = [read_array(p.value) for p in net.params()]
    return net, optimizer


# ---------------------------------------------------------------------------
# dataset loading, training, evaluation


def load_dataset(manifest_path, mode: DownscaleMode, input_size: int):
    """Grids from a manifest, reduced to ``input_size`` per ``mode``, as
    (X float64 (N,1,s,s,s,s), y int (N,4))."""
    mode = DownscaleMode(mode)
    rows = read_manifest(manifest_path)
    if not rows:
        raise ValueError(f"empty manifest: {manifest_path}")
    xs, ys = [], []
    for grid_path, _label_path, betti in rows:
        grid = read_grid(grid_path)
        extent = grid.dims[0]
        if any(d != extent for d in grid.dims):
            raise ValueError(f"training expects cubical grids, got {grid.dims}")
        if extent % input_size:
            raise ValueError(f"grid extent {extent} not a multiple of input {input_size}")
        factor = extent // input_size
        if factor > 1:
            grid = downsample(grid, factor) if mode is DownscaleMode.STRIDE else avgpool(grid, factor)
        xs.append(np.asarray(grid.data, dtype=np.float64))
        ys.append(betti.astuple())
    x = np.stack(xs)[:, None]  # one input channel in both modes
    y = np.asarray(ys, dtype=np.int64)
    return x, y


def split_indices(n: int, split: tuple, rng: np.random.Generator):
    """Deterministic shuffled train/val/test index split."""
    perm = rng.permutation(n)
    n_train = int(round(split[0] * n))
    n_val = int(round(split[1] * n))
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    return perm[:n_train], perm[n_train : n_train + n_val], perm[n_train + n_val :]


def _per_beta_accuracy(pred: np.ndarray, truth: np.ndarray) -> list:
    return [100.0 * float((pred[:, i] == truth[:, i]).mean()) for i in range(4)]


@dataclass
class TrainResult:
    net: BettiNet
    optimizer: Adam
    metrics: list = field(default_factory=list)
    split: tuple = ()


def train(
    manifest_path,
    cnn_config: CNNConfig,
    train_config: TrainConfig,
    mode: DownscaleMode = DownscaleMode.STRIDE,
    out_dir=None,
    log=None,
) -> TrainResult:
    """Train on a manifest's grids; returns the net, optimizer, and per-epoch
    metrics.  With ``out_dir`` set, writes checkpoint.toxn and metrics.jsonl."""
    mode = DownscaleMode(mode)
    x, y = load_dataset(manifest_path, mode, cnn_config.input_size)
    for h, size in enumerate(cnn_config.head_sizes):
        if y[:, h].max() >= size:
            raise LabelRangeError(
                f"label betti_{h}={int(y[:, h].max())} exceeds head size {size}"
            )

    rng = np.random.default_rng(train_config.seed)
    tr, va, te = split_indices(x.shape[0], train_config.split, rng)
    net = BettiNet(cnn_config, seed=train_config.seed)
    base_lr = train_config.resolve_lr(mode)
    optimizer = Adam(net.params(), lr=base_lr)

    metrics = []
    for epoch in range(train_config.epochs):
        optimizer.lr = lr_schedule(
            epoch, base_lr, train_config.lr_drop_epochs, train_config.lr_drop_factor
        )
        order = rng.permutation(tr)
        epoch_loss = 0.0
        batches = 0
        for start in range(0, len(order), train_config.batch_size):
            idx = order[start : start + train_config.batch_size]
            xb = x[idx]
            if train_config.augment:
                planes = rng.integers(0, 6, size=len(idx))
                turns = rng.integers(0, 4, size=len(idx))
                xb = np.stack(
                    [
                        rotate90_data(xb[i, 0], int(planes[i]), int(turns[i]))
                        for i in range(len(idx))
                    ]
                )[:, None]
            net.zero_grad()
            logits = net.forward(xb)
            loss, grads = multihead_loss(logits, y[idx])
            net.backward(grads)
            optimizer.step()
            epoch_loss += loss
            batches += 1

        entry = {
            "epoch": epoch,
            "lr": optimizer.lr,
            "train_loss": epoch_loss / max(batches, 1),
        }
        if len(va):
            val_pred = net.predict(x[va])
            per = _per_beta_accuracy(val_pred, y[va])
            entry["val_per_beta"] = [round(v, 4) for v in per]
            entry["val_combined"] = round(sum(per) / 4.0, 4)
        metrics.append(entry)
        if log is not None:
            log(entry)

    result = TrainResult(
        net=net, optimizer=optimizer, metrics=metrics, split=(tr, va, te)
    )
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out_dir / "checkpoint.toxn", net, optimizer)
        with open(out_dir / "metrics.jsonl", "w") as fh:
            for entry in metrics:
                fh.write(json.dumps(entry) + "\n")
    return result


def evaluate(net: BettiNet, manifest_path, mode: DownscaleMode = DownscaleMode.STRIDE,
             indices=None) -> AgreementReport:
    """Prediction agreement against a manifest's labels."""
    x, y = load_dataset(manifest_path, DownscaleMode(mode), net.config.input_size)
    if indices is not None:
        x, y = x[indices], y[indices]
    pred = net.predict(x)
    labels = [BettiVector.from_sequence(row) for row in y]
    computed = [BettiVector.from_sequence(row) for row in pred]
    return agreement(labels, computed)
