"""Desk-scale training: quadruplet sampling, Adam, the training loop."""

import dataclasses
import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from . import image_io
from .codec import EncoderSpec, save_weights
from .errors import ConfigError, ContractError, NumericError
from .losses import (
    LossConfig, LossTerms, content_loss, disentanglement_losses, identity_loss,
    style_loss, total_loss,
)
from .model import Model
from .multi_adaptation import multi_adapt_forward
from .tensor import Tensor, concat, no_grad
from .whitening import WhitenConfig

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".ppm", ".png")


@dataclass(frozen=True)
class TrainConfig:
    crop_size: int = 64
    batch_size: int = 1
    learning_rate: float = 1e-3
    lr_schedule: str = "cosine"
    lr_floor: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    max_steps: int = 2000
    seed: int = 0
    checkpoint_every: int = 500
    stage_channels: tuple = (8, 16, 32, 64)
    ca_kernel: int = 1
    freeze_encoder: bool = False
    zero_value_init: bool = True

    def __post_init__(self):
        if self.crop_size < 8 or self.crop_size % 8:
            raise ConfigError(f"crop_size must be a positive multiple of 8, got {self.crop_size}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ConfigError(f"lr_schedule must be 'constant' or 'cosine', got {self.lr_schedule!r}")
        if not 0.0 <= self.lr_floor <= 1.0:
            raise ConfigError(f"lr_floor must lie in [0, 1], got {self.lr_floor}")
        if self.batch_size < 1 or self.max_steps < 0 or self.checkpoint_every < 1:
            raise ConfigError("batch_size and checkpoint_every must be >= 1, max_steps >= 0")
        if self.ca_kernel not in (1, 3):
            raise ConfigError(f"ca_kernel must be 1 or 3, got {self.ca_kernel}")


# ---------------------------------------------------------------------------
# config files: flat ``key = value`` lines, '#' comments
# ---------------------------------------------------------------------------

def _coerce(raw, default, key):
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(p) for p in raw.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r}") from None
    return raw


def read_config_file(path):
    """Return (train_overrides, loss_overrides) parsed from ``path``."""
    train_fields = {f.name: f.default for f in dataclasses.fields(TrainConfig)}
    loss_fields = {f.name: f.default for f in dataclasses.fields(LossConfig)}
    train, loss = {}, {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, value = (p.strip() for p in line.split("=", 1))
            if key in train_fields:
                train[key] = _coerce(value, train_fields[key], key)
            elif key in loss_fields:
                loss[key] = _coerce(value, loss_fields[key], key)
            else:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
    return train, loss


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------

def list_images(directory):
    try:
        names = sorted(os.listdir(directory))
    except OSError as exc:
        raise OSError(f"cannot list image directory {directory}: {exc}") from exc
    return [os.path.join(directory, n) for n in names if n.lower().endswith(IMAGE_EXTENSIONS)]


def load_image_set(directory, crop_size):
    """Images from ``directory`` resized so the shorter side is 1.4 x crop."""
    shorter = int(round(1.4 * crop_size))
    return [image_io.resize_shorter(image_io.load_image(p), shorter) for p in list_images(directory)]


@dataclass
class Quadruplet:
    c1: Tensor
    c2: Tensor
    s1: Tensor
    s2: Tensor
    content_idx: tuple
    style_idx: tuple


def _random_crop(buf, crop, rng):
    y = int(rng.integers(0, buf.height - crop + 1))
    x = int(rng.integers(0, buf.width - crop + 1))
    return buf.data[y:y + crop, x:x + crop]


def sample_quadruplet(content_set, style_set, rng, crop_size=64, batch_size=1):
    """Two distinct contents and two distinct styles, randomly cropped."""
    if len(content_set) < 2 or len(style_set) < 2:
        raise ConfigError(
            f"need at least 2 content and 2 style images, got {len(content_set)} and {len(style_set)}"
        )
    out = {k: [] for k in ("c1", "c2", "s1", "s2")}
    cidx, sidx = [], []
    for _ in range(batch_size):
        ci = rng.choice(len(content_set), size=2, replace=False)
        si = rng.choice(len(style_set), size=2, replace=False)
        cidx.append(tuple(int(i) for i in ci))
        sidx.append(tuple(int(i) for i in si))
        for key, buf in (("c1", content_set[ci[0]]), ("c2", content_set[ci[1]]),
                         ("s1", style_set[si[0]]), ("s2", style_set[si[1]])):
            patch = _random_crop(buf, crop_size, rng)
            out[key].append(patch.transpose(2, 0, 1).astype(np.float64) / 255.0)
    tensors = {k: Tensor(np.stack(v)) for k, v in out.items()}
    return Quadruplet(content_idx=tuple(cidx), style_idx=tuple(sidx), **tensors)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

class Adam:
    """Adaptive-moment updates with bias correction, one state per parameter."""

    def __init__(self, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params):
        """Update ``name -> Tensor`` in place from each tensor's ``grad``."""
        for name, p in params.items():
            if p.grad is None:
                raise ContractError(f"missing gradient for parameter {name}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = p.grad
            if name not in self.m:
                self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def learning_rate_at(cfg, step):
    """Rate for 1-based ``step``; cosine decays from lr to lr * lr_floor over max_steps."""
    if cfg.lr_schedule == "constant":
        return cfg.learning_rate
    frac = (step - 1) / max(1, cfg.max_steps)
    return cfg.learning_rate * (cfg.lr_floor + (1.0 - cfg.lr_floor) * 0.5 * (1.0 + math.cos(math.pi * frac)))


# ---------------------------------------------------------------------------
# losses for one quadruplet
# ---------------------------------------------------------------------------

# (content, style) index pairs into [c1, c2, s1, s2]:
# c1|s1 (perceptual + both dis terms), c1|s2 (dis_content), c2|s1 (dis_style),
# c1|c1 and s1|s1 (identity)
PAIRS = ((0, 2), (0, 3), (1, 2), (0, 0), (2, 2))


def frozen_copy(params, prefix="encoder."):
    """Snapshot of the encoder parameters used as the fixed loss network."""
    return {n: Tensor(t.data.copy()) for n, t in params.items() if n.startswith(prefix)}


def compute_losses(model, lossnet, quad, loss_cfg=LossConfig(), wh=WhitenConfig()):
    """All five loss terms and the weighted total for one quadruplet.

    Returns (LossTerms, total, stylized images (5B, 3, H, W)).
    """
    b = quad.c1.shape[0]
    images = concat([quad.c1, quad.c2, quad.s1, quad.s2])
    feats = model.encode(images).tap4

    def rows(i):
        return slice(i * b, (i + 1) * b)

    f_c = concat([feats[rows(c)] for c, _ in PAIRS])
    f_s = concat([feats[rows(s)] for _, s in PAIRS])
    stylized = model.decode(multi_adapt_forward(f_c, f_s, model.adaptation, wh))

    out_taps = model.encode(stylized, lossnet)
    with no_grad():
        tgt_taps = model.encode(images, lossnet)

    cs, c1s2, c2s1 = out_taps.select(rows(0)), out_taps.select(rows(1)), out_taps.select(rows(2))
    terms = LossTerms(
        content=content_loss(cs, tgt_taps.select(rows(0)), loss_cfg.content_layer),
        style=style_loss(cs, tgt_taps.select(rows(2)), loss_cfg.style_layers),
        identity=identity_loss(stylized[rows(3)], quad.c1, stylized[rows(4)], quad.s1),
        dis_content=None,
        dis_style=None,
    )
    terms.dis_content, terms.dis_style = disentanglement_losses(cs, c1s2, cs, c2s1, loss_cfg)
    return terms, total_loss(terms, loss_cfg), stylized


def format_metrics(step, terms, total):
    d = terms.as_dict()
    return (f"step={step} l_c={d['content']!r} l_s={d['style']!r} l_id={d['identity']!r} "
            f"l_dc={d['dis_content']!r} l_ds={d['dis_style']!r} total={float(total.data)!r}")


def parse_metrics(path):
    """Metrics log -> list of dicts of floats (``step`` as int)."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            fields = dict(p.split("=", 1) for p in line.split())
            rows.append({k: (int(v) if k == "step" else float(v)) for k, v in fields.items()})
    return rows


def trainable_params(model, freeze_encoder=False):
    return {n: t for n, t in model.params.items()
            if not (freeze_encoder and n.startswith("encoder."))}


def train(content_set, style_set, out_dir, cfg=TrainConfig(), loss_cfg=LossConfig(),
          model=None, wh=WhitenConfig()):
    """Run the training loop; returns (model, lossnet, metrics log path).

    Writes ``ckpt_{step}.madaptw`` every ``checkpoint_every`` steps (plus the
    initial and final step) and one metrics line per step to ``metrics.log``.
    """
    os.makedirs(out_dir, exist_ok=True)
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    init_rng, data_rng = (np.random.Generator(np.random.PCG64(s)) for s in seeds)
    if model is None:
        model = Model.initialize(init_rng, EncoderSpec(tuple(cfg.stage_channels)), ca_kernel=cfg.ca_kernel)
        if cfg.zero_value_init:
            model.zero_value_paths()
    for name, t in model.params.items():
        t.requires_grad = not (cfg.freeze_encoder and name.startswith("encoder."))
    lossnet = frozen_copy(model.params)
    params = trainable_params(model, cfg.freeze_encoder)
    opt = Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)

    metrics_path = os.path.join(out_dir, "metrics.log")
    save_weights(model.state_dict(), os.path.join(out_dir, "ckpt_0.madaptw"))
    with open(metrics_path, "w", encoding="utf-8") as mlog:
        for step in range(1, cfg.max_steps + 1):
            quad = sample_quadruplet(content_set, style_set, data_rng, cfg.crop_size, cfg.batch_size)
            terms, total, _ = compute_losses(model, lossnet, quad, loss_cfg, wh)
            if not np.isfinite(total.data):
                raise NumericError(f"non-finite loss at step {step}: {terms.as_dict()}")
            for p in model.params.values():
                p.grad = None
            total.backward()
            opt.lr = learning_rate_at(cfg, step)
            opt.step(params)
            line = format_metrics(step, terms, total)
            mlog.write(line + "\n")
            if step % 100 == 0:
                log.info(line)
            if step % cfg.checkpoint_every == 0 or step == cfg.max_steps:
                mlog.flush()
                save_weights(model.state_dict(), os.path.join(out_dir, f"ckpt_{step}.madaptw"))
    return model, lossnet, metrics_path


def convergence_ratio(totals, window=10):
    """Mean of the last ``window`` totals over the mean of the first ``window``."""
    totals = np.asarray(totals, dtype=np.float64)
    if totals.size < window:
        raise ContractError(f"need at least {window} steps, got {totals.size}")
    return float(totals[-window:].mean() / totals[:window].mean())
