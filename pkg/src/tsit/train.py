"""Alternating two-time-scale GAN training and checkpoint integration."""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint, ConfigMismatchError, load_checkpoint, save_checkpoint
from .data import Batch, BatchLoader
from .losses import LossWeights, RandomFeatureExtractor, total_d_loss, total_g_loss
from .networks import MultiScaleDiscriminator, NetConfig, TwoStreamGenerator, noise_shape, sample_noise
from .optim import Adam
from .tensor import NonFiniteError, Tensor

TASKS = ("style_transfer", "semantic_synthesis", "multimodal")
METRIC_FIELDS = ("step", "L_D", "L_G_adv", "L_P", "L_FM", "wall_ms")


@dataclass
class TrainConfig:
    lr_g: float = 1e-4
    lr_d: float = 4e-4
    beta1: float = 0.0
    beta2: float = 0.9
    adam_eps: float = 1e-8
    lambda_p: float = 1.0
    lambda_fm: float = 1.0
    distance: str = "l1"
    steps: int = 0  # 0 means epochs * steps-per-epoch
    epochs: int = 1
    batch_size: int = 1
    seed: int = 0
    checkpoint_interval: int = 0
    task: str = "style_transfer"
    extractor_seed: int = 0
    extractor_weights: str = ""  # optional checkpoint-format file with stage{i}.weight/bias

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        for name in ("lr_g", "lr_d", "lambda_p", "lambda_fm"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.adam_eps <= 0:
            raise ValueError("adam_eps must be positive")
        if self.batch_size < 1 or self.epochs < 0 or self.steps < 0 or self.checkpoint_interval < 0:
            raise ValueError("batch_size must be >= 1; steps, epochs, checkpoint_interval >= 0")
        if self.distance not in ("l1", "l2"):
            raise ValueError("distance must be l1 or l2")

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_p, self.lambda_fm)

    def total_steps(self, steps_per_epoch: int) -> int:
        return self.steps if self.steps else self.epochs * steps_per_epoch

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**d)


class TrainingDivergedError(RuntimeError):
    def __init__(self, step: int, phase: str, op: str):
        self.step, self.phase, self.op = step, phase, op
        super().__init__(f"non-finite value at step {step} ({phase} phase) in op '{op}'")


def step_noise(net_cfg: NetConfig, seed: int, step: int, n: int, h: int, w: int) -> Tensor:
    """Generator input noise for a training step; a pure function of (seed, step)."""
    return sample_noise(*noise_shape(net_cfg, n, h, w), seed=np.random.default_rng([seed, step, 7]),
                        dtype=net_cfg.np_dtype)


class Trainer:
    """Owns the generator (both streams included), the discriminators and their
    optimizers.  Each step: one D update, then one G update."""

    def __init__(self, net_cfg: NetConfig, cfg: TrainConfig, loader: BatchLoader | None = None,
                 extractor=None):
        cfg.validate()
        self.net_cfg = net_cfg
        self.cfg = cfg
        self.loader = loader
        self.G = TwoStreamGenerator(net_cfg)
        d_in = net_cfg.output_channels + (net_cfg.content_channels if net_cfg.d_conditional else 0)
        self.D = MultiScaleDiscriminator(net_cfg, in_channels=d_in)
        if extractor is None:
            extractor = RandomFeatureExtractor(cfg.extractor_seed, net_cfg.output_channels,
                                               dtype=net_cfg.np_dtype)
            if cfg.extractor_weights:
                extractor.load_tensors(load_checkpoint(cfg.extractor_weights).tensors)
        self.fx = extractor
        self.g_names = [n for n, _ in self.G.named_parameters()]
        self.d_names = [n for n, _ in self.D.named_parameters()]
        betas = (cfg.beta1, cfg.beta2)
        self.opt_g = Adam(self.G.parameters(), cfg.lr_g, betas, cfg.adam_eps)
        self.opt_d = Adam(self.D.parameters(), cfg.lr_d, betas, cfg.adam_eps)
        self.step = 0

    # -- one iteration --------------------------------------------------------

    def _targets(self, batch: Batch):
        dtype = self.net_cfg.np_dtype
        x_c = Tensor(batch.content.astype(dtype, copy=False))
        x_s = Tensor(batch.style.astype(dtype, copy=False))
        # the discriminator always sees the style/target images as "real"
        real = x_s
        p_target = x_s if self.cfg.task == "semantic_synthesis" else x_c
        return x_c, x_s, real, p_target

    def _d_input(self, x_c: Tensor, image: Tensor) -> Tensor:
        if self.net_cfg.d_conditional:
            return T.concat([x_c, image], axis=1)
        return image

    def train_step(self, batch: Batch | None = None) -> dict:
        if batch is None:
            batch = self.loader.batch_at(self.step)
        t0 = time.perf_counter()
        x_c, x_s, real, p_target = self._targets(batch)
        n, _, h, w = x_c.shape
        z0 = step_noise(self.net_cfg, self.cfg.seed, self.step, n, h, w)
        self.G.train()
        self.D.train()

        phase = "discriminator"
        try:
            with T.no_grad():
                fake = self.G(x_c, x_s, z0)
            self.opt_d.zero_grad()
            self.opt_g.zero_grad()
            scores, _ = self.D(T.concat([self._d_input(x_c, real), self._d_input(x_c, fake)], axis=0))
            s_real = [T.narrow(s, 0, n) for s in scores]
            s_fake = [T.narrow(s, n, 2 * n) for s in scores]
            loss_d = total_d_loss(s_real, s_fake)
            loss_d.backward()
            self.opt_d.step()

            phase = "generator"
            self.opt_d.zero_grad()
            self.opt_g.zero_grad()
            fake = self.G(x_c, x_s, z0)
            with T.no_grad():
                _, feats_real = self.D(self._d_input(x_c, real))
            scores_fake, feats_fake = self.D(self._d_input(x_c, fake))
            loss_g, parts = total_g_loss(scores_fake, feats_fake, feats_real, self.fx, fake, p_target,
                                         self.cfg.loss_weights, self.cfg.distance)
            loss_g.backward()
            self.opt_d.zero_grad()  # D receives gradients through scores_fake; discard them
            self.opt_g.step()
            self.opt_g.zero_grad()
        except NonFiniteError as exc:
            raise TrainingDivergedError(self.step, phase, exc.op) from exc

        record = {
            "step": self.step,
            "L_D": loss_d.item(),
            "L_G_adv": parts["g_adv"],
            "L_P": parts["perceptual"],
            "L_FM": parts["feature_matching"],
            "wall_ms": (time.perf_counter() - t0) * 1000.0,
        }
        self.step += 1
        return record

    def run(self, steps: int, metrics=None, checkpoint_dir=None, on_step=None) -> list[dict]:
        """Train until ``self.step == steps``; returns the metric records."""
        records = []
        while self.step < steps:
            rec = self.train_step()
            records.append(rec)
            if metrics is not None:
                metrics.write(rec)
            if on_step is not None:
                on_step(rec)
            interval = self.cfg.checkpoint_interval
            if checkpoint_dir is not None and interval and self.step % interval == 0:
                self.save(Path(checkpoint_dir) / f"step_{self.step:07d}.ckpt")
        return records

    # -- checkpoints ------------------------------------------------------------

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {f"G/{k}": v for k, v in self.G.state_dict().items()}
        out.update({f"D/{k}": v for k, v in self.D.state_dict().items()})
        out.update({f"opt_g/{k}": v for k, v in self.opt_g.state_tensors(self.g_names).items()})
        out.update({f"opt_d/{k}": v for k, v in self.opt_d.state_tensors(self.d_names).items()})
        out.update({f"fx/{k}": v for k, v in self.fx.named_tensors().items()})
        return out

    def meta(self) -> dict:
        return {
            "kind": "tsit-train-state",
            "net_config": self.net_cfg.to_dict(),
            "train_config": self.cfg.to_dict(),
            "step": self.step,
            "opt_g_t": self.opt_g.t,
            "opt_d_t": self.opt_d.t,
            # noise and batch order are pure functions of (seed, step)
            "rng": {"seed": self.cfg.seed, "step": self.step},
            "extractor": getattr(self.fx, "identity", type(self.fx).__name__),
        }

    def save(self, path) -> None:
        save_checkpoint(path, self.meta(), self.state_tensors())

    def load(self, ckpt: Checkpoint | str | Path) -> None:
        if not isinstance(ckpt, Checkpoint):
            ckpt = load_checkpoint(ckpt)
        if ckpt.net_config != self.net_cfg.to_dict():
            raise ConfigMismatchError(_config_diff(ckpt.net_config, self.net_cfg.to_dict()))
        t = ckpt.tensors

        def section(prefix):
            return {k[len(prefix):]: v for k, v in t.items() if k.startswith(prefix)}

        try:
            self.G.load_state_dict(section("G/"))
            self.D.load_state_dict(section("D/"))
            self.opt_g.load_state_tensors(self.g_names, section("opt_g/"), ckpt.meta["opt_g_t"])
            self.opt_d.load_state_tensors(self.d_names, section("opt_d/"), ckpt.meta["opt_d_t"])
            self.fx.load_tensors(section("fx/"))
        except (KeyError, ValueError) as exc:
            raise ConfigMismatchError(f"checkpoint does not fit the network: {exc}") from None
        self.step = int(ckpt.meta["step"])


def _config_diff(saved: dict, current: dict) -> str:
    keys = sorted(k for k in set(saved) | set(current) if saved.get(k) != current.get(k))
    detail = ", ".join(f"{k}: checkpoint={saved.get(k)!r} config={current.get(k)!r}" for k in keys)
    return f"network config mismatch ({detail})"


def load_generator(ckpt: Checkpoint | str | Path, net_cfg: NetConfig | None = None) -> TwoStreamGenerator:
    """Rebuild the generator stored in a training checkpoint."""
    if not isinstance(ckpt, Checkpoint):
        ckpt = load_checkpoint(ckpt)
    saved = NetConfig.from_dict(ckpt.net_config)
    if net_cfg is not None and net_cfg.to_dict() != saved.to_dict():
        raise ConfigMismatchError(_config_diff(ckpt.net_config, net_cfg.to_dict()))
    g = TwoStreamGenerator(saved)
    state = {k[2:]: v for k, v in ckpt.tensors.items() if k.startswith("G/")}
    try:
        g.load_state_dict(state)
    except (KeyError, ValueError) as exc:
        raise ConfigMismatchError(f"checkpoint does not fit the network: {exc}") from None
    return g


class MetricsWriter:
    """Comma-separated metrics stream, one line per step, flushed as written."""

    def __init__(self, path, append: bool = False):
        self.path = Path(path)
        fresh = not append or not self.path.exists()
        self._fh = self.path.open("a" if append else "w")
        if fresh:
            self._fh.write(",".join(METRIC_FIELDS) + "\n")

    def write(self, rec: dict) -> None:
        vals = [str(rec["step"])] + [repr(float(rec[k])) for k in METRIC_FIELDS[1:-1]]
        vals.append(f"{rec['wall_ms']:.3f}")
        self._fh.write(",".join(vals) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics(path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    out = []
    for line in lines[1:]:
        row = dict(zip(header, line.split(",")))
        out.append({k: int(v) if k == "step" else float(v) for k, v in row.items()})
    return out


def windowed_mean(values, window: int) -> np.ndarray:
    """Means of consecutive non-overlapping windows."""
    values = np.asarray(values, dtype=np.float64)
    n = len(values) // window
    return values[: n * window].reshape(n, window).mean(axis=1)
