"""End-to-end optimization of the decomposed field.

Each step samples random pixel centers plus their right and down neighbors,
renders all three blocks in one batch, evaluates the combined objective and
applies one Adam update.  The first `warmup_steps` steps run with the data
term only, so geometry exists before the enhancement coefficients start
receiving gradients.  A non-finite loss aborts training; the last good
checkpoint stays on disk.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, asdict

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import LoadedDataset
from .field import FieldConfig, FieldNetworks, EncodingConfig
from .losses import LossConfig, RayBatch, loss_total
from .optim import Adam, collect_grads, zero_grads
from .rendering import camera_rays, render_rays
from .rng import rng_for
from .tensor import Tape, Tensor


class NonFiniteLossError(RuntimeError):
    def __init__(self, step: int, parts: dict[str, float]):
        bad = [k for k, v in parts.items() if not np.isfinite(v)]
        super().__init__(f"non-finite loss at step {step}: {bad} (breakdown {parts})")
        self.step = step
        self.parts = parts


@dataclass
class TrainConfig:
    steps: int = 30_000
    batch_size: int = 256            # center rays per step; 2 neighbors each
    samples_per_ray: int = 64
    lr: float = 5e-4
    lr_final: float = 5e-5
    seed: int = 0
    warmup_steps: int = 500          # data-only steps before priors switch on
    checkpoint_interval: int = 5000
    log_interval: int = 100
    loss: LossConfig = field(default_factory=LossConfig)
    field_config: FieldConfig = field(default_factory=FieldConfig)

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")

    def learning_rate(self, step: int) -> float:
        if self.lr <= 0.0 or self.steps <= 1:
            return max(self.lr, 0.0)
        frac = min(max(step, 0), self.steps) / self.steps
        if self.lr_final <= 0.0:
            return float(self.lr * (1.0 - frac))
        return float(self.lr * (self.lr_final / self.lr) ** frac)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        loss = LossConfig(**d.pop("loss", {}))
        fc = d.pop("field_config", {})
        field_config = FieldConfig(
            pos_encoding=EncodingConfig(**fc.pop("pos_encoding", {})),
            dir_encoding=EncodingConfig(**fc.pop("dir_encoding", {})),
            **{k: tuple(v) if isinstance(v, list) else v for k, v in fc.items()},
        )
        return cls(loss=loss, field_config=field_config, **d)


@dataclass
class RaySelection:
    """Rays for one step, blocks ordered [centers | right | down]."""

    origins: np.ndarray     # (3B, 3)
    directions: np.ndarray  # (3B, 3)
    observed: np.ndarray    # (3B, 3)
    size: int

    @property
    def ray_count(self) -> int:
        return self.origins.shape[0]


def sample_batch(dataset: LoadedDataset, rng: np.random.Generator,
                 batch_size: int) -> RaySelection:
    """Uniform random (view, x, y) centers with clamped right/down neighbors."""
    views = len(dataset.cameras)
    if views == 0:
        raise ValueError("empty dataset")
    h = dataset.images.shape[1]
    w = dataset.images.shape[2]
    view_idx = rng.integers(0, views, size=batch_size)
    xs = rng.integers(0, w, size=batch_size)
    ys = rng.integers(0, h, size=batch_size)
    xs_h = np.minimum(xs + 1, w - 1)
    ys_v = np.minimum(ys + 1, h - 1)

    all_x = np.concatenate([xs, xs_h, xs])
    all_y = np.concatenate([ys, ys, ys_v])
    all_view = np.concatenate([view_idx] * 3)

    origins = np.empty((3 * batch_size, 3))
    dirs = np.empty((3 * batch_size, 3))
    for v in np.unique(all_view):
        mask = all_view == v
        o, d = camera_rays(dataset.cameras[v], all_x[mask], all_y[mask])
        origins[mask] = o
        dirs[mask] = d
    observed = dataset.images[all_view, all_y, all_x].astype(np.float64)
    return RaySelection(origins=origins, directions=dirs,
                        observed=observed, size=batch_size)


@dataclass
class TrainState:
    nets: FieldNetworks
    optimizer: Adam
    step: int = 0


def _step_loss_config(cfg: TrainConfig, step: int) -> LossConfig:
    if step < cfg.warmup_steps:
        return cfg.loss.ablated(enable_brightness=False, enable_grayworld=False,
                                enable_gamma_reg=False, enable_smooth=False)
    return cfg.loss


def train_step(state: TrainState, selection: RaySelection, cfg: TrainConfig,
               dataset: LoadedDataset, rng: np.random.Generator) -> dict[str, float]:
    """Render the batch, evaluate the objective, apply one Adam update."""
    loss_cfg = _step_loss_config(cfg, state.step)
    needs_enh = (loss_cfg.enable_brightness or loss_cfg.enable_grayworld
                 or loss_cfg.enable_gamma_reg or loss_cfg.enable_smooth)
    mode = "both" if needs_enh else "raw"
    tape = Tape()
    with tape:
        outputs = render_rays(state.nets, selection.origins, selection.directions,
                              dataset.near, dataset.far, cfg.samples_per_ray,
                              jitter=True, rng=rng, mode=mode)
        batch = RayBatch(outputs=outputs, observed=selection.observed,
                         size=selection.size)
        total, parts = loss_total(batch, loss_cfg)
    if not all(np.isfinite(v) for v in parts.values()):
        raise NonFiniteLossError(state.step, parts)
    zero_grads(state.nets.params)
    tape.backward(total)
    grads = collect_grads(state.nets.params)
    state.optimizer.step(grads, lr=cfg.learning_rate(state.step))
    state.step += 1
    parts["lr"] = cfg.learning_rate(state.step - 1)
    return parts


METRIC_COLUMNS = ("step", "lr", "total", "data", "color", "smooth")


def _metrics_row(step: int, parts: dict[str, float]) -> str:
    values = (step, parts.get("lr", 0.0), parts.get("total", 0.0),
              parts.get("data", 0.0), parts.get("color", 0.0), parts.get("smooth", 0.0))
    return "\t".join(f"{v:.6g}" if i else str(v) for i, v in enumerate(values))


@dataclass
class TrainResult:
    state: TrainState
    metrics: list[dict[str, float]]
    final_checkpoint: str | None


def train(dataset: LoadedDataset, cfg: TrainConfig,
          out_dir: str | None = None) -> TrainResult:
    """Run the full loop; writes checkpoints and a tab-separated metrics log."""
    nets = FieldNetworks.create(cfg.seed, cfg.field_config)
    optimizer = Adam(nets.params, lr=cfg.lr)
    state = TrainState(nets=nets, optimizer=optimizer)
    rng = rng_for(cfg.seed, "train")
    metrics: list[dict[str, float]] = []

    log_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_fh = open(os.path.join(out_dir, "metrics.tsv"), "w", encoding="utf-8")
        log_fh.write("\t".join(METRIC_COLUMNS) + "\n")

    def write_checkpoint(name: str) -> str:
        path = os.path.join(out_dir, name)
        save_checkpoint(path, state.step,
                        {k: p.data for k, p in nets.params.items()},
                        optimizer_state=optimizer.state_arrays(),
                        config_echo=cfg.to_dict())
        return path

    final_path = None
    try:
        for _ in range(cfg.steps):
            selection = sample_batch(dataset, rng, cfg.batch_size)
            parts = train_step(state, selection, cfg, dataset, rng)
            if state.step % cfg.log_interval == 0 or state.step == cfg.steps:
                row = dict(parts, step=state.step)
                metrics.append(row)
                if log_fh:
                    log_fh.write(_metrics_row(state.step, parts) + "\n")
                    log_fh.flush()
            if out_dir and cfg.checkpoint_interval > 0 \
                    and state.step % cfg.checkpoint_interval == 0 \
                    and state.step < cfg.steps:
                write_checkpoint(f"ckpt_{state.step:06d}.llnf")
        if out_dir is not None:
            final_path = write_checkpoint("final.llnf")
    finally:
        if log_fh:
            log_fh.close()
    return TrainResult(state=state, metrics=metrics, final_checkpoint=final_path)


def restore_networks(path: str) -> tuple[FieldNetworks, int, dict]:
    """Rebuild networks (and config) from a checkpoint."""
    step, params, _opt, config_echo = load_checkpoint(path)
    if config_echo is None:
        raise ValueError(f"checkpoint {path} has no config sidecar; cannot rebuild")
    cfg = TrainConfig.from_dict(config_echo)
    nets = FieldNetworks.create(cfg.seed, cfg.field_config)
    for name, tensor in nets.params.items():
        if name not in params:
            raise ValueError(f"checkpoint missing parameter {name!r}")
        stored = params[name]
        if stored.shape != tensor.data.shape:
            raise ValueError(f"checkpoint parameter {name!r} has shape {stored.shape}, "
                             f"expected {tensor.data.shape}")
        tensor.data = stored.astype(tensor.data.dtype)
    return nets, step, config_echo


def denoising_convergence_probe(observations: np.ndarray, steps: int = 4000,
                                lr: float = 0.02) -> np.ndarray:
    """Fit one color to many noisy observations of it with a plain squared loss.

    The minimizer of the unweighted mean squared error is the sample mean, so
    a converged fit demonstrates that averaging across observations is what
    the optimization does to per-point noise.
    """
    obs = np.asarray(observations, dtype=np.float64)
    if obs.ndim == 1:
        obs = obs[:, None]
    if obs.shape[0] < 10:
        raise ValueError("need at least 10 observations")
    color = Tensor(np.full((1, obs.shape[1]), 0.5), requires_grad=True, dtype=np.float64)
    target = Tensor(obs, dtype=np.float64)
    opt = Adam({"color": color}, lr=lr)
    for step in range(steps):
        tape = Tape()
        with tape:
            diff = color - target
            loss = (diff * diff).mean()
        zero_grads({"color": color})
        tape.backward(loss)
        opt.step(collect_grads({"color": color}),
                 lr=lr * (1e-3 ** (step / max(steps - 1, 1))))
    return color.data[0].copy()
