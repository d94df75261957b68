"""Batch sampling, the combined biased / unbiased / anchored training step, and sweeps."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .autodiff import Adam, Tensor, concat
from .errors import FormatError, TrainingDiverged, UsageError
from .image_io import DatasetManifest, resize_shortside_and_crop, stack_images
from .losses import MODES, BranchOutput, LossBreakdown, LossWeights, Targets, total_loss
from .networks import DEFAULT_WIDTHS, StyleNet, interpolate_feature, save_checkpoint

log = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "total", "content", "style", "tv", "u_content", "u_style", "u_tv", "reconstruct", "a_style")
CONFIG_KEYS = ("transformer", "w_c", "w_s", "w_t", "w_r", "anchors", "modes", "lr", "batch", "steps", "seed", "image_size", "manifest")


def default_lr(w_s: float) -> float:
    return 1e-6 if w_s >= 1e4 else 1e-4


@dataclass
class TrainConfig:
    transformer: str = "adain"
    w_c: float = 1.0
    w_s: float = 50.0
    w_t: float = 1e-3
    w_r: Optional[float] = None
    anchors: tuple = ()
    modes: tuple = ("biased", "unbiased")
    lr: Optional[float] = None
    batch: int = 4
    steps: int = 500
    seed: int = 0
    image_size: int = 64
    manifest: Optional[str] = None
    encoder_seed: int = 0
    widths: tuple = DEFAULT_WIDTHS

    def __post_init__(self):
        self.anchors = tuple(float(a) for a in self.anchors)
        self.modes = tuple(m for m in MODES if m in set(self.modes))
        self.widths = tuple(int(w) for w in self.widths)
        self.validate()

    def validate(self) -> None:
        modes = set(self.modes)
        if self.transformer not in ("adain", "cin"):
            raise UsageError(f"unknown transformer {self.transformer!r}")
        if "biased" not in modes:
            raise UsageError("modes must include 'biased'")
        if "anchored" in modes and "unbiased" not in modes:
            raise UsageError("anchored training requires unbiased mode as well")
        if ("anchored" in modes) != bool(self.anchors):
            raise UsageError("anchors must be given exactly when 'anchored' mode is enabled")
        if any(not 0.0 < a < 1.0 for a in self.anchors):
            raise UsageError(f"anchor alphas must lie strictly inside (0, 1), got {list(self.anchors)}")
        if self.batch < 1 or self.steps < 0:
            raise UsageError("batch must be >= 1 and steps >= 0")
        if self.image_size % 8:
            raise UsageError(f"image_size must be divisible by 8, got {self.image_size}")

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.w_c, self.w_s, self.w_t, self.w_r)

    @property
    def learning_rate(self) -> float:
        return self.lr if self.lr is not None else default_lr(self.w_s)

    @property
    def short_side(self) -> int:
        return self.image_size * 9 // 8

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["anchors"] = list(self.anchors)
        d["modes"] = list(self.modes)
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise UsageError(f"unknown config keys {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)


@dataclass
class Batch:
    content: Tensor
    style: Tensor
    style_ids: np.ndarray
    alphas: dict = field(default_factory=dict)


def sample_batch(manifest: DatasetManifest, rng: np.random.Generator, config: TrainConfig) -> Batch:
    """Draw content and style uniformly with replacement, each with a random crop."""
    if not manifest.content_paths or not manifest.style_paths:
        raise UsageError("manifest has no content or no style images")
    n = config.batch
    ci = rng.integers(0, len(manifest.content_paths), size=n)
    si = rng.integers(0, len(manifest.style_paths), size=n)
    size, short = config.image_size, config.short_side
    contents = [resize_shortside_and_crop(manifest.image(manifest.content_paths[i]), short, size, rng) for i in ci]
    styles = [resize_shortside_and_crop(manifest.image(manifest.style_paths[i]), short, size, rng) for i in si]
    ids = np.array([manifest.style_id_map[manifest.style_paths[i]] for i in si], dtype=np.int64)
    alphas = {"biased": 1.0}
    if "unbiased" in config.modes:
        alphas["unbiased"] = 0.0
    if "anchored" in config.modes:
        alphas["anchors"] = list(config.anchors)
    return Batch(stack_images(contents), stack_images(styles), ids, alphas)


def build_model(config: TrainConfig, num_styles: int = 0) -> StyleNet:
    decoder_seed = int(np.random.SeedSequence([config.seed, 1]).generate_state(1)[0])
    meta = {k: v for k, v in config.to_dict().items() if k != "manifest"}
    meta["lr"] = config.learning_rate
    meta["w_r"] = config.weights.w_r
    return StyleNet.build(
        transformer=config.transformer,
        num_styles=num_styles,
        encoder_seed=config.encoder_seed,
        decoder_seed=decoder_seed,
        widths=config.widths,
        meta=meta,
    )


def _style_arg(model: StyleNet, batch: Batch, pyr_style):
    return pyr_style if model.transformer == "adain" else batch.style_ids


def branch_latents(model: StyleNet, batch: Batch, config: TrainConfig):
    """Decoder inputs per branch plus the (gradient-free) target pyramids.

    Returns ``(latents, pyr_content, pyr_style)`` where ``latents`` maps
    ``"biased"``, ``"unbiased"`` and ``("anchor", alpha)`` to tensors.
    """
    pyr_c = model.encode(batch.content)
    pyr_s = model.encode(batch.style)
    f_c = pyr_c.latent
    latents = {"biased": interpolate_feature(f_c, model.transform(f_c, _style_arg(model, batch, pyr_s)), 1.0)}
    styled = latents["biased"]
    if "unbiased" in config.modes:
        # the unbiased pair uses the content image as its own style input
        self_style = pyr_c if model.transformer == "adain" else batch.style_ids
        latents["unbiased"] = interpolate_feature(f_c, model.transform(f_c, self_style), 0.0)
    if "anchored" in config.modes:
        for a in config.anchors:
            latents[("anchor", a)] = interpolate_feature(f_c, styled, a)
    return latents, pyr_c, pyr_s


def forward_losses(model: StyleNet, batch: Batch, config: TrainConfig):
    latents, pyr_c, pyr_s = branch_latents(model, batch, config)
    keys = list(latents)
    n = batch.content.shape[0]
    images = model.decoder.decode(concat([latents[k] for k in keys], axis=0))
    pyr_out = model.encode(images)
    branches = {}
    for i, key in enumerate(keys):
        alpha = 1.0 if key == "biased" else 0.0 if key == "unbiased" else key[1]
        branches[key] = BranchOutput(images[i * n : (i + 1) * n], pyr_out.slice(i * n, (i + 1) * n), alpha)
    targets = Targets(batch.content, pyr_c, pyr_s)
    anchors = [branches[k] for k in keys if isinstance(k, tuple)]
    return total_loss(branches["biased"], branches.get("unbiased"), anchors, targets, config.weights, config.modes, model.eps)


def _check_finite(bd: LossBreakdown, step: int) -> None:
    for name, value in bd.scalar_terms().items():
        if not math.isfinite(value):
            raise TrainingDiverged(name, step)
    if not math.isfinite(bd.total):
        raise TrainingDiverged("total", step)


def train_step(model: StyleNet, batch: Batch, config: TrainConfig, optimizer: Adam, step: int = 0) -> LossBreakdown:
    total, bd = forward_losses(model, batch, config)
    _check_finite(bd, step)
    optimizer.zero_grad()
    total.backward()
    optimizer.step()
    return bd


@dataclass
class TrainLog:
    steps: list = field(default_factory=list)
    wall: list = field(default_factory=list)
    records: list = field(default_factory=list)

    def append(self, step: int, wall: float, bd: LossBreakdown) -> None:
        if self.steps and step <= self.steps[-1]:
            raise ValueError(f"step {step} does not follow {self.steps[-1]}")
        self.steps.append(step)
        self.wall.append(wall)
        self.records.append(bd)

    def rows(self) -> list:
        out = []
        for step, bd in zip(self.steps, self.records):
            out.append([step, bd.total, bd.content, bd.style, bd.tv, bd.u_content, bd.u_style, bd.u_tv, bd.reconstruct, sum(bd.a_style)])
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for row in self.rows():
            writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        return buf.getvalue()


def train(
    config: TrainConfig,
    manifest: Optional[DatasetManifest] = None,
    checkpoint_path=None,
    log_path=None,
    progress_every: int = 50,
) -> tuple[StyleNet, TrainLog]:
    """Train one model; deterministic in (config, manifest contents)."""
    if manifest is None:
        if config.manifest is None:
            raise UsageError("no manifest given")
        manifest = DatasetManifest.load(config.manifest)
    model = build_model(config, manifest.num_styles)
    optimizer = Adam(model.parameters(), lr=config.learning_rate)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2]))
    history = TrainLog()
    start = time.perf_counter()
    for step in range(1, config.steps + 1):
        batch = sample_batch(manifest, rng, config)
        bd = train_step(model, batch, config, optimizer, step)
        history.append(step, time.perf_counter() - start, bd)
        if progress_every and step % progress_every == 0:
            log.info("step %d/%d total=%.5g content=%.4g style=%.4g", step, config.steps, bd.total, bd.content, bd.style)
    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path)
    if log_path is not None:
        Path(log_path).write_text(history.to_csv())
    return model, history


def sweep_configs(base: TrainConfig, ws_list: Sequence[float]) -> list:
    if not ws_list:
        raise UsageError("style-weight sweep needs at least one w_s")
    return [dataclasses.replace(base, w_s=float(ws), w_r=100.0 * float(ws), seed=base.seed + i) for i, ws in enumerate(ws_list)]


def sweep_style_weight(base: TrainConfig, ws_list: Sequence[float], out_dir, manifest: Optional[DatasetManifest] = None) -> list:
    """Train one model per style weight; returns the checkpoint paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if manifest is None:
        manifest = DatasetManifest.load(base.manifest)
    paths = []
    for cfg in sweep_configs(base, ws_list):
        tag = f"ws{cfg.w_s:g}"
        ckpt = out / f"{tag}.ckpt"
        train(cfg, manifest, ckpt, out / f"{tag}_log.csv")
        paths.append(ckpt)
    return paths
