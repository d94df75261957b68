"""Loss-versus-alpha and loss-versus-style-weight curves, and stylization grids."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .autodiff import Tensor
from .errors import ContractError, FormatError, UsageError
from .image_io import DatasetManifest, Image, resize_shortside_and_crop, save_ppm
from .losses import anchor_style_loss, content_loss, style_loss
from .networks import IDENTITY, RegressionFn, StyleNet, load_checkpoint

DEFAULT_ALPHA_GRID = (0.0, 1 / 6, 1 / 3, 1 / 2, 2 / 3, 5 / 6, 1.0)
CURVE_COLUMNS = (
    "w_s", "alpha", "n_pairs",
    "content_mean", "content_std", "style_mean", "style_std",
    "ustyle_mean", "ustyle_std", "astyle_mean", "astyle_std",
)  # fmt: skip
METRICS = ("content", "style", "ustyle", "astyle")


@dataclass
class TestPair:
    content: Tensor
    style: Tensor
    style_id: Optional[int] = None

    __test__ = False  # not a pytest class


@dataclass
class MetricRecord:
    w_s: float
    alpha: float
    n_pairs: int
    content_mean: float
    content_std: float
    style_mean: float
    style_std: float
    ustyle_mean: float
    ustyle_std: float
    astyle_mean: float
    astyle_std: float
    per_pair: dict = field(default_factory=dict, repr=False, compare=False)

    def row(self) -> list:
        return [getattr(self, c) for c in CURVE_COLUMNS]


def make_test_pairs(
    content_manifest: DatasetManifest,
    style_manifest: Optional[DatasetManifest] = None,
    n_pairs: int = 32,
    image_size: int = 64,
) -> list:
    """Pair content image i with style image i mod S, both centre-cropped to image_size."""
    style_manifest = style_manifest or content_manifest
    if n_pairs < 1:
        raise UsageError("need at least one test pair")
    styles = style_manifest.styles_by_id()
    pairs = []
    for i in range(n_pairs):
        c = content_manifest.image(content_manifest.content_paths[i % len(content_manifest.content_paths)])
        sid = i % len(styles)
        s = style_manifest.image(styles[sid])
        pairs.append(
            TestPair(
                resize_shortside_and_crop(c, image_size, image_size).to_tensor(),
                resize_shortside_and_crop(s, image_size, image_size).to_tensor(),
                sid,
            )
        )
    return pairs


def pair_losses(model: StyleNet, pair: TestPair, alpha: float, f: RegressionFn = IDENTITY) -> dict:
    style_arg = pair.style if model.transformer == "adain" else pair.style_id
    if style_arg is None:
        raise UsageError("a CIN model needs test pairs carrying style ids")
    out = model.stylize(pair.content, style_arg, alpha, f)
    pyr_o = model.encode(out)
    pyr_c = model.encode(pair.content)
    pyr_s = model.encode(pair.style)
    return {
        "content": content_loss(pyr_o.latent, pyr_c.latent).item(),
        "style": style_loss(pyr_o, pyr_s, model.eps).item(),
        "ustyle": style_loss(pyr_o, pyr_c, model.eps).item(),
        "astyle": anchor_style_loss(pyr_o, pyr_s, pyr_c, f(alpha), model.eps).item(),
    }


def eval_losses(model: StyleNet, test_pairs: Sequence[TestPair], alpha: float, f: RegressionFn = IDENTITY) -> MetricRecord:
    """Mean and population std of each loss over the test pairs at one alpha."""
    if not test_pairs:
        raise UsageError("empty test set")
    if not 0.0 <= alpha <= 1.0:
        raise ContractError(f"alpha must lie in [0, 1], got {alpha}")
    values = {m: [] for m in METRICS}
    for pair in test_pairs:
        for m, v in pair_losses(model, pair, alpha, f).items():
            values[m].append(v)
    stats = {}
    for m in METRICS:
        arr = np.asarray(values[m])
        stats[f"{m}_mean"] = float(arr.mean())
        stats[f"{m}_std"] = float(arr.std())
    return MetricRecord(
        w_s=float(model.meta.get("w_s", float("nan"))),
        alpha=float(alpha),
        n_pairs=len(test_pairs),
        per_pair=values,
        **stats,
    )


def alpha_curve(model: StyleNet, test_pairs, alpha_grid: Sequence[float] = DEFAULT_ALPHA_GRID, f: RegressionFn = IDENTITY) -> list:
    grid = [float(a) for a in alpha_grid]
    if not grid or any(not 0.0 <= a <= 1.0 for a in grid):
        raise ContractError("alpha grid must be non-empty and within [0, 1]")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ContractError("alpha grid must be sorted")
    return [eval_losses(model, test_pairs, a, f) for a in grid]


def weight_curve(checkpoints: Sequence, test_pairs, alphas: Sequence[float] = (0.0, 1.0)) -> list:
    """Records at each alpha for every checkpoint (paths or loaded models), sorted by w_s."""
    if len(checkpoints) < 2:
        raise UsageError("a weight curve needs at least two checkpoints")
    models = [c if isinstance(c, StyleNet) else load_checkpoint(c) for c in checkpoints]
    for m in models:
        if "w_s" not in m.meta:
            raise FormatError("checkpoint header does not record w_s")
    models.sort(key=lambda m: m.meta["w_s"])
    return [eval_losses(m, test_pairs, a) for m in models for a in alphas]


# -- CSV -----------------------------------------------------------------------------


def records_to_csv(records: Sequence[MetricRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_COLUMNS)
    for r in records:
        writer.writerow([repr(float(v)) if c != "n_pairs" else str(v) for c, v in zip(CURVE_COLUMNS, r.row())])
    return buf.getvalue()


def records_from_csv(text: str) -> list:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != CURVE_COLUMNS:
        raise FormatError(f"curve CSV header {header} does not match {list(CURVE_COLUMNS)}")
    out = []
    for line, row in enumerate(reader, start=2):
        if len(row) != len(CURVE_COLUMNS):
            raise FormatError(f"line {line}: expected {len(CURVE_COLUMNS)} fields, got {len(row)}")
        try:
            vals = {c: (int(v) if c == "n_pairs" else float(v)) for c, v in zip(CURVE_COLUMNS, row)}
        except ValueError as exc:
            raise FormatError(f"line {line}: {exc}") from exc
        out.append(MetricRecord(**vals))
    return out


def write_records(records, path) -> None:
    Path(path).write_text(records_to_csv(records))


def read_records(path) -> list:
    return records_from_csv(Path(path).read_text())


# -- grids ---------------------------------------------------------------------------------


def emit_grid(
    model: StyleNet,
    contents: Sequence[Tensor],
    styles: Sequence,
    alpha_grid: Sequence[float],
    fns: Sequence[RegressionFn] = (IDENTITY,),
    path=None,
) -> Image:
    """Tile stylizations: one row per (content, style, f) triple, one column per alpha.

    ``styles`` holds style image tensors for AdaIN models and ids for CIN.
    """
    rows = []
    for content, style, f in itertools.product(contents, styles, fns):
        cells = [model.stylize(content, style, a, f).data[0] for a in alpha_grid]
        rows.append(np.concatenate(cells, axis=2))
    tiled = np.concatenate(rows, axis=1)
    img = Image(np.clip(tiled.transpose(1, 2, 0), 0.0, 1.0))
    if path is not None:
        save_ppm(img, path)
    return img
