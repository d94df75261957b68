"""Binary PPM codec, resize/crop augmentation and a procedural dataset generator."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .autodiff import Tensor
from .errors import ContractError, FormatError, ParseError, ShapeError

PPM_WHITESPACE = b" \t\n\r\v\f"


@dataclass
class Image:
    """RGB image with float pixels in [0, 1], stored as an (height, width, 3) array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ShapeError(f"image pixels must be (height, width, 3), got {px.shape}")
        if not np.all(np.isfinite(px)) or px.min() < 0.0 or px.max() > 1.0:
            raise ContractError("image pixel values must lie in [0, 1]")
        self.pixels = px

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def to_tensor(self) -> Tensor:
        return Tensor(self.pixels.transpose(2, 0, 1)[None].copy())

    @classmethod
    def from_tensor(cls, t, index: int = 0) -> "Image":
        data = t.data if isinstance(t, Tensor) else np.asarray(t)
        return cls(np.clip(data[index].transpose(1, 2, 0), 0.0, 1.0))


def stack_images(images: Sequence[Image]) -> Tensor:
    return Tensor(np.stack([im.pixels.transpose(2, 0, 1) for im in images]))


# -- PPM ------------------------------------------------------------------------


def _header_token(raw: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(raw):
        if raw[pos] in PPM_WHITESPACE:
            pos += 1
        elif raw[pos] == ord("#"):
            while pos < len(raw) and raw[pos] not in b"\r\n":
                pos += 1
        else:
            break
    start = pos
    while pos < len(raw) and raw[pos] not in PPM_WHITESPACE and raw[pos] != ord("#"):
        pos += 1
    if start == pos:
        raise ParseError("unexpected end of PPM header", pos)
    return raw[start:pos], pos


def read_ppm(raw: bytes) -> Image:
    if not raw.startswith(b"P6"):
        raise ParseError(f"bad magic {raw[:2]!r}, expected b'P6'", 0)
    pos = 2
    fields = []
    for name in ("width", "height", "maxval"):
        start = pos
        token, pos = _header_token(raw, pos)
        if not token.isdigit():
            raise ParseError(f"PPM {name} is not a decimal integer: {token!r}", start)
        fields.append(int(token))
    width, height, maxval = fields
    if maxval != 255:
        raise ParseError(f"maxval must be 255, got {maxval}", pos)
    if width < 1 or height < 1:
        raise ParseError(f"degenerate size {width}x{height}", pos)
    if pos >= len(raw) or raw[pos] not in PPM_WHITESPACE:
        raise ParseError("missing whitespace after maxval", pos)
    pos += 1
    need = width * height * 3
    payload = raw[pos : pos + need]
    if len(payload) < need:
        raise ParseError(f"truncated payload: {len(payload)} of {need} bytes", pos + len(payload))
    px = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return Image(px / 255.0)


def write_ppm(img: Image) -> bytes:
    q = np.clip(np.floor(img.pixels * 255.0 + 0.5), 0, 255).astype(np.uint8)
    return f"P6\n{img.width} {img.height}\n255\n".encode() + q.tobytes()


def load_ppm(path) -> Image:
    with open(path, "rb") as fh:
        return read_ppm(fh.read())


def save_ppm(img: Image, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_ppm(img))


# -- resize / crop -----------------------------------------------------------


def _resize_axis(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(img: Image, width: int, height: int) -> Image:
    if (width, height) == (img.width, img.height):
        return Image(img.pixels.copy())
    y0, y1, fy = _resize_axis(img.height, height)
    x0, x1, fx = _resize_axis(img.width, width)
    p = img.pixels
    rows = p[y0] * (1.0 - fy)[:, None, None] + p[y1] * fy[:, None, None]
    out = rows[:, x0] * (1.0 - fx)[None, :, None] + rows[:, x1] * fx[None, :, None]
    return Image(np.clip(out, 0.0, 1.0))


def resize_shortside_and_crop(img: Image, short: int = 72, crop: int = 64, rng: Optional[np.random.Generator] = None) -> Image:
    """Bilinear resize so the short side equals ``short``, then take a crop x crop window.

    The window is random when ``rng`` is given and centred otherwise.
    """
    if crop > short:
        raise ContractError(f"crop {crop} exceeds short side {short}")
    if img.width <= img.height:
        width, height = short, max(short, int(round(img.height * short / img.width)))
    else:
        width, height = max(short, int(round(img.width * short / img.height))), short
    resized = resize_bilinear(img, width, height)
    if rng is None:
        top, left = (height - crop) // 2, (width - crop) // 2
    else:
        top = int(rng.integers(0, height - crop + 1))
        left = int(rng.integers(0, width - crop + 1))
    return Image(resized.pixels[top : top + crop, left : left + crop].copy())


# -- dataset manifest -----------------------------------------------------------


@dataclass
class DatasetManifest:
    content_paths: list
    style_paths: list
    style_id_map: dict = field(default_factory=dict)
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        if not self.style_id_map:
            self.style_id_map = {p: i for i, p in enumerate(self.style_paths)}
        if len(set(self.content_paths)) != len(self.content_paths) or len(set(self.style_paths)) != len(self.style_paths):
            raise FormatError("manifest contains duplicate paths")
        if sorted(self.style_id_map.values()) != list(range(len(self.style_paths))):
            raise FormatError("style ids must be contiguous from 0")
        if set(self.style_id_map) != set(self.style_paths):
            raise FormatError("style_ids keys must match the style list")
        self.root = Path(self.root)
        self._cache: dict = {}

    @property
    def num_styles(self) -> int:
        return len(self.style_paths)

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    def image(self, rel: str) -> Image:
        if rel not in self._cache:
            self._cache[rel] = load_ppm(self.resolve(rel))
        return self._cache[rel]

    def styles_by_id(self) -> list:
        return sorted(self.style_paths, key=lambda p: self.style_id_map[p])

    def to_json(self) -> str:
        doc = {"content": self.content_paths, "style": self.style_paths, "style_ids": self.style_id_map}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
            return cls(list(doc["content"]), list(doc["style"]), dict(doc["style_ids"]), path.parent)
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise FormatError(f"bad manifest {path}: {exc}") from exc


# -- procedural generator ---------------------------------------------------------


def _hsv_to_rgb(h: float, s: float, v: float) -> np.ndarray:
    i = int(h * 6.0) % 6
    f = h * 6.0 - math.floor(h * 6.0)
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    return np.array([(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i])


def _soft_mask(signed_dist: np.ndarray, width: float = 1.0) -> np.ndarray:
    """Anti-aliased coverage from a signed distance (negative inside), in pixels."""
    return np.clip(0.5 - signed_dist / width, 0.0, 1.0)


def _content_image(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64) + 0.5
    c0 = _hsv_to_rgb(rng.random(), 0.2 + 0.4 * rng.random(), 0.4 + 0.5 * rng.random())
    c1 = _hsv_to_rgb(rng.random(), 0.2 + 0.4 * rng.random(), 0.4 + 0.5 * rng.random())
    if rng.random() < 0.5:
        theta = rng.uniform(0, 2 * math.pi)
        t = (xx * math.cos(theta) + yy * math.sin(theta)) / (width + height)
        t = (t - t.min()) / max(t.max() - t.min(), 1e-12)
    else:
        cx, cy = rng.uniform(0, width), rng.uniform(0, height)
        t = np.hypot(xx - cx, yy - cy) / math.hypot(width, height)
        t = np.clip(t / max(t.max(), 1e-12), 0, 1)
    img = c0 * (1 - t[..., None]) + c1 * t[..., None]
    for _ in range(int(rng.integers(2, 5))):
        color = _hsv_to_rgb(rng.random(), 0.3 + 0.5 * rng.random(), 0.3 + 0.7 * rng.random())
        cx, cy = rng.uniform(0.15, 0.85) * width, rng.uniform(0.15, 0.85) * height
        size = rng.uniform(0.08, 0.25) * min(width, height)
        if rng.random() < 0.5:
            d = np.hypot(xx - cx, yy - cy) - size
        else:
            d = np.maximum(np.abs(xx - cx) - size, np.abs(yy - cy) - size * rng.uniform(0.5, 1.5))
        m = _soft_mask(d)[..., None]
        img = img * (1 - m) + color * m
    return np.clip(img, 0.0, 1.0)


def _value_noise(rng: np.random.Generator, size: int, cells: int) -> np.ndarray:
    grid = rng.random((cells + 1, cells + 1))
    coords = np.arange(size) * (cells / size)
    i = np.floor(coords).astype(int)
    f = coords - i
    f = f * f * (3 - 2 * f)
    top = grid[i][:, i] * (1 - f)[None, :] + grid[i][:, i + 1] * f[None, :]
    bot = grid[i + 1][:, i] * (1 - f)[None, :] + grid[i + 1][:, i + 1] * f[None, :]
    return top * (1 - f)[:, None] + bot * f[:, None]


STYLE_PATTERNS = ("stripes", "checkers", "noise", "stipple")


def _style_image(rng: np.random.Generator, index: int, n_style: int, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    pattern = STYLE_PATTERNS[index % len(STYLE_PATTERNS)]
    if pattern == "stripes":
        theta = rng.uniform(0, math.pi)
        period = rng.uniform(4.0, 10.0)
        phase = (xx * math.cos(theta) + yy * math.sin(theta)) / period
        t = 0.5 + 0.5 * np.sin(2 * math.pi * phase)
    elif pattern == "checkers":
        cell = rng.uniform(4.0, 10.0)
        theta = rng.uniform(0, math.pi / 2)
        u = (xx * math.cos(theta) + yy * math.sin(theta)) / cell
        v = (-xx * math.sin(theta) + yy * math.cos(theta)) / cell
        t = ((np.floor(u) + np.floor(v)) % 2).astype(np.float64)
    elif pattern == "noise":
        t = _value_noise(rng, size, int(rng.integers(6, 14)))
        t = (t - t.min()) / max(t.max() - t.min(), 1e-12)
    else:
        spacing = rng.uniform(5.0, 9.0)
        radius = spacing * rng.uniform(0.2, 0.35)
        jitter = rng.uniform(-0.3, 0.3, size=(int(size / spacing) + 2,) * 2 + (2,)) * spacing
        gi = np.floor(yy / spacing).astype(int)
        gj = np.floor(xx / spacing).astype(int)
        cy = (gi + 0.5) * spacing + jitter[gi, gj, 0]
        cx = (gj + 0.5) * spacing + jitter[gi, gj, 1]
        t = _soft_mask(np.hypot(xx - cx, yy - cy) - radius)
    hue = (index / n_style + rng.uniform(-0.03, 0.03)) % 1.0
    dark = _hsv_to_rgb(hue, 0.6 + 0.4 * rng.random(), 0.1 + 0.3 * rng.random())
    light = _hsv_to_rgb((hue + rng.uniform(0.08, 0.5)) % 1.0, 0.5 + 0.5 * rng.random(), 0.7 + 0.3 * rng.random())
    img = dark * (1 - t[..., None]) + light * t[..., None]
    return np.clip(img, 0.0, 1.0)


def gen_synthetic_dataset(seed: int, n_content: int, n_style: int, size: int, out_dir) -> DatasetManifest:
    """Write a deterministic procedural dataset under ``out_dir`` and return its manifest.

    Content images are smooth scenes of size (size * 5 // 4) x size, style
    images are size x size textures, each style with its own palette.
    """
    if n_content < 1 or n_style < 1:
        raise ContractError("need at least one content and one style image")
    if size < 8:
        raise ContractError(f"image size {size} is too small")
    out = Path(out_dir)
    (out / "content").mkdir(parents=True, exist_ok=True)
    (out / "style").mkdir(parents=True, exist_ok=True)
    root = np.random.SeedSequence(seed)
    content_seed, style_seed = root.spawn(2)

    content_paths = []
    for i, child in enumerate(content_seed.spawn(n_content)):
        rel = f"content/c{i:04d}.ppm"
        px = _content_image(np.random.default_rng(child), size * 5 // 4, size)
        save_ppm(Image(px), out / rel)
        content_paths.append(rel)

    style_paths = []
    for k, child in enumerate(style_seed.spawn(n_style)):
        rel = f"style/s{k:04d}.ppm"
        px = _style_image(np.random.default_rng(child), k, n_style, size)
        save_ppm(Image(px), out / rel)
        style_paths.append(rel)

    manifest = DatasetManifest(content_paths, style_paths, root=out)
    manifest.save(out / "manifest.json")
    return manifest


def gen_dataset_splits(seed: int, n_content: int, n_style: int, size: int, out_dir, n_test_content: int = 32, n_test_style: int = 8) -> tuple[DatasetManifest, DatasetManifest]:
    """Training split under ``out_dir/train`` plus a disjoint held-out split under ``out_dir/test``."""
    train = gen_synthetic_dataset(seed, n_content, n_style, size, os.path.join(out_dir, "train"))
    test = gen_synthetic_dataset(seed + 1_000_003, n_test_content, n_test_style, size, os.path.join(out_dir, "test"))
    return train, test
