"""Encoder / transformer / decoder style-transfer network.

The encoder is a fixed, seeded, He-initialised four-block convolutional
feature extractor (two 3x3 convs per block, pooling between blocks). Its
block outputs form the :class:`FeaturePyramid` used both as the style
representation and, at the third level, as the content feature and the
latent the transformer works on. The decoder mirrors the first three blocks
and ends in a sigmoid so its output is always a valid image.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .autodiff import Tensor, conv2d, instance_moments, maxpool2, relu, sigmoid, take_rows, upsample_nearest2
from .errors import ContractError, FormatError, ShapeError, UsageError

DEFAULT_WIDTHS = (8, 16, 32, 64)
DEFAULT_EPS = 1e-5
# VGG-style input normalisation; sets the feature scale the loss weights act on
IMAGENET_MEAN = np.array([0.485, 0.456, 0.406])
IMAGENET_STD = np.array([0.229, 0.224, 0.225])
CHECKPOINT_MAGIC = b"USTR1\n"


def _he_conv(rng: np.random.Generator, cin: int, cout: int) -> tuple[np.ndarray, np.ndarray]:
    w = rng.normal(0.0, math.sqrt(2.0 / (cin * 9)), size=(cout, cin, 3, 3))
    return w, np.zeros(cout)


@dataclass(frozen=True)
class FeaturePyramid:
    levels: tuple

    @property
    def feat1(self) -> Tensor:
        return self.levels[0]

    @property
    def feat2(self) -> Tensor:
        return self.levels[1]

    @property
    def feat3(self) -> Tensor:
        return self.levels[2]

    @property
    def feat4(self) -> Tensor:
        return self.levels[3]

    @property
    def latent(self) -> Tensor:
        return self.levels[2]

    def slice(self, start: int, stop: int) -> "FeaturePyramid":
        return FeaturePyramid(tuple(lv[start:stop] for lv in self.levels))


class Encoder:
    """Frozen, seeded 4-block conv encoder (two 3x3 convs + relu per block, max-pool between).

    Inputs in [0, 1] are first normalised with the ImageNet channel mean/std.
    """

    def __init__(self, seed: int = 0, widths: Sequence[int] = DEFAULT_WIDTHS):
        self.seed = int(seed)
        self.widths = tuple(int(w) for w in widths)
        if len(self.widths) != 4:
            raise ContractError(f"encoder needs 4 block widths, got {self.widths}")
        rng = np.random.default_rng(self.seed)
        self.layers: list[tuple[Tensor, Tensor]] = []
        cin = 3
        for width in self.widths:
            for _ in range(2):
                w, b = _he_conv(rng, cin, width)
                w.flags.writeable = False
                b.flags.writeable = False
                self.layers.append((Tensor(w), Tensor(b)))
                cin = width

    def __call__(self, img: Tensor) -> FeaturePyramid:
        return self.encode(img)

    def encode(self, img: Tensor) -> FeaturePyramid:
        if img.ndim != 4 or img.shape[1] != 3:
            raise ShapeError(f"encoder expects N x 3 x H x W, got {img.shape}")
        h, w = img.shape[2:]
        if h % 8 or w % 8:
            raise ShapeError(f"encoder input spatial dims must be divisible by 8, got {h}x{w}")
        x = (img - IMAGENET_MEAN[:, None, None]) * (1.0 / IMAGENET_STD[:, None, None])
        levels = []
        for block in range(4):
            for wt, b in self.layers[2 * block : 2 * block + 2]:
                x = relu(conv2d(x, wt, b))
            levels.append(x)
            if block < 3:
                x = maxpool2(x)
        return FeaturePyramid(tuple(levels))

    def checksum(self) -> str:
        h = hashlib.sha256()
        for w, b in self.layers:
            h.update(w.data.tobytes())
            h.update(b.data.tobytes())
        return h.hexdigest()


class Decoder:
    """Mirror of encoder blocks 3, 2, 1 with nearest upsampling, then conv + sigmoid."""

    def __init__(self, seed: int = 1, widths: Sequence[int] = DEFAULT_WIDTHS):
        w1, w2, w3 = (int(w) for w in widths[:3])
        self.latent_channels = w3
        plan = [(w3, w3), (w3, w2), "up", (w2, w2), (w2, w1), "up", (w1, w1), (w1, 3)]
        rng = np.random.default_rng(seed)
        self.plan: list = []
        self.layers: list[tuple[Tensor, Tensor]] = []
        for step in plan:
            if step == "up":
                self.plan.append("up")
                continue
            w, b = _he_conv(rng, *step)
            self.plan.append(len(self.layers))
            self.layers.append((Tensor(w, requires_grad=True), Tensor(b, requires_grad=True)))

    def __call__(self, latent: Tensor) -> Tensor:
        return self.decode(latent)

    def decode(self, latent: Tensor) -> Tensor:
        if latent.ndim != 4 or latent.shape[1] != self.latent_channels:
            raise ShapeError(f"decoder expects {self.latent_channels} latent channels, got shape {latent.shape}")
        x = latent
        last = len(self.layers) - 1
        for step in self.plan:
            if step == "up":
                x = upsample_nearest2(x)
                continue
            w, b = self.layers[step]
            x = conv2d(x, w, b)
            x = sigmoid(x) if step == last else relu(x)
        return x

    def parameters(self) -> list[Tensor]:
        return [t for pair in self.layers for t in pair]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, (w, b) in enumerate(self.layers):
            out += [(f"decoder.{i}.weight", w), (f"decoder.{i}.bias", b)]
        return out


class CinBank:
    """Per-style affine parameters (gamma, beta) over the latent channels."""

    def __init__(self, num_styles: int, channels: int = DEFAULT_WIDTHS[2]):
        if num_styles < 1:
            raise ContractError("a CIN bank needs at least one style")
        self.num_styles = int(num_styles)
        self.gamma = Tensor(np.ones((num_styles, channels)), requires_grad=True)
        self.beta = Tensor(np.zeros((num_styles, channels)), requires_grad=True)

    def lookup(self, style_ids) -> tuple[Tensor, Tensor]:
        ids = np.atleast_1d(np.asarray(style_ids, dtype=np.int64))
        bad = ids[(ids < 0) | (ids >= self.num_styles)]
        if bad.size:
            raise KeyError(f"style id {int(bad[0])} not in CIN bank of size {self.num_styles}")
        return take_rows(self.gamma, ids), take_rows(self.beta, ids)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [("cin.gamma", self.gamma), ("cin.beta", self.beta)]


# -- characteristic functions ------------------------------------------------


class RegressionFn:
    """Monotone map of [0, 1] onto itself with f(0) = 0 and f(1) = 1."""

    def __init__(self, name: str, fn: Callable[[float], float]):
        self.name = name
        self._fn = fn
        probe = np.linspace(0.0, 1.0, 101)
        values = [fn(float(a)) for a in probe]
        if values[0] != 0.0 or values[-1] != 1.0:
            raise ContractError(f"regression function {name!r} must map 0->0 and 1->1")
        if any(b < a for a, b in zip(values, values[1:])):
            raise ContractError(f"regression function {name!r} must be non-decreasing")

    def __call__(self, alpha: float) -> float:
        return float(self._fn(float(alpha)))

    def __repr__(self):
        return f"RegressionFn({self.name})"

    @classmethod
    def table(cls, xs: Sequence[float], ys: Sequence[float]) -> "RegressionFn":
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 2:
            raise ContractError("table needs matching 1-D knot arrays with at least 2 points")
        if xs[0] != 0.0 or xs[-1] != 1.0 or np.any(np.diff(xs) <= 0):
            raise ContractError("table knots must increase strictly from 0 to 1")
        return cls("table", lambda a: float(np.interp(a, xs, ys)))


IDENTITY = RegressionFn("identity", lambda a: a)
SQRT = RegressionFn("sqrt", math.sqrt)
REGRESSION_FNS = {"identity": IDENTITY, "linear": IDENTITY, "sqrt": SQRT}


def regression_fn(name_or_fn) -> RegressionFn:
    if isinstance(name_or_fn, RegressionFn):
        return name_or_fn
    try:
        return REGRESSION_FNS[name_or_fn]
    except KeyError:
        raise UsageError(f"unknown regression function {name_or_fn!r}; choose from {sorted(REGRESSION_FNS)}")


# -- transformers --------------------------------------------------------------


def _bc(t: Tensor) -> Tensor:
    return t.reshape(t.shape[0], t.shape[1], 1, 1)


def adain(f_c: Tensor, f_s: Tensor, eps: float = DEFAULT_EPS) -> Tensor:
    if f_c.shape[1] != f_s.shape[1]:
        raise ShapeError(f"adain channel mismatch: content {f_c.shape} vs style {f_s.shape}")
    mu_c, sig_c = instance_moments(f_c, eps)
    mu_s, sig_s = instance_moments(f_s, eps)
    return (f_c - _bc(mu_c)) / _bc(sig_c) * _bc(sig_s) + _bc(mu_s)


def cin_apply(f_c: Tensor, style_id, bank: CinBank, eps: float = DEFAULT_EPS) -> Tensor:
    ids = np.atleast_1d(np.asarray(style_id, dtype=np.int64))
    if ids.size == 1 and f_c.shape[0] > 1:
        ids = np.repeat(ids, f_c.shape[0])
    if ids.size != f_c.shape[0]:
        raise ShapeError(f"{ids.size} style ids for a batch of {f_c.shape[0]}")
    gamma, beta = bank.lookup(ids)
    mu, sig = instance_moments(f_c, eps)
    return (f_c - _bc(mu)) / _bc(sig) * _bc(gamma) + _bc(beta)


def interpolate_feature(f_c: Tensor, t_styled: Tensor, alpha: float, f: RegressionFn = IDENTITY) -> Tensor:
    if not 0.0 <= alpha <= 1.0:
        raise ContractError(f"alpha must lie in [0, 1], got {alpha}")
    if f_c.shape != t_styled.shape:
        raise ShapeError(f"cannot interpolate {f_c.shape} with {t_styled.shape}")
    a = f(alpha)
    if a == 0.0:
        return f_c
    if a == 1.0:
        return t_styled
    return t_styled * a + f_c * (1.0 - a)


# -- whole model -----------------------------------------------------------------

StyleArg = Union[Tensor, int, Sequence[int]]


@dataclass
class StyleNet:
    encoder: Encoder
    decoder: Decoder
    transformer: str = "adain"
    bank: Optional[CinBank] = None
    eps: float = DEFAULT_EPS
    decoder_seed: int = 1
    meta: dict = field(default_factory=dict)

    @classmethod
    def build(
        cls,
        transformer: str = "adain",
        num_styles: int = 0,
        encoder_seed: int = 0,
        decoder_seed: int = 1,
        widths: Sequence[int] = DEFAULT_WIDTHS,
        eps: float = DEFAULT_EPS,
        meta: Optional[dict] = None,
    ) -> "StyleNet":
        if transformer not in ("adain", "cin"):
            raise UsageError(f"unknown transformer kind {transformer!r}")
        bank = None
        if transformer == "cin":
            bank = CinBank(num_styles, widths[2])
        return cls(
            Encoder(encoder_seed, widths),
            Decoder(decoder_seed, widths),
            transformer,
            bank,
            eps,
            decoder_seed,
            dict(meta or {}),
        )

    @property
    def widths(self) -> tuple:
        return self.encoder.widths

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        params = self.decoder.named_parameters()
        if self.bank is not None:
            params += self.bank.named_parameters()
        return params

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def checksum(self) -> str:
        h = hashlib.sha256(self.encoder.checksum().encode())
        for _, t in self.named_parameters():
            h.update(t.data.tobytes())
        return h.hexdigest()

    def encode(self, img: Tensor) -> FeaturePyramid:
        return self.encoder.encode(img)

    def _check_style_kind(self, style) -> None:
        is_image = isinstance(style, (Tensor, FeaturePyramid))
        if self.transformer == "adain" and not is_image:
            raise UsageError("an AdaIN model needs a style image, not a style id")
        if self.transformer == "cin" and is_image:
            raise UsageError("a CIN model needs a style id, not a style image")

    def transform(self, latent: Tensor, style) -> Tensor:
        """Align ``latent`` to ``style`` (image tensor / pyramid for AdaIN, id(s) for CIN)."""
        self._check_style_kind(style)
        if self.transformer == "adain":
            pyr = style if isinstance(style, FeaturePyramid) else self.encode(style)
            return adain(latent, pyr.latent, self.eps)
        return cin_apply(latent, style, self.bank, self.eps)

    def stylize(self, content: Tensor, style, alpha: float = 1.0, f: RegressionFn = IDENTITY) -> Tensor:
        self._check_style_kind(style)
        latent = self.encode(content).latent
        return self.decoder.decode(interpolate_feature(latent, self.transform(latent, style), alpha, f))


# -- checkpoint format -------------------------------------------------------------


def _header(model: StyleNet) -> dict:
    return {
        "architecture": {"widths": list(model.widths), "eps": model.eps},
        "seeds": {"encoder": model.encoder.seed, "decoder": model.decoder_seed},
        "transformer": model.transformer,
        "num_styles": model.bank.num_styles if model.bank is not None else 0,
        "meta": model.meta,
        "tensors": [{"name": n, "shape": list(t.shape)} for n, t in model.named_parameters()],
    }


def checkpoint_bytes(model: StyleNet) -> bytes:
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(json.dumps(_header(model), sort_keys=True, separators=(",", ":")).encode())
    buf.write(b"\n\n")
    for _, t in model.named_parameters():
        buf.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return buf.getvalue()


def save_checkpoint(model: StyleNet, path) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(model))


def read_checkpoint_header(raw: bytes) -> tuple[dict, int]:
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise FormatError("not a checkpoint: bad magic")
    end = raw.find(b"\n\n", len(CHECKPOINT_MAGIC))
    if end < 0:
        raise FormatError("checkpoint header is not terminated by a blank line")
    try:
        header = json.loads(raw[len(CHECKPOINT_MAGIC) : end])
    except json.JSONDecodeError as exc:
        raise FormatError(f"checkpoint header is not valid JSON: {exc}") from exc
    return header, end + 2


def checkpoint_from_bytes(raw: bytes) -> StyleNet:
    header, offset = read_checkpoint_header(raw)
    try:
        arch = header["architecture"]
        model = StyleNet.build(
            transformer=header["transformer"],
            num_styles=header["num_styles"],
            encoder_seed=header["seeds"]["encoder"],
            decoder_seed=header["seeds"]["decoder"],
            widths=arch["widths"],
            eps=arch["eps"],
            meta=header.get("meta", {}),
        )
        declared = header["tensors"]
    except (KeyError, TypeError, UsageError) as exc:
        raise FormatError(f"checkpoint header is incomplete: {exc}") from exc
    params = model.named_parameters()
    if [d["name"] for d in declared] != [n for n, _ in params]:
        raise FormatError("checkpoint tensor list does not match its declared architecture")
    for entry, (name, t) in zip(declared, params):
        if tuple(entry["shape"]) != t.shape:
            raise FormatError(f"tensor {name} has shape {entry['shape']}, expected {list(t.shape)}")
        nbytes = t.size * 8
        chunk = raw[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise FormatError(f"checkpoint truncated inside tensor {name}")
        t.data[...] = np.frombuffer(chunk, dtype="<f8").reshape(t.shape)
        offset += nbytes
    if offset != len(raw):
        raise FormatError(f"{len(raw) - offset} trailing bytes after the last tensor")
    return model


def load_checkpoint(path) -> StyleNet:
    with open(path, "rb") as fh:
        return checkpoint_from_bytes(fh.read())
