"""Content, style, smoothness, reconstruction and anchor losses, and their weighted total.

All norms are means over elements, so magnitudes do not depend on image
size. Style distances compare per-channel instance means and standard
deviations at every pyramid level.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .autodiff import Tensor, instance_moments
from .errors import ContractError, ShapeError, UsageError
from .networks import DEFAULT_EPS, FeaturePyramid

MODES = ("biased", "unbiased", "anchored")


@dataclass(frozen=True)
class LossWeights:
    w_c: float = 1.0
    w_s: float = 50.0
    w_t: float = 1e-3
    w_r: Optional[float] = None  # None -> 100 * w_s

    def __post_init__(self):
        if self.w_r is None:
            object.__setattr__(self, "w_r", 100.0 * self.w_s)
        for name in ("w_c", "w_s", "w_t", "w_r"):
            if getattr(self, name) < 0:
                raise ContractError(f"loss weight {name} must be non-negative")


def _same_shape(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {a.shape} and {b.shape} differ")


def content_loss(feat_out: Tensor, feat_target: Tensor) -> Tensor:
    _same_shape(feat_out, feat_target, "content_loss")
    return (feat_out - feat_target).square().mean()


def _stats(pyr: FeaturePyramid, eps: float) -> list:
    return [instance_moments(level, eps) for level in pyr.levels]


def _stat_distance(out_stats, target_stats) -> Tensor:
    total = None
    for (mu_o, sig_o), (mu_t, sig_t) in zip(out_stats, target_stats):
        _same_shape(mu_o, mu_t, "style statistics")
        term = (mu_o - mu_t).square().mean() + (sig_o - sig_t).square().mean()
        total = term if total is None else total + term
    return total


def style_loss(pyr_out: FeaturePyramid, pyr_target: FeaturePyramid, eps: float = DEFAULT_EPS) -> Tensor:
    if len(pyr_out.levels) != len(pyr_target.levels):
        raise ShapeError("style_loss: pyramids have different depths")
    return _stat_distance(_stats(pyr_out, eps), _stats(pyr_target, eps))


def anchor_style_loss(
    pyr_out: FeaturePyramid,
    pyr_style: FeaturePyramid,
    pyr_content: FeaturePyramid,
    alpha: float,
    eps: float = DEFAULT_EPS,
) -> Tensor:
    """Distance to the alpha-blend of style and content statistics at every level."""
    if not 0.0 <= alpha <= 1.0:
        raise ContractError(f"alpha must lie in [0, 1], got {alpha}")
    targets = []
    for (mu_s, sig_s), (mu_c, sig_c) in zip(_stats(pyr_style, eps), _stats(pyr_content, eps)):
        targets.append((mu_s * alpha + mu_c * (1.0 - alpha), sig_s * alpha + sig_c * (1.0 - alpha)))
    return _stat_distance(_stats(pyr_out, eps), targets)


def tv_loss(img: Tensor) -> Tensor:
    """Mean squared horizontal plus mean squared vertical forward difference."""
    h, w = img.shape[-2:]
    if h < 2 and w < 2:
        raise ContractError(f"tv_loss needs at least 2 pixels along one axis, got {h}x{w}")
    total = None
    if w >= 2:
        total = (img[..., :, 1:] - img[..., :, :-1]).square().mean()
    if h >= 2:
        dy = (img[..., 1:, :] - img[..., :-1, :]).square().mean()
        total = dy if total is None else total + dy
    return total


def reconstruct_loss(i_u: Tensor, i_c: Tensor) -> Tensor:
    _same_shape(i_u, i_c, "reconstruct_loss")
    return (i_u - i_c).abs().mean()


# -- assembly ---------------------------------------------------------------------


@dataclass
class BranchOutput:
    """Decoded image of one training branch and its encoder pyramid."""

    image: Tensor
    pyramid: FeaturePyramid
    alpha: float


@dataclass
class Targets:
    content_image: Tensor
    content_pyramid: FeaturePyramid
    style_pyramid: FeaturePyramid


@dataclass
class LossBreakdown:
    content: float = 0.0
    style: float = 0.0
    tv: float = 0.0
    reconstruct: float = 0.0
    u_content: float = 0.0
    u_style: float = 0.0
    u_tv: float = 0.0
    a_content: list = field(default_factory=list)
    a_style: list = field(default_factory=list)
    a_tv: list = field(default_factory=list)
    anchors: list = field(default_factory=list)
    total: float = 0.0

    def scalar_terms(self) -> dict:
        """Every individual term by name, anchors suffixed with their index."""
        out = {k: getattr(self, k) for k in ("content", "style", "tv", "reconstruct", "u_content", "u_style", "u_tv")}
        for i in range(len(self.anchors)):
            out[f"a_content_{i}"] = self.a_content[i]
            out[f"a_style_{i}"] = self.a_style[i]
            out[f"a_tv_{i}"] = self.a_tv[i]
        return out


def total_loss(
    biased: BranchOutput,
    unbiased: Optional[BranchOutput],
    anchors: Sequence[BranchOutput],
    targets: Targets,
    weights: LossWeights,
    modes: Sequence[str] = MODES,
    eps: float = DEFAULT_EPS,
) -> tuple[Tensor, LossBreakdown]:
    """Weighted sum of biased, unbiased and anchor terms.

    The unbiased branch is scored against the content image for both its
    content and style terms. Branches whose mode is disabled contribute
    nothing and leave their breakdown fields at zero.
    """
    modes = set(modes)
    unknown = modes - set(MODES)
    if unknown:
        raise UsageError(f"unknown training modes {sorted(unknown)}")
    if "biased" not in modes:
        raise UsageError("the biased branch is always required")
    if "unbiased" in modes and unbiased is None:
        raise UsageError("unbiased mode is enabled but no unbiased output was given")
    if "anchored" in modes and not anchors:
        raise UsageError("anchored mode is enabled but no anchor outputs were given")

    wc, ws, wt, wr = weights.w_c, weights.w_s, weights.w_t, weights.w_r
    c_latent = targets.content_pyramid.latent
    bd = LossBreakdown()

    content = content_loss(biased.pyramid.latent, c_latent)
    style = style_loss(biased.pyramid, targets.style_pyramid, eps)
    tv = tv_loss(biased.image)
    total = content * wc + style * ws + tv * wt
    bd.content, bd.style, bd.tv = content.item(), style.item(), tv.item()

    if "unbiased" in modes:
        u_content = content_loss(unbiased.pyramid.latent, c_latent)
        u_style = style_loss(unbiased.pyramid, targets.content_pyramid, eps)
        u_tv = tv_loss(unbiased.image)
        recon = reconstruct_loss(unbiased.image, targets.content_image)
        total = total + u_content * wc + u_style * ws + u_tv * wt + recon * wr
        bd.u_content, bd.u_style, bd.u_tv, bd.reconstruct = u_content.item(), u_style.item(), u_tv.item(), recon.item()

    if "anchored" in modes:
        for branch in anchors:
            a_content = content_loss(branch.pyramid.latent, c_latent)
            a_style = anchor_style_loss(branch.pyramid, targets.style_pyramid, targets.content_pyramid, branch.alpha, eps)
            a_tv = tv_loss(branch.image)
            total = total + a_content * wc + a_style * ws + a_tv * wt
            bd.anchors.append(branch.alpha)
            bd.a_content.append(a_content.item())
            bd.a_style.append(a_style.item())
            bd.a_tv.append(a_tv.item())

    bd.total = total.item()
    return total, bd
