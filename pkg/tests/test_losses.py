import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unbiased_style.autodiff import Tensor, instance_moments
from unbiased_style.errors import ContractError, ShapeError, UsageError
from unbiased_style.losses import (
    BranchOutput,
    LossWeights,
    Targets,
    anchor_style_loss,
    content_loss,
    reconstruct_loss,
    style_loss,
    total_loss,
    tv_loss,
)
from unbiased_style.networks import Encoder, FeaturePyramid
from unbiased_style.reference_oracles import oracle_moments, oracle_weighted_total

EPS = 1e-5


@pytest.fixture(scope="module")
def encoder():
    return Encoder(seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def random_pyramid(rng, n=2, scale=1.0, shift=0.0):
    shapes = [(n, 2, 8, 8), (n, 3, 4, 4), (n, 4, 2, 2), (n, 5, 2, 2)]
    return FeaturePyramid(tuple(Tensor(rng.normal(size=s) * scale + shift) for s in shapes))


def oracle_stat_distance(out_levels, target_stats):
    total = 0.0
    for lv, (mu_t, sig_t) in zip(out_levels, target_stats):
        mu, var = oracle_moments(lv)
        total += np.mean((mu - mu_t) ** 2) + np.mean((np.sqrt(var + EPS) - sig_t) ** 2)
    return total


def pyramid_stats(pyr):
    return [(m, np.sqrt(v + EPS)) for m, v in (oracle_moments(lv.data) for lv in pyr.levels)]


# -- content / tv / reconstruct -----------------------------------------------------------


def test_content_loss_examples(rng):
    a = rng.normal(size=(2, 3, 4, 4))
    assert content_loss(Tensor(a), Tensor(a)).item() == 0.0
    assert content_loss(Tensor(a), Tensor(a + 1)).item() == pytest.approx(1.0, abs=1e-15)
    b = rng.normal(size=a.shape)
    expected = sum((x - y) ** 2 for x, y in zip(a.ravel(), b.ravel())) / a.size
    assert content_loss(Tensor(a), Tensor(b)).item() == pytest.approx(expected, rel=1e-13)
    with pytest.raises(ShapeError):
        content_loss(Tensor(a), Tensor(b[:, :2]))


def test_tv_loss_examples(rng):
    assert tv_loss(Tensor(np.full((1, 3, 4, 4), 0.3))).item() == 0.0
    assert tv_loss(Tensor(np.array([[[[0.0, 1.0]]]]))).item() == 1.0
    x = rng.normal(size=(1, 2, 3, 4))
    dx = [(x[0, c, i, j + 1] - x[0, c, i, j]) ** 2 for c in range(2) for i in range(3) for j in range(3)]
    dy = [(x[0, c, i + 1, j] - x[0, c, i, j]) ** 2 for c in range(2) for i in range(2) for j in range(4)]
    assert tv_loss(Tensor(x)).item() == pytest.approx(np.mean(dx) + np.mean(dy), rel=1e-13)
    with pytest.raises(ContractError):
        tv_loss(Tensor(np.zeros((1, 1, 1, 1))))


def test_reconstruct_loss_examples(rng):
    a = rng.uniform(size=(1, 3, 4, 4)) * 0.5
    assert reconstruct_loss(Tensor(a), Tensor(a)).item() == 0.0
    assert reconstruct_loss(Tensor(a + 0.5), Tensor(a)).item() == pytest.approx(0.5, abs=1e-15)
    b = rng.uniform(size=a.shape)
    assert reconstruct_loss(Tensor(a), Tensor(b)).item() == pytest.approx(np.abs(a - b).mean(), rel=1e-13)
    # subgradient at equality is zero
    t = Tensor(a.copy(), requires_grad=True)
    reconstruct_loss(t, Tensor(a)).backward()
    assert np.all(t.grad == 0)


# -- style --------------------------------------------------------------------------------------


def test_style_loss_self_zero_and_symmetric(rng):
    a, b = random_pyramid(rng), random_pyramid(rng, scale=2.0, shift=1.0)
    assert style_loss(a, a).item() == 0.0
    assert style_loss(a, b).item() == pytest.approx(style_loss(b, a).item(), rel=1e-14)


def test_style_loss_matches_oracle(rng):
    a, b = random_pyramid(rng), random_pyramid(rng, scale=1.5)
    expected = oracle_stat_distance([lv.data for lv in a.levels], pyramid_stats(b))
    assert style_loss(a, b).item() == pytest.approx(expected, rel=1e-12)


def test_style_loss_constant_images(encoder):
    pa = encoder.encode(Tensor(np.full((1, 3, 16, 16), 0.2)))
    pb = encoder.encode(Tensor(np.full((1, 3, 16, 16), 0.7)))
    expected = 0.0
    for la, lb in zip(pa.levels, pb.levels):
        # constant input stays spatially constant through reflect-padded convs
        assert np.ptp(la.data, axis=(2, 3)).max() < 1e-12
        mu_a, mu_b = la.data[0, :, 0, 0], lb.data[0, :, 0, 0]
        expected += np.mean((mu_a - mu_b) ** 2)
    assert style_loss(pa, pb).item() == pytest.approx(expected, rel=1e-10)


def test_style_loss_level_mismatch(rng):
    a = random_pyramid(rng)
    with pytest.raises(ShapeError):
        style_loss(a, random_pyramid(rng, n=3))


# -- anchor ----------------------------------------------------------------------------------


def test_anchor_endpoints(rng):
    out, sty, con = random_pyramid(rng), random_pyramid(rng, shift=1), random_pyramid(rng, scale=2)
    assert abs(anchor_style_loss(out, sty, con, 1.0).item() - style_loss(out, sty).item()) <= 1e-12
    assert abs(anchor_style_loss(out, sty, con, 0.0).item() - style_loss(out, con).item()) <= 1e-12
    with pytest.raises(ContractError):
        anchor_style_loss(out, sty, con, -0.1)


def midpoint_pyramid(rng, sty, con, alpha):
    levels = []
    for (mu_s, sig_s), (mu_c, sig_c) in zip(pyramid_stats(sty), pyramid_stats(con)):
        mu_t = alpha * mu_s + (1 - alpha) * mu_c
        sig_t = alpha * sig_s + (1 - alpha) * sig_c
        z = rng.normal(size=(mu_t.shape[0], mu_t.shape[1], 4, 4))
        z -= z.mean(axis=(2, 3), keepdims=True)
        z /= z.std(axis=(2, 3), keepdims=True)
        # choose the spread so sqrt(var + eps) hits the target sigma
        spread = np.sqrt(sig_t**2 - EPS)
        levels.append(Tensor(z * spread[..., None, None] + mu_t[..., None, None]))
    return FeaturePyramid(tuple(levels))


def test_anchor_midpoint_pyramid_is_zero(rng):
    sty, con = random_pyramid(rng, shift=1), random_pyramid(rng, scale=2)
    mid = midpoint_pyramid(rng, sty, con, 0.5)
    assert anchor_style_loss(mid, sty, con, 0.5).item() < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.integers(0, 10_000))
def test_anchor_matches_oracle(alpha, seed):
    r = np.random.default_rng(seed)
    out, sty, con = random_pyramid(r), random_pyramid(r, shift=1), random_pyramid(r, scale=2)
    targets = [(alpha * ms + (1 - alpha) * mc, alpha * ss + (1 - alpha) * sc) for (ms, ss), (mc, sc) in zip(pyramid_stats(sty), pyramid_stats(con))]
    expected = oracle_stat_distance([lv.data for lv in out.levels], targets)
    got = anchor_style_loss(out, sty, con, alpha).item()
    assert got >= 0
    assert got == pytest.approx(expected, rel=1e-10, abs=1e-14)


# -- total --------------------------------------------------------------------------------------


def test_default_weights():
    w = LossWeights()
    assert (w.w_c, w.w_t, w.w_r) == (1.0, 1e-3, 100 * w.w_s)
    assert LossWeights(w_s=1000).w_r == 1e5
    with pytest.raises(ContractError):
        LossWeights(w_t=-1)


def branches(encoder, rng, n_anchors=2):
    def out():
        img = Tensor(rng.uniform(size=(2, 3, 16, 16)))
        return img, encoder.encode(img)

    ci = Tensor(rng.uniform(size=(2, 3, 16, 16)))
    si = Tensor(rng.uniform(size=(2, 3, 16, 16)))
    targets = Targets(ci, encoder.encode(ci), encoder.encode(si))
    biased = BranchOutput(*out(), 1.0)
    unbiased = BranchOutput(*out(), 0.0)
    anchors = [BranchOutput(*out(), a) for a in (1 / 3, 2 / 3)[:n_anchors]]
    return biased, unbiased, anchors, targets


def test_total_matches_weighted_sum_oracle(encoder, rng):
    b, u, a, t = branches(encoder, rng)
    weights = LossWeights(w_c=1.3, w_s=50, w_t=1e-3)
    total, bd = total_loss(b, u, a, t, weights)
    assert total.item() == bd.total
    oracle = oracle_weighted_total(bd.scalar_terms(), weights, anchors=2)
    assert abs(bd.total - oracle) <= 1e-12 * max(1.0, abs(oracle))
    assert all(v > 0 for v in bd.scalar_terms().values())


def test_total_zero_when_all_terms_zero(encoder):
    img = Tensor(np.full((1, 3, 16, 16), 0.4))
    pyr = encoder.encode(img)
    t = Targets(img, pyr, pyr)
    total, bd = total_loss(BranchOutput(img, pyr, 1.0), BranchOutput(img, pyr, 0.0), [BranchOutput(img, pyr, 0.5)], t, LossWeights())
    assert total.item() == 0.0


def test_total_is_linear_in_each_weight(encoder, rng):
    b, u, a, t = branches(encoder, rng)
    base = dict(w_c=1.0, w_s=50.0, w_t=1e-3, w_r=5000.0)
    f = lambda **kw: total_loss(b, u, a, t, LossWeights(**{**base, **kw}))[1].total
    for name in base:
        v0, v1, v2 = f(**{name: 0.0}), f(**{name: 1.0}), f(**{name: 3.0})
        assert v2 - v0 == pytest.approx(3 * (v1 - v0), rel=1e-9)


def test_disabled_modes_recover_biased_loss(encoder, rng):
    b, u, a, t = branches(encoder, rng)
    w = LossWeights()
    full, _ = total_loss(b, u, a, t, w)
    only, bd = total_loss(b, None, [], t, w, modes=("biased",))
    assert bd.u_content == bd.u_style == bd.u_tv == bd.reconstruct == 0.0
    assert bd.a_style == []
    assert bd.total == pytest.approx(bd.content + w.w_s * bd.style + w.w_t * bd.tv, rel=1e-12)
    assert full.item() > only.item()


def test_missing_outputs_for_enabled_mode(encoder, rng):
    b, u, a, t = branches(encoder, rng)
    with pytest.raises(UsageError):
        total_loss(b, None, a, t, LossWeights())
    with pytest.raises(UsageError):
        total_loss(b, u, [], t, LossWeights())
