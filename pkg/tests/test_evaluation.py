import math

import numpy as np
import pytest

from unbiased_style.autodiff import Tensor
from unbiased_style.errors import ContractError, FormatError, UsageError
from unbiased_style.evaluation import (
    CURVE_COLUMNS,
    DEFAULT_ALPHA_GRID,
    MetricRecord,
    TestPair,
    alpha_curve,
    emit_grid,
    eval_losses,
    make_test_pairs,
    pair_losses,
    read_records,
    records_from_csv,
    records_to_csv,
    weight_curve,
    write_records,
)
from unbiased_style.image_io import gen_synthetic_dataset, load_ppm
from unbiased_style.networks import IDENTITY, SQRT, StyleNet, checkpoint_bytes


@pytest.fixture(scope="module")
def model():
    return StyleNet.build("adain", decoder_seed=11, meta={"w_s": 50.0})


@pytest.fixture(scope="module")
def pairs():
    rng = np.random.default_rng(3)
    return [TestPair(Tensor(rng.uniform(size=(1, 3, 32, 32))), Tensor(rng.uniform(size=(1, 3, 32, 32))), i) for i in range(3)]


def welford(values):
    n, mean, m2 = 0, 0.0, 0.0
    for v in values:
        n += 1
        d = v - mean
        mean += d / n
        m2 += d * (v - mean)
    return mean, math.sqrt(m2 / n)


def test_default_grid():
    assert DEFAULT_ALPHA_GRID == (0.0, 1 / 6, 1 / 3, 1 / 2, 2 / 3, 5 / 6, 1.0)


def test_csv_column_order():
    assert CURVE_COLUMNS == (
        "w_s", "alpha", "n_pairs", "content_mean", "content_std", "style_mean", "style_std",
        "ustyle_mean", "ustyle_std", "astyle_mean", "astyle_std",
    )  # fmt: skip


def test_ideal_reconstructor_at_alpha_zero(pairs):
    ideal = StyleNet.build("adain", widths=(4, 6, 8, 8))
    ideal.stylize = lambda content, style, alpha, f=IDENTITY: content
    rec = eval_losses(ideal, pairs, 0.0)
    assert rec.content_mean == 0.0 and rec.ustyle_mean == 0.0 and rec.astyle_mean == 0.0


def test_single_pair_has_zero_std(model, pairs):
    rec = eval_losses(model, pairs[:1], 0.5)
    assert rec.n_pairs == 1
    assert rec.content_std == rec.style_std == rec.ustyle_std == rec.astyle_std == 0.0


def test_means_match_streaming_oracle(model, pairs):
    before = model.checksum()
    rec = eval_losses(model, pairs, 0.4)
    per = [pair_losses(model, p, 0.4) for p in pairs]
    for m in ("content", "style", "ustyle", "astyle"):
        mean, std = welford([d[m] for d in per])
        assert abs(getattr(rec, f"{m}_mean") - mean) <= 1e-10 * max(1, abs(mean))
        assert abs(getattr(rec, f"{m}_std") - std) <= 1e-10 * max(1, abs(mean))
        assert getattr(rec, f"{m}_std") >= 0
    assert rec.w_s == 50.0 and rec.alpha == 0.4
    assert model.checksum() == before


def test_astyle_endpoints(model, pairs):
    r0, r1 = eval_losses(model, pairs, 0.0), eval_losses(model, pairs, 1.0)
    assert r0.astyle_mean == pytest.approx(r0.ustyle_mean, rel=1e-12)
    assert r1.astyle_mean == pytest.approx(r1.style_mean, rel=1e-12)


def test_eval_errors(model, pairs):
    with pytest.raises(UsageError):
        eval_losses(model, [], 0.5)
    with pytest.raises(ContractError):
        alpha_curve(model, pairs, [0.5, 0.0])
    with pytest.raises(ContractError):
        alpha_curve(model, pairs, [0.0, 1.2])


def test_alpha_curve_is_composition(model, pairs):
    recs = alpha_curve(model, pairs[:2], [0.0, 1.0])
    assert [r.alpha for r in recs] == [0.0, 1.0]
    assert recs[1] == eval_losses(model, pairs[:2], 1.0)


def test_weight_curve(model, pairs):
    other = StyleNet.build("adain", decoder_seed=11, meta={"w_s": 10.0})
    recs = weight_curve([model, other], pairs[:1])
    assert [(r.w_s, r.alpha) for r in recs] == [(10.0, 0.0), (10.0, 1.0), (50.0, 0.0), (50.0, 1.0)]
    twin = weight_curve([model, model], pairs[:1])
    assert twin[0] == twin[2] and twin[1] == twin[3]
    with pytest.raises(UsageError):
        weight_curve([model], pairs)
    with pytest.raises(FormatError):
        weight_curve([model, StyleNet.build("adain")], pairs)


def test_weight_curve_reads_checkpoints(model, pairs, tmp_path):
    paths = []
    for ws in (1e4, 50.0):
        m = StyleNet.build("adain", decoder_seed=11, meta={"w_s": ws})
        paths.append(tmp_path / f"{ws:g}.ckpt")
        paths[-1].write_bytes(checkpoint_bytes(m))
    recs = weight_curve(paths, pairs[:1], [0.0])
    assert [r.w_s for r in recs] == [50.0, 1e4]
    (tmp_path / "bad.ckpt").write_bytes(b"junk")
    with pytest.raises(FormatError):
        weight_curve([paths[0], tmp_path / "bad.ckpt"], pairs)


def test_csv_round_trip(model, pairs, tmp_path):
    recs = alpha_curve(model, pairs[:2], [0.0, 1 / 3, 1.0])
    text = records_to_csv(recs)
    assert text.splitlines()[0] == ",".join(CURVE_COLUMNS)
    assert records_from_csv(text) == recs
    write_records(recs, tmp_path / "c.csv")
    assert read_records(tmp_path / "c.csv") == recs
    with pytest.raises(FormatError):
        records_from_csv("alpha,w_s\n")


def test_make_test_pairs(tmp_path):
    m = gen_synthetic_dataset(5, 3, 2, 40, tmp_path)
    pairs = make_test_pairs(m, n_pairs=5, image_size=32)
    assert len(pairs) == 5 and [p.style_id for p in pairs] == [0, 1, 0, 1, 0]
    assert pairs[0].content.shape == (1, 3, 32, 32)
    assert pairs[3].content.data.tobytes() == pairs[0].content.data.tobytes()


def test_cin_pairs_need_ids():
    cin = StyleNet.build("cin", num_styles=2, widths=(4, 6, 8, 8))
    img = Tensor(np.full((1, 3, 16, 16), 0.5))
    with pytest.raises(UsageError):
        pair_losses(cin, TestPair(img, img, None), 0.5)
    assert pair_losses(cin, TestPair(img, img, 1), 0.5)["content"] >= 0


# -- grids -------------------------------------------------------------------------------


def test_grid_strip_layout(model, tmp_path):
    rng = np.random.default_rng(0)
    content = Tensor(rng.uniform(size=(1, 3, 64, 64)))
    style = Tensor(rng.uniform(size=(1, 3, 64, 64)))
    grid = [0.0, 0.25, 0.5, 0.75, 1.0]
    img = emit_grid(model, [content], [style], grid, path=tmp_path / "g.ppm")
    assert (img.width, img.height) == (5 * 64, 64)
    assert load_ppm(tmp_path / "g.ppm").pixels.shape == (64, 320, 3)
    cell = model.stylize(content, style, 0.75).data[0].transpose(1, 2, 0)
    np.testing.assert_array_equal(img.pixels[:, 192:256], cell)


def test_grid_endpoint_column_and_sqrt_row(model, tmp_path):
    rng = np.random.default_rng(1)
    content = Tensor(rng.uniform(size=(1, 3, 32, 32)))
    styles = [Tensor(rng.uniform(size=(1, 3, 32, 32))) for _ in range(2)]
    grid = [0.0, 0.25, 0.5, 1.0]
    img = emit_grid(model, [content], styles, grid, [IDENTITY, SQRT]).pixels
    assert img.shape == (4 * 32, 4 * 32, 3)
    rows = [img[32 * r : 32 * (r + 1)] for r in range(4)]  # (style0, id), (style0, sqrt), (style1, id), (style1, sqrt)
    for r in rows[1:]:
        np.testing.assert_array_equal(r[:, :32], rows[0][:, :32])
    np.testing.assert_array_equal(rows[1][:, 32:64], rows[0][:, 64:96])
    again = emit_grid(model, [content], styles, grid, [IDENTITY, SQRT]).pixels
    assert again.tobytes() == img.tobytes()
