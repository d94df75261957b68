"""Command-line entry point.

Exit status: 0 on success, 1 on usage errors, 2 on data or format errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ContractError, FormatError, TrainingDiverged, UsageError
from .evaluation import DEFAULT_ALPHA_GRID, alpha_curve, emit_grid, make_test_pairs, weight_curve, write_records
from .image_io import DatasetManifest, Image, gen_dataset_splits, load_ppm, resize_shortside_and_crop, save_ppm
from .networks import load_checkpoint, regression_fn
from .training import TrainConfig, sweep_style_weight, train

log = logging.getLogger("unbiased_style")

COMMANDS = ("gen-data", "train", "sweep", "curve-alpha", "curve-weight", "stylize", "grid")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list:
    try:
        return [float(eval_fraction(t)) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc


def eval_fraction(token: str) -> float:
    token = token.strip()
    if "/" in token:
        num, den = token.split("/", 1)
        return float(num) / float(den)
    return float(token)


def _load_config(args) -> TrainConfig:
    base = TrainConfig.load(args.config).to_dict() if args.config else {}
    overrides = {
        "manifest": args.manifest,
        "steps": args.steps,
        "seed": args.seed,
        "w_s": args.w_s,
        "lr": args.lr,
        "transformer": args.transformer,
        "batch": args.batch,
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    if args.modes is not None:
        base["modes"] = [m.strip() for m in args.modes.split(",") if m.strip()]
    if args.anchors is not None:
        base["anchors"] = _floats(args.anchors)
    return TrainConfig.from_dict(base)


def _image_size(args) -> int:
    if getattr(args, "image_size", None):
        return args.image_size
    if getattr(args, "config", None):
        return TrainConfig.load(args.config).image_size
    return 64


def _read_image(path, size: int) -> Image:
    return resize_shortside_and_crop(load_ppm(path), size, size)


def cmd_gen_data(args) -> None:
    train_m, test_m = gen_dataset_splits(
        args.seed, args.n_content, args.n_style, args.size, args.out, args.n_test_content, args.n_test_style
    )
    print(f"wrote {len(train_m.content_paths)}+{len(train_m.style_paths)} training and "
          f"{len(test_m.content_paths)}+{len(test_m.style_paths)} test images under {args.out}")  # fmt: skip


def cmd_train(args) -> None:
    config = _load_config(args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    log_path = Path(args.log) if args.log else out.with_suffix(".csv")
    train(config, checkpoint_path=out, log_path=log_path)
    print(f"checkpoint {out}, log {log_path}")


def cmd_sweep(args) -> None:
    config = _load_config(args)
    paths = sweep_style_weight(config, _floats(args.ws), args.out_dir)
    for p in paths:
        print(p)


def _pairs(args, model):
    content = DatasetManifest.load(args.test_manifest)
    style = DatasetManifest.load(args.style_manifest) if args.style_manifest else None
    if model.transformer == "cin" and style is None:
        raise UsageError("a CIN checkpoint needs --style-manifest naming its training styles")
    return make_test_pairs(content, style, args.pairs, _image_size(args))


def cmd_curve_alpha(args) -> None:
    model = load_checkpoint(args.checkpoint)
    grid = _floats(args.grid) if args.grid else list(DEFAULT_ALPHA_GRID)
    records = alpha_curve(model, _pairs(args, model), grid, regression_fn(args.f))
    write_records(records, args.out)
    print(f"{len(records)} records -> {args.out}")


def cmd_curve_weight(args) -> None:
    models = [load_checkpoint(p) for p in args.checkpoints]
    pairs = _pairs(args, models[0])
    records = weight_curve(models, pairs, _floats(args.alphas))
    write_records(records, args.out)
    print(f"{len(records)} records -> {args.out}")


def _style_arg(model, args, size):
    if model.transformer == "cin":
        if args.style_id is None:
            raise UsageError("a CIN checkpoint needs --style-id")
        return args.style_id
    if args.style is None:
        raise UsageError("an AdaIN checkpoint needs --style IMAGE")
    return _read_image(args.style, size).to_tensor()


def cmd_stylize(args) -> None:
    model = load_checkpoint(args.checkpoint)
    size = _image_size(args)
    content = _read_image(args.content, size).to_tensor()
    out = model.stylize(content, _style_arg(model, args, size), args.alpha, regression_fn(args.f))
    save_ppm(Image.from_tensor(out), args.out)
    print(args.out)


def cmd_grid(args) -> None:
    model = load_checkpoint(args.checkpoint)
    size = _image_size(args)
    contents = [_read_image(p, size).to_tensor() for p in args.content]
    if model.transformer == "cin":
        styles = [int(s) for s in args.style]
    else:
        styles = [_read_image(p, size).to_tensor() for p in args.style]
    fns = [regression_fn(name) for name in args.f.split(",")]
    grid = _floats(args.grid) if args.grid else list(DEFAULT_ALPHA_GRID)
    emit_grid(model, contents, styles, grid, fns, args.out)
    print(args.out)


def cmd_verify(args) -> None:
    from .reference_oracles import reports_to_csv
    from .verify import run_verification

    text = reports_to_csv(run_verification(args.seed))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _train_flags(p) -> None:
    p.add_argument("--config", help="JSON training config")
    p.add_argument("--manifest")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--w-s", dest="w_s", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--transformer", choices=("adain", "cin"))
    p.add_argument("--modes", help="comma list from biased,unbiased,anchored")
    p.add_argument("--anchors", help="comma list of alphas, fractions allowed (1/3,2/3)")


def _eval_flags(p) -> None:
    p.add_argument("--config", help="JSON config (image_size is read from it)")
    p.add_argument("--test-manifest", required=True)
    p.add_argument("--style-manifest", help="style images for the pairs (default: the test manifest's)")
    p.add_argument("--pairs", type=int, default=32)
    p.add_argument("--image-size", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="unbiased-style", description="Unbiased style-transfer training and evaluation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="{" + ",".join(COMMANDS) + "}")

    p = sub.add_parser("gen-data", help="write a synthetic train/test dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-content", type=int, default=32)
    p.add_argument("--n-style", type=int, default=8)
    p.add_argument("--n-test-content", type=int, default=32)
    p.add_argument("--n-test-style", type=int, default=8)
    p.add_argument("--size", type=int, default=80)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one model")
    _train_flags(p)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="training log CSV (default: next to the checkpoint)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="train one model per style weight")
    _train_flags(p)
    p.add_argument("--ws", default="50,100,1000,10000")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("curve-alpha", help="losses versus alpha for one checkpoint")
    p.add_argument("--checkpoint", required=True)
    _eval_flags(p)
    p.add_argument("--grid", help="comma list of alphas")
    p.add_argument("--f", default="identity")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curve_alpha)

    p = sub.add_parser("curve-weight", help="losses versus style weight over several checkpoints")
    p.add_argument("--checkpoints", nargs="+", required=True)
    _eval_flags(p)
    p.add_argument("--alphas", default="0,1")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curve_weight)

    p = sub.add_parser("stylize", help="stylize one content image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config")
    p.add_argument("--content", required=True)
    p.add_argument("--style")
    p.add_argument("--style-id", type=int)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--f", default="identity")
    p.add_argument("--image-size", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stylize)

    p = sub.add_parser("grid", help="tile stylizations over an alpha grid into one PPM")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config")
    p.add_argument("--content", nargs="+", required=True)
    p.add_argument("--style", nargs="+", required=True, help="style images (AdaIN) or ids (CIN)")
    p.add_argument("--grid", help="comma list of alphas")
    p.add_argument("--f", default="identity", help="comma list of regression functions, one row each")
    p.add_argument("--image-size", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("verify")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)
    # keep verify out of the usage listing
    sub._choices_actions = [a for a in sub._choices_actions if a.dest != "verify"]
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("no command given")
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (UsageError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, TrainingDiverged, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
