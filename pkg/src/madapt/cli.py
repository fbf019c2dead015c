"""``madapt`` command line: train, stylize, interpolate, gradcheck.

Exit codes: 0 success, 1 numeric/verification failure, 2 usage error,
3 I/O or format error.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import image_io
from .codec import EncoderSpec, load_weights
from .errors import ConfigError, ContractError, DimensionError, FormatError, NumericError
from .gradcheck import check_parameters
from .losses import LossConfig
from .model import Model
from .tensor import Tensor, no_grad
from .training import (
    Quadruplet, TrainConfig, compute_losses, frozen_copy, load_image_set,
    read_config_file, train,
)
from .whitening import WhitenConfig

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
GRADCHECK_TOL = 1e-4

log = logging.getLogger("madapt")


class UsageError(Exception):
    pass


def _require_file(path, what):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"{what} not found: {path}")


def _load_model(path, ca_kernel):
    _require_file(path, "weights file")
    model = Model.from_weights(load_weights(path))
    if model.ca_kernel != ca_kernel:
        raise ConfigError(
            f"--ca-kernel {ca_kernel} does not match the weights (trained with {model.ca_kernel}x{model.ca_kernel})"
        )
    return model


def _save_output(image, out_path):
    image_io.save_image(image_io.from_tensor(image), out_path)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def run_stylize(weights, content_path, style_path, out_path, alpha=1.0, ca_kernel=1,
                whiten="iterative"):
    if not 0.0 <= alpha <= 1.0:
        raise UsageError(f"--alpha must lie in [0, 1], got {alpha}")
    _require_file(content_path, "content image")
    _require_file(style_path, "style image")
    model = _load_model(weights, ca_kernel)
    content = image_io.to_tensor(image_io.load_image(content_path))
    style = image_io.to_tensor(image_io.load_image(style_path))
    with no_grad():
        out = model.stylize(content, style, alpha, WhitenConfig(mode=whiten))
    _save_output(out, out_path)
    return EXIT_OK


def parse_style_spec(spec):
    path, sep, weight = spec.rpartition(":")
    if not sep or not path:
        raise UsageError(f"--style expects IMG:WEIGHT, got {spec!r}")
    try:
        return path, float(weight)
    except ValueError:
        raise UsageError(f"--style weight is not a number in {spec!r}") from None


def run_interpolate(weights, content_path, styles, out_path, ca_kernel=1, whiten="iterative"):
    """``styles`` is a list of (path, weight); summed in a canonical order."""
    styles = sorted(styles)
    ws = np.array([w for _, w in styles])
    if not styles or np.any(ws < 0) or abs(ws.sum() - 1.0) > 1e-9:
        raise UsageError(f"style weights must be non-negative and sum to 1, got {ws.tolist()}")
    _require_file(content_path, "content image")
    for path, _ in styles:
        _require_file(path, "style image")
    model = _load_model(weights, ca_kernel)
    content = image_io.to_tensor(image_io.load_image(content_path))
    imgs = [(image_io.to_tensor(image_io.load_image(p)), w) for p, w in styles]
    with no_grad():
        out = model.interpolate(content, imgs, WhitenConfig(mode=whiten))
    _save_output(out, out_path)
    return EXIT_OK


def pipeline_gradcheck(seed=0, channels=(4, 4, 4, 4), image_size=64, h=1e-7, ca_kernel=1):
    """Finite-difference check of every parameter through the full training loss.

    The step is small because a 64x64 image puts tens of thousands of ReLU and
    max-pool kinks behind each first-layer weight; at h=1e-5 a fifth of those
    coordinates straddle one. Round-off only dominates below about 1e-8.

    Returns ``group -> (max relative error, worst parameter name)``.
    """
    rng = np.random.default_rng(seed)
    model = Model.initialize(rng, EncoderSpec(tuple(channels)), ca_kernel=ca_kernel)
    # zero biases put dead ReLU regions exactly on the kink; move off it
    for name, t in model.params.items():
        if name.endswith(".bias"):
            t.data += rng.normal(0.0, 0.1, t.shape)
    lossnet = frozen_copy(model.params)
    imgs = [Tensor(rng.uniform(0, 1, (1, 3, image_size, image_size))) for _ in range(4)]
    quad = Quadruplet(*imgs, content_idx=((0, 1),), style_idx=((0, 1),))

    def loss_fn():
        return compute_losses(model, lossnet, quad, LossConfig())[1]

    per_param = check_parameters(loss_fn, model.params, h)
    groups = {}
    for name, err in per_param.items():
        g = model.group_of(name)
        if g not in groups or err > groups[g][0]:
            groups[g] = (err, name)
    return groups


def run_gradcheck(seed=0, out=None, **shape_kw):
    """Print one line per parameter group; ``shape_kw`` goes to pipeline_gradcheck."""
    out = sys.stdout if out is None else out
    groups = pipeline_gradcheck(seed, **shape_kw)
    _, (worst, worst_name) = max(groups.items(), key=lambda kv: kv[1][0])
    for g in sorted(groups):
        err, name = groups[g]
        status = "ok" if err < GRADCHECK_TOL else "FAIL"
        print(f"{g:<12} max_rel_err={err:.3e}  {status}  (worst: {name})", file=out)
    if worst >= GRADCHECK_TOL:
        print(f"gradcheck FAILED: {worst_name} relative error {worst:.3e} >= {GRADCHECK_TOL:g}", file=out)
        return EXIT_NUMERIC
    print(f"gradcheck passed: all groups < {GRADCHECK_TOL:g}", file=out)
    return EXIT_OK


def run_train(args):
    train_kw, loss_kw = read_config_file(args.config) if args.config else ({}, {})
    if args.crop is not None:
        train_kw["crop_size"] = args.crop
    if args.steps is not None:
        train_kw["max_steps"] = args.steps
    if args.seed is not None:
        train_kw["seed"] = args.seed
    if args.freeze_encoder:
        train_kw["freeze_encoder"] = True
    if args.no_disentanglement:
        loss_kw["enable_disentanglement"] = False
    cfg = TrainConfig(**train_kw)
    loss_cfg = LossConfig(**loss_kw)
    for d in (args.content, args.style):
        if not os.path.isdir(d):
            raise FileNotFoundError(f"dataset directory not found: {d}")
    model = None
    if args.init_weights:
        _require_file(args.init_weights, "initial weights")
        model = Model.from_weights(load_weights(args.init_weights))
    content_set = load_image_set(args.content, cfg.crop_size)
    style_set = load_image_set(args.style, cfg.crop_size)
    _, _, metrics = train(content_set, style_set, args.out, cfg, loss_cfg, model=model)
    log.info("training finished; metrics in %s", metrics)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="madapt", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train on directories of content and style images")
    t.add_argument("--content", required=True)
    t.add_argument("--style", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--crop", type=int)
    t.add_argument("--steps", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--no-disentanglement", action="store_true")
    t.add_argument("--freeze-encoder", action="store_true")
    t.add_argument("--init-weights", help="start from an existing weight file")
    t.add_argument("--config", help="key=value file with TrainConfig/LossConfig fields")

    s = sub.add_parser("stylize", help="stylize one content image with one style image")
    s.add_argument("--weights", required=True)
    s.add_argument("--content", required=True)
    s.add_argument("--style", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--ca-kernel", type=int, choices=(1, 3), default=1)
    s.add_argument("--whiten", choices=("iterative", "exact"), default="iterative")

    i = sub.add_parser("interpolate", help="blend several styles with convex weights")
    i.add_argument("--weights", required=True)
    i.add_argument("--content", required=True)
    i.add_argument("--style", action="append", required=True, metavar="IMG:W")
    i.add_argument("--out", required=True)
    i.add_argument("--ca-kernel", type=int, choices=(1, 3), default=1)
    i.add_argument("--whiten", choices=("iterative", "exact"), default="iterative")

    g = sub.add_parser("gradcheck", help="finite-difference check of the full loss")
    g.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        if args.command == "train":
            return run_train(args)
        if args.command == "stylize":
            return run_stylize(args.weights, args.content, args.style, args.out,
                               args.alpha, args.ca_kernel, args.whiten)
        if args.command == "interpolate":
            styles = [parse_style_spec(s) for s in args.style]
            return run_interpolate(args.weights, args.content, styles, args.out,
                                   args.ca_kernel, args.whiten)
        return run_gradcheck(args.seed)
    except (UsageError, ContractError, ConfigError, DimensionError) as exc:
        print(f"madapt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"madapt: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, OSError) as exc:
        print(f"madapt: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
