"""Command-line entry points.

One subcommand per pipeline stage plus `pipeline` (run a config file),
`ingest-itw` (build a training shard from in-the-wild footage), and
`validate` (check a config file and print every problem). Exit codes:
0 success, 1 validation failure, 2 runtime stage failure.

The default worker count comes from the PITCHBLUR_WORKERS environment
variable; parallelism never changes any output byte.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys

from .blur import BlurConfig
from .camera import OptimizerConfig
from .config import (
    AugmentStage,
    CalibrateStage,
    ConfigError,
    EnhanceStage,
    EvalStage,
    FlowStage,
    PipelineConfig,
    SyncStage,
    parse_patch_mode,
    validate_config,
)
from .enhance import EnhanceConfig
from .flow import FlowParams
from .pipeline import (
    StageError,
    _run_augment,
    _run_calibrate,
    _run_enhance,
    _run_eval,
    _run_flow,
    _run_sync,
    ingest_itw,
    run_pipeline,
)
from .sync import SyncWeights

logger = logging.getLogger(__name__)

WORKERS_ENV = "PITCHBLUR_WORKERS"


class _Parser(argparse.ArgumentParser):
    """Argument errors are validation failures, so they exit 1, not 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_range(text: str, kind=float) -> tuple:
    lo, sep, hi = text.partition(":")
    if not sep:
        raise ValueError(f"range must be 'lo:hi', got {text!r}")
    return (kind(lo), kind(hi))


def _parse_pair(text: str, sep: str, kind=float) -> tuple:
    a, s, b = text.partition(sep)
    if not s:
        raise ValueError(f"expected '{sep}'-separated pair, got {text!r}")
    return (kind(a), kind(b))


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(int(raw), 1)
    except ValueError:
        logger.warning("ignoring non-integer %s=%r", WORKERS_ENV, raw)
        return 1


def _add_workers(sub: argparse.ArgumentParser) -> None:
    sub.add_argument(
        "--workers",
        type=int,
        default=None,
        help=f"thread count (default: ${WORKERS_ENV} or 1); output-invariant",
    )


def _workers(args: argparse.Namespace) -> int:
    return max(args.workers, 1) if args.workers is not None else _default_workers()


def _add_blur_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--patch-mode", default="fixed:30", help="grid:RxC or fixed:S")
    sub.add_argument("--patches", type=int, default=3, help="patches blurred per frame")
    sub.add_argument(
        "--filters", type=int, default=2, help="kernels drawn per frame (0 = one per patch)"
    )
    sub.add_argument(
        "--effect",
        default="motion_blur",
        choices=("motion_blur", "gaussian_blur", "binary_mask", "none"),
    )
    sub.add_argument("--kernel-size", default="5:15", help="odd pixel range, e.g. 5:15")
    sub.add_argument("--angle", default="0:360", help="degree range, e.g. 0:360")
    sub.add_argument("--scale", default="0.8:1.2", help="streak scale range")
    sub.add_argument("--sigma", default="1:3", help="gaussian sigma range")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument(
        "--flow-metric", default="magnitude", choices=("magnitude", "vector_sum")
    )
    sub.add_argument(
        "--uncentered-affine",
        action="store_true",
        help="skip the kernel centering correction (compatibility variant)",
    )


def _blur_config(args: argparse.Namespace) -> BlurConfig:
    angle_deg = _parse_range(args.angle)
    return BlurConfig(
        patch_mode=parse_patch_mode(args.patch_mode),
        n_patches=args.patches,
        n_filters=args.filters,
        kernel_size_range=_parse_range(args.kernel_size, int),
        angle_range=(math.radians(angle_deg[0]), math.radians(angle_deg[1])),
        scale_range=_parse_range(args.scale),
        sigma_range=_parse_range(args.sigma),
        effect=args.effect,
        seed=args.seed,
        flow_metric=args.flow_metric,
        uncentered_affine=args.uncentered_affine,
    )


def _report(outputs) -> None:
    print(f"wrote {len(outputs)} file(s)")
    for p in outputs:
        print(f"  {p}")


def cmd_flow(args: argparse.Namespace) -> int:
    params = FlowParams(
        pyramid_levels=args.levels,
        block_radius=args.block_radius,
        search_radius=args.search_radius,
        smoothing_passes=args.smoothing,
    )
    cfg = PipelineConfig(
        flow=FlowStage(enabled=True, frames=args.frames, out=args.out, params=params)
    )
    _report(_run_flow(cfg, _workers(args)))
    return 0


def cmd_augment(args: argparse.Namespace) -> int:
    stage = AugmentStage(
        enabled=True,
        frames=args.frames,
        flows=args.flows,
        out=args.out,
        manifest=args.manifest or "",
        blur=_blur_config(args),
    )
    cfg = PipelineConfig(seed=args.seed, augment=stage)
    _report(_run_augment(cfg, _workers(args)))
    return 0


def cmd_sync(args: argparse.Namespace) -> int:
    stage = SyncStage(
        enabled=True,
        gt=args.gt,
        pred=args.pred,
        out=args.out,
        weights=SyncWeights(g_s=args.g_s, g_t=args.g_t),
    )
    cfg = PipelineConfig(sync=stage)
    _report(_run_sync(cfg, _workers(args)))
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    principal = _parse_pair(args.principal, ",") if args.principal else None
    dims = _parse_pair(args.dims, "x", int) if args.dims else None
    if principal is None and dims is None:
        raise ValueError("one of --principal or --dims is required")
    stage = CalibrateStage(
        enabled=True,
        points3d=args.points3d,
        annotation=args.annotation,
        extrinsics=args.extrinsics or "",
        init_f=args.init_f,
        principal=principal,
        dims=dims,
        refine_translation=args.refine_translation,
        out_camera=args.out_camera,
        out_trace=args.out_trace or "",
        optimizer=OptimizerConfig(
            learning_rate=args.learning_rate,
            max_iters=args.max_iters,
            tolerance=args.tolerance,
            gradient_mode=args.gradient,
            backtracking=not args.no_backtracking,
        ),
    )
    cfg = PipelineConfig(calibrate=stage)
    _report(_run_calibrate(cfg, _workers(args)))
    return 0


def cmd_enhance(args: argparse.Namespace) -> int:
    rows, cols = _parse_pair(args.tiles, "x", int)
    stage = EnhanceStage(
        enabled=True,
        frames=args.frames,
        boxes=args.boxes,
        out=args.out,
        settings=EnhanceConfig(
            margin=args.margin, clip_limit=args.clip_limit, tile_grid=(rows, cols)
        ),
    )
    cfg = PipelineConfig(enhance=stage)
    _report(_run_enhance(cfg, _workers(args)))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    stage = EvalStage(enabled=True, pred=args.pred, gt=args.gt, out=args.out)
    cfg = PipelineConfig(eval=stage)
    outputs = _run_eval(cfg, _workers(args))
    _report(outputs)
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    cfg = validate_config(args.config)
    summary = run_pipeline(cfg, workers=_workers(args))
    print(f"config digest {summary['config_digest']}")
    for name, stage in summary["stages"].items():
        print(f"  {name}: {len(stage['outputs'])} artifact(s)")
    return 0


def cmd_ingest_itw(args: argparse.Namespace) -> int:
    summary = ingest_itw(
        frames_dir=args.frames,
        keypoints_path=args.keypoints,
        out_dir=args.out,
        blur_cfg=_blur_config(args),
        workers=_workers(args),
    )
    print(f"shard: {summary['frames']} frame(s), {len(summary['excluded'])} excluded")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    cfg = validate_config(args.config)
    print(f"config OK (digest {cfg.digest()})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pitchblur", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("flow", parents=[], help="estimate motion flow between frame pairs")
    sub.add_argument("--frames", required=True, help="input frame directory")
    sub.add_argument("--out", required=True, help="output .flo directory")
    sub.add_argument("--levels", type=int, default=3)
    sub.add_argument("--block-radius", type=int, default=3)
    sub.add_argument("--search-radius", type=int, default=4)
    sub.add_argument("--smoothing", type=int, default=1)
    _add_workers(sub)
    sub.set_defaults(func=cmd_flow)

    sub = subs.add_parser("augment", help="apply selective blur to a frame sequence")
    sub.add_argument("--frames", required=True)
    sub.add_argument("--flows", required=True, help="directory of per-pair .flo files")
    sub.add_argument("--out", required=True)
    sub.add_argument("--manifest", default=None, help="default: <out>/manifest.jsonl")
    _add_blur_flags(sub)
    _add_workers(sub)
    sub.set_defaults(func=cmd_augment)

    sub = subs.add_parser("sync", help="align two pose tracks one-to-one")
    sub.add_argument("--gt", required=True, help="ground-truth keypoint file")
    sub.add_argument("--pred", required=True, help="estimated keypoint file")
    sub.add_argument("--out", required=True, help="alignment file")
    sub.add_argument("--g-s", type=float, default=1.0, help="spatial weight")
    sub.add_argument("--g-t", type=float, default=1.0, help="temporal weight")
    _add_workers(sub)
    sub.set_defaults(func=cmd_sync)

    sub = subs.add_parser("calibrate", help="recover focal length from one annotated frame")
    sub.add_argument("--points3d", required=True, help="3D keypoint file")
    sub.add_argument("--annotation", required=True, help="2D keypoint file")
    sub.add_argument("--extrinsics", default=None, help="12 reals: R row-major then t")
    sub.add_argument("--init-f", type=float, default=1000.0)
    sub.add_argument("--principal", default=None, help="cx,cy")
    sub.add_argument("--dims", default=None, help="WxH (principal point = center)")
    sub.add_argument("--learning-rate", type=float, default=1e-2)
    sub.add_argument("--max-iters", type=int, default=500)
    sub.add_argument("--tolerance", type=float, default=1e-8)
    sub.add_argument("--gradient", default="analytic", choices=("analytic", "finite_difference"))
    sub.add_argument("--no-backtracking", action="store_true")
    sub.add_argument("--refine-translation", action="store_true")
    sub.add_argument("--out-camera", required=True)
    sub.add_argument("--out-trace", default=None)
    _add_workers(sub)
    sub.set_defaults(func=cmd_calibrate)

    sub = subs.add_parser("enhance", help="crop by bounding box and equalize luminosity")
    sub.add_argument("--frames", required=True)
    sub.add_argument("--boxes", required=True, help="CSV: frame_id,x,y,w,h")
    sub.add_argument("--out", required=True)
    sub.add_argument("--margin", type=float, default=0.0)
    sub.add_argument("--clip-limit", type=float, default=2.0)
    sub.add_argument("--tiles", default="8x8", help="RxC equalization tiles")
    _add_workers(sub)
    sub.set_defaults(func=cmd_enhance)

    sub = subs.add_parser("eval", help="score an estimated track against ground truth")
    sub.add_argument("--pred", required=True)
    sub.add_argument("--gt", required=True)
    sub.add_argument("--out", required=True, help="report JSON (CSV written alongside)")
    _add_workers(sub)
    sub.set_defaults(func=cmd_eval)

    sub = subs.add_parser("pipeline", help="run the stages enabled in a config file")
    sub.add_argument("--config", required=True)
    _add_workers(sub)
    sub.set_defaults(func=cmd_pipeline)

    sub = subs.add_parser("ingest-itw", help="build a training shard from wild footage")
    sub.add_argument("--frames", required=True)
    sub.add_argument("--keypoints", required=True, help="externally estimated keypoint file")
    sub.add_argument("--out", required=True)
    _add_blur_flags(sub)
    _add_workers(sub)
    sub.set_defaults(func=cmd_ingest_itw)

    sub = subs.add_parser("validate", help="check a config file, reporting every problem")
    sub.add_argument("--config", required=True)
    sub.set_defaults(func=cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"error: {problem}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - last-resort guard
        logger.exception("unhandled failure")
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
