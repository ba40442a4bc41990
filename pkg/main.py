# -*- coding: utf-8 -*-
"""
Main module for radiance-field deblurring.

This module ties the pipeline together: it synthesizes blurry multi-view
datasets, trains a radiance field with (or without) the deformable sparse
kernel, renders sharp novel views, evaluates them and visualizes the learned
kernels.
"""

import argparse
import datetime
import logging
import os
import sys
import time
from pathlib import Path
from typing import List, Optional

import numpy as np
from dotenv import load_dotenv

from config.config import load_config
from src.data.dataset_io import read_dataset, read_poses, write_dataset
from src.data.synth import DefocusBlurSpec, MotionBlurSpec, synthesize_dataset
from src.data.scene import SCENE_NAMES
from src.errors import ConfigError, DeblurNerfError
from src.nerf.blur_model import gamma_encode
from src.nerf.dsk import kernel_points
from src.nerf.renderer import Camera, CameraBatch, render_image
from src.training.checkpoint import load_checkpoint
from src.training.trainer import (
    CHECKPOINT_NAME,
    LOSS_LOG_NAME,
    Trainer,
    dsk_from_checkpoint,
    field_from_checkpoint,
    intrinsics_from_checkpoint,
    load_train_config,
)
from src.utils.image_io import write_png
from src.utils.metrics import evaluate_directories
from src.utils.plots import plot_kernel_points

# Load environment variables
load_dotenv()

# Global counters for log messages
log_counters = {"INFO": 0, "WARNING": 0, "ERROR": 0}


# Custom class to count log messages
class LogCounterHandler(logging.Handler):
    def emit(self, record):
        if record.levelname in log_counters:
            log_counters[record.levelname] += 1


def create_log_path(command: str) -> Path:
    """Creates the log folder and returns the log file path of this run.

    The folder is ``output/logs`` next to this file unless DEBLUR_NERF_LOG_DIR is set.
    """
    default_dir = os.path.join(os.path.dirname(os.path.abspath(__file__)), "output", "logs")
    logs_dir = Path(os.getenv("DEBLUR_NERF_LOG_DIR") or default_dir)
    logs_dir.mkdir(exist_ok=True, parents=True)
    timestamp = datetime.datetime.now().strftime("%Y%m%d_%H%M%S")
    return logs_dir / f"{command}_{timestamp}.log"


def setup_logger(command: str) -> logging.Logger:
    """Configures file and console logging for one command and resets the counters."""
    log_filepath = create_log_path(command)

    # Remove all existing handlers to avoid duplication
    for handler in logging.root.handlers[:]:
        logging.root.removeHandler(handler)
        handler.close()

    for key in log_counters:
        log_counters[key] = 0

    level_name = os.getenv("DEBLUR_NERF_LOG_LEVEL", "INFO").upper()
    level = getattr(logging, level_name, logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[
            logging.FileHandler(
                str(log_filepath), mode="w"
            ),  # Mode 'w' to overwrite the file at each run
            logging.StreamHandler(),
        ],
    )
    logging.getLogger().addHandler(LogCounterHandler())
    # Keep third-party chatter out of the run log
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.getLogger("PIL").setLevel(logging.WARNING)

    run_logger = logging.getLogger(__name__)
    run_logger.log_filepath = log_filepath
    return run_logger


def write_log_summary(summary: Optional[dict] = None) -> None:
    """Writes a summary of log messages at the end of the log file.

    Args:
        summary: Optional command statistics written before the message count.
    """
    if hasattr(logger, "log_filepath") and logger.log_filepath:
        for handler in logging.root.handlers:
            handler.flush()
        with open(str(logger.log_filepath), "a") as log_file:
            log_file.write("\n" + "=" * 50 + "\n")
            log_file.write("LOG SUMMARY:\n")

            if summary:
                log_file.write("\nRUN STATISTICS:\n")
                for key, value in summary.items():
                    log_file.write(f"- {key}: {value}\n")

            log_file.write("\nLOG MESSAGE COUNT:\n")
            log_file.write(f"INFO: {log_counters['INFO']}\n")
            log_file.write(f"WARNING: {log_counters['WARNING']}\n")
            log_file.write(f"ERROR: {log_counters['ERROR']}\n")
            log_file.write("=" * 50 + "\n")


logger = logging.getLogger(__name__)


def parse_resolution(text: str):
    """Parses ``WxH`` into (width, height)."""
    try:
        width, height = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"resolution must look like 64x64, got '{text}'") from None
    if width < 1 or height < 1:
        raise argparse.ArgumentTypeError(f"resolution must be positive, got '{text}'")
    return width, height


def to_display(linear: np.ndarray, gamma: bool) -> np.ndarray:
    return gamma_encode(linear) if gamma else np.clip(linear, 0.0, 1.0)


def cmd_synth(args, config) -> dict:
    """Synthesizes a blurry dataset directory."""
    width, height = args.res
    motion = MotionBlurSpec(config["motion_max_angle"], config["motion_max_translation"],
                            config["motion_num_poses"])
    defocus = DefocusBlurSpec(aperture=config["defocus_aperture"],
                              num_lens_samples=config["defocus_lens_samples"])
    dataset = synthesize_dataset(
        scene_name=args.scene, blur=args.blur, views=args.views, width=width, height=height,
        seed=args.seed, test_views=args.test_views, motion=motion, defocus=defocus,
        steps=config["synth_reference_steps"],
    )
    out = write_dataset(dataset, args.out)
    print(f"✅ Dataset written to {out} ({dataset.num_train} train / {dataset.test_images.shape[0]} test views)")
    return {"Training views": dataset.num_train, "Test views": dataset.test_images.shape[0]}


def cmd_train(args, config) -> dict:
    """Trains on a dataset directory and writes checkpoint, loss log and loss curve."""
    overrides = {}
    if args.no_dsk:
        overrides["dsk_enabled"] = False
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.iterations is not None:
        overrides["iterations"] = args.iterations
    train_config = load_train_config(args.config, overrides)
    dataset = read_dataset(args.data)
    trainer = Trainer(dataset, train_config)
    out_dir = Path(args.out)
    if args.resume:
        trainer.resume(out_dir / CHECKPOINT_NAME)
        trainer.load_loss_log(out_dir / LOSS_LOG_NAME)
    history = trainer.train(out_dir)
    final = history.iloc[-1] if not history.empty else None
    if final is not None:
        print(f"✅ Training finished at iteration {trainer.iteration}: loss {final['loss']:.6f}")
    print(f"📄 Checkpoint: {out_dir / CHECKPOINT_NAME}")
    return {"Iterations": trainer.iteration, "Kernel": "enabled" if train_config.dsk_enabled else "disabled"}


def cmd_render(args, config) -> dict:
    """Renders one sharp PNG per pose line; the kernel is never evaluated."""
    checkpoint = load_checkpoint(args.ckpt)
    field = field_from_checkpoint(checkpoint)
    intrinsics = intrinsics_from_checkpoint(checkpoint)
    poses = read_poses(args.poses)
    samples = args.steps or config["render_num_samples"] or int(checkpoint.config.get("num_samples", 48))
    gamma = bool(checkpoint.config.get("gamma_enabled", True))
    near, far = float(checkpoint.meta["near"]), float(checkpoint.meta["far"])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for index, pose in enumerate(poses):
        camera = Camera.from_pose(pose, intrinsics)
        linear = render_image(field, camera, near, far, samples, chunk=config["render_chunk"])
        write_png(out_dir / f"{index:03d}.png", to_display(linear, gamma))
        logger.info(f"Rendered view {index} ({samples} samples per ray)")
    print(f"✅ {len(poses)} views rendered to {out_dir}")
    return {"Rendered views": len(poses)}


def cmd_eval(args, config) -> dict:
    """Prints (and optionally writes) the PSNR/SSIM table."""
    report = evaluate_directories(args.pred, args.gt)
    print(report.to_csv(args.csv), end="")
    return {"Images": len(report.rows), "Mean PSNR": f"{report.mean_psnr:.3f}", "Mean SSIM": f"{report.mean_ssim:.4f}"}


def cmd_kernel_viz(args, config) -> dict:
    """Draws the deformed kernel points of a grid of pixels of one training view."""
    checkpoint = load_checkpoint(args.ckpt)
    dsk = dsk_from_checkpoint(checkpoint)
    if not 0 <= args.view < dsk.num_views:
        raise ConfigError(f"view {args.view} outside [0, {dsk.num_views})")
    if args.grid < 1:
        raise ConfigError(f"grid must be positive, got {args.grid}")
    intrinsics = intrinsics_from_checkpoint(checkpoint)
    cameras = CameraBatch.from_poses(np.asarray(checkpoint.meta["train_poses"]), intrinsics)
    width, height = intrinsics.width, intrinsics.height
    xs = np.floor((np.arange(args.grid) + 0.5) * width / args.grid) + 0.5
    ys = np.floor((np.arange(args.grid) + 0.5) * height / args.grid) + 0.5
    targets = np.stack(np.meshgrid(xs, ys, indexing="xy"), axis=-1).reshape(-1, 2)
    pixels, weights = kernel_points(dsk, cameras, args.view, targets)
    background = read_dataset(args.data).train_images[args.view] if args.data else None
    plot_kernel_points(targets, pixels, weights, width, height, args.out, background=background,
                       title=f"view {args.view}, N={dsk.canonical.count}")
    print(f"✅ Kernel visualization saved to {args.out}")
    return {"Pixels": targets.shape[0], "Kernel points": dsk.canonical.count}


def build_parser(config) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Deblur a radiance field from blurry multi-view images."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="synthesize a blurry dataset")
    synth.add_argument("--scene", choices=SCENE_NAMES, default=config["synth_scene"],
                       help=f"analytic scene (default: {config['synth_scene']} from configuration)")
    synth.add_argument("--blur", choices=("motion", "defocus", "none"), default=config["synth_blur"],
                       help=f"blur type (default: {config['synth_blur']} from configuration)")
    synth.add_argument("--views", type=int, default=config["synth_views"], help="number of training views")
    synth.add_argument("--test-views", type=int, default=config["synth_test_views"], help="number of held-out sharp views")
    synth.add_argument("--res", type=parse_resolution,
                       default=(config["synth_width"], config["synth_height"]), help="resolution WxH")
    synth.add_argument("--seed", type=int, default=config["synth_seed"], help="dataset seed")
    synth.add_argument("--out", required=True, help="output dataset directory")
    synth.set_defaults(handler=cmd_synth)

    train = sub.add_parser("train", help="train on a dataset")
    train.add_argument("--data", required=True, help="dataset directory")
    train.add_argument("--config", help="training config file (key = value lines)")
    train.add_argument("--no-dsk", action="store_true", help="train the plain baseline without the kernel")
    train.add_argument("--seed", type=int, help="override the training seed")
    train.add_argument("--iterations", type=int,
                       help="override the number of iterations; 0 saves the seeded random "
                            "initialization, which renders as the untrained field")
    train.add_argument("--resume", action="store_true", help="continue from the checkpoint in --out")
    train.add_argument("--out", required=True, help="output directory")
    train.set_defaults(handler=cmd_train)

    render = sub.add_parser("render", help="render sharp views from a checkpoint",
                            description="Render sharp views from a checkpoint. A checkpoint saved "
                                        "after 0 iterations renders the untrained random field.")
    render.add_argument("--ckpt", required=True, help="checkpoint file")
    render.add_argument("--poses", required=True, help="poses file, one 3x4 camera-to-world per line")
    render.add_argument("--steps", type=int, help="samples per ray (default: the training value)")
    render.add_argument("--out", required=True, help="output directory")
    render.set_defaults(handler=cmd_render)

    evaluate = sub.add_parser("eval", help="compare rendered views with ground truth")
    evaluate.add_argument("--pred", required=True, help="directory of predicted PNGs")
    evaluate.add_argument("--gt", required=True, help="directory of ground-truth PNGs")
    evaluate.add_argument("--csv", help="also write the table to this file")
    evaluate.set_defaults(handler=cmd_eval)

    viz = sub.add_parser("kernel-viz", help="plot learned kernels of one training view")
    viz.add_argument("--ckpt", required=True, help="checkpoint file")
    viz.add_argument("--view", type=int, required=True, help="training view index")
    viz.add_argument("--grid", type=int, default=8, help="grid of GxG target pixels")
    viz.add_argument("--data", help="dataset directory, to draw the blurry view underneath")
    viz.add_argument("--out", required=True, help="output PNG")
    viz.set_defaults(handler=cmd_kernel_viz)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main function of the program; returns the process exit status."""
    global logger

    config = load_config()
    parser = build_parser(config)
    args = parser.parse_args(argv)

    logger = setup_logger(args.command.replace("-", "_"))
    logger.info(f"Running command '{args.command}'")
    try:
        summary = args.handler(args, config)
    except (DeblurNerfError, ValueError, OSError) as e:
        logger.error(f"Command '{args.command}' failed: {str(e)}")
        print(f"❌ Error: {str(e)}")
        write_log_summary()
        return 1

    write_log_summary(summary)
    return 0


if __name__ == "__main__":
    start_time = time.time()
    status = main()
    end_time = time.time()
    print(f"Execution time: {round(end_time - start_time,2)} seconds")
    sys.exit(status)
