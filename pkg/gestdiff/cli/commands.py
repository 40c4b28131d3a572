"""
Command-line verbs.
Each verb builds the resolved pipeline configuration, hands the work to a
service and returns the process exit code.
"""
from argparse import ArgumentParser, Namespace
from pathlib import Path
from typing import Dict, Optional
import argparse
import logging

from gestdiff.core.config import config as process_config
from gestdiff.core.pipeline_config import PipelineConfig, load_pipeline_config
from gestdiff.services.prep_service import PrepService
from gestdiff.services.stats_service import StatsService
from gestdiff.services.synthesis_service import AgentInput, SynthesisService
from gestdiff.services.training_service import TrainingService
from gestdiff.utils.fs import ensure_directory


logger = logging.getLogger(__name__)

# Stage named in error messages of each verb
STAGES: Dict[str, str] = {
    "prep": "prep",
    "train-csmp": "csmp",
    "train-diffusion": "diffusion",
    "synthesize": "synthesis",
    "stats": "stats",
}


def resolve_config(args: Namespace) -> PipelineConfig:
    """Config document (or defaults) with command-line overrides, logged verbatim."""
    settings = load_pipeline_config(args.config).with_overrides({
        "seed": args.seed,
        "diffusion.guidance_scale": getattr(args, "gamma", None),
        "diffusion.guidance_dropout": getattr(args, "guidance_dropout", None),
    })
    settings.log_resolved()
    return settings


def write_resolved_config(settings: PipelineConfig, directory: Path) -> None:
    path = ensure_directory(directory) / process_config.RESOLVED_CONFIG_NAME
    path.write_text(settings.to_kv_text(), encoding="utf-8")


def cmd_prep(args: Namespace) -> int:
    settings = resolve_config(args)
    write_resolved_config(settings, args.out)
    summary = PrepService(settings, workers=args.workers).run(args.manifest, args.out)
    print(summary.summary_line())
    for failure in summary.failures:
        logger.error("prep: %s", failure.error)
    return 0 if not summary.failures else 1


def cmd_train_csmp(args: Namespace) -> int:
    settings = resolve_config(args)
    checkpoint = TrainingService(settings).train_csmp(
        args.dataset, args.out, steps=args.steps, resume=args.resume, exclude_list=args.exclude_list
    )
    print(f"csmp checkpoint at step {checkpoint.step}: {Path(args.out) / process_config.CSMP_CHECKPOINT_NAME}")
    return 0


def cmd_train_diffusion(args: Namespace) -> int:
    settings = resolve_config(args)
    checkpoint = TrainingService(settings).train_diffusion(
        args.dataset, args.out, csmp_checkpoint=args.csmp, steps=args.steps,
        resume=args.resume, exclude_list=args.exclude_list,
    )
    print(f"diffusion checkpoint at step {checkpoint.step}: {Path(args.out) / process_config.DIFFUSION_CHECKPOINT_NAME}")
    return 0


def cmd_synthesize(args: Namespace) -> int:
    settings = resolve_config(args)
    run_dir = Path(args.run_dir)
    csmp = args.csmp or run_dir / process_config.CSMP_CHECKPOINT_NAME
    diffusion = args.diffusion or run_dir / process_config.DIFFUSION_CHECKPOINT_NAME
    output = Path(args.out)
    write_resolved_config(settings, output.parent)
    service = SynthesisService(settings, csmp, diffusion)
    service.synthesize(
        AgentInput(args.main_audio, args.main_transcript, args.main_audio_embeddings, args.main_text_embeddings),
        AgentInput(
            args.interlocutor_audio, args.interlocutor_transcript,
            args.interlocutor_audio_embeddings, args.interlocutor_text_embeddings,
        ),
        output,
        gamma=args.gamma,
        seed=args.seed,
    )
    print(output)
    return 0


def cmd_stats(args: Namespace) -> int:
    settings = resolve_config(args)
    if args.out is not None:
        write_resolved_config(settings, args.out.parent)
    report = StatsService(settings).run(args.inputs, args.out)
    if args.out is None:
        for row in report.rows:
            print(
                f"{row.name}\t{row.frame_count}\t{row.mean_joint_speed:.6g}\t"
                f"{row.mean_jerk:.6g}\t{row.flagged_fraction:.6g}"
            )
    return 0


def _path(value: str) -> Path:
    return Path(value)


def _optional_path(value: str) -> Optional[Path]:
    return None if value == "-" else Path(value)


def _add_common(parser: ArgumentParser) -> None:
    parser.add_argument("--config", help="key-value configuration document (defaults when omitted)")
    parser.add_argument("--seed", type=int, help="root seed, overrides the config")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"])


def _add_training(parser: ArgumentParser) -> None:
    parser.add_argument("dataset", type=_path, help="prepared dataset directory")
    parser.add_argument("--out", type=_path, required=True, help="run directory for checkpoints and logs")
    parser.add_argument("--steps", type=int, help="training steps to run (config value when omitted)")
    parser.add_argument("--resume", action="store_true", help="continue from the checkpoint in --out")
    parser.add_argument("--exclude-list", type=_path, help="file of clip ids to leave out")


def build_parser() -> ArgumentParser:
    parser = argparse.ArgumentParser(prog="gestdiff", description="Co-speech gesture synthesis pipeline")
    verbs = parser.add_subparsers(dest="command", required=True)

    prep = verbs.add_parser("prep", help="prepare aligned clips from a manifest")
    _add_common(prep)
    prep.add_argument("manifest", type=_path)
    prep.add_argument("--out", type=_path, required=True, help="prepared dataset directory")
    prep.add_argument("--workers", type=int, help="clips prepared concurrently")
    prep.set_defaults(handler=cmd_prep)

    train_csmp = verbs.add_parser("train-csmp", help="train the contrastive speech-motion model")
    _add_common(train_csmp)
    _add_training(train_csmp)
    train_csmp.set_defaults(handler=cmd_train_csmp)

    train_diffusion = verbs.add_parser("train-diffusion", help="train the conditional denoiser")
    _add_common(train_diffusion)
    _add_training(train_diffusion)
    train_diffusion.add_argument("--csmp", type=_path, help="CSMP checkpoint (default: csmp.ckpt in --out)")
    train_diffusion.add_argument("--guidance-dropout", type=float, help="conditioning dropout probability")
    train_diffusion.set_defaults(handler=cmd_train_diffusion)

    synthesize = verbs.add_parser("synthesize", help="generate gestures for a two-party recording")
    _add_common(synthesize)
    synthesize.add_argument("--run-dir", type=_path, default=Path("."), help="directory holding both checkpoints")
    synthesize.add_argument("--csmp", type=_path, help="CSMP checkpoint (overrides --run-dir)")
    synthesize.add_argument("--diffusion", type=_path, help="diffusion checkpoint (overrides --run-dir)")
    synthesize.add_argument("--main-audio", type=_path, required=True)
    synthesize.add_argument("--main-transcript", type=_path, required=True)
    synthesize.add_argument("--interlocutor-audio", type=_path, required=True)
    synthesize.add_argument("--interlocutor-transcript", type=_path, required=True)
    for name in ("main-audio", "main-text", "interlocutor-audio", "interlocutor-text"):
        synthesize.add_argument(f"--{name}-embeddings", type=_optional_path, help="precomputed EMB1 file")
    synthesize.add_argument("--gamma", type=float, help="guidance scale, overrides the config")
    synthesize.add_argument("--out", type=_path, required=True, help="output BVH path")
    synthesize.set_defaults(handler=cmd_synthesize)

    stats = verbs.add_parser("stats", help="objective statistics of BVH files")
    _add_common(stats)
    stats.add_argument("inputs", type=_path, nargs="+", help="BVH files or directories")
    stats.add_argument("--out", type=_path, help="JSON report path (tab-separated summary on stdout otherwise)")
    stats.set_defaults(handler=cmd_stats)
    return parser

