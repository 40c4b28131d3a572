"""
Training service.
Runs the contrastive and diffusion stages on a prepared dataset, with
checkpoints, machine-readable training logs and resume support.
"""
from pathlib import Path
from typing import Dict, List, Optional, Set, TextIO
import logging

import torch

from gestdiff.core.config import config as process_config
from gestdiff.core.errors import DataError
from gestdiff.core.pipeline_config import PipelineConfig
from gestdiff.csmp.conditioning import conditioning_features
from gestdiff.csmp.trainer import CsmpTrainer, load_csmp_model
from gestdiff.diffusion.trainer import DiffusionExample, DiffusionTrainer
from gestdiff.domain.checkpoint_models import ModelCheckpoint
from gestdiff.domain.embedding_models import AlignedClip
from gestdiff.embeddings.archive import ARCHIVE_SUFFIX, load_aligned_clip
from gestdiff.motion.bvh import hierarchy_text
from gestdiff.neural.checkpoint import load_checkpoint, save_checkpoint
from gestdiff.utils.fs import ensure_directory, find_files, read_id_list, sha256_file


logger = logging.getLogger(__name__)


class TrainingError(DataError):
    """Raised when a training stage cannot run on the given data."""
    pass


class StageDependencyError(TrainingError):
    """Raised when a stage needs an artifact from an earlier stage that is missing."""
    pass


class TrainingService:
    """Service running the two training stages."""

    def __init__(self, settings: PipelineConfig):
        self.settings = settings
        torch.set_num_threads(process_config.TORCH_THREADS)

    def load_dataset(self, dataset_dir: Path, exclude_list: Optional[Path] = None) -> List[AlignedClip]:
        """
        Load every clip archive of a prepared dataset, minus excluded clip ids.

        Raises:
            TrainingError: If no clip remains
        """
        excluded: Set[str] = read_id_list(exclude_list) if exclude_list is not None else set()
        clips = []
        for path in find_files(Path(dataset_dir), ARCHIVE_SUFFIX):
            clip = load_aligned_clip(path)
            if clip.clip_id in excluded:
                logger.info("Excluding clip %s", clip.clip_id)
                continue
            clips.append(clip)
        if not clips:
            raise TrainingError(f"No prepared clips found in {dataset_dir}")
        logger.info("Loaded %d clips from %s (%d excluded)", len(clips), dataset_dir, len(excluded))
        return clips

    def _open_log(self, path: Path, resume: bool, header: str) -> TextIO:
        if resume and path.exists():
            return open(path, "a", encoding="utf-8")
        handle = open(path, "w", encoding="utf-8")
        handle.write(header)
        return handle

    def _resume_checkpoint(self, path: Path, kind: str, resume: bool) -> Optional[ModelCheckpoint]:
        if not resume:
            return None
        if not path.is_file():
            raise StageDependencyError(f"Cannot resume: no {kind} checkpoint at {path}")
        return load_checkpoint(path, kind)

    def _write_resolved_config(self, output_dir: Path) -> None:
        (output_dir / process_config.RESOLVED_CONFIG_NAME).write_text(self.settings.to_kv_text(), encoding="utf-8")

    def train_csmp(
        self,
        dataset_dir: Path,
        output_dir: Path,
        steps: Optional[int] = None,
        resume: bool = False,
        exclude_list: Optional[Path] = None,
    ) -> ModelCheckpoint:
        """
        Train the contrastive stage and write `csmp.ckpt` plus its training log.

        Args:
            dataset_dir: Prepared dataset
            output_dir: Run directory for checkpoints and logs
            steps: Additional steps (csmp.train_steps when None)
            resume: Continue from the run directory's checkpoint
            exclude_list: Optional file of clip ids to leave out

        Raises:
            StageDependencyError: If resuming without a checkpoint
            TrainingError: If the dataset is empty
        """
        output_dir = ensure_directory(output_dir)
        self._write_resolved_config(output_dir)
        checkpoint_path = output_dir / process_config.CSMP_CHECKPOINT_NAME
        previous = self._resume_checkpoint(checkpoint_path, "csmp", resume)
        clips = self.load_dataset(dataset_dir, exclude_list)

        trainer = CsmpTrainer(clips, self.settings.csmp, self.settings.seed, previous)
        log_path = output_dir / f"csmp_{process_config.TRAINING_LOG_NAME}"
        with self._open_log(log_path, resume, "step\tloss\ttemperature\n") as log:
            trainer.train(
                self.settings.csmp.train_steps if steps is None else steps,
                lambda step, loss, temperature: log.write(f"{step}\t{loss!r}\t{temperature!r}\n"),
            )
        checkpoint = trainer.checkpoint()
        save_checkpoint(checkpoint_path, checkpoint)
        return checkpoint

    def pose_metadata(self, clips: List[AlignedClip]) -> Dict:
        """
        Skeleton, pose layout and frame rate shared by all clips (stored with the denoiser).

        Raises:
            TrainingError: If clips disagree on skeleton or pose layout
        """
        reference = clips[0].main_motion
        hierarchy = hierarchy_text(reference.skeleton)
        for clip in clips[1:]:
            motion = clip.main_motion
            if hierarchy_text(motion.skeleton) != hierarchy or motion.includes_root_translation != reference.includes_root_translation:
                raise TrainingError(f"Clip {clip.clip_id} uses a different skeleton or pose layout than {clips[0].clip_id}")
        return {
            "hierarchy": hierarchy,
            "includes_root_translation": reference.includes_root_translation,
            "frame_rate": reference.frame_rate,
            "tpose": None if reference.tpose is None else reference.tpose.tolist(),
        }

    def train_diffusion(
        self,
        dataset_dir: Path,
        output_dir: Path,
        csmp_checkpoint: Optional[Path] = None,
        steps: Optional[int] = None,
        resume: bool = False,
        exclude_list: Optional[Path] = None,
    ) -> ModelCheckpoint:
        """
        Train the denoiser on CSMP conditioning and write `diffusion.ckpt` plus its log.

        Args:
            dataset_dir: Prepared dataset
            output_dir: Run directory
            csmp_checkpoint: Contrastive checkpoint (defaults to the run directory's)
            steps: Additional steps (diffusion.train_steps when None)
            resume: Continue from the run directory's diffusion checkpoint
            exclude_list: Optional file of clip ids to leave out

        Raises:
            StageDependencyError: If the contrastive checkpoint is missing
        """
        output_dir = ensure_directory(output_dir)
        csmp_path = Path(csmp_checkpoint) if csmp_checkpoint else output_dir / process_config.CSMP_CHECKPOINT_NAME
        if not csmp_path.is_file():
            raise StageDependencyError(
                f"Diffusion training needs a CSMP checkpoint, none found at {csmp_path}; run train-csmp first"
            )
        self._write_resolved_config(output_dir)
        checkpoint_path = output_dir / process_config.DIFFUSION_CHECKPOINT_NAME
        previous = self._resume_checkpoint(checkpoint_path, "diffusion", resume)

        csmp_checkpoint_data = load_checkpoint(csmp_path, "csmp")
        csmp_model = load_csmp_model(csmp_checkpoint_data)
        hop = int(csmp_checkpoint_data.hyperparameters["hop"])
        clips = self.load_dataset(dataset_dir, exclude_list)
        examples = []
        for clip in clips:
            conditioning = conditioning_features(clip, csmp_model, hop)
            examples.append(DiffusionExample(clip.clip_id, clip.main_motion.frames, conditioning.vectors))
        logger.info("Computed conditioning for %d clips", len(examples))

        extra = self.pose_metadata(clips)
        extra["csmp_sha256"] = sha256_file(csmp_path)
        trainer = DiffusionTrainer(examples, self.settings.diffusion, self.settings.seed, previous, extra)
        log_path = output_dir / f"diffusion_{process_config.TRAINING_LOG_NAME}"
        with self._open_log(log_path, resume, "step\tloss\tvalidation_loss\n") as log:
            trainer.train(
                self.settings.diffusion.train_steps if steps is None else steps,
                lambda step, loss, validation: log.write(
                    f"{step}\t{loss!r}\t{'' if validation is None else repr(validation)}\n"
                ),
            )
        checkpoint = trainer.checkpoint()
        save_checkpoint(checkpoint_path, checkpoint)
        final_validation = trainer.validation_loss()
        logger.info(
            "Diffusion training finished at step %d (validation loss: %s)",
            checkpoint.step, "n/a" if final_validation is None else f"{final_validation:.6f}",
        )
        return checkpoint
