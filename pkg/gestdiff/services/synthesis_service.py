"""
Synthesis service.
Runs embedding, CSMP conditioning and guided diffusion sampling for one
two-party input and writes the generated motion as BVH with a metadata sidecar.
"""
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterator, Optional
import logging

import numpy as np

from gestdiff.core.errors import DataError
from gestdiff.core.pipeline_config import PipelineConfig
from gestdiff.csmp.conditioning import conditioning_features
from gestdiff.csmp.trainer import load_csmp_model
from gestdiff.diffusion.sampler import features_to_pose, sample
from gestdiff.diffusion.trainer import load_denoiser
from gestdiff.embeddings.alignment import align_clip
from gestdiff.motion.bvh import skeleton_from_hierarchy, write_bvh
from gestdiff.motion.rotations import pose_to_channels
from gestdiff.neural.checkpoint import load_checkpoint
from gestdiff.services.prep_service import PrepService
from gestdiff.utils.fs import ensure_directory, sha256_file, write_json


logger = logging.getLogger(__name__)


class SynthesisError(DataError):
    """Raised when synthesis fails; the message names the failing stage."""
    pass


@dataclass(frozen=True)
class AgentInput:
    """Audio, transcript and optional precomputed embeddings of one speaker."""
    audio: Path
    transcript: Path
    audio_embeddings: Optional[Path] = None
    text_embeddings: Optional[Path] = None


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Re-raise data errors of a pipeline stage as SynthesisError tagged with the stage name."""
    try:
        yield
    except SynthesisError:
        raise
    except DataError as error:
        raise SynthesisError(f"[{name}] {error}") from error


class SynthesisService:
    """Service generating gesture motion from trained checkpoints."""

    def __init__(self, settings: PipelineConfig, csmp_checkpoint: Path, diffusion_checkpoint: Path):
        """
        Load both frozen models.

        Args:
            settings: Resolved pipeline configuration (signal and embedding settings)
            csmp_checkpoint: Contrastive checkpoint path
            diffusion_checkpoint: Denoiser checkpoint path

        Raises:
            SynthesisError: If a checkpoint is missing, corrupt or inconsistent with the other
        """
        self.settings = settings
        self.prep = PrepService(settings, workers=1)
        self.csmp_path = Path(csmp_checkpoint)
        self.diffusion_path = Path(diffusion_checkpoint)
        with stage("csmp"):
            checkpoint = load_checkpoint(self.csmp_path, "csmp")
            self.csmp_model = load_csmp_model(checkpoint)
            self.hop = int(checkpoint.hyperparameters["hop"])
        with stage("diffusion"):
            checkpoint = load_checkpoint(self.diffusion_path, "diffusion")
            self.denoiser, self.schedule = load_denoiser(checkpoint)
            self.hyperparameters: Dict[str, Any] = checkpoint.hyperparameters
            self.skeleton = skeleton_from_hierarchy(self.hyperparameters["hierarchy"])
        self.csmp_sha256 = sha256_file(self.csmp_path)
        self.diffusion_sha256 = sha256_file(self.diffusion_path)
        trained_with = self.hyperparameters.get("csmp_sha256")
        if trained_with is not None and trained_with != self.csmp_sha256:
            logger.warning("Denoiser was trained on a different CSMP checkpoint (%s)", trained_with)

        frame_rate = float(self.hyperparameters["frame_rate"])
        if abs(frame_rate - settings.embeddings.motion_rate) > 1e-6:
            raise SynthesisError(
                f"[diffusion] model was trained at {frame_rate} Hz but embeddings.motion_rate is "
                f"{settings.embeddings.motion_rate} Hz"
            )

    def _agent(self, agent: AgentInput):
        with stage("signal"):
            audio, transcript = self.prep.load_audio(agent.audio, agent.transcript)
        with stage("embeddings"):
            return self.prep.agent_speech(audio, transcript, agent.audio_embeddings, agent.text_embeddings)

    def synthesize(
        self,
        main: AgentInput,
        interlocutor: AgentInput,
        output_path: Path,
        gamma: Optional[float] = None,
        seed: Optional[int] = None,
    ) -> Path:
        """
        Generate motion for the main agent and write `<output>.bvh` plus `<output>.json`.

        Args:
            main: Main agent input
            interlocutor: Interlocutor input
            output_path: BVH path to write
            gamma: Guidance scale (diffusion.guidance_scale when None)
            seed: Sampling seed (the config seed when None)

        Returns:
            Path of the written BVH

        Raises:
            SynthesisError: With the failing stage in its message
        """
        gamma = self.settings.diffusion.guidance_scale if gamma is None else gamma
        seed = self.settings.seed if seed is None else seed
        for agent in (main, interlocutor):
            for path in (agent.audio, agent.transcript):
                if not Path(path).is_file():
                    raise SynthesisError(f"[input] missing file {path}")

        main_audio, main_text = self._agent(main)
        other_audio, other_text = self._agent(interlocutor)
        with stage("alignment"):
            clip = align_clip(Path(output_path).stem, None, main_audio, main_text, other_audio, other_text)
        with stage("csmp"):
            conditioning = conditioning_features(clip, self.csmp_model, self.hop)
        with stage("diffusion"):
            features = sample(
                self.denoiser,
                self.schedule,
                conditioning.vectors,
                gamma,
                seed,
                window_frames=int(self.hyperparameters["window_frames"]),
                window_hop=int(self.hyperparameters["window_hop"]),
                crossfade_frames=int(self.hyperparameters["crossfade_frames"]),
            )
        with stage("motion"):
            tpose = self.hyperparameters.get("tpose")
            pose = features_to_pose(
                features,
                self.skeleton,
                float(self.hyperparameters["frame_rate"]),
                bool(self.hyperparameters["includes_root_translation"]),
                None if tpose is None else np.asarray(tpose),
            )
            output_path = Path(output_path)
            ensure_directory(output_path.parent)
            write_bvh(output_path, pose_to_channels(pose))

        write_json(output_path.with_suffix(".json"), {
            "seed": seed,
            "gamma": gamma,
            "frames": pose.frame_count,
            "frame_rate": pose.frame_rate,
            "csmp_checkpoint_sha256": self.csmp_sha256,
            "diffusion_checkpoint_sha256": self.diffusion_sha256,
            "schedule": self.schedule.to_dict(),
        })
        logger.info("Wrote %s (%d frames, gamma %.3f, seed %d)", output_path, pose.frame_count, gamma, seed)
        return output_path
