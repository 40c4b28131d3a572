"""
Dataset preparation service.
Turns a manifest of raw two-party clips into aligned clip archives, repaired
audio and anomaly reports, one clip per worker.
"""
from pathlib import Path
from typing import List, Optional, Tuple
import asyncio
import logging

import numpy as np

from gestdiff.core.config import config as process_config
from gestdiff.core.errors import DataError, GestdiffError
from gestdiff.core.pipeline_config import PipelineConfig
from gestdiff.domain.embedding_models import EmbeddingError, EmbeddingSequence, TimedTranscript
from gestdiff.domain.motion_models import AnomalyReport, PoseSequence
from gestdiff.domain.report_models import ClipPrepResult, PrepSummary
from gestdiff.domain.signal_models import AudioTrack
from gestdiff.dsp.audio import mute_crosstalk, read_wav, remove_dc, write_wav
from gestdiff.dsp.resampling import resample_polyphase
from gestdiff.embeddings.alignment import align_clip, resample_embeddings
from gestdiff.embeddings.archive import ARCHIVE_SUFFIX, save_aligned_clip
from gestdiff.embeddings.fallback import fallback_audio_features, fallback_text_features
from gestdiff.embeddings.manifest import ManifestEntry, read_manifest
from gestdiff.embeddings.store import load_embeddings
from gestdiff.embeddings.transcripts import read_transcript, replicate_tokens, speech_intervals_from_transcript
from gestdiff.motion.anomalies import detect_speed_anomalies, format_anomaly_report
from gestdiff.motion.bvh import read_bvh
from gestdiff.motion.kinematics import forward_kinematics
from gestdiff.motion.rotations import clip_to_pose, tpose_from_clip
from gestdiff.utils.fs import ensure_directory, write_json


logger = logging.getLogger(__name__)

SUMMARY_NAME = "prep_summary.json"
EXCLUSION_LIST_NAME = "exclusion_candidates.txt"
ANOMALY_REPORT_NAME = "anomaly_report.tsv"


class PrepError(DataError):
    """Raised when a clip cannot be prepared."""
    pass


class PrepService:
    """Service preparing aligned training clips from raw recordings."""

    def __init__(self, settings: PipelineConfig, workers: Optional[int] = None):
        """
        Initialize preparation service.

        Args:
            settings: Resolved pipeline configuration
            workers: Clips prepared concurrently (defaults to GESTDIFF_WORKERS)
        """
        self.settings = settings
        self.workers = workers or process_config.WORKERS
        self._tpose: Optional[np.ndarray] = None
        if settings.motion.tpose_path:
            self._tpose = tpose_from_clip(read_bvh(Path(settings.motion.tpose_path)))
            logger.info("Using T-pose from %s", settings.motion.tpose_path)

    def load_audio(self, path: Path, transcript_path: Path) -> Tuple[AudioTrack, TimedTranscript]:
        """Read one speaker's channel, remove DC offset and mute outside their transcribed speech."""
        signal_settings = self.settings.signal
        audio = read_wav(path)
        if audio.sample_rate != signal_settings.sample_rate:
            logger.debug("Resampling %s from %d Hz to %d Hz", path, audio.sample_rate, signal_settings.sample_rate)
            audio = AudioTrack(
                sample_rate=signal_settings.sample_rate,
                samples=resample_polyphase(audio.samples, audio.sample_rate, signal_settings.sample_rate),
            )
        transcript = read_transcript(transcript_path)
        audio = remove_dc(audio, signal_settings.zero_eps)
        audio = mute_crosstalk(
            audio,
            speech_intervals_from_transcript(transcript),
            ramp=signal_settings.ramp_seconds,
            shape=signal_settings.ramp_shape,
        )
        return audio, transcript

    def agent_speech(
        self,
        audio: AudioTrack,
        transcript: TimedTranscript,
        audio_embeddings: Optional[Path] = None,
        text_embeddings: Optional[Path] = None,
        frame_count: Optional[int] = None,
    ) -> Tuple[EmbeddingSequence, EmbeddingSequence]:
        """
        Audio and text embedding streams of one agent at the motion rate.

        Precomputed files are used when given, the built-in featurizers otherwise.
        Text vectors are replicated over `frame_count` frames (the audio stream
        length when None).

        Raises:
            EmbeddingError: If precomputed embeddings do not fit the configuration
        """
        embedding_settings = self.settings.embeddings
        if audio_embeddings is not None:
            audio_stream = load_embeddings(audio_embeddings)
        else:
            audio_stream = fallback_audio_features(
                audio, embedding_settings.dim, embedding_settings.fallback_seed, embedding_settings.n_mels
            )
        if audio_stream.dim != embedding_settings.dim:
            raise EmbeddingError(f"Audio embeddings have width {audio_stream.dim}, expected {embedding_settings.dim}")
        audio_stream = resample_embeddings(audio_stream, embedding_settings.motion_rate)

        tokens = [token.text for token in transcript.tokens]
        if text_embeddings is not None:
            token_vectors = load_embeddings(text_embeddings).vectors
            if token_vectors.shape != (len(tokens), embedding_settings.dim):
                raise EmbeddingError(
                    f"{text_embeddings}: expected {len(tokens)} x {embedding_settings.dim} token vectors, "
                    f"got {token_vectors.shape[0]} x {token_vectors.shape[1]}"
                )
        else:
            token_vectors = fallback_text_features(tokens, embedding_settings.dim, embedding_settings.fallback_seed)
        text_stream = replicate_tokens(
            transcript,
            token_vectors,
            embedding_settings.motion_rate,
            audio_stream.frame_count if frame_count is None else frame_count,
        )
        return audio_stream, text_stream

    def detect_anomalies(self, pose: PoseSequence) -> AnomalyReport:
        """Hampel check of the configured joints; clips shorter than the window are not checked."""
        motion_settings = self.settings.motion
        if motion_settings.hampel_window >= pose.frame_count:
            logger.warning(
                "Clip of %d frames is shorter than the Hampel window (%d); skipping anomaly check",
                pose.frame_count, motion_settings.hampel_window,
            )
            return AnomalyReport(frame_count=pose.frame_count)
        joints = pose.skeleton.select(motion_settings.hampel_joint_patterns)
        return detect_speed_anomalies(
            forward_kinematics(pose),
            pose.frame_rate,
            pose.skeleton.names,
            joints,
            window=motion_settings.hampel_window,
            threshold=motion_settings.hampel_threshold,
            mad_floor=motion_settings.mad_floor,
        )

    def prepare_clip(self, entry: ManifestEntry, output_dir: Path) -> Tuple[ClipPrepResult, AnomalyReport]:
        """
        Prepare one clip and write its archive, repaired audio and anomaly report.

        Raises:
            PrepError: If a referenced file is missing
            DataError: If any processing stage fails
        """
        for label, path in (
            ("motion", entry.motion),
            ("main audio", entry.main_audio),
            ("interlocutor audio", entry.interlocutor_audio),
            ("main transcript", entry.main_transcript),
            ("interlocutor transcript", entry.interlocutor_transcript),
        ):
            if not path.is_file():
                raise PrepError(f"{entry.clip_id}: missing {label} file {path}")

        clip = read_bvh(entry.motion)
        pose = clip_to_pose(clip, self._tpose, self.settings.motion.include_root_translation)
        report = self.detect_anomalies(pose)

        main_audio, main_transcript = self.load_audio(entry.main_audio, entry.main_transcript)
        other_audio, other_transcript = self.load_audio(entry.interlocutor_audio, entry.interlocutor_transcript)
        main_audio_stream, main_text_stream = self.agent_speech(
            main_audio, main_transcript, entry.main_audio_embeddings, entry.main_text_embeddings, pose.frame_count
        )
        other_audio_stream, other_text_stream = self.agent_speech(
            other_audio, other_transcript,
            entry.interlocutor_audio_embeddings, entry.interlocutor_text_embeddings, pose.frame_count,
        )
        aligned = align_clip(
            entry.clip_id, pose, main_audio_stream, main_text_stream, other_audio_stream, other_text_stream
        )

        archive_path = output_dir / f"{entry.clip_id}{ARCHIVE_SUFFIX}"
        save_aligned_clip(archive_path, aligned)
        write_wav(output_dir / f"{entry.clip_id}.main.wav", main_audio)
        write_wav(output_dir / f"{entry.clip_id}.interlocutor.wav", other_audio)
        (output_dir / f"{entry.clip_id}.anomalies.tsv").write_text(
            format_anomaly_report(entry.motion.name, report), encoding="utf-8"
        )
        logger.info("Prepared %s: %d frames, %d anomaly flags", entry.clip_id, aligned.frame_count, len(report.flags))
        result = ClipPrepResult(
            clip_id=entry.clip_id,
            archive=archive_path.name,
            frame_count=aligned.frame_count,
            flagged_fraction=report.flagged_fraction,
            flag_count=len(report.flags),
        )
        return result, report

    async def _prepare_guarded(
        self, entry: ManifestEntry, output_dir: Path, semaphore: asyncio.Semaphore
    ) -> Tuple[ClipPrepResult, Optional[AnomalyReport]]:
        async with semaphore:
            try:
                return await asyncio.to_thread(self.prepare_clip, entry, output_dir)
            except (GestdiffError, OSError) as error:
                logger.error("prep: clip %s failed: %s", entry.clip_id, error)
                return ClipPrepResult(clip_id=entry.clip_id, error=str(error)), None

    async def prepare(self, entries: List[ManifestEntry], output_dir: Path) -> PrepSummary:
        """
        Prepare every clip concurrently, collecting per-clip failures.

        Args:
            entries: Manifest entries
            output_dir: Prepared-dataset directory (created if needed)

        Returns:
            PrepSummary in manifest order with the advisory exclusion list
        """
        output_dir = ensure_directory(output_dir)
        semaphore = asyncio.Semaphore(self.workers)
        outcomes = await asyncio.gather(*(self._prepare_guarded(entry, output_dir, semaphore) for entry in entries))

        summary = PrepSummary(results=[result for result, _ in outcomes])
        threshold = self.settings.prep.exclusion_fraction
        summary.excluded = [result.clip_id for result in summary.results if result.ok and result.flagged_fraction > threshold]

        report_lines = "".join(
            format_anomaly_report(entry.motion.name, report)
            for entry, (_, report) in zip(entries, outcomes)
            if report is not None
        )
        (output_dir / ANOMALY_REPORT_NAME).write_text(report_lines, encoding="utf-8")
        (output_dir / EXCLUSION_LIST_NAME).write_text(
            "".join(f"{clip_id}\n" for clip_id in summary.excluded), encoding="utf-8"
        )
        write_json(output_dir / SUMMARY_NAME, summary.to_dict())
        if summary.excluded:
            logger.warning(
                "%d clips exceed the anomaly threshold and are listed in %s (pass --exclude-list to drop them)",
                len(summary.excluded), EXCLUSION_LIST_NAME,
            )
        logger.info("%s", summary.summary_line())
        return summary

    def run(self, manifest_path: Path, output_dir: Path) -> PrepSummary:
        """Read a manifest and prepare all of its clips."""
        entries = read_manifest(manifest_path)
        logger.info("Preparing %d clips from %s with %d workers", len(entries), manifest_path, self.workers)
        return asyncio.run(self.prepare(entries, Path(output_dir)))
