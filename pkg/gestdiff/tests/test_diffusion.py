"""
Tests for noise schedules, the denoiser, guidance, sampling and diffusion training.
"""

import math

import numpy as np
import pytest
import torch
from torch import nn

from gestdiff.diffusion.denoiser import DenoiserModel, DiffusionError, step_embedding
from gestdiff.diffusion.guidance import combine_guidance, guided_epsilon
from gestdiff.diffusion.sampler import (
    WindowedEpsilon,
    ancestral_sample,
    crossfade_weights,
    features_to_pose,
    sample,
)
from gestdiff.diffusion.schedule import forward_sample, make_schedule, schedule_from_betas
from gestdiff.diffusion.trainer import (
    DiffusionExample,
    DiffusionTrainer,
    load_denoiser,
    split_validation,
    train_diffusion,
    training_step,
)
from gestdiff.domain.diffusion_models import GuidanceParams, ScheduleError
from gestdiff.neural.checkpoint import decode_checkpoint, encode_checkpoint
from gestdiff.tests.conftest import make_gesture_skeleton


def small_denoiser(pose_dim=4, conditioning_dim=6, seed=0, live_output=True):
    """A tiny denoiser; the zero-initialized output layer is randomized unless live_output is False."""
    torch.manual_seed(seed)
    model = DenoiserModel(
        pose_dim=pose_dim,
        conditioning_dim=conditioning_dim,
        model_dim=16,
        residual_blocks=2,
        layers_per_block=1,
        heads=2,
        ff_dim=32,
        max_relative_distance=8,
        step_embedding_dim=16,
    )
    if live_output:
        with torch.no_grad():
            model.output_projection.weight.normal_(0.0, 0.5)
    return model.eval()


def examples(count=3, frame_count=40, pose_dim=4, conditioning_dim=6):
    result = []
    for index in range(count):
        rng = np.random.default_rng(index)
        conditioning = rng.normal(size=(frame_count, conditioning_dim))
        poses = np.tanh(conditioning[:, :pose_dim]) + 0.1 * rng.normal(size=(frame_count, pose_dim))
        result.append(DiffusionExample(clip_id=f"clip{index}", poses=poses, conditioning=conditioning))
    return result


class OracleModel(nn.Module):
    """Recovers the exact noise from x_n given the clean batch it was built from."""

    def __init__(self, x0, schedule):
        super().__init__()
        self.x0 = x0
        self.alpha_bars = torch.as_tensor(schedule.alpha_bars, dtype=x0.dtype)

    def forward(self, noisy, steps, conditioning=None, drop_mask=None):
        alpha_bar = self.alpha_bars[steps - 1].view(-1, 1, 1)
        return (noisy - alpha_bar.sqrt() * self.x0) / (1.0 - alpha_bar).sqrt()


class ZeroModel(nn.Module):
    def forward(self, noisy, steps, conditioning=None, drop_mask=None):
        return torch.zeros_like(noisy)


# Schedules

def test_alpha_bars_are_running_products():
    schedule = schedule_from_betas([0.5, 0.5])

    np.testing.assert_allclose(schedule.alpha_bars, [0.5, 0.25])
    assert schedule.alpha_bar(0) == 1.0


def test_single_step_schedule():
    schedule = schedule_from_betas([0.1])

    assert schedule.alpha_bar(1) == pytest.approx(0.9)
    assert schedule.posterior_variance(1) == 0.0


def test_default_linear_schedule_final_alpha_bar():
    schedule = make_schedule("linear", 1000, 1e-4, 0.02)

    assert schedule.alpha_bars[-1] == pytest.approx(4.04e-5, rel=0.02)
    assert np.all(np.diff(schedule.alpha_bars) < 0)


def test_quadratic_schedule_keeps_endpoints():
    schedule = make_schedule("quadratic", 50, 1e-4, 0.05)

    assert schedule.betas[0] == pytest.approx(1e-4)
    assert schedule.betas[-1] == pytest.approx(0.05)
    assert schedule.betas[25] < 0.5 * (1e-4 + 0.05)


@pytest.mark.parametrize("kind,steps,start,end", [
    ("cosine", 10, 1e-4, 0.02),
    ("linear", 0, 1e-4, 0.02),
    ("linear", 10, 0.0, 0.02),
    ("linear", 10, 0.03, 0.02),
    ("linear", 10, 1e-4, 1.0),
])
def test_invalid_schedules_are_rejected(kind, steps, start, end):
    with pytest.raises(ScheduleError):
        make_schedule(kind, steps, start, end)


def test_schedule_summary():
    summary = make_schedule("linear", 10, 1e-3, 0.1).to_dict()

    assert summary["kind"] == "linear"
    assert summary["num_steps"] == 10
    assert summary["beta_end"] == pytest.approx(0.1)


# Forward corruption

def test_forward_sample_without_noise_scales_signal():
    schedule = schedule_from_betas([0.5, 0.5])
    x0 = np.array([2.0, -4.0])

    np.testing.assert_allclose(forward_sample(x0, 2, schedule, np.zeros(2)), [1.0, -2.0])


def test_forward_sample_moments():
    schedule = schedule_from_betas([0.5, 0.5])
    noise = np.random.default_rng(0).standard_normal(200_000)

    samples = forward_sample(np.full(noise.shape, 2.0), 2, schedule, noise)

    assert samples.mean() == pytest.approx(1.0, abs=0.01)
    assert samples.var() == pytest.approx(0.75, abs=0.01)


def test_per_step_chain_matches_closed_form_marginal():
    schedule = make_schedule("linear", 5, 0.05, 0.3)
    rng = np.random.default_rng(1)
    x = np.full(200_000, 2.0)

    for n in range(1, 6):
        beta = schedule.beta(n)
        x = math.sqrt(1.0 - beta) * x + math.sqrt(beta) * rng.standard_normal(x.shape)
    direct = forward_sample(np.full(x.shape, 2.0), 5, schedule, rng.standard_normal(x.shape))

    variance = 1.0 - schedule.alpha_bar(5)
    tolerance = 4 * math.sqrt(variance / x.size)
    assert x.mean() == pytest.approx(2.0 * math.sqrt(schedule.alpha_bar(5)), abs=tolerance)
    assert x.var() == pytest.approx(variance, rel=0.02)
    assert x.mean() == pytest.approx(direct.mean(), abs=2 * tolerance)
    assert x.var() == pytest.approx(direct.var(), rel=0.03)


def test_forward_sample_rejects_step_zero():
    with pytest.raises(ScheduleError, match="outside"):
        forward_sample(np.zeros(2), 0, schedule_from_betas([0.1]), np.zeros(2))


# Training objective

def test_oracle_noise_predictor_has_zero_loss():
    schedule = make_schedule("linear", 50, 1e-4, 0.05)
    x0 = torch.randn(8, 12, 4, generator=torch.Generator().manual_seed(0))
    guidance = GuidanceParams(scale=1.0, dropout=0.0)

    loss = training_step(OracleModel(x0, schedule), schedule, x0, None, guidance, torch.Generator().manual_seed(1))

    assert loss < 1e-6


def test_zero_predictor_loss_is_noise_variance():
    schedule = make_schedule("linear", 50, 1e-4, 0.05)
    x0 = torch.zeros(64, 50, 4)
    guidance = GuidanceParams(scale=1.0, dropout=0.0)

    loss = training_step(ZeroModel(), schedule, x0, None, guidance, torch.Generator().manual_seed(2))

    assert loss == pytest.approx(1.0, abs=0.05)


# Denoiser

def test_step_embedding_shape_and_range():
    embedding = step_embedding(torch.tensor([1, 500, 1000]), 16)

    assert embedding.shape == (3, 16)
    assert embedding.abs().max() <= 1.0


def test_fresh_denoiser_predicts_zero_noise():
    model = small_denoiser(live_output=False)

    output = model(torch.randn(2, 10, 4), torch.tensor([1, 5]), torch.randn(2, 10, 6))

    assert torch.all(output == 0.0)


def test_dropped_items_match_unconditioned_pass():
    model = small_denoiser()
    x, steps, conditioning = torch.randn(2, 10, 4), torch.tensor([3, 7]), torch.randn(2, 10, 6)

    dropped = model(x, steps, conditioning, torch.tensor([True, False]))
    unconditioned = model(x, steps, None)
    conditioned = model(x, steps, conditioning)

    torch.testing.assert_close(dropped[0], unconditioned[0])
    torch.testing.assert_close(dropped[1], conditioned[1])


def test_conditioning_width_is_checked():
    with pytest.raises(DiffusionError, match="Conditioning shape"):
        small_denoiser()(torch.zeros(1, 5, 4), torch.tensor([1]), torch.zeros(1, 5, 7))


def test_pose_width_is_checked():
    with pytest.raises(DiffusionError, match="width 3"):
        small_denoiser()(torch.zeros(1, 5, 3), torch.tensor([1]))


# Guidance

def test_guidance_arithmetic():
    eps_c, eps_u = np.array([1.0]), np.array([0.5])

    np.testing.assert_allclose(combine_guidance(eps_c, eps_u, 2.0), [2.0])
    np.testing.assert_allclose(combine_guidance(eps_c, eps_u, 0.0), [1.0])


def test_zero_scale_skips_unconditioned_pass(mocker):
    model = mocker.Mock(return_value=torch.ones(1, 3, 2))
    x, steps, conditioning = torch.zeros(1, 3, 2), torch.tensor([1]), torch.zeros(1, 3, 5)

    guided_epsilon(x, steps, conditioning, 0.0, model)

    assert model.call_count == 1


def test_positive_scale_runs_null_conditioning(mocker):
    model = mocker.Mock(side_effect=[torch.ones(1, 3, 2), torch.full((1, 3, 2), 0.5)])
    x, steps, conditioning = torch.zeros(1, 3, 2), torch.tensor([1]), torch.zeros(1, 3, 5)

    result = guided_epsilon(x, steps, conditioning, 2.0, model)

    assert model.call_count == 2
    assert model.call_args_list[1].args[2] is None
    assert torch.allclose(result, torch.full((1, 3, 2), 2.0))


def test_negative_guidance_scale_is_rejected():
    with pytest.raises(ScheduleError, match=">= 0"):
        GuidanceParams(scale=-1.0)


# Sampling

def test_single_step_chain_has_closed_form():
    schedule = schedule_from_betas([0.1])
    epsilon = torch.full((1, 3, 2), 0.3)

    result = ancestral_sample(lambda x, n: epsilon, schedule, (1, 3, 2), torch.Generator().manual_seed(4))

    start = torch.randn((1, 3, 2), generator=torch.Generator().manual_seed(4))
    expected = (start - 0.1 / math.sqrt(0.1) * epsilon) / math.sqrt(0.9)
    torch.testing.assert_close(result, expected)


def test_zero_denoiser_sample_variance_follows_posterior_recursion(mocker):
    schedule = make_schedule("linear", 5, 0.05, 0.3)
    shape = (100_000, 1, 1)
    epsilon_fn = mocker.Mock(side_effect=lambda x, n: torch.zeros_like(x))
    generator = torch.Generator().manual_seed(8)

    result = ancestral_sample(epsilon_fn, schedule, shape, generator, dtype=torch.float64)

    expected = 1.0
    for n in range(5, 1, -1):
        expected = expected / schedule.alphas[n - 1] + schedule.posterior_variance(n)
    expected /= schedule.alphas[0]
    assert result.var().item() == pytest.approx(expected, rel=0.03)
    assert result.mean().item() == pytest.approx(0.0, abs=4 * math.sqrt(expected / shape[0]))
    assert [call.args[1] for call in epsilon_fn.call_args_list] == [5, 4, 3, 2, 1]

    reference = torch.Generator().manual_seed(8)
    for _ in range(5):
        torch.randn(shape, generator=reference, dtype=torch.float64)
    assert torch.equal(generator.get_state(), reference.get_state())


def test_sampling_is_deterministic_in_seed():
    model = small_denoiser()
    schedule = make_schedule("linear", 10, 1e-3, 0.2)
    conditioning = np.random.default_rng(0).normal(size=(15, 6))

    first = sample(model, schedule, conditioning, 1.0, seed=5)
    second = sample(model, schedule, conditioning, 1.0, seed=5)
    other = sample(model, schedule, conditioning, 1.0, seed=6)

    assert first.shape == (15, 4)
    assert np.array_equal(first, second)
    assert not np.array_equal(first, other)


def test_guidance_scale_changes_samples():
    model = small_denoiser()
    schedule = make_schedule("linear", 10, 1e-3, 0.2)
    conditioning = np.random.default_rng(1).normal(size=(15, 6))

    plain = sample(model, schedule, conditioning, 0.0, seed=5)
    guided = sample(model, schedule, conditioning, 2.0, seed=5)

    assert not np.allclose(plain, guided)


def test_sample_rejects_wrong_conditioning_width():
    with pytest.raises(DiffusionError, match="model width 6"):
        sample(small_denoiser(), make_schedule("linear", 5), np.zeros((10, 5)), 1.0, seed=0)


def test_crossfade_weights():
    np.testing.assert_allclose(crossfade_weights(6, True, True, 2), [1 / 3, 2 / 3, 1, 1, 2 / 3, 1 / 3])
    np.testing.assert_allclose(crossfade_weights(4, False, True, 2), [1, 1, 2 / 3, 1 / 3])


def test_windowed_estimate_preserves_constant_predictions():
    conditioning = torch.zeros(1, 45, 6)
    windowed = WindowedEpsilon(lambda x, steps, cond: torch.ones_like(x), conditioning, 0.0, 20, 10, 5)

    estimate = windowed(torch.zeros(1, 45, 4), 3)

    assert windowed.starts == [0, 10, 20, 25]
    torch.testing.assert_close(estimate, torch.ones(1, 45, 4))


def test_features_to_pose_canonicalizes_angles():
    skeleton = make_gesture_skeleton()
    features = np.zeros((2, 3 * skeleton.joint_count))
    features[:, 2] = 1.5 * np.pi

    pose = features_to_pose(features, skeleton, 30.0)

    np.testing.assert_allclose(pose.frames[:, :3], [[0.0, 0.0, -0.5 * np.pi]] * 2, atol=1e-9)


# Training runs

def test_validation_split_holds_out_floor_of_fraction():
    items = examples(5)

    training, validation = split_validation(items, 0.4, seed=3)

    assert len(validation) == 2
    assert {item.clip_id for item in training} | {item.clip_id for item in validation} == {f"clip{i}" for i in range(5)}


def test_validation_split_keeps_one_training_clip():
    training, validation = split_validation(examples(2), 0.9, seed=3)

    assert len(training) == 1 and len(validation) == 1


def test_training_reports_every_step(tiny_config):
    seen = []

    checkpoint = train_diffusion(
        examples(), tiny_config.diffusion, seed=7, on_step=lambda step, loss, validation: seen.append(step)
    )

    assert seen == [1, 2, 3, 4, 5]
    assert checkpoint.step == 5
    assert checkpoint.hyperparameters["num_steps"] == 10
    assert checkpoint.hyperparameters["window_frames"] == 20


def test_validation_loss_is_reported_at_interval(tiny_config):
    settings = tiny_config.diffusion.model_copy(update={"validation_fraction": 0.34, "validation_interval": 2})
    reported = []

    trainer = DiffusionTrainer(examples(3), settings, seed=7)
    trainer.train(4, on_step=lambda step, loss, validation: reported.append(validation))

    assert trainer.validation_ids and len(trainer.training_ids) == 2
    assert reported[0] is None and reported[2] is None
    assert reported[1] is not None and reported[3] is not None


def test_no_validation_when_fraction_is_zero(tiny_config):
    trainer = DiffusionTrainer(examples(2), tiny_config.diffusion, seed=7)

    assert trainer.validation_loss() is None


def test_resumed_training_matches_uninterrupted_run(tiny_config):
    data = examples()

    straight = DiffusionTrainer(data, tiny_config.diffusion, seed=7).train(4)
    first = DiffusionTrainer(data, tiny_config.diffusion, seed=7)
    head = first.train(2)
    saved = decode_checkpoint(encode_checkpoint(first.checkpoint()))
    tail = DiffusionTrainer(data, tiny_config.diffusion, seed=7, resume=saved).train(2)

    assert head + tail == straight


def test_short_clips_are_skipped(tiny_config):
    short = examples(1, frame_count=10)[0]
    data = examples(2) + [DiffusionExample(clip_id="short", poses=short.poses, conditioning=short.conditioning)]

    trainer = DiffusionTrainer(data, tiny_config.diffusion, seed=7)

    assert sorted(trainer.training_ids) == ["clip0", "clip1"]


def test_all_clips_too_short_is_an_error(tiny_config):
    with pytest.raises(DiffusionError, match="at least 20 frames"):
        DiffusionTrainer(examples(2, frame_count=10), tiny_config.diffusion, seed=7)


def test_loaded_denoiser_carries_schedule_and_standardization(tiny_config):
    trainer = DiffusionTrainer(examples(), tiny_config.diffusion, seed=7)
    trainer.train(1)

    model, schedule = load_denoiser(decode_checkpoint(encode_checkpoint(trainer.checkpoint())))

    assert schedule.num_steps == 10
    torch.testing.assert_close(model.feature_mean, trainer.model.feature_mean)
    torch.testing.assert_close(model.feature_std, trainer.model.feature_std)


@pytest.mark.slow
def test_training_lowers_denoising_loss(tiny_config):
    settings = tiny_config.diffusion.model_copy(update={"batch_size": 8, "learning_rate": 3e-3})

    losses = DiffusionTrainer(examples(4), settings, seed=11).train(300)

    assert np.mean(losses[-30:]) < np.mean(losses[:30])


def sign_examples(count=8, frame_count=40):
    """Constant poses at +1 or -1, conditioned on their own sign."""
    signs = [1.0 if index % 2 == 0 else -1.0 for index in range(count)]
    return [
        DiffusionExample(
            clip_id=f"s{index}",
            poses=np.full((frame_count, 1), sign),
            conditioning=np.full((frame_count, 1), sign),
        )
        for index, sign in enumerate(signs)
    ]


@pytest.mark.slow
def test_guided_samples_follow_their_conditioning_sign(tiny_config):
    settings = tiny_config.diffusion.model_copy(update={
        "num_steps": 50,
        "beta_start": 1e-4,
        "beta_end": 0.2,
        "batch_size": 16,
        "log_interval": 500,
    })
    trainer = DiffusionTrainer(sign_examples(), settings, seed=3)
    trainer.train(3000)
    model = trainer.model.eval()
    labels = np.repeat([1.0, -1.0], 50)
    shuffled = np.random.default_rng(0).permutation(labels)

    def draw_means(conditioning_signs, seed):
        conditioning = torch.as_tensor(conditioning_signs, dtype=torch.float32).view(-1, 1, 1).expand(-1, 20, 1)
        epsilon_fn = WindowedEpsilon(model, conditioning.contiguous(), 1.0, 20, 10, 5)
        features = ancestral_sample(epsilon_fn, trainer.schedule, (100, 20, 1), torch.Generator().manual_seed(seed))
        with torch.no_grad():
            return model.destandardize(features).mean(dim=(1, 2)).double().numpy()

    guided = draw_means(labels, seed=1)
    mismatched = np.mean(np.sign(draw_means(shuffled, seed=2)) == labels)

    assert np.mean(np.sign(guided) == labels) >= 0.95
    assert np.mean(np.abs(guided - labels) < 0.2) >= 0.9
    assert 0.3 <= mismatched <= 0.7
