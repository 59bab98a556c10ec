import math

import pytest
import torch

from covertsem._channels import (
    ChannelFamily,
    ChannelSpec,
    UniformSnrSampler,
    pair_complex,
    signal_power,
    unpair_complex,
)
from covertsem._codec import (
    CodecLossConfig,
    CodecTrainConfig,
    SemanticCodec,
    bandwidth,
    composite_loss,
    feature_weights,
    mean_image_baseline,
    reconstruct,
    train_codec,
)
from covertsem._errors import ConfigError, InvalidShape, TrainingDiverged
from covertsem._metrics import IdentityModel, psnr
from covertsem._training import TrainingLog


class IdentityFeatures:
    """Feature extractor returning the image itself as its only layer."""

    def features(self, x):
        return [x]


class NanFeatures:
    def features(self, x):
        return [torch.full_like(x, float("nan"))]


def tiny_train_config(**overrides):
    params = dict(
        image_shape=(3, 16, 16),
        channels=(4, 8),
        kernel_sizes=(3, 3, 3),
        epochs=2,
        batch_size=8,
        lr=3e-3,
    )
    params.update(overrides)
    return CodecTrainConfig(**params)


class TestBandwidth:
    @pytest.mark.parametrize(
        "shape,bcr,expected",
        [((3, 64, 64), 1 / 12, 1024), ((3, 16, 16), 1 / 12, 64), ((1, 8, 8), 1 / 6, 11)],
    )
    def test_round_n_times_bcr(self, shape, bcr, expected):
        assert bandwidth(shape, bcr) == expected

    def test_no_symbols_raises(self):
        with pytest.raises(ConfigError):
            bandwidth((1, 4, 4), 1 / 100)


class TestSemanticCodec:
    def test_rejects_sides_not_multiple_of_four(self):
        with pytest.raises(InvalidShape):
            SemanticCodec((3, 10, 12))

    def test_encode_is_power_normalized(self, tiny_codec, tiny_dataset):
        z = tiny_codec.encode(tiny_dataset.images[:5])
        assert z.shape == (5, tiny_codec.k)
        assert z.is_complex()
        assert torch.all((signal_power(z) - 1.0).abs() < 1e-5)

    def test_encode_rejects_wrong_shape(self, tiny_codec):
        with pytest.raises(InvalidShape):
            tiny_codec.encode(torch.rand(2, 3, 8, 8))

    def test_decode_range_and_shape(self, tiny_codec, generator):
        zhat = torch.randn(4, tiny_codec.k, dtype=torch.complex64, generator=generator)
        xhat = tiny_codec.decode(10 * zhat)
        assert xhat.shape == (4, 3, 16, 16)
        assert xhat.min() >= 0 and xhat.max() <= 1

    def test_decode_rejects_wrong_length(self, tiny_codec):
        with pytest.raises(InvalidShape):
            tiny_codec.decode(torch.zeros(1, tiny_codec.k + 1, dtype=torch.complex64))

    def test_signal_grid_matches_real_width(self, tiny_codec):
        assert math.prod(tiny_codec.signal_grid) == 2 * tiny_codec.k

    def test_linear_head_when_grid_does_not_divide(self):
        codec = SemanticCodec((1, 8, 8), bcr=1 / 6, channels=(2, 2), kernel_sizes=(3, 3, 3))
        assert codec.signal_grid == (2, 1, 11)
        xhat = codec.decode(codec.encode(torch.rand(2, 1, 8, 8)))
        assert xhat.shape == (2, 1, 8, 8)

    def test_forward_is_deterministic_per_channel_seed(self, tiny_codec, tiny_dataset):
        x = tiny_dataset.images[:3]
        spec = ChannelSpec(ChannelFamily.RAYLEIGH, 5.0, rng_seed=11)
        with torch.no_grad():
            assert torch.equal(tiny_codec(x, spec), tiny_codec(x, spec))

    def test_distinct_images_give_distinct_signals(self, tiny_codec, tiny_dataset):
        x = tiny_dataset.images[[0, -1]]
        with torch.no_grad():
            z = unpair_complex(tiny_codec.encode(x))
        cosine = torch.nn.functional.cosine_similarity(z[0], z[1], dim=0)
        assert cosine < 0.999

    def test_init_kwargs_rebuild_same_architecture(self, tiny_codec):
        clone = SemanticCodec(**tiny_codec.init_kwargs)
        clone.load_state_dict(tiny_codec.state_dict())
        assert clone.k == tiny_codec.k

    def test_gradients_match_finite_differences(self):
        torch.manual_seed(0)
        codec = SemanticCodec((3, 8, 8), channels=(3, 3), kernel_sizes=(3, 3, 3)).double()
        x = torch.rand(1, 3, 8, 8, dtype=torch.float64, requires_grad=True)
        reals = torch.randn(1, 2 * codec.k, dtype=torch.float64, requires_grad=True)

        assert torch.autograd.gradcheck(
            lambda t: unpair_complex(codec.encode(t)), (x,), eps=1e-6, atol=1e-4
        )
        assert torch.autograd.gradcheck(
            lambda t: codec.decode(pair_complex(t)), (reals,), eps=1e-6, atol=1e-4
        )


class TestCompositeLoss:
    def test_identical_images_have_zero_loss(self, tiny_dataset):
        x = tiny_dataset.images[:4]
        cfg = CodecLossConfig(feature_net=IdentityFeatures())
        assert composite_loss(x, x.clone(), cfg).item() == 0.0

    def test_pixel_term_is_mse(self):
        x = torch.zeros(2, 1, 2, 2)
        xhat = torch.full((2, 1, 2, 2), 0.5)
        cfg = CodecLossConfig(lambda_pix=1.0, lambda_perc=0.0)
        assert composite_loss(x, xhat, cfg).item() == pytest.approx(0.25)

    def test_perceptual_term_sums_channels(self):
        x = torch.zeros(1, 3, 2, 2)
        xhat = torch.full((1, 3, 2, 2), 0.5)
        cfg = CodecLossConfig(lambda_pix=0.0, lambda_perc=1.0, feature_net=IdentityFeatures())
        # one layer with weight 1: 3 channels of 0.25 per position
        assert composite_loss(x, xhat, cfg).item() == pytest.approx(0.75)

    def test_shape_mismatch_raises(self):
        with pytest.raises(InvalidShape):
            composite_loss(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 4, 5), CodecLossConfig())

    @pytest.mark.parametrize("pix,perc", [(0.0, 0.0), (-1.0, 1.0), (1.0, -0.1)])
    def test_invalid_weights_raise(self, pix, perc):
        with pytest.raises(ConfigError):
            CodecLossConfig(lambda_pix=pix, lambda_perc=perc)

    def test_feature_weights(self):
        assert feature_weights(4, None) == [0.25] * 4
        assert feature_weights(2, (0.3, 0.7)) == [0.3, 0.7]
        with pytest.raises(InvalidShape):
            feature_weights(3, (1.0,))

    def test_gradients_match_finite_differences(self):
        torch.manual_seed(0)
        backbone = IdentityModel((3, 8, 8), n_identities=2, widths=(2, 3), embedding_dim=4)
        cfg = CodecLossConfig(lambda_pix=1.0, lambda_perc=0.5, feature_net=backbone.double())
        g = torch.Generator().manual_seed(1)
        x = torch.rand(1, 3, 8, 8, dtype=torch.float64, generator=g)
        xhat = torch.rand(1, 3, 8, 8, dtype=torch.float64, generator=g, requires_grad=True)
        assert torch.autograd.gradcheck(
            lambda t: composite_loss(x, t, cfg), (xhat,), eps=1e-6, atol=1e-5
        )


class TestTrainCodec:
    def test_returns_eval_codec_and_logs_every_epoch(self, tiny_dataset, generator):
        log = TrainingLog("codec")
        codec = train_codec(
            tiny_dataset.images,
            UniformSnrSampler(),
            tiny_train_config(),
            generator,
            log=log,
            validation=tiny_dataset.images[:4],
        )
        assert not codec.training
        assert [row["epoch"] for row in log.rows] == [0, 1]
        assert all("val_psnr" in row for row in log.rows)

    def test_loss_decreases(self, tiny_dataset):
        log = TrainingLog("codec")
        train_codec(
            tiny_dataset.images,
            UniformSnrSampler(low_db=10.0, high_db=20.0),
            tiny_train_config(epochs=25, lr=5e-3),
            torch.Generator().manual_seed(1),
            log=log,
        )
        losses = log.column("loss")
        assert losses[-1] < losses[0]

    def test_quality_improves_with_snr(self, tiny_dataset):
        codec = train_codec(
            tiny_dataset.images,
            UniformSnrSampler(low_db=0.0, high_db=20.0),
            tiny_train_config(epochs=25, lr=5e-3),
            torch.Generator().manual_seed(1),
        )
        x = tiny_dataset.images
        quality = {
            snr: psnr(reconstruct(codec, x, ChannelSpec(snr_db=snr, rng_seed=2)), x).mean().item()
            for snr in (0.0, 20.0)
        }
        assert quality[20.0] > quality[0.0]

    def test_same_seed_same_weights(self, tiny_dataset):
        cfg = tiny_train_config(epochs=1)
        a = train_codec(tiny_dataset.images, UniformSnrSampler(), cfg, torch.Generator().manual_seed(5))
        b = train_codec(tiny_dataset.images, UniformSnrSampler(), cfg, torch.Generator().manual_seed(5))
        for key, value in a.state_dict().items():
            assert torch.equal(value, b.state_dict()[key])

    def test_non_finite_loss_raises(self, tiny_dataset, generator):
        cfg = tiny_train_config(loss=CodecLossConfig(feature_net=NanFeatures()))
        with pytest.raises(TrainingDiverged) as excinfo:
            train_codec(tiny_dataset.images, UniformSnrSampler(), cfg, generator)
        assert excinfo.value.epoch == 0
        assert excinfo.value.last_good_state is not None

    def test_rejects_mismatched_images(self, generator):
        with pytest.raises(InvalidShape):
            train_codec(torch.rand(4, 3, 8, 8), UniformSnrSampler(), tiny_train_config(), generator)


def test_mean_image_baseline(tiny_dataset):
    baseline = mean_image_baseline(tiny_dataset.images)
    assert baseline.shape == tiny_dataset.images.shape
    assert torch.allclose(baseline[0], tiny_dataset.images.mean(dim=0))


def test_reconstruct_noiseless_is_deterministic(tiny_codec, tiny_dataset):
    spec = ChannelSpec(snr_db=math.inf)
    a = reconstruct(tiny_codec, tiny_dataset.images[:2], spec)
    b = reconstruct(tiny_codec, tiny_dataset.images[:2], spec)
    assert torch.equal(a, b)
    assert not a.requires_grad
