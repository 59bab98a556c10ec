import math

import pandas as pd
import pytest
import torch

from covertsem._data import LabeledImages
from covertsem._errors import GateNotMet, InvalidShape
from covertsem._metrics import (
    PSNR_CAP_DB,
    DecisionRule,
    IdentityModel,
    IdentityTrainConfig,
    MetricReport,
    _scale_count,
    _window_size,
    calibrate_threshold,
    chance_level,
    evaluate_reconstructions,
    fpesr,
    ms_ssim,
    normalize_channels,
    perceptual_distance,
    psnr,
    stratified_split,
    train_identity_model,
)
from covertsem._training import TrainingLog


@pytest.fixture
def id_model():
    torch.manual_seed(0)
    return IdentityModel((3, 16, 16), n_identities=3, widths=(4, 8), embedding_dim=8).eval()


def tiny_identity_config(**overrides):
    params = dict(
        image_shape=(3, 16, 16),
        widths=(8, 16),
        embedding_dim=16,
        epochs=40,
        batch_size=6,
        lr=3e-3,
        gate=0.5,
    )
    params.update(overrides)
    return IdentityTrainConfig(**params)


class TestPsnr:
    def test_identical_images_hit_the_cap(self):
        x = torch.rand(2, 3, 8, 8)
        assert torch.all(psnr(x, x) == PSNR_CAP_DB)

    def test_known_value(self):
        x = torch.zeros(1, 1, 4, 4)
        y = torch.full((1, 1, 4, 4), 0.1)
        assert psnr(x, y).item() == pytest.approx(20.0, abs=1e-4)

    def test_per_sample(self):
        x = torch.zeros(3, 1, 4, 4)
        y = torch.stack([torch.full((1, 4, 4), v) for v in (0.1, 0.01, 0.0)])
        assert psnr(x, y).tolist() == pytest.approx([20.0, 40.0, 100.0], abs=1e-3)

    def test_decreases_with_noise(self):
        g = torch.Generator().manual_seed(0)
        x = torch.rand(1, 3, 16, 16, generator=g)
        noise = torch.randn(x.shape, generator=g)
        values = [psnr(x, x + sigma * noise).item() for sigma in (0.01, 0.02, 0.05, 0.1, 0.2)]
        assert all(a > b for a, b in zip(values, values[1:]))

    @pytest.mark.parametrize(
        "x,y", [((1, 3, 4, 4), (1, 3, 4, 5)), ((3, 4, 4), (3, 4, 4))]
    )
    def test_bad_shapes_raise(self, x, y):
        with pytest.raises(InvalidShape):
            psnr(torch.zeros(x), torch.zeros(y))


class TestMsSsim:
    def test_identical_images_score_one(self):
        x = torch.rand(2, 3, 64, 64, generator=torch.Generator().manual_seed(0))
        assert torch.allclose(ms_ssim(x, x), torch.ones(2), atol=1e-5)

    def test_noise_lowers_the_score(self):
        g = torch.Generator().manual_seed(0)
        x = torch.rand(1, 3, 64, 64, generator=g)
        mild = (x + 0.05 * torch.randn(x.shape, generator=g)).clamp(0, 1)
        heavy = (x + 0.3 * torch.randn(x.shape, generator=g)).clamp(0, 1)
        assert ms_ssim(x, heavy) < ms_ssim(x, mild) < 1

    def test_small_images_use_fewer_scales(self):
        x = torch.rand(1, 1, 32, 32)
        assert _scale_count(32, 11, 5) == 2
        assert ms_ssim(x, x).item() == pytest.approx(1.0, abs=1e-5)

    def test_images_smaller_than_window_use_single_scale(self):
        g = torch.Generator().manual_seed(0)
        x = torch.rand(2, 3, 8, 8, generator=g)
        y = (x + 0.2 * torch.randn(x.shape, generator=g)).clamp(0, 1)
        score = ms_ssim(x, y)
        assert _window_size(8) == 7
        assert _window_size(4) == 3
        assert torch.allclose(ms_ssim(x, x), torch.ones(2), atol=1e-5)
        assert torch.all((score > 0) & (score < 1))

    def test_one_pixel_images(self):
        x = torch.rand(1, 1, 1, 1)
        assert ms_ssim(x, x).item() == pytest.approx(1.0, abs=1e-5)

    def test_matches_reference_implementation(self):
        reference = pytest.importorskip("pytorch_msssim")
        g = torch.Generator().manual_seed(4)
        x = torch.rand(20, 3, 176, 176, generator=g)
        y = (x + 0.1 * torch.randn(x.shape, generator=g)).clamp(0, 1)
        expected = reference.ms_ssim(x, y, data_range=1.0, size_average=False)
        assert torch.allclose(ms_ssim(x, y), expected, atol=1e-4)


class TestPerceptualDistance:
    def test_zero_for_identical_images(self, id_model, tiny_dataset):
        x = tiny_dataset.images[:3]
        assert torch.allclose(perceptual_distance(x, x, id_model), torch.zeros(3))

    def test_positive_for_different_images(self, id_model, tiny_dataset):
        d = perceptual_distance(tiny_dataset.images[:2], tiny_dataset.images[-2:], id_model)
        assert torch.all(d > 0)

    def test_shuffled_pixels_are_farther_than_a_mild_blur(self, id_model, tiny_dataset):
        x = tiny_dataset.images[:6]
        blurred = torch.nn.functional.avg_pool2d(
            x, 3, stride=1, padding=1, count_include_pad=False
        )
        order = torch.randperm(16 * 16, generator=torch.Generator().manual_seed(0))
        shuffled = x.flatten(2)[..., order].reshape(x.shape)
        assert torch.all(
            perceptual_distance(x, shuffled, id_model) > perceptual_distance(x, blurred, id_model)
        )

    def test_features_are_channel_normalized(self, id_model, tiny_dataset):
        for f in id_model.features(tiny_dataset.images[:2]):
            norms = f.pow(2).sum(dim=1)
            assert torch.allclose(norms, torch.ones_like(norms), atol=1e-4)

    def test_normalize_channels_handles_zeros(self):
        assert torch.equal(normalize_channels(torch.zeros(1, 2, 3, 3)), torch.zeros(1, 2, 3, 3))


class TestIdentityModel:
    def test_embeddings_are_unit_norm(self, id_model, tiny_dataset):
        emb = id_model.embed(tiny_dataset.images[:4])
        assert torch.allclose(emb.norm(dim=1), torch.ones(4), atol=1e-5)

    @pytest.mark.parametrize("rule", list(DecisionRule))
    def test_an_image_matches_itself(self, id_model, tiny_dataset, rule):
        id_model.rule = rule
        x = tiny_dataset.images[:5]
        assert id_model.same_identity(x, x).all()

    def test_threshold_survives_init_kwargs(self, id_model):
        id_model.threshold.fill_(0.8)
        rebuilt = IdentityModel(**id_model.init_kwargs)
        assert rebuilt.threshold.item() == pytest.approx(0.8)

    def test_rejects_wrong_image_shape(self, id_model):
        with pytest.raises(InvalidShape):
            id_model.embed(torch.rand(1, 3, 8, 8))


def test_stratified_split_holds_out_every_class(generator):
    labels = torch.tensor([0, 0, 0, 0, 0, 1, 1, 2, 2, 2])
    train, held = stratified_split(labels, 0.2, generator)
    assert sorted(train.tolist() + held.tolist()) == list(range(10))
    assert set(labels[held].tolist()) == {0, 1, 2}
    assert set(labels[train].tolist()) == {0, 1, 2}


def test_calibrate_threshold_accepts_requested_fraction(id_model, tiny_dataset):
    threshold = calibrate_threshold(id_model, tiny_dataset.images, tiny_dataset.labels, 0.9)
    emb = id_model.embed(tiny_dataset.images).detach()
    cosine = emb @ emb.T
    same = (tiny_dataset.labels[:, None] == tiny_dataset.labels[None, :]) & ~torch.eye(
        len(tiny_dataset), dtype=torch.bool
    )
    accepted = (cosine[same] >= threshold).float().mean().item()
    assert accepted >= 0.85


class TestTrainIdentityModel:
    def test_learns_synthetic_identities(self, tiny_dataset):
        log = TrainingLog("identity")
        model = train_identity_model(
            tiny_dataset, tiny_identity_config(), torch.Generator().manual_seed(0), log=log
        )
        assert not model.training
        assert log.rows[-1]["held_out_accuracy"] >= 0.5
        assert len(log.rows) == 40

    def test_cosine_rule_is_calibrated(self, tiny_dataset):
        cfg = tiny_identity_config(rule="cosine_threshold", true_positive_rate=0.9)
        model = train_identity_model(tiny_dataset, cfg, torch.Generator().manual_seed(0))
        assert model.rule is DecisionRule.COSINE_THRESHOLD
        assert -1.0 <= model.threshold.item() <= 1.0

    def test_gate_not_met_reports_accuracy(self, tiny_dataset, generator):
        cfg = tiny_identity_config(epochs=1, gate=1.01)
        with pytest.raises(GateNotMet) as excinfo:
            train_identity_model(tiny_dataset, cfg, generator)
        assert 0.0 <= excinfo.value.accuracy <= 1.0

    def test_single_identity_raises(self, generator):
        data = LabeledImages(torch.rand(4, 3, 16, 16), torch.zeros(4, dtype=torch.long), ["solo"])
        with pytest.raises(GateNotMet):
            train_identity_model(data, tiny_identity_config(), generator)


class TestFpesr:
    def test_perfect_reconstructions(self, id_model, tiny_dataset):
        x = tiny_dataset.images[:6]
        assert fpesr(x, x.clone(), id_model) == 1.0

    def test_noise_reconstructions_are_near_chance(self, tiny_dataset):
        model = train_identity_model(
            tiny_dataset, tiny_identity_config(), torch.Generator().manual_seed(0)
        )
        x = tiny_dataset.images
        noise = torch.rand(x.shape, generator=torch.Generator().manual_seed(1))
        chance = chance_level(len(tiny_dataset.identities))
        assert fpesr(x.clone(), x, model) == 1.0
        assert fpesr(noise, x, model) <= chance + 0.35

    def test_length_mismatch_raises(self, id_model, tiny_dataset):
        with pytest.raises(InvalidShape):
            fpesr(tiny_dataset.images[:2], tiny_dataset.images[:3], id_model)

    def test_empty_batch(self, id_model):
        empty = torch.zeros(0, 3, 16, 16)
        assert fpesr(empty, empty, id_model) == 0.0

    def test_chance_level(self):
        assert chance_level(4) == 0.25
        assert math.isnan(chance_level(0))


class TestMetricReport:
    def test_evaluate_with_identity_model(self, id_model, tiny_dataset):
        x = tiny_dataset.images[:4]
        report = evaluate_reconstructions(x, x, id_model, strategy="bob", snr_db=5.0)
        assert report.n_samples == 4
        assert list(report.rows.columns) == ["sample", "psnr", "ms_ssim", "perceptual", "identified"]
        summary = report.summary()
        assert summary["strategy"] == "bob"
        assert summary["psnr_mean"] == PSNR_CAP_DB
        assert summary["fpesr"] == 1.0

    def test_evaluate_without_models(self, tiny_dataset):
        report = evaluate_reconstructions(tiny_dataset.images[:2], tiny_dataset.images[2:4])
        assert "perceptual" not in report.rows
        assert report.fpesr is None
        assert report.summary()["fpesr"] is None

    def test_summary_statistics(self):
        rows = pd.DataFrame({"psnr": [10.0, 20.0], "identified": [True, False]})
        summary = MetricReport(rows, {"family": "awgn"}).summary()
        assert summary["psnr_mean"] == 15.0
        assert summary["psnr_std"] == 5.0
        assert summary["fpesr"] == 0.5

    def test_save_and_load(self, tmp_path, id_model, tiny_dataset):
        x = tiny_dataset.images[:3]
        report = evaluate_reconstructions(x, x.flip(-1), id_model, family="rayleigh", snr_db=10.0)
        rows_path, summary_path = report.save(tmp_path, "metrics_original")
        assert rows_path.name == "metrics_original.jsonl"
        assert summary_path.exists()
        loaded = MetricReport.load(rows_path)
        assert loaded.labels == {"family": "rayleigh", "snr_db": 10.0}
        assert loaded.rows["psnr"].tolist() == pytest.approx(report.rows["psnr"].tolist())
