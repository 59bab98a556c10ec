from dataclasses import replace
from pathlib import Path
from unittest.mock import MagicMock, patch

import pytest
import torch

from covertsem._config import get_config
from covertsem._core import checkpointed
from covertsem._generator import Generator
from covertsem._training import TrainingLog


def make_generator(width: int, seed: int = 0, log: TrainingLog | None = None) -> Generator:
    torch.manual_seed(seed)
    return Generator((1, 8, 8), d_s=2, base_channels=width, n_upsamples=1)


def same_weights(a, b) -> bool:
    return all(torch.equal(v, b.state_dict()[k]) for k, v in a.state_dict().items())


class TestCheckpointed:
    """Test suite for the checkpointed decorator."""

    @pytest.fixture
    def counted(self, tmp_path):
        calls = []

        @checkpointed(stage="toy", checkpoint_dir=tmp_path)
        def train(width, seed=0, log=None):
            calls.append((width, seed))
            return make_generator(width, seed)

        return train, calls

    def test_second_call_loads_checkpoint(self, counted, tmp_path):
        train, calls = counted

        first = train(4)
        assert len(calls) == 1
        written = train.last_checkpoint
        assert written is not None and written.parent == tmp_path
        assert written.name.startswith("toy_")

        second = train(4)
        assert len(calls) == 1
        assert train.last_checkpoint == written
        assert isinstance(second, Generator)
        assert not second.training
        assert same_weights(first, second)

    def test_different_arguments_retrain(self, counted):
        train, calls = counted
        train(4)
        train(4, seed=1)
        train(8)
        assert calls == [(4, 0), (4, 1), (8, 0)]

    def test_log_does_not_change_the_key(self, counted):
        train, calls = counted
        train(4, log=TrainingLog("a"))
        train(4, log=TrainingLog("b"))
        assert len(calls) == 1

    def test_resume_disabled(self, tmp_path):
        call_count = 0

        @checkpointed(checkpoint_dir=tmp_path, resume_enabled=False)
        def train():
            nonlocal call_count
            call_count += 1
            return make_generator(4)

        train()
        train()
        assert call_count == 2
        assert len(list(tmp_path.glob("*.ckpt"))) >= 1

    def test_corrupted_checkpoint_is_skipped(self, counted, tmp_path):
        train, calls = counted
        train(4)
        good = train.last_checkpoint
        prefix = "_".join(good.stem.split("_")[:-2])
        newer = tmp_path / f"{prefix}_29991231_235959.ckpt"
        newer.write_bytes(b"garbage")

        train(4)
        assert len(calls) == 1
        assert train.last_checkpoint == good
        assert not newer.exists()

    def test_non_module_results_are_not_saved(self, tmp_path):
        @checkpointed(checkpoint_dir=tmp_path)
        def summarize(x):
            return float(x.sum())

        assert summarize(torch.ones(3)) == 3.0
        assert list(tmp_path.glob("*.ckpt")) == []
        assert summarize.last_checkpoint is None

    def test_clear_cache_method(self, counted, tmp_path):
        train, _ = counted
        train(4)
        train(8)
        assert len(list(tmp_path.glob("toy_*.ckpt"))) == 2

        train.clear_cache()

        assert list(tmp_path.glob("toy_*.ckpt")) == []

    def test_checkpoint_directory_creation(self, tmp_path):
        checkpoint_dir = tmp_path / "nested" / "run" / "checkpoints"

        @checkpointed(checkpoint_dir=str(checkpoint_dir))
        def train():
            return make_generator(4)

        assert checkpoint_dir.is_dir()
        assert train.checkpoint_dir == checkpoint_dir

    def test_default_stage_name(self, tmp_path):
        @checkpointed(checkpoint_dir=tmp_path)
        def train():
            return make_generator(4)

        train()
        assert train.last_checkpoint.name.startswith(
            "test_core_TestCheckpointed_test_default_stage_name__locals__train_"
        )

    def test_wraps_preservation(self, tmp_path):
        """Test that function metadata is preserved using functools.wraps."""

        @checkpointed(checkpoint_dir=tmp_path)
        def documented_stage():
            """This stage has documentation."""
            return make_generator(4)

        assert documented_stage.__name__ == "documented_stage"
        assert documented_stage.__doc__ == "This stage has documentation."

    def test_plain_decorator_uses_config(self, tmp_path, monkeypatch):
        configured = replace(get_config(), cache_dir=tmp_path / "configured")
        monkeypatch.setattr("covertsem._config._cfg", configured)

        @checkpointed
        def train():
            return make_generator(4)

        train()
        assert train.checkpoint_dir == tmp_path / "configured"
        assert train.last_checkpoint.parent == tmp_path / "configured"

    def test_config_fallback(self, tmp_path):
        """Test fallback to config when parameters are not provided."""
        mock_cfg = MagicMock()
        mock_cfg.cache_dir = Path(tmp_path) / "fallback"
        mock_cfg.resume_enabled = False

        with patch("covertsem._config._cfg", mock_cfg):
            call_count = 0

            @checkpointed
            def train():
                nonlocal call_count
                call_count += 1
                return make_generator(4)

            train()
            train()

            # Since resume_enabled is False in config, the stage runs twice
            assert call_count == 2
            assert train.checkpoint_dir == mock_cfg.cache_dir
