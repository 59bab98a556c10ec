import pytest
import torch

from covertsem._attacks import AttackConfig, InverseTrainConfig
from covertsem._channels import ChannelFamily
from covertsem._codec import CodecTrainConfig, SemanticCodec
from covertsem._config import set_config
from covertsem._data import make_synthetic_dataset
from covertsem._experiment import (
    AttackSection,
    DatasetSection,
    DefenseSection,
    ExperimentConfig,
)
from covertsem._generator import GeneratorTrainConfig
from covertsem._metrics import IdentityTrainConfig
from covertsem._steganography import StegTrainConfig

TINY_SHAPE = (3, 16, 16)


@pytest.fixture(autouse=True)
def quiet_progress():
    set_config(verbose=False)


@pytest.fixture
def generator():
    return torch.Generator().manual_seed(0)


@pytest.fixture
def tiny_codec():
    torch.manual_seed(0)
    return SemanticCodec(TINY_SHAPE, bcr=1 / 12, channels=(4, 8), kernel_sizes=(3, 3, 3))


@pytest.fixture
def tiny_dataset():
    return make_synthetic_dataset(3, 8, TINY_SHAPE, torch.Generator().manual_seed(3))


@pytest.fixture
def tiny_experiment(tmp_path):
    """A complete experiment on 24 synthetic 16x16 faces that trains in seconds."""
    return ExperimentConfig(
        dataset=DatasetSection(
            image_shape=TINY_SHAPE,
            train_parts=3,
            test_parts=1,
            synthetic_identities=3,
            synthetic_per_identity=8,
        ),
        identity=IdentityTrainConfig(
            widths=(8, 16), embedding_dim=16, epochs=5, batch_size=6, lr=3e-3, gate=0.0
        ),
        codec=CodecTrainConfig(
            channels=(4, 8), kernel_sizes=(3, 3, 3), epochs=2, batch_size=8, lr=3e-3
        ),
        generator=GeneratorTrainConfig(
            d_s=8, base_channels=16, n_upsamples=2, encoder_width=4, epochs=2, batch_size=8
        ),
        steganography=StegTrainConfig(n_blocks=1, hidden=8, n_pairs=16, epochs=1, batch_size=8),
        attacks=AttackSection(
            families=(ChannelFamily.AWGN,),
            snrs_db=(10.0,),
            n_eval=4,
            n_preview=2,
            config=AttackConfig(max_iters=3, n_queries=12),
            inverse=InverseTrainConfig(
                channels=(4, 8), kernel_sizes=(3, 3, 3), hidden=16, epochs=1, batch_size=4
            ),
        ),
        defense=DefenseSection(
            families=(ChannelFamily.AWGN,), snr_db=10.0, utility_snrs_db=(5.0, 10.0)
        ),
        output_dir=str(tmp_path / "run"),
        workers=2,
        preview_snr_db=10.0,
    )
