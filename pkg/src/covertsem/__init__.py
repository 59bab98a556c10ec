from covertsem._attacks import (
    AttackConfig,
    DefendedEncoderApi,
    EncoderApi,
    InverseMode,
    InverseNetwork,
    InverseTrainConfig,
    Optimizer,
    QueryDataset,
    closedbox_invert,
    collect_query_dataset,
    forward_fn,
    genai_closedbox_invert,
    genai_glassbox_invert,
    glassbox_invert,
    train_genai_inverse_network,
    train_inverse_network,
)
from covertsem._channels import (
    ChannelFamily,
    ChannelOutput,
    ChannelSpec,
    CsiPolicy,
    UniformSnrSampler,
    equalize,
    pair_complex,
    power_normalize,
    receive,
    transmit,
    unpair_complex,
)
from covertsem._codec import (
    CodecLossConfig,
    CodecTrainConfig,
    SemanticCodec,
    composite_loss,
    reconstruct,
    train_codec,
)
from covertsem._config import disable_resume, enable_resume, get_config, set_config
from covertsem._core import checkpointed
from covertsem._data import (
    LabeledImages,
    SplitSpec,
    load_dataset,
    make_synthetic_dataset,
    write_image_folder,
)
from covertsem._errors import (
    AttackDiverged,
    ConfigError,
    CovertSemError,
    CsiUnavailable,
    DegenerateSignal,
    EmptyDataset,
    GateNotMet,
    InvalidShape,
    MissingLabels,
    NumericalError,
    QueryFailed,
    SingularChannel,
    TrainingDiverged,
)
from covertsem._experiment import (
    ExperimentConfig,
    ExperimentRecord,
    Strategy,
    dump_experiment_config,
    load_experiment_config,
    load_record,
    load_reports,
    run_experiment,
)
from covertsem._files import load_checkpoint, save_checkpoint
from covertsem._generator import (
    Generator,
    GeneratorTrainConfig,
    latent_log_prior,
    sample_latent,
    train_generator,
)
from covertsem._metrics import (
    DecisionRule,
    IdentityModel,
    IdentityTrainConfig,
    MetricReport,
    evaluate_reconstructions,
    fpesr,
    ms_ssim,
    perceptual_distance,
    psnr,
    train_identity_model,
)
from covertsem._report import emit_report
from covertsem._steganography import (
    InvertibleBlock,
    LostEstimate,
    SignalSteganography,
    StegLossConfig,
    StegTrainConfig,
    covert_link,
    inn_block_backward,
    inn_block_forward,
    steg_embed,
    steg_extract,
    steg_losses,
    train_steganography,
)

__all__ = [
    "AttackConfig",
    "AttackDiverged",
    "ChannelFamily",
    "ChannelOutput",
    "ChannelSpec",
    "CodecLossConfig",
    "CodecTrainConfig",
    "ConfigError",
    "CovertSemError",
    "CsiPolicy",
    "CsiUnavailable",
    "DecisionRule",
    "DefendedEncoderApi",
    "DegenerateSignal",
    "EmptyDataset",
    "EncoderApi",
    "ExperimentConfig",
    "ExperimentRecord",
    "GateNotMet",
    "Generator",
    "GeneratorTrainConfig",
    "IdentityModel",
    "IdentityTrainConfig",
    "InvalidShape",
    "InverseMode",
    "InverseNetwork",
    "InverseTrainConfig",
    "InvertibleBlock",
    "LabeledImages",
    "LostEstimate",
    "MetricReport",
    "MissingLabels",
    "NumericalError",
    "Optimizer",
    "QueryDataset",
    "QueryFailed",
    "SemanticCodec",
    "SignalSteganography",
    "SingularChannel",
    "SplitSpec",
    "StegLossConfig",
    "StegTrainConfig",
    "Strategy",
    "TrainingDiverged",
    "UniformSnrSampler",
    "checkpointed",
    "closedbox_invert",
    "collect_query_dataset",
    "composite_loss",
    "covert_link",
    "disable_resume",
    "dump_experiment_config",
    "emit_report",
    "enable_resume",
    "equalize",
    "evaluate_reconstructions",
    "forward_fn",
    "fpesr",
    "genai_closedbox_invert",
    "genai_glassbox_invert",
    "get_config",
    "glassbox_invert",
    "inn_block_backward",
    "inn_block_forward",
    "latent_log_prior",
    "load_checkpoint",
    "load_dataset",
    "load_experiment_config",
    "load_record",
    "load_reports",
    "make_synthetic_dataset",
    "ms_ssim",
    "pair_complex",
    "perceptual_distance",
    "power_normalize",
    "psnr",
    "receive",
    "reconstruct",
    "run_experiment",
    "sample_latent",
    "save_checkpoint",
    "set_config",
    "steg_embed",
    "steg_extract",
    "steg_losses",
    "train_codec",
    "train_genai_inverse_network",
    "train_generator",
    "train_identity_model",
    "train_inverse_network",
    "train_steganography",
    "transmit",
    "unpair_complex",
    "write_image_folder",
]
