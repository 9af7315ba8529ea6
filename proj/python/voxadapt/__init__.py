"""Speaker adaptation with conditional layer normalization (C++ core)."""

from ._core import (
    VoxadaptError,
    conditional_layer_norm,
    conv1d,
    count_params,
    generate_utterance,
    layer_norm,
    load_checkpoint,
    load_mel,
    load_speaker_blob,
    load_utterance,
    parse_config,
    preset,
    speaker_blob_size,
)

__all__ = [
    "VoxadaptError",
    "conditional_layer_norm",
    "conv1d",
    "count_params",
    "generate_utterance",
    "layer_norm",
    "load_checkpoint",
    "load_mel",
    "load_speaker_blob",
    "load_utterance",
    "parse_config",
    "preset",
    "speaker_blob_size",
]
