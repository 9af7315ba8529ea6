import numpy as np
import pytest

import voxadapt


def test_layer_norm_examples():
    np.testing.assert_allclose(voxadapt.layer_norm([1.0, 3.0], [1.0, 1.0], [0.0, 0.0], 0.0), [[-1.0, 1.0]])
    np.testing.assert_allclose(voxadapt.layer_norm([1.0, 3.0], [2.0, 2.0], [1.0, 1.0], 0.0), [[-1.0, 3.0]])


def test_conditional_layer_norm_example():
    out = voxadapt.conditional_layer_norm(
        [1.0, 3.0], [1.0, 1.0], np.eye(2), 0.5 * np.eye(2), 0.0
    )
    np.testing.assert_allclose(out, [[-0.5, 1.5]])


def test_conv1d_examples():
    x = np.array([[1.0], [2.0], [3.0]])
    np.testing.assert_allclose(voxadapt.conv1d(x, np.ones((1, 1, 3))), [[3.0], [6.0], [5.0]])
    x = np.array([[1.0], [2.0], [3.0], [4.0]])
    np.testing.assert_allclose(voxadapt.conv1d(x, np.ones((1, 1, 1)), stride=3), [[1.0], [4.0]])


def test_counts_and_blob_size():
    assert voxadapt.count_params("paper", "finetuned") == 1_179_904
    assert voxadapt.count_params("paper", "deployed") == 4_864
    assert voxadapt.speaker_blob_size(256, 9) == 19_468


def test_presets_and_config_errors():
    paper = voxadapt.preset("paper")
    assert paper["model.hidden"] == "256"
    assert paper["train.phase1_steps"] == "60000"
    assert voxadapt.parse_config("model.hidden = 128\n")["model.hidden"] == "128"
    with pytest.raises(voxadapt.VoxadaptError):
        voxadapt.parse_config("model.unknown = 1\n")
    with pytest.raises(voxadapt.VoxadaptError):
        voxadapt.preset("nope")


def test_generated_utterance_contract():
    u = voxadapt.generate_utterance("toy", 1, 2, 3)
    assert np.array_equal(u["mel"], voxadapt.generate_utterance("toy", 1, 2, 3)["mel"])
    assert u["mel"].shape == (sum(u["durations"]), 40)
    start = 0
    for d, e in zip(u["durations"], u["energy"]):
        assert abs(np.abs(u["mel"][start : start + d]).mean() - e) < 1e-6
        start += d


def test_missing_file_raises():
    with pytest.raises(voxadapt.VoxadaptError):
        voxadapt.load_checkpoint("/nonexistent/file.adck")
