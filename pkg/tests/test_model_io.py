import json

import numpy as np
import pytest

from prunembed.archive import read_tensors, write_tensors
from prunembed.errors import ArtifactError, ConfigError, CorruptWeightsError, ShapeError
from prunembed.model_io import (
    EncoderConfig,
    init_random_encoder,
    load_model,
    load_vocab,
    model_tensors,
    save_model,
)

from conftest import VOCAB_TOKENS, make_config


class TestEncoderConfig:
    def test_head_dimension_constraint(self):
        with pytest.raises(ConfigError, match="config error"):
            EncoderConfig(2, 3, 8, 4, 16, 30, 32)  # 4 * 3 != 8

    def test_rejects_nonpositive_dimensions(self):
        with pytest.raises(ConfigError, match="config error"):
            EncoderConfig(0, 2, 8, 4, 16, 30, 32)
        with pytest.raises(ConfigError, match="max_position"):
            EncoderConfig(2, 2, 8, 4, 16, 30, 1)

    def test_dict_round_trip(self):
        config = make_config()
        assert EncoderConfig.from_dict(config.to_dict()) == config

    def test_missing_key(self):
        data = make_config().to_dict()
        del data["d_ff"]
        with pytest.raises(ConfigError, match="missing"):
            EncoderConfig.from_dict(data)


class TestInitRandomEncoder:
    def test_deterministic_for_seed(self):
        config = make_config()
        a = init_random_encoder(config, seed=123)
        b = init_random_encoder(config, seed=123)
        for name, tensor in model_tensors(a).items():
            assert np.array_equal(tensor, model_tensors(b)[name]), name

    def test_different_seeds_differ(self):
        config = make_config()
        a = init_random_encoder(config, seed=1)
        b = init_random_encoder(config, seed=2)
        assert not np.array_equal(a.token_embeddings, b.token_embeddings)

    def test_initialization_contract(self):
        model = init_random_encoder(make_config(num_layers=2, num_heads=2, d_model=8), seed=7)
        bound = 1.0 / np.sqrt(8)
        for name, tensor in model_tensors(model).items():
            assert np.isfinite(tensor).all(), name
            assert tensor.dtype == np.float32
            if name.endswith("norm.scale"):
                assert np.array_equal(tensor, np.ones_like(tensor)), name
            elif name.endswith(("norm.bias", ".bq", ".bk", ".bv", ".bo", ".b1", ".b2")):
                assert np.array_equal(tensor, np.zeros_like(tensor)), name
            else:
                assert np.abs(tensor).max() <= bound, name

    def test_invalid_config_rejected(self):
        with pytest.raises(ConfigError, match="config error"):
            init_random_encoder("not a config", seed=0)


class TestSaveLoad:
    def test_round_trip_bitwise(self, tmp_path, tiny_model):
        save_model(tiny_model, tmp_path / "m", VOCAB_TOKENS)
        loaded = load_model(tmp_path / "m")
        assert loaded.config == tiny_model.config
        for name, tensor in model_tensors(tiny_model).items():
            assert np.array_equal(model_tensors(loaded)[name], tensor), name
        assert len(load_vocab(tmp_path / "m")) == len(VOCAB_TOKENS)

    def test_minilm_style_architecture(self, tmp_path):
        # Same layer/width/head layout as the public 12-layer MiniLM encoder.
        config = EncoderConfig(
            num_layers=12, num_heads=12, d_model=384, d_k=32, d_ff=1536,
            vocab_size=1000, max_position=512,
        )
        vocab = VOCAB_TOKENS + [f"extra{i}" for i in range(1000 - len(VOCAB_TOKENS))]
        save_model(init_random_encoder(config, seed=0), tmp_path / "m", vocab)
        loaded = load_model(tmp_path / "m")
        assert loaded.config.num_layers == 12
        assert loaded.config.d_model == 384
        assert loaded.config.num_heads == 12
        assert len(loaded.layers) == 12

    def test_missing_directory(self, tmp_path):
        with pytest.raises(ArtifactError, match="artifact missing"):
            load_model(tmp_path / "absent")

    def test_missing_config_file(self, tmp_path, tiny_model):
        save_model(tiny_model, tmp_path / "m", VOCAB_TOKENS)
        (tmp_path / "m" / "config.json").unlink()
        with pytest.raises(ArtifactError, match="artifact missing"):
            load_model(tmp_path / "m")

    def test_missing_vocab_file(self, tmp_path, tiny_model):
        save_model(tiny_model, tmp_path / "m", VOCAB_TOKENS)
        (tmp_path / "m" / "vocab.txt").unlink()
        with pytest.raises(ArtifactError, match="artifact missing"):
            load_model(tmp_path / "m")

    def test_wrong_shape_names_tensor(self, tmp_path, tiny_model):
        save_model(tiny_model, tmp_path / "m", VOCAB_TOKENS)
        archive = tmp_path / "m" / "model.safetensors"
        tensors = {k: v.copy() for k, v in read_tensors(archive).items()}
        tensors["layers.0.attn.wq"] = tensors["layers.0.attn.wq"][:, :-1]
        write_tensors(archive, tensors)
        with pytest.raises(ShapeError, match="layers.0.attn.wq"):
            load_model(tmp_path / "m")

    def test_missing_tensor(self, tmp_path, tiny_model):
        save_model(tiny_model, tmp_path / "m", VOCAB_TOKENS)
        archive = tmp_path / "m" / "model.safetensors"
        tensors = {k: v.copy() for k, v in read_tensors(archive).items()}
        del tensors["embeddings.segment"]
        write_tensors(archive, tensors)
        with pytest.raises(ArtifactError, match="embeddings.segment"):
            load_model(tmp_path / "m")

    def test_unexpected_tensor(self, tmp_path, tiny_model):
        save_model(tiny_model, tmp_path / "m", VOCAB_TOKENS)
        archive = tmp_path / "m" / "model.safetensors"
        tensors = {k: v.copy() for k, v in read_tensors(archive).items()}
        tensors["mystery"] = np.zeros(3, dtype=np.float32)
        write_tensors(archive, tensors)
        with pytest.raises(ShapeError, match="mystery"):
            load_model(tmp_path / "m")

    def test_non_finite_weights(self, tmp_path, tiny_model):
        save_model(tiny_model, tmp_path / "m", VOCAB_TOKENS)
        archive = tmp_path / "m" / "model.safetensors"
        tensors = {k: v.copy() for k, v in read_tensors(archive).items()}
        tensors["layers.1.ffn.w2"][0, 0] = np.nan
        write_tensors(archive, tensors)
        with pytest.raises(CorruptWeightsError, match="corrupt weights"):
            load_model(tmp_path / "m")

    def test_vocab_size_mismatch(self, tmp_path, tiny_model):
        save_model(tiny_model, tmp_path / "m", VOCAB_TOKENS)
        (tmp_path / "m" / "vocab.txt").write_text("\n".join(VOCAB_TOKENS[:-1]) + "\n", "utf-8")
        with pytest.raises(ConfigError, match="vocab"):
            load_model(tmp_path / "m")

    def test_bad_config_json(self, tmp_path, tiny_model):
        save_model(tiny_model, tmp_path / "m", VOCAB_TOKENS)
        (tmp_path / "m" / "config.json").write_text("{broken", "utf-8")
        with pytest.raises(ConfigError, match="config error"):
            load_model(tmp_path / "m")
