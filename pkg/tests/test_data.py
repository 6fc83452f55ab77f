import struct

import numpy as np
import pytest

from mead import config as cfg_mod
from mead import data
from mead.attacks import AttackFamily, Norm
from mead.config import (ConfigError, ExperimentConfig, config_from_mapping,
                         config_to_mapping, parse_config, write_config,
                         write_report_csv)
from mead.data import (FormatError, GaussianSpec, gen_gaussian_dataset,
                       load_idx, write_idx)
from mead.objectives import ObjectiveKind


class TestGaussian:
    def test_sizes_and_split(self):
        train, test = gen_gaussian_dataset(GaussianSpec(seed=0))
        assert len(train) == 420
        assert len(test) == 180
        assert set(np.unique(train.labels)) == {0, 1}

    def test_seed_determinism(self):
        a_train, a_test = gen_gaussian_dataset(GaussianSpec(seed=5))
        b_train, b_test = gen_gaussian_dataset(GaussianSpec(seed=5))
        assert np.array_equal(a_train.inputs, b_train.inputs)
        assert np.array_equal(a_test.labels, b_test.labels)

    def test_different_seeds_differ(self):
        a, _ = gen_gaussian_dataset(GaussianSpec(seed=1))
        b, _ = gen_gaussian_dataset(GaussianSpec(seed=2))
        assert not np.array_equal(a.inputs, b.inputs)

    def test_cluster_means_near_spec(self):
        train, test = gen_gaussian_dataset(GaussianSpec(seed=0))
        X = np.vstack([train.inputs, test.inputs])
        y = np.concatenate([train.labels, test.labels])
        assert np.allclose(X[y == 0].mean(axis=0), [1, 1], atol=0.2)
        assert np.allclose(X[y == 1].mean(axis=0), [-1, -1], atol=0.2)

    def test_invalid_spec_rejected(self):
        with pytest.raises(ValueError):
            GaussianSpec(n_per_class=0)
        with pytest.raises(ValueError):
            GaussianSpec(train_fraction=1.0)


def build_idx_bytes(images, labels):
    """Byte-level fixture builder independent of write_idx."""
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    img = struct.pack(">IIII", 0x803, n, rows, cols) + images.tobytes()
    lbl = struct.pack(">II", 0x801, n) + bytes(int(v) for v in labels)
    return img, lbl


class TestIdx:
    @pytest.fixture
    def idx_files(self, tmp_path):
        rng = np.random.default_rng(0)
        images = rng.integers(0, 256, size=(7, 3, 2), dtype=np.uint8)
        labels = rng.integers(0, 10, size=7)
        img, lbl = build_idx_bytes(images, labels)
        ip, lp = tmp_path / "img.idx", tmp_path / "lbl.idx"
        ip.write_bytes(img)
        lp.write_bytes(lbl)
        return ip, lp, images, labels

    def test_parses_hand_built_bytes(self, idx_files):
        ip, lp, images, labels = idx_files
        ds = load_idx(ip, lp)
        assert ds.inputs.shape == (7, 6)
        assert np.allclose(ds.inputs, images.reshape(7, 6) / 255.0)
        assert np.array_equal(ds.labels, labels)

    def test_pixel_scaling_to_unit_interval(self, idx_files):
        ip, lp, *_ = idx_files
        ds = load_idx(ip, lp)
        assert ds.inputs.min() >= 0.0 and ds.inputs.max() <= 1.0

    def test_limit_truncates(self, idx_files):
        ip, lp, *_ = idx_files
        assert len(load_idx(ip, lp, limit=3)) == 3

    def test_limit_zero_gives_empty_dataset(self, idx_files):
        ip, lp, *_ = idx_files
        ds = load_idx(ip, lp, limit=0)
        assert len(ds) == 0
        assert ds.inputs.shape == (0, 6)

    def test_bad_image_magic_names_offset(self, idx_files, tmp_path):
        ip, lp, *_ = idx_files
        bad = tmp_path / "bad.idx"
        bad.write_bytes(b"\x00\x00\x09\x03" + ip.read_bytes()[4:])
        with pytest.raises(FormatError, match="byte 0"):
            load_idx(bad, lp)

    def test_truncated_payload_rejected(self, idx_files, tmp_path):
        ip, lp, *_ = idx_files
        cut = tmp_path / "cut.idx"
        cut.write_bytes(ip.read_bytes()[:-5])
        with pytest.raises(FormatError, match="length"):
            load_idx(cut, lp)

    def test_count_mismatch_rejected(self, idx_files, tmp_path):
        ip, lp, _, labels = idx_files
        short = tmp_path / "short.idx"
        short.write_bytes(struct.pack(">II", 0x801, 3)
                          + bytes(int(v) for v in labels[:3]))
        with pytest.raises(FormatError, match="images vs"):
            load_idx(ip, short)

    def test_write_idx_round_trips(self, tmp_path):
        rng = np.random.default_rng(1)
        images = rng.integers(0, 256, size=(4, 2, 2), dtype=np.uint8)
        labels = np.array([0, 1, 2, 3])
        ip, lp = tmp_path / "w.idx", tmp_path / "wl.idx"
        write_idx(images, labels, ip, lp)
        ds = load_idx(ip, lp)
        assert np.allclose(ds.inputs, images.reshape(4, 4) / 255.0)
        assert np.array_equal(ds.labels, labels)


class TestConfig:
    def test_defaults_round_trip(self, tmp_path):
        cfg = ExperimentConfig()
        path = tmp_path / "c.yaml"
        write_config(cfg, path)
        back = parse_config(path)
        assert back.seed == cfg.seed
        assert back.arch == cfg.arch
        assert back.dataset.kind == "gaussian"
        assert back.detectors == cfg.detectors

    def test_unknown_top_level_key_fails_closed(self):
        with pytest.raises(ConfigError, match="epsilonn"):
            config_from_mapping({"epsilonn": 0.1})

    def test_unknown_nested_key_fails_closed(self):
        with pytest.raises(ConfigError, match="sigm"):
            config_from_mapping({"dataset": {"kind": "gaussian", "sigm": 2}})

    def test_unknown_attack_key_fails_closed(self):
        with pytest.raises(ConfigError, match="stepss"):
            config_from_mapping(
                {"attacks": [{"family": "fgsm", "stepss": 3}]})

    def test_missing_required_idx_paths(self):
        with pytest.raises(ConfigError, match="images"):
            config_from_mapping({"dataset": {"kind": "idx"}})

    def test_unknown_dataset_kind(self):
        with pytest.raises(ConfigError, match="celeba"):
            config_from_mapping({"dataset": {"kind": "celeba"}})

    def test_attack_specs_parse_into_typed_values(self):
        cfg = config_from_mapping({"attacks": [
            {"family": "pgd", "objective": "kl", "norm": "l2",
             "epsilon": 0.5, "steps": 7}]})
        (spec,) = cfg.resolved_attacks()
        assert spec.family == AttackFamily.PGD
        assert spec.objective == ObjectiveKind.KL
        assert spec.norm == Norm.L2
        assert spec.epsilon == 0.5
        assert spec.steps == 7

    def test_preset_reference_resolves(self):
        cfg = config_from_mapping({"attack_preset": "paper-l1",
                                   "eps_limit": 1})
        specs = cfg.resolved_attacks()
        assert len(specs) == 4
        assert all(s.norm == Norm.L1 and s.epsilon == 5.0 for s in specs)

    def test_attacks_round_trip_through_yaml(self, tmp_path):
        cfg = config_from_mapping({"attacks": [
            {"family": "square", "objective": "gini", "epsilon": 0.3,
             "steps": 11, "seed": 4}]})
        path = tmp_path / "a.yaml"
        write_config(cfg, path)
        back = parse_config(path)
        assert back.attacks == cfg.attacks


class TestReportCsv:
    def test_column_order_and_line_endings(self, tmp_path):
        rows = [{"norm": "l2", "epsilon": "0.5", "setting": "mead",
                 "detector": "fs", "auroc": 0.875, "fpr_at_95_tpr": 0.25,
                 "n_naturals": 10, "n_adversarials": 6}]
        path = tmp_path / "r.csv"
        write_report_csv(rows, path)
        raw = path.read_bytes()
        assert b"\r" not in raw
        lines = raw.decode("utf-8").splitlines()
        assert lines[0] == ("norm,epsilon,setting,detector,auroc,"
                            "fpr_at_95_tpr,n_naturals,n_adversarials")
        assert lines[1] == "l2,0.5,mead,fs,0.875,0.25,10,6"
