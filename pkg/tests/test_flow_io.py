"""Codecs: format-definition reads, round trips, typed failure modes, and
the configuration loader."""

import json
import struct

import cv2
import numpy as np
import pytest

from fsflow import (
    BadMagic,
    ConfigError,
    FlowMap,
    TruncatedFile,
    WrongBitDepth,
    WrongChannelCount,
)
from fsflow.flow_io import (
    load_config,
    read_flo,
    read_flow,
    read_kitti_png,
    read_mask_png,
    write_flo,
    write_flow,
    write_kitti_png,
    write_mask_png,
)


def kitti_bytes(raw_u, raw_v, valid):
    """Encode raw uint16 channels with cv2 directly, independent of the
    package writer (R=u, G=v, B=valid as seen by a PNG reader)."""
    h, w = raw_u.shape
    img = np.zeros((h, w, 3), dtype=np.uint16)
    img[:, :, 0] = valid  # cv2 stores BGR
    img[:, :, 1] = raw_v
    img[:, :, 2] = raw_u
    ok, buf = cv2.imencode(".png", img)
    assert ok
    return buf.tobytes()


class TestKittiPng:
    def test_format_zero_point_and_steps(self, tmp_path):
        raw_u = np.array([[32768, 32832, 32704]], dtype=np.uint16)
        raw_v = np.array([[32768, 32768, 32768]], dtype=np.uint16)
        valid = np.ones((1, 3), dtype=np.uint16)
        path = tmp_path / "enc.png"
        path.write_bytes(kitti_bytes(raw_u, raw_v, valid))
        f = read_kitti_png(path)
        np.testing.assert_array_equal(f.fu, [[0.0, 1.0, -1.0]])
        np.testing.assert_array_equal(f.fv, [[0.0, 0.0, 0.0]])
        assert f.valid.all()

    def test_invalid_channel_respected(self, tmp_path):
        raw = np.full((2, 2), 40000, dtype=np.uint16)
        valid = np.array([[1, 0], [0, 1]], dtype=np.uint16)
        path = tmp_path / "v.png"
        path.write_bytes(kitti_bytes(raw, raw, valid))
        f = read_kitti_png(path)
        np.testing.assert_array_equal(f.valid, valid.astype(bool))
        assert np.all(f.fu[~f.valid] == 0.0)

    def test_exhaustive_grid_round_trip(self, tmp_path):
        # every representable 1/64-px value appears exactly once per channel
        raw = np.arange(65536, dtype=np.uint16).reshape(256, 256)
        fu = (raw.astype(np.float64) - 2**15) / 64.0
        fv = fu[::-1, ::-1]
        f = FlowMap(fu, fv, np.ones((256, 256), dtype=bool), "px")
        path = tmp_path / "grid.png"
        write_kitti_png(f, path)
        g = read_kitti_png(path)
        assert np.array_equal(g.fu, fu)
        assert np.array_equal(g.fv, fv)
        assert g.valid.all()

    def test_out_of_range_saturates_with_warning(self, tmp_path):
        fu = np.array([[600.0]])
        f = FlowMap(fu, np.zeros((1, 1)), np.ones((1, 1), dtype=bool), "px")
        path = tmp_path / "sat.png"
        with pytest.warns(UserWarning):
            write_kitti_png(f, path)
        g = read_kitti_png(path)
        assert g.fu[0, 0] == (65535 - 2**15) / 64.0

    def test_bad_signature(self, tmp_path):
        path = tmp_path / "bad.png"
        path.write_bytes(b"JFIF not a png at all")
        with pytest.raises(BadMagic):
            read_kitti_png(path)

    def test_truncated_payload(self, tmp_path):
        good = tmp_path / "good.png"
        write_kitti_png(
            FlowMap(np.zeros((16, 16)), np.zeros((16, 16)),
                    np.ones((16, 16), dtype=bool), "px"),
            good,
        )
        data = good.read_bytes()
        bad = tmp_path / "trunc.png"
        bad.write_bytes(data[: len(data) // 2])
        with pytest.raises(TruncatedFile):
            read_kitti_png(bad)

    def test_wrong_bit_depth(self, tmp_path):
        ok, buf = cv2.imencode(".png", np.zeros((4, 4, 3), dtype=np.uint8))
        path = tmp_path / "8bit.png"
        path.write_bytes(buf.tobytes())
        with pytest.raises(WrongBitDepth):
            read_kitti_png(path)

    def test_wrong_channel_count(self, tmp_path):
        ok, buf = cv2.imencode(".png", np.zeros((4, 4), dtype=np.uint16))
        path = tmp_path / "1ch.png"
        path.write_bytes(buf.tobytes())
        with pytest.raises(WrongChannelCount):
            read_kitti_png(path)


class TestFlo:
    def test_documented_layout(self, tmp_path):
        f = FlowMap(np.array([[1.5]]), np.array([[-2.0]]),
                    np.ones((1, 1), dtype=bool), "px")
        path = tmp_path / "one.flo"
        write_flo(f, path)
        data = path.read_bytes()
        assert len(data) == 20
        assert data == struct.pack("<fii", 202021.25, 1, 1) + struct.pack("<ff", 1.5, -2.0)

    def test_round_trip_random_map(self, tmp_path, rng):
        fu = rng.normal(0, 10, (23, 31))
        fv = rng.normal(0, 10, (23, 31))
        valid = rng.random((23, 31)) < 0.8
        f = FlowMap(np.where(valid, fu, 0.0), np.where(valid, fv, 0.0), valid, "px")
        path = tmp_path / "rt.flo"
        write_flo(f, path)
        g = read_flo(path)
        assert np.array_equal(g.valid, valid)
        np.testing.assert_array_equal(g.fu, f.fu.astype(np.float32).astype(np.float64))
        np.testing.assert_array_equal(g.fv, f.fv.astype(np.float32).astype(np.float64))

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "magic.flo"
        path.write_bytes(struct.pack("<fii", 123.0, 1, 1) + b"\0" * 8)
        with pytest.raises(BadMagic):
            read_flo(path)

    def test_truncations(self, tmp_path):
        path = tmp_path / "trunc.flo"
        full = struct.pack("<fii", 202021.25, 2, 2) + b"\0" * 32
        for cut in (2, 8, 20, 35):
            path.write_bytes(full[:cut])
            with pytest.raises(TruncatedFile):
                read_flo(path)

    def test_implausible_dims(self, tmp_path):
        path = tmp_path / "dims.flo"
        path.write_bytes(struct.pack("<fii", 202021.25, -3, 7))
        with pytest.raises(TruncatedFile):
            read_flo(path)


class TestMaskPng:
    def test_all_on(self, tmp_path):
        path = tmp_path / "m.png"
        ok, buf = cv2.imencode(".png", np.full((5, 6), 255, dtype=np.uint8))
        path.write_bytes(buf.tobytes())
        assert read_mask_png(path).all()

    def test_any_nonzero_is_true(self, tmp_path):
        path = tmp_path / "m1.png"
        ok, buf = cv2.imencode(".png", np.array([[0, 1], [128, 255]], dtype=np.uint8))
        path.write_bytes(buf.tobytes())
        np.testing.assert_array_equal(read_mask_png(path),
                                      [[False, True], [True, True]])

    def test_round_trip(self, tmp_path, rng):
        mask = rng.random((17, 13)) < 0.5
        path = tmp_path / "rt.png"
        write_mask_png(mask, path)
        assert np.array_equal(read_mask_png(path), mask)

    def test_wrong_depth(self, tmp_path):
        ok, buf = cv2.imencode(".png", np.zeros((3, 3), dtype=np.uint16))
        path = tmp_path / "deep.png"
        path.write_bytes(buf.tobytes())
        with pytest.raises(WrongBitDepth):
            read_mask_png(path)


class TestUnitsSidecar:
    def test_units_survive_round_trip(self, tmp_path):
        f = FlowMap(np.ones((4, 4)), np.ones((4, 4)), np.ones((4, 4), dtype=bool),
                    "px/s")
        for name in ("a.flo", "b.png"):
            path = tmp_path / name
            write_flow(f, path)
            assert (tmp_path / (name + ".meta.json")).is_file()
            assert read_flow(path).units == "px/s"

    def test_missing_sidecar_defaults_to_px(self, tmp_path):
        f = FlowMap(np.ones((4, 4)), np.ones((4, 4)), np.ones((4, 4), dtype=bool),
                    "px/s")
        path = tmp_path / "c.flo"
        write_flow(f, path)
        (tmp_path / "c.flo.meta.json").unlink()
        assert read_flow(path).units == "px"

    def test_unknown_extension(self, tmp_path):
        with pytest.raises(ConfigError):
            read_flow(tmp_path / "flow.exr")

    def test_format_dispatch(self):
        from fsflow.flow_io import FlowFileFormat, flow_format_for

        assert flow_format_for("a/b.flo") is FlowFileFormat.MIDDLEBURY_FLO
        assert flow_format_for("a/b.PNG") is FlowFileFormat.KITTI_PNG16


class TestConfigLoader:
    def full_config(self):
        return {
            "camera": {"fx": 700.0, "fy": 701.0, "u0": 620.0, "v0": 190.0},
            "mount": {"h": 1.6, "theta": 0.03},
            "motion": {"kind": "pose", "x_d": 0.1, "z_d": 1.2, "phi": 0.02},
            "scene": {"width": 320, "height": 240, "lateral_extent": 20.0,
                      "longitudinal_extent": 50.0, "sample_step": 0.2},
            "noise": {"sigma": 0.5, "seed": 99},
            "pso": {"swarm_size": 30, "max_iters": 50, "seed": 4,
                    "z_d_bounds": [0.0, 3.0]},
            "fit": {"bin_w": 0.5, "min_row_support": 5, "tau": 2.0,
                    "kind": "quadratic-velocity"},
        }

    def test_full_parse(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(self.full_config()))
        cfg = load_config(path)
        assert cfg.camera.fy == 701.0
        assert cfg.mount.theta == 0.03
        assert cfg.motion_kind == "pose"
        assert cfg.pose.z_d == 1.2
        assert cfg.scene.sample_step == 0.2
        assert cfg.scene.intrinsics == cfg.camera
        assert cfg.noise.seed == 99
        assert cfg.pso.swarm_size == 30
        assert cfg.pso.z_d_bounds == (0.0, 3.0)
        assert cfg.fit.kind == "quadratic-velocity"

    def test_velocity_motion(self, tmp_path):
        raw = self.full_config()
        raw["motion"] = {"kind": "velocity", "v_r": 9.0, "delta_f": 0.05, "l": 2.6}
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(raw))
        cfg = load_config(path)
        assert cfg.velocity.v_r == 9.0
        assert cfg.pose is None

    def test_defaults_when_sections_missing(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"camera": {"fx": 700, "fy": 700, "u0": 0, "v0": 0},
                                    "mount": {"h": 1.5}}))
        cfg = load_config(path)
        assert cfg.noise.sigma == 0.0
        assert cfg.pso.swarm_size == 50
        assert cfg.fit.bin_w == 0.25
        with pytest.raises(ConfigError):
            cfg.require_pose()
        with pytest.raises(ConfigError):
            cfg.require_scene()

    def test_missing_camera_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"mount": {"h": 1.5}}))
        with pytest.raises(ConfigError):
            load_config(path)

    def test_invalid_json_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_bad_motion_kind(self, tmp_path):
        raw = self.full_config()
        raw["motion"]["kind"] = "warp"
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(raw))
        with pytest.raises(ConfigError):
            load_config(path)

    def test_bad_field_value(self, tmp_path):
        raw = self.full_config()
        raw["mount"]["h"] = -2.0
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(raw))
        with pytest.raises(ConfigError):
            load_config(path)

    def test_unknown_field_rejected(self, tmp_path):
        raw = self.full_config()
        raw["camera"]["skew"] = 0.1
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(raw))
        with pytest.raises(ConfigError):
            load_config(path)
