import hashlib
import struct
from collections import OrderedDict

import numpy as np
import pytest

from marsdust.errors import WeightsFormatError
from marsdust.rng import splitmix64_at
from marsdust.tinynet import ModelWeights, load_weights, save_weights


def sample_weights() -> ModelWeights:
    tensors = OrderedDict()
    tensors["a.w"] = np.arange(24, dtype=np.float32).reshape(2, 3, 2, 2)
    tensors["a.b"] = np.array([0.5, -1.25], dtype=np.float32)
    tensors["z"] = np.float32(7.0).reshape(())  # rank-0 tensor
    return ModelWeights(tensors)


def deterministic_weights() -> ModelWeights:
    """Platform-independent pseudo-random tensors (splitmix64-driven)."""
    tensors = OrderedDict()
    for k, (name, shape) in enumerate([("conv.w", (3, 2, 3, 3)), ("conv.b", (3,))]):
        n = int(np.prod(shape))
        vals = [splitmix64_at(k + 1, i) / 2.0**64 for i in range(n)]
        tensors[name] = np.array(vals, dtype=np.float32).reshape(shape)
    return ModelWeights(tensors)


class TestRoundTrip:
    def test_bit_identical(self, tmp_path):
        w = sample_weights()
        path = tmp_path / "w.mdw"
        save_weights(w, path)
        back = load_weights(path)
        assert back.version == 1
        assert back.names() == w.names()
        for name in w.names():
            assert back[name].dtype == np.float32
            assert np.array_equal(back[name], w[name])

    def test_save_load_save_same_bytes(self, tmp_path):
        w = sample_weights()
        p1, p2 = tmp_path / "1.mdw", tmp_path / "2.mdw"
        save_weights(w, p1)
        save_weights(load_weights(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_golden_checksum(self, tmp_path):
        # frozen once from the deterministic generator; guards the byte layout
        path = tmp_path / "golden.mdw"
        save_weights(deterministic_weights(), path)
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        assert digest == "3cd86d3f285c88f663f30d9c20b01e103071eaf83bac88e90bb3a46715196764"


class TestFormatErrors:
    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.mdw"
        p.write_bytes(b"XXXX" + b"\x00" * 16)
        with pytest.raises(WeightsFormatError, match="magic"):
            load_weights(p)

    def test_version_mismatch(self, tmp_path):
        p = tmp_path / "v9.mdw"
        p.write_bytes(b"MDW1" + struct.pack("<II", 9, 0))
        with pytest.raises(WeightsFormatError, match="version 9"):
            load_weights(p)

    def test_truncated_payload(self, tmp_path):
        w = sample_weights()
        p = tmp_path / "t.mdw"
        save_weights(w, p)
        p.write_bytes(p.read_bytes()[:-10])
        with pytest.raises(WeightsFormatError, match="truncated"):
            load_weights(p)

    def test_truncated_header(self, tmp_path):
        p = tmp_path / "h.mdw"
        p.write_bytes(b"MDW1\x01\x00")
        with pytest.raises(WeightsFormatError, match="truncated"):
            load_weights(p)

    def test_shape_table_payload_mismatch(self, tmp_path):
        # claim a 2x2 tensor but provide a single float
        p = tmp_path / "m.mdw"
        body = b"MDW1" + struct.pack("<II", 1, 1)
        name = b"w"
        body += struct.pack("<I", len(name)) + name
        body += struct.pack("<I", 2) + struct.pack("<II", 2, 2)
        body += struct.pack("<f", 1.0)
        p.write_bytes(body)
        with pytest.raises(WeightsFormatError, match="truncated"):
            load_weights(p)

    def test_trailing_garbage(self, tmp_path):
        w = sample_weights()
        p = tmp_path / "g.mdw"
        save_weights(w, p)
        p.write_bytes(p.read_bytes() + b"junk")
        with pytest.raises(WeightsFormatError, match="trailing"):
            load_weights(p)

    def test_duplicate_names(self, tmp_path):
        p = tmp_path / "d.mdw"
        body = b"MDW1" + struct.pack("<II", 1, 2)
        for _ in range(2):
            body += struct.pack("<I", 1) + b"w"
            body += struct.pack("<I", 1) + struct.pack("<I", 1)
            body += struct.pack("<f", 1.0)
        p.write_bytes(body)
        with pytest.raises(WeightsFormatError, match="duplicate"):
            load_weights(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(WeightsFormatError, match="cannot read"):
            load_weights(tmp_path / "absent.mdw")
