import struct

import numpy as np
import pytest

from leap.checkpoint import HEADER_SIZE, config_hash, load_checkpoint, save_checkpoint
from leap.errors import ConfigError


def test_round_trip(tmp_path):
    theta = np.random.default_rng(0).standard_normal(17)
    h = config_hash({"a": 1, "b": [1, 2]})
    save_checkpoint(tmp_path / "c.bin", theta, 42, h)
    ck = load_checkpoint(tmp_path / "c.bin")
    assert ck.theta.tobytes() == theta.tobytes()
    assert ck.meta_step == 42 and ck.config_hash == h and ck.dim == 17


def test_byte_layout(tmp_path):
    save_checkpoint(tmp_path / "c.bin", [1.0, -2.0], 3)
    raw = (tmp_path / "c.bin").read_bytes()
    assert HEADER_SIZE == 64 and len(raw) == 64 + 16
    assert raw[:8] == b"LEAPCKPT"
    assert struct.unpack_from("<IIQQ", raw, 8) == (1, 0, 2, 3)
    assert struct.unpack_from("<2d", raw, 64) == (1.0, -2.0)


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


@pytest.mark.parametrize("mutate", [
    lambda b: b"XXXXXXXX" + b[8:],
    lambda b: b[:8] + struct.pack("<I", 9) + b[12:],
    lambda b: b[:-8],
    lambda b: b[:30],
])
def test_corrupt_files_are_rejected(tmp_path, mutate):
    save_checkpoint(tmp_path / "c.bin", np.ones(3), 0)
    (tmp_path / "c.bin").write_bytes(mutate((tmp_path / "c.bin").read_bytes()))
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "c.bin")
