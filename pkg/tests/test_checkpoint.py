import numpy as np
import pytest

from bokehgan.checkpoint import (
    FORMAT_VERSION,
    Checkpoint,
    from_bytes,
    load_checkpoint,
    module_arrays,
    save_checkpoint,
    to_bytes,
)
from bokehgan.exceptions import CheckpointError
from bokehgan.generator import build_generator
from bokehgan.trainer import generator_from_checkpoint, make_checkpoint, TrainSchedule
from conftest import TINY


def sample():
    rng = np.random.default_rng(0)
    return Checkpoint(
        {"a.weight": rng.standard_normal((3, 4)).astype(np.float32),
         "a.scalar": np.float32(2.5).reshape(()),
         "b.count": np.array([7], dtype=np.int64)},
        {"stage": 1, "step": 3, "note": "x"},
    )


def test_roundtrip_bit_exact(tmp_path):
    ck = sample()
    save_checkpoint(tmp_path / "a.ckpt", ck)
    back = load_checkpoint(tmp_path / "a.ckpt")
    assert back.meta == ck.meta
    for k, v in ck.arrays.items():
        assert back.arrays[k].tobytes() == np.asarray(v).tobytes()
        assert back.arrays[k].shape == np.shape(v)
    save_checkpoint(tmp_path / "b.ckpt", back)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_manifest_is_plain_text():
    head = to_bytes(sample()).split(b"\nend\n")[0].decode("utf-8").splitlines()
    assert head[0] == FORMAT_VERSION == "bggan-ckpt-1"
    assert head[2] == "arrays 3"
    name, dtype, shape, offset, nbytes, digest = head[3].split("\t")
    assert (name, dtype, shape, offset, nbytes) == ("a.weight", "f4", "3,4", "0", "48")
    assert len(digest) == 64


def test_generator_roundtrip_through_training_checkpoint(tmp_path):
    gen = build_generator(TINY, 5)
    ck = make_checkpoint(1, 0, 1, gen, [], TrainSchedule())
    save_checkpoint(tmp_path / "g.ckpt", ck)
    again = generator_from_checkpoint(load_checkpoint(tmp_path / "g.ckpt"))
    for k, v in module_arrays("generator", gen).items():
        assert module_arrays("generator", again)[k].tobytes() == v.tobytes()


@pytest.mark.parametrize("cut", [5, 20, 60, -1, -50])
def test_truncated_file(cut):
    data = to_bytes(sample())
    with pytest.raises(CheckpointError) as info:
        from_bytes(data[:cut])
    assert info.value.section in {"header", "meta", "manifest", "a.weight", "a.scalar", "b.count"}
    assert info.value.section in str(info.value)


def test_version_mismatch_names_both():
    data = to_bytes(sample()).replace(b"bggan-ckpt-1", b"bggan-ckpt-9", 1)
    with pytest.raises(CheckpointError, match="bggan-ckpt-9.*bggan-ckpt-1") as info:
        from_bytes(data)
    assert info.value.section == "header"


def test_corrupt_payload_names_array():
    data = bytearray(to_bytes(sample()))
    data[-3] ^= 0xFF  # inside the last array, b.count
    with pytest.raises(CheckpointError, match="checksum") as info:
        from_bytes(bytes(data))
    assert info.value.section == "b.count"


def test_bad_meta_and_missing_file(tmp_path):
    data = to_bytes(sample()).replace(b'meta {', b'meta {{', 1)
    with pytest.raises(CheckpointError) as info:
        from_bytes(data)
    assert info.value.section == "meta"
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.ckpt")
