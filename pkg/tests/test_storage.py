import numpy as np
import pytest

from pwtp.projector import PwtpConfig, init_pwtp_params
from pwtp.recognizer import init_head_params
from pwtp.rng import Rng
from pwtp.storage import (
    FormatError,
    decode_ppm,
    encode_ppm,
    export_da,
    load_checkpoint,
    read_frames,
    read_tensor,
    require_groups,
    save_checkpoint,
    tensor_from_bytes,
    tensor_to_bytes,
    write_frames,
    write_tensor,
)


# ------------------------------------------------------------------- tensors


def test_tensor_roundtrip_is_f32_exact(tmp_path):
    arr = Rng(0).uniform_array((3, 4, 5), -2.0, 2.0)
    p = tmp_path / "t.pwtt"
    write_tensor(p, arr)
    back = read_tensor(p)
    assert back.shape == arr.shape
    assert np.array_equal(back, arr.astype("<f4").astype(np.float64))


def test_tensor_roundtrip_f32_inputs_identical(tmp_path):
    arr = Rng(1).uniform_array((7,)).astype("<f4").astype(np.float64)
    p = tmp_path / "t.pwtt"
    write_tensor(p, arr)
    assert np.array_equal(read_tensor(p), arr)


def test_tensor_header_layout():
    buf = tensor_to_bytes(np.zeros((2, 3)))
    assert buf[:4] == b"PWTT"
    assert buf[4] == 1  # version
    assert buf[5] == 2  # rank
    assert buf[6:14] == (2).to_bytes(4, "little") + (3).to_bytes(4, "little")
    assert len(buf) == 14 + 4 * 6


def test_scalar_tensor_roundtrip():
    buf = tensor_to_bytes(np.float64(1.5))
    arr, end = tensor_from_bytes(buf)
    assert end == len(buf)
    assert arr.shape == () and arr == 1.5


def test_tensor_bad_magic():
    with pytest.raises(FormatError, match="bad magic"):
        tensor_from_bytes(b"NOPE" + b"\x00" * 16)


def test_tensor_unknown_version():
    buf = bytearray(tensor_to_bytes(np.zeros(2)))
    buf[4] = 9
    with pytest.raises(FormatError, match="version"):
        tensor_from_bytes(bytes(buf))


def test_tensor_truncated_payload():
    buf = tensor_to_bytes(np.zeros(4))[:-3]
    with pytest.raises(FormatError, match="truncated"):
        tensor_from_bytes(buf)


def test_tensor_trailing_bytes(tmp_path):
    p = tmp_path / "t.pwtt"
    p.write_bytes(tensor_to_bytes(np.zeros(2)) + b"xx")
    with pytest.raises(FormatError, match="trailing"):
        read_tensor(p)


# --------------------------------------------------------------- checkpoints


def test_checkpoint_roundtrip_default_params(tmp_path):
    cfg = PwtpConfig(T=4, D=1, k=3, s=2, c_prime=4)
    params = init_pwtp_params(cfg, 3, Rng(2))
    params.update(init_head_params(3, 4, Rng(3)))
    p = tmp_path / "ck.pwtc"
    save_checkpoint(p, params)
    back = load_checkpoint(p)
    assert set(back) == set(params)
    for name, arr in params.items():
        assert np.array_equal(back[name], arr.astype("<f4").astype(np.float64))


def test_checkpoint_bad_magic(tmp_path):
    p = tmp_path / "ck.pwtc"
    p.write_bytes(b"JUNK" + b"\x00" * 10)
    with pytest.raises(FormatError, match="bad magic"):
        load_checkpoint(p)


def test_checkpoint_truncation(tmp_path):
    p = tmp_path / "ck.pwtc"
    save_checkpoint(p, {"theta1/a": np.ones(3)})
    p.write_bytes(p.read_bytes()[:-2])
    with pytest.raises(FormatError, match="truncated"):
        load_checkpoint(p)


def test_checkpoint_unknown_version(tmp_path):
    p = tmp_path / "ck.pwtc"
    save_checkpoint(p, {"theta1/a": np.ones(3)})
    buf = bytearray(p.read_bytes())
    buf[4] = 7
    p.write_bytes(bytes(buf))
    with pytest.raises(FormatError, match="version"):
        load_checkpoint(p)


def test_partial_checkpoint_group_contract(tmp_path):
    p = tmp_path / "ck.pwtc"
    save_checkpoint(p, {"theta1/conv_w": np.ones((2, 2))})
    back = load_checkpoint(p)
    require_groups(back, groups=("theta1/",))  # inference path: fine
    with pytest.raises(FormatError, match="theta2/"):
        require_groups(back)  # eval needs the head


# --------------------------------------------------------------------- frames


def test_black_frame_roundtrip(tmp_path):
    d = tmp_path / "frames"
    write_frames(d, np.zeros((1, 2, 2, 3)))
    t = read_frames(d)
    assert t.shape == (1, 2, 2, 3)
    assert not t.any()


def test_frame_roundtrip_within_quantization(tmp_path):
    clip = Rng(4).uniform_array((3, 5, 6, 3))
    d = tmp_path / "frames"
    write_frames(d, clip)
    back = read_frames(d)
    assert np.abs(back - clip).max() <= 0.5 / 255.0 + 1e-12


def test_missing_first_frame(tmp_path):
    with pytest.raises(FormatError, match="missing index"):
        read_frames(tmp_path)


def test_inconsistent_frame_sizes(tmp_path):
    (tmp_path / "frame_00001.ppm").write_bytes(
        encode_ppm(np.zeros((2, 2, 3), dtype=np.uint8)))
    (tmp_path / "frame_00002.ppm").write_bytes(
        encode_ppm(np.zeros((3, 2, 3), dtype=np.uint8)))
    with pytest.raises(FormatError, match="inconsistent frame size"):
        read_frames(tmp_path)


def test_non_p6_header_rejected():
    with pytest.raises(FormatError, match="non-P6"):
        decode_ppm(b"P3\n2 2\n255\n" + b"0" * 12)


def test_ppm_comment_lines_skipped():
    img = np.arange(12, dtype=np.uint8).reshape(2, 2, 3)
    buf = b"P6\n# a comment\n2 2\n255\n" + img.tobytes()
    assert np.array_equal(decode_ppm(buf), img)


# ------------------------------------------------------------------ DA export


def test_export_zero_da_is_mid_gray():
    img = decode_ppm(export_da(np.zeros((4, 4, 3))))
    assert (img == 128).all()


def test_export_da_endpoints():
    da = np.zeros((1, 2, 3))
    da[0, 0] = 1.0
    da[0, 1] = -1.0
    img = decode_ppm(export_da(da))
    assert (img[0, 0] == 255).all()
    assert (img[0, 1] == 0).all()


def test_export_da_clamps_out_of_range():
    img = decode_ppm(export_da(np.full((1, 1, 3), 5.0)))
    assert (img == 255).all()


def test_export_da_deterministic():
    da = Rng(5).uniform_array((4, 4, 3), -1.0, 1.0)
    assert export_da(da) == export_da(da)


def test_export_da_rejects_nonfinite():
    with pytest.raises(ValueError):
        export_da(np.array([[[np.inf, 0.0, 0.0]]]))
