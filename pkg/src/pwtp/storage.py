"""Bit-exact little-endian file formats: tensor container, parameter
checkpoint, PPM frame sequences and dynamic-appearance image export."""

import os
import struct

import numpy as np

TENSOR_MAGIC = b"PWTT"
CHECKPOINT_MAGIC = b"PWTC"
FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


# ------------------------------------------------------------ tensor blocks


def tensor_to_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    dims = arr.shape
    if len(dims) > 255:
        raise FormatError("tensor rank exceeds format limit")
    header = TENSOR_MAGIC + struct.pack("<BB", FORMAT_VERSION, len(dims))
    header += struct.pack(f"<{len(dims)}I", *dims) if dims else b""
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return header + payload


def tensor_from_bytes(buf: bytes, offset: int = 0):
    """Parse one tensor block; returns (float64 array, next offset)."""
    if buf[offset : offset + 4] != TENSOR_MAGIC:
        raise FormatError("bad magic: not a tensor container")
    offset += 4
    version, rank = struct.unpack_from("<BB", buf, offset)
    if version != FORMAT_VERSION:
        raise FormatError(f"unknown tensor container version {version}")
    offset += 2
    dims = struct.unpack_from(f"<{rank}I", buf, offset) if rank else ()
    offset += 4 * rank
    count = int(np.prod(dims)) if dims else 1
    end = offset + 4 * count
    if end > len(buf):
        raise FormatError("truncated tensor payload")
    data = np.frombuffer(buf, dtype="<f4", count=count, offset=offset)
    return data.astype(np.float64).reshape(dims), end


def write_tensor(path, arr: np.ndarray):
    with open(path, "wb") as f:
        f.write(tensor_to_bytes(arr))


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        buf = f.read()
    arr, end = tensor_from_bytes(buf)
    if end != len(buf):
        raise FormatError("trailing bytes after tensor payload")
    return arr


# -------------------------------------------------------------- checkpoints


def save_checkpoint(path, params: dict):
    names = list(params)
    if len(set(names)) != len(names):
        raise FormatError("duplicate tensor names")
    blob = CHECKPOINT_MAGIC + struct.pack("<BI", FORMAT_VERSION, len(names))
    for name in names:
        enc = name.encode("utf-8")
        blob += struct.pack("<H", len(enc)) + enc + tensor_to_bytes(params[name])
    with open(path, "wb") as f:
        f.write(blob)


def load_checkpoint(path) -> dict:
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise FormatError("bad magic: not a checkpoint")
    version, count = struct.unpack_from("<BI", buf, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unknown checkpoint version {version}")
    offset = 9
    params = {}
    for _ in range(count):
        if offset + 2 > len(buf):
            raise FormatError("truncated checkpoint")
        (nlen,) = struct.unpack_from("<H", buf, offset)
        offset += 2
        name = buf[offset : offset + nlen].decode("utf-8")
        offset += nlen
        if name in params:
            raise FormatError(f"duplicate tensor name {name!r}")
        params[name], offset = tensor_from_bytes(buf, offset)
    if offset != len(buf):
        raise FormatError("trailing bytes after checkpoint payload")
    return params


def require_groups(params: dict, groups=("theta1/", "theta2/")):
    for g in groups:
        if not any(name.startswith(g) for name in params):
            raise FormatError(f"checkpoint is missing the {g} parameter group")


# ---------------------------------------------------------------- PPM frames


def encode_ppm(pixels: np.ndarray) -> bytes:
    """uint8 (H, W, 3) -> binary P6 bytes."""
    h, w, c = pixels.shape
    if c != 3:
        raise FormatError("P6 requires 3 channels")
    return b"P6\n%d %d\n255\n" % (w, h) + pixels.astype(np.uint8).tobytes()


def decode_ppm(buf: bytes) -> np.ndarray:
    """Binary P6 bytes -> uint8 (H, W, 3)."""
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if buf[pos : pos + 1] == b"#":
            while pos < len(buf) and buf[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos : pos + 1].isspace():
            pos += 1
        fields.append(buf[start:pos])
    if fields[0] != b"P6":
        raise FormatError(f"non-P6 header {fields[0]!r}")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    data = np.frombuffer(buf, dtype=np.uint8, count=h * w * 3, offset=pos)
    if data.size != h * w * 3:
        raise FormatError("truncated pixel data")
    return data.reshape(h, w, 3)


def frame_name(index: int) -> str:
    return f"frame_{index:05d}.ppm"


def read_frames(dirpath) -> np.ndarray:
    """Read consecutive frame_%05d.ppm files (from 00001) as a float tensor
    (T, H, W, 3) scaled to [0, 1]."""
    frames = []
    index = 1
    while True:
        path = os.path.join(dirpath, frame_name(index))
        if not os.path.exists(path):
            break
        with open(path, "rb") as f:
            frames.append(decode_ppm(f.read()))
        index += 1
    if not frames:
        raise FormatError(f"missing index: no {frame_name(1)} in {dirpath}")
    shape = frames[0].shape
    for i, fr in enumerate(frames):
        if fr.shape != shape:
            raise FormatError(
                f"inconsistent frame size: frame {i + 1} is {fr.shape[1]}x{fr.shape[0]}"
            )
    return np.stack(frames).astype(np.float64) / 255.0


def write_frames(dirpath, clip: np.ndarray):
    """Quantize a (T, H, W, 3) float clip in [0, 1] to PPM frames."""
    os.makedirs(dirpath, exist_ok=True)
    for t in range(clip.shape[0]):
        pixels = np.clip(np.round(clip[t] * 255.0), 0, 255).astype(np.uint8)
        with open(os.path.join(dirpath, frame_name(t + 1)), "wb") as f:
            f.write(encode_ppm(pixels))


def export_da(da: np.ndarray) -> bytes:
    """Signed dynamic appearance to P6 bytes; zero maps to mid-gray 128."""
    if not np.isfinite(da).all():
        raise ValueError("dynamic appearance contains non-finite values")
    pixels = np.clip(np.round(255.0 * (0.5 + da / 2.0)), 0, 255).astype(np.uint8)
    return encode_ppm(pixels)
