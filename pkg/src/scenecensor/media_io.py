"""Y4M (YUV4MPEG2) and WAV (RIFF PCM-16 mono) reading and writing.

Colour conversion is BT.601 full range.  Conversions round half away from
zero and clamp to the valid sample range.

Written Y4M streams default to ``C444p16``: 4:4:4 planes with 16-bit
little-endian samples holding the 8-bit-scale value times 256.  8-bit YCbCr
cannot represent every RGB triple, so only the 16-bit variant gives an exact
RGB roundtrip.  Plain 8-bit ``C444`` output is available on request.
"""

from __future__ import annotations

import os
import struct
from fractions import Fraction
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import MediaFormatError, SegmentError
from .media import AudioTrack, VideoAsset, as_fraction, stack_frames

Y4M_MAGIC = b"YUV4MPEG2"
FRAME_MARKER = b"FRAME"

_CHROMA_420 = {"420", "420jpeg", "420paldv", "420mpeg2"}
_WRITABLE = {"444", "444p16"}

PathLike = Union[str, os.PathLike]


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def rgb_to_ycbcr(rgb: np.ndarray) -> np.ndarray:
    """Float YCbCr (8-bit scale) from an RGB array with a trailing channel axis."""
    rgb = rgb.astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0
    cr = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0
    return np.stack([y, cb, cr], axis=-1)


def ycbcr_to_rgb(ycc: np.ndarray) -> np.ndarray:
    """uint8 RGB from float YCbCr on the 8-bit scale."""
    y = ycc[..., 0]
    cb = ycc[..., 1] - 128.0
    cr = ycc[..., 2] - 128.0
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    rgb = np.stack([r, g, b], axis=-1)
    return np.clip(round_half_away(rgb), 0, 255).astype(np.uint8)


def _parse_header(line: bytes) -> dict:
    tokens = line.split(b" ")
    if tokens[0] != Y4M_MAGIC:
        raise MediaFormatError("not a Y4M stream: bad signature")
    header = {"C": "420jpeg"}
    for token in tokens[1:]:
        if not token:
            continue
        key, value = chr(token[0]), token[1:].decode("ascii", "replace")
        header[key] = value
    try:
        width, height = int(header["W"]), int(header["H"])
        num, den = header["F"].split(":")
        rate = Fraction(int(num), int(den))
    except (KeyError, ValueError, ZeroDivisionError):
        raise MediaFormatError("not a Y4M stream: missing or invalid W/H/F header fields") from None
    if width <= 0 or height <= 0 or rate <= 0:
        raise MediaFormatError("not a Y4M stream: non-positive width, height or frame rate")
    return {"width": width, "height": height, "rate": rate, "colorspace": header["C"]}


def _plane_layout(colorspace: str, width: int, height: int):
    """Return (sample dtype, luma shape, chroma shape) for a colour space tag."""
    if colorspace in _CHROMA_420:
        return np.dtype(np.uint8), (height, width), ((height + 1) // 2, (width + 1) // 2)
    if colorspace == "444":
        return np.dtype(np.uint8), (height, width), (height, width)
    if colorspace == "444p16":
        return np.dtype("<u2"), (height, width), (height, width)
    raise MediaFormatError(f"unsupported Y4M colour space C{colorspace}")


def read_y4m(data: bytes) -> tuple[Fraction, np.ndarray]:
    """Decode a Y4M stream into ``(frame_rate, frames)``; frames are RGB uint8."""
    data = bytes(data)
    if not data.startswith(Y4M_MAGIC):
        raise MediaFormatError("not a Y4M stream: bad signature")
    end = data.find(b"\n")
    if end < 0:
        raise MediaFormatError("not a Y4M stream: unterminated header")
    header = _parse_header(data[:end])
    width, height = header["width"], header["height"]
    dtype, luma, chroma = _plane_layout(header["colorspace"], width, height)
    luma_n = luma[0] * luma[1]
    chroma_n = chroma[0] * chroma[1]
    payload = (luma_n + 2 * chroma_n) * dtype.itemsize
    scale = 256.0 if dtype.itemsize == 2 else 1.0

    frames = []
    pos = end + 1
    while pos < len(data):
        if not data.startswith(FRAME_MARKER, pos):
            raise MediaFormatError(f"truncated stream: expected FRAME marker at byte {pos}")
        eol = data.find(b"\n", pos)
        if eol < 0:
            raise MediaFormatError("truncated stream: unterminated FRAME header")
        start = eol + 1
        if start + payload > len(data):
            raise MediaFormatError(f"truncated stream: frame {len(frames)} payload is incomplete")
        planes = np.frombuffer(data, dtype=dtype, count=luma_n + 2 * chroma_n, offset=start)
        y = planes[:luma_n].reshape(luma)
        cb = planes[luma_n : luma_n + chroma_n].reshape(chroma)
        cr = planes[luma_n + chroma_n :].reshape(chroma)
        if chroma != luma:
            cb = np.repeat(np.repeat(cb, 2, axis=0), 2, axis=1)[:height, :width]
            cr = np.repeat(np.repeat(cr, 2, axis=0), 2, axis=1)[:height, :width]
        ycc = np.stack([y, cb, cr], axis=-1).astype(np.float64) / scale
        frames.append(ycbcr_to_rgb(ycc))
        pos = start + payload

    if frames:
        array = np.stack(frames)
    else:
        array = np.zeros((0, height, width, 3), dtype=np.uint8)
    return header["rate"], array


def write_y4m(frame_rate, frames: Union[np.ndarray, Sequence[np.ndarray]], colorspace: str = "444p16") -> bytes:
    """Encode RGB frames as a Y4M stream (``C444p16`` by default, ``C444`` optional)."""
    if colorspace not in _WRITABLE:
        raise ValueError(f"cannot write Y4M colour space C{colorspace}; choose one of {sorted(_WRITABLE)}")
    if isinstance(frames, np.ndarray) and frames.ndim == 4:
        array = frames
    else:
        frames = list(frames)
        if not frames:
            raise ValueError("cannot write an empty frame list")
        try:
            array = stack_frames(frames)
        except SegmentError:
            raise SegmentError("incompatible frames: frame dimensions differ") from None
    if array.shape[0] == 0:
        raise ValueError("cannot write an empty frame list")
    rate = as_fraction(frame_rate)
    height, width = array.shape[1:3]

    ycc = rgb_to_ycbcr(array)
    if colorspace == "444p16":
        planes = np.clip(round_half_away(ycc * 256.0), 0, 65535).astype("<u2")
    else:
        planes = np.clip(round_half_away(ycc), 0, 255).astype(np.uint8)
    # (n, h, w, c) -> (n, c, h, w): planar order Y, Cb, Cr
    planes = np.ascontiguousarray(planes.transpose(0, 3, 1, 2))

    header = f"YUV4MPEG2 W{width} H{height} F{rate.numerator}:{rate.denominator} Ip A1:1 C{colorspace}\n"
    chunks = [header.encode("ascii")]
    for frame in planes:
        chunks.append(b"FRAME\n")
        chunks.append(frame.tobytes())
    return b"".join(chunks)


# -- WAV ---------------------------------------------------------------------

_PCM = 1
_EXTENSIBLE = 0xFFFE


def read_wav(data: bytes) -> AudioTrack:
    """Parse a RIFF/WAVE PCM 16-bit mono file."""
    data = bytes(data)
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MediaFormatError("not a WAV file: missing RIFF/WAVE header")
    riff_size = struct.unpack_from("<I", data, 4)[0]
    limit = min(len(data), 8 + riff_size)

    fmt = None
    samples = None
    pos = 12
    while pos + 8 <= limit:
        chunk_id = data[pos : pos + 4]
        size = struct.unpack_from("<I", data, pos + 4)[0]
        body = pos + 8
        if body + size > limit:
            raise MediaFormatError(f"not a WAV file: chunk {chunk_id!r} overruns the file")
        if chunk_id == b"fmt ":
            if size < 16:
                raise MediaFormatError("not a WAV file: fmt chunk too short")
            tag, channels, rate, _byte_rate, _align, bits = struct.unpack_from("<HHIIHH", data, body)
            if tag == _EXTENSIBLE and size >= 40:
                tag = struct.unpack_from("<H", data, body + 24)[0]
            fmt = (tag, channels, rate, bits)
        elif chunk_id == b"data":
            if fmt is None:
                raise MediaFormatError("not a WAV file: data chunk before fmt chunk")
            samples = data[body : body + size]
        pos = body + size + (size & 1)

    if fmt is None or samples is None:
        raise MediaFormatError("not a WAV file: missing fmt or data chunk")
    tag, channels, rate, bits = fmt
    if tag != _PCM or channels != 1 or bits != 16:
        raise MediaFormatError(
            f"unsupported WAV variant: format {tag}, {channels} channel(s), {bits} bits (need PCM 16-bit mono)"
        )
    if rate == 0:
        raise MediaFormatError("not a WAV file: zero sample rate")
    if len(samples) % 2:
        raise MediaFormatError("not a WAV file: odd data chunk length for 16-bit samples")
    return AudioTrack(rate, np.frombuffer(samples, dtype="<i2").astype(np.int16))


def write_wav(track: AudioTrack) -> bytes:
    payload = np.asarray(track.samples, dtype="<i2").tobytes()
    fmt = struct.pack("<HHIIHH", _PCM, 1, track.sample_rate, track.sample_rate * 2, 2, 16)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    return b"RIFF" + struct.pack("<I", len(body)) + body


# -- files -------------------------------------------------------------------


def atomic_write(path: PathLike, data: bytes) -> None:
    """Write ``data`` to a temporary sibling, then rename it over ``path``."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def load_media(video_path: PathLike, audio_path: PathLike, name: str = None) -> VideoAsset:
    """Read a Y4M + WAV pair into a :class:`VideoAsset`."""
    video_path, audio_path = Path(video_path), Path(audio_path)
    try:
        rate, frames = read_y4m(video_path.read_bytes())
    except MediaFormatError as exc:
        raise MediaFormatError(f"{video_path}: {exc}") from exc
    try:
        audio = read_wav(audio_path.read_bytes())
    except MediaFormatError as exc:
        raise MediaFormatError(f"{audio_path}: {exc}") from exc
    return VideoAsset(rate, frames, audio, name=name or video_path.stem)


def save_media(asset: VideoAsset, video_path: PathLike, audio_path: PathLike) -> None:
    atomic_write(video_path, write_y4m(asset.frame_rate, asset.frames))
    atomic_write(audio_path, write_wav(asset.audio))
