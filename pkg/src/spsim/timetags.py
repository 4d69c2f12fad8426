"""Binary time-tag stream format, readers/writers, k-way merge, windowing.

File layout (all integers little-endian):

    offset  size  field
    0       8     magic, ASCII "SPSTAG01"
    8       2     version (currently 1)
    10      1     n_channels
    11      5     reserved, must be zero
    16      4     metadata_len
    20      var   metadata, UTF-8 JSON
    ...     16    one record per tag:
                    0  8  timestamp_ps (u64)
                    8  1  channel (u8)
                    9  1  flags (u8, bit0 = impurity-origin)
                    10 6   zero padding

Records are sorted by timestamp; ties are ordered by channel ascending.
Timestamps are integer picoseconds (2^64 ps is about 213 days), chosen so
files are bit-exact and independent of floating-point rounding.
"""

from __future__ import annotations

import heapq
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError

__all__ = [
    "TAG_DTYPE",
    "TagFileHeader",
    "FLAG_IMPURITY",
    "make_tags",
    "write_stream",
    "read_stream",
    "iter_stream",
    "merge",
    "merge_arrays",
    "window",
    "window_iter",
]

MAGIC = b"SPSTAG01"
VERSION = 1
_HEADER_STRUCT = struct.Struct("<8sHB5sI")
HEADER_FIXED_SIZE = _HEADER_STRUCT.size  # 20 bytes before the metadata blob
RECORD_SIZE = 16
FLAG_IMPURITY = 0x01

# 16-byte records: 6 trailing pad bytes are born zero via np.zeros.
TAG_DTYPE = np.dtype(
    {
        "names": ["timestamp_ps", "channel", "flags"],
        "formats": ["<u8", "u1", "u1"],
        "offsets": [0, 8, 9],
        "itemsize": RECORD_SIZE,
    }
)


@dataclass(frozen=True)
class TagFileHeader:
    """Parsed stream header."""

    version: int = VERSION
    n_channels: int = 1
    metadata: dict = field(default_factory=dict)


def make_tags(timestamps_ps, channels=0, flags=0) -> np.ndarray:
    """Build a zero-padded record array from columns (scalars broadcast)."""
    timestamps_ps = np.asarray(timestamps_ps, dtype=np.uint64)
    out = np.zeros(timestamps_ps.shape[0], dtype=TAG_DTYPE)
    out["timestamp_ps"] = timestamps_ps
    out["channel"] = channels
    out["flags"] = flags
    return out


def _check_sorted(tags: np.ndarray, base_offset: int, prev=None) -> tuple:
    """Validate the (timestamp, channel) ordering invariant.

    Returns the last (timestamp, channel) pair for cross-chunk chaining.
    Raises FormatError pointing at the byte offset of the first offender.
    """
    if tags.shape[0] == 0:
        return prev
    ts = tags["timestamp_ps"]
    ch = tags["channel"]
    if prev is not None:
        if (ts[0], ch[0]) < prev:
            raise FormatError("tag ordering violation", byte_offset=base_offset)
    if tags.shape[0] > 1:
        dt = np.diff(ts.astype(np.int64))
        bad = dt < 0
        ties = dt == 0
        if np.any(ties):
            bad |= ties & (np.diff(ch.astype(np.int16)) < 0)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0]) + 1
            raise FormatError(
                "tag ordering violation", byte_offset=base_offset + i * RECORD_SIZE
            )
    return (int(ts[-1]), int(ch[-1]))


def _encode_header(n_channels: int, metadata: dict | None) -> bytes:
    blob = json.dumps(
        metadata if metadata is not None else {}, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    return _HEADER_STRUCT.pack(MAGIC, VERSION, n_channels, b"\x00" * 5, len(blob)) + blob


def write_stream(path, tags, n_channels: int = 1, metadata: dict | None = None) -> None:
    """Write one sorted tag array (or an iterable of sorted chunks) to ``path``."""
    if isinstance(tags, np.ndarray):
        chunks = (tags,)
    else:
        chunks = tags
    with open(path, "wb") as fh:
        fh.write(_encode_header(n_channels, metadata))
        offset = fh.tell()
        prev = None
        for chunk in chunks:
            chunk = np.ascontiguousarray(chunk, dtype=TAG_DTYPE)
            prev = _check_sorted(chunk, offset, prev)
            fh.write(chunk.tobytes())
            offset += chunk.nbytes


def _read_header(fh, path) -> tuple[TagFileHeader, int]:
    raw = fh.read(HEADER_FIXED_SIZE)
    if len(raw) < HEADER_FIXED_SIZE:
        raise FormatError(f"{path}: truncated header", byte_offset=len(raw))
    magic, version, n_channels, reserved, meta_len = _HEADER_STRUCT.unpack(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}", byte_offset=0)
    if reserved != b"\x00" * 5:
        raise FormatError(f"{path}: reserved bytes not zero", byte_offset=11)
    blob = fh.read(meta_len)
    if len(blob) < meta_len:
        raise FormatError(
            f"{path}: truncated metadata", byte_offset=HEADER_FIXED_SIZE + len(blob)
        )
    if meta_len == 0:
        metadata = {}
    else:
        try:
            metadata = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(
                f"{path}: metadata is not valid JSON ({exc})",
                byte_offset=HEADER_FIXED_SIZE,
            ) from exc
    header = TagFileHeader(version=version, n_channels=n_channels, metadata=metadata)
    return header, HEADER_FIXED_SIZE + meta_len


def iter_stream(path, chunk_records: int = 1 << 18):
    """Stream a tag file with bounded memory.

    Returns ``(header, chunk_iterator)``; the iterator yields record
    arrays of at most ``chunk_records`` tags, validating ordering and
    record framing as it goes.
    """
    fh = open(path, "rb")
    try:
        header, data_start = _read_header(fh, path)
    except Exception:
        fh.close()
        raise

    def _chunks():
        try:
            offset = data_start
            prev = None
            while True:
                raw = fh.read(chunk_records * RECORD_SIZE)
                if not raw:
                    break
                if len(raw) % RECORD_SIZE:
                    raise FormatError(
                        f"{path}: truncated record",
                        byte_offset=offset + len(raw) - (len(raw) % RECORD_SIZE),
                    )
                chunk = np.frombuffer(raw, dtype=TAG_DTYPE)
                prev = _check_sorted(chunk, offset, prev)
                yield chunk
                offset += len(raw)
        finally:
            fh.close()

    return header, _chunks()


def _concat_records(parts) -> np.ndarray:
    """Concatenate record arrays, keeping pad bytes zero.

    np.concatenate copies only the named fields of a padded dtype and
    leaves the padding uninitialized; copying into a zeroed buffer keeps
    every record byte-exact.
    """
    total = sum(p.shape[0] for p in parts)
    out = np.zeros(total, dtype=TAG_DTYPE)
    pos = 0
    for p in parts:
        out[pos : pos + p.shape[0]] = p
        pos += p.shape[0]
    return out


def read_stream(path) -> tuple[np.ndarray, TagFileHeader]:
    """Read an entire tag file; exact inverse of write_stream."""
    header, chunks = iter_stream(path)
    return _concat_records(list(chunks)), header


def _record_iter(stream, stream_idx: int):
    """Yield sort keys + payload, checking per-stream order lazily."""
    if isinstance(stream, np.ndarray):
        chunks = (stream,)
    else:
        chunks = stream
    prev = None
    seq = 0
    for chunk in chunks:
        chunk = np.asarray(chunk, dtype=TAG_DTYPE)
        ts = chunk["timestamp_ps"]
        ch = chunk["channel"]
        fl = chunk["flags"]
        for i in range(chunk.shape[0]):
            key = (int(ts[i]), int(ch[i]))
            if prev is not None and key < prev:
                raise FormatError(
                    f"merge input {stream_idx} is unsorted at record {seq}"
                )
            prev = key
            yield (key[0], key[1], stream_idx, seq, int(fl[i]))
            seq += 1


def merge(streams) -> np.ndarray:
    """K-way merge of sorted streams into one sorted record array.

    Stable: equal (timestamp, channel) keys keep the order of the input
    streams, then the order within each stream.  Unsorted inputs are
    detected lazily while consumed.
    """
    heads = [_record_iter(s, k) for k, s in enumerate(streams)]
    rows = list(heapq.merge(*heads))
    out = np.zeros(len(rows), dtype=TAG_DTYPE)
    for i, (ts, ch, _k, _seq, fl) in enumerate(rows):
        out[i]["timestamp_ps"] = ts
        out[i]["channel"] = ch
        out[i]["flags"] = fl
    return out


def merge_arrays(arrays) -> np.ndarray:
    """Vectorized merge for in-memory arrays; same ordering contract as merge()."""
    arrays = [np.asarray(a, dtype=TAG_DTYPE) for a in arrays]
    for k, a in enumerate(arrays):
        try:
            _check_sorted(a, 0)
        except FormatError as exc:
            raise FormatError(f"merge input {k} is unsorted") from exc
    if not arrays:
        return np.zeros(0, dtype=TAG_DTYPE)
    cat = _concat_records(arrays)
    stream_idx = np.repeat(np.arange(len(arrays)), [a.shape[0] for a in arrays])
    order = np.lexsort((stream_idx, cat["channel"], cat["timestamp_ps"]))
    return cat[order]


def window(tags: np.ndarray, t0_ps: int, t1_ps: int) -> np.ndarray:
    """Tags with t0 <= timestamp < t1 from a sorted array."""
    if t0_ps > t1_ps:
        raise FormatError(f"window bounds reversed: ({t0_ps}, {t1_ps})")
    ts = tags["timestamp_ps"]
    lo = int(np.searchsorted(ts, np.uint64(t0_ps), side="left"))
    hi = int(np.searchsorted(ts, np.uint64(t1_ps), side="left"))
    return tags[lo:hi]


def window_iter(chunks, t0_ps: int, t1_ps: int):
    """Windowed pass over an iterable of sorted chunks (files or arrays)."""
    if t0_ps > t1_ps:
        raise FormatError(f"window bounds reversed: ({t0_ps}, {t1_ps})")
    for chunk in chunks:
        part = window(chunk, t0_ps, t1_ps)
        if part.shape[0]:
            yield part
        ts = chunk["timestamp_ps"]
        if ts.shape[0] and int(ts[-1]) >= t1_ps:
            break
