"""Time-tag streams and their on-disk formats.

A stream is an ordered list of (channel, timestamp) tags plus the header
needed to interpret it: timebin size, pulse period, and the divider that
says every how-many pulses a reference tag was recorded. Timestamps are
unsigned 64-bit counts of timebins since the run started.

Binary layout (little-endian), 18-byte header then 9-byte records:

    offset  size  field
    0       4     magic "ZHT1"
    4       2     u16 format version (currently 1)
    6       4     u32 timebin in picoseconds
    10      4     u32 pulse period in picoseconds
    14      4     u32 reference divider
    18      9*N   records: u8 channel, u64 timestamp

The CSV form carries the same header as "# key = value" comment lines
plus a free-text provenance note that the fixed binary header has no
room for.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from .errors import FormatError, IntegrityError, ValidationError

__all__ = ["Channel", "TimeTag", "TagStream", "write_tags", "read_tags",
           "write_tags_csv", "read_tags_csv"]

MAGIC = b"ZHT1"
VERSION = 1
_HEADER = struct.Struct("<4sHIII")
_RECORD_DTYPE = np.dtype([("channel", "u1"), ("timestamp", "<u8")])


class Channel(IntEnum):
    """Hardware channel codes as stored in tag records."""

    REF = 0
    D1 = 1
    D2 = 2


@dataclass(frozen=True)
class TimeTag:
    """A single detection event; timestamp counts timebins."""

    channel: Channel
    timestamp: int


@dataclass
class TagStream:
    """An ordered tag list with the header needed to interpret it.

    provenance is a free-text note (generator, seed); it travels with
    the CSV form and run manifests but not the binary header, and is
    excluded from equality.
    """

    timebin_ps: int
    rep_period_ps: int
    divider: int
    channels: np.ndarray
    timestamps: np.ndarray
    version: int = VERSION
    provenance: str = field(default="", compare=False)

    def __post_init__(self):
        for name in ("timebin_ps", "rep_period_ps", "divider"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value <= 0:
                raise ValidationError(f"{name} must be a positive integer, got {value!r}")
            if value > 0xFFFFFFFF:
                raise ValidationError(f"{name} does not fit the 32-bit header field")
        if self.version != VERSION:
            raise ValidationError(f"unsupported stream version {self.version!r}")
        ch = np.asarray(self.channels)
        ts = np.asarray(self.timestamps)
        if ch.ndim != 1 or ts.ndim != 1 or ch.size != ts.size:
            raise ValidationError("channels and timestamps must be 1-d and equal length")
        if ch.size and (ch.min() < 0 or ch.max() > max(Channel)):
            raise ValidationError("channel codes must be 0 (REF), 1 (D1) or 2 (D2)")
        if ts.size and ts.dtype.kind not in "ui":
            raise ValidationError(f"timestamps must be integers, got dtype {ts.dtype}")
        if ts.size and ts.dtype.kind == "i" and ts.min() < 0:
            raise ValidationError("timestamps must be non-negative")
        self.channels = ch.astype(np.uint8)
        self.timestamps = ts.astype(np.uint64)
        if np.any(self.timestamps[1:] < self.timestamps[:-1]):
            raise IntegrityError("timestamps must be non-decreasing")

    def __eq__(self, other):
        if not isinstance(other, TagStream):
            return NotImplemented
        return (
            self.version == other.version
            and self.timebin_ps == other.timebin_ps
            and self.rep_period_ps == other.rep_period_ps
            and self.divider == other.divider
            and np.array_equal(self.channels, other.channels)
            and np.array_equal(self.timestamps, other.timestamps)
        )

    def __len__(self) -> int:
        return self.channels.size

    def channel_timestamps(self, channel: Channel) -> np.ndarray:
        """Timestamps of one channel, in stream order."""
        return self.timestamps[self.channels == int(channel)]

    def tags(self):
        """Iterate tags as TimeTag objects (convenience, not bulk API)."""
        for ch, ts in zip(self.channels, self.timestamps):
            yield TimeTag(Channel(int(ch)), int(ts))

    def with_provenance(self, note: str) -> "TagStream":
        return replace(self, provenance=note)


def _open_binary(source, mode):
    if hasattr(source, "read") or hasattr(source, "write"):
        return source, False
    return open(source, mode), True


def write_tags(stream: TagStream, sink) -> None:
    """Write a stream in the binary format; sink is a path or file."""
    fh, owned = _open_binary(sink, "wb")
    try:
        fh.write(_HEADER.pack(MAGIC, stream.version, stream.timebin_ps,
                              stream.rep_period_ps, stream.divider))
        records = np.empty(len(stream), dtype=_RECORD_DTYPE)
        records["channel"] = stream.channels
        records["timestamp"] = stream.timestamps
        fh.write(records.tobytes())
    finally:
        if owned:
            fh.close()


def read_tags(source) -> TagStream:
    """Read a binary tag file; source is a path or file.

    Bad magic, version, or a truncated record raise FormatError;
    out-of-order timestamps raise IntegrityError.
    """
    fh, owned = _open_binary(source, "rb")
    try:
        blob = fh.read()
    finally:
        if owned:
            fh.close()
    if len(blob) < _HEADER.size:
        raise FormatError(f"file too short for a header ({len(blob)} bytes)")
    magic, version, timebin_ps, rep_period_ps, divider = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}")
    body = blob[_HEADER.size:]
    if len(body) % _RECORD_DTYPE.itemsize:
        good = len(body) // _RECORD_DTYPE.itemsize * _RECORD_DTYPE.itemsize
        raise FormatError(
            f"truncated record at byte offset {_HEADER.size + good} "
            f"({len(body) - good} trailing bytes)"
        )
    records = np.frombuffer(body, dtype=_RECORD_DTYPE)
    if records.size and records["channel"].max() > max(Channel):
        bad = int(np.argmax(records["channel"] > max(Channel)))
        raise FormatError(
            f"unknown channel code {int(records['channel'][bad])} at record "
            f"{bad} (byte offset {_HEADER.size + bad * _RECORD_DTYPE.itemsize})"
        )
    if timebin_ps <= 0 or rep_period_ps <= 0 or divider <= 0:
        raise FormatError("header fields must be positive")
    ts = records["timestamp"]
    if ts.size and np.any(ts[1:] < ts[:-1]):
        bad = int(np.argmax(ts[1:] < ts[:-1])) + 1
        raise IntegrityError(
            f"timestamps go backwards at record {bad} (byte offset "
            f"{_HEADER.size + bad * _RECORD_DTYPE.itemsize})"
        )
    return TagStream(
        timebin_ps=int(timebin_ps),
        rep_period_ps=int(rep_period_ps),
        divider=int(divider),
        channels=records["channel"].copy(),
        timestamps=records["timestamp"].copy(),
        version=int(version),
    )


def write_tags_csv(stream: TagStream, sink) -> None:
    """Write a stream as CSV with '# key = value' header lines."""
    fh, owned = _open_binary(sink, "w")
    try:
        fh.write("# zht-csv\n")
        fh.write(f"# version = {stream.version}\n")
        fh.write(f"# timebin_ps = {stream.timebin_ps}\n")
        fh.write(f"# rep_period_ps = {stream.rep_period_ps}\n")
        fh.write(f"# divider = {stream.divider}\n")
        # provenance is advisory free text; the format is line-oriented
        flat = " ".join(stream.provenance.splitlines()) if stream.provenance else ""
        fh.write(f"# provenance = {flat}\n")
        fh.write("channel,timestamp\n")
        names = {int(c): c.name for c in Channel}
        buf = io.StringIO()
        for ch, ts in zip(stream.channels, stream.timestamps):
            buf.write(f"{names[int(ch)]},{int(ts)}\n")
        fh.write(buf.getvalue())
    finally:
        if owned:
            fh.close()


def read_tags_csv(source) -> TagStream:
    """Read the CSV form back into a stream."""
    fh, owned = _open_binary(source, "r")
    try:
        text = fh.read()
    finally:
        if owned:
            fh.close()
    header: dict[str, str] = {}
    channels: list[int] = []
    timestamps: list[int] = []
    codes = {c.name: int(c) for c in Channel}
    saw_columns = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, _, value = body.partition("=")
                header[key.strip()] = value.strip()
            continue
        if not saw_columns:
            if line != "channel,timestamp":
                raise FormatError(f"line {lineno}: expected column header, got {raw!r}")
            saw_columns = True
            continue
        ch_name, sep, ts_text = line.partition(",")
        if not sep or ch_name not in codes:
            raise FormatError(f"line {lineno}: bad record {raw!r}")
        try:
            ts = int(ts_text)
        except ValueError:
            raise FormatError(f"line {lineno}: bad timestamp {ts_text!r}") from None
        if ts < 0:
            raise FormatError(f"line {lineno}: negative timestamp")
        channels.append(codes[ch_name])
        timestamps.append(ts)
    missing = {"version", "timebin_ps", "rep_period_ps", "divider"} - set(header)
    if missing:
        raise FormatError(f"missing header lines: {sorted(missing)}")
    try:
        version = int(header["version"])
        timebin_ps = int(header["timebin_ps"])
        rep_period_ps = int(header["rep_period_ps"])
        divider = int(header["divider"])
    except ValueError as exc:
        raise FormatError(f"bad header value: {exc}") from None
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}")
    return TagStream(
        timebin_ps=timebin_ps,
        rep_period_ps=rep_period_ps,
        divider=divider,
        channels=np.array(channels, dtype=np.uint8),
        timestamps=np.array(timestamps, dtype=np.uint64),
        version=version,
        provenance=header.get("provenance", ""),
    )
