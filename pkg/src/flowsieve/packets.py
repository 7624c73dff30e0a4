"""Packet/flow data model and trace ingestion.

Traces are header-only records (no payloads): a timestamp, the 5-tuple,
TCP flags, lengths, and an optional ground-truth label used purely for
accounting. Two on-disk formats are supported, a human-editable text
format and a fixed 27-byte binary format.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Iterable, Iterator, List, Optional

# TCP flag bits; positions match the binary trace format's flag byte.
SYN = 0x01
ACK = 0x02
RST = 0x04
FIN = 0x08
PSH = 0x10

_FLAG_BY_CHAR = {"S": SYN, "A": ACK, "R": RST, "F": FIN, "P": PSH}
_FLAG_ORDER = "SARFP"

TCP = 6


class Label(IntEnum):
    """Ground-truth tag carried by simulation traces (never used by the pipeline itself)."""

    UNLABELED = 0
    BENIGN = 1
    SCAN = 2
    DIST_SYN = 3
    SLOWLORIS = 4
    SSH_BRUTE = 5
    FTP_BRUTE = 6
    INCOMPLETE = 7
    NON_BENIGN = 8


_LABEL_BY_TOKEN = {
    "": Label.UNLABELED,
    "unlabeled": Label.UNLABELED,
    "benign": Label.BENIGN,
    "scan": Label.SCAN,
    "distsyn": Label.DIST_SYN,
    "slowloris": Label.SLOWLORIS,
    "sshbrute": Label.SSH_BRUTE,
    "ftpbrute": Label.FTP_BRUTE,
    "incomplete": Label.INCOMPLETE,
    "nonbenign": Label.NON_BENIGN,
}
_TOKEN_BY_LABEL = {v: k for k, v in _LABEL_BY_TOKEN.items() if k != ""}


class FormatError(ValueError):
    """Malformed trace input; message carries line/offset context."""


def ip_to_int(text: str) -> int:
    parts = text.split(".")
    if len(parts) != 4:
        raise FormatError(f"bad IPv4 address {text!r}")
    value = 0
    for part in parts:
        octet = int(part)
        if not 0 <= octet <= 255:
            raise FormatError(f"bad IPv4 address {text!r}")
        value = (value << 8) | octet
    return value


def int_to_ip(value: int) -> str:
    return f"{(value >> 24) & 0xFF}.{(value >> 16) & 0xFF}.{(value >> 8) & 0xFF}.{value & 0xFF}"


_KEY_STRUCT = struct.Struct(">IIHHB")


@dataclass(frozen=True, slots=True)
class FlowKey:
    """5-tuple identifying a flow direction. Serializes to exactly 13 bytes."""

    src_ip: int
    dst_ip: int
    src_port: int
    dst_port: int
    proto: int

    def pack(self) -> bytes:
        return _KEY_STRUCT.pack(self.src_ip, self.dst_ip, self.src_port, self.dst_port, self.proto)

    @classmethod
    def unpack(cls, data: bytes) -> "FlowKey":
        if len(data) != 13:
            raise FormatError(f"flow key must be 13 bytes, got {len(data)}")
        return cls(*_KEY_STRUCT.unpack(data))

    def reverse(self) -> "FlowKey":
        return FlowKey(self.dst_ip, self.src_ip, self.dst_port, self.src_port, self.proto)

    def __str__(self) -> str:
        return (
            f"{int_to_ip(self.src_ip)}:{self.src_port}->"
            f"{int_to_ip(self.dst_ip)}:{self.dst_port}/{self.proto}"
        )


def canonical_key(key: FlowKey) -> FlowKey:
    """Direction-invariant form: endpoints ordered lexicographically.

    Both directions of a connection map to the same key, so filter and
    flow-table state is shared between them. Idempotent.
    """
    if (key.src_ip, key.src_port) <= (key.dst_ip, key.dst_port):
        return key
    return key.reverse()


@dataclass(slots=True)
class PacketRecord:
    """One observed packet. ``payload_len <= wire_len`` always."""

    ts: float
    key: FlowKey
    tcp_flags: int
    wire_len: int
    payload_len: int
    label: Label = Label.UNLABELED

    def flags_str(self) -> str:
        return "".join(c for c in _FLAG_ORDER if self.tcp_flags & _FLAG_BY_CHAR[c])


def flags_from_str(text: str) -> int:
    value = 0
    for ch in text:
        bit = _FLAG_BY_CHAR.get(ch)
        if bit is None:
            raise FormatError(f"unknown TCP flag char {ch!r}")
        value |= bit
    return value


# ---------------------------------------------------------------------------
# Text format: ts,src_ip,dst_ip,src_port,dst_port,proto,flags,wire_len,payload_len,label

def parse_text_line(line: str, lineno: int) -> PacketRecord:
    fields = line.rstrip("\n").split(",")
    if len(fields) != 10:
        raise FormatError(f"line {lineno}: expected 10 fields, got {len(fields)}")
    try:
        ts = float(fields[0])
        key = FlowKey(
            ip_to_int(fields[1]),
            ip_to_int(fields[2]),
            int(fields[3]),
            int(fields[4]),
            int(fields[5]),
        )
        flags = flags_from_str(fields[6])
        wire_len = int(fields[7])
        payload_len = int(fields[8])
        token = fields[9].strip().lower()
        if token not in _LABEL_BY_TOKEN:
            raise FormatError(f"unknown label {fields[9]!r}")
        label = _LABEL_BY_TOKEN[token]
    except FormatError as exc:
        raise FormatError(f"line {lineno}: {exc}") from None
    except ValueError as exc:
        raise FormatError(f"line {lineno}: {exc}") from None
    if payload_len > wire_len:
        raise FormatError(f"line {lineno}: payload_len {payload_len} > wire_len {wire_len}")
    return PacketRecord(ts, key, flags, wire_len, payload_len, label)


def format_text_line(rec: PacketRecord) -> str:
    return (
        f"{rec.ts:.6f},{int_to_ip(rec.key.src_ip)},{int_to_ip(rec.key.dst_ip)},"
        f"{rec.key.src_port},{rec.key.dst_port},{rec.key.proto},"
        f"{rec.flags_str()},{rec.wire_len},{rec.payload_len},{_TOKEN_BY_LABEL[rec.label]}"
    )


# ---------------------------------------------------------------------------
# Binary format: little-endian u64 ts_micros, 13-byte key, u8 flags,
# u16 wire_len, u16 payload_len, u8 label  => 27 bytes per record.

RECORD_STRUCT = struct.Struct("<Q13sBHHB")
RECORD_SIZE = RECORD_STRUCT.size  # 27


def pack_record(rec: PacketRecord) -> bytes:
    return RECORD_STRUCT.pack(
        round(rec.ts * 1_000_000),
        rec.key.pack(),
        rec.tcp_flags,
        rec.wire_len,
        rec.payload_len,
        int(rec.label),
    )


def unpack_record(data: bytes, offset: int = 0) -> PacketRecord:
    ts_us, key_bytes, flags, wire_len, payload_len, label = RECORD_STRUCT.unpack_from(data, offset)
    if payload_len > wire_len:
        raise FormatError(f"offset {offset}: payload_len {payload_len} > wire_len {wire_len}")
    try:
        lab = Label(label)
    except ValueError:
        raise FormatError(f"offset {offset}: unknown label code {label}") from None
    return PacketRecord(ts_us / 1_000_000, FlowKey.unpack(key_bytes), flags, wire_len, payload_len, lab)


# ---------------------------------------------------------------------------
# Streams

class PacketStream:
    """Re-iterable, time-ordered packet source.

    Wraps a factory so that each ``iter()`` re-opens the underlying
    source and yields an identical sequence (files and deterministic
    generators both satisfy this).
    """

    def __init__(self, factory: Callable[[], Iterator[PacketRecord]], description: str = "<stream>"):
        self._factory = factory
        self.description = description

    def __iter__(self) -> Iterator[PacketRecord]:
        return self._factory()

    @classmethod
    def from_records(cls, records: Iterable[PacketRecord], description: str = "<memory>") -> "PacketStream":
        items: List[PacketRecord] = list(records)
        return cls(lambda: iter(items), description)


def _iter_text(path: str, strict: bool) -> Iterator[PacketRecord]:
    last_ts = None
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = parse_text_line(line, lineno)
            if strict and last_ts is not None and rec.ts < last_ts:
                raise FormatError(f"line {lineno}: timestamp {rec.ts} decreases (prev {last_ts})")
            last_ts = rec.ts
            yield rec


def _iter_binary(path: str, strict: bool) -> Iterator[PacketRecord]:
    last_ts = None
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) % RECORD_SIZE != 0:
        raise FormatError(f"{path}: size {len(data)} is not a multiple of {RECORD_SIZE}")
    for index in range(0, len(data), RECORD_SIZE):
        rec = unpack_record(data, index)
        if strict and last_ts is not None and rec.ts < last_ts:
            raise FormatError(f"record at offset {index}: timestamp decreases")
        last_ts = rec.ts
        yield rec


def parse_stream(path: str, format: str = "text", strict: bool = True) -> PacketStream:
    """Open a trace file as a re-iterable stream.

    Raises IOError for unreadable paths and FormatError (with line or
    offset context) for malformed content; in strict mode a timestamp
    decrease is also a FormatError.
    """
    if format == "text":
        with open(path, "r"):  # surface IOError eagerly
            pass
        return PacketStream(lambda: _iter_text(path, strict), path)
    if format == "binary":
        with open(path, "rb"):
            pass
        return PacketStream(lambda: _iter_binary(path, strict), path)
    raise ValueError(f"unknown trace format {format!r}")


def write_text(path: str, records: Iterable[PacketRecord]) -> int:
    count = 0
    with open(path, "w", encoding="ascii") as fh:
        for rec in records:
            fh.write(format_text_line(rec))
            fh.write("\n")
            count += 1
    return count


def write_binary(path: str, records: Iterable[PacketRecord]) -> int:
    count = 0
    with open(path, "wb") as fh:
        for rec in records:
            fh.write(pack_record(rec))
            count += 1
    return count


def convert(src: str, src_format: str, dst: str, dst_format: str) -> int:
    """Translate a trace between the text and binary formats."""
    stream = parse_stream(src, src_format)
    if dst_format == "text":
        return write_text(dst, stream)
    if dst_format == "binary":
        return write_binary(dst, stream)
    raise ValueError(f"unknown trace format {dst_format!r}")
