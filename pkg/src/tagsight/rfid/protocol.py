"""Binary reader protocol.

Frame: 8-byte big-endian header ``magic u16 (0xAF1D) | version u8 | type u8 |
payload_len u32`` followed by the payload.

=====  ==============  ==================================================
type   name            payload
=====  ==============  ==================================================
0x01   INVENTORY_REQ   ``antenna u8`` (omitted: all antennas)
0x02   TAG_REPORT      ``count u16``, then per tag ``epc 12B | rssi i16
                       (dBm x 100) | antenna u8 | timestamp u64 (us)``
0x03   WRITE_REQ       ``epc 12B | bank u8 | wordptr u16 | word u16``
0x04   WRITE_RESP      ``status u8``
0x05   READ_REQ        ``epc 12B | bank u8 | wordptr u16``
0x06   READ_RESP       ``status u8 | word u16``
=====  ==============  ==================================================

Status codes: 0 OK, 1 TAG_NOT_FOUND, 2 MEMORY_OVERRUN.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Optional, Tuple, Union

from ..errors import BadMagic, MalformedPayload, Truncated, UnknownMessageType, UnsupportedVersion

MAGIC = 0xAF1D
VERSION = 1
HEADER = struct.Struct(">HBBI")
HEADER_SIZE = HEADER.size  # 8
EPC_BYTES = 12
_ENTRY = struct.Struct(">12shBQ")
_WRITE_REQ = struct.Struct(">12sBHH")
_READ_REQ = struct.Struct(">12sBH")
_READ_RESP = struct.Struct(">BH")


class MsgType(enum.IntEnum):
    INVENTORY_REQ = 0x01
    TAG_REPORT = 0x02
    WRITE_REQ = 0x03
    WRITE_RESP = 0x04
    READ_REQ = 0x05
    READ_RESP = 0x06


class Status(enum.IntEnum):
    OK = 0
    TAG_NOT_FOUND = 1
    MEMORY_OVERRUN = 2


def _check(value: int, bits: int, name: str, signed: bool = False) -> None:
    lo, hi = (-(1 << (bits - 1)), (1 << (bits - 1)) - 1) if signed else (0, (1 << bits) - 1)
    if not lo <= value <= hi:
        raise ValueError(f"{name}={value} does not fit in {'i' if signed else 'u'}{bits}")


def _epc_bytes(epc: int) -> bytes:
    _check(epc, 96, "epc")
    return epc.to_bytes(EPC_BYTES, "big")


@dataclass(frozen=True)
class InventoryRequest:
    antenna: Optional[int] = None

    def __post_init__(self):
        if self.antenna is not None:
            _check(self.antenna, 8, "antenna")


@dataclass(frozen=True)
class TagReportEntry:
    epc: int
    rssi_cdbm: int  # hundredths of a dBm
    antenna: int
    timestamp_us: int

    def __post_init__(self):
        _check(self.epc, 96, "epc")
        _check(self.rssi_cdbm, 16, "rssi_cdbm", signed=True)
        _check(self.antenna, 8, "antenna")
        _check(self.timestamp_us, 64, "timestamp_us")

    @property
    def rssi(self) -> float:
        return self.rssi_cdbm / 100.0


@dataclass(frozen=True)
class TagReport:
    entries: Tuple[TagReportEntry, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        _check(len(self.entries), 16, "count")


@dataclass(frozen=True)
class WriteRequest:
    epc: int
    bank: int
    wordptr: int
    word: int

    def __post_init__(self):
        _check(self.epc, 96, "epc")
        _check(self.bank, 8, "bank")
        _check(self.wordptr, 16, "wordptr")
        _check(self.word, 16, "word")


@dataclass(frozen=True)
class WriteResponse:
    status: Status

    def __post_init__(self):
        object.__setattr__(self, "status", Status(self.status))


@dataclass(frozen=True)
class ReadRequest:
    epc: int
    bank: int
    wordptr: int

    def __post_init__(self):
        _check(self.epc, 96, "epc")
        _check(self.bank, 8, "bank")
        _check(self.wordptr, 16, "wordptr")


@dataclass(frozen=True)
class ReadResponse:
    status: Status
    word: int = 0

    def __post_init__(self):
        object.__setattr__(self, "status", Status(self.status))
        _check(self.word, 16, "word")


Message = Union[InventoryRequest, TagReport, WriteRequest, WriteResponse, ReadRequest, ReadResponse]

_TYPES = {InventoryRequest: MsgType.INVENTORY_REQ, TagReport: MsgType.TAG_REPORT,
          WriteRequest: MsgType.WRITE_REQ, WriteResponse: MsgType.WRITE_RESP,
          ReadRequest: MsgType.READ_REQ, ReadResponse: MsgType.READ_RESP}


def _payload(msg: Message) -> bytes:
    if isinstance(msg, InventoryRequest):
        return b"" if msg.antenna is None else bytes([msg.antenna])
    if isinstance(msg, TagReport):
        parts = [struct.pack(">H", len(msg.entries))]
        parts += [_ENTRY.pack(_epc_bytes(e.epc), e.rssi_cdbm, e.antenna, e.timestamp_us) for e in msg.entries]
        return b"".join(parts)
    if isinstance(msg, WriteRequest):
        return _WRITE_REQ.pack(_epc_bytes(msg.epc), msg.bank, msg.wordptr, msg.word)
    if isinstance(msg, WriteResponse):
        return bytes([int(msg.status)])
    if isinstance(msg, ReadRequest):
        return _READ_REQ.pack(_epc_bytes(msg.epc), msg.bank, msg.wordptr)
    if isinstance(msg, ReadResponse):
        return _READ_RESP.pack(int(msg.status), msg.word)
    raise TypeError(f"not a protocol message: {type(msg).__name__}")


def encode_message(msg: Message) -> bytes:
    payload = _payload(msg)
    return HEADER.pack(MAGIC, VERSION, _TYPES[type(msg)], len(payload)) + payload


def parse_header(buf: bytes) -> Tuple[MsgType, int]:
    """Validate an 8-byte header; returns (type, payload length)."""
    if len(buf) < HEADER_SIZE:
        raise Truncated(f"header needs {HEADER_SIZE} bytes, got {len(buf)}")
    magic, version, mtype, length = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagic(f"bad magic 0x{magic:04x}")
    if version != VERSION:
        raise UnsupportedVersion(f"protocol version {version} not supported")
    try:
        return MsgType(mtype), length
    except ValueError:
        raise UnknownMessageType(f"unknown message type 0x{mtype:02x}") from None


def _status(value: int) -> Status:
    try:
        return Status(value)
    except ValueError:
        raise MalformedPayload(f"unknown status code {value}") from None


def _need(payload: bytes, size: int, what: str) -> None:
    if len(payload) < size:
        raise Truncated(f"{what} payload needs {size} bytes, got {len(payload)}")
    if len(payload) > size:
        raise MalformedPayload(f"{what} payload has {len(payload) - size} trailing bytes")


def decode_payload(mtype: MsgType, payload: bytes) -> Message:
    if mtype is MsgType.INVENTORY_REQ:
        if len(payload) > 1:
            raise MalformedPayload("INVENTORY_REQ payload is at most 1 byte")
        return InventoryRequest(payload[0] if payload else None)
    if mtype is MsgType.TAG_REPORT:
        if len(payload) < 2:
            raise Truncated("TAG_REPORT payload lacks its count")
        (count,) = struct.unpack_from(">H", payload)
        _need(payload, 2 + count * _ENTRY.size, "TAG_REPORT")
        entries = []
        for i in range(count):
            epc, rssi, antenna, ts = _ENTRY.unpack_from(payload, 2 + i * _ENTRY.size)
            entries.append(TagReportEntry(int.from_bytes(epc, "big"), rssi, antenna, ts))
        return TagReport(tuple(entries))
    if mtype is MsgType.WRITE_REQ:
        _need(payload, _WRITE_REQ.size, "WRITE_REQ")
        epc, bank, ptr, word = _WRITE_REQ.unpack(payload)
        return WriteRequest(int.from_bytes(epc, "big"), bank, ptr, word)
    if mtype is MsgType.WRITE_RESP:
        _need(payload, 1, "WRITE_RESP")
        return WriteResponse(_status(payload[0]))
    if mtype is MsgType.READ_REQ:
        _need(payload, _READ_REQ.size, "READ_REQ")
        epc, bank, ptr = _READ_REQ.unpack(payload)
        return ReadRequest(int.from_bytes(epc, "big"), bank, ptr)
    _need(payload, _READ_RESP.size, "READ_RESP")
    status, word = _READ_RESP.unpack(payload)
    return ReadResponse(_status(status), word)


def decode_message(buf: bytes) -> Message:
    """Decode exactly one frame; any malformation raises a ProtocolError subclass."""
    buf = bytes(buf)
    mtype, length = parse_header(buf)
    body = buf[HEADER_SIZE:]
    if len(body) < length:
        raise Truncated(f"payload declares {length} bytes, {len(body)} present")
    if len(body) > length:
        raise MalformedPayload(f"{len(body) - length} bytes after the frame")
    return decode_payload(mtype, body)
