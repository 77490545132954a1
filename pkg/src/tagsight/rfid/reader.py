"""Simulated reader: request handling, a TCP service and the client session."""
from __future__ import annotations

import random
import socket
import socketserver
import threading
import time
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import NotATemperatureTag, ProtocolError, ProtocolTimeout, TagNotFound, Truncated
from .channel import ChannelParams, ReadEvent, tag_respond
from .protocol import (HEADER_SIZE, InventoryRequest, Message, ReadRequest, ReadResponse, Status, TagReport,
                       TagReportEntry, WriteRequest, WriteResponse, decode_payload, encode_message, parse_header)
from .sensors import TEMP_BANK, TEMP_WORDPTR, TemperatureReading, decode_temp_word, encode_temp_word
from .tags import TagPopulation, TagRecord

# Valid temperature words are -256..256 quarter-degrees (0xFF00..0xFFFF, 0x0000..0x0100).
# Trigger words are drawn outside that set so an untouched word cannot pass for a reading.
_TRIGGER_LO = 0x0101
_TRIGGER_HI = 0xFEFF


def _now_us() -> int:
    return time.time_ns() // 1000


class SimulatedReader:
    """In-memory reader answering protocol messages against a tag population.

    Antennas sit at ``antennas[i]`` (reader frame). Memory access needs the
    tag to be powered, i.e. to answer an inventory from at least one antenna.
    """

    def __init__(self, population: TagPopulation, channel: ChannelParams = ChannelParams(),
                 antennas: Sequence[Sequence[float]] = ((0.0, 0.0, 0.0),),
                 clock: Callable[[], int] = _now_us):
        if not antennas:
            raise ValueError("a reader needs at least one antenna")
        self.population = population
        self.channel = channel
        self.antennas = [np.asarray(a, dtype=np.float64).reshape(3) for a in antennas]
        self.clock = clock
        self._last_ts: Dict[int, int] = {}

    def _stamp(self, antenna: int) -> int:
        # timestamps never go backwards on one antenna
        ts = max(int(self.clock()), self._last_ts.get(antenna, -1) + 1)
        self._last_ts[antenna] = ts
        return ts

    def _respond(self, tag: TagRecord, antenna: int, now: int) -> Optional[ReadEvent]:
        d = float(np.linalg.norm(tag.position - self.antennas[antenna]))
        return tag_respond(tag, max(d, 1e-6), self.channel, now, antenna)

    def inventory(self, antenna: Optional[int] = None) -> List[ReadEvent]:
        ants = range(len(self.antennas)) if antenna is None else [antenna]
        events = []
        with self.population.lock:
            for a in ants:
                if not 0 <= a < len(self.antennas):
                    continue
                now = self._stamp(a)
                for tag in self.population:
                    ev = self._respond(tag, a, now)
                    if ev is not None:
                        events.append(ev)
        return events

    def _powered(self, tag: TagRecord) -> bool:
        return any(self._respond(tag, a, 0) is not None for a in range(len(self.antennas)))

    def _access(self, epc: int, bank: int, wordptr: int) -> Tuple[Status, Optional[TagRecord]]:
        tag = self.population.get(epc)
        if tag is None or not self._powered(tag):
            return Status.TAG_NOT_FOUND, None
        if bank > 3 or wordptr >= len(tag.memory_banks[bank]):
            return Status.MEMORY_OVERRUN, None
        return Status.OK, tag

    def handle(self, msg: Message) -> Message:
        if isinstance(msg, InventoryRequest):
            entries = [TagReportEntry(e.epc, int(round(e.rssi * 100)), e.antenna_id, e.timestamp)
                       for e in self.inventory(msg.antenna)]
            return TagReport(tuple(entries))
        if isinstance(msg, WriteRequest):
            with self.population.lock:
                status, tag = self._access(msg.epc, msg.bank, msg.wordptr)
                if tag is not None:
                    word = msg.word
                    if tag.has_temperature_ic and msg.bank == TEMP_BANK and msg.wordptr == TEMP_WORDPTR:
                        # any write to this word makes the IC sample and store its temperature
                        word = encode_temp_word(tag.ambient_celsius)
                    tag.memory_banks[msg.bank][msg.wordptr] = word
            return WriteResponse(status)
        if isinstance(msg, ReadRequest):
            with self.population.lock:
                status, tag = self._access(msg.epc, msg.bank, msg.wordptr)
                word = tag.memory_banks[msg.bank][msg.wordptr] if tag is not None else 0
            return ReadResponse(status, word)
        raise ProtocolError(f"reader cannot handle {type(msg).__name__}")


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    while n:
        chunk = sock.recv(n)
        if not chunk:
            raise Truncated("connection closed mid-frame")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> Message:
    header = _recv_exact(sock, HEADER_SIZE)
    mtype, length = parse_header(header)
    return decode_payload(mtype, _recv_exact(sock, length) if length else b"")


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        reader: SimulatedReader = self.server.reader
        while True:
            try:
                msg = read_frame(self.request)
            except (Truncated, ConnectionError, OSError):
                return
            except ProtocolError:
                # cannot resynchronise after a bad frame; drop the session
                return
            try:
                reply = reader.handle(msg)
            except ProtocolError:
                return
            self.request.sendall(encode_message(reply))


class ReaderService(socketserver.ThreadingTCPServer):
    """TCP front end; one session per connection, population access serialised."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, reader: SimulatedReader, address: Tuple[str, int] = ("127.0.0.1", 0)):
        self.reader = reader
        super().__init__(address, _Handler)

    @property
    def endpoint(self) -> Tuple[str, int]:
        return self.server_address[0], self.server_address[1]

    def start(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, name="reader-service", daemon=True)
        t.start()
        return t


class ReaderSession:
    """Client side of the protocol over TCP, or directly against an in-process reader."""

    def __init__(self, sock: Optional[socket.socket] = None, local: Optional[SimulatedReader] = None):
        if (sock is None) == (local is None):
            raise ValueError("give exactly one of sock or local")
        self._sock = sock
        self._local = local
        self._lock = threading.Lock()

    @classmethod
    def connect(cls, host: str, port: int, timeout: float = 2.0) -> "ReaderSession":
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
        except socket.timeout as exc:
            raise ProtocolTimeout(f"connect to {host}:{port} timed out") from exc
        sock.settimeout(timeout)
        return cls(sock=sock)

    @classmethod
    def in_process(cls, reader: SimulatedReader) -> "ReaderSession":
        return cls(local=reader)

    def request(self, msg: Message) -> Message:
        if self._local is not None:
            return self._local.handle(msg)
        with self._lock:
            try:
                self._sock.sendall(encode_message(msg))
                return read_frame(self._sock)
            except socket.timeout as exc:
                raise ProtocolTimeout("reader did not answer in time") from exc

    def inventory(self, antenna: Optional[int] = None) -> List[ReadEvent]:
        reply = self.request(InventoryRequest(antenna))
        if not isinstance(reply, TagReport):
            raise ProtocolError(f"expected TAG_REPORT, got {type(reply).__name__}")
        return [ReadEvent(e.epc, e.rssi, e.antenna, e.timestamp_us) for e in reply.entries]

    def write(self, epc: int, bank: int, wordptr: int, word: int) -> Status:
        reply = self.request(WriteRequest(epc, bank, wordptr, word))
        if not isinstance(reply, WriteResponse):
            raise ProtocolError(f"expected WRITE_RESP, got {type(reply).__name__}")
        return reply.status

    def read(self, epc: int, bank: int, wordptr: int) -> Tuple[Status, int]:
        reply = self.request(ReadRequest(epc, bank, wordptr))
        if not isinstance(reply, ReadResponse):
            raise ProtocolError(f"expected READ_RESP, got {type(reply).__name__}")
        return reply.status, reply.word

    def close(self) -> None:
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def trigger_temperature(session: ReaderSession, epc: int, rng: Optional[random.Random] = None,
                        clock: Callable[[], int] = _now_us) -> TemperatureReading:
    """Write a random word to user word 256, read it back and decode the sampled temperature."""
    rng = rng or random.Random()
    trigger = rng.randint(_TRIGGER_LO, _TRIGGER_HI)
    status = session.write(epc, TEMP_BANK, TEMP_WORDPTR, trigger)
    if status is Status.TAG_NOT_FOUND:
        raise TagNotFound(f"tag {epc:024x} is not in the field")
    if status is Status.MEMORY_OVERRUN:
        raise NotATemperatureTag(f"tag {epc:024x} has no user word {TEMP_WORDPTR}")
    status, word = session.read(epc, TEMP_BANK, TEMP_WORDPTR)
    if status is Status.TAG_NOT_FOUND:
        raise TagNotFound(f"tag {epc:024x} left the field")
    if status is not Status.OK or word == trigger:
        raise NotATemperatureTag(f"tag {epc:024x} did not replace the trigger word")
    return TemperatureReading(decode_temp_word(word), epc, int(clock()))
