"""Minimal MQTT 3.1.1 client session over TCP.

Implements the subset the twin bus needs: CONNECT with optional credentials,
QoS-1 publish (at-least-once to the broker), subscribe with wildcard filters,
and automatic reconnect-plus-resubscribe after a dropped connection. Handlers
run on a dedicated dispatch thread, one message at a time, in arrival order.

Packet framing helpers live here and are shared with the in-process loopback
broker used by tests and demos.
"""

from __future__ import annotations

import logging
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass

from .bus import (
    BrokerConnectionError,
    CredentialError,
    MessageHandler,
    SessionError,
    filter_matches,
    validate_filter,
    validate_topic,
)

log = logging.getLogger(__name__)

CONNECT = 1
CONNACK = 2
PUBLISH = 3
PUBACK = 4
SUBSCRIBE = 8
SUBACK = 9
UNSUBSCRIBE = 10
UNSUBACK = 11
PINGREQ = 12
PINGRESP = 13
DISCONNECT = 14

CONNACK_ACCEPTED = 0
CONNACK_BAD_CREDENTIALS = 4
CONNACK_NOT_AUTHORIZED = 5

MAX_RETRIES = 3
BACKOFF_BASE = 0.25  # s, doubles per retry
BACKOFF_CAP = 10.0  # s
ACK_TIMEOUT = 30.0  # s


def encode_string(s: str) -> bytes:
    data = s.encode("utf-8")
    return struct.pack(">H", len(data)) + data


def encode_varint(n: int) -> bytes:
    out = bytearray()
    while True:
        byte = n % 128
        n //= 128
        if n:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def encode_packet(ptype: int, flags: int, body: bytes) -> bytes:
    return bytes([(ptype << 4) | flags]) + encode_varint(len(body)) + body


class WireClosed(Exception):
    """Peer closed the connection."""


def read_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise WireClosed()
        buf.extend(chunk)
    return bytes(buf)


def read_packet(sock: socket.socket) -> tuple[int, int, bytes]:
    """Read one packet: (type, flags, body)."""
    head = read_exact(sock, 1)[0]
    length = 0
    shift = 0
    for _ in range(4):
        byte = read_exact(sock, 1)[0]
        length |= (byte & 0x7F) << shift
        if not byte & 0x80:
            break
        shift += 7
    else:
        raise ValueError("bad remaining-length varint")
    body = read_exact(sock, length) if length else b""
    return head >> 4, head & 0x0F, body


def parse_string(body: bytes, at: int) -> tuple[str, int]:
    (n,) = struct.unpack_from(">H", body, at)
    end = at + 2 + n
    return body[at + 2 : end].decode("utf-8"), end


def connect_packet(client_id: str, credentials: tuple[str, str] | None, keepalive: int = 0) -> bytes:
    flags = 0x02  # clean session
    if credentials is not None:
        flags |= 0x80 | 0x40
    body = encode_string("MQTT") + bytes([4, flags]) + struct.pack(">H", keepalive)
    body += encode_string(client_id)
    if credentials is not None:
        body += encode_string(credentials[0]) + encode_string(credentials[1])
    return encode_packet(CONNECT, 0, body)


def publish_packet(topic: str, payload: bytes, qos: int, packet_id: int | None) -> bytes:
    body = encode_string(topic)
    if qos > 0:
        assert packet_id is not None
        body += struct.pack(">H", packet_id)
    return encode_packet(PUBLISH, qos << 1, body + payload)


def parse_publish(flags: int, body: bytes) -> tuple[str, bytes, int, int | None]:
    """Returns (topic, payload, qos, packet_id)."""
    qos = (flags >> 1) & 0x03
    topic, at = parse_string(body, 0)
    packet_id = None
    if qos > 0:
        (packet_id,) = struct.unpack_from(">H", body, at)
        at += 2
    return topic, body[at:], qos, packet_id


@dataclass
class _Sub:
    filter: str
    handler: MessageHandler


def _open_socket(host: str, port: int, timeout: float) -> socket.socket:
    sock = socket.create_connection((host, port), timeout=timeout)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return sock


def _handshake(
    host: str, port: int, client_id: str, credentials: tuple[str, str] | None, timeout: float
) -> socket.socket:
    """One CONNECT/CONNACK exchange; CredentialError is never retried."""
    sock = _open_socket(host, port, timeout)
    try:
        sock.sendall(connect_packet(client_id, credentials))
        ptype, _, body = read_packet(sock)
        if ptype != CONNACK or len(body) < 2:
            raise BrokerConnectionError(f"expected CONNACK from {host}:{port}")
        rc = body[1]
        if rc in (CONNACK_BAD_CREDENTIALS, CONNACK_NOT_AUTHORIZED):
            raise CredentialError(f"broker rejected credentials (rc={rc})")
        if rc != CONNACK_ACCEPTED:
            raise BrokerConnectionError(f"broker refused connection (rc={rc})")
        sock.settimeout(None)
        return sock
    except Exception:
        sock.close()
        raise


class MqttSession:
    """Live session against an MQTT 3.1.1 broker. Use via connect()."""

    def __init__(
        self,
        host: str,
        port: int,
        client_id: str,
        credentials: tuple[str, str] | None,
        sock: socket.socket,
        *,
        retries: int = MAX_RETRIES,
        ack_timeout: float = ACK_TIMEOUT,
    ):
        self._host = host
        self._port = port
        self._client_id = client_id
        self._credentials = credentials
        self._retries = retries
        self._ack_timeout = ack_timeout
        self._sock = sock
        self._wlock = threading.Lock()
        self._subs: list[_Sub] = []
        self._subs_lock = threading.Lock()
        self._acks: dict[int, threading.Event] = {}
        self._acks_lock = threading.Lock()
        self._next_id = 0
        self._closed = False
        self._dead = False
        self._inbox: queue.Queue[tuple[str, bytes] | None] = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True, name="mqtt-reader")
        self._dispatcher = threading.Thread(
            target=self._dispatch_loop, daemon=True, name="mqtt-dispatch"
        )
        self._reader.start()
        self._dispatcher.start()

    # -- public API ---------------------------------------------------------

    def publish(self, topic: str, payload: bytes) -> None:
        """QoS-1 publish; blocks until the broker acknowledges."""
        validate_topic(topic)
        self._ensure_live()
        packet_id = self._alloc_id()
        event = threading.Event()
        with self._acks_lock:
            self._acks[packet_id] = event
        try:
            self._send(publish_packet(topic, payload, qos=1, packet_id=packet_id))
            if not event.wait(self._ack_timeout):
                raise SessionError(f"no PUBACK for publish on {topic!r}")
        finally:
            with self._acks_lock:
                self._acks.pop(packet_id, None)

    def subscribe(self, topic_filter: str, handler: MessageHandler) -> None:
        validate_filter(topic_filter)
        self._ensure_live()
        packet_id = self._alloc_id()
        event = threading.Event()
        # Register before the SUBACK round trip so a message routed
        # immediately after the broker processes SUBSCRIBE is not dropped.
        sub = _Sub(topic_filter, handler)
        with self._subs_lock:
            self._subs.append(sub)
        with self._acks_lock:
            self._acks[packet_id] = event
        try:
            self._send(self._subscribe_packet(topic_filter, packet_id))
            if not event.wait(self._ack_timeout):
                raise SessionError(f"no SUBACK for filter {topic_filter!r}")
        except BaseException:
            with self._subs_lock:
                if sub in self._subs:
                    self._subs.remove(sub)
            raise
        finally:
            with self._acks_lock:
                self._acks.pop(packet_id, None)

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self._send(encode_packet(DISCONNECT, 0, b""))
        except Exception:
            pass
        try:
            self._sock.shutdown(socket.SHUT_RDWR)  # unblock the reader thread
        except OSError:
            pass
        try:
            self._sock.close()
        except OSError:
            pass
        self._inbox.put(None)

    @property
    def closed(self) -> bool:
        return self._closed

    # -- internals ----------------------------------------------------------

    def _ensure_live(self) -> None:
        if self._closed:
            raise SessionError("session is closed")
        if self._dead:
            raise SessionError("session lost its connection and reconnects failed")

    def _alloc_id(self) -> int:
        with self._acks_lock:
            self._next_id = self._next_id % 65535 + 1
            return self._next_id

    @staticmethod
    def _subscribe_packet(topic_filter: str, packet_id: int) -> bytes:
        body = struct.pack(">H", packet_id) + encode_string(topic_filter) + bytes([1])
        return encode_packet(SUBSCRIBE, 0x02, body)

    def _send(self, data: bytes) -> None:
        with self._wlock:
            try:
                self._sock.sendall(data)
            except OSError as exc:
                raise SessionError(f"send failed: {exc}") from exc

    def _read_loop(self) -> None:
        while not self._closed:
            try:
                ptype, flags, body = read_packet(self._sock)
            except (WireClosed, OSError, ValueError):
                if self._closed or not self._reconnect():
                    break
                continue
            if ptype == PUBLISH:
                topic, payload, qos, packet_id = parse_publish(flags, body)
                if qos > 0 and packet_id is not None:
                    try:
                        self._send(encode_packet(PUBACK, 0, struct.pack(">H", packet_id)))
                    except SessionError:
                        pass
                self._inbox.put((topic, payload))
            elif ptype in (PUBACK, SUBACK, UNSUBACK) and len(body) >= 2:
                (packet_id,) = struct.unpack_from(">H", body, 0)
                with self._acks_lock:
                    event = self._acks.get(packet_id)
                if event is not None:
                    event.set()
            elif ptype == PINGREQ:
                try:
                    self._send(encode_packet(PINGRESP, 0, b""))
                except SessionError:
                    pass
            # anything else is ignored
        self._inbox.put(None)

    def _reconnect(self) -> bool:
        """Bounded-backoff reconnect, then re-subscribe; True on success."""
        delay = BACKOFF_BASE
        for attempt in range(self._retries + 1):
            if self._closed:
                return False
            if attempt:
                time.sleep(min(delay, BACKOFF_CAP))
                delay *= 2
            try:
                sock = _handshake(
                    self._host, self._port, self._client_id, self._credentials, timeout=5.0
                )
            except CredentialError:
                log.error("reconnect rejected by broker credentials; giving up")
                break
            except Exception as exc:
                log.warning("reconnect attempt %d failed: %s", attempt + 1, exc)
                continue
            with self._wlock:
                self._sock = sock
            with self._subs_lock:
                filters = [s.filter for s in self._subs]
            try:
                for filt in filters:
                    packet_id = self._alloc_id()
                    self._send(self._subscribe_packet(filt, packet_id))
                log.info("reconnected to %s:%d, %d filter(s) restored", self._host, self._port, len(filters))
                return True
            except SessionError:
                continue
        self._dead = True
        return False

    def _dispatch_loop(self) -> None:
        while True:
            item = self._inbox.get()
            if item is None:
                return
            topic, payload = item
            with self._subs_lock:
                targets = [s.handler for s in self._subs if filter_matches(s.filter, topic)]
            for handler in targets:
                try:
                    handler(topic, payload)
                except Exception:
                    log.exception("message handler failed on topic %r", topic)


def connect(
    host: str,
    port: int,
    client_id: str,
    credentials: tuple[str, str] | None = None,
    *,
    retries: int = MAX_RETRIES,
    timeout: float = 5.0,
) -> MqttSession:
    """Connect with exponential backoff: initial attempt plus ``retries``.

    Raises CredentialError immediately (no retries) when the broker rejects
    the credentials, BrokerConnectionError once attempts are exhausted.
    """
    delay = BACKOFF_BASE
    last: Exception | None = None
    for attempt in range(retries + 1):
        if attempt:
            time.sleep(min(delay, BACKOFF_CAP))
            delay *= 2
        try:
            sock = _handshake(host, port, client_id, credentials, timeout)
            return MqttSession(host, port, client_id, credentials, sock, retries=retries)
        except CredentialError:
            raise
        except (OSError, BrokerConnectionError, WireClosed) as exc:
            last = exc
            log.warning("connect attempt %d to %s:%d failed: %s", attempt + 1, host, port, exc)
    raise BrokerConnectionError(f"cannot reach broker at {host}:{port}: {last}")
