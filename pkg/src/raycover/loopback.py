"""In-process MQTT 3.1.1 loopback broker for tests and demos.

Speaks just enough of the wire protocol for the session client: CONNECT with
optional credential checking, QoS 0/1 PUBLISH routing with wildcard filters,
SUBSCRIBE/UNSUBSCRIBE, PING, DISCONNECT. Not a production broker: no retained
messages, no persistence, no QoS-2.
"""

from __future__ import annotations

import logging
import socket
import struct
import threading

from .bus import filter_matches
from .mqtt_wire import (
    CONNACK,
    CONNACK_ACCEPTED,
    CONNACK_BAD_CREDENTIALS,
    CONNECT,
    DISCONNECT,
    PINGREQ,
    PINGRESP,
    PUBACK,
    PUBLISH,
    SUBACK,
    SUBSCRIBE,
    UNSUBACK,
    UNSUBSCRIBE,
    WireClosed,
    encode_packet,
    parse_publish,
    parse_string,
    publish_packet,
    read_packet,
)

log = logging.getLogger(__name__)


class _Client:
    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.wlock = threading.Lock()
        self.filters: list[str] = []
        self.client_id = ""

    def send(self, data: bytes) -> None:
        with self.wlock:
            self.sock.sendall(data)


class LoopbackBroker:
    """Tiny broker bound to 127.0.0.1; port 0 picks a free port."""

    def __init__(self, port: int = 0, credentials: dict[str, str] | None = None):
        self._requested_port = port
        self.credentials = credentials
        self.host = "127.0.0.1"
        self.port = 0
        self._listener: socket.socket | None = None
        self._clients: list[_Client] = []
        self._lock = threading.Lock()
        self._accepting = False
        self._threads: list[threading.Thread] = []

    def __enter__(self) -> "LoopbackBroker":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    def start(self) -> None:
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self.host, self._requested_port))
        listener.listen(16)
        self._listener = listener
        self.port = listener.getsockname()[1]
        self._accepting = True
        t = threading.Thread(target=self._accept_loop, daemon=True, name="broker-accept")
        t.start()
        self._threads.append(t)

    def stop(self) -> None:
        self._accepting = False
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        self.drop_connections()

    def drop_connections(self) -> None:
        """Hard-close every client socket (used to exercise reconnects)."""
        with self._lock:
            clients = list(self._clients)
            self._clients.clear()
        for client in clients:
            try:
                # shutdown (not just close) so blocked reads on both ends see
                # EOF immediately; close alone keeps the connection alive while
                # this broker's reader thread still sits in recv
                client.sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                client.sock.close()
            except OSError:
                pass

    def connection_count(self) -> int:
        with self._lock:
            return len(self._clients)

    def active_filters(self) -> list[str]:
        """All registered subscription filters (synchronisation aid for tests)."""
        with self._lock:
            return [f for c in self._clients for f in c.filters]

    def _accept_loop(self) -> None:
        assert self._listener is not None
        while self._accepting:
            try:
                sock, _ = self._listener.accept()
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            t = threading.Thread(
                target=self._serve, args=(sock,), daemon=True, name="broker-client"
            )
            t.start()
            self._threads.append(t)

    def _check_credentials(self, flags: int, body: bytes, at: int) -> bool:
        username = password = None
        if flags & 0x80:
            username, at = parse_string(body, at)
        if flags & 0x40:
            password, at = parse_string(body, at)
        if self.credentials is None:
            return True
        return username is not None and self.credentials.get(username) == password

    def _serve(self, sock: socket.socket) -> None:
        client = _Client(sock)
        try:
            ptype, _, body = read_packet(sock)
            if ptype != CONNECT:
                sock.close()
                return
            # variable header: "MQTT", level, flags, keepalive; then client id
            _, at = parse_string(body, 0)
            connect_flags = body[at + 1]
            at += 4
            client.client_id, at = parse_string(body, at)
            if connect_flags & 0x04:  # will message: topic + payload
                _, at = parse_string(body, at)
                _, at = parse_string(body, at)
            ok = self._check_credentials(connect_flags, body, at)
            rc = CONNACK_ACCEPTED if ok else CONNACK_BAD_CREDENTIALS
            client.send(encode_packet(CONNACK, 0, bytes([0, rc])))
            if not ok:
                sock.close()
                return
            with self._lock:
                self._clients.append(client)
            self._packet_loop(client)
        except (WireClosed, OSError, ValueError, IndexError, struct.error):
            pass
        finally:
            with self._lock:
                if client in self._clients:
                    self._clients.remove(client)
            try:
                sock.close()
            except OSError:
                pass

    def _packet_loop(self, client: _Client) -> None:
        while True:
            ptype, flags, body = read_packet(client.sock)
            if ptype == PUBLISH:
                topic, payload, qos, packet_id = parse_publish(flags, body)
                if qos > 0 and packet_id is not None:
                    client.send(encode_packet(PUBACK, 0, struct.pack(">H", packet_id)))
                self._route(topic, payload)
            elif ptype == SUBSCRIBE:
                (packet_id,) = struct.unpack_from(">H", body, 0)
                at = 2
                codes = bytearray()
                while at < len(body):
                    filt, at = parse_string(body, at)
                    at += 1  # requested qos
                    if filt not in client.filters:
                        client.filters.append(filt)
                    codes.append(0)
                client.send(encode_packet(SUBACK, 0, struct.pack(">H", packet_id) + bytes(codes)))
            elif ptype == UNSUBSCRIBE:
                (packet_id,) = struct.unpack_from(">H", body, 0)
                at = 2
                while at < len(body):
                    filt, at = parse_string(body, at)
                    if filt in client.filters:
                        client.filters.remove(filt)
                client.send(encode_packet(UNSUBACK, 0, struct.pack(">H", packet_id)))
            elif ptype == PINGREQ:
                client.send(encode_packet(PINGRESP, 0, b""))
            elif ptype == DISCONNECT:
                return

    def _route(self, topic: str, payload: bytes) -> None:
        with self._lock:
            targets = [
                c for c in self._clients if any(filter_matches(f, topic) for f in c.filters)
            ]
        packet = publish_packet(topic, payload, qos=0, packet_id=None)
        for target in targets:
            try:
                target.send(packet)
            except OSError:
                log.debug("dropping undeliverable message to %s", target.client_id)
