"""Length-prefixed JSON frames over TCP.

A frame is a 4-byte big-endian unsigned length followed by exactly that many
bytes of UTF-8 JSON: a single map {"kind": ..., "body": {...}}. Frames above
64 MiB are refused on both send and receive.
"""

from __future__ import annotations

import json
import socket
import struct
from typing import Any

MAX_FRAME = 64 * 1024 * 1024

HELLO = "HELLO"
HELLO_OK = "HELLO_OK"
JOB = "JOB"
RESULT = "RESULT"
ERROR = "ERROR"
HEARTBEAT = "HEARTBEAT"
BYE = "BYE"

FRAME_KINDS = frozenset({HELLO, HELLO_OK, JOB, RESULT, ERROR, HEARTBEAT, BYE})


class FrameError(Exception):
    pass


class ConnectionClosed(Exception):
    pass


def encode_frame(kind: str, body: dict[str, Any]) -> bytes:
    if kind not in FRAME_KINDS:
        raise FrameError(f"unknown frame kind {kind!r}")
    payload = json.dumps(
        {"kind": kind, "body": body}, ensure_ascii=False, separators=(",", ":")
    ).encode("utf-8")
    if len(payload) > MAX_FRAME:
        raise FrameError(f"frame of {len(payload)} bytes exceeds {MAX_FRAME}")
    return struct.pack("!I", len(payload)) + payload


def decode_payload(payload: bytes) -> tuple[str, dict[str, Any]]:
    try:
        message = json.loads(payload.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise FrameError(f"undecodable frame: {exc}") from exc
    if not isinstance(message, dict) or "kind" not in message:
        raise FrameError("frame is not a {kind, body} map")
    kind = message["kind"]
    if kind not in FRAME_KINDS:
        raise FrameError(f"unknown frame kind {kind!r}")
    body = message.get("body", {})
    if not isinstance(body, dict):
        raise FrameError("frame body is not a map")
    return kind, body


def send_frame(sock: socket.socket, kind: str, body: dict[str, Any]) -> None:
    sock.sendall(encode_frame(kind, body))


def recv_exact(sock: socket.socket, length: int) -> bytes:
    chunks = []
    remaining = length
    while remaining > 0:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ConnectionClosed("peer closed the connection")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def recv_frame(sock: socket.socket) -> tuple[str, dict[str, Any]]:
    header = recv_exact(sock, 4)
    (length,) = struct.unpack("!I", header)
    if length > MAX_FRAME:
        raise FrameError(f"announced frame of {length} bytes exceeds {MAX_FRAME}")
    return decode_payload(recv_exact(sock, length))


def poll_frame(sock: socket.socket) -> tuple[str, dict[str, Any]] | None:
    """Wait for one frame under the socket's timeout.

    Returns None if the timeout expires before the frame's first byte.
    Once a frame has started arriving, the rest is read with a long
    timeout so a short polling interval cannot split a frame.
    """
    try:
        first = sock.recv(1)
    except TimeoutError:
        return None
    if not first:
        raise ConnectionClosed("peer closed the connection")
    previous = sock.gettimeout()
    sock.settimeout(120.0)
    try:
        header = first + recv_exact(sock, 3)
        (length,) = struct.unpack("!I", header)
        if length > MAX_FRAME:
            raise FrameError(
                f"announced frame of {length} bytes exceeds {MAX_FRAME}"
            )
        return decode_payload(recv_exact(sock, length))
    finally:
        sock.settimeout(previous)
