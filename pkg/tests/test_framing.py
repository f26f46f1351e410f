import socket
import struct
import threading

import pytest

from textpipe import framing


def socket_pair():
    a, b = socket.socketpair()
    return a, b


class TestEncoding:
    def test_round_trip(self):
        a, b = socket_pair()
        try:
            framing.send_frame(a, framing.RESULT, {"job": "j1", "results": {"café": 1}})
            kind, body = framing.recv_frame(b)
            assert kind == framing.RESULT
            assert body == {"job": "j1", "results": {"café": 1}}
        finally:
            a.close()
            b.close()

    def test_length_prefix_is_big_endian(self):
        frame = framing.encode_frame(framing.HEARTBEAT, {})
        (length,) = struct.unpack("!I", frame[:4])
        assert length == len(frame) - 4

    def test_unknown_kind_rejected(self):
        with pytest.raises(framing.FrameError):
            framing.encode_frame("NOPE", {})
        with pytest.raises(framing.FrameError):
            framing.decode_payload(b'{"kind": "NOPE", "body": {}}')

    def test_announced_oversize_rejected(self):
        a, b = socket_pair()
        try:
            a.sendall(struct.pack("!I", framing.MAX_FRAME + 1))
            with pytest.raises(framing.FrameError):
                framing.recv_frame(b)
        finally:
            a.close()
            b.close()

    def test_bad_json_rejected(self):
        with pytest.raises(framing.FrameError):
            framing.decode_payload(b"not json")

    def test_body_must_be_map(self):
        with pytest.raises(framing.FrameError):
            framing.decode_payload(b'{"kind": "JOB", "body": []}')

    def test_connection_closed(self):
        a, b = socket_pair()
        a.close()
        try:
            with pytest.raises(framing.ConnectionClosed):
                framing.recv_frame(b)
        finally:
            b.close()


class TestChunkedDelivery:
    def test_frame_split_across_many_sends(self):
        a, b = socket_pair()
        try:
            frame = framing.encode_frame(
                framing.JOB, {"job": "x" * 500, "data": {"k": "v" * 300}}
            )

            def dribble():
                for i in range(0, len(frame), 7):
                    a.sendall(frame[i : i + 7])

            writer = threading.Thread(target=dribble)
            writer.start()
            kind, body = framing.recv_frame(b)
            writer.join()
            assert kind == framing.JOB
            assert body["job"] == "x" * 500
        finally:
            a.close()
            b.close()

    def test_poll_frame_times_out_quietly(self):
        a, b = socket_pair()
        try:
            b.settimeout(0.05)
            assert framing.poll_frame(b) is None
            framing.send_frame(a, framing.HEARTBEAT, {})
            got = None
            while got is None:
                got = framing.poll_frame(b)
            assert got == (framing.HEARTBEAT, {})
        finally:
            a.close()
            b.close()

    def test_poll_frame_not_confused_by_slow_body(self):
        a, b = socket_pair()
        try:
            b.settimeout(0.05)
            frame = framing.encode_frame(framing.RESULT, {"job": "j", "results": {}})

            def slow_send():
                a.sendall(frame[:3])
                threading.Event().wait(0.15)  # longer than the poll timeout
                a.sendall(frame[3:])

            writer = threading.Thread(target=slow_send)
            writer.start()
            got = None
            while got is None:
                got = framing.poll_frame(b)
            writer.join()
            assert got[0] == framing.RESULT
        finally:
            a.close()
            b.close()
