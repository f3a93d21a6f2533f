"""Client for external summarizer oracles speaking the wire protocol.

Transport is newline-delimited JSON over a child process's stdio or a TCP
socket.  The client performs the hello handshake, lazily sends `load` for
each video (the server reads the files itself, so per-video file paths must
be registered first), and attaches fragment boundaries to the first score
request per video.  Requests carry monotonically increasing ids and replies
are matched by id, so results do not depend on completion order; callers may
invoke the oracle from multiple threads.
"""
from __future__ import annotations

import json
import shlex
import socket
import subprocess
import threading
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .oracle import Oracle, OracleCapabilities, OracleError
from .types import VideoBundle

PROTOCOL_VERSION = 1


@dataclass(frozen=True)
class VideoPaths:
    features_path: str
    frames_path: Optional[str] = None
    segmentation_path: Optional[str] = None


class ExternalOracle(Oracle):
    def __init__(self, reader, writer, on_close=None):
        self._reader = reader
        self._writer = writer
        self._on_close = on_close
        self._lock = threading.Lock()
        self._next_id = 0
        self._pending: dict[int, dict] = {}
        self._paths: dict[str, VideoPaths] = {}
        self._loaded: set[str] = set()
        self._fragments_sent: set[str] = set()
        self.capabilities = self._handshake()

    @classmethod
    def spawn(cls, command: str) -> "ExternalOracle":
        """Start the oracle server as a child process on stdio."""
        proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )

        def on_close():
            try:
                proc.stdin.close()
            except OSError:
                pass
            try:
                proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()
            proc.stdout.close()

        try:
            return cls(proc.stdout, proc.stdin, on_close)
        except BaseException:
            on_close()
            raise

    @classmethod
    def connect(cls, address: str) -> "ExternalOracle":
        """Connect to an oracle server on host:port."""
        host, _, port = address.rpartition(":")
        if not host or not port.isdigit():
            raise OracleError(f"bad TCP address {address!r}, expected host:port")
        sock = socket.create_connection((host, int(port)))
        reader = sock.makefile("r", encoding="utf-8")
        writer = sock.makefile("w", encoding="utf-8")

        def on_close():
            try:
                reader.close()
                writer.close()
                sock.close()
            except OSError:
                pass

        try:
            return cls(reader, writer, on_close)
        except BaseException:
            on_close()
            raise

    def register_video(
        self,
        video_id: str,
        features_path: str,
        frames_path: Optional[str] = None,
        segmentation_path: Optional[str] = None,
    ) -> None:
        self._paths[video_id] = VideoPaths(str(features_path),
                                           str(frames_path) if frames_path else None,
                                           str(segmentation_path) if segmentation_path else None)

    def close(self) -> None:
        if self._on_close is not None:
            self._on_close()
            self._on_close = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- protocol plumbing ------------------------------------------------

    def _send(self, payload: dict) -> None:
        try:
            self._writer.write(json.dumps(payload) + "\n")
            self._writer.flush()
        except (BrokenPipeError, ValueError, OSError) as exc:
            raise OracleError(f"oracle connection lost while sending: {exc}") from None

    def _read_reply(self, want_id: int) -> dict:
        if want_id in self._pending:
            return self._pending.pop(want_id)
        while True:
            line = self._reader.readline()
            if line == "":
                raise OracleError("oracle closed the connection")
            line = line.strip()
            if not line:
                continue
            try:
                msg = json.loads(line)
            except json.JSONDecodeError:
                raise OracleError(f"oracle sent invalid JSON: {line[:200]}") from None
            got = msg.get("id")
            if got == want_id:
                return msg
            if got is None:
                raise OracleError(f"oracle error: {msg.get('message', 'unidentified failure')}")
            self._pending[got] = msg

    def _request(self, payload: dict) -> dict:
        rid = self._next_id
        self._next_id += 1
        payload["id"] = rid
        self._send(payload)
        reply = self._read_reply(rid)
        if reply.get("op") == "error":
            raise OracleError(f"oracle error: {reply.get('message', 'unknown')}")
        return reply

    def _handshake(self) -> OracleCapabilities:
        self._send({"op": "hello", "proto": PROTOCOL_VERSION})
        line = self._reader.readline()
        if line == "":
            raise OracleError("oracle closed the connection during handshake")
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            raise OracleError(f"bad handshake line: {line[:200]}") from None
        if msg.get("op") != "hello" or msg.get("proto") != PROTOCOL_VERSION:
            raise OracleError(f"unsupported handshake reply: {msg}")
        caps = msg.get("caps", {})
        return OracleCapabilities(
            supports_fragment_masks=bool(caps.get("fragment_masks", False)),
            supports_object_masks=bool(caps.get("object_masks", False)),
            supports_attention=bool(caps.get("attention", False)),
            batch_limit=int(caps.get("batch_limit", 1)),
        )

    def _ensure_loaded(self, bundle: VideoBundle) -> None:
        if bundle.video_id in self._loaded:
            return
        paths = self._paths.get(bundle.video_id)
        if paths is None:
            raise OracleError(
                f"no file paths registered for video {bundle.video_id!r}; "
                "external oracles load videos from disk"
            )
        self._request(
            {
                "op": "load",
                "video_id": bundle.video_id,
                "features_path": paths.features_path,
                "frames_path": paths.frames_path,
                "segmentation_path": paths.segmentation_path,
            }
        )
        self._loaded.add(bundle.video_id)

    # -- Oracle interface --------------------------------------------------

    def _score_batch(self, bundle, specs):
        out = np.empty((len(specs), bundle.n_frames))
        with self._lock:
            self._ensure_loaded(bundle)
            for row, spec in enumerate(specs):
                payload = {
                    "op": "score",
                    "video_id": bundle.video_id,
                    "spec": spec.to_wire(),
                }
                if bundle.video_id not in self._fragments_sent:
                    payload["fragments"] = bundle.fragmentation.as_pairs()
                reply = self._request(payload)
                if bundle.video_id not in self._fragments_sent:
                    self._fragments_sent.add(bundle.video_id)
                scores = reply.get("scores")
                if not isinstance(scores, list) or len(scores) != bundle.n_frames:
                    raise OracleError(
                        f"oracle returned {0 if scores is None else len(scores)} scores "
                        f"for {bundle.n_frames} frames"
                    )
                out[row] = scores
        return out

    def _attention(self, bundle):
        with self._lock:
            self._ensure_loaded(bundle)
            reply = self._request({"op": "attention", "video_id": bundle.video_id})
        diag = reply.get("diag")
        if not isinstance(diag, list):
            raise OracleError("oracle attention reply carried no diagonal")
        return np.asarray(diag, dtype=np.float64)
