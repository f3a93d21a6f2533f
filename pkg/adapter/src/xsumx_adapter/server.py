"""Oracle server: newline-delimited JSON over stdio or a TCP socket.

Protocol (one JSON object per line, UTF-8):

  -> {"op": "hello", "proto": 1}
  <- {"op": "hello", "proto": 1, "caps": {"fragment_masks": true, ...}}
  -> {"op": "load", "id": N, "video_id": "...", "features_path": "...",
      "frames_path": null, "segmentation_path": null}
  <- {"op": "ok", "id": N}
  -> {"op": "score", "id": N, "video_id": "...", "spec": {...},
      "fragments": [[s, e], ...]}            # boundaries on the first score
  <- {"op": "scores", "id": N, "scores": [...]}
  -> {"op": "attention", "id": N, "video_id": "..."}
  <- {"op": "error", "id": N, "message": "..."}  # any failure

Requests are answered in arrival order, so pipelined clients get replies
matched by id.  Responses are a pure function of (loaded data, request).

Attaching a real summarizer: pass `serve` (or `ServerState`) a `model`
callable with the signature of `reference_model(features, masked)` and, if
it supports more than fragment masks, widened `capabilities`.
"""
from __future__ import annotations

import argparse
import json
import socket
import sys
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .reference_model import load_feature_file, reference_model

PROTOCOL_VERSION = 1

DEFAULT_CAPABILITIES = {
    "fragment_masks": True,
    "object_masks": False,
    "attention": False,
    "batch_limit": 256,
}


@dataclass
class LoadedVideo:
    features: np.ndarray
    fragments: Optional[list[list[int]]] = None


@dataclass
class ServerState:
    model: Callable[[np.ndarray, np.ndarray], np.ndarray] = reference_model
    capabilities: dict = field(default_factory=lambda: dict(DEFAULT_CAPABILITIES))
    videos: dict[str, LoadedVideo] = field(default_factory=dict)


def _error(request_id, message: str) -> dict:
    return {"op": "error", "id": request_id, "message": message}


def _masked_frames(video: LoadedVideo, spec: dict) -> np.ndarray:
    n = video.features.shape[0]
    masked = np.zeros(n, dtype=bool)
    kind = spec.get("kind", "none")
    if kind == "none":
        return masked
    if kind == "objects":
        raise ValueError("object masks unsupported by this server")
    if kind != "fragments":
        raise ValueError(f"unknown spec kind {kind!r}")
    if video.fragments is None:
        raise ValueError("fragment boundaries unknown; send them with the score request")
    indices = spec.get("masked_fragments", [])
    for k in indices:
        if not isinstance(k, int) or k < 0 or k >= len(video.fragments):
            raise ValueError(f"fragment index {k} out of range")
        start, end = video.fragments[k]
        masked[start : end + 1] = True
    return masked


def handle_message(state: ServerState, msg: dict) -> dict:
    op = msg.get("op")
    request_id = msg.get("id")

    if op == "hello":
        if msg.get("proto") != PROTOCOL_VERSION:
            return _error(request_id, f"unsupported protocol {msg.get('proto')!r}")
        return {"op": "hello", "proto": PROTOCOL_VERSION, "caps": dict(state.capabilities)}

    if op == "load":
        video_id = msg.get("video_id")
        if not video_id:
            return _error(request_id, "load needs a video_id")
        try:
            features = load_feature_file(msg["features_path"])
        except (KeyError, OSError, ValueError) as exc:
            return _error(request_id, f"cannot load features: {exc}")
        state.videos[video_id] = LoadedVideo(features=features)
        return {"op": "ok", "id": request_id}

    if op == "score":
        video = state.videos.get(msg.get("video_id"))
        if video is None:
            return _error(request_id, "video not loaded")
        if "fragments" in msg:
            try:
                video.fragments = [[int(s), int(e)] for s, e in msg["fragments"]]
            except (TypeError, ValueError):
                return _error(request_id, "malformed fragment boundaries")
        try:
            masked = _masked_frames(video, msg.get("spec", {"kind": "none"}))
        except ValueError as exc:
            return _error(request_id, str(exc))
        scores = state.model(video.features, masked)
        return {"op": "scores", "id": request_id, "scores": [float(v) for v in scores]}

    if op == "attention":
        return _error(request_id, "attention unsupported by this server")

    return _error(request_id, f"unknown op {op!r}")


def serve_stream(reader, writer, state: Optional[ServerState] = None) -> None:
    """Answer requests until EOF; malformed lines get an error with id null."""
    state = state if state is not None else ServerState()
    for line in reader:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            reply = _error(None, "malformed JSON line")
        else:
            reply = handle_message(state, msg)
        writer.write(json.dumps(reply) + "\n")
        writer.flush()


def serve_tcp(host: str, port: int, state: Optional[ServerState] = None) -> None:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as server_sock:
        server_sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server_sock.bind((host, port))
        server_sock.listen(1)
        bound = server_sock.getsockname()
        print(f"listening on {bound[0]}:{bound[1]}", file=sys.stderr, flush=True)
        while True:
            conn, _ = server_sock.accept()
            with conn:
                reader = conn.makefile("r", encoding="utf-8")
                writer = conn.makefile("w", encoding="utf-8")
                # each connection gets a fresh state: capabilities never
                # change mid-session and videos do not leak across clients
                serve_stream(reader, writer, ServerState(model=(state.model if state else reference_model)))


def serve(state: Optional[ServerState] = None, tcp: Optional[str] = None) -> None:
    if tcp is None:
        serve_stream(sys.stdin, sys.stdout, state)
        return
    host, _, port = tcp.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bad TCP address {tcp!r}, expected host:port")
    serve_tcp(host, int(port), state)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="xsumx-adapter", description="Reference summarizer oracle server."
    )
    parser.add_argument(
        "--tcp", default=None, metavar="HOST:PORT",
        help="listen on a TCP socket instead of serving stdio",
    )
    args = parser.parse_args(argv)
    try:
        serve(tcp=args.tcp)
    except KeyboardInterrupt:
        pass
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
