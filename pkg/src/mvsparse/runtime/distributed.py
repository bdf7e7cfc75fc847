"""Distributed execution: camera nodes and server exchanging protocol frames
over TCP.

The server collects all cameras' updates for a frame (frame barrier,
processed in camera_id order), runs the per-frame engine and broadcasts
feedback. Camera nodes own their policy agent and detector state and learn
locally. Both sides rebuild the scene deterministically from the config, so
no ground truth crosses the wire, and with a fixed seed a distributed run
reproduces the single-process report bit for bit.

Supported modes: full, blockcopy, mvsparse. The oracle and static_mask
baselines are offline analysis modes and run single-process only.
"""

from __future__ import annotations

import logging
import socket
import time

from .config import ConfigError, RunConfig
from .protocol import (
    BlockUpdate,
    EndOfSequence,
    Hello,
    ProtocolError,
    ServerFeedback,
    read_message,
    send_message,
)
from .simulation import CameraRuntime, SceneSource, ServerEngine

logger = logging.getLogger(__name__)

DISTRIBUTED_MODES = ("full", "blockcopy", "mvsparse")


class ConnectionLost(Exception):
    pass


class FrameTimeout(Exception):
    pass


def _check_mode(cfg: RunConfig) -> None:
    if cfg.mode not in DISTRIBUTED_MODES:
        raise ConfigError(
            f"mode {cfg.mode!r} is single-process only; distributed modes: {DISTRIBUTED_MODES}"
        )


def run_server(cfg: RunConfig, port: int | None = None, ready=None) -> dict:
    """Serve one run: accept all cameras, drive the frame barrier, return the
    final report. On a lost connection the partial report is attached to the
    raised ConnectionLost as ``partial_report``."""
    _check_mode(cfg)
    n_cameras = len(cfg.cameras)
    engine = ServerEngine(cfg)
    source = SceneSource(cfg)

    listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    listener.bind((cfg.network.host, port if port is not None else cfg.network.port))
    listener.listen(n_cameras)
    listener.settimeout(cfg.network.frame_timeout_s)
    if ready is not None:
        ready.set()

    conns: dict[int, socket.socket] = {}
    try:
        while len(conns) < n_cameras:
            try:
                sock, _ = listener.accept()
            except socket.timeout as exc:
                raise FrameTimeout("timed out waiting for cameras to connect") from exc
            sock.settimeout(cfg.network.frame_timeout_s)
            hello = read_message(sock)
            if not isinstance(hello, Hello):
                raise ConnectionLost(f"expected Hello, got {type(hello).__name__}")
            if hello.camera_id not in cfg.camera_ids:
                raise ConnectionLost(f"unknown camera {hello.camera_id}")
            conns[hello.camera_id] = sock
            logger.info("camera %d connected", hello.camera_id)

        for t in range(cfg.frames):
            scene = source.frame(t)
            gt_ground = [(p.person_id, p.position) for p in scene.pedestrians]
            updates: dict[int, BlockUpdate] = {}
            for cam_id in cfg.camera_ids:
                updates[cam_id] = _read_update(conns[cam_id], cam_id, t, cfg)
            feedbacks = engine.process(t, updates, gt_ground)
            for cam_id in cfg.camera_ids:
                send_message(conns[cam_id], feedbacks[cam_id])

        for cam_id, sock in conns.items():
            try:
                msg = read_message(sock)
                if not isinstance(msg, EndOfSequence):
                    logger.warning("camera %d: expected end-of-sequence", cam_id)
            except (ProtocolError, OSError):
                logger.warning("camera %d closed without end-of-sequence", cam_id)
        return engine.report()
    except (ProtocolError, OSError) as exc:
        err = ConnectionLost(str(exc))
        err.partial_report = engine.report()
        raise err from exc
    finally:
        for sock in conns.values():
            sock.close()
        listener.close()


def _read_update(sock, cam_id: int, frame_id: int, cfg: RunConfig) -> BlockUpdate:
    """Next update of the given frame from one camera, skipping any late
    leftovers from dropped frames."""
    import numpy as np

    while True:
        try:
            msg = read_message(sock)
        except socket.timeout:
            logger.warning("camera %d: frame %d timed out, dropped", cam_id, frame_id)
            return BlockUpdate(frame_id, cam_id, np.zeros(cfg.grid.shape, dtype=np.uint8), ())
        if isinstance(msg, BlockUpdate):
            if msg.frame_id == frame_id:
                return msg
            if msg.frame_id < frame_id:
                continue  # stale leftover from a dropped frame
            raise ConnectionLost(
                f"camera {cam_id} ahead of barrier: frame {msg.frame_id} > {frame_id}"
            )
        raise ConnectionLost(f"camera {cam_id}: unexpected {type(msg).__name__}")


def run_camera_node(
    cfg: RunConfig, camera_id: int, server: tuple[str, int] | None = None
) -> None:
    """Drive one camera against a running server."""
    _check_mode(cfg)
    if camera_id not in cfg.camera_ids:
        raise ConfigError(f"camera {camera_id} not in the configured rig")
    camera = next(c for c in cfg.cameras if c.camera_id == camera_id)
    host, port = server if server is not None else (cfg.network.host, cfg.network.port)

    sock = _connect_with_retry(host, port, cfg)
    runtime = CameraRuntime(cfg, camera)
    source = SceneSource(cfg)
    try:
        send_message(sock, Hello(camera_id))
        for t in range(cfg.frames):
            scene = source.frame(t)
            update = runtime.begin_frame(scene, t)
            send_message(sock, update)
            feedback = read_message(sock)
            if not isinstance(feedback, ServerFeedback) or feedback.frame_id != t:
                raise ConnectionLost(f"camera {camera_id}: bad feedback at frame {t}")
            runtime.end_frame(t, feedback)
        send_message(sock, EndOfSequence(camera_id))
    except (ProtocolError, OSError) as exc:
        raise ConnectionLost(str(exc)) from exc
    finally:
        sock.close()


def _connect_with_retry(host: str, port: int, cfg: RunConfig) -> socket.socket:
    last_error: Exception | None = None
    for attempt in range(cfg.network.connect_retries):
        try:
            sock = socket.create_connection((host, port), timeout=cfg.network.frame_timeout_s)
            sock.settimeout(cfg.network.frame_timeout_s)
            return sock
        except OSError as exc:
            last_error = exc
            time.sleep(cfg.network.retry_backoff_s * (attempt + 1))
    raise ConnectionLost(f"cannot reach server at {host}:{port}: {last_error}")
