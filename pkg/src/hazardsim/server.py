"""Control API server: newline-delimited JSON over TCP, and the same
messages one-per-frame over WebSocket for browser clients.

Every request carries a connection-unique request_id which its reply
echoes. Event-stream messages instead carry a monotonic ``seq``. A slow
subscriber is disconnected with a buffer_overrun notice rather than
stalling the run. Desk mode (no token) leaves the API open; configuring a
token requires an ``auth`` message first.
"""

from __future__ import annotations

import asyncio
import json
import threading
from pathlib import Path
from typing import Dict, Optional

from .alertgate import PipelineConfig
from .alertnet import MeshTopology, default_topology
from .clipstore import load_clip
from .controlplane import (
    ControlMessage,
    EventBroker,
    RunSpec,
    Subscription,
    _RunState,
    apply_config,
    run_replay,
)
from .errors import BufferOverrun, HazardSimError, RunActive, ValidationError

EVENT_KINDS = (
    "frame",
    "tracks",
    "candidates",
    "alert",
    "delivery",
    "quality_advisory",
    "config",
    "run_started",
    "end",
)


def _event_wire(record: dict) -> dict:
    data = {k: v for k, v in record.items() if k not in ("record", "seq")}
    return {"seq": record["seq"], "event": record["record"], "data": data}


class ControlServer:
    """One pipeline, one live config, at most one run at a time."""

    def __init__(
        self,
        config: Optional[PipelineConfig] = None,
        topology: Optional[MeshTopology] = None,
        *,
        host: str = "127.0.0.1",
        port: int = 0,
        ws_port: Optional[int] = None,
        token: Optional[str] = None,
        buffer_size: int = 1024,
    ):
        self._state = _RunState(config if config is not None else PipelineConfig())
        self._topology = topology if topology is not None else default_topology()
        self._host = host
        self._port = port
        self._ws_port = ws_port
        self._token = token
        self._broker = EventBroker(buffer_size)
        self._run_thread: Optional[threading.Thread] = None
        self._run_lock = threading.Lock()
        self._latest_lock = threading.Lock()
        self._latest_frames: Dict[str, dict] = {}
        self._latest_tracks: Dict[str, dict] = {}
        self._last_runlog = None
        self._server: Optional[asyncio.AbstractServer] = None
        self._ws_server = None

    # -- lifecycle -----------------------------------------------------------

    async def start(self) -> None:
        self._server = await asyncio.start_server(
            self._client_connected, self._host, self._port
        )
        self._port = self._server.sockets[0].getsockname()[1]
        if self._ws_port is not None:
            import websockets

            self._ws_server = await websockets.serve(
                self._ws_client, self._host, self._ws_port
            )
            self._ws_port = next(iter(self._ws_server.sockets)).getsockname()[1]

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        if self._ws_server is not None:
            self._ws_server.close()
            await self._ws_server.wait_closed()
        self._state.stop_requested.set()
        thread = self._run_thread
        if thread is not None and thread.is_alive():
            thread.join(timeout=5)

    @property
    def port(self) -> int:
        return self._port

    @property
    def ws_port(self) -> Optional[int]:
        return self._ws_port

    @property
    def last_runlog(self):
        return self._last_runlog

    # -- request handling ------------------------------------------------------

    def _handle(self, message: dict, session: dict) -> dict:
        request_id = message.get("request_id")

        def error(exc: Exception) -> dict:
            return {
                "request_id": request_id,
                "ok": False,
                "error": {"type": type(exc).__name__, "message": str(exc)},
            }

        def ok(payload: Optional[dict] = None) -> dict:
            reply = {"request_id": request_id, "ok": True}
            if payload is not None:
                reply["payload"] = payload
            return reply

        kind = message.get("kind")
        if request_id is None or kind is None:
            return error(ValidationError("requests need 'kind' and 'request_id'"))
        payload = message.get("payload", {})

        if self._token is not None and not session.get("authed"):
            if kind != "auth":
                return error(ValidationError("authentication required"))
            if payload.get("token") == self._token:
                session["authed"] = True
                return ok()
            return error(ValidationError("bad token"))
        if kind == "auth":
            session["authed"] = True
            return ok()

        try:
            change = ControlMessage(kind=kind, payload=payload, request_id=request_id)
        except HazardSimError as exc:
            return error(exc)

        try:
            if kind == "get_config":
                version, config = self._state.config_snapshot()
                return ok({"version": version, "config": config.to_obj()})
            if kind in ("set_config", "set_zone", "set_mode"):
                with self._run_lock:
                    _, current = self._state.config_snapshot()
                    updated = apply_config(current, change)
                    version = self._state.update_config(updated)
                return ok({"version": version, "config": updated.to_obj()})
            if kind == "start_run":
                return self._start_run(payload, ok, error)
            if kind == "stop_run":
                self._state.stop_requested.set()
                return ok()
            if kind == "subscribe_events":
                kinds = payload.get("kinds")
                if kinds is not None:
                    unknown = set(kinds) - set(EVENT_KINDS)
                    if unknown:
                        raise ValidationError(f"unknown event kinds: {sorted(unknown)}")
                session["subscribe"] = kinds
                return ok({"events": kinds if kinds is not None else list(EVENT_KINDS)})
            if kind == "frame_preview":
                node = payload.get("node_id")
                with self._latest_lock:
                    frame = self._latest_frames.get(node)
                    tracks = self._latest_tracks.get(node)
                if frame is None:
                    raise ValidationError(f"no frames seen for node {node!r}")
                return ok({"frame": frame, "tracks": tracks or {}})
            raise ValidationError(f"unsupported request kind {kind!r}")
        except HazardSimError as exc:
            return error(exc)

    def _start_run(self, payload: dict, ok, error) -> dict:
        with self._run_lock:
            if self._run_thread is not None and self._run_thread.is_alive():
                return error(RunActive("a run is already in progress"))
            try:
                clip = load_clip(payload["clip"])
            except KeyError:
                return error(ValidationError("start_run needs a 'clip' path"))
            except HazardSimError as exc:
                return error(exc)
            spec = RunSpec(
                clip=clip,
                config=self._state.config_snapshot()[1],
                topology=self._topology,
                clock_mode=payload.get("clock", "simulated"),
                stream_duplication=payload.get("duplicate", 2),
                seed=payload.get("seed", 0),
            )
            out = payload.get("out")
            self._state.stop_requested.clear()
            self._run_thread = threading.Thread(
                target=self._run_body, args=(spec, out), daemon=True
            )
            self._run_thread.start()
        self._broker.publish({"record": "run_started", "clip_id": clip.clip_id})
        return ok({"clip_id": clip.clip_id, "frames": clip.frame_count})

    def _run_body(self, spec: RunSpec, out: Optional[str]) -> None:
        def on_event(record: dict) -> None:
            kind = record.get("record")
            if kind == "frame":
                with self._latest_lock:
                    self._latest_frames[record["node"]] = {
                        "frame_index": record["frame_index"],
                        "timestamp": record["timestamp"],
                        "quality": record["quality"],
                        "n_detections": len(record["detections"]),
                    }
            elif kind == "tracks":
                with self._latest_lock:
                    self._latest_tracks[record["node"]] = {
                        "frame_index": record["frame_index"],
                        "tracks": record["tracks"],
                    }
            self._broker.publish(record)

        try:
            log = run_replay(spec, run_state=self._state, on_event=on_event)
        except HazardSimError as exc:
            self._broker.publish(
                {"record": "end", "status": "failed", "reason": str(exc)}
            )
            return
        self._last_runlog = log
        if out:
            log.save(Path(out))

    # -- TCP transport ----------------------------------------------------------

    async def _client_connected(self, reader, writer) -> None:
        session: dict = {}
        loop = asyncio.get_running_loop()
        outbox: asyncio.Queue = asyncio.Queue()
        pump_thread: Optional[threading.Thread] = None

        async def writer_task():
            while True:
                item = await outbox.get()
                if item is None:
                    break
                writer.write((json.dumps(item, separators=(",", ":")) + "\n").encode())
                try:
                    await writer.drain()
                except ConnectionError:
                    break

        out_task = asyncio.ensure_future(writer_task())
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                try:
                    message = json.loads(line)
                except json.JSONDecodeError as exc:
                    await outbox.put(
                        {
                            "request_id": None,
                            "ok": False,
                            "error": {"type": "SchemaViolation", "message": str(exc)},
                        }
                    )
                    continue
                reply = self._handle(message, session)
                await outbox.put(reply)
                if reply.get("ok") and "subscribe" in session and pump_thread is None:
                    sub = self._broker.subscribe(session.pop("subscribe"))
                    pump_thread = self._start_pump(sub, loop, outbox)
        finally:
            await outbox.put(None)
            await out_task
            writer.close()

    def _start_pump(self, sub: Subscription, loop, outbox) -> threading.Thread:
        def pump():
            try:
                while True:
                    record = sub.get()
                    loop.call_soon_threadsafe(outbox.put_nowait, _event_wire(record))
            except BufferOverrun:
                loop.call_soon_threadsafe(
                    outbox.put_nowait,
                    {"seq": -1, "event": "buffer_overrun", "data": {}},
                )

        thread = threading.Thread(target=pump, daemon=True)
        thread.start()
        return thread

    # -- WebSocket transport ------------------------------------------------------

    async def _ws_client(self, websocket) -> None:
        session: dict = {}
        loop = asyncio.get_running_loop()
        outbox: asyncio.Queue = asyncio.Queue()
        pump_thread = None

        async def writer_task():
            while True:
                item = await outbox.get()
                if item is None:
                    break
                try:
                    await websocket.send(json.dumps(item, separators=(",", ":")))
                except Exception:
                    break

        out_task = asyncio.ensure_future(writer_task())
        try:
            async for raw in websocket:
                try:
                    message = json.loads(raw)
                except json.JSONDecodeError as exc:
                    await outbox.put(
                        {
                            "request_id": None,
                            "ok": False,
                            "error": {"type": "SchemaViolation", "message": str(exc)},
                        }
                    )
                    continue
                reply = self._handle(message, session)
                await outbox.put(reply)
                if reply.get("ok") and "subscribe" in session and pump_thread is None:
                    sub = self._broker.subscribe(session.pop("subscribe"))
                    pump_thread = self._start_pump(sub, loop, outbox)
        finally:
            await outbox.put(None)
            await out_task


async def serve_forever(server: ControlServer) -> None:
    await server.start()
    ws_note = f", ws {server._host}:{server.ws_port}" if server.ws_port else ""
    print(f"listening on {server._host}:{server.port}{ws_note}", flush=True)
    try:
        await asyncio.Future()
    finally:
        await server.stop()
