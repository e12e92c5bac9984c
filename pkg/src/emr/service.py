"""HTTP service wrapping one firmware instance.

The byte-exact protocol stays authoritative: POST /command carries a
hex-encoded wire frame and returns the hex-encoded ACK/NAK response.
All firmware access is serialized through one lock, so responses and
event-stream snapshots appear in request order. GET /events is a
server-sent-event stream pushing a state snapshot after every executed
command.
"""
from __future__ import annotations

import asyncio
import json
import os
from typing import Optional

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import firmware as fw
from . import mapping, protocol
from .session import Session, load_session


def _find_console_dir() -> Optional[str]:
    """Locate the built browser console in a repository checkout."""
    repo = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
    candidate = os.path.join(repo, "frontend")
    if os.path.isfile(os.path.join(candidate, "index.html")):
        return candidate
    return None


class CommandRequest(BaseModel):
    frame: str = Field(description="hex-encoded wire frame, lowercase, no separators")


class CommandReply(BaseModel):
    response: str = Field(description="hex-encoded ACK/NAK response")
    seq: int


class ScanConfigBody(BaseModel):
    sweep_deg: float
    segment_deg: float
    raster_cm: float = 1.0
    sensor_max_cm: Optional[float] = None


class FaultReport(BaseModel):
    detail: str
    phase: str
    log: list[str]


class _Hub:
    """Fan-out of state snapshots to event-stream subscribers."""

    def __init__(self):
        self.queues: list[asyncio.Queue] = []
        self.seq = 0

    def subscribe(self) -> asyncio.Queue:
        q: asyncio.Queue = asyncio.Queue(maxsize=256)
        self.queues.append(q)
        return q

    def unsubscribe(self, q: asyncio.Queue) -> None:
        if q in self.queues:
            self.queues.remove(q)

    def publish(self, event: dict) -> None:
        self.seq += 1
        event = {"seq": self.seq, **event}
        for q in list(self.queues):
            try:
                q.put_nowait(event)
            except asyncio.QueueFull:
                self.unsubscribe(q)


def create_app(session: Optional[Session] = None) -> FastAPI:
    """Build the service around one booted firmware instance."""
    sess = session or load_session()
    module = sess.boot()
    hub = _Hub()
    lock = asyncio.Lock()

    app = FastAPI(title="environment scanner module", version="0.1.0")
    app.state.session = sess
    app.state.module = module
    app.state.hub = hub

    def faulted_response() -> JSONResponse:
        return JSONResponse(status_code=503, content=FaultReport(
            detail="module is faulted",
            phase=module.phase,
            log=module.log[-20:],
        ).model_dump())

    @app.get("/state")
    async def get_state() -> dict:
        return module.snapshot()

    @app.post("/command")
    async def post_command(body: CommandRequest) -> Response:
        try:
            raw = bytes.fromhex(body.frame)
        except ValueError:
            return JSONResponse(status_code=400, content={"detail": "malformed hex"})
        if module.phase == fw.PHASE_FAULTED:
            return faulted_response()
        async with lock:
            try:
                frame = protocol.unframe(raw)
            except protocol.ChecksumError:
                reply = protocol.nak_response(protocol.NakCode.CHECKSUM)
            except protocol.FrameError as e:
                return JSONResponse(status_code=400, content={"detail": str(e)})
            else:
                if protocol.validate_address(frame.address, frame.read_write) \
                        is not protocol.AddressClass.OK:
                    return JSONResponse(
                        status_code=400,
                        content={"detail": f"address 0x{frame.address:02X} is reserved"})
                try:
                    cmd = protocol.decode(frame.payload)
                except protocol.UnknownCommandError:
                    reply = protocol.nak_response(protocol.NakCode.UNKNOWN_COMMAND)
                except protocol.IncompleteCommandError:
                    reply = protocol.nak_response(protocol.NakCode.INCOMPLETE)
                except protocol.CommandError:
                    reply = protocol.nak_response(protocol.NakCode.BAD_ARGUMENT)
                else:
                    reply = module.execute(cmd, sess.scene, sess.pose)
            result = CommandReply(response=reply.hex(), seq=hub.seq + 1)
            hub.publish({
                "request": body.frame,
                "response": reply.hex(),
                "state": module.snapshot(),
            })
        return JSONResponse(content=result.model_dump())

    @app.get("/map/local")
    async def get_local_map(request: Request) -> Response:
        if module.phase == fw.PHASE_FAULTED:
            return faulted_response()
        if module.last_map is None:
            return JSONResponse(status_code=404, content={"detail": "no scan yet"})
        accept = request.headers.get("accept", "")
        if "text/plain" in accept:
            return PlainTextResponse(mapping.local_to_pbm(module.last_map))
        return Response(content=mapping.local_to_binary(module.last_map),
                        media_type="application/octet-stream")

    @app.put("/scan-config")
    async def put_scan_config(body: ScanConfigBody) -> Response:
        sensor_max = body.sensor_max_cm
        if sensor_max is None:
            sensor_max = module.scan_config.sensor_max_cm if module.scan_config else 150.0
        try:
            cfg = mapping.ScanConfig(
                sweep_deg=body.sweep_deg,
                segment_deg=body.segment_deg,
                raster_cm=body.raster_cm,
                sensor_max_cm=sensor_max,
            )
        except mapping.MapError as e:
            return JSONResponse(status_code=400, content={"detail": str(e)})
        async with lock:
            module.scan_config = cfg
        return JSONResponse(content={
            "sweep_deg": cfg.sweep_deg, "segment_deg": cfg.segment_deg,
            "raster_cm": cfg.raster_cm, "sensor_max_cm": cfg.sensor_max_cm})

    @app.get("/events")
    async def events() -> StreamingResponse:
        q = hub.subscribe()

        async def stream():
            try:
                yield f"data: {json.dumps({'seq': hub.seq, 'state': module.snapshot()})}\n\n"
                while True:
                    event = await q.get()
                    yield f"data: {json.dumps(event)}\n\n"
            finally:
                hub.unsubscribe(q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    console_dir = _find_console_dir()
    if console_dir:
        app.mount("/ui", StaticFiles(directory=console_dir, html=True), name="console")

    return app
