"""HTTP mission service: REST endpoints plus a server-sent event stream.

The simulation loop stays the single owner of mutable state. Handlers take
the bridge lock only long enough to read a snapshot or hand a command over,
and the event stream serves from a bounded ring buffer with per-subscriber
cursors, so a slow consumer can never stall the loop (oldest events drop;
drops are logged and announced on the stream).
"""

from __future__ import annotations

import asyncio
import logging
import threading
import time
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import (JSONResponse, PlainTextResponse,
                               StreamingResponse)
from fastapi.staticfiles import StaticFiles

from .executive import ScheduleError
from .runtime import SimulationRuntime

log = logging.getLogger(__name__)


class SimBridge:
    """Owns the runtime on behalf of the HTTP handlers.

    `start()` launches a daemon thread that paces `runtime.tick()` at a
    real-time factor (rtf <= 0 runs unthrottled). Handlers interleave with
    the loop through `lock`. Event log lines are mirrored into a bounded
    ring buffer with absolute sequence numbers so stream subscribers can
    resume from a Last-Event-ID cursor.
    """

    def __init__(self, runtime: SimulationRuntime, rtf: float = 10.0,
                 buffer_size: int = 4096):
        self.runtime = runtime
        self.rtf = rtf
        self.lock = threading.Lock()
        self.buffer_size = buffer_size
        self._lines: list[str] = []
        self._first_seq = 0
        self._ingested = 0
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    # ------------------------------------------------------------ event feed

    def _ingest_locked(self) -> None:
        lines = self.runtime.event_lines
        while self._ingested < len(lines):
            self._lines.append(lines[self._ingested])
            self._ingested += 1
        overflow = len(self._lines) - self.buffer_size
        if overflow > 0:
            del self._lines[:overflow]
            self._first_seq += overflow
            log.warning("event buffer dropped %d oldest events", overflow)

    def events_since(self, last_id: int | None) \
            -> tuple[int, list[tuple[int, str]]]:
        """Events newer than `last_id` as (dropped_count, [(seq, line)])."""
        with self.lock:
            self._ingest_locked()
            start = self._first_seq if last_id is None else last_id + 1
            dropped = max(0, self._first_seq - start)
            begin = max(start, self._first_seq)
            idx = begin - self._first_seq
            return dropped, [(begin + i, ln)
                             for i, ln in enumerate(self._lines[idx:])]

    # ------------------------------------------------------------- sim loop

    def tick(self, n: int = 1) -> None:
        with self.lock:
            for _ in range(n):
                self.runtime.tick()
            self._ingest_locked()

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run, daemon=True,
                                        name="sim-loop")
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    def _run(self) -> None:
        dt = self.runtime.scenario.dt
        period = dt / self.rtf if self.rtf and self.rtf > 0 else None
        next_t = time.perf_counter()
        while not self._stop.is_set():
            self.tick()
            if period is None:
                continue
            next_t += period
            delay = next_t - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
            else:
                next_t = time.perf_counter()    # fell behind; don't burst


def create_app(bridge: SimBridge, debug_truth: bool = False,
               frontend_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="beam-sim mission api", docs_url=None,
                  redoc_url=None)
    rt = bridge.runtime

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request, exc):
        return JSONResponse({"error": str(exc.errors()[0].get("msg", exc))},
                            status_code=400)

    async def _json_object(request: Request) -> dict | JSONResponse:
        try:
            body = await request.json()
        except Exception:
            return JSONResponse({"error": "body must be valid JSON"},
                                status_code=400)
        if not isinstance(body, dict):
            return JSONResponse({"error": "body must be a JSON object"},
                                status_code=400)
        return body

    @app.get("/api/status")
    async def status():
        with bridge.lock:
            return rt.status(debug_truth=debug_truth)

    @app.get("/api/map")
    async def map_text():
        return PlainTextResponse(rt.map_text)

    @app.get("/api/scenario")
    async def scenario_info():
        # static world furniture for map overlays; immutable per run
        sc = rt.scenario
        return {
            "name": sc.name,
            "stations": [
                {"id": st.id,
                 "dock_pose": [st.dock_pose.x, st.dock_pose.y,
                               st.dock_pose.theta],
                 "approach_pose": [st.approach_pose.x, st.approach_pose.y,
                                   st.approach_pose.theta],
                 "marker_id": st.marker_id}
                for st in sc.stations],
            "markers": [
                {"id": mid, "pose": [p.x, p.y, p.theta]}
                for mid, p in sorted(sc.markers.items())],
            "candidates": [[x, y] for x, y in sc.candidates],
        }

    @app.post("/api/tasks")
    async def create_task(request: Request):
        body = await _json_object(request)
        if isinstance(body, JSONResponse):
            return body
        with bridge.lock:
            try:
                task = rt.schedule(body)
            except ScheduleError as exc:
                return JSONResponse({"error": str(exc)}, status_code=400)
        return JSONResponse({"id": task.id}, status_code=201)

    @app.get("/api/tasks")
    async def list_tasks():
        with bridge.lock:
            return [t.to_dict() for _, t in
                    sorted(rt.executive.tasks.items())]

    @app.get("/api/tasks/{task_id}")
    async def get_task(task_id: int):
        with bridge.lock:
            task = rt.executive.tasks.get(task_id)
            if task is None:
                return JSONResponse({"error": "unknown task id"},
                                    status_code=404)
            return task.to_dict()

    @app.delete("/api/tasks/{task_id}")
    async def delete_task(task_id: int):
        with bridge.lock:
            verdict = rt.cancel(task_id)
        if verdict == "not-found":
            return JSONResponse({"error": "unknown task id"},
                                status_code=404)
        if verdict == "conflict":
            return JSONResponse(
                {"error": "only Queued tasks can be cancelled"},
                status_code=409)
        return {"status": "cancelled"}

    @app.post("/api/confirm")
    async def confirm(request: Request):
        body = await _json_object(request)
        if isinstance(body, JSONResponse):
            return body
        action = body.get("action")
        if action not in ("loaded", "unloaded"):
            return JSONResponse(
                {"error": "action must be 'loaded' or 'unloaded'"},
                status_code=400)
        with bridge.lock:
            rt.confirm(action)
        return {"status": "ok"}

    @app.post("/api/say")
    async def say(request: Request):
        body = await _json_object(request)
        if isinstance(body, JSONResponse):
            return body
        text = body.get("text")
        if not isinstance(text, str) or not text.strip():
            return JSONResponse({"error": "text must be a non-empty string"},
                                status_code=400)
        with bridge.lock:
            rt.say(text.strip())
        return {"status": "ok"}

    @app.get("/api/events")
    async def events(request: Request):
        raw = request.headers.get("last-event-id")
        try:
            cursor = int(raw) if raw is not None else None
        except ValueError:
            cursor = None

        async def stream():
            last = cursor
            yield ": connected\n\n"
            while True:
                if await request.is_disconnected():
                    return
                dropped, batch = bridge.events_since(last)
                if dropped:
                    yield f": dropped {dropped} events\n\n"
                for seq, line in batch:
                    last = seq
                    yield f"id: {seq}\ndata: {line}\n\n"
                if not batch:
                    await asyncio.sleep(0.05)

        return StreamingResponse(stream(), media_type="text/event-stream",
                                 headers={"Cache-Control": "no-cache"})

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True),
                  name="console")

    return app


def default_frontend_dir() -> Path | None:
    """Bundled console assets, when the frontend has been built."""
    dist = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return dist if dist.is_dir() else None


def serve(scenario, port: int = 8000, host: str = "127.0.0.1",
          seed: int | None = None, rtf: float = 10.0,
          debug_truth: bool = False,
          frontend_dir: str | Path | None = None) -> None:
    """Run the simulation loop and HTTP service until interrupted."""
    import uvicorn

    runtime = SimulationRuntime(scenario, seed=seed)
    bridge = SimBridge(runtime, rtf=rtf)
    if frontend_dir is None:
        frontend_dir = default_frontend_dir()
    app = create_app(bridge, debug_truth=debug_truth,
                     frontend_dir=frontend_dir)
    bridge.start()
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        bridge.stop()
