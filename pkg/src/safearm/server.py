"""Live and replay serving over a browser WebSocket.

One episode per process. The sim loop is a single asyncio task; socket I/O
only touches it through the inbound command queue (drained once per tick)
and the outbound snapshot broadcast. Slow clients drop frames rather than
stalling the loop.
"""

import asyncio
import contextlib
import json
import logging
import math
import socket
from dataclasses import replace
from pathlib import Path

import numpy as np

from .arm import forward_kinematics
from .world import init_episode, obstacle_position, resolve_field, step

log = logging.getLogger("safearm.server")

PROTOCOL_VERSION = "1"
EXIT_OK = 0
EXIT_PORT = 3

_COMMANDS = {"jog", "set_target", "toggle_filter", "drag_obstacle",
             "pause", "resume", "reseed"}


def _finite(*values):
    return all(isinstance(v, (int, float)) and math.isfinite(v) for v in values)


def validate_command(msg):
    """Returns an error string, or None when the message is well-formed."""
    if not isinstance(msg, dict):
        return "message must be an object"
    if msg.get("v") != PROTOCOL_VERSION:
        return f"unsupported protocol version {msg.get('v')!r}"
    kind = msg.get("type")
    if kind not in _COMMANDS:
        return f"unknown command type {kind!r}"
    if kind == "jog":
        if not isinstance(msg.get("joint"), int) or not _finite(msg.get("delta_rad")):
            return "jog needs integer joint and finite delta_rad"
    elif kind == "set_target":
        if not _finite(msg.get("x"), msg.get("y")):
            return "set_target needs finite x, y"
    elif kind == "toggle_filter":
        if not isinstance(msg.get("on"), bool):
            return "toggle_filter needs boolean on"
    elif kind == "drag_obstacle":
        if not isinstance(msg.get("id"), str) or not _finite(msg.get("x"), msg.get("y")):
            return "drag_obstacle needs id and finite x, y"
    elif kind == "reseed":
        if not isinstance(msg.get("seed"), int) or isinstance(msg.get("seed"), bool):
            return "reseed needs an integer seed"
    return None


class Broadcast:
    """Fan-out of JSON messages to connected clients, drop-oldest."""

    def __init__(self, depth=8):
        self.depth = depth
        self.clients = set()

    def register(self):
        q = asyncio.Queue(maxsize=self.depth)
        self.clients.add(q)
        return q

    def unregister(self, q):
        self.clients.discard(q)

    def publish(self, text):
        for q in self.clients:
            if q.full():
                with contextlib.suppress(asyncio.QueueEmpty):
                    q.get_nowait()
            q.put_nowait(text)


class LiveSession:
    """Owns the episode state and applies queued commands at tick starts."""

    def __init__(self, scenario, field):
        self.scenario = scenario
        self.field = field
        self.state = init_episode(scenario, field)
        self.paused = False
        self.commands = asyncio.Queue()
        self.broadcast = Broadcast()
        self.last_state = None

    def apply(self, msg):
        kind = msg["type"]
        state = self.state
        if kind == "jog":
            joint = msg["joint"]
            if 0 <= joint < self.scenario.arm.n_joints:
                state.pending_jogs[joint] = float(msg["delta_rad"])
        elif kind == "set_target":
            state.target_ee = np.array([msg["x"], msg["y"]], dtype=float)
            state.force_replan = True
        elif kind == "toggle_filter":
            state.filter_enabled = bool(msg["on"])
        elif kind == "drag_obstacle":
            for ob in self.scenario.obstacles:
                if ob.id == msg["id"]:
                    ob.drag_override = np.array([msg["x"], msg["y"]], dtype=float)
        elif kind == "pause":
            self.paused = True
        elif kind == "resume":
            self.paused = False
        elif kind == "reseed":
            for ob in self.scenario.obstacles:
                ob.drag_override = None
            self.scenario = replace(self.scenario, seed=msg["seed"])
            self.state = init_episode(self.scenario, self.field)

    def tick(self):
        while not self.commands.empty():
            self.apply(self.commands.get_nowait())
        if self.paused:
            # keep streaming so the console stays live, but flag the freeze
            if self.last_state is not None:
                self.broadcast.publish(
                    json.dumps({**self.last_state, "paused": True}))
            return
        record = step(self.state, self.scenario)
        self.last_state = self._state_message(record)
        self.broadcast.publish(json.dumps(self.last_state))

    def _state_message(self, record):
        scenario, state = self.scenario, self.state
        _, ee = forward_kinematics(scenario.arm, state.q)
        obstacles = [{"id": ob.id,
                      "pos": [float(v) for v in obstacle_position(ob, record.t)],
                      "points": [[float(a) for a in row] for row in ob.points]}
                     for ob in scenario.obstacles]
        return {"type": "state", "v": PROTOCOL_VERSION,
                "t": record.t,
                "q": [float(v) for v in record.q],
                "ee": [float(v) for v in ee],
                "u_nom": [float(v) for v in record.u_nom],
                "u": [float(v) for v in record.u],
                "h": record.h, "dhdt": record.dhdt,
                "status": record.status,
                "filter_on": state.filter_enabled,
                "paused": self.paused,
                "obstacles": obstacles,
                "bubbles": [{"center": [float(v) for v in b.center],
                             "radius": float(b.radius)}
                            for b in state.graph.bubbles],
                "plan": {"waypoints": [[float(v) for v in w]
                                       for w in state.plan.waypoints]},
                "events": list(record.events)}


def _static_dir():
    root = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return root if root.is_dir() else None


def _make_app(on_client_message, broadcast, on_connect=None):
    from starlette.applications import Starlette
    from starlette.responses import HTMLResponse
    from starlette.routing import Mount, Route, WebSocketRoute
    from starlette.websockets import WebSocketDisconnect

    async def ws_endpoint(websocket):
        await websocket.accept()
        queue = broadcast.register()
        if on_connect is not None:
            on_connect(queue)

        async def pump():
            while True:
                await websocket.send_text(await queue.get())

        sender = asyncio.ensure_future(pump())
        try:
            while True:
                raw = await websocket.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    msg = raw
                error = validate_command(msg)
                if error is not None:
                    await websocket.send_text(json.dumps(
                        {"type": "error", "v": PROTOCOL_VERSION, "message": error}))
                    continue
                on_client_message(msg)
        except WebSocketDisconnect:
            pass
        finally:
            sender.cancel()
            broadcast.unregister(queue)

    async def index(request):
        return HTMLResponse("<h1>safearm</h1><p>No console build found; "
                            "connect a client to <code>/ws</code>.</p>")

    routes = [WebSocketRoute("/ws", ws_endpoint)]
    static = _static_dir()
    if static is not None:
        from starlette.staticfiles import StaticFiles
        routes.append(Mount("/", app=StaticFiles(directory=static, html=True)))
    else:
        routes.append(Route("/", index))
    return Starlette(routes=routes)


def _port_free(port):
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind(("127.0.0.1", port))
    except OSError:
        return False
    finally:
        probe.close()
    return True


def _run_server(app, port, runner):
    """Run uvicorn with `runner` as a sibling task; returns an exit code."""
    import uvicorn

    if not _port_free(port):
        print(f"port {port} is already in use")
        return EXIT_PORT
    config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning")
    server = uvicorn.Server(config)

    async def main():
        task = asyncio.ensure_future(runner())
        try:
            await server.serve()
        finally:
            task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await task

    try:
        asyncio.run(main())
    except KeyboardInterrupt:  # pragma: no cover - interactive shutdown
        pass
    return EXIT_OK


def serve_live(scenario, port=8000, tick_hz=50.0):
    """Run a live episode; obstacles and teleop commands stay interactive.

    The episode ignores the scenario duration and keeps ticking until the
    process stops; determinism still holds for the command-free prefix.
    """
    field = resolve_field(scenario)
    session = LiveSession(scenario, field)

    async def runner():
        loop = asyncio.get_event_loop()
        period = 1.0 / tick_hz
        deadline = loop.time() + period
        while True:
            await asyncio.sleep(max(0.0, deadline - loop.time()))
            deadline += period
            session.tick()

    app = _make_app(session.commands.put_nowait, session.broadcast)
    print(f"serving live episode {scenario.name!r} on http://127.0.0.1:{port}")
    return _run_server(app, port, runner)


def serve_replay(header, records, port=8000, speed=1.0):
    """Re-emit a recorded trace as state messages for UI playback.

    Obstacle positions are reconstructed from the recorded scenario's
    scripts at each record's timestamp; q and h are emitted exactly as
    recorded. Commands are rejected (nothing to steer).
    """
    from .trace import trace_scenario

    scenario = trace_scenario(header)
    arm = scenario.arm
    broadcast = Broadcast()
    dt = scenario.dt / max(speed, 1e-9)
    messages = []
    for rec in records:
        q = np.asarray(rec["q"], dtype=float)
        _, ee = forward_kinematics(arm, q)
        obstacles = [{"id": ob.id,
                      "pos": [float(v) for v in obstacle_position(ob, rec["t"])],
                      "points": [[float(a) for a in row] for row in ob.points]}
                     for ob in scenario.obstacles]
        messages.append(json.dumps(
            {"type": "state", "v": PROTOCOL_VERSION, "t": rec["t"],
             "q": rec["q"], "ee": [float(v) for v in ee],
             "u_nom": rec["u_nom"], "u": rec["u"],
             "h": rec["h"], "dhdt": rec["dhdt"], "status": rec["status"],
             "filter_on": rec["status"] != "disabled",
             "paused": False,
             "obstacles": obstacles,
             "bubbles": header.get("bubbles", []),
             "plan": {"waypoints": header.get("plan", {}).get("waypoints", [])},
             "events": rec["events"]}))

    def reject(msg):
        log.info("ignoring %s during replay", msg.get("type"))

    async def runner():
        loop = asyncio.get_event_loop()
        while not broadcast.clients:
            await asyncio.sleep(0.05)
        deadline = loop.time()
        for text in messages:
            await asyncio.sleep(max(0.0, deadline - loop.time()))
            deadline += dt
            broadcast.publish(text)
        log.info("replay finished (%d records)", len(messages))
        while True:
            await asyncio.sleep(3600)

    app = _make_app(reject, broadcast)
    print(f"replaying {len(messages)} records on http://127.0.0.1:{port}")
    return _run_server(app, port, runner)
