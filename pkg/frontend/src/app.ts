import {
  Command, StateMsg, dragObstacle, jog, parseServerMessage, pause, reseed,
  resume, setTarget, toggleFilter, validateCommand, wsUrl,
} from "./protocol.js";
import { ConsoleState, HISTORY_SECONDS, correctionBars } from "./state.js";
import { Viewport, drawInset, drawScene } from "./render.js";
import { drawBars, drawMeter, drawStrips } from "./charts.js";
import { RateLimiter, jogForKey, jogKeyHelp, pickObstacle } from "./input.js";

const $ = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;

const scene = $<HTMLCanvasElement>("scene");
const inset = $<HTMLCanvasElement>("inset");
const meter = $<HTMLCanvasElement>("meter");
const strips = $<HTMLCanvasElement>("strips");
const bars = $<HTMLCanvasElement>("bars");
const sceneCtx = scene.getContext("2d")!;
const insetCtx = inset.getContext("2d")!;
const meterCtx = meter.getContext("2d")!;
const stripsCtx = strips.getContext("2d")!;
const barsCtx = bars.getContext("2d")!;
const view = new Viewport(scene.width);

const state = new ConsoleState();
let socket: WebSocket | null = null;
let inbox: StateMsg[] = [];
const dragLimiter = new RateLimiter(20); // server default tick is 50 Hz

function send(cmd: Command): void {
  if (!validateCommand(cmd)) {
    console.warn("refusing to send malformed command", cmd);
    return;
  }
  if (socket && socket.readyState === WebSocket.OPEN) {
    socket.send(JSON.stringify(cmd));
  }
}

function toast(text: string): void {
  state.lastError = text;
  state.lastErrorAt = performance.now();
  const el = $("toast");
  el.textContent = text;
  el.classList.add("show");
  setTimeout(() => el.classList.remove("show"), 2500);
}

function connect(): void {
  state.connection = "connecting";
  socket = new WebSocket(wsUrl(window.location));
  socket.onopen = () => {
    state.connection = "open";
  };
  socket.onclose = () => {
    state.connection = "closed";
    socket = null;
    setTimeout(connect, 1000);
  };
  socket.onmessage = (ev: MessageEvent) => {
    const msg = parseServerMessage(ev.data as string);
    if (msg === null) return; // never render anything unvalidated
    if (msg.type === "error") {
      toast(`server: ${msg.message}`);
      return;
    }
    inbox.push(msg);
  };
}

// ---- input ---------------------------------------------------------------

document.addEventListener("keydown", (ev: KeyboardEvent) => {
  if ((ev.target as HTMLElement).tagName === "INPUT") return;
  const n = state.latest ? state.latest.q.length : 2;
  const j = jogForKey(ev.code, n);
  if (j) {
    send(jog(j.joint, j.delta));
    ev.preventDefault();
    return;
  }
  if (ev.code === "Space") {
    send(state.latest?.paused ? resume() : pause());
    ev.preventDefault();
  } else if (ev.code === "KeyF") {
    send(toggleFilter(!(state.latest?.filter_on ?? true)));
  } else if (ev.code === "KeyR") {
    send(reseed(Number($<HTMLInputElement>("seed").value) || 0));
  }
});

function canvasWorld(ev: MouseEvent): [number, number] {
  const r = scene.getBoundingClientRect();
  return view.toWorld([
    ((ev.clientX - r.left) / r.width) * scene.width,
    ((ev.clientY - r.top) / r.height) * scene.height,
  ]);
}

let downAt: [number, number] | null = null;

scene.addEventListener("mousedown", (ev) => {
  const world = canvasWorld(ev);
  downAt = [ev.clientX, ev.clientY];
  const hit = state.latest ? pickObstacle(state.latest.obstacles, world) : null;
  if (hit) {
    state.draggingId = hit;
    state.mode = "drag";
  }
});

scene.addEventListener("mousemove", (ev) => {
  if (state.draggingId && dragLimiter.allow(performance.now())) {
    const [x, y] = canvasWorld(ev);
    send(dragObstacle(state.draggingId, x, y));
  }
});

window.addEventListener("mouseup", (ev) => {
  if (state.draggingId) {
    state.draggingId = null;
    state.mode = "target";
    return;
  }
  if (downAt && ev.target === scene) {
    const moved = Math.hypot(ev.clientX - downAt[0], ev.clientY - downAt[1]);
    if (moved < 5) {
      const [x, y] = canvasWorld(ev);
      send(setTarget(x, y));
    }
  }
  downAt = null;
});

$("filter-btn").addEventListener("click", () =>
  send(toggleFilter(!(state.latest?.filter_on ?? true))));
$("pause-btn").addEventListener("click", () =>
  send(state.latest?.paused ? resume() : pause()));
$("reseed-btn").addEventListener("click", () =>
  send(reseed(Number($<HTMLInputElement>("seed").value) || 0)));

// ---- render loop ---------------------------------------------------------

function frame(): void {
  for (const msg of inbox) state.push(msg); // history sees every tick
  inbox = [];
  const msg = state.latest;

  drawScene(sceneCtx, view, msg, state.connection);
  drawInset(insetCtx, inset.width, msg);
  drawMeter(meterCtx, { x: 0, y: 0, w: meter.width, h: meter.height }, msg ? msg.h : 0);
  drawStrips(stripsCtx, { x: 0, y: 0, w: strips.width, h: strips.height },
    state.history.samples(), HISTORY_SECONDS);
  drawBars(barsCtx, { x: 0, y: 0, w: bars.width, h: bars.height },
    msg ? correctionBars(msg) : [], 1.5);

  $("conn").textContent = state.connection;
  $("conn").className = `badge ${state.connection}`;
  if (msg) {
    $("hval").textContent = msg.h.toFixed(3);
    $("tval").textContent = msg.t.toFixed(2);
    $("sval").textContent = msg.paused ? "paused" : msg.status;
    $("fval").textContent = msg.filter_on ? "on" : "off";
    $("filter-btn").textContent = msg.filter_on ? "filter: on" : "filter: OFF";
    $("pause-btn").textContent = msg.paused ? "resume" : "pause";
    const ev = msg.events.filter((e) => e !== "replan");
    if (ev.length > 0) $("eval").textContent = ev.join(", ");
  }
  requestAnimationFrame(frame);
}

$("keys").textContent =
  `${jogKeyHelp(2)}  |  space pause  F filter  R reseed  |  ` +
  `click: set target, drag an obstacle to move it`;
connect();
requestAnimationFrame(frame);
