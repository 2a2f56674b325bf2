"""Simulation service: coverage jobs from the bus, twin state, actuators.

One runner thread executes at most one job at a time and at most one more may
wait in the queued slot. A newer request supersedes whatever holds the slot
(latest-wins): a queued job is replaced immediately and a running job is
asked to stop via a cancellation flag the tracer polls between ray batches.
Every submitted job_id gets exactly one terminal CoverageResult.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import bus
from .accel import build_index
from .coverage import simulate_coverage
from .mapio import dump_map
from .propagation import TraceCancelled
from .scene import SceneParseError, load_scene

log = logging.getLogger(__name__)

JOB_BATCH_RAYS = 65_536

QUEUED = "queued"
RUNNING = "running"
DONE = "done"
FAILED = "failed"
SUPERSEDED = "superseded"

_TRANSITIONS = {
    QUEUED: {RUNNING, SUPERSEDED},
    RUNNING: {DONE, FAILED, SUPERSEDED},
    DONE: set(),
    FAILED: set(),
    SUPERSEDED: set(),
}


class IllegalTransition(RuntimeError):
    pass


@dataclass
class Job:
    job_id: str
    request: bus.CoverageRequest
    state: str = QUEUED
    submitted: float = field(default_factory=time.time)
    started: float | None = None
    finished: float | None = None
    cancel_flag: threading.Event = field(default_factory=threading.Event)
    scene_text: str | None = None  # resolved at submit time

    def transition(self, new_state: str) -> None:
        if new_state not in _TRANSITIONS[self.state]:
            raise IllegalTransition(f"{self.state} -> {new_state}")
        self.state = new_state
        if new_state == RUNNING:
            self.started = time.time()
        elif new_state in (DONE, FAILED, SUPERSEDED):
            self.finished = time.time()


class TwinState:
    """Retained last-value sensor store with snapshot reads."""

    def __init__(self):
        self._lock = threading.Lock()
        self._sensors: dict[str, bus.SensorReading] = {}
        self.stale_count = 0
        self.last_map_job_id: str | None = None
        self.active_tx: dict | None = None

    def ingest(self, reading: bus.SensorReading) -> bool:
        """Store unless an equal-or-newer reading is already retained."""
        with self._lock:
            held = self._sensors.get(reading.sensor_id)
            if held is not None and reading.ts_ms < held.ts_ms:
                self.stale_count += 1
                return False
            self._sensors[reading.sensor_id] = reading
            return True

    def snapshot(self) -> dict[str, bus.SensorReading]:
        with self._lock:
            return dict(self._sensors)

    def record_map(self, job_id: str, tx: dict) -> None:
        with self._lock:
            self.last_map_job_id = job_id
            self.active_tx = tx


class CoverageService:
    """Bus-driven coverage-map generator with latest-wins job scheduling."""

    def __init__(
        self,
        session: bus.BusSession,
        *,
        workers: int | None = None,
        audit_log_path: str | Path | None = None,
        scene_root: str | Path | None = None,
    ):
        self.session = session
        self.workers = workers
        self.state = TwinState()
        self.audit_log: list[dict] = []
        self._audit_path = Path(audit_log_path) if audit_log_path else None
        self._scene_root = Path(scene_root) if scene_root else None
        self._lock = threading.Lock()
        self._queued: Job | None = None
        self._running: Job | None = None
        self._jobs: dict[str, Job] = {}
        self._wakeup = threading.Condition(self._lock)
        self._stopping = False
        self._runner = threading.Thread(target=self._run_loop, daemon=True, name="job-runner")

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> None:
        self.session.subscribe(bus.TOPIC_REQUEST, self._on_request)
        self.session.subscribe(bus.TOPIC_SENSOR_PREFIX + "#", self._on_sensor)
        self._runner.start()
        log.info("coverage service started")

    def stop(self) -> None:
        """Drain: supersede queued and running jobs, then stop the runner."""
        with self._lock:
            self._stopping = True
            queued, self._queued = self._queued, None
            running = self._running
            if running is not None:
                running.cancel_flag.set()
            self._wakeup.notify_all()
        if queued is not None:
            self._finish(queued, SUPERSEDED)
        self._runner.join(timeout=60.0)
        log.info("coverage service stopped")

    # -- bus handlers (must not block) ---------------------------------------

    def _on_request(self, topic: str, payload: bytes) -> None:
        try:
            req = bus.decode_message(payload, bus.CoverageRequest)
        except bus.BusError as exc:
            self._reject_undecodable(payload, exc)
            return
        try:
            self.submit_request(req)
        except Exception:
            log.exception("submit failed for job %s", req.job_id)

    def _reject_undecodable(self, payload: bytes, exc: Exception) -> None:
        """Publish a failed result if a job_id can be salvaged from the bytes."""
        log.warning("dropping undecodable coverage request: %s", exc)
        try:
            job_id = json.loads(payload.decode("utf-8", errors="replace")).get("job_id")
        except Exception:
            return
        if isinstance(job_id, str) and job_id and bus._ident_ok(job_id) and len(job_id) <= 128:
            result = bus.CoverageResult(job_id=job_id, status=FAILED, error=str(exc))
            self._publish_result(result)

    def _on_sensor(self, topic: str, payload: bytes) -> None:
        try:
            reading = bus.decode_message(payload, bus.SensorReading)
        except bus.BusError as exc:
            log.warning("dropping bad sensor payload on %s: %s", topic, exc)
            return
        self.ingest_sensor(reading)

    # -- operations ----------------------------------------------------------

    def submit_request(self, req: bus.CoverageRequest) -> Job:
        """Queue a job under the latest-wins policy and return it.

        Scene references are resolved (and hash-checked) here so a bad
        request fails immediately instead of occupying the slot.
        """
        req.validate()
        job = Job(job_id=req.job_id, request=req)
        with self._lock:
            if req.job_id in self._jobs:
                log.info("duplicate request for job %s ignored", req.job_id)
                return self._jobs[req.job_id]
            self._jobs[req.job_id] = job

        try:
            job.scene_text = self._resolve_scene(req)
        except Exception as exc:
            # rejected before ever occupying the queue slot, so this is not a
            # queued->failed scheduler transition; the job is terminal at birth
            job.state = FAILED
            job.finished = time.time()
            self._publish_result(
                bus.CoverageResult(job_id=job.job_id, status=FAILED, error=str(exc))
            )
            log.info("job %s rejected: %s", job.job_id, exc)
            return job

        with self._lock:
            displaced, self._queued = self._queued, job
            running = self._running
            if running is not None:
                running.cancel_flag.set()
            self._wakeup.notify_all()
        if displaced is not None:
            self._finish(displaced, SUPERSEDED)
        log.info("job %s queued", job.job_id)
        return job

    def ingest_sensor(self, reading: bus.SensorReading) -> TwinState:
        accepted = self.state.ingest(reading)
        if not accepted:
            log.debug("stale reading for %s ignored", reading.sensor_id)
        return self.state

    def query_state(self) -> dict[str, bus.SensorReading]:
        return self.state.snapshot()

    def send_actuator(self, cmd: bus.ActuatorCommand) -> None:
        """Publish the command, then append it to the audit log."""
        payload = bus.encode_message(cmd)
        self.session.publish(bus.actuator_topic(cmd.actuator_id), payload)
        entry = {
            "ts_ms": cmd.ts_ms,
            "actuator_id": cmd.actuator_id,
            "command": cmd.command,
            "args": cmd.args,
        }
        with self._lock:
            self.audit_log.append(entry)
            if self._audit_path is not None:
                with open(self._audit_path, "a", encoding="utf-8") as f:
                    f.write(json.dumps(entry, separators=(",", ":")) + "\n")

    def job_view(self) -> dict[str, str]:
        with self._lock:
            return {job_id: job.state for job_id, job in self._jobs.items()}

    def wait_idle(self, timeout: float = 60.0) -> bool:
        """True once no job is queued or running (test/synchronisation aid)."""
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            with self._lock:
                if self._queued is None and self._running is None:
                    return True
            time.sleep(0.01)
        return False

    # -- runner ---------------------------------------------------------------

    def _run_loop(self) -> None:
        while True:
            with self._lock:
                while self._queued is None and not self._stopping:
                    self._wakeup.wait()
                if self._stopping and self._queued is None:
                    return
                job, self._queued = self._queued, None
                self._running = job
            job.transition(RUNNING)
            log.info("job %s running", job.job_id)
            result = self.run_job(job)
            self._publish_result(result)
            with self._lock:
                self._running = None
            job.transition(result.status)
            log.info("job %s %s (%.3fs)", job.job_id, result.status, result.duration_s)
            if result.status == DONE:
                self.state.record_map(job.job_id, job.request.tx.to_transmitter().snapshot())

    def run_job(self, job: Job) -> bus.CoverageResult:
        """Execute one resolved job; returns its terminal CoverageResult."""
        req = job.request
        t0 = time.perf_counter()
        try:
            scene_text = job.scene_text
            if scene_text is None:
                scene_text = self._resolve_scene(req)
            scene = load_scene(scene_text)
            index = build_index(scene)
            cmap = simulate_coverage(
                scene,
                req.tx.to_transmitter(),
                req.grid.to_grid(),
                req.trace.to_config(),
                index=index,
                workers=self.workers,
                batch_rays=JOB_BATCH_RAYS,
                should_cancel=job.cancel_flag.is_set,
            )
        except TraceCancelled:
            return bus.CoverageResult(
                job_id=job.job_id, status=SUPERSEDED, duration_s=time.perf_counter() - t0
            )
        except (SceneParseError, bus.BusError, ValueError) as exc:
            return bus.CoverageResult(
                job_id=job.job_id,
                status=FAILED,
                duration_s=time.perf_counter() - t0,
                error=str(exc),
            )
        except Exception as exc:  # tracer crash must still produce a result
            log.exception("job %s crashed", job.job_id)
            return bus.CoverageResult(
                job_id=job.job_id,
                status=FAILED,
                duration_s=time.perf_counter() - t0,
                error=f"internal: {exc}",
            )
        map_b64 = base64.b64encode(dump_map(cmap).encode("utf-8")).decode("ascii")
        return bus.CoverageResult(
            job_id=job.job_id,
            status=DONE,
            duration_s=time.perf_counter() - t0,
            map_b64=map_b64,
        )

    # -- helpers ---------------------------------------------------------------

    def _resolve_scene(self, req: bus.CoverageRequest) -> str:
        if isinstance(req.scene, bus.SceneInline):
            return req.scene.document.decode("utf-8")
        ref = req.scene
        path = Path(ref.uri)
        if self._scene_root is not None and not path.is_absolute():
            path = self._scene_root / path
        data = path.read_bytes()
        digest = hashlib.sha256(data).hexdigest()
        if digest != ref.sha256.lower():
            raise ValueError(
                f"scene reference hash mismatch: expected sha256 {ref.sha256}, got {digest}"
            )
        return data.decode("utf-8")

    def _finish(self, job: Job, status: str) -> None:
        job.transition(status)
        self._publish_result(bus.CoverageResult(job_id=job.job_id, status=status))
        log.info("job %s %s", job.job_id, status)

    def _publish_result(self, result: bus.CoverageResult) -> None:
        try:
            self.session.publish(bus.result_topic(result.job_id), bus.encode_message(result))
        except bus.SessionError:
            log.error("could not publish result for job %s (session closed)", result.job_id)
