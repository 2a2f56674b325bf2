import base64
import hashlib
import json
import random
import threading
import time

import numpy as np
import pytest

from raycover import bus, mqtt_wire
from raycover.bus import (
    ActuatorCommand,
    CoverageRequest,
    GridParams,
    SceneInline,
    SceneRef,
    SensorReading,
    SessionError,
    TraceParams,
    TxParams,
    decode_message,
    encode_message,
)
from raycover.loopback import LoopbackBroker
from raycover.mapio import parse_map
from raycover.service import DONE, FAILED, SUPERSEDED, CoverageService, Job, TwinState
from raycover.coverage import simulate_coverage
from raycover.propagation import TraceConfig, Transmitter
from raycover.scene import load_scene

from conftest import wall_scene

SCENE_TEXT = wall_scene("x", 6.0, (-20, 20), (0, 10), 0.8)


def request(job_id, rays=3000, seed=1, scene=None, grid=None):
    return CoverageRequest(
        job_id=job_id,
        tx=TxParams(0.0, 0.0, 4.0, 2.4e9),
        grid=grid or GridParams(-4.0, -4.0, 4.0, 4.0, 1.0),
        trace=TraceParams(rays=rays, max_depth=1, seed=seed),
        scene=scene or SceneInline(SCENE_TEXT.encode()),
    )


class FakeSession:
    """In-memory BusSession for unit tests."""

    def __init__(self):
        self.published = []
        self.subscriptions = []
        self.closed = False

    def publish(self, topic, payload):
        if self.closed:
            raise SessionError("closed")
        self.published.append((topic, payload))

    def subscribe(self, topic_filter, handler):
        self.subscriptions.append((topic_filter, handler))

    def close(self):
        self.closed = True

    def results(self):
        out = []
        for topic, payload in self.published:
            if topic.startswith(bus.TOPIC_RESULT_PREFIX):
                out.append(decode_message(payload, bus.CoverageResult))
        return out


class ServiceHarness:
    """Service wired to a real loopback broker, plus a observer client."""

    def __init__(self, broker, **kw):
        self.session = mqtt_wire.connect(broker.host, broker.port, "svc")
        self.service = CoverageService(self.session, **kw)
        self.observer = mqtt_wire.connect(broker.host, broker.port, "obs")
        self.results = []
        self.result_event = threading.Event()
        self.observer.subscribe(bus.TOPIC_RESULT_PREFIX + "#", self._on_result)
        self.service.start()

    def _on_result(self, topic, payload):
        self.results.append(decode_message(payload, bus.CoverageResult))
        self.result_event.set()

    def submit_raw(self, payload: bytes):
        self.observer.publish(bus.TOPIC_REQUEST, payload)

    def submit(self, req):
        self.submit_raw(encode_message(req))

    def wait_results(self, count, timeout=60.0):
        deadline = time.monotonic() + timeout
        while len(self.results) < count and time.monotonic() < deadline:
            time.sleep(0.01)
        return len(self.results) >= count

    def close(self):
        self.service.stop()
        self.session.close()
        self.observer.close()


class TestJobStateMachine:
    def test_legal_transitions(self):
        job = Job("j", request("j"))
        job.transition("running")
        job.transition("done")
        assert job.finished is not None

    def test_illegal_transitions(self):
        job = Job("j", request("j"))
        job.transition("superseded")
        with pytest.raises(Exception):
            job.transition("running")


class TestTwinState:
    def test_first_reading_stored(self):
        state = TwinState()
        state.ingest(SensorReading("temp-1", "temperature", 20.0, "C", 100))
        assert state.snapshot()["temp-1"].value == 20.0

    def test_stale_reading_ignored(self):
        state = TwinState()
        state.ingest(SensorReading("temp-1", "temperature", 20.0, "C", 100))
        assert not state.ingest(SensorReading("temp-1", "temperature", 19.0, "C", 50))
        assert state.snapshot()["temp-1"].ts_ms == 100
        assert state.stale_count == 1

    def test_equal_timestamp_replaces(self):
        state = TwinState()
        state.ingest(SensorReading("temp-1", "temperature", 20.0, "C", 100))
        assert state.ingest(SensorReading("temp-1", "temperature", 21.0, "C", 100))
        assert state.snapshot()["temp-1"].value == 21.0

    def test_sensors_independent(self):
        state = TwinState()
        state.ingest(SensorReading("a", "temperature", 1.0, "C", 10))
        state.ingest(SensorReading("b", "weather", "rain", "", 5))
        snap = state.snapshot()
        assert set(snap) == {"a", "b"}

    def test_snapshot_is_point_in_time(self):
        state = TwinState()
        state.ingest(SensorReading("a", "temperature", 1.0, "C", 10))
        snap = state.snapshot()
        state.ingest(SensorReading("a", "temperature", 2.0, "C", 20))
        assert snap["a"].value == 1.0

    def test_table_size_counts_distinct_ids(self):
        state = TwinState()
        for k in range(40):
            state.ingest(SensorReading(f"s{k % 7}", "custom", k, "", k + 1))
        assert len(state.snapshot()) == 7


class TestServiceUnit:
    def test_done_result_with_map(self):
        session = FakeSession()
        service = CoverageService(session)
        job = service.submit_request(request("job-1"))
        service._queued = None  # run synchronously instead of via the thread
        result = service.run_job(job)
        assert result.status == DONE
        cmap = parse_map(base64.b64decode(result.map_b64).decode())
        assert cmap.grid.n_i == 8
        assert result.duration_s > 0

    def test_bad_hash_fails_immediately(self, tmp_path):
        scene_file = tmp_path / "scene.obj"
        scene_file.write_text(SCENE_TEXT)
        session = FakeSession()
        service = CoverageService(session)
        req = request("job-h", scene=SceneRef(uri=str(scene_file), sha256="0" * 64))
        job = service.submit_request(req)
        assert job.state == FAILED
        results = session.results()
        assert len(results) == 1
        assert results[0].status == FAILED
        assert "hash" in results[0].error

    def test_good_hash_reference(self, tmp_path):
        scene_file = tmp_path / "scene.obj"
        scene_file.write_text(SCENE_TEXT)
        digest = hashlib.sha256(SCENE_TEXT.encode()).hexdigest()
        session = FakeSession()
        service = CoverageService(session)
        job = service.submit_request(request("job-r", scene=SceneRef(uri=str(scene_file), sha256=digest)))
        assert job.state == "queued"
        assert job.scene_text == SCENE_TEXT

    def test_empty_scene_job_equals_free_space_map(self):
        session = FakeSession()
        service = CoverageService(session)
        req = request("job-free", rays=20_000, scene=SceneInline(b""))
        job = service.submit_request(req)
        result = service.run_job(job)
        assert result.status == DONE
        got = parse_map(base64.b64decode(result.map_b64).decode())
        expected = simulate_coverage(
            load_scene(""),
            Transmitter(position=(0.0, 0.0, 4.0), frequency_hz=2.4e9),
            req.grid.to_grid(),
            TraceConfig(ray_budget=20_000, max_depth=1, seed=1),
        )
        np.testing.assert_allclose(got.gain, expected.gain, rtol=1e-9)
        assert (got.hits == expected.hits).all()

    def test_cancelled_job_returns_superseded_without_map(self):
        session = FakeSession()
        service = CoverageService(session)
        job = service.submit_request(request("job-c", rays=500_000))
        job.cancel_flag.set()
        result = service.run_job(job)
        assert result.status == SUPERSEDED
        assert result.map_b64 is None

    def test_duplicate_job_id_ignored(self):
        session = FakeSession()
        service = CoverageService(session)
        first = service.submit_request(request("dup"))
        second = service.submit_request(request("dup"))
        assert first is second

    def test_send_actuator_publishes_then_logs(self):
        session = FakeSession()
        service = CoverageService(session)
        service.send_actuator(ActuatorCommand("siren", "on", {"level": 3}, 777))
        assert len(session.published) == 1
        topic, payload = session.published[0]
        assert topic == "dt/actuators/siren"
        decoded = decode_message(payload, ActuatorCommand)
        assert decoded.command == "on"
        assert service.audit_log[0]["actuator_id"] == "siren"

    def test_actuator_closed_session_no_audit(self):
        session = FakeSession()
        service = CoverageService(session)
        session.close()
        with pytest.raises(SessionError):
            service.send_actuator(ActuatorCommand("siren", "off", {}, 778))
        assert service.audit_log == []

    def test_audit_order_and_file(self, tmp_path):
        audit = tmp_path / "audit.log"
        session = FakeSession()
        service = CoverageService(session, audit_log_path=audit)
        for k in range(5):
            service.send_actuator(ActuatorCommand("a", f"cmd{k}", {}, k + 1))
        assert [e["command"] for e in service.audit_log] == [f"cmd{k}" for k in range(5)]
        lines = audit.read_text().splitlines()
        assert [json.loads(line)["command"] for line in lines] == [f"cmd{k}" for k in range(5)]


class TestServiceOnBus:
    def test_request_to_done_result(self):
        with LoopbackBroker() as broker:
            harness = ServiceHarness(broker)
            try:
                harness.submit(request("e2e-1"))
                assert harness.wait_results(1)
                assert harness.results[0].job_id == "e2e-1"
                assert harness.results[0].status == DONE
                cmap = parse_map(base64.b64decode(harness.results[0].map_b64).decode())
                assert cmap.hits.sum() > 0
            finally:
                harness.close()

    def test_latest_wins_two_quick_requests(self):
        with LoopbackBroker() as broker:
            harness = ServiceHarness(broker)
            try:
                # first job is big enough to still be queued/running on arrival
                harness.submit(request("slow", rays=2_000_000))
                harness.submit(request("fast", rays=3000, seed=2))
                assert harness.wait_results(2)
                by_id = {r.job_id: r for r in harness.results}
                assert by_id["slow"].status == SUPERSEDED
                assert by_id["slow"].map_b64 is None
                assert by_id["fast"].status == DONE
            finally:
                harness.close()

    def test_sensor_ingestion_over_bus(self):
        with LoopbackBroker() as broker:
            harness = ServiceHarness(broker)
            try:
                r1 = SensorReading("temp-1", "temperature", 21.5, "C", 100)
                r2 = SensorReading("temp-1", "temperature", 20.0, "C", 50)  # stale
                r3 = SensorReading("wx", "weather", "rain", "", 10)
                for r in (r1, r2, r3):
                    harness.observer.publish(bus.sensor_topic(r.sensor_id), encode_message(r))
                deadline = time.monotonic() + 10
                while time.monotonic() < deadline:
                    snap = harness.service.query_state()
                    if len(snap) == 2 and harness.service.state.stale_count == 1:
                        break
                    time.sleep(0.02)
                snap = harness.service.query_state()
                assert snap["temp-1"].ts_ms == 100
                assert snap["wx"].value == "rain"
                assert harness.service.state.stale_count == 1
            finally:
                harness.close()

    def test_undecodable_request_with_salvageable_job_id(self):
        with LoopbackBroker() as broker:
            harness = ServiceHarness(broker)
            try:
                doc = json.loads(encode_message(request("broken")).decode())
                doc["trace"]["rays"] = -5
                harness.submit_raw(json.dumps(doc).encode())
                assert harness.wait_results(1)
                assert harness.results[0].job_id == "broken"
                assert harness.results[0].status == FAILED
            finally:
                harness.close()

    def test_randomized_schedule_exactly_one_terminal_result(self):
        rng = random.Random(1234)
        with LoopbackBroker() as broker:
            harness = ServiceHarness(broker)
            try:
                n = 50
                max_running = 0
                for k in range(n):
                    harness.submit(request(f"job-{k:03d}", rays=rng.choice([2000, 30_000, 400_000]), seed=k))
                    view = harness.service.job_view()
                    max_running = max(max_running, sum(s == "running" for s in view.values()))
                    if rng.random() < 0.4:
                        time.sleep(rng.random() * 0.05)
                assert harness.service.wait_idle(120.0)
                assert harness.wait_results(n, timeout=30.0)
                seen = {}
                for result in harness.results:
                    seen[result.job_id] = seen.get(result.job_id, 0) + 1
                    assert result.status in (DONE, FAILED, SUPERSEDED)
                    if result.status == SUPERSEDED:
                        assert result.map_b64 is None
                assert sorted(seen) == [f"job-{k:03d}" for k in range(n)]
                assert all(count == 1 for count in seen.values())
                view = harness.service.job_view()
                assert all(state in (DONE, FAILED, SUPERSEDED) for state in view.values())
                assert max_running <= 1
                assert sum(state == DONE for state in view.values()) >= 1
            finally:
                harness.close()

    def test_stop_supersedes_running_job(self):
        with LoopbackBroker() as broker:
            harness = ServiceHarness(broker)
            try:
                harness.submit(request("long", rays=5_000_000))
                deadline = time.monotonic() + 20
                while time.monotonic() < deadline:
                    if harness.service.job_view().get("long") == "running":
                        break
                    time.sleep(0.01)
                harness.service.stop()
                assert harness.wait_results(1)
                assert harness.results[0].status == SUPERSEDED
            finally:
                harness.session.close()
                harness.observer.close()
