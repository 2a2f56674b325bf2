"""Digital-twin bus vocabulary: message types, JSON codec, topic grammar.

Wire payloads are UTF-8 JSON with fixed field names and deterministic field
order. The four message kinds and their topics:

    CoverageRequest   dt/coverage/request
    CoverageResult    dt/coverage/result/<job_id>
    SensorReading     dt/sensors/<sensor_id>
    ActuatorCommand   dt/actuators/<actuator_id>

Scene documents travel inline as base64 (capped at 8 MiB) or by
reference+sha256. Because job_id and the ids are embedded in topic names they
must not contain the topic separator or wildcard characters.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Union

from .coverage import CoverageGrid, make_grid
from .propagation import AntennaPattern, TraceConfig, Transmitter

MAX_INLINE_SCENE = 8 * 1024 * 1024  # bytes, pre-base64
MAX_JOB_ID = 128

TOPIC_REQUEST = "dt/coverage/request"
TOPIC_RESULT_PREFIX = "dt/coverage/result/"
TOPIC_SENSOR_PREFIX = "dt/sensors/"
TOPIC_ACTUATOR_PREFIX = "dt/actuators/"


class BusError(Exception):
    pass


class ValidationError(BusError, ValueError):
    """Message violates an invariant of its kind."""


class ParseError(BusError, ValueError):
    """Payload is not a well-formed document. ``position`` is a byte offset."""

    def __init__(self, message: str, position: int = 0):
        super().__init__(message)
        self.position = position


class KindError(BusError, ValueError):
    """Payload is well-formed but does not match the expected message kind."""


class SessionError(BusError):
    """Operation on a closed or broken session."""


class BrokerConnectionError(BusError):
    """Endpoint unreachable after the retry policy was exhausted."""


class CredentialError(BusError):
    """Broker rejected the credentials; not retried."""


class TopicError(ValidationError):
    """Topic or filter violates the grammar."""


def _ident_ok(value: str) -> bool:
    return bool(value) and not any(c in value for c in "/+#\x00")


def validate_topic(topic: str) -> None:
    if not topic or "\x00" in topic:
        raise TopicError(f"bad topic {topic!r}")
    if "+" in topic or "#" in topic:
        raise TopicError(f"wildcards not allowed in publish topic {topic!r}")
    if len(topic.encode("utf-8")) > 65535:
        raise TopicError("topic longer than 65535 bytes")


def validate_filter(filt: str) -> None:
    if not filt or "\x00" in filt:
        raise TopicError(f"bad topic filter {filt!r}")
    levels = filt.split("/")
    for pos, level in enumerate(levels):
        if "#" in level:
            if level != "#" or pos != len(levels) - 1:
                raise TopicError(f"'#' must be the final, whole level in {filt!r}")
        if "+" in level and level != "+":
            raise TopicError(f"'+' must be a whole level in {filt!r}")


def filter_matches(filt: str, topic: str) -> bool:
    """MQTT filter semantics: '+' one level, trailing '#' any remainder."""
    flevels = filt.split("/")
    tlevels = topic.split("/")
    for pos, fl in enumerate(flevels):
        if fl == "#":
            return True
        if pos >= len(tlevels):
            return False
        if fl != "+" and fl != tlevels[pos]:
            return False
    if len(tlevels) > len(flevels):
        return False
    return True


@dataclass(frozen=True)
class SceneInline:
    document: bytes


@dataclass(frozen=True)
class SceneRef:
    uri: str
    sha256: str


SceneSource = Union[SceneInline, SceneRef]


@dataclass(frozen=True)
class TxParams:
    x: float
    y: float
    z: float
    frequency_hz: float
    antenna_kind: str = "isotropic"
    antenna_exponent: float = 0.0
    boresight: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def validate(self) -> None:
        if self.frequency_hz <= 0:
            raise ValidationError("tx.frequency_hz must be > 0")
        if self.antenna_kind not in ("isotropic", "directional"):
            raise ValidationError(f"unknown antenna kind {self.antenna_kind!r}")
        if self.antenna_exponent < 0:
            raise ValidationError("antenna exponent must be >= 0")
        n = math.sqrt(sum(c * c for c in self.boresight))
        if abs(n - 1.0) > 1e-9:
            raise ValidationError("tx.boresight must be unit length")

    def to_transmitter(self) -> Transmitter:
        return Transmitter(
            position=(self.x, self.y, self.z),
            frequency_hz=self.frequency_hz,
            antenna=AntennaPattern(self.antenna_kind, self.antenna_exponent),
            boresight=self.boresight,
        )


@dataclass(frozen=True)
class GridParams:
    x0: float
    y0: float
    x1: float
    y1: float
    cell_size: float
    height: float = 1.5

    def validate(self) -> None:
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValidationError("grid extent must satisfy x1 > x0 and y1 > y0")
        if self.cell_size <= 0:
            raise ValidationError("grid.cell_size must be > 0")

    def to_grid(self) -> CoverageGrid:
        return make_grid((self.x0, self.y0, self.x1, self.y1), self.cell_size, self.height)


@dataclass(frozen=True)
class TraceParams:
    rays: int
    max_depth: int = 3
    min_amplitude: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.rays < 1:
            raise ValidationError("trace.rays must be >= 1")
        if self.max_depth < 0:
            raise ValidationError("trace.max_depth must be >= 0")
        if self.min_amplitude < 0:
            raise ValidationError("trace.min_amplitude must be >= 0")
        if not -(2**63) <= self.seed < 2**64:
            raise ValidationError("trace.seed must fit in 64 bits")

    def to_config(self) -> TraceConfig:
        return TraceConfig(
            ray_budget=self.rays,
            max_depth=self.max_depth,
            min_amplitude=self.min_amplitude,
            seed=self.seed,
        )


@dataclass(frozen=True)
class CoverageRequest:
    job_id: str
    tx: TxParams
    grid: GridParams
    trace: TraceParams
    scene: SceneSource

    def validate(self) -> None:
        if not self.job_id or len(self.job_id) > MAX_JOB_ID:
            raise ValidationError("job_id must be non-empty and at most 128 characters")
        if not _ident_ok(self.job_id):
            raise ValidationError("job_id must not contain '/', '+', '#' or NUL")
        self.tx.validate()
        self.grid.validate()
        self.trace.validate()
        if isinstance(self.scene, SceneInline):
            if len(self.scene.document) > MAX_INLINE_SCENE:
                raise ValidationError(
                    f"inline scene exceeds {MAX_INLINE_SCENE} bytes; use a reference"
                )
        elif isinstance(self.scene, SceneRef):
            if not self.scene.uri or not self.scene.sha256:
                raise ValidationError("scene reference needs uri and sha256")
        else:
            raise ValidationError("scene source must be inline or reference")


@dataclass(frozen=True)
class CoverageResult:
    job_id: str
    status: str  # done | failed | superseded
    duration_s: float = 0.0
    map_b64: str | None = None
    error: str | None = None

    def validate(self) -> None:
        if not self.job_id or len(self.job_id) > MAX_JOB_ID or not _ident_ok(self.job_id):
            raise ValidationError("bad job_id")
        if self.status not in ("done", "failed", "superseded"):
            raise ValidationError(f"unknown status {self.status!r}")
        if (self.status == "done") != (self.map_b64 is not None):
            raise ValidationError("map payload present iff status is done")
        if (self.status == "failed") != (self.error is not None):
            raise ValidationError("error text present iff status is failed")
        if self.duration_s < 0:
            raise ValidationError("duration_s must be >= 0")


@dataclass(frozen=True)
class SensorReading:
    sensor_id: str
    kind: str  # temperature | weather | custom
    value: float | int | str
    unit: str
    ts_ms: int

    def validate(self) -> None:
        if not self.sensor_id or not _ident_ok(self.sensor_id):
            raise ValidationError("sensor_id must be non-empty and topic-safe")
        if self.kind not in ("temperature", "weather", "custom"):
            raise ValidationError(f"unknown sensor kind {self.kind!r}")
        if not isinstance(self.value, (int, float, str)) or isinstance(self.value, bool):
            raise ValidationError("value must be a number or text")
        if not isinstance(self.ts_ms, int) or isinstance(self.ts_ms, bool) or self.ts_ms <= 0:
            raise ValidationError("ts_ms must be a positive integer")


@dataclass(frozen=True)
class ActuatorCommand:
    actuator_id: str
    command: str
    args: dict = field(default_factory=dict)
    ts_ms: int = 1

    def validate(self) -> None:
        if not self.actuator_id or not _ident_ok(self.actuator_id):
            raise ValidationError("actuator_id must be non-empty and topic-safe")
        if not self.command:
            raise ValidationError("command must be non-empty")
        if not isinstance(self.args, dict) or not all(
            isinstance(k, str) and isinstance(v, (str, int, float, bool))
            for k, v in self.args.items()
        ):
            raise ValidationError("args must map text keys to scalar values")
        if not isinstance(self.ts_ms, int) or isinstance(self.ts_ms, bool) or self.ts_ms <= 0:
            raise ValidationError("ts_ms must be a positive integer")


Message = Union[CoverageRequest, CoverageResult, SensorReading, ActuatorCommand]


def encode_message(msg: Message) -> bytes:
    """Canonical JSON bytes for a valid message; field order is fixed."""
    msg.validate()
    if isinstance(msg, CoverageRequest):
        if isinstance(msg.scene, SceneInline):
            scene = {"inline_b64": base64.b64encode(msg.scene.document).decode("ascii")}
        else:
            scene = {"ref": {"uri": msg.scene.uri, "sha256": msg.scene.sha256}}
        doc = {
            "job_id": msg.job_id,
            "tx": {
                "x": msg.tx.x,
                "y": msg.tx.y,
                "z": msg.tx.z,
                "frequency_hz": msg.tx.frequency_hz,
                "antenna": {"kind": msg.tx.antenna_kind, "exponent": msg.tx.antenna_exponent},
                "boresight": {
                    "x": msg.tx.boresight[0],
                    "y": msg.tx.boresight[1],
                    "z": msg.tx.boresight[2],
                },
            },
            "grid": {
                "x0": msg.grid.x0,
                "y0": msg.grid.y0,
                "x1": msg.grid.x1,
                "y1": msg.grid.y1,
                "cell_size": msg.grid.cell_size,
                "height": msg.grid.height,
            },
            "trace": {
                "rays": msg.trace.rays,
                "max_depth": msg.trace.max_depth,
                "min_amplitude": msg.trace.min_amplitude,
                "seed": msg.trace.seed,
            },
            "scene": scene,
        }
    elif isinstance(msg, CoverageResult):
        doc = {"job_id": msg.job_id, "status": msg.status, "duration_s": msg.duration_s}
        if msg.map_b64 is not None:
            doc["map_b64"] = msg.map_b64
        if msg.error is not None:
            doc["error"] = msg.error
    elif isinstance(msg, SensorReading):
        doc = {
            "sensor_id": msg.sensor_id,
            "kind": msg.kind,
            "value": msg.value,
            "unit": msg.unit,
            "ts_ms": msg.ts_ms,
        }
    elif isinstance(msg, ActuatorCommand):
        doc = {
            "actuator_id": msg.actuator_id,
            "command": msg.command,
            "args": msg.args,
            "ts_ms": msg.ts_ms,
        }
    else:
        raise ValidationError(f"unknown message type {type(msg).__name__}")
    return json.dumps(doc, separators=(",", ":")).encode("utf-8")


def _require(doc: dict, key: str, types, kind: str):
    if key not in doc:
        raise KindError(f"{kind} payload missing field {key!r}")
    value = doc[key]
    if types is not None and not isinstance(value, types):
        raise KindError(f"{kind} field {key!r} has wrong type {type(value).__name__}")
    return value


def _num(doc: dict, key: str, kind: str) -> float:
    v = _require(doc, key, (int, float), kind)
    if isinstance(v, bool):
        raise KindError(f"{kind} field {key!r} has wrong type bool")
    return float(v)


def _int(doc: dict, key: str, kind: str) -> int:
    # exact: 64-bit values (seeds) must not round-trip through float
    v = _require(doc, key, int, kind)
    if isinstance(v, bool):
        raise KindError(f"{kind} field {key!r} has wrong type bool")
    return v


def decode_message(payload: bytes, expected_kind: type) -> Message:
    """Parse and re-validate a wire payload as the given message type.

    Raises ParseError for malformed documents, KindError when the document
    does not have the expected kind's shape, ValidationError when an
    invariant fails.
    """
    try:
        doc = json.loads(payload.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ParseError(f"payload is not UTF-8: {exc}", exc.start) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad JSON at offset {exc.pos}: {exc.msg}", exc.pos) from exc
    if not isinstance(doc, dict):
        raise KindError("payload is not a JSON object")

    name = expected_kind.__name__
    if expected_kind is CoverageRequest:
        tx_doc = _require(doc, "tx", dict, name)
        ant = _require(tx_doc, "antenna", dict, name)
        bs = _require(tx_doc, "boresight", dict, name)
        grid_doc = _require(doc, "grid", dict, name)
        trace_doc = _require(doc, "trace", dict, name)
        scene_doc = _require(doc, "scene", dict, name)
        if "inline_b64" in scene_doc and "ref" in scene_doc:
            raise ValidationError("scene must have exactly one of inline_b64 or ref")
        if "inline_b64" in scene_doc:
            raw = scene_doc["inline_b64"]
            if not isinstance(raw, str):
                raise KindError("scene.inline_b64 must be a string")
            try:
                document = base64.b64decode(raw.encode("ascii"), validate=True)
            except Exception as exc:
                raise ParseError(f"scene.inline_b64 is not valid base64: {exc}") from exc
            scene: SceneSource = SceneInline(document)
        elif "ref" in scene_doc:
            ref = scene_doc["ref"]
            if not isinstance(ref, dict):
                raise KindError("scene.ref must be an object")
            scene = SceneRef(
                uri=str(_require(ref, "uri", str, name)),
                sha256=str(_require(ref, "sha256", str, name)),
            )
        else:
            raise ValidationError("scene must have exactly one of inline_b64 or ref")
        msg: Message = CoverageRequest(
            job_id=_require(doc, "job_id", str, name),
            tx=TxParams(
                x=_num(tx_doc, "x", name),
                y=_num(tx_doc, "y", name),
                z=_num(tx_doc, "z", name),
                frequency_hz=_num(tx_doc, "frequency_hz", name),
                antenna_kind=_require(ant, "kind", str, name),
                antenna_exponent=_num(ant, "exponent", name),
                boresight=(_num(bs, "x", name), _num(bs, "y", name), _num(bs, "z", name)),
            ),
            grid=GridParams(
                x0=_num(grid_doc, "x0", name),
                y0=_num(grid_doc, "y0", name),
                x1=_num(grid_doc, "x1", name),
                y1=_num(grid_doc, "y1", name),
                cell_size=_num(grid_doc, "cell_size", name),
                height=_num(grid_doc, "height", name) if "height" in grid_doc else 1.5,
            ),
            trace=TraceParams(
                rays=_int(trace_doc, "rays", name),
                max_depth=_int(trace_doc, "max_depth", name),
                min_amplitude=(
                    _num(trace_doc, "min_amplitude", name)
                    if "min_amplitude" in trace_doc
                    else 0.0
                ),
                seed=_int(trace_doc, "seed", name),
            ),
            scene=scene,
        )
    elif expected_kind is CoverageResult:
        msg = CoverageResult(
            job_id=_require(doc, "job_id", str, name),
            status=_require(doc, "status", str, name),
            duration_s=_num(doc, "duration_s", name),
            map_b64=doc.get("map_b64"),
            error=doc.get("error"),
        )
        if msg.map_b64 is not None and not isinstance(msg.map_b64, str):
            raise KindError("map_b64 must be a string")
        if msg.error is not None and not isinstance(msg.error, str):
            raise KindError("error must be a string")
    elif expected_kind is SensorReading:
        value = _require(doc, "value", (int, float, str), name)
        ts = _require(doc, "ts_ms", int, name)
        msg = SensorReading(
            sensor_id=_require(doc, "sensor_id", str, name),
            kind=_require(doc, "kind", str, name),
            value=value,
            unit=_require(doc, "unit", str, name),
            ts_ms=ts,
        )
    elif expected_kind is ActuatorCommand:
        msg = ActuatorCommand(
            actuator_id=_require(doc, "actuator_id", str, name),
            command=_require(doc, "command", str, name),
            args=_require(doc, "args", dict, name),
            ts_ms=_require(doc, "ts_ms", int, name),
        )
    else:
        raise KindError(f"unsupported message kind {expected_kind!r}")

    msg.validate()
    return msg


def result_topic(job_id: str) -> str:
    return TOPIC_RESULT_PREFIX + job_id


def sensor_topic(sensor_id: str) -> str:
    return TOPIC_SENSOR_PREFIX + sensor_id


def actuator_topic(actuator_id: str) -> str:
    return TOPIC_ACTUATOR_PREFIX + actuator_id


MessageHandler = Callable[[str, bytes], None]


class BusSession(Protocol):
    """Contract shared by the MQTT client session and any test double.

    publish delivers at-least-once to the broker; subscribe registers a
    handler invoked once per received message with messages from one topic
    arriving in delivery order. Both raise SessionError on a closed session.
    """

    def publish(self, topic: str, payload: bytes) -> None: ...

    def subscribe(self, topic_filter: str, handler: MessageHandler) -> None: ...

    def close(self) -> None: ...
