"""Surveillance and alerting systems: detection, deduplication, server selection."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .messages import (
    AlertAck,
    CompletionBroadcast,
    IncidentAlert,
    Message,
    Ping,
    Pong,
    Severity,
)


@dataclass(frozen=True)
class SensorReading:
    sas_id: str
    sensor_id: str
    location: int
    hazard_type: str
    magnitude: float
    timestamp: int

    def __post_init__(self):
        if self.magnitude < 0:
            raise ValueError("magnitude must be non-negative")


@dataclass(frozen=True)
class SasConfig:
    sas_id: str
    location: int
    detection_threshold: float
    server_list: tuple[str, ...]
    ping_timeout: int = 5000
    max_retries: int = 3
    dedup_window: int = 10000
    alert_ack_timeout: int | None = None

    def __post_init__(self):
        if not self.server_list:
            raise ValueError("server_list must not be empty")
        if self.detection_threshold <= 0:
            raise ValueError("detection_threshold must be positive")
        if self.max_retries < 1:
            raise ValueError("max_retries must be at least 1")

    @property
    def ack_timeout(self) -> int:
        return self.ping_timeout if self.alert_ack_timeout is None else self.alert_ack_timeout


@dataclass(frozen=True)
class Detection:
    location: int
    hazard: str
    severity: Severity
    magnitude: float
    timestamp: int
    sensors: int = 1


def severity_for(magnitude: float, threshold: float) -> Severity | None:
    """Bands [t, 2t) low, [2t, 4t) medium, >= 4t high; below t nothing."""
    if magnitude < threshold:
        return None
    if magnitude < 2 * threshold:
        return Severity.LOW
    if magnitude < 4 * threshold:
        return Severity.MEDIUM
    return Severity.HIGH


_SEVERITY_RANK = {Severity.LOW: 0, Severity.MEDIUM: 1, Severity.HIGH: 2}


def max_severity(a: Severity, b: Severity) -> Severity:
    return a if _SEVERITY_RANK[a] >= _SEVERITY_RANK[b] else b


def detect(config: SasConfig, readings: Sequence[SensorReading]) -> Detection | None:
    if not readings:
        return None
    for r in readings:
        if r.location != config.location:
            raise ValueError(f"reading from {r.location} does not belong to SAS at {config.location}")
    # argmax magnitude; first reading wins ties
    top = max(readings, key=lambda r: r.magnitude)
    sev = severity_for(top.magnitude, config.detection_threshold)
    if sev is None:
        return None
    firing = sum(1 for r in readings if r.magnitude >= config.detection_threshold)
    return Detection(config.location, top.hazard_type, sev, top.magnitude,
                     max(r.timestamp for r in readings), firing)


class AlertAggregator:
    """Central alert device: one alert per (location, hazard) per window.

    A window opens at the first detection for a key and covers detections
    at most ``dedup_window`` later.
    """

    def __init__(self, config: SasConfig, required_types: Callable[[str], Iterable[str]]):
        self.config = config
        self.required_types = required_types
        self._open: dict[tuple[int, str], tuple[int, str]] = {}
        self._count = 0

    def window_for(self, det: Detection) -> str | None:
        """Incident id of the open window covering ``det``, if any."""
        opened = self._open.get((det.location, det.hazard))
        if opened is not None and det.timestamp - opened[0] <= self.config.dedup_window:
            return opened[1]
        return None

    def offer(self, det: Detection) -> IncidentAlert | None:
        if self.window_for(det) is not None:
            return None
        self._count += 1
        incident_id = f"{self.config.sas_id}-{self._count}"
        self._open[(det.location, det.hazard)] = (det.timestamp, incident_id)
        return self._alert(incident_id, det, det.severity)

    def _alert(self, incident_id: str, det: Detection, severity: Severity) -> IncidentAlert:
        return IncidentAlert(
            incident_id=incident_id,
            sender=self.config.sas_id,
            receiver="",
            timestamp=det.timestamp,
            location=det.location,
            hazard=det.hazard,
            severity=severity,
            required_types=tuple(sorted(set(self.required_types(det.hazard)))),
            origin=self.config.sas_id,
            detected_at=det.timestamp,
        )


def aggregate(
    config: SasConfig,
    detections: Iterable[Detection],
    required_types: Callable[[str], Iterable[str]] = lambda h: (h,),
) -> list[IncidentAlert]:
    """Collapse detections into alerts, one per key and window.

    Each alert carries the maximum severity seen inside its window.
    """
    agg = AlertAggregator(config, required_types)
    alerts: dict[str, IncidentAlert] = {}
    for det in sorted(detections, key=lambda d: d.timestamp):
        alert = agg.offer(det)
        if alert is not None:
            alerts[alert.incident_id] = alert
            continue
        iid = agg.window_for(det)
        prev = alerts[iid]
        sev = max_severity(prev.severity, det.severity)
        if sev is not prev.severity:
            alerts[iid] = dataclasses.replace(prev, severity=sev)
    return list(alerts.values())


@dataclass
class Delivery:
    alert: IncidentAlert
    index: int = 0
    passes: int = 0
    attempt: int = 0
    phase: str = "ping"  # ping | alert | delivered | failed
    failovers: int = 0
    server: str | None = None


class SurveillanceSystem:
    """SAS actor: turns sensor batches into at most one alert per incident
    and delivers it to the first responsive edge server in list order."""

    def __init__(self, config: SasConfig, required_types: Callable[[str], Iterable[str]]):
        self.config = config
        self.id = config.sas_id
        self.aggregator = AlertAggregator(config, required_types)
        self.deliveries: dict[str, Delivery] = {}

    def on_sensor_batch(self, readings: Sequence[SensorReading], ctx) -> IncidentAlert | None:
        det = detect(self.config, readings)
        if det is None:
            ctx.log("no_detection", actor=self.id, readings=len(readings))
            return None
        alert = self.aggregator.offer(det)
        if alert is None:
            ctx.log("dedup_merged", actor=self.id, incident=self.aggregator.window_for(det),
                    hazard=det.hazard, severity=det.severity.value, sensors=det.sensors)
            return None
        ctx.log("detect", actor=self.id, incident=alert.incident_id, location=alert.location,
                hazard=alert.hazard, severity=alert.severity.value, sensors=det.sensors)
        ctx.metrics.on_detect(alert.incident_id, alert.location, alert.hazard,
                             alert.severity.value, ctx.now)
        d = Delivery(alert)
        self.deliveries[alert.incident_id] = d
        self._ping(d, ctx)
        return alert

    def _target(self, d: Delivery) -> str:
        return self.config.server_list[d.index]

    def _ping(self, d: Delivery, ctx) -> None:
        d.attempt += 1
        d.phase = "ping"
        server = self._target(d)
        ctx.send(Ping(incident_id=d.alert.incident_id, sender=self.id, receiver=server,
                      attempt=d.attempt))
        ctx.set_timer(self.id, self.config.ping_timeout, "ping_timeout",
                      incident=d.alert.incident_id, attempt=d.attempt)

    def on_message(self, msg: Message, ctx) -> None:
        d = self.deliveries.get(msg.incident_id)
        if isinstance(msg, Pong):
            if d is None or d.phase != "ping" or msg.attempt != d.attempt:
                ctx.log("late_pong", actor=self.id, incident=msg.incident_id, server=msg.sender)
                return
            d.phase = "alert"
            ctx.send(dataclasses.replace(d.alert, receiver=msg.sender))
            ctx.set_timer(self.id, self.config.ack_timeout, "ack_timeout",
                          incident=d.alert.incident_id, attempt=d.attempt)
        elif isinstance(msg, AlertAck):
            # any ack proves some server holds the alert, even one we already
            # gave up on after a timeout
            if d is None or d.phase not in ("ping", "alert"):
                ctx.log("late_ack", actor=self.id, incident=msg.incident_id, server=msg.sender)
                return
            d.phase = "delivered"
            d.server = msg.sender
            ctx.log("alert_delivered", actor=self.id, incident=msg.incident_id, server=msg.sender,
                    attempts=d.attempt, failovers=d.failovers)
            ctx.metrics.on_delivered(msg.incident_id, msg.sender)
        elif isinstance(msg, CompletionBroadcast):
            ctx.log("completion_received", actor=self.id, incident=msg.incident_id,
                    served=msg.served)

    def on_timer(self, kind: str, payload: dict, ctx) -> None:
        d = self.deliveries.get(payload["incident"])
        expected = {"ping_timeout": "ping", "ack_timeout": "alert"}[kind]
        if d is None or d.phase != expected or d.attempt != payload["attempt"]:
            return
        ctx.log("failover", actor=self.id, incident=d.alert.incident_id,
                server=self._target(d), reason=kind)
        ctx.metrics.on_failover(d.alert.incident_id)
        d.failovers += 1
        d.index += 1
        if d.index == len(self.config.server_list):
            d.index = 0
            d.passes += 1
            if d.passes >= self.config.max_retries:
                d.phase = "failed"
                ctx.log("delivery_failed", actor=self.id, incident=d.alert.incident_id,
                        passes=d.passes, attempts=d.attempt)
                ctx.metrics.on_delivery_failed(d.alert.incident_id)
                return
        self._ping(d, ctx)

