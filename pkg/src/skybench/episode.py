"""Episode data model, canonical (de)serialization, and structural validation.

The on-disk contract is the shipped draft 2020-12 schema (``data/episode_schema.json``);
semantic rules the schema cannot express (role vocabulary, alternation, turn
bounds, token arithmetic) are checked here and reported with stable violation
codes.  All types are immutable values; every function is pure.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Iterable, Iterator, Mapping, Union

from jsonschema import Draft202012Validator

from .errors import ParseError
from .network import NetworkState

ROLE_USER = "user"
ROLE_AGENT = "agent"
ROLES = (ROLE_AGENT, ROLE_USER)

MIN_TURNS = 8
MAX_TURNS = 12
MAX_ATTEMPTS = 3
BATTERY_DEPLETED_PCT = 5.0

# Terminal error taxonomy for failure stubs.
ERROR_KINDS = ("schema_invalid", "alternation_violation", "turn_bounds", "role_disallowed", "internal")

# Violation codes emitted by validate_episode.
CODE_SCHEMA = "schema_invalid"
CODE_ROLE = "role_disallowed"
CODE_ALTERNATION = "alternation_violation"
CODE_FIRST_ROLE = "first_role_not_user"
CODE_TURN_BOUNDS = "turn_bounds"
CODE_INTENT_EMPTY = "intent_empty"
CODE_USER_STRUCTURED = "user_turn_structured"
CODE_BATTERY_RANGE = "battery_range"
CODE_TOKEN_MISMATCH = "token_mismatch"
CODE_ATTEMPTS = "attempts_exceeded"


@dataclass(frozen=True)
class McpCall:
    name: str
    args: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class A2aTask:
    task: str
    to: str
    payload: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class IntentOnly:
    """Marker for a turn that carries no structured action."""


Action = Union[McpCall, A2aTask, IntentOnly]


@dataclass(frozen=True)
class McpResult:
    tool: str
    result: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class A2aAck:
    task: str
    from_agent: str
    status: str  # ok | degraded | failed
    payload: Mapping[str, Any] = field(default_factory=dict)


Observation = Union[McpResult, A2aAck]


@dataclass(frozen=True)
class Turn:
    role: str
    intent: str
    action: Action | None
    observation: Observation | None
    network: NetworkState

    def __post_init__(self) -> None:
        # Intent-only markers normalize to None so round-tripping is exact.
        if isinstance(self.action, IntentOnly):
            object.__setattr__(self, "action", None)

    @property
    def structured(self) -> bool:
        return isinstance(self.action, (McpCall, A2aTask))


@dataclass(frozen=True)
class FinalState:
    position: tuple[float, float, float]
    velocity: float
    yaw: float
    battery: float
    mission_completed: bool
    altitude_violation: bool = False
    nfz_violation: bool = False
    separation_breach: bool = False
    battery_depleted: bool = False

    def any_violation(self) -> bool:
        return (
            self.altitude_violation
            or self.nfz_violation
            or self.separation_breach
            or self.battery_depleted
        )


@dataclass(frozen=True)
class EpisodeMetadata:
    model: str
    seed: int
    scenario_id: str
    gen_time_s: float
    attempts_used: int
    prompt_tokens: int
    completion_tokens: int
    total_tokens: int
    timestamp: str


@dataclass(frozen=True)
class Episode:
    episode_id: str
    metadata: EpisodeMetadata
    turns: tuple[Turn, ...]
    final_state: FinalState


@dataclass(frozen=True)
class FailureStub:
    scenario_id: str
    model: str
    seed: int
    error_kind: str
    timestamp: str
    attempts_used: int = MAX_ATTEMPTS


@dataclass(frozen=True)
class Violation:
    code: str
    turn_index: int  # -1 when not tied to a turn
    message: str


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    violations: tuple[Violation, ...]

    def codes(self) -> tuple[str, ...]:
        return tuple(v.code for v in self.violations)


# ---------------------------------------------------------------------------
# Canonical JSON
# ---------------------------------------------------------------------------

def canonical_float(x: float) -> float:
    """Quantize to six significant digits; idempotent under re-serialization."""
    return float(format(float(x), ".6g"))


def _canonize(obj: Any) -> Any:
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return canonical_float(obj)
    if isinstance(obj, Mapping):
        return {str(k): _canonize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonize(v) for v in obj]
    raise TypeError(f"value not representable in an episode document: {type(obj).__name__}")


def dumps_canonical(doc: Mapping[str, Any]) -> str:
    """Compact canonical form: sorted keys, 6-significant-digit floats."""
    return json.dumps(_canonize(doc), sort_keys=True, separators=(",", ":"))


def dumps_pretty(doc: Mapping[str, Any]) -> str:
    return json.dumps(_canonize(doc), sort_keys=True, indent=2)


# ---------------------------------------------------------------------------
# Document conversion
# ---------------------------------------------------------------------------

def action_to_doc(action: Action | None) -> dict[str, Any] | None:
    if action is None or isinstance(action, IntentOnly):
        return None
    if isinstance(action, McpCall):
        return {"protocol": "mcp", "name": action.name, "args": dict(action.args)}
    return {"protocol": "a2a", "task": action.task, "to": action.to, "payload": dict(action.payload)}


def observation_to_doc(obs: Observation | None) -> dict[str, Any] | None:
    if obs is None:
        return None
    if isinstance(obs, McpResult):
        return {"tool": obs.tool, "result": dict(obs.result)}
    return {"task": obs.task, "from": obs.from_agent, "status": obs.status, "payload": dict(obs.payload)}


def network_to_doc(n: NetworkState) -> dict[str, Any]:
    return {
        "slice": n.slice,
        "latency_ms": n.latency_ms,
        "jitter_ms": n.jitter_ms,
        "loss_pct": n.loss_pct,
        "throughput_mbps": n.throughput_mbps,
        "edge_load": n.edge_load,
    }


def turn_to_doc(t: Turn) -> dict[str, Any]:
    doc: dict[str, Any] = {"role": t.role, "intent": t.intent, "network": network_to_doc(t.network)}
    action = action_to_doc(t.action)
    if action is not None:
        doc["action"] = action
    obs = observation_to_doc(t.observation)
    if obs is not None:
        doc["observation"] = obs
    return doc


def episode_to_doc(e: Episode) -> dict[str, Any]:
    turns = [turn_to_doc(t) for t in e.turns]
    m = e.metadata
    f = e.final_state
    return {
        "episode_id": e.episode_id,
        "metadata": {
            "model": m.model,
            "seed": m.seed,
            "scenario_id": m.scenario_id,
            "gen_time_s": m.gen_time_s,
            "attempts_used": m.attempts_used,
            "prompt_tokens": m.prompt_tokens,
            "completion_tokens": m.completion_tokens,
            "total_tokens": m.total_tokens,
            "timestamp": m.timestamp,
        },
        "turns": turns,
        "final_state": {
            "position": list(f.position),
            "velocity": f.velocity,
            "yaw": f.yaw,
            "battery": f.battery,
            "mission_completed": f.mission_completed,
            "altitude_violation": f.altitude_violation,
            "nfz_violation": f.nfz_violation,
            "separation_breach": f.separation_breach,
            "battery_depleted": f.battery_depleted,
        },
    }


def stub_to_doc(s: FailureStub) -> dict[str, Any]:
    return {
        "kind": "failure_stub",
        "scenario_id": s.scenario_id,
        "model": s.model,
        "seed": s.seed,
        "attempts_used": s.attempts_used,
        "error_kind": s.error_kind,
        "timestamp": s.timestamp,
    }


def doc_to_action(doc: Mapping[str, Any]) -> Action:
    protocol = doc.get("protocol")
    if protocol == "mcp":
        return McpCall(name=str(doc["name"]), args=dict(doc.get("args", {})))
    if protocol == "a2a":
        return A2aTask(task=str(doc["task"]), to=str(doc["to"]), payload=dict(doc.get("payload", {})))
    raise ParseError(f"unknown action protocol: {protocol!r}")


def _doc_observation(doc: Mapping[str, Any]) -> Observation:
    if "tool" in doc:
        return McpResult(tool=str(doc["tool"]), result=dict(doc.get("result", {})))
    if "task" in doc:
        return A2aAck(
            task=str(doc["task"]),
            from_agent=str(doc.get("from", "")),
            status=str(doc.get("status", "")),
            payload=dict(doc.get("payload", {})),
        )
    raise ParseError("observation is neither a tool result nor an acknowledgement")


def _doc_network(doc: Mapping[str, Any]) -> NetworkState:
    return NetworkState(
        slice=str(doc["slice"]),
        latency_ms=float(doc["latency_ms"]),
        jitter_ms=float(doc["jitter_ms"]),
        loss_pct=float(doc["loss_pct"]),
        throughput_mbps=float(doc["throughput_mbps"]),
        edge_load=float(doc["edge_load"]),
    )


def doc_to_episode(doc: Mapping[str, Any]) -> Episode:
    """Build an Episode from a parsed document.

    Raises ParseError when the document cannot be built at all; semantic rule
    breaches (bad roles, turn counts, ...) survive construction and are left
    to validate_episode.
    """
    try:
        turns = []
        for t in doc["turns"]:
            action = doc_to_action(t["action"]) if "action" in t and t["action"] is not None else None
            obs = _doc_observation(t["observation"]) if "observation" in t and t["observation"] is not None else None
            turns.append(
                Turn(
                    role=str(t["role"]),
                    intent=str(t["intent"]),
                    action=action,
                    observation=obs,
                    network=_doc_network(t["network"]),
                )
            )
        m = doc["metadata"]
        f = doc["final_state"]
        position = f["position"]
        if len(position) != 3:
            raise ParseError("final_state.position must have three components")
        return Episode(
            episode_id=str(doc["episode_id"]),
            metadata=EpisodeMetadata(
                model=str(m["model"]),
                seed=int(m["seed"]),
                scenario_id=str(m["scenario_id"]),
                gen_time_s=float(m["gen_time_s"]),
                attempts_used=int(m["attempts_used"]),
                prompt_tokens=int(m["prompt_tokens"]),
                completion_tokens=int(m["completion_tokens"]),
                total_tokens=int(m["total_tokens"]),
                timestamp=str(m["timestamp"]),
            ),
            turns=tuple(turns),
            final_state=FinalState(
                position=(float(position[0]), float(position[1]), float(position[2])),
                velocity=float(f["velocity"]),
                yaw=float(f["yaw"]),
                battery=float(f["battery"]),
                mission_completed=bool(f["mission_completed"]),
                altitude_violation=bool(f["altitude_violation"]),
                nfz_violation=bool(f["nfz_violation"]),
                separation_breach=bool(f["separation_breach"]),
                battery_depleted=bool(f["battery_depleted"]),
            ),
        )
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ParseError(f"cannot build episode from document: {exc}") from exc


def doc_to_stub(doc: Mapping[str, Any]) -> FailureStub:
    try:
        return FailureStub(
            scenario_id=str(doc["scenario_id"]),
            model=str(doc["model"]),
            seed=int(doc["seed"]),
            attempts_used=int(doc["attempts_used"]),
            error_kind=str(doc["error_kind"]),
            timestamp=str(doc["timestamp"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"cannot build failure stub from document: {exc}") from exc


def parse_episode(data: bytes | str) -> Episode:
    return doc_to_episode(loads_document(data))


def serialize_episode(e: Episode) -> bytes:
    return dumps_canonical(episode_to_doc(e)).encode("utf-8")


def loads_document(data: bytes | str) -> dict[str, Any]:
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="strict")
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"not well-formed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("top-level JSON value must be an object")
    return doc


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def load_schema() -> dict[str, Any]:
    text = resources.files("skybench.data").joinpath("episode_schema.json").read_text("utf-8")
    return json.loads(text)


def _relax(schema: Any) -> Any:
    if isinstance(schema, dict):
        return {
            k: (True if k == "additionalProperties" else _relax(v))
            for k, v in schema.items()
        }
    if isinstance(schema, list):
        return [_relax(v) for v in schema]
    return schema


_VALIDATORS: dict[bool, Draft202012Validator] = {}


def _validator(strict: bool) -> Draft202012Validator:
    if strict not in _VALIDATORS:
        schema = load_schema()
        if not strict:
            schema = _relax(copy.deepcopy(schema))
        Draft202012Validator.check_schema(schema)
        _VALIDATORS[strict] = Draft202012Validator(schema)
    return _VALIDATORS[strict]


def _turn_index_of(path: Iterable[Any]) -> int:
    parts = list(path)
    if len(parts) >= 2 and parts[0] == "turns" and isinstance(parts[1], int):
        return parts[1]
    return -1


def _schema_violations(doc: Mapping[str, Any], strict: bool) -> list[Violation]:
    errors = sorted(_validator(strict).iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    out = []
    for err in errors:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        out.append(Violation(CODE_SCHEMA, _turn_index_of(err.absolute_path), f"{where}: {err.message}"))
    return out


def _semantic_violations(doc: Mapping[str, Any]) -> list[Violation]:
    out: list[Violation] = []
    turns = doc.get("turns")
    if isinstance(turns, list):
        n = len(turns)
        if not MIN_TURNS <= n <= MAX_TURNS:
            out.append(Violation(CODE_TURN_BOUNDS, -1, f"episode has {n} turns, expected {MIN_TURNS}..{MAX_TURNS}"))
        prev_role: Any = None
        for i, turn in enumerate(turns):
            if not isinstance(turn, Mapping):
                continue
            role = turn.get("role")
            if isinstance(role, str) and role not in ROLES:
                out.append(Violation(CODE_ROLE, i, f"role {role!r} is not a permitted speaker"))
            if i == 0 and role != ROLE_USER:
                out.append(Violation(CODE_FIRST_ROLE, 0, f"first turn role is {role!r}, expected {ROLE_USER!r}"))
            if role is not None and role == prev_role:
                out.append(Violation(CODE_ALTERNATION, i, f"turns {i - 1} and {i} share role {role!r}"))
            prev_role = role
            intent = turn.get("intent")
            if isinstance(intent, str) and not intent.strip():
                out.append(Violation(CODE_INTENT_EMPTY, i, "intent is empty"))
            if role == ROLE_USER and ("action" in turn or "observation" in turn):
                out.append(Violation(CODE_USER_STRUCTURED, i, "user turns carry no action or observation"))
    final = doc.get("final_state")
    if isinstance(final, Mapping):
        battery = final.get("battery")
        if isinstance(battery, (int, float)) and not isinstance(battery, bool):
            if not 0.0 <= float(battery) <= 100.0:
                out.append(Violation(CODE_BATTERY_RANGE, -1, f"battery {battery} outside [0, 100]"))
    meta = doc.get("metadata")
    if isinstance(meta, Mapping):
        prompt, completion, total = meta.get("prompt_tokens"), meta.get("completion_tokens"), meta.get("total_tokens")
        if all(isinstance(v, int) and not isinstance(v, bool) for v in (prompt, completion, total)):
            if prompt + completion != total:
                out.append(
                    Violation(CODE_TOKEN_MISMATCH, -1, f"total_tokens {total} != prompt {prompt} + completion {completion}")
                )
        attempts = meta.get("attempts_used")
        if isinstance(attempts, int) and not isinstance(attempts, bool):
            if not 1 <= attempts <= MAX_ATTEMPTS:
                out.append(Violation(CODE_ATTEMPTS, -1, f"attempts_used {attempts} outside [1, {MAX_ATTEMPTS}]"))
    return out


def validate_episode(doc: Mapping[str, Any] | Episode | bytes | str, *, strict: bool = True) -> ValidationReport:
    """Check one episode document against the schema and the semantic rules.

    Accepts a parsed document, raw bytes/text (raising ParseError when not
    well-formed JSON), or an Episode value.  Total over well-formed input:
    every problem becomes a listed violation, never an exception.
    """
    if isinstance(doc, Episode):
        doc = episode_to_doc(doc)
    elif isinstance(doc, (bytes, str)):
        doc = loads_document(doc)
    violations = _schema_violations(doc, strict) + _semantic_violations(doc)
    return ValidationReport(valid=not violations, violations=tuple(violations))


def stub_error_kind(report: ValidationReport) -> str:
    """Collapse a validation report into the terminal stub error taxonomy."""
    codes = set(report.codes())
    if CODE_ROLE in codes:
        return "role_disallowed"
    if CODE_ALTERNATION in codes or CODE_FIRST_ROLE in codes:
        return "alternation_violation"
    if CODE_TURN_BOUNDS in codes:
        return "turn_bounds"
    return "schema_invalid"


def make_failure_stub(
    scenario_id: str,
    model: str,
    seed: int,
    error_kind: str,
    *,
    timestamp: str = "",
) -> FailureStub:
    if error_kind not in ERROR_KINDS:
        raise ValueError(f"unknown error kind: {error_kind!r}")
    return FailureStub(
        scenario_id=scenario_id,
        model=model,
        seed=seed,
        error_kind=error_kind,
        timestamp=timestamp,
        attempts_used=MAX_ATTEMPTS,
    )


# ---------------------------------------------------------------------------
# Corpus files (JSONL; stubs share the file, tagged kind=failure_stub)
# ---------------------------------------------------------------------------

Record = Union[Episode, FailureStub]


def record_to_line(record: Record) -> str:
    doc = stub_to_doc(record) if isinstance(record, FailureStub) else episode_to_doc(record)
    return dumps_canonical(doc)


def line_to_record(line: str) -> Record:
    doc = loads_document(line)
    if doc.get("kind") == "failure_stub":
        return doc_to_stub(doc)
    return doc_to_episode(doc)


def write_corpus(path, records: Iterable[Record]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record_to_line(record))
            fh.write("\n")
            count += 1
    return count


def iter_corpus(path) -> Iterator[Record]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield line_to_record(line)
