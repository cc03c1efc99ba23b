"""Agent policies, the simulated supervisor, and the retrying episode loop.

Scripted reference agents stand in for LLM policies at desk scale: they are
deterministic functions of (dialogue history, vehicle state, network vector,
strictness level).  The episode loop owns all mutable state, derives every
random stream from the configured seeds, and converts agent misbehaviour into
validation outcomes rather than crashes.
"""

from __future__ import annotations

import hashlib
import json
import math
import subprocess
from dataclasses import dataclass, replace
from typing import Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from .environment import SafetyFlags, evolve_state
from .episode import (
    A2aAck,
    A2aTask,
    Action,
    Episode,
    FailureStub,
    MAX_TURNS,
    MIN_TURNS,
    McpCall,
    McpResult,
    ROLE_AGENT,
    ROLE_USER,
    Turn,
    canonical_float,
    doc_to_action,
    doc_to_episode,
    dumps_canonical,
    episode_to_doc,
    network_to_doc,
    turn_to_doc,
    FinalState,
    EpisodeMetadata,
    make_failure_stub,
    stub_error_kind,
    validate_episode,
)
from .network import (
    NetworkState,
    SliceCalibration,
    URLLC,
    classify_hard,
    evolve_network,
    sample_network_state,
)
from .errors import ScenarioError
from .scenarios import Scenario
from .tools import ToolExecutor, ToolSpec, default_registry

EPOCH_TIMESTAMP = "1970-01-01T00:00:00Z"

# Consecutive hard turns after which an incomplete mission is aborted.
DEGRADED_TERMINATION_RUN = 4


@runtime_checkable
class AgentPolicy(Protocol):
    """Behavioural contract: deterministic given (history, state, network, strictness)."""

    name: str

    def next_turn(
        self,
        history: Sequence[Turn],
        state,
        network: NetworkState,
        strictness: int = 0,
    ) -> tuple[str, Action | None]: ...


@dataclass(frozen=True)
class AdaptiveActionFilter:
    """Communication-safe action subset enforced under a degraded link."""

    allowed_tools: frozenset[str] = frozenset({"switch_network_slice", "read_telemetry", "land", "hover"})
    latency_threshold_ms: float = 40.0
    loss_threshold_pct: float = 1.0

    def degraded(self, network: NetworkState) -> bool:
        return network.latency_ms > self.latency_threshold_ms or network.loss_pct >= self.loss_threshold_pct

    def permits(self, action: Action | None, network: NetworkState) -> bool:
        if not self.degraded(network):
            return True
        if action is None or not isinstance(action, (McpCall, A2aTask)):
            return True
        return isinstance(action, McpCall) and action.name in self.allowed_tools


@dataclass(frozen=True)
class MissionStatus:
    arrived: bool = False
    captured: bool = False
    completed: bool = False
    aborted: str | None = None  # None | battery_depleted | network_degraded
    hard_run: int = 0


# ---------------------------------------------------------------------------
# User simulator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UserSimulator:
    """Deterministic supervisor turns; never emits structured actions."""

    mode: str = "scripted_template"  # scripted_template | fixed_prompt
    prompts: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.mode not in ("scripted_template", "fixed_prompt"):
            raise ValueError(f"unknown user simulator mode: {self.mode!r}")
        if self.mode == "fixed_prompt" and not self.prompts:
            raise ValueError("fixed_prompt mode needs a non-empty prompt list")

    def intent(self, ordinal: int, scenario: Scenario, status: MissionStatus) -> str:
        if self.mode == "fixed_prompt":
            return self.prompts[min(ordinal, len(self.prompts) - 1)]
        x, y, z = scenario.mission.target
        if ordinal == 0:
            return (
                "initiate mission and check telemetry: "
                f"{scenario.description}; survey point ({x:g}, {y:g}, {z:g})"
            )
        if status.aborted is not None:
            recovery = (
                "abort confirmed; hold position and report status",
                "prepare safe recovery and conserve battery",
            )
            return recovery[ordinal % len(recovery)]
        if status.completed:
            wrap = (
                "confirm mission results and verify the final state",
                "acknowledge completion; archive the mission log and stand by",
            )
            return wrap[ordinal % len(wrap)]
        if ordinal == 1:
            return f"proceed to the survey point at ({x:g}, {y:g}, {z:g}) and report progress"
        progress = (
            "report mission status and link quality",
            "continue toward the objective and confirm clearance",
            "verify sensor readiness and network conditions",
        )
        return progress[ordinal % len(progress)]


def simulate_user_turn(
    user: UserSimulator,
    turn_index: int,
    scenario: Scenario,
    status: MissionStatus,
    network: NetworkState,
) -> Turn:
    """Build the supervisor turn for the given dialogue position."""
    intent = user.intent(turn_index // 2, scenario, status)
    return Turn(role=ROLE_USER, intent=intent, action=None, observation=None, network=network)


# ---------------------------------------------------------------------------
# Scripted reference agents
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    return format(canonical_float(value), "g")


def _distance(a: Sequence[float], b: Sequence[float]) -> float:
    return math.dist(tuple(a), tuple(b))


def _last_observation_name(history: Sequence[Turn]) -> str | None:
    for turn in reversed(history):
        if isinstance(turn.observation, McpResult):
            return turn.observation.tool
        if isinstance(turn.observation, A2aAck):
            return turn.observation.task
    return None


def _has_result(history: Sequence[Turn], tool: str) -> bool:
    return any(isinstance(t.observation, McpResult) and t.observation.tool == tool for t in history)


def _has_ack(history: Sequence[Turn], task: str) -> bool:
    return any(isinstance(t.observation, A2aAck) and t.observation.task == task for t in history)


def _agent_turns(history: Sequence[Turn]) -> int:
    return sum(1 for t in history if t.role == ROLE_AGENT)


class ScriptedAgent:
    """Common navigation core for the scripted reference policies."""

    name = "scripted"
    latency_factor = 1.0
    prompt_tokens_per_turn = 160
    completion_tokens_per_turn = 240
    low_battery_pct = 10.0

    def __init__(self, scenario: Scenario) -> None:
        self.scenario = scenario

    # hook: behaviour while the link is hard
    def _hard_response(self, cite: str, network: NetworkState) -> tuple[str, Action | None]:
        if network.slice != URLLC:
            intent = (
                f"{cite}link degraded ({_fmt(network.latency_ms)} ms, {_fmt(network.loss_pct)}% loss) "
                f"on {network.slice}; switching slice to URLLC"
            )
            return intent, McpCall("switch_network_slice", {"slice": URLLC})
        return f"{cite}link still constrained; monitoring telemetry only", McpCall("read_telemetry")

    # hook: optional step once on station, before capture
    def _on_station_step(self, cite: str, history: Sequence[Turn]) -> tuple[str, Action | None] | None:
        return None

    def next_turn(
        self,
        history: Sequence[Turn],
        state,
        network: NetworkState,
        strictness: int = 0,
    ) -> tuple[str, Action | None]:
        mission = self.scenario.mission
        position = state.kinematics.position
        last = _last_observation_name(history)
        cite = f"{last} confirms status; " if last else ""
        if state.battery_pct < self.low_battery_pct and not state.command.landing:
            return f"{cite}battery at {_fmt(state.battery_pct)}%; landing immediately", McpCall("land")
        if classify_hard(network):
            return self._hard_response(cite, network)
        if not _has_result(history, "read_telemetry"):
            return "running a preflight telemetry sweep before departure", McpCall("read_telemetry")
        target = mission.target
        if state.command.target is None and not state.command.landing:
            intent = f"{cite}telemetry nominal; setting waypoint ({_fmt(target[0])}, {_fmt(target[1])}, {_fmt(target[2])})"
            return intent, McpCall("set_waypoint", {"x": target[0], "y": target[1], "z": target[2]})
        distance = _distance(position, target)
        if distance > mission.arrival_tolerance_m and not state.command.landing:
            if _agent_turns(history) % 2 == 0:
                return f"{cite}en route, {_fmt(distance)} m to go; verifying exclusion-zone clearance", McpCall("check_geofence")
            return f"{cite}en route, {_fmt(distance)} m to go; refreshing telemetry", McpCall("read_telemetry")
        station = self._on_station_step(cite, history)
        if station is not None:
            return station
        if mission.capture_sensor and not _has_result(history, "capture_image"):
            intent = f"{cite}on station at the survey point; capturing {mission.capture_sensor} imagery"
            return intent, McpCall("capture_image", {"sensor": mission.capture_sensor})
        if not state.command.landing:
            return f"{cite}objective complete; landing at the survey point", McpCall("land")
        return f"{cite}holding on the pad; mission wrapped up", None


class SafePilot(ScriptedAgent):
    """Telemetry-first navigator that respects the adaptive action subset."""

    name = "safe_pilot"


class AdaptivePilot(ScriptedAgent):
    """Network-first variant: switches to URLLC and defers everything else
    while the link is hard; coordinates with peers once on station."""

    name = "adaptive_pilot"
    latency_factor = 1.2
    prompt_tokens_per_turn = 180
    completion_tokens_per_turn = 320

    def _hard_response(self, cite: str, network: NetworkState) -> tuple[str, Action | None]:
        if network.slice != URLLC:
            intent = (
                f"{cite}degradation detected ({_fmt(network.latency_ms)} ms on {network.slice}); "
                "switching slice to URLLC"
            )
            return intent, McpCall("switch_network_slice", {"slice": URLLC})
        return f"{cite}link still hard; deferring sensing and holding pattern", None

    def _on_station_step(self, cite: str, history: Sequence[Turn]) -> tuple[str, Action | None] | None:
        peers = self.scenario.swarm.peer_ids()
        if peers and not _has_ack(history, "collision_avoidance"):
            peer = peers[0]
            intent = f"{cite}on station; requesting deconfliction from {peer} before sensing"
            return intent, A2aTask("collision_avoidance", peer, {"intent": "hold_at_objective"})
        return None


class GreedyStreamer(ScriptedAgent):
    """Bandwidth-hungry baseline: streams imagery every turn, ignores the network."""

    name = "greedy_streamer"
    latency_factor = 1.6
    prompt_tokens_per_turn = 500
    completion_tokens_per_turn = 2600

    def next_turn(
        self,
        history: Sequence[Turn],
        state,
        network: NetworkState,
        strictness: int = 0,
    ) -> tuple[str, Action | None]:
        segment = _agent_turns(history) + 1
        intent = f"streaming segment {segment}: pushing full-rate imagery to the archive feed"
        return intent, McpCall("capture_image", {"sensor": "RGB"})


class SubprocessPolicy:
    """Line-protocol adapter for out-of-process policies (LLM backends, etc.).

    Each request is one JSON line carrying the full dialogue history, a
    vehicle-state view, the current network vector, and the strictness level;
    the reply must be one JSON line shaped {"intent": str, "action": {...}|null}.
    The child should treat every request as self-contained (history is resent
    each turn) so retries stay deterministic.
    """

    latency_factor = 1.0
    prompt_tokens_per_turn = 160
    completion_tokens_per_turn = 240

    def __init__(self, command: Sequence[str], name: str = "external") -> None:
        self.command = tuple(command)
        self.name = name
        self._proc: subprocess.Popen | None = None

    def _process(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        return self._proc

    def next_turn(
        self,
        history: Sequence[Turn],
        state,
        network: NetworkState,
        strictness: int = 0,
    ) -> tuple[str, Action | None]:
        proc = self._process()
        request = {
            "history": [turn_to_doc(t) for t in history],
            "state": {
                "position": list(state.kinematics.position),
                "speed_mps": state.kinematics.speed,
                "yaw_rad": state.kinematics.yaw,
                "battery_pct": state.battery_pct,
                "sensors": sorted(state.sensors),
                "command": {
                    "target": list(state.command.target) if state.command.target else None,
                    "landing": state.command.landing,
                },
            },
            "network": network_to_doc(network),
            "strictness": strictness,
        }
        assert proc.stdin is not None and proc.stdout is not None
        proc.stdin.write(dumps_canonical(request) + "\n")
        proc.stdin.flush()
        line = proc.stdout.readline()
        if not line:
            raise ScenarioError(f"external policy {self.name!r} closed its output")
        reply = json.loads(line)
        intent = str(reply["intent"])
        action_doc = reply.get("action")
        action = doc_to_action(action_doc) if action_doc else None
        return intent, action

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()  # type: ignore[union-attr]
            self._proc.terminate()
            self._proc.wait(timeout=5)
        self._proc = None

    def __enter__(self) -> "SubprocessPolicy":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


AGENT_TYPES: dict[str, type[ScriptedAgent]] = {
    SafePilot.name: SafePilot,
    AdaptivePilot.name: AdaptivePilot,
    GreedyStreamer.name: GreedyStreamer,
}


def make_agent(name: str, scenario: Scenario) -> ScriptedAgent:
    try:
        return AGENT_TYPES[name](scenario)
    except KeyError:
        raise ValueError(f"unknown agent {name!r}; known: {sorted(AGENT_TYPES)}") from None


# ---------------------------------------------------------------------------
# Episode loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GenTiming:
    """Synthetic per-attempt latency so efficiency metrics are deterministic
    and non-degenerate for scripted agents."""

    base_s: float = 0.6
    per_turn_s: float = 0.25


def stream_digest(scenario_id: str, agent_name: str, index: int) -> int:
    raw = hashlib.sha256(f"{scenario_id}|{agent_name}|{index}".encode("utf-8")).digest()
    return int.from_bytes(raw[:16], "big")


def episode_seed_for(index: int, seed_set: Sequence[int]) -> int:
    return seed_set[index % len(seed_set)]


def _apply_strictness(
    action: Action | None,
    strictness: int,
    registry: Mapping[str, ToolSpec],
    action_filter: AdaptiveActionFilter,
) -> Action | None:
    if action is None or strictness <= 0:
        return action
    if isinstance(action, McpCall) and action.name not in registry:
        return None
    if strictness >= 2:
        if isinstance(action, A2aTask):
            return None
        if isinstance(action, McpCall) and action.name not in action_filter.allowed_tools:
            return None
    return action


def _action_class(action: Action | None, registry: Mapping[str, ToolSpec]) -> str:
    if isinstance(action, McpCall):
        spec = registry.get(action.name)
        return spec.action_class if spec is not None else "transmit"
    if isinstance(action, A2aTask):
        return "transmit"
    return "hover"


def _token_usage(agent, turns: Sequence[Turn]) -> tuple[int, int]:
    prompt = 120 + len(turns) * agent.prompt_tokens_per_turn
    completion = sum(
        agent.completion_tokens_per_turn + len(t.intent) // 4 for t in turns if t.role == ROLE_AGENT
    )
    return prompt, completion


def run_episode(
    agent,
    user: UserSimulator,
    scenario: Scenario,
    *,
    calibration: SliceCalibration,
    registry: Mapping[str, ToolSpec] | None = None,
    global_seed: int = 42,
    episode_seed: int = 42,
    index: int = 0,
    max_attempts: int = 3,
    dt: float = 1.0,
    timing: GenTiming = GenTiming(),
    timestamp: str = EPOCH_TIMESTAMP,
    episode_id: str | None = None,
) -> Episode | FailureStub:
    """Generate one episode with up to three validation-gated attempts.

    Retries re-run the same seeded streams under a stricter action regime
    (1: registry-known tools only, 2: adaptive subset only).  The recorded
    generation time spans every attempt; after the final failure a stub
    carrying the terminal error kind is returned.
    """
    registry = dict(registry) if registry is not None else default_registry()
    episode_id = episode_id or f"{scenario.scenario_id}-{agent.name}-{index:04d}"
    root = np.random.SeedSequence([global_seed, episode_seed, stream_digest(scenario.scenario_id, agent.name, index)])
    children = root.spawn(3)

    gen_time = 0.0
    prompt_tokens = 0
    completion_tokens = 0
    last_report = None
    for attempt in range(1, max_attempts + 1):
        strictness = attempt - 1
        try:
            turns, final_state = _run_attempt(
                agent, user, scenario, calibration, registry, children, strictness, dt
            )
        except Exception:
            gen_time += timing.base_s
            last_report = None
            continue
        gen_time += timing.base_s + timing.per_turn_s * len(turns) * agent.latency_factor
        p_tokens, c_tokens = _token_usage(agent, turns)
        prompt_tokens += p_tokens
        completion_tokens += c_tokens
        metadata = EpisodeMetadata(
            model=agent.name,
            seed=episode_seed,
            scenario_id=scenario.scenario_id,
            gen_time_s=canonical_float(gen_time),
            attempts_used=attempt,
            prompt_tokens=prompt_tokens,
            completion_tokens=completion_tokens,
            total_tokens=prompt_tokens + completion_tokens,
            timestamp=timestamp,
        )
        episode = Episode(episode_id=episode_id, metadata=metadata, turns=tuple(turns), final_state=final_state)
        doc = episode_to_doc(episode)
        tamper = getattr(agent, "tamper_document", None)
        if tamper is not None:
            doc = tamper(doc, strictness)
        # Round through canonical bytes so the in-memory value equals the
        # on-disk value bit for bit.
        doc = json.loads(dumps_canonical(doc))
        report = validate_episode(doc)
        if report.valid:
            return doc_to_episode(doc)
        last_report = report
    error_kind = stub_error_kind(last_report) if last_report is not None else "internal"
    return make_failure_stub(scenario.scenario_id, agent.name, episode_seed, error_kind, timestamp=timestamp)


def _run_attempt(
    agent,
    user: UserSimulator,
    scenario: Scenario,
    calibration: SliceCalibration,
    registry: Mapping[str, ToolSpec],
    children: Sequence[np.random.SeedSequence],
    strictness: int,
    dt: float,
) -> tuple[list[Turn], FinalState]:
    net_rng = np.random.default_rng(children[0])
    phys_rng = np.random.default_rng(children[1])
    tool_rng = np.random.default_rng(children[2])
    calib = calibration
    if scenario.slice_switch_prob is not None:
        calib = replace(calibration, slice_switch_prob=scenario.slice_switch_prob)
    executor = ToolExecutor(registry, calib, scenario.airspace, scenario.params, scenario.swarm)
    action_filter = AdaptiveActionFilter()

    state = scenario.initial_state
    state = replace(state, flags=state.flags.union(SafetyFlags(battery_depleted=state.battery_pct < 5.0)))
    network = sample_network_state(scenario.initial_slice, calib, net_rng)
    status = MissionStatus()
    turns: list[Turn] = []

    def bump_hard_run(current: MissionStatus, turn_network: NetworkState) -> MissionStatus:
        run = current.hard_run + 1 if classify_hard(turn_network) else 0
        return replace(current, hard_run=run)

    while True:
        user_turn = simulate_user_turn(user, len(turns), scenario, status, network)
        turns.append(user_turn)
        status = bump_hard_run(status, network)
        network = evolve_network(network, calib, net_rng)

        intent, action = agent.next_turn(tuple(turns), state, network, strictness)
        action = _apply_strictness(action, strictness, registry, action_filter)
        observation = None
        post_network = network
        if isinstance(action, McpCall):
            observation, state, post_network = executor.execute_mcp(action, state, network, tool_rng)
        elif isinstance(action, A2aTask):
            observation = executor.execute_a2a(action, network, tool_rng, turn_index=len(turns) // 2)
        turns.append(Turn(role=ROLE_AGENT, intent=intent, action=action, observation=observation, network=network))
        status = bump_hard_run(status, network)

        if (
            isinstance(action, McpCall)
            and action.name == "capture_image"
            and status.arrived
            and not status.captured
        ):
            status = replace(status, captured=True)

        step_index = len(turns) // 2 - 1
        state = evolve_state(
            state,
            scenario.airspace,
            scenario.params,
            scenario.disturbance,
            phys_rng,
            dt,
            action_class=_action_class(action, registry),
            peer_positions=scenario.swarm.positions_at(step_index),
        )
        network = evolve_network(post_network, calib, net_rng)

        if not status.arrived and _distance(state.kinematics.position, scenario.mission.target) <= scenario.mission.arrival_tolerance_m:
            status = replace(status, arrived=True)
        if status.aborted is None:
            done = status.arrived and (status.captured or scenario.mission.capture_sensor is None)
            if done and not status.completed:
                status = replace(status, completed=True)
        if status.aborted is None and not status.completed:
            if state.battery_pct <= 0.0:
                status = replace(status, aborted="battery_depleted")
            elif status.hard_run >= DEGRADED_TERMINATION_RUN:
                status = replace(status, aborted="network_degraded")

        n_turns = len(turns)
        if n_turns >= MAX_TURNS:
            break
        if n_turns >= MIN_TURNS and (status.completed or status.aborted is not None):
            break

    k = state.kinematics
    final_state = FinalState(
        position=tuple(canonical_float(v) for v in k.position),
        velocity=canonical_float(k.speed),
        yaw=canonical_float(k.yaw),
        battery=canonical_float(state.battery_pct),
        mission_completed=status.completed,
        altitude_violation=state.flags.altitude_violation,
        nfz_violation=state.flags.nfz_violation,
        separation_breach=state.flags.separation_breach,
        battery_depleted=state.flags.battery_depleted,
    )
    return turns, final_state
