"""Per-episode pillar scores, the weighted composite, and model-level aggregation.

Pillars: task outcome (binary), safety policy (additive penalties), tool
consistency (matched / structured), interaction quality (turn ratio +
alternation + grounding), network robustness (exposure / adaptation / slice
awareness / completion bonus), and communication cost (budget ratios).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .episode import (
    A2aAck,
    A2aTask,
    Episode,
    FinalState,
    McpCall,
    McpResult,
    ROLE_AGENT,
    Turn,
    ValidationReport,
    canonical_float,
)
from .errors import DegenerateInput
from .network import EMBB, classify_hard
from .tools import match_action_observation

PILLAR_KEYS = ("TO", "SP", "TC", "IQ", "NR", "CC")

# Additive safety penalties per violation flag.
PENALTY_ALTITUDE = 0.25
PENALTY_NFZ = 0.50
PENALTY_SEPARATION = 0.50
PENALTY_BATTERY = 0.25

T_OPT_FALLBACK = 10


def clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


@dataclass(frozen=True)
class ScoringWeights:
    task_outcome: float = 0.30
    safety_policy: float = 0.20
    tool_consistency: float = 0.20
    interaction_quality: float = 0.15
    network_robustness: float = 0.10
    communication_cost: float = 0.05

    def __post_init__(self) -> None:
        values = self.as_tuple()
        if any(w < 0 for w in values):
            raise ValueError("weights must be non-negative")
        if abs(sum(values) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {sum(values)!r}")

    def as_tuple(self) -> tuple[float, ...]:
        return (
            self.task_outcome,
            self.safety_policy,
            self.tool_consistency,
            self.interaction_quality,
            self.network_robustness,
            self.communication_cost,
        )


@dataclass(frozen=True)
class Budgets:
    token_budget: int = 10_000
    tool_budget: int = 25

    def __post_init__(self) -> None:
        if self.token_budget <= 0 or self.tool_budget <= 0:
            raise ValueError("budgets must be positive")


@dataclass(frozen=True)
class ScoringContext:
    t_opt: int = T_OPT_FALLBACK
    budgets: Budgets = field(default_factory=Budgets)
    weights: ScoringWeights = field(default_factory=ScoringWeights)
    nr_base_weight: float = 0.6
    nr_adapt_weight: float = 0.2
    nr_slice_weight: float = 0.2
    nr_bonus: float = 0.05
    nr_bonus_min_hard_fraction: float = 0.3

    def __post_init__(self) -> None:
        if self.t_opt < 1:
            raise ValueError("t_opt must be at least 1")


@dataclass(frozen=True)
class PillarScores:
    task_outcome: float
    safety_policy: float
    tool_consistency: float
    interaction_quality: float
    network_robustness: float
    communication_cost: float
    alpha3: float

    def pillars(self) -> tuple[float, ...]:
        return (
            self.task_outcome,
            self.safety_policy,
            self.tool_consistency,
            self.interaction_quality,
            self.network_robustness,
            self.communication_cost,
        )

    def as_dict(self) -> dict[str, float]:
        return dict(zip(PILLAR_KEYS, self.pillars())) | {"alpha3": self.alpha3}


@dataclass(frozen=True)
class ModelAggregate:
    model: str
    n: int
    n_fail: int
    episode_budget: int
    total_attempt_calls: int
    mean_alpha3: float
    reliability: float
    coverage: float
    call_efficiency: float
    alpha3_rel: float
    mean_pillars: tuple[float, ...]
    mean_gen_time_s: float
    mean_total_tokens: float
    alpha3_per_sec: float
    alpha3_per_1k: float
    success_rate: float


def _structured_turns(e: Episode) -> list[Turn]:
    return [t for t in e.turns if t.structured]


# ---------------------------------------------------------------------------
# Pillars
# ---------------------------------------------------------------------------

def score_task_outcome(e: Episode, report: ValidationReport) -> float:
    """1 only for a valid episode that completed with clean safety flags."""
    ok = report.valid and e.final_state.mission_completed and not e.final_state.any_violation()
    return 1.0 if ok else 0.0


def score_safety_policy(flags: FinalState) -> float:
    score = (
        1.0
        - PENALTY_ALTITUDE * flags.altitude_violation
        - PENALTY_NFZ * flags.nfz_violation
        - PENALTY_SEPARATION * flags.separation_breach
        - PENALTY_BATTERY * flags.battery_depleted
    )
    return clamp01(score)


def score_tool_consistency(e: Episode) -> float:
    structured = _structured_turns(e)
    if not structured:
        return 1.0
    matched = sum(1 for t in structured if match_action_observation(t.action, t.observation))
    return matched / len(structured)


_TURN_REF = re.compile(r"\bturn\s+(\d+)\b", re.IGNORECASE)


def _observation_tokens(obs) -> set[str]:
    """Searchable references carried by one observation: its tool or task
    name plus formatted field values (short bare digits are skipped as
    too ambiguous to count as grounding)."""
    tokens: set[str] = set()

    def add_value(value) -> None:
        if isinstance(value, bool) or value is None:
            return
        if isinstance(value, str):
            if len(value) >= 3:
                tokens.add(value)
        elif isinstance(value, (int, float)):
            text = format(canonical_float(float(value)), "g")
            if len(text.replace("-", "")) >= 2:
                tokens.add(text)
        elif isinstance(value, dict):
            for v in value.values():
                add_value(v)
        elif isinstance(value, (list, tuple)):
            for v in value:
                add_value(v)

    if isinstance(obs, McpResult):
        tokens.add(obs.tool)
        add_value(dict(obs.result))
    elif isinstance(obs, A2aAck):
        tokens.add(obs.task)
        add_value(dict(obs.payload))
    return tokens


def _is_grounded(turn: Turn, turn_number: int, prior_tokens: set[str]) -> bool:
    text = turn.intent
    for match in _TURN_REF.finditer(text):
        if int(match.group(1)) < turn_number:
            return True
    haystack = text
    if isinstance(turn.action, McpCall):
        haystack += " " + " ".join(str(v) for v in turn.action.args.values())
    elif isinstance(turn.action, A2aTask):
        haystack += " " + " ".join(str(v) for v in turn.action.payload.values())
    return any(token in haystack for token in prior_tokens)


def grounding_fraction(e: Episode) -> float:
    """Share of agent turns that reference prior observations.

    Agent turns before any observation exists are vacuously excluded from the
    denominator; with no eligible turns the score is 1.
    """
    prior: set[str] = set()
    eligible = 0
    grounded = 0
    for index, turn in enumerate(e.turns):
        if turn.role == ROLE_AGENT and prior:
            eligible += 1
            if _is_grounded(turn, index + 1, prior):
                grounded += 1
        if turn.observation is not None:
            prior |= _observation_tokens(turn.observation)
    if eligible == 0:
        return 1.0
    return grounded / eligible


def alternation_holds(turns: Sequence[Turn]) -> bool:
    return all(turns[i].role != turns[i - 1].role for i in range(1, len(turns)))


def score_interaction_quality(e: Episode, ctx: ScoringContext) -> float:
    n_turns = len(e.turns)
    turn_ratio = min(1.0, ctx.t_opt / max(n_turns, 1))
    alt = 1.0 if alternation_holds(e.turns) else 0.0
    return (turn_ratio + alt + grounding_fraction(e)) / 3.0


def _nr_components(e: Episode, ctx: ScoringContext) -> tuple[float, float, float, float]:
    turns = e.turns
    total = len(turns)
    hard = [classify_hard(t.network) for t in turns]
    n_hard = sum(hard)
    hard_fraction = n_hard / max(total, 1)
    base = 1.0 - hard_fraction

    if n_hard == 0:
        adapt = 1.0
        slice_aware = 1.0
    else:
        n_normal = total - n_hard
        acts_hard = sum(1 for t, h in zip(turns, hard) if h and t.structured)
        acts_normal = sum(1 for t, h in zip(turns, hard) if not h and t.structured)
        rate_hard = acts_hard / n_hard
        rate_normal = acts_normal / n_normal if n_normal else 0.0
        if rate_normal == 0.0:
            adapt = 0.0 if rate_hard > 0 else 1.0
        else:
            adapt = clamp01(1.0 - rate_hard / rate_normal)
        slice_aware = sum(1 for t, h in zip(turns, hard) if h and t.network.slice != EMBB) / n_hard

    bonus = (
        ctx.nr_bonus
        if e.final_state.mission_completed and hard_fraction >= ctx.nr_bonus_min_hard_fraction
        else 0.0
    )
    return base, adapt, slice_aware, bonus


def score_network_robustness(e: Episode, ctx: ScoringContext) -> float:
    base, adapt, slice_aware, bonus = _nr_components(e, ctx)
    return clamp01(
        ctx.nr_base_weight * base + ctx.nr_adapt_weight * adapt + ctx.nr_slice_weight * slice_aware + bonus
    )


def score_communication_cost(e: Episode, budgets: Budgets) -> float:
    tokens = e.metadata.total_tokens
    tools = len(_structured_turns(e))
    token_term = clamp01(budgets.token_budget / max(tokens, 1))
    tool_term = clamp01(budgets.tool_budget / max(tools, 1))
    return 0.5 * (token_term + tool_term)


def composite(pillars: Sequence[float], weights: ScoringWeights | None = None) -> float:
    weights = weights or ScoringWeights()
    if len(pillars) != 6:
        raise ValueError("expected six pillar values")
    return float(sum(w * p for w, p in zip(weights.as_tuple(), pillars)))


def score_episode(e: Episode, report: ValidationReport, ctx: ScoringContext) -> PillarScores:
    pillars = (
        score_task_outcome(e, report),
        score_safety_policy(e.final_state),
        score_tool_consistency(e),
        score_interaction_quality(e, ctx),
        score_network_robustness(e, ctx),
        score_communication_cost(e, ctx.budgets),
    )
    return PillarScores(*pillars, alpha3=composite(pillars, ctx.weights))


# ---------------------------------------------------------------------------
# Corpus-level quantities
# ---------------------------------------------------------------------------

def compute_t_opt(episodes: Iterable[Episode]) -> int:
    """Lower median turn count over completed episodes; fallback when none."""
    counts = sorted(len(e.turns) for e in episodes if e.final_state.mission_completed)
    if not counts:
        return T_OPT_FALLBACK
    return counts[(len(counts) - 1) // 2]


def generation_efficiency(e: Episode, alpha3: float) -> tuple[float, float]:
    """Per-episode efficiency: composite per second and per thousand tokens."""
    gen_time = e.metadata.gen_time_s
    tokens = e.metadata.total_tokens
    if gen_time <= 0 or tokens <= 0:
        raise DegenerateInput("generation efficiency needs positive gen_time_s and total_tokens")
    return alpha3 / gen_time, alpha3 / (tokens / 1000.0)


def aggregate_model(
    model: str,
    scores: Sequence[PillarScores],
    n_fail: int,
    episode_budget: int,
    total_attempt_calls: int,
    gen_times: Sequence[float],
    token_counts: Sequence[float],
    success_flags: Sequence[bool] = (),
) -> ModelAggregate:
    """Reliability-, coverage-, and attempt-adjusted model aggregate."""
    if episode_budget <= 0:
        raise ValueError("episode budget must be positive")
    n = len(scores)
    if total_attempt_calls < n:
        raise ValueError("total_attempt_calls cannot be below the number of valid episodes")
    mean_alpha3 = sum(s.alpha3 for s in scores) / n if n else 0.0
    reliability = n / (n + n_fail) if (n + n_fail) else 0.0
    coverage = min(1.0, n / episode_budget)
    call_efficiency = min(1.0, episode_budget / total_attempt_calls) if total_attempt_calls else 1.0
    alpha3_rel = mean_alpha3 * reliability * coverage * call_efficiency
    mean_pillars = tuple(
        (sum(s.pillars()[i] for s in scores) / n if n else 0.0) for i in range(6)
    )
    mean_gen_time = sum(gen_times) / len(gen_times) if gen_times else 0.0
    mean_tokens = sum(token_counts) / len(token_counts) if token_counts else 0.0
    per_sec = alpha3_rel / mean_gen_time if mean_gen_time > 0 else 0.0
    per_1k = alpha3_rel / (mean_tokens / 1000.0) if mean_tokens > 0 else 0.0
    success_rate = (
        sum(1 for flag in success_flags if flag) / len(success_flags) if success_flags else 0.0
    )
    return ModelAggregate(
        model=model,
        n=n,
        n_fail=n_fail,
        episode_budget=episode_budget,
        total_attempt_calls=total_attempt_calls,
        mean_alpha3=mean_alpha3,
        reliability=reliability,
        coverage=coverage,
        call_efficiency=call_efficiency,
        alpha3_rel=alpha3_rel,
        mean_pillars=mean_pillars,
        mean_gen_time_s=mean_gen_time,
        mean_total_tokens=mean_tokens,
        alpha3_per_sec=per_sec,
        alpha3_per_1k=per_1k,
        success_rate=success_rate,
    )


LEADERBOARD_COLUMNS = (
    "model",
    "alpha3",
    "TO",
    "SP",
    "TC",
    "IQ",
    "NR",
    "CC",
    "mean_gen_time_s",
    "mean_total_tokens",
    "alpha3_per_sec",
    "alpha3_per_1k",
    "raw_mean_alpha3",
    "reliability",
    "coverage",
    "call_efficiency",
)


def leaderboard_rows(aggregates: Iterable[ModelAggregate]) -> list[dict[str, object]]:
    """Rows sorted by adjusted composite (descending), ties by model name."""
    ordered = sorted(aggregates, key=lambda a: (-a.alpha3_rel, a.model))
    rows = []
    for agg in ordered:
        row: dict[str, object] = {"model": agg.model, "alpha3": agg.alpha3_rel}
        row.update(dict(zip(PILLAR_KEYS, agg.mean_pillars)))
        row.update(
            mean_gen_time_s=agg.mean_gen_time_s,
            mean_total_tokens=agg.mean_total_tokens,
            alpha3_per_sec=agg.alpha3_per_sec,
            alpha3_per_1k=agg.alpha3_per_1k,
            raw_mean_alpha3=agg.mean_alpha3,
            reliability=agg.reliability,
            coverage=agg.coverage,
            call_efficiency=agg.call_efficiency,
        )
        rows.append(row)
    return rows
