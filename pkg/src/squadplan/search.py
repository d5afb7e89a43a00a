"""Lineup planning: Monte Carlo tree search plus an exact small-horizon solver."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

from .core import Lineup, MdpState, Season, SquadplanError, count_games_in_window
from .injury import expected_clamped_days
from .match import expected_points_for_value
from .mdp import (
    DEFAULT_CONSTRAINT,
    FormationConstraint,
    InfeasibleFormationError,
    InjuryEvent,
    ModelSet,
    apply_outcome,
    best_value_lineup,
    enumerate_actions,
    fallback_action,
    ranked_actions,
    transition,
)


class SearchError(SquadplanError):
    """Search invoked on an unusable state or configuration."""


@dataclass(frozen=True)
class SearchConfig:
    """Tuning knobs for the tree search.

    ``rollout_stochastic_steps`` is how many rollout games sample injuries
    normally before the tail assumes no further injuries (existing absences
    still tick down). ``rest_weight`` biases action expansion toward resting
    high-risk players; zero ranks purely by team value.
    """

    iterations: int = 1000
    exploration: float = math.sqrt(2.0)
    pw_coeff: float = 1.0
    pw_alpha: float = 0.5
    rollout_stochastic_steps: int = 3
    rest_weight: float = 0.0
    gamma: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise SearchError("iterations must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise SearchError("gamma must lie in [0, 1]")
        if self.pw_coeff <= 0 or not 0.0 < self.pw_alpha <= 1.0:
            raise SearchError("progressive widening needs pw_coeff > 0 and pw_alpha in (0, 1]")


def ucb1_score(mean_value: float, child_visits: int, parent_visits: int, exploration: float) -> float:
    """Upper confidence bound for one child; unvisited children score infinity."""
    if child_visits == 0:
        return math.inf
    return mean_value + exploration * math.sqrt(math.log(parent_visits) / child_visits)


def allowed_children(visits: int, pw_coeff: float, pw_alpha: float) -> int:
    """Progressive widening cap on a decision node's expanded actions."""
    return max(1, math.ceil(pw_coeff * visits**pw_alpha))


class _DecisionNode:
    __slots__ = ("state", "visits", "value_sum", "children", "gen", "exhausted")

    def __init__(self, state: MdpState):
        self.state = state
        self.visits = 0
        self.value_sum = 0.0
        self.children: dict[frozenset, _ChanceNode] = {}
        self.gen: Iterator[Lineup] | None = None
        self.exhausted = False


class _ChanceNode:
    __slots__ = ("action", "reward", "visits", "value_sum", "outcomes")

    def __init__(self, action: Lineup, reward: float):
        self.action = action
        self.reward = reward
        self.visits = 0
        self.value_sum = 0.0
        self.outcomes: dict[tuple, _DecisionNode] = {}


class _SearchContext:
    """Per-search scratch state: rng, caches, and the rollout machinery.

    The tail cache holds, for each remaining fixture, the summed expected
    points of the best full-strength lineup from there to the season's end.
    Rollouts jump straight to it once nobody is absent and the stochastic
    phase is over, which keeps long-horizon rollouts O(absence length), not
    O(horizon).
    """

    def __init__(
        self,
        root_state: MdpState,
        season: Season,
        models: ModelSet,
        config: SearchConfig,
        constraint: FormationConstraint,
    ):
        self.season = season
        self.models = models
        self.config = config
        self.constraint = constraint
        self.rng = np.random.default_rng(config.seed)
        self.players = season.players_by_id
        self.n_root = len(root_state.remaining)
        self.root_fixtures = root_state.remaining

        self.role_ranked = {
            r: [(p.skill, p.id) for p in sorted(ps, key=lambda p: (-p.skill, p.id))]
            for r, ps in season.players_by_role.items()
        }
        full = best_value_lineup(season.squad, constraint)
        if full is None:
            full = best_value_lineup(season.squad, FormationConstraint())
        self.tail = [0.0] * (self.n_root + 1)
        self.tail_valid = full is not None
        if full is not None:
            v_full = full[1]
            for i in range(self.n_root - 1, -1, -1):
                self.tail[i] = self.tail[i + 1] + expected_points_for_value(
                    models.match, v_full, self.root_fixtures[i]
                )

    def lineup_value(self, lineup: Lineup) -> float:
        return sum(self.players[pid].skill for pid in lineup.ids)

    def fast_greedy(self, unavailability: Mapping[str, int]) -> tuple[list[str], float] | None:
        """Best-value available lineup using the pre-sorted role tables."""
        best: tuple[float, list[str]] | None = None
        for d, m, a in self.constraint.formations():
            ids: list[str] = []
            total = 0.0
            ok = True
            for role, k in (("GK", 1), ("DEF", d), ("MID", m), ("ATT", a)):
                got = 0
                for skill, pid in self.role_ranked[role]:
                    if unavailability.get(pid, 0) == 0:
                        ids.append(pid)
                        total += skill
                        got += 1
                        if got == k:
                            break
                if got < k:
                    ok = False
                    break
            if ok and (best is None or total > best[0]):
                best = (total, ids)
        if best is None:
            return None
        return best[1], best[0]

    def _emergency(self, state: MdpState) -> tuple[list[str], float]:
        lineup, _ = fallback_action(state, self.season, self.constraint)
        return list(lineup.ids), self.lineup_value(lineup)

    def rollout(self, state: MdpState) -> float:
        """Greedy-policy value estimate from a state to the end of the season."""
        total = 0.0
        disc = 1.0
        steps = 0
        cur = state
        cfg = self.config
        while cur.remaining:
            if (
                steps >= cfg.rollout_stochastic_steps
                and cfg.gamma == 1.0
                and self.tail_valid
                and all(v == 0 for v in cur.unavailability.values())
            ):
                offset = self.n_root - len(cur.remaining)
                total += disc * self.tail[offset]
                break
            picked = self.fast_greedy(cur.unavailability)
            if picked is None:
                ids, value = self._emergency(cur)
            else:
                ids, value = picked
            if steps < cfg.rollout_stochastic_steps:
                out = transition(
                    cur, Lineup(frozenset(ids)), self.season, self.models, self.rng,
                    stochastic=True, validate=False,
                )
                reward = out.reward
                cur = out.state
            else:
                reward = expected_points_for_value(self.models.match, value, cur.remaining[0])
                cur = MdpState(
                    fixture_index=cur.fixture_index + 1,
                    remaining=cur.remaining[1:],
                    risk_factors=cur.risk_factors,
                    injury_probs=cur.injury_probs,
                    unavailability={p: v - 1 if v > 0 else 0 for p, v in cur.unavailability.items()},
                    logs=cur.logs,
                )
            total += disc * reward
            disc *= cfg.gamma
            steps += 1
        return total

    def expand(self, node: _DecisionNode) -> _ChanceNode | None:
        if node.exhausted:
            return None
        try:
            if node.gen is None:
                node.gen = ranked_actions(
                    node.state, self.season, self.constraint, self.config.rest_weight
                )
            lineup = next(node.gen, None)
        except InfeasibleFormationError:
            lineup = None
            if not node.children:
                lineup, _ = fallback_action(node.state, self.season, self.constraint)
        if lineup is None:
            node.exhausted = True
            return None
        reward = expected_points_for_value(
            self.models.match, self.lineup_value(lineup), node.state.remaining[0]
        )
        child = _ChanceNode(lineup, reward)
        node.children[lineup.player_ids] = child
        return child

    def select(self, node: _DecisionNode) -> _ChanceNode:
        scale = 3.0 * len(node.state.remaining)
        log_n = math.log(max(node.visits, 1))
        best = None
        best_score = -math.inf
        for child in node.children.values():
            if child.visits == 0:
                return child
            score = (child.value_sum / child.visits) / scale + self.config.exploration * math.sqrt(
                log_n / child.visits
            )
            if score > best_score:
                best, best_score = child, score
        return best

    def sim_decision(self, node: _DecisionNode) -> float:
        if not node.state.remaining:
            node.visits += 1
            return 0.0
        chance = None
        if len(node.children) < allowed_children(node.visits, self.config.pw_coeff, self.config.pw_alpha):
            chance = self.expand(node)
        if chance is None:
            chance = self.select(node)
        value = self.sim_chance(node.state, chance)
        node.visits += 1
        node.value_sum += value
        return value

    def sim_chance(self, state: MdpState, chance: _ChanceNode) -> float:
        out = transition(
            state, chance.action, self.season, self.models, self.rng,
            stochastic=True, validate=False,
        )
        key = tuple((ev.player_id, ev.duration_days) for ev in out.injuries)
        child = chance.outcomes.get(key)
        if child is None:
            child = _DecisionNode(out.state)
            chance.outcomes[key] = child
            sub = self.rollout(out.state) if out.state.remaining else 0.0
            child.visits = 1
            child.value_sum = sub
        else:
            sub = self.sim_decision(child)
        value = out.reward + self.config.gamma * sub
        chance.visits += 1
        chance.value_sum += value
        return value


def rollout_value(
    state: MdpState,
    season: Season,
    models: ModelSet,
    config: SearchConfig = SearchConfig(),
    constraint: FormationConstraint = DEFAULT_CONSTRAINT,
) -> float:
    """Value of one greedy rollout from a state (stochastic phase included)."""
    if not state.remaining:
        return 0.0
    ctx = _SearchContext(state, season, models, config, constraint)
    return ctx.rollout(state)


def mcts_select_action(
    state: MdpState,
    season: Season,
    models: ModelSet,
    config: SearchConfig = SearchConfig(),
    constraint: FormationConstraint = DEFAULT_CONSTRAINT,
) -> tuple[Lineup, dict]:
    """Pick a lineup for the current fixture by Monte Carlo tree search.

    Decision nodes expand lineups in ranked order under progressive widening
    and select among expanded ones by UCB1 (means normalised by the points
    still available this season). Chance nodes resample injuries on every
    pass. The recommendation is the most-visited root action, breaking ties
    by mean value and then lexicographically.

    Returns the chosen lineup and a diagnostics dict with per-action visit
    counts, mean returns and immediate expected points.
    """
    if not state.remaining:
        raise SearchError("cannot search a terminal state: season is over")
    ctx = _SearchContext(state, season, models, config, constraint)
    root = _DecisionNode(state)
    for _ in range(config.iterations):
        ctx.sim_decision(root)

    best = None
    best_key: tuple[int, float] | None = None
    for child in root.children.values():
        mean = child.value_sum / child.visits if child.visits else -math.inf
        key = (child.visits, mean)
        if (
            best is None
            or key > best_key
            or (key == best_key and child.action.ids < best.action.ids)
        ):
            best, best_key = child, key
    if best is None:
        raise SearchError("search produced no candidate actions")

    diagnostics = {
        "iterations": config.iterations,
        "root_visits": root.visits,
        "actions": [
            {
                "player_ids": list(ch.action.ids),
                "visits": ch.visits,
                "mean_value": ch.value_sum / ch.visits if ch.visits else 0.0,
                "expected_points": ch.reward,
            }
            for ch in sorted(root.children.values(), key=lambda c: (-c.visits, c.action.ids))
        ],
    }
    return best.action, diagnostics


def expectimax_oracle(
    state: MdpState,
    season: Season,
    models: ModelSet,
    depth: int,
    constraint: FormationConstraint = DEFAULT_CONSTRAINT,
    gamma: float = 1.0,
    budget: int = 1_000_000,
) -> tuple[Lineup, float]:
    """Exact expectimax over full action enumeration, for small instances only.

    Chance branching enumerates every subset of at-risk selected players;
    injury lengths collapse to the distribution's expected clamped length, so
    the tree stays finite. ``budget`` caps total expansions and raises once
    the instance is too large to solve exactly.
    """
    if not state.remaining:
        raise SearchError("cannot solve a terminal state: season is over")
    if depth < 1:
        raise SearchError("depth must be >= 1")
    exp_days = expected_clamped_days(models.lengths)
    spent = [0]

    def best_action(st: MdpState, d: int) -> tuple[Lineup | None, float]:
        if d == 0 or not st.remaining:
            return None, 0.0
        fixture = st.remaining[0]
        players = season.players_by_id
        best: tuple[Lineup, float] | None = None
        for action in enumerate_actions(st, season, constraint):
            spent[0] += 1
            if spent[0] > budget:
                raise SearchError(f"expectimax budget of {budget} expansions exceeded")
            value = sum(players[pid].skill for pid in action.ids)
            reward = expected_points_for_value(models.match, value, fixture)
            future = 0.0
            if d > 1 and st.remaining[1:]:
                risky = [pid for pid in action.ids if st.injury_probs.get(pid, 0.0) > 0.0]
                games = count_games_in_window(st.remaining[1:], fixture.timestep, exp_days)
                for mask in range(1 << len(risky)):
                    prob = 1.0
                    events = []
                    for i, pid in enumerate(risky):
                        th = st.injury_probs[pid]
                        if mask >> i & 1:
                            prob *= th
                            events.append(InjuryEvent(pid, games, exp_days))
                        else:
                            prob *= 1.0 - th
                    if prob == 0.0:
                        continue
                    spent[0] += 1
                    if spent[0] > budget:
                        raise SearchError(f"expectimax budget of {budget} expansions exceeded")
                    nxt = apply_outcome(st, action, season, models, events)
                    _, sub = best_action(nxt, d - 1)
                    future += prob * sub
            q = reward + gamma * future
            if best is None or q > best[1] or (q == best[1] and action.ids < best[0].ids):
                best = (action, q)
        return best

    lineup, value = best_action(state, depth)
    return lineup, value
