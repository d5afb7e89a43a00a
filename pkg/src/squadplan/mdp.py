"""Sequential selection decision process: actions, formation rules, transitions."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, replace
from typing import Iterator, Mapping, Sequence

import numpy as np

from .core import (
    ROLES,
    Appearance,
    Lineup,
    MdpState,
    Player,
    PlayerLog,
    Role,
    Season,
    SquadplanError,
    count_games_in_window,
    log_from_history,
)
from .injury import (
    InjuryModel,
    LengthDistribution,
    RiskFactors,
    compute_risk_factors,
    predict_injury_probs,
    sample_injury_days,
)
from .match import MatchModel, expected_points_for_value


class InfeasibleFormationError(SquadplanError):
    """Too few available players to field any legal eleven."""


class InvalidActionError(SquadplanError):
    """A submitted lineup breaks the action preconditions."""


@dataclass(frozen=True, slots=True)
class FormationConstraint:
    """Bounds on outfield role counts, with an optional exact preferred shape.

    A lineup always has exactly one goalkeeper; the three outfield counts must
    sum to ten. When ``preferred`` is set, only that exact formation is legal
    until the caller explicitly relaxes it.
    """

    def_range: tuple[int, int] = (3, 5)
    mid_range: tuple[int, int] = (3, 5)
    att_range: tuple[int, int] = (1, 3)
    preferred: tuple[int, int, int] | None = None

    def __post_init__(self) -> None:
        for lo, hi in (self.def_range, self.mid_range, self.att_range):
            if not 0 < lo <= hi:
                raise SquadplanError(f"bad role range ({lo}, {hi})")
        if self.preferred is not None:
            d, m, a = self.preferred
            if d + m + a != 10:
                raise SquadplanError(f"preferred formation {self.preferred} must field 10 outfielders")
            if not (
                self.def_range[0] <= d <= self.def_range[1]
                and self.mid_range[0] <= m <= self.mid_range[1]
                and self.att_range[0] <= a <= self.att_range[1]
            ):
                raise SquadplanError(f"preferred formation {self.preferred} is outside the role bounds")

    def formations(self) -> tuple[tuple[int, int, int], ...]:
        """Formations legal under this constraint, in a fixed canonical order."""
        if self.preferred is not None:
            return (self.preferred,)
        out = []
        for d in range(self.def_range[0], self.def_range[1] + 1):
            for m in range(self.mid_range[0], self.mid_range[1] + 1):
                a = 10 - d - m
                if self.att_range[0] <= a <= self.att_range[1]:
                    out.append((d, m, a))
        return tuple(out)


DEFAULT_CONSTRAINT = FormationConstraint()


@dataclass(frozen=True)
class ModelSet:
    """The trained models a simulation or search needs, plus risk scaling.

    ``risk_multiplier`` scales every predicted injury probability (clamped to
    1); zero turns injuries off entirely.
    """

    injury: InjuryModel
    lengths: LengthDistribution
    match: MatchModel
    risk_multiplier: float = 1.0

    def __post_init__(self) -> None:
        if self.risk_multiplier < 0:
            raise SquadplanError("risk_multiplier must be >= 0")


@dataclass(frozen=True, slots=True)
class InjuryEvent:
    """A realized injury: who, how many upcoming games missed, raw length in days."""

    player_id: str
    games_out: int
    duration_days: float


@dataclass(frozen=True, slots=True)
class TransitionOutcome:
    state: MdpState
    reward: float
    injuries: tuple[InjuryEvent, ...]


def available_players(state: MdpState, season: Season) -> list[Player]:
    """Players fit to be selected right now, sorted by id."""
    out = [p for p in season.squad if state.unavailability.get(p.id, 0) == 0]
    out.sort(key=lambda p: p.id)
    return out


def _by_role(players: Sequence[Player]) -> dict[Role, list[Player]]:
    out: dict[Role, list[Player]] = {r: [] for r in ROLES}
    for p in players:
        out[p.role].append(p)
    return out


def _shortage_message(byrole: Mapping[Role, Sequence[Player]], constraint: FormationConstraint) -> str:
    needs = {
        "GK": 1,
        "DEF": constraint.def_range[0],
        "MID": constraint.mid_range[0],
        "ATT": constraint.att_range[0],
    }
    if constraint.preferred is not None:
        needs["DEF"], needs["MID"], needs["ATT"] = constraint.preferred
    parts = [
        f"need {needs[r]} {r} but only {len(byrole[r])} available"
        for r in ROLES
        if len(byrole[r]) < needs[r]
    ]
    return "no legal eleven can be fielded: " + ("; ".join(parts) or "not enough players overall")


def enumerate_actions(
    state: MdpState, season: Season, constraint: FormationConstraint = DEFAULT_CONSTRAINT
) -> list[Lineup]:
    """Every legal lineup from the currently available players.

    Deterministic order: formations in canonical order, players in id order
    within each role. The count grows combinatorially with squad size; use
    ``ranked_actions`` when only the best few are needed.
    """
    byrole = _by_role(available_players(state, season))
    lineups: list[Lineup] = []
    for d, m, a in constraint.formations():
        needs = (("GK", 1), ("DEF", d), ("MID", m), ("ATT", a))
        if any(len(byrole[r]) < k for r, k in needs):
            continue
        pools = [itertools.combinations([p.id for p in byrole[r]], k) for r, k in needs]
        for parts in itertools.product(*pools):
            lineups.append(Lineup.of(itertools.chain.from_iterable(parts)))
    if not lineups:
        raise InfeasibleFormationError(_shortage_message(byrole, constraint))
    return lineups


def best_value_lineup(
    players: Sequence[Player], constraint: FormationConstraint = DEFAULT_CONSTRAINT
) -> tuple[Lineup, float] | None:
    """Highest total-skill legal lineup from a player pool, or None if infeasible.

    Ties between equally skilled players break toward the smaller id, and
    between formations toward the canonical order.
    """
    byrole = _by_role(players)
    ranked = {r: sorted(ps, key=lambda p: (-p.skill, p.id)) for r, ps in byrole.items()}
    best: tuple[float, list[str]] | None = None
    for d, m, a in constraint.formations():
        needs = (("GK", 1), ("DEF", d), ("MID", m), ("ATT", a))
        if any(len(ranked[r]) < k for r, k in needs):
            continue
        ids: list[str] = []
        total = 0.0
        for r, k in needs:
            for p in ranked[r][:k]:
                ids.append(p.id)
                total += p.skill
        if best is None or total > best[0]:
            best = (total, ids)
    if best is None:
        return None
    return Lineup.of(best[1]), best[0]


def greedy_action(
    state: MdpState, season: Season, constraint: FormationConstraint = DEFAULT_CONSTRAINT
) -> Lineup:
    """Myopically best lineup: top available players per role, best legal formation.

    Maximizes team value, and therefore single-game expected points, which
    rise monotonically with value.
    """
    picked = best_value_lineup(available_players(state, season), constraint)
    if picked is None:
        byrole = _by_role(available_players(state, season))
        raise InfeasibleFormationError(_shortage_message(byrole, constraint))
    return picked[0]


def fallback_action(
    state: MdpState, season: Season, constraint: FormationConstraint = DEFAULT_CONSTRAINT
) -> tuple[Lineup, int]:
    """Greedy lineup with progressive relaxation when the squad is depleted.

    Returns (lineup, level): level 0 satisfied the given constraint, level 1
    dropped the preferred formation but kept the role bounds, level 2 is an
    emergency selection of the best eleven (or fewer) available players
    regardless of role.
    """
    avail = available_players(state, season)
    picked = best_value_lineup(avail, constraint)
    if picked is not None:
        return picked[0], 0
    if constraint.preferred is not None:
        picked = best_value_lineup(avail, replace(constraint, preferred=None))
        if picked is not None:
            return picked[0], 1
    if not avail:
        raise InfeasibleFormationError("no players available at all")
    ids = [p.id for p in sorted(avail, key=lambda p: (-p.skill, p.id))[:11]]
    return Lineup(frozenset(ids)), 2


class _RoleStream:
    """Lazily enumerates k-subsets of one role in descending total-score order."""

    __slots__ = ("ids", "scores", "k", "n", "found", "heap", "seen")

    def __init__(self, ordered: Sequence[tuple[str, float]], k: int):
        self.ids = [pid for pid, _ in ordered]
        self.scores = [s for _, s in ordered]
        self.k = k
        self.n = len(ordered)
        self.found: list[tuple[float, tuple[int, ...]]] = []
        self.heap: list[tuple[float, tuple[int, ...]]] = []
        self.seen: set[tuple[int, ...]] = set()
        if k == 0:
            self.found.append((0.0, ()))
        elif k <= self.n:
            first = tuple(range(k))
            self.heap.append((-sum(self.scores[:k]), first))
            self.seen.add(first)

    def get(self, rank: int) -> tuple[float, tuple[int, ...]] | None:
        while rank >= len(self.found) and self.heap:
            neg, combo = heapq.heappop(self.heap)
            score = -neg
            self.found.append((score, combo))
            for j in range(self.k):
                nxt = combo[j] + 1
                upper = combo[j + 1] if j + 1 < self.k else self.n
                if nxt < upper:
                    cand = combo[:j] + (nxt,) + combo[j + 1 :]
                    if cand not in self.seen:
                        self.seen.add(cand)
                        cscore = score - self.scores[combo[j]] + self.scores[nxt]
                        heapq.heappush(self.heap, (-cscore, cand))
        return self.found[rank] if rank < len(self.found) else None

    def ids_at(self, rank: int) -> list[str]:
        _, combo = self.found[rank]
        return [self.ids[i] for i in combo]


def ranked_actions(
    state: MdpState,
    season: Season,
    constraint: FormationConstraint = DEFAULT_CONSTRAINT,
    rest_weight: float = 0.0,
) -> Iterator[Lineup]:
    """Yield legal lineups lazily in descending per-player-score order.

    Each player scores skill minus ``rest_weight`` times their current injury
    probability, and a lineup's score is the sum over its eleven. With weight
    zero the first lineup is exactly the greedy action. Equal-score lineups
    come out in a fixed deterministic order. Memory grows only with how far
    the iterator is advanced.
    """
    theta = state.injury_probs
    byrole = _by_role(available_players(state, season))
    scored = {
        r: sorted(
            ((p.id, p.skill - rest_weight * theta.get(p.id, 0.0)) for p in ps),
            key=lambda t: (-t[1], t[0]),
        )
        for r, ps in byrole.items()
    }
    streams: dict[tuple[Role, int], _RoleStream] = {}

    def stream(role: Role, k: int) -> _RoleStream:
        key = (role, k)
        if key not in streams:
            streams[key] = _RoleStream(scored[role], k)
        return streams[key]

    heap: list[tuple[float, int, tuple[int, int, int, int]]] = []
    seen: set[tuple[int, tuple[int, int, int, int]]] = set()
    plans: list[tuple[_RoleStream, ...]] = []
    for fi, (d, m, a) in enumerate(constraint.formations()):
        needs = (("GK", 1), ("DEF", d), ("MID", m), ("ATT", a))
        if any(len(scored[r]) < k for r, k in needs):
            continue
        group = tuple(stream(r, k) for r, k in needs)
        plans.append(group)
        ranks = (0, 0, 0, 0)
        total = sum(group[i].get(0)[0] for i in range(4))
        heapq.heappush(heap, (-total, len(plans) - 1, ranks))
        seen.add((len(plans) - 1, ranks))
    if not heap:
        raise InfeasibleFormationError(_shortage_message(byrole, constraint))

    while heap:
        neg, pi, ranks = heapq.heappop(heap)
        group = plans[pi]
        ids: list[str] = []
        for i in range(4):
            ids.extend(group[i].ids_at(ranks[i]))
        yield Lineup.of(ids)
        for i in range(4):
            bumped = ranks[:i] + (ranks[i] + 1,) + ranks[i + 1 :]
            if (pi, bumped) in seen:
                continue
            entry = group[i].get(bumped[i])
            if entry is None:
                continue
            seen.add((pi, bumped))
            total = -neg - group[i].found[ranks[i]][0] + entry[0]
            heapq.heappush(heap, (-total, pi, bumped))


def lineup_violations(
    state: MdpState,
    season: Season,
    lineup: Lineup,
    constraint: FormationConstraint | None = None,
) -> list[str]:
    """Human-readable reasons this lineup cannot be played now; empty if fine."""
    problems: list[str] = []
    if len(lineup.player_ids) != 11:
        problems.append(f"lineup has {len(lineup.player_ids)} players, needs 11")
    players = season.players_by_id
    counts = {r: 0 for r in ROLES}
    for pid in lineup.ids:
        p = players.get(pid)
        if p is None:
            problems.append(f"unknown player {pid}")
            continue
        counts[p.role] += 1
        if state.unavailability.get(pid, 0) > 0:
            problems.append(f"{pid} is injured for {state.unavailability[pid]} more games")
    if constraint is not None and not any(p.startswith("unknown") for p in problems):
        if counts["GK"] != 1:
            problems.append(f"needs exactly 1 GK, has {counts['GK']}")
        shape = (counts["DEF"], counts["MID"], counts["ATT"])
        if constraint.preferred is not None:
            if shape != constraint.preferred:
                problems.append(f"formation {shape} differs from required {constraint.preferred}")
        else:
            for role, n, (lo, hi) in (
                ("DEF", shape[0], constraint.def_range),
                ("MID", shape[1], constraint.mid_range),
                ("ATT", shape[2], constraint.att_range),
            ):
                if not lo <= n <= hi:
                    problems.append(f"{role} count {n} outside [{lo}, {hi}]")
    return problems


def _risk_snapshot(
    models: ModelSet,
    season: Season,
    logs: Mapping[str, PlayerLog],
    as_of_day: int,
    prev_factors: Mapping[str, RiskFactors] | None = None,
) -> tuple[Mapping[str, RiskFactors], Mapping[str, float]]:
    """Risk factors and scaled injury probabilities for the whole squad.

    Models that ignore the features (baseline and fixed-probability kinds)
    skip the factor recomputation and carry the previous snapshot forward.
    """
    if getattr(models.injury, "uses_features", True) or prev_factors is None:
        factors = {p.id: compute_risk_factors(p, logs[p.id], as_of_day) for p in season.squad}
    else:
        factors = prev_factors
    ids = [p.id for p in season.squad]
    probs = predict_injury_probs(models.injury, [factors[i] for i in ids], ids)
    if models.risk_multiplier != 1.0:
        probs = np.minimum(probs * models.risk_multiplier, 1.0)
    return factors, {pid: float(v) for pid, v in zip(ids, probs)}


def initial_state(
    season: Season,
    models: ModelSet,
    history: Mapping[str, Sequence[Appearance]] | None = None,
) -> MdpState:
    """State before the first fixture, seeded from player histories."""
    if not season.fixtures:
        raise SquadplanError("season has no fixtures")
    logs = {p.id: log_from_history(p, (history or {}).get(p.id, ())) for p in season.squad}
    factors, probs = _risk_snapshot(models, season, logs, season.fixtures[0].timestep)
    return MdpState(
        fixture_index=season.fixtures[0].index,
        remaining=season.fixtures,
        risk_factors=factors,
        injury_probs=probs,
        unavailability={p.id: 0 for p in season.squad},
        logs=logs,
    )


def apply_outcome(
    state: MdpState,
    action: Lineup,
    season: Season,
    models: ModelSet,
    events: Sequence[InjuryEvent],
) -> MdpState:
    """Advance the state given a fixed set of realized injuries.

    Selected players log an appearance at the fixture day with their average
    physical output; injured players additionally start their absence. Risk
    factors and probabilities are refreshed as of the next fixture's day.
    """
    fixture = state.remaining[0]
    players = season.players_by_id
    remaining = state.remaining[1:]
    unavail = {pid: v - 1 if v > 0 else 0 for pid, v in state.unavailability.items()}
    logs = dict(state.logs)
    for pid in action.ids:
        p = players[pid]
        logs[pid] = logs[pid].with_appearance(
            Appearance(fixture.timestep, p.mean_distance_per_game, p.mean_dribbles_per_game)
        )
    for ev in events:
        logs[ev.player_id] = logs[ev.player_id].with_injury(ev.duration_days)
        unavail[ev.player_id] = ev.games_out
    if remaining:
        factors, probs = _risk_snapshot(models, season, logs, remaining[0].timestep, state.risk_factors)
    else:
        factors, probs = state.risk_factors, state.injury_probs
    return MdpState(
        fixture_index=state.fixture_index + 1,
        remaining=remaining,
        risk_factors=factors,
        injury_probs=probs,
        unavailability=unavail,
        logs=logs,
    )


def transition(
    state: MdpState,
    action: Lineup,
    season: Season,
    models: ModelSet,
    rng: np.random.Generator,
    stochastic: bool = True,
    validate: bool = True,
) -> TransitionOutcome:
    """Play one game: collect expected points, sample injuries, advance the state.

    Each selected player independently gets injured with their current
    probability; lengths are drawn from the length distribution and converted
    to missed games against the rest of the schedule. With ``stochastic``
    False no injuries occur (useful for deterministic evaluation). The injured
    player still completes the current game, so the appearance is logged
    either way.
    """
    if not state.remaining:
        raise InvalidActionError("season is over; no fixture to play")
    if validate:
        problems = lineup_violations(state, season, lineup=action, constraint=None)
        if problems:
            raise InvalidActionError("; ".join(problems))
    fixture = state.remaining[0]
    players = season.players_by_id
    value = 0.0
    for pid in action.ids:
        value += players[pid].skill
    reward = expected_points_for_value(models.match, value, fixture)

    events: list[InjuryEvent] = []
    if stochastic:
        draws = rng.random(len(action.ids))
        thetas = state.injury_probs
        for pid, u in zip(action.ids, draws):
            if u < thetas.get(pid, 0.0):
                days = sample_injury_days(models.lengths, rng)
                games = count_games_in_window(state.remaining[1:], fixture.timestep, days)
                events.append(InjuryEvent(pid, games, days))
    new_state = apply_outcome(state, action, season, models, events)
    return TransitionOutcome(state=new_state, reward=reward, injuries=tuple(events))


def is_terminal(state: MdpState) -> bool:
    return not state.remaining
