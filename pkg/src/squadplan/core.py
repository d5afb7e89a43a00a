"""Shared domain types: players, fixtures, seasons, lineups and decision states."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Iterable, Literal, Mapping, Sequence

if TYPE_CHECKING:
    from .injury import RiskFactors

Role = Literal["GK", "DEF", "MID", "ATT"]
ROLES: tuple[Role, ...] = ("GK", "DEF", "MID", "ATT")


class SquadplanError(ValueError):
    """Base class for domain contract violations."""


@dataclass(frozen=True, slots=True)
class InjuryRecord:
    """A single injury: the day it started and how many days it lasted."""

    start_day: int
    duration_days: int

    def __post_init__(self) -> None:
        if self.duration_days < 0:
            raise SquadplanError(f"injury duration must be >= 0, got {self.duration_days}")


@dataclass(frozen=True, slots=True)
class Player:
    """A squad member with a skill rating and the inputs to injury-risk features."""

    id: str
    name: str
    role: Role
    skill: float
    wage: float | None = None
    mean_distance_per_game: float = 0.0
    mean_dribbles_per_game: float = 0.0
    injury_history: tuple[InjuryRecord, ...] = ()

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise SquadplanError(f"unknown role {self.role!r} for player {self.id}")
        if not math.isfinite(self.skill) or self.skill < 0:
            raise SquadplanError(f"skill must be finite and >= 0, got {self.skill} for {self.id}")


@dataclass(frozen=True, slots=True)
class Fixture:
    """One scheduled game from the planning club's point of view."""

    index: int
    timestep: int
    opponent_id: str
    opponent_strength: float
    is_home: bool


@dataclass(frozen=True)
class Season:
    """A club's full schedule plus the squad available to play it."""

    fixtures: tuple[Fixture, ...]
    squad: tuple[Player, ...]

    def __post_init__(self) -> None:
        steps = [f.timestep for f in self.fixtures]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise SquadplanError("fixture timesteps must strictly increase")
        ids = [p.id for p in self.squad]
        if len(ids) != len(set(ids)):
            raise SquadplanError("squad player ids must be unique")

    @cached_property
    def players_by_id(self) -> Mapping[str, Player]:
        return {p.id: p for p in self.squad}

    @cached_property
    def players_by_role(self) -> Mapping[Role, tuple[Player, ...]]:
        out: dict[Role, list[Player]] = {r: [] for r in ROLES}
        for p in self.squad:
            out[p.role].append(p)
        return {r: tuple(ps) for r, ps in out.items()}


@dataclass(frozen=True)
class Lineup:
    """The set of players sent out for one game."""

    player_ids: frozenset[str]
    ids: tuple[str, ...] = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        if not self.player_ids:
            raise SquadplanError("lineup cannot be empty")
        object.__setattr__(self, "ids", tuple(sorted(self.player_ids)))

    @classmethod
    def of(cls, ids: Iterable[str]) -> "Lineup":
        """Build a regulation lineup of exactly eleven distinct players."""
        ids = list(ids)
        unique = frozenset(ids)
        if len(ids) != len(unique):
            raise SquadplanError("lineup contains duplicate player ids")
        if len(unique) != 11:
            raise SquadplanError(f"lineup must have 11 players, got {len(unique)}")
        return cls(unique)

    @property
    def is_full(self) -> bool:
        return len(self.player_ids) == 11


@dataclass(frozen=True, slots=True)
class Appearance:
    """One game actually played: when, and the physical output it produced."""

    day: int
    distance_km: float
    dribbles: float


@dataclass(frozen=True, slots=True)
class PlayerLog:
    """Per-player appearance history and career injury tallies.

    Appearances are kept in ascending day order. The injury tallies cover the
    whole career, including anything that happened before the current season.
    """

    appearances: tuple[Appearance, ...] = ()
    injury_count: int = 0
    days_injured: float = 0.0

    def with_appearance(self, app: Appearance) -> "PlayerLog":
        return PlayerLog(self.appearances + (app,), self.injury_count, self.days_injured)

    def with_injury(self, duration_days: float) -> "PlayerLog":
        return PlayerLog(self.appearances, self.injury_count + 1, self.days_injured + duration_days)


def log_from_history(player: Player, appearances: Sequence[Appearance] = ()) -> PlayerLog:
    """Seed a log from a player's recorded injury history and optional past games."""
    return PlayerLog(
        appearances=tuple(sorted(appearances, key=lambda a: a.day)),
        injury_count=len(player.injury_history),
        days_injured=float(sum(r.duration_days for r in player.injury_history)),
    )


@dataclass(frozen=True, slots=True)
class MdpState:
    """Everything the selector knows right before a game.

    ``remaining`` is the suffix of the season's fixtures starting at the game
    about to be played; an empty suffix means the season is over. Injury
    probabilities are for the upcoming game and already include any risk
    scaling in force.
    """

    fixture_index: int
    remaining: tuple[Fixture, ...]
    risk_factors: Mapping[str, "RiskFactors"]
    injury_probs: Mapping[str, float]
    unavailability: Mapping[str, int]
    logs: Mapping[str, PlayerLog]

    def __post_init__(self) -> None:
        if any(not 0.0 <= p <= 1.0 for p in self.injury_probs.values()):
            raise SquadplanError("injury probabilities must lie in [0, 1]")
        if any(v < 0 for v in self.unavailability.values()):
            raise SquadplanError("unavailability entries must be >= 0")

    @property
    def current_fixture(self) -> Fixture:
        if not self.remaining:
            raise SquadplanError("no fixtures remain in this state")
        return self.remaining[0]


def count_games_in_window(fixtures: Iterable[Fixture], start_day: int, duration_days: float) -> int:
    """Games with timestep in the half-open injury window (start_day, start_day + duration]."""
    end = start_day + duration_days
    return sum(1 for f in fixtures if start_day < f.timestep <= end)


def injury_period_to_game_count(start_day: int, duration_days: float, season: Season) -> int:
    """Number of games a player misses when injured at start_day for duration_days.

    The injuring game itself is played; a fixture exactly at the end of the
    window is still missed.
    """
    if duration_days < 0:
        raise SquadplanError(f"duration_days must be >= 0, got {duration_days}")
    return count_games_in_window(season.fixtures, start_day, duration_days)


def decrement_unavailability(unavailability: Mapping[str, int]) -> dict[str, int]:
    """Tick every injured player one game closer to availability; zeros stay zero."""
    return {pid: v - 1 if v > 0 else 0 for pid, v in unavailability.items()}
