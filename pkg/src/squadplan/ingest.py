"""Dataset bundles: on-disk schema, validation, and the synthetic league generator."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.special import expit, logit

from .core import (
    Appearance,
    Fixture,
    InjuryRecord,
    Player,
    PlayerLog,
    Season,
    SquadplanError,
    count_games_in_window,
    log_from_history,
)
from .injury import RiskFactors, compute_risk_factors
from .match import MatchGame
from .mdp import FormationConstraint, best_value_lineup


class ParseError(SquadplanError):
    """A bundle file failed schema or reference validation."""


@dataclass(frozen=True, slots=True)
class LeagueFixture:
    day: int
    home: str
    away: str


@dataclass(frozen=True, slots=True)
class AppearanceRow:
    """One historical appearance with its injury label, used for model training."""

    player_id: str
    day: int
    distance_km: float
    dribbles: float
    injured: bool


@dataclass(frozen=True, slots=True)
class MatchRow:
    """One historical game with the values actually fielded and the final score."""

    day: int
    home: str
    away: str
    home_value: float
    away_value: float
    home_goals: int
    away_goals: int


@dataclass(frozen=True)
class DatasetBundle:
    """A whole league: squads, schedule, training history and per-club settings.

    ``appearance_rows`` and ``match_rows`` come from past seasons (days < 0 in
    synthetic bundles) and feed model training; ``schedule`` is the season to
    be planned. ``replay`` optionally holds recorded lineups per club and
    gameweek for replaying historical selections.
    """

    players: tuple[Player, ...]
    club_of: Mapping[str, str]
    schedule: tuple[LeagueFixture, ...]
    formations: Mapping[str, tuple[int, int, int]]
    wages: Mapping[str, float] = field(default_factory=dict)
    appearance_rows: tuple[AppearanceRow, ...] = ()
    match_rows: tuple[MatchRow, ...] = ()
    replay: Mapping[str, tuple[tuple[str, ...], ...]] = field(default_factory=dict)
    meta: Mapping[str, Any] = field(default_factory=dict)

    @cached_property
    def clubs(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.club_of.values())))

    @cached_property
    def _players_by_club(self) -> Mapping[str, tuple[Player, ...]]:
        out: dict[str, list[Player]] = {}
        for p in self.players:
            out.setdefault(self.club_of[p.id], []).append(p)
        return {c: tuple(sorted(ps, key=lambda p: p.id)) for c, ps in out.items()}

    def squad(self, club: str) -> tuple[Player, ...]:
        try:
            return self._players_by_club[club]
        except KeyError:
            raise SquadplanError(f"unknown club {club!r}") from None

    @cached_property
    def strengths(self) -> Mapping[str, float]:
        """Per-club strength: mean fielded value in the historical games.

        Clubs without history fall back to their full-strength team value.
        """
        sums: dict[str, list[float]] = {}
        for row in self.match_rows:
            sums.setdefault(row.home, []).append(row.home_value)
            sums.setdefault(row.away, []).append(row.away_value)
        out = {}
        for club in self.clubs:
            vals = sums.get(club)
            if vals:
                out[club] = float(np.mean(vals))
            else:
                picked = best_value_lineup(self.squad(club), self.constraint(club))
                if picked is None:
                    picked = best_value_lineup(self.squad(club), FormationConstraint())
                out[club] = picked[1] if picked else 0.0
        return out

    def constraint(self, club: str) -> FormationConstraint:
        shape = self.formations.get(club)
        if shape is None:
            raise SquadplanError(f"no formation recorded for club {club!r}")
        return FormationConstraint(preferred=shape)

    def club_season(self, club: str) -> Season:
        """The planning club's schedule as a sequence of fixtures with strengths."""
        squad = self.squad(club)
        fixtures = []
        for game in self.schedule:
            if club == game.home:
                opp, home = game.away, True
            elif club == game.away:
                opp, home = game.home, False
            else:
                continue
            fixtures.append(
                Fixture(
                    index=len(fixtures) + 1,
                    timestep=game.day,
                    opponent_id=opp,
                    opponent_strength=self.strengths[opp],
                    is_home=home,
                )
            )
        if not fixtures:
            raise SquadplanError(f"club {club!r} has no fixtures in the schedule")
        return Season(fixtures=tuple(fixtures), squad=squad)

    def history_for(self, club: str) -> dict[str, list[Appearance]]:
        """Past appearances per player, for seeding workload windows."""
        out: dict[str, list[Appearance]] = {}
        ids = {p.id for p in self.squad(club)}
        for row in self.appearance_rows:
            if row.player_id in ids:
                out.setdefault(row.player_id, []).append(
                    Appearance(row.day, row.distance_km, row.dribbles)
                )
        return out


_TABLES = {
    "players": ["id", "name", "club", "role", "skill", "mean_distance", "mean_dribbles"],
    "injuries": ["player_id", "start_day", "duration_days"],
    "fixtures": ["day", "home", "away"],
    "formations": ["club", "def", "mid", "att"],
    "wages": ["player_id", "weekly_wage"],
    "appearances": ["player_id", "day", "distance_km", "dribbles", "injured"],
    "results": ["day", "home", "away", "home_value", "away_value", "home_goals", "away_goals"],
    "replay": ["club", "gameweek", "player_id"],
}
_OPTIONAL_TABLES = {"wages", "appearances", "results", "replay", "injuries"}


def _fail(table: str, row_no: int, column: str, message: str):
    raise ParseError(f"{table} row {row_no}, column {column}: {message}")


def _as_float(raw, table, row_no, column) -> float:
    try:
        value = float(raw)
    except (TypeError, ValueError):
        _fail(table, row_no, column, f"expected a number, got {raw!r}")
    if not math.isfinite(value):
        _fail(table, row_no, column, f"expected a finite number, got {raw!r}")
    return value


def _as_int(raw, table, row_no, column) -> int:
    try:
        return int(str(raw))
    except (TypeError, ValueError):
        _fail(table, row_no, column, f"expected an integer, got {raw!r}")


def _as_bool(raw, table, row_no, column) -> bool:
    text = str(raw).strip().lower()
    if text in ("1", "true"):
        return True
    if text in ("0", "false"):
        return False
    _fail(table, row_no, column, f"expected 0/1, got {raw!r}")


def _read_tables(path: Path, format: str | None) -> dict[str, list[dict]]:
    if format is None:
        format = "json" if path.suffix == ".json" or (path / "bundle.json").exists() else "csv"
    if format == "json":
        doc_path = path if path.suffix == ".json" else path / "bundle.json"
        if not doc_path.exists():
            raise ParseError(f"no bundle document at {doc_path}")
        doc = json.loads(doc_path.read_text())
        tables = {}
        for name, columns in _TABLES.items():
            rows = doc.get(name)
            if rows is None:
                if name in _OPTIONAL_TABLES:
                    tables[name] = []
                    continue
                raise ParseError(f"bundle document is missing the {name!r} table")
            for i, row in enumerate(rows, start=1):
                missing = [c for c in columns if c not in row]
                if missing:
                    _fail(name, i, missing[0], "missing field")
            tables[name] = list(rows)
        tables["meta"] = doc.get("meta", {})
        return tables
    if format != "csv":
        raise ParseError(f"unknown bundle format {format!r}")
    if not path.is_dir():
        raise ParseError(f"{path} is not a bundle directory")
    tables = {}
    for name, columns in _TABLES.items():
        file = path / f"{name}.csv"
        if not file.exists():
            if name in _OPTIONAL_TABLES:
                tables[name] = []
                continue
            raise ParseError(f"missing required file {name}.csv")
        with file.open(newline="") as fh:
            reader = csv.DictReader(fh)
            got = reader.fieldnames or []
            missing = [c for c in columns if c not in got]
            if missing:
                raise ParseError(f"{name}.csv is missing column {missing[0]!r}")
            tables[name] = list(reader)
    meta_file = path / "meta.json"
    tables["meta"] = json.loads(meta_file.read_text()) if meta_file.exists() else {}
    return tables


def load_bundle(path: str | Path, format: str | None = None) -> DatasetBundle:
    """Read and validate a dataset bundle from a CSV directory or JSON document.

    Every cross-reference is checked (players exist, clubs have formations,
    schedules keep each club's days strictly increasing) and failures name
    the table, row and column at fault.
    """
    tables = _read_tables(Path(path), format)

    injuries_by_player: dict[str, list[InjuryRecord]] = {}
    for i, row in enumerate(tables["injuries"], start=1):
        start = _as_int(row["start_day"], "injuries", i, "start_day")
        dur = _as_float(row["duration_days"], "injuries", i, "duration_days")
        if dur < 0:
            _fail("injuries", i, "duration_days", "must be >= 0")
        injuries_by_player.setdefault(str(row["player_id"]), []).append(InjuryRecord(start, dur))

    players: list[Player] = []
    club_of: dict[str, str] = {}
    for i, row in enumerate(tables["players"], start=1):
        pid = str(row["id"])
        if pid in club_of:
            _fail("players", i, "id", f"duplicate player id {pid!r}")
        history = tuple(sorted(injuries_by_player.get(pid, []), key=lambda r: r.start_day))
        try:
            player = Player(
                id=pid,
                name=str(row["name"]),
                role=str(row["role"]),
                skill=_as_float(row["skill"], "players", i, "skill"),
                mean_distance_per_game=_as_float(row["mean_distance"], "players", i, "mean_distance"),
                mean_dribbles_per_game=_as_float(row["mean_dribbles"], "players", i, "mean_dribbles"),
                injury_history=history,
            )
        except ParseError:
            raise
        except SquadplanError as exc:
            _fail("players", i, "role", str(exc))
        players.append(player)
        club_of[pid] = str(row["club"])

    for pid in injuries_by_player:
        if pid not in club_of:
            raise ParseError(f"injuries references unknown player {pid!r}")

    clubs = set(club_of.values())
    formations: dict[str, tuple[int, int, int]] = {}
    for i, row in enumerate(tables["formations"], start=1):
        club = str(row["club"])
        if club not in clubs:
            _fail("formations", i, "club", f"unknown club {club!r}")
        shape = (
            _as_int(row["def"], "formations", i, "def"),
            _as_int(row["mid"], "formations", i, "mid"),
            _as_int(row["att"], "formations", i, "att"),
        )
        try:
            FormationConstraint(preferred=shape)
        except SquadplanError as exc:
            _fail("formations", i, "def", str(exc))
        formations[club] = shape
    for club in sorted(clubs):
        if club not in formations:
            raise ParseError(f"formations is missing an entry for club {club!r}")

    schedule: list[LeagueFixture] = []
    last_day: dict[str, int] = {}
    for i, row in enumerate(tables["fixtures"], start=1):
        day = _as_int(row["day"], "fixtures", i, "day")
        home, away = str(row["home"]), str(row["away"])
        for col, club in (("home", home), ("away", away)):
            if club not in clubs:
                _fail("fixtures", i, col, f"unknown club {club!r}")
        if home == away:
            _fail("fixtures", i, "away", "a club cannot play itself")
        for club in (home, away):
            if club in last_day and day <= last_day[club]:
                _fail("fixtures", i, "day", f"{club} already plays on or after day {day}")
            last_day[club] = day
        schedule.append(LeagueFixture(day, home, away))
    if sorted(schedule, key=lambda g: g.day) != schedule:
        raise ParseError("fixtures must be sorted by day")

    wages: dict[str, float] = {}
    for i, row in enumerate(tables["wages"], start=1):
        pid = str(row["player_id"])
        if pid not in club_of:
            _fail("wages", i, "player_id", f"unknown player {pid!r}")
        wage = _as_float(row["weekly_wage"], "wages", i, "weekly_wage")
        if wage < 0:
            _fail("wages", i, "weekly_wage", "must be >= 0")
        wages[pid] = wage

    appearance_rows: list[AppearanceRow] = []
    for i, row in enumerate(tables["appearances"], start=1):
        pid = str(row["player_id"])
        if pid not in club_of:
            _fail("appearances", i, "player_id", f"unknown player {pid!r}")
        appearance_rows.append(
            AppearanceRow(
                player_id=pid,
                day=_as_int(row["day"], "appearances", i, "day"),
                distance_km=_as_float(row["distance_km"], "appearances", i, "distance_km"),
                dribbles=_as_float(row["dribbles"], "appearances", i, "dribbles"),
                injured=_as_bool(row["injured"], "appearances", i, "injured"),
            )
        )

    match_rows: list[MatchRow] = []
    for i, row in enumerate(tables["results"], start=1):
        for col in ("home", "away"):
            if str(row[col]) not in clubs:
                _fail("results", i, col, f"unknown club {row[col]!r}")
        goals_h = _as_int(row["home_goals"], "results", i, "home_goals")
        goals_a = _as_int(row["away_goals"], "results", i, "away_goals")
        if goals_h < 0 or goals_a < 0:
            _fail("results", i, "home_goals", "goals must be >= 0")
        match_rows.append(
            MatchRow(
                day=_as_int(row["day"], "results", i, "day"),
                home=str(row["home"]),
                away=str(row["away"]),
                home_value=_as_float(row["home_value"], "results", i, "home_value"),
                away_value=_as_float(row["away_value"], "results", i, "away_value"),
                home_goals=goals_h,
                away_goals=goals_a,
            )
        )

    replay_raw: dict[str, dict[int, list[str]]] = {}
    for i, row in enumerate(tables["replay"], start=1):
        club = str(row["club"])
        if club not in clubs:
            _fail("replay", i, "club", f"unknown club {club!r}")
        pid = str(row["player_id"])
        if pid not in club_of:
            _fail("replay", i, "player_id", f"unknown player {pid!r}")
        gw = _as_int(row["gameweek"], "replay", i, "gameweek")
        replay_raw.setdefault(club, {}).setdefault(gw, []).append(pid)
    replay: dict[str, tuple[tuple[str, ...], ...]] = {}
    for club, weeks in replay_raw.items():
        if sorted(weeks) != list(range(1, len(weeks) + 1)):
            raise ParseError(f"replay for {club!r} must cover gameweeks 1..n without gaps")
        replay[club] = tuple(tuple(sorted(weeks[gw])) for gw in sorted(weeks))

    return DatasetBundle(
        players=tuple(players),
        club_of=club_of,
        schedule=tuple(schedule),
        formations=formations,
        wages=wages,
        appearance_rows=tuple(appearance_rows),
        match_rows=tuple(match_rows),
        replay=replay,
        meta=tables["meta"],
    )


def _bundle_tables(bundle: DatasetBundle) -> dict[str, list[dict]]:
    players = [
        {
            "id": p.id,
            "name": p.name,
            "club": bundle.club_of[p.id],
            "role": p.role,
            "skill": p.skill,
            "mean_distance": p.mean_distance_per_game,
            "mean_dribbles": p.mean_dribbles_per_game,
        }
        for p in bundle.players
    ]
    injuries = [
        {"player_id": p.id, "start_day": rec.start_day, "duration_days": rec.duration_days}
        for p in bundle.players
        for rec in p.injury_history
    ]
    fixtures = [{"day": g.day, "home": g.home, "away": g.away} for g in bundle.schedule]
    formations = [
        {"club": club, "def": shape[0], "mid": shape[1], "att": shape[2]}
        for club, shape in sorted(bundle.formations.items())
    ]
    wages = [
        {"player_id": pid, "weekly_wage": wage} for pid, wage in sorted(bundle.wages.items())
    ]
    appearances = [
        {
            "player_id": r.player_id,
            "day": r.day,
            "distance_km": r.distance_km,
            "dribbles": r.dribbles,
            "injured": int(r.injured),
        }
        for r in bundle.appearance_rows
    ]
    results = [
        {
            "day": r.day,
            "home": r.home,
            "away": r.away,
            "home_value": r.home_value,
            "away_value": r.away_value,
            "home_goals": r.home_goals,
            "away_goals": r.away_goals,
        }
        for r in bundle.match_rows
    ]
    replay = [
        {"club": club, "gameweek": gw + 1, "player_id": pid}
        for club, weeks in sorted(bundle.replay.items())
        for gw, lineup in enumerate(weeks)
        for pid in lineup
    ]
    return {
        "players": players,
        "injuries": injuries,
        "fixtures": fixtures,
        "formations": formations,
        "wages": wages,
        "appearances": appearances,
        "results": results,
        "replay": replay,
    }


def write_bundle(bundle: DatasetBundle, path: str | Path, format: str = "csv") -> None:
    """Write a bundle as a CSV directory or a single JSON document."""
    path = Path(path)
    tables = _bundle_tables(bundle)
    if format == "json":
        doc = dict(tables)
        doc["meta"] = dict(bundle.meta)
        target = path if path.suffix == ".json" else path / "bundle.json"
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(json.dumps(doc, indent=2, sort_keys=True))
        return
    if format != "csv":
        raise ParseError(f"unknown bundle format {format!r}")
    path.mkdir(parents=True, exist_ok=True)
    for name, columns in _TABLES.items():
        rows = tables[name]
        if not rows and name in _OPTIONAL_TABLES:
            continue
        with (path / f"{name}.csv").open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _cell(v) for k, v in row.items()})
    (path / "meta.json").write_text(json.dumps(dict(bundle.meta), indent=2, sort_keys=True))


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def training_rows_from_bundle(
    bundle: DatasetBundle,
) -> tuple[list[tuple[RiskFactors, bool]], list[str]]:
    """Replay the appearance history into labelled risk-factor rows.

    Each appearance is turned into the risk factors a selector would have
    seen just before that game: prior appearances fill the workload windows
    and injuries dated strictly before the game fill the career tallies.
    Returns (rows, player_ids) aligned index-for-index.
    """
    if not bundle.appearance_rows:
        raise ParseError("bundle has no appearance history to train on")
    players = {p.id: p for p in bundle.players}
    logs: dict[str, PlayerLog] = {pid: PlayerLog() for pid in players}
    pending_injuries: dict[str, list[InjuryRecord]] = {
        pid: sorted(p.injury_history, key=lambda r: r.start_day) for pid, p in players.items()
    }
    consumed: dict[str, int] = {pid: 0 for pid in players}

    rows: list[tuple[RiskFactors, bool]] = []
    ids: list[str] = []
    for row in sorted(bundle.appearance_rows, key=lambda r: (r.day, r.player_id)):
        pid = row.player_id
        log = logs[pid]
        recs = pending_injuries[pid]
        k = consumed[pid]
        while k < len(recs) and recs[k].start_day < row.day:
            log = log.with_injury(recs[k].duration_days)
            k += 1
        consumed[pid] = k
        rows.append((compute_risk_factors(players[pid], log, row.day), row.injured))
        ids.append(pid)
        logs[pid] = log.with_appearance(Appearance(row.day, row.distance_km, row.dribbles))
    return rows, ids


def match_games_from_bundle(bundle: DatasetBundle) -> list[MatchGame]:
    """Historical results as training games for the goal model."""
    if not bundle.match_rows:
        raise ParseError("bundle has no match history to train on")
    return [
        MatchGame(r.home_value, r.away_value, r.home_goals, r.away_goals)
        for r in bundle.match_rows
    ]


_RISK_TRUTH_TERMS = (
    ("acute_workload", 15.0, 8.0, 0.9),
    ("chronic_workload", 15.0, 8.0, -0.25),
    ("acute_chronic_ratio", 1.0, 0.6, 0.5),
    ("past_injury_count", 3.0, 2.5, 0.55),
    ("career_days_injured", 60.0, 45.0, 0.35),
    ("distance_covered_recent", 10.0, 2.0, 0.2),
    ("dribbles_recent", 2.0, 1.5, 0.1),
)

_FORMATION_CHOICES = ((4, 4, 2), (4, 3, 3), (3, 5, 2), (4, 5, 1), (3, 4, 3), (5, 4, 1), (5, 3, 2))


def _truth_logit(terms: Sequence, bias: float, f: RiskFactors) -> float:
    z = bias
    for name, center, scale, weight in terms:
        z += weight * (getattr(f, name) - center) / scale
    return z


def synth_truth_probabilities(meta: Mapping, factors: Sequence[RiskFactors]) -> np.ndarray:
    """The generator's own injury probabilities for given risk factors."""
    truth = meta.get("ground_truth", {}).get("risk")
    if not truth:
        raise SquadplanError("bundle meta carries no generator ground truth")
    terms = [tuple(t) for t in truth["terms"]]
    return np.array([expit(_truth_logit(terms, truth["bias"], f)) for f in factors])


def _round_robin(clubs: Sequence[str]) -> list[list[tuple[str, str]]]:
    """Double round-robin rounds via the circle method; odd club counts get a bye."""
    names = list(clubs)
    if len(names) % 2:
        names.append("")
    n = len(names)
    first_half = []
    rotation = names[1:]
    for r in range(n - 1):
        pairing = []
        line = [names[0]] + rotation
        for i in range(n // 2):
            a, b = line[i], line[n - 1 - i]
            if not a or not b:
                continue
            pairing.append((a, b) if (r + i) % 2 == 0 else (b, a))
        first_half.append(pairing)
        rotation = rotation[-1:] + rotation[:-1]
    second_half = [[(b, a) for a, b in pairing] for pairing in first_half]
    return first_half + second_half


class _SimPlayer:
    """Mutable per-player record used while simulating the training season."""

    __slots__ = ("player", "log", "out_games", "club")

    def __init__(self, player: Player, club: str):
        self.player = player
        self.log = log_from_history(player)
        self.out_games = 0
        self.club = club


def _simulate_history(
    clubs, squads, formations, round_days, pairings, rng, risk_bias, betas, length_mean, length_std,
    rest_prob=0.10, record=False,
):
    """Play one full season with the generator's ground truth.

    Returns the realized incidence plus, when ``record`` is set, the
    appearance, result and injury tables the season produced.
    """
    sims: dict[str, _SimPlayer] = {}
    for club in clubs:
        for p in squads[club]:
            sims[p.id] = _SimPlayer(p, club)
    club_round_days = {club: list(round_days) for club in clubs}

    appearances: list[AppearanceRow] = []
    results: list[MatchRow] = []
    injuries: list[tuple[str, int, float]] = []
    played = 0
    hurt = 0

    for rnd, day in enumerate(round_days):
        values: dict[str, float] = {}
        fielded: dict[str, list[str]] = {}
        for club in clubs:
            roster = squads[club]
            fit = [p for p in roster if sims[p.id].out_games == 0]
            resting = set()
            for p in fit:
                if rng.random() < rest_prob:
                    resting.add(p.id)
            pool = [p for p in fit if p.id not in resting] or fit
            constraint = FormationConstraint(preferred=formations[club])
            picked = best_value_lineup(pool, constraint) or best_value_lineup(fit, constraint)
            if picked is None:
                picked = best_value_lineup(fit, FormationConstraint())
            if picked is None:
                ids = [p.id for p in sorted(fit, key=lambda p: (-p.skill, p.id))[:11]]
                value = sum(sims[i].player.skill for i in ids)
            else:
                ids, value = list(picked[0].ids), picked[1]
            values[club] = value
            fielded[club] = ids

        for home, away in pairings[rnd]:
            lam_h = math.exp(betas[0] + betas[1] * values[home] + betas[2] * values[away] + betas[3])
            lam_a = math.exp(betas[0] + betas[1] * values[away] + betas[2] * values[home])
            results.append(
                MatchRow(day, home, away, values[home], values[away],
                         int(rng.poisson(lam_h)), int(rng.poisson(lam_a)))
            )

        for club in clubs:
            future_days = club_round_days[club][rnd + 1 :]
            for pid in fielded[club]:
                sim = sims[pid]
                f = compute_risk_factors(sim.player, sim.log, day)
                theta = expit(_truth_logit(_RISK_TRUTH_TERMS, risk_bias, f))
                injured = rng.random() < theta
                played += 1
                hurt += injured
                if record:
                    appearances.append(
                        AppearanceRow(pid, day, sim.player.mean_distance_per_game,
                                      sim.player.mean_dribbles_per_game, injured)
                    )
                sim.log = sim.log.with_appearance(
                    Appearance(day, sim.player.mean_distance_per_game, sim.player.mean_dribbles_per_game)
                )
                if injured:
                    duration = max(1.0, float(rng.normal(length_mean, length_std)))
                    sim.log = sim.log.with_injury(duration)
                    sim.out_games = sum(1 for d in future_days if day < d <= day + duration)
                    if record:
                        injuries.append((pid, day, duration))
            for p in squads[club]:
                sim = sims[p.id]
                if sim.out_games > 0 and p.id not in fielded[club]:
                    sim.out_games -= 1

    incidence = hurt / played if played else 0.0
    return incidence, appearances, results, injuries


def synth_league(
    seed: int,
    n_clubs: int = 20,
    squad_size: int = 18,
    base_injury_rate: float = 0.04,
) -> DatasetBundle:
    """Generate a synthetic league with a known injury and scoring ground truth.

    Builds squads and a double round-robin schedule, then simulates one full
    training season under the generator's own models to produce appearance,
    injury and result history (on negative days). The injury generator's
    intercept is calibrated so the realized injury rate per appearance tracks
    ``base_injury_rate``. The ground truth is recorded in the bundle meta.
    """
    if n_clubs < 2:
        raise SquadplanError("need at least two clubs")
    if squad_size < 13:
        raise SquadplanError("squad_size must be at least 13")
    rng = np.random.default_rng([int(seed), 0x5EED])

    clubs = [f"C{i + 1:02d}" for i in range(n_clubs)]
    quality = {c: float(np.clip(rng.normal(1.0, 0.13), 0.72, 1.30)) for c in clubs}
    formations = {c: _FORMATION_CHOICES[int(rng.integers(len(_FORMATION_CHOICES)))] for c in clubs}
    proneness = {c: float(rng.uniform(0.5, 3.5)) for c in clubs}

    squads: dict[str, tuple[Player, ...]] = {}
    club_of: dict[str, str] = {}
    wages: dict[str, float] = {}
    players: list[Player] = []
    for ci, club in enumerate(clubs):
        d, m, a = formations[club]
        roles = ["GK", "GK"]
        outfield = ["DEF"] * (d + 1) + ["MID"] * (m + 1) + ["ATT"] * (a + 1)
        cycle = ("DEF", "MID", "ATT")
        i = 0
        while len(roles) + len(outfield) < squad_size:
            outfield.append(cycle[i % 3])
            i += 1
        while len(roles) + len(outfield) > squad_size:
            outfield.pop()
        roles += outfield
        squad = []
        for pi, role in enumerate(roles):
            pid = f"{club}_{pi + 1:02d}"
            skill = 2.0 * quality[club] * float(np.exp(rng.normal(0.0, 0.22)))
            if role == "GK":
                dist = float(np.clip(rng.normal(4.5, 0.4), 3.0, 6.0))
                dribbles = 0.1
            else:
                dist = float(np.clip(rng.normal(10.5, 1.0), 6.0, 13.0))
                dribbles = {"DEF": 0.8, "MID": 1.8, "ATT": 2.6}[role]
                dribbles = max(0.0, float(rng.normal(dribbles, 0.5)))
            n_hist = int(rng.poisson(proneness[club]))
            starts = sorted(int(v) for v in rng.integers(-900, -260, n_hist))
            history = tuple(
                InjuryRecord(s, float(np.clip(rng.normal(18.0, 10.0), 3.0, 90.0))) for s in starts
            )
            player = Player(
                id=pid,
                name=f"Player {club}-{pi + 1:02d}",
                role=role,
                skill=round(skill, 4),
                mean_distance_per_game=round(dist, 3),
                mean_dribbles_per_game=round(dribbles, 3),
                injury_history=history,
            )
            squad.append(player)
            players.append(player)
            club_of[pid] = club
            wages[pid] = float(round(2500.0 * skill**1.5 * float(np.exp(rng.normal(0.0, 0.15)))))
        squads[club] = tuple(squad)

    pairings = _round_robin(clubs)
    n_rounds = len(pairings)

    def draw_round_days():
        gaps = rng.integers(3, 8, n_rounds - 1)
        days = [0]
        for g in gaps:
            days.append(days[-1] + int(g))
        return days

    history_days_raw = draw_round_days()
    shift = history_days_raw[-1] + 14
    history_days = [d - shift for d in history_days_raw]
    season_days = draw_round_days()

    betas = (0.06, 0.032, -0.032, 0.28)
    length_mean, length_std = 18.0, 9.0

    bias = float(logit(base_injury_rate))
    for _ in range(3):
        incidence, _, _, _ = _simulate_history(
            clubs, squads, formations, history_days, pairings, np.random.default_rng([int(seed), 7]),
            bias, betas, length_mean, length_std, record=False,
        )
        incidence = min(max(incidence, 1e-4), 0.9)
        bias += float(logit(base_injury_rate)) - float(logit(incidence))

    incidence, appearances, results, season_injuries = _simulate_history(
        clubs, squads, formations, history_days, pairings, np.random.default_rng([int(seed), 11]),
        bias, betas, length_mean, length_std, record=True,
    )

    extra_history: dict[str, list[InjuryRecord]] = {}
    for pid, day, duration in season_injuries:
        extra_history.setdefault(pid, []).append(InjuryRecord(day, round(duration, 3)))
    if extra_history:
        players = [
            replace(
                p,
                injury_history=tuple(
                    sorted(p.injury_history + tuple(extra_history.get(p.id, ())),
                           key=lambda r: r.start_day)
                ),
            )
            for p in players
        ]
        squads = {}
        for p in players:
            squads.setdefault(club_of[p.id], []).append(p)

    schedule = []
    for rnd, day in enumerate(season_days):
        for home, away in pairings[rnd]:
            schedule.append(LeagueFixture(day, home, away))

    meta = {
        "generator": "synth-league",
        "seed": int(seed),
        "n_clubs": n_clubs,
        "squad_size": squad_size,
        "base_injury_rate": base_injury_rate,
        "realized_incidence": round(incidence, 5),
        "ground_truth": {
            "risk": {
                "bias": bias,
                "terms": [list(t) for t in _RISK_TRUTH_TERMS],
            },
            "match": {"beta0": betas[0], "beta1": betas[1], "beta2": betas[2], "beta_home": betas[3]},
            "lengths": {"mean_days": length_mean, "std_days": length_std},
        },
    }

    return DatasetBundle(
        players=tuple(players),
        club_of=club_of,
        schedule=tuple(schedule),
        formations=formations,
        wages=wages,
        appearance_rows=tuple(appearances),
        match_rows=tuple(results),
        replay={},
        meta=meta,
    )
