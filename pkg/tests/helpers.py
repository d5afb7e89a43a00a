"""Shared builders for small squads, schedules and model bundles used across tests."""

from __future__ import annotations

from squadplan.core import Fixture, Player, Season
from squadplan.injury import LengthDistribution, fixed_risk_model
from squadplan.match import MatchModel
from squadplan.mdp import ModelSet

ROLE_PREFIX = {"GK": "g", "DEF": "d", "MID": "m", "ATT": "a"}


def make_player(pid, role, skill, dist=10.0, dribbles=2.0, history=()):
    return Player(
        id=pid,
        name=pid.upper(),
        role=role,
        skill=skill,
        mean_distance_per_game=dist,
        mean_dribbles_per_game=dribbles,
        injury_history=tuple(history),
    )


def make_squad(gk=2, dfn=5, mid=5, att=3, base_skill=2.0, step=0.1):
    """Players per role with distinct, strictly decreasing skills within a role.

    Ids are role-prefixed and numbered (g1, d1, ...), so id order matches
    descending skill order within each role.
    """
    squad = []
    for role, count in (("GK", gk), ("DEF", dfn), ("MID", mid), ("ATT", att)):
        for i in range(count):
            pid = f"{ROLE_PREFIX[role]}{i + 1}"
            squad.append(make_player(pid, role, base_skill + step * (count - i)))
    return tuple(squad)


def make_fixtures(days, opponent_strength=30.0):
    return tuple(
        Fixture(
            index=i + 1,
            timestep=day,
            opponent_id=f"opp{i + 1}",
            opponent_strength=opponent_strength,
            is_home=i % 2 == 0,
        )
        for i, day in enumerate(days)
    )


def make_season(days=(0, 7, 14, 21), squad=None, opponent_strength=30.0):
    return Season(
        fixtures=make_fixtures(days, opponent_strength),
        squad=squad if squad is not None else make_squad(),
    )


def flat_match_model(beta1=0.1, beta2=-0.1, beta_home=0.3, beta0=0.2):
    return MatchModel(beta0=beta0, beta1=beta1, beta2=beta2, beta_home=beta_home)


def toy_models(risk=0.0, per_player=None, mean_days=14.0, std_days=2.0, multiplier=1.0):
    """A ModelSet with hand-set injury probabilities and a simple match model."""
    injury = fixed_risk_model(per_player or {}, default=risk)
    return ModelSet(
        injury=injury,
        lengths=LengthDistribution(mean_days, std_days),
        match=flat_match_model(),
        risk_multiplier=multiplier,
    )
