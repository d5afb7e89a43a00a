"""Season-long squad selection: risk-aware lineup planning over a full schedule."""

from .core import (
    Appearance,
    Fixture,
    InjuryRecord,
    Lineup,
    MdpState,
    Player,
    PlayerLog,
    Season,
    SquadplanError,
)
from .injury import InjuryModel, LengthDistribution, RiskFactors
from .match import MatchModel
from .mdp import FormationConstraint, ModelSet
from .search import SearchConfig

__version__ = "0.1.0"

__all__ = [
    "Appearance",
    "Fixture",
    "FormationConstraint",
    "InjuryModel",
    "InjuryRecord",
    "LengthDistribution",
    "Lineup",
    "MatchModel",
    "MdpState",
    "ModelSet",
    "Player",
    "PlayerLog",
    "RiskFactors",
    "SearchConfig",
    "Season",
    "SquadplanError",
    "__version__",
]
