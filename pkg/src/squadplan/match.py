"""Match outcome model: Poisson goal rates from team values, win/draw/loss probabilities."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .core import Fixture, Lineup, Player, SquadplanError

MAX_GOALS = 10


class MatchTrainingError(SquadplanError):
    """Match model training failed or was given unusable data."""


@dataclass(frozen=True, slots=True)
class MatchGame:
    """One historical game: team values on the day plus the final score."""

    home_value: float
    away_value: float
    home_goals: int
    away_goals: int


@dataclass(frozen=True, slots=True)
class OutcomeProbs:
    p_win: float
    p_draw: float
    p_loss: float


@dataclass(frozen=True)
class MatchModel:
    """Shared-coefficient Poisson goal model.

    log(rate) = beta0 + beta1 * own_value + beta2 * opp_value + beta_home * home,
    the same coefficients for both sides of a game.
    """

    beta0: float
    beta1: float
    beta2: float
    beta_home: float
    max_goals: int = MAX_GOALS

    def goal_rate(self, own_value: float, opp_value: float, home: bool) -> float:
        z = self.beta0 + self.beta1 * own_value + self.beta2 * opp_value
        if home:
            z += self.beta_home
        return math.exp(z)


def team_value(lineup: Lineup, players: Mapping[str, Player]) -> float:
    """Sum of selected players' skill ratings."""
    total = 0.0
    for pid in lineup.ids:
        p = players.get(pid)
        if p is None:
            raise SquadplanError(f"lineup references unknown player {pid!r}")
        total += p.skill
    return total


def _poisson_pmf(lam: float, max_goals: int) -> np.ndarray:
    ks = np.arange(max_goals + 1)
    log_p = ks * math.log(lam) - lam - np.array([math.lgamma(k + 1) for k in ks])
    return np.exp(log_p)


def scoreline_grid(model: MatchModel, own_value: float, opp_value: float, home: bool) -> np.ndarray:
    """Joint probability of (own goals, opponent goals), truncated and renormalised.

    Entry [i, j] is the probability of our side scoring i and the opponent j,
    for goals 0..max_goals. Truncation mass is spread by renormalising the
    grid to sum to one.
    """
    lam_own = model.goal_rate(own_value, opp_value, home)
    lam_opp = model.goal_rate(opp_value, own_value, not home)
    grid = np.outer(_poisson_pmf(lam_own, model.max_goals), _poisson_pmf(lam_opp, model.max_goals))
    return grid / grid.sum()


@lru_cache(maxsize=65536)
def _outcome_cached(model: MatchModel, own_value: float, opp_value: float, home: bool) -> OutcomeProbs:
    grid = scoreline_grid(model, own_value, opp_value, home)
    p_win = float(np.tril(grid, -1).sum())
    p_draw = float(np.trace(grid))
    p_loss = float(np.triu(grid, 1).sum())
    return OutcomeProbs(p_win, p_draw, p_loss)


def outcome_probs(model: MatchModel, own_value: float, opp_value: float, home: bool) -> OutcomeProbs:
    """Win, draw and loss probabilities from our side's perspective."""
    return _outcome_cached(model, float(own_value), float(opp_value), bool(home))


def expected_points_for_value(model: MatchModel, own_value: float, fixture: Fixture) -> float:
    """3 * P(win) + P(draw) for a team of the given total value."""
    probs = outcome_probs(model, own_value, fixture.opponent_strength, fixture.is_home)
    return 3.0 * probs.p_win + probs.p_draw


def expected_points(
    model: MatchModel, lineup: Lineup, fixture: Fixture, players: Mapping[str, Player]
) -> float:
    return expected_points_for_value(model, team_value(lineup, players), fixture)


def train_match_model(games: Sequence[MatchGame], max_goals: int = MAX_GOALS) -> MatchModel:
    """Poisson regression by Newton's method with step-halving.

    Each game becomes two rows (one per side). Coefficients start at zero and
    iterate until the mean-gradient max-norm falls below 1e-8; failure to
    converge within 200 iterations raises.
    """
    if len(games) < 10:
        raise MatchTrainingError(f"need at least 10 games to train, got {len(games)}")
    rows = []
    y = []
    for g in games:
        rows.append([1.0, g.home_value, g.away_value, 1.0])
        y.append(g.home_goals)
        rows.append([1.0, g.away_value, g.home_value, 0.0])
        y.append(g.away_goals)
    X = np.array(rows)
    yv = np.array(y, dtype=float)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(yv)) and np.all(yv >= 0)):
        raise MatchTrainingError("games contain non-finite or negative entries")

    mu = X[:, 1:3].mean(axis=0)
    sd = X[:, 1:3].std(axis=0)
    sd[sd == 0.0] = 1.0
    Z = X.copy()
    Z[:, 1:3] = (X[:, 1:3] - mu) / sd

    n = len(yv)
    beta = np.zeros(4)

    def neg_ll(b: np.ndarray) -> float:
        eta = Z @ b
        return float(np.mean(np.exp(eta) - yv * eta))

    loss = neg_ll(beta)
    converged = False
    for _ in range(200):
        lam = np.exp(Z @ beta)
        grad = Z.T @ (lam - yv) / n
        if float(np.max(np.abs(grad))) < 1e-8:
            converged = True
            break
        H = (Z * lam[:, None]).T @ Z / n
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError as exc:
            raise MatchTrainingError("singular Hessian during training") from exc
        scale = 1.0
        for _ in range(50):
            cand = beta - scale * step
            cand_loss = neg_ll(cand)
            if math.isfinite(cand_loss) and cand_loss <= loss:
                break
            scale *= 0.5
        beta, loss = cand, cand_loss
    if not converged:
        raise MatchTrainingError("Newton iteration did not converge within 200 steps")

    b1 = beta[1] / sd[0]
    b2 = beta[2] / sd[1]
    b0 = float(beta[0] - beta[1] * mu[0] / sd[0] - beta[2] * mu[1] / sd[1])
    return MatchModel(beta0=b0, beta1=float(b1), beta2=float(b2), beta_home=float(beta[3]), max_goals=max_goals)


def model_to_dict(model: MatchModel) -> dict:
    return {
        "beta0": model.beta0,
        "beta1": model.beta1,
        "beta2": model.beta2,
        "beta_home": model.beta_home,
        "max_goals": model.max_goals,
    }


def model_from_dict(doc: Mapping) -> MatchModel:
    return MatchModel(
        beta0=float(doc["beta0"]),
        beta1=float(doc["beta1"]),
        beta2=float(doc["beta2"]),
        beta_home=float(doc["beta_home"]),
        max_goals=int(doc.get("max_goals", MAX_GOALS)),
    )


def save_model(model: MatchModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2, sort_keys=True))


def load_model(path: str | Path) -> MatchModel:
    return model_from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ClubBaselineModel:
    """Classic club-identity Poisson baseline: per-club attack/defence plus home edge.

    Ignores who is on the pitch; serves as a reference point for the
    value-driven model.
    """

    clubs: tuple[str, ...]
    attack: Mapping[str, float]
    defence: Mapping[str, float]
    home_adv: float
    intercept: float
    max_goals: int = MAX_GOALS

    def rates(self, home_club: str, away_club: str) -> tuple[float, float]:
        lam_h = math.exp(self.intercept + self.attack[home_club] + self.defence[away_club] + self.home_adv)
        lam_a = math.exp(self.intercept + self.attack[away_club] + self.defence[home_club])
        return lam_h, lam_a

    def outcome_probs(self, home_club: str, away_club: str) -> OutcomeProbs:
        lam_h, lam_a = self.rates(home_club, away_club)
        grid = np.outer(_poisson_pmf(lam_h, self.max_goals), _poisson_pmf(lam_a, self.max_goals))
        grid /= grid.sum()
        return OutcomeProbs(
            p_win=float(np.tril(grid, -1).sum()),
            p_draw=float(np.trace(grid)),
            p_loss=float(np.triu(grid, 1).sum()),
        )


def train_club_baseline(
    games: Sequence[tuple[str, str, int, int]], max_goals: int = MAX_GOALS
) -> ClubBaselineModel:
    """Fit the club-identity baseline by maximum likelihood.

    ``games`` rows are (home_club, away_club, home_goals, away_goals). A tiny
    ridge term pins down the attack/defence gauge freedom.
    """
    clubs = sorted({g[0] for g in games} | {g[1] for g in games})
    if len(games) < len(clubs):
        raise MatchTrainingError("not enough games to fit per-club parameters")
    idx = {c: i for i, c in enumerate(clubs)}
    n = len(clubs)
    hi = np.array([idx[g[0]] for g in games])
    ai = np.array([idx[g[1]] for g in games])
    hg = np.array([g[2] for g in games], dtype=float)
    ag = np.array([g[3] for g in games], dtype=float)

    def unpack(theta: np.ndarray):
        return theta[0], theta[1], theta[2 : 2 + n], theta[2 + n :]

    def nll(theta: np.ndarray) -> float:
        intercept, home_adv, att, dfn = unpack(theta)
        eta_h = intercept + att[hi] + dfn[ai] + home_adv
        eta_a = intercept + att[ai] + dfn[hi]
        ll = np.sum(hg * eta_h - np.exp(eta_h)) + np.sum(ag * eta_a - np.exp(eta_a))
        return -ll + 1e-6 * float(theta @ theta)

    theta0 = np.zeros(2 + 2 * n)
    theta0[0] = math.log(max(hg.mean() + ag.mean(), 0.1) / 2.0)
    res = minimize(nll, theta0, method="L-BFGS-B", options={"maxiter": 2000})
    if not res.success and "ABNORMAL" in str(res.message).upper():
        raise MatchTrainingError(f"baseline optimisation failed: {res.message}")
    intercept, home_adv, att, dfn = unpack(res.x)
    return ClubBaselineModel(
        clubs=tuple(clubs),
        attack={c: float(att[idx[c]]) for c in clubs},
        defence={c: float(dfn[idx[c]]) for c in clubs},
        home_adv=float(home_adv),
        intercept=float(intercept),
        max_goals=max_goals,
    )


def outcome_log_loss(prob_triples: Sequence[OutcomeProbs], outcomes: Sequence[str]) -> float:
    """Mean negative log-likelihood of W/D/L outcomes ('W', 'D' or 'L')."""
    if len(prob_triples) != len(outcomes):
        raise SquadplanError("probabilities and outcomes must align")
    total = 0.0
    for probs, out in zip(prob_triples, outcomes):
        p = {"W": probs.p_win, "D": probs.p_draw, "L": probs.p_loss}.get(out)
        if p is None:
            raise SquadplanError(f"unknown outcome label {out!r}")
        total += -math.log(max(p, 1e-12))
    return total / len(outcomes)
