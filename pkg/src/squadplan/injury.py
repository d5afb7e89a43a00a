"""Per-player injury probability: risk features, models, explanations, lengths."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .core import (
    Fixture,
    InjuryRecord,
    Player,
    PlayerLog,
    Season,
    SquadplanError,
    count_games_in_window,
)

FEATURE_NAMES: tuple[str, ...] = (
    "acute_workload",
    "chronic_workload",
    "acute_chronic_ratio",
    "past_injury_count",
    "career_days_injured",
    "distance_covered_recent",
    "dribbles_recent",
    "age_years",
)

ACUTE_WINDOW_DAYS = 7
CHRONIC_WINDOW_DAYS = 28
RECENT_GAMES = 3

CALIBRATED = "calibrated_classifier"
BASELINE = "heuristic_baseline"


class TrainingError(SquadplanError):
    """Training data or optimization violated the model's requirements."""


class FitError(SquadplanError):
    """Not enough signal to fit a distribution."""


class UnsupportedModelError(SquadplanError):
    """The requested operation is not defined for this model kind."""


@dataclass(frozen=True, slots=True)
class RiskFactors:
    """Feature vector summarising a player's injury risk before one game.

    Workloads are trailing sums of distance covered: the acute window is the
    last 7 days, the chronic window the last 28 days normalised to km/week.
    The ratio is acute over chronic, zero when both windows are empty.
    """

    acute_workload: float = 0.0
    chronic_workload: float = 0.0
    acute_chronic_ratio: float = 0.0
    past_injury_count: float = 0.0
    career_days_injured: float = 0.0
    distance_covered_recent: float = 0.0
    dribbles_recent: float = 0.0
    age_years: float = 0.0

    def as_vector(self) -> np.ndarray:
        return np.array(
            [
                self.acute_workload,
                self.chronic_workload,
                self.acute_chronic_ratio,
                self.past_injury_count,
                self.career_days_injured,
                self.distance_covered_recent,
                self.dribbles_recent,
                self.age_years,
            ],
            dtype=float,
        )


def compute_risk_factors(player: Player, log: PlayerLog, as_of_day: int) -> RiskFactors:
    """Trailing-window workload and history features as of the given day.

    Appearances dated after as_of_day are a caller bug; empty windows yield
    zeros so a long-rested player reverts to baseline workload risk.
    """
    acute = 0.0
    chronic_total = 0.0
    cutoff_chronic = as_of_day - CHRONIC_WINDOW_DAYS
    cutoff_acute = as_of_day - ACUTE_WINDOW_DAYS
    for app in reversed(log.appearances):
        if app.day <= cutoff_chronic:
            break
        chronic_total += app.distance_km
        if app.day > cutoff_acute:
            acute += app.distance_km
    chronic = chronic_total * (7.0 / CHRONIC_WINDOW_DAYS)
    ratio = acute / chronic if chronic > 0.0 else 0.0

    recent = log.appearances[-RECENT_GAMES:]
    if recent:
        dist_recent = sum(a.distance_km for a in recent) / len(recent)
        dribbles_recent = sum(a.dribbles for a in recent) / len(recent)
    else:
        dist_recent = dribbles_recent = 0.0

    return RiskFactors(
        acute_workload=acute,
        chronic_workload=chronic,
        acute_chronic_ratio=ratio,
        past_injury_count=float(log.injury_count),
        career_days_injured=float(log.days_injured),
        distance_covered_recent=dist_recent,
        dribbles_recent=dribbles_recent,
    )


@dataclass(frozen=True)
class InjuryModel:
    """A trained injury-probability model.

    ``calibrated_classifier`` is a logistic model over the risk-factor vector;
    ``heuristic_baseline`` predicts each player's historical injury rate with a
    global-rate fallback and ignores the features entirely.
    """

    kind: str
    feature_names: tuple[str, ...] = FEATURE_NAMES
    weights: tuple[float, ...] | None = None
    bias: float = 0.0
    feature_means: tuple[float, ...] | None = None
    player_rates: Mapping[str, float] | None = None
    global_rate: float = 0.0

    @property
    def uses_features(self) -> bool:
        return self.kind == CALIBRATED


def fixed_risk_model(probs: Mapping[str, float], default: float = 0.0) -> InjuryModel:
    """Baseline-shaped model with hand-set per-player probabilities.

    Useful for tests and what-if analysis where risk must be controlled
    exactly.
    """
    bad = {p: v for p, v in probs.items() if not 0.0 <= v <= 1.0}
    if bad or not 0.0 <= default <= 1.0:
        raise SquadplanError("fixed probabilities must lie in [0, 1]")
    return InjuryModel(kind=BASELINE, player_rates=dict(probs), global_rate=default)


def binary_log_loss(y_true: np.ndarray, probs: np.ndarray, eps: float = 1e-12) -> float:
    """Mean binary cross-entropy with probabilities clipped away from 0 and 1."""
    p = np.clip(np.asarray(probs, dtype=float), eps, 1.0 - eps)
    y = np.asarray(y_true, dtype=float)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def _fit_logistic(
    X: np.ndarray, y: np.ndarray, tol: float = 1e-8, max_iter: int = 100_000
) -> tuple[np.ndarray, float]:
    """Full-batch gradient descent on mean binary cross-entropy.

    Features are standardised internally and the weights mapped back to the
    raw scale. Step sizes use a Barzilai-Borwein guess backtracked to satisfy
    Armijo decrease, with a Lipschitz-safe fallback; iteration stops when the
    gradient max-norm drops below ``tol``.
    """
    n, d = X.shape
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0.0] = 1.0
    Z = np.hstack([(X - mu) / sd, np.ones((n, 1))])

    gram = Z.T @ Z / (4.0 * n)
    lam_max = float(np.linalg.eigvalsh(gram)[-1])
    base_step = 1.0 / max(lam_max, 1e-12)

    def loss_grad(theta: np.ndarray) -> tuple[float, np.ndarray]:
        p = expit(Z @ theta)
        loss = binary_log_loss(y, p)
        grad = Z.T @ (p - y) / n
        return loss, grad

    theta = np.zeros(d + 1)
    loss, grad = loss_grad(theta)
    prev_theta: np.ndarray | None = None
    prev_grad: np.ndarray | None = None
    for _ in range(max_iter):
        if float(np.max(np.abs(grad))) < tol:
            break
        step = base_step
        if prev_theta is not None:
            s = theta - prev_theta
            dg = grad - prev_grad
            denom = float(s @ dg)
            if denom > 1e-300:
                step = float(s @ s) / denom
        gnorm2 = float(grad @ grad)
        for _ in range(60):
            cand = theta - step * grad
            cand_loss, cand_grad = loss_grad(cand)
            if math.isfinite(cand_loss) and cand_loss <= loss - 1e-4 * step * gnorm2:
                break
            step *= 0.5
        prev_theta, prev_grad = theta, grad
        theta, loss, grad = cand, cand_loss, cand_grad

    w = theta[:d] / sd
    b = float(theta[d] - np.sum(theta[:d] * mu / sd))
    return w, b


def train_injury_model(
    rows: Sequence[tuple[RiskFactors, bool]],
    kind: str = CALIBRATED,
    player_ids: Sequence[str] | None = None,
) -> InjuryModel:
    """Fit an injury model on labelled risk-factor rows.

    ``player_ids``, when given, must align with ``rows``; the heuristic
    baseline needs them to learn per-player rates and falls back to the
    global rate for players it has never seen.
    """
    if player_ids is not None and len(player_ids) != len(rows):
        raise TrainingError("player_ids must align one-to-one with rows")
    y = np.array([1.0 if injured else 0.0 for _, injured in rows])
    if len(rows) < 4 or y.sum() < 2 or (len(y) - y.sum()) < 2:
        raise TrainingError("need at least two rows of each class to train")

    if kind == BASELINE:
        rates: dict[str, float] = {}
        if player_ids is not None:
            totals: dict[str, list[int]] = {}
            for pid, (_, injured) in zip(player_ids, rows):
                seen = totals.setdefault(pid, [0, 0])
                seen[0] += 1
                seen[1] += 1 if injured else 0
            rates = {pid: inj / cnt for pid, (cnt, inj) in totals.items()}
        return InjuryModel(kind=BASELINE, player_rates=rates, global_rate=float(y.mean()))

    if kind != CALIBRATED:
        raise TrainingError(f"unknown model kind {kind!r}")
    X = np.array([f.as_vector() for f, _ in rows])
    if not np.all(np.isfinite(X)):
        raise TrainingError("risk factors contain non-finite values")
    w, b = _fit_logistic(X, y)
    return InjuryModel(
        kind=CALIBRATED,
        feature_names=FEATURE_NAMES,
        weights=tuple(float(v) for v in w),
        bias=b,
        feature_means=tuple(float(v) for v in X.mean(axis=0)),
    )


def predict_injury_prob(model: InjuryModel, f: RiskFactors, player_id: str | None = None) -> float:
    """Probability the player is injured in the upcoming game."""
    if model.kind == CALIBRATED:
        z = float(np.dot(model.weights, f.as_vector())) + model.bias
        return float(expit(z))
    rates = model.player_rates or {}
    if player_id is not None and player_id in rates:
        return float(rates[player_id])
    return float(model.global_rate)


def predict_injury_probs(
    model: InjuryModel,
    factors: Sequence[RiskFactors],
    player_ids: Sequence[str] | None = None,
) -> np.ndarray:
    """Vectorised prediction over several players at once."""
    if model.kind == CALIBRATED:
        X = np.array([f.as_vector() for f in factors])
        return expit(X @ np.asarray(model.weights) + model.bias)
    rates = model.player_rates or {}
    if player_ids is None:
        return np.full(len(factors), model.global_rate)
    return np.array([rates.get(pid, model.global_rate) for pid in player_ids])


def explain_prediction(
    model: InjuryModel, f: RiskFactors, top_k: int = 3
) -> list[tuple[str, float, float]]:
    """Top feature contributions to one prediction, in link (log-odds) space.

    Contributions are measured against the training feature means, so the
    base value plus all contributions reproduces the link-space output
    exactly. Returns (feature, signed contribution, feature value) sorted by
    absolute contribution.
    """
    if model.kind != CALIBRATED:
        raise UnsupportedModelError(f"explanations are not available for {model.kind!r}")
    x = f.as_vector()
    means = np.asarray(model.feature_means)
    contribs = np.asarray(model.weights) * (x - means)
    order = np.argsort(-np.abs(contribs), kind="stable")
    out = [(model.feature_names[i], float(contribs[i]), float(x[i])) for i in order]
    return out[:top_k]


def attribution_base(model: InjuryModel) -> float:
    """Link-space output at the training feature means."""
    if model.kind != CALIBRATED:
        raise UnsupportedModelError(f"explanations are not available for {model.kind!r}")
    return float(np.dot(model.weights, model.feature_means) + model.bias)


def global_feature_importance(
    model: InjuryModel, rows: Sequence[RiskFactors]
) -> list[tuple[str, float]]:
    """Mean absolute contribution per feature over an evaluation set, sorted."""
    if model.kind != CALIBRATED:
        raise UnsupportedModelError(f"explanations are not available for {model.kind!r}")
    X = np.array([f.as_vector() for f in rows])
    contribs = np.abs((X - np.asarray(model.feature_means)) * np.asarray(model.weights))
    means = contribs.mean(axis=0)
    order = np.argsort(-means, kind="stable")
    return [(model.feature_names[i], float(means[i])) for i in order]


@dataclass(frozen=True, slots=True)
class LengthDistribution:
    """Gaussian fit to injury lengths in days."""

    mean_days: float
    std_days: float

    def __post_init__(self) -> None:
        if self.std_days <= 0.0:
            raise FitError(f"std_days must be > 0, got {self.std_days}")


def fit_length_distribution(records: Sequence[InjuryRecord]) -> LengthDistribution:
    """Sample mean and sample standard deviation of injury durations."""
    if len(records) < 2:
        raise FitError("need at least two injury records to fit a length distribution")
    durations = np.array([r.duration_days for r in records], dtype=float)
    std = float(durations.std(ddof=1))
    if std == 0.0:
        raise FitError("injury durations are all identical; cannot fit a spread")
    return LengthDistribution(mean_days=float(durations.mean()), std_days=std)


def sample_injury_days(dist: LengthDistribution, rng: np.random.Generator) -> float:
    """Draw an injury length in days; negative draws clamp to zero."""
    return max(0.0, float(rng.normal(dist.mean_days, dist.std_days)))


def sample_injury_length(
    dist: LengthDistribution, rng: np.random.Generator, at_fixture: Fixture, season: Season
) -> int:
    """Draw an injury at a fixture and convert it to a count of missed games."""
    days = sample_injury_days(dist, rng)
    return count_games_in_window(season.fixtures, at_fixture.timestep, days)


def expected_clamped_days(dist: LengthDistribution) -> float:
    """E[max(N(mean, std), 0)] in closed form."""
    z = dist.mean_days / dist.std_days
    cdf = 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))
    pdf = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return dist.mean_days * cdf + dist.std_days * pdf


def model_to_dict(model: InjuryModel) -> dict:
    if model.kind == CALIBRATED:
        return {
            "kind": model.kind,
            "feature_names": list(model.feature_names),
            "weights": list(model.weights),
            "bias": model.bias,
            "feature_means": list(model.feature_means),
        }
    return {
        "kind": model.kind,
        "player_rates": dict(model.player_rates or {}),
        "global_rate": model.global_rate,
    }


def model_from_dict(doc: Mapping) -> InjuryModel:
    kind = doc.get("kind")
    if kind == CALIBRATED:
        return InjuryModel(
            kind=CALIBRATED,
            feature_names=tuple(doc["feature_names"]),
            weights=tuple(float(v) for v in doc["weights"]),
            bias=float(doc["bias"]),
            feature_means=tuple(float(v) for v in doc["feature_means"]),
        )
    if kind == BASELINE:
        return InjuryModel(
            kind=BASELINE,
            player_rates={str(k): float(v) for k, v in doc["player_rates"].items()},
            global_rate=float(doc["global_rate"]),
        )
    raise SquadplanError(f"unknown injury model kind {kind!r}")


def save_model(model: InjuryModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2, sort_keys=True))


def load_model(path: str | Path) -> InjuryModel:
    return model_from_dict(json.loads(Path(path).read_text()))
