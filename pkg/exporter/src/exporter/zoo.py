"""The fixed model zoos and the cross-validated screening rule.

Models carry fixed hyperparameters (random_state=42 wherever the
estimator accepts one). The screen keeps models whose mean 5-fold
cross-validated score falls inside a band: accuracy for classification,
R^2 for regression.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.ensemble import (
    AdaBoostClassifier,
    AdaBoostRegressor,
    GradientBoostingClassifier,
    GradientBoostingRegressor,
    RandomForestClassifier,
    RandomForestRegressor,
)
from sklearn.linear_model import LinearRegression, LogisticRegression, RidgeClassifier
from sklearn.model_selection import cross_val_score
from sklearn.naive_bayes import GaussianNB
from sklearn.neighbors import KNeighborsClassifier, KNeighborsRegressor
from sklearn.tree import DecisionTreeClassifier, DecisionTreeRegressor

DEFAULT_BAND = (0.65, 0.70)


@dataclass(frozen=True)
class ZooEntry:
    label: str
    summary: str
    factory: object  # () -> unfitted estimator


def classification_zoo() -> tuple[ZooEntry, ...]:
    return (
        ZooEntry("rf_100", "RandomForest(100)", lambda: RandomForestClassifier(
            n_estimators=100, random_state=42)),
        ZooEntry("rf_200_d10", "RandomForest(200, depth<=10)", lambda: RandomForestClassifier(
            n_estimators=200, max_depth=10, random_state=42)),
        ZooEntry("gb_100", "GradientBoosting(100)", lambda: GradientBoostingClassifier(
            n_estimators=100, random_state=42)),
        ZooEntry("gb_200_lr005", "GradientBoosting(200, lr=0.05)", lambda: GradientBoostingClassifier(
            n_estimators=200, learning_rate=0.05, random_state=42)),
        ZooEntry("knn_default", "KNeighbors(default)", lambda: KNeighborsClassifier()),
        ZooEntry("knn_3", "KNeighbors(3)", lambda: KNeighborsClassifier(n_neighbors=3)),
        ZooEntry("dt_unbounded", "DecisionTree(unbounded)", lambda: DecisionTreeClassifier(
            random_state=42)),
        ZooEntry("dt_d10", "DecisionTree(depth<=10)", lambda: DecisionTreeClassifier(
            max_depth=10, random_state=42)),
        ZooEntry("logreg", "LogisticRegression", lambda: LogisticRegression(
            max_iter=1000, random_state=42)),
        ZooEntry("ridge", "RidgeClassifier", lambda: RidgeClassifier(random_state=42)),
        ZooEntry("adaboost", "AdaBoost(default)", lambda: AdaBoostClassifier(random_state=42)),
        ZooEntry("gaussian_nb", "GaussianNB", lambda: GaussianNB()),
    )


def regression_zoo() -> tuple[ZooEntry, ...]:
    return (
        ZooEntry("rf_100", "RandomForest(100)", lambda: RandomForestRegressor(
            n_estimators=100, random_state=42)),
        ZooEntry("rf_200_d10", "RandomForest(200, depth<=10)", lambda: RandomForestRegressor(
            n_estimators=200, max_depth=10, random_state=42)),
        ZooEntry("gb_100", "GradientBoosting(100)", lambda: GradientBoostingRegressor(
            n_estimators=100, random_state=42)),
        ZooEntry("gb_200_lr005", "GradientBoosting(200, lr=0.05)", lambda: GradientBoostingRegressor(
            n_estimators=200, learning_rate=0.05, random_state=42)),
        ZooEntry("knn_default", "KNeighbors(default)", lambda: KNeighborsRegressor()),
        ZooEntry("knn_3", "KNeighbors(3)", lambda: KNeighborsRegressor(n_neighbors=3)),
        ZooEntry("dt_unbounded", "DecisionTree(unbounded)", lambda: DecisionTreeRegressor(
            random_state=42)),
        ZooEntry("dt_d10", "DecisionTree(depth<=10)", lambda: DecisionTreeRegressor(
            max_depth=10, random_state=42)),
        ZooEntry("linreg", "LinearRegression", lambda: LinearRegression()),
        ZooEntry("adaboost", "AdaBoost(default)", lambda: AdaBoostRegressor(random_state=42)),
    )


def zoo_for(task: str) -> tuple[ZooEntry, ...]:
    return classification_zoo() if task == "classification" else regression_zoo()


@dataclass(frozen=True)
class ScreenResult:
    label: str
    cv_score: float
    passed: bool


def screen_zoo(
    entries, X: np.ndarray, y: np.ndarray, task: str,
    band: tuple[float, float] = DEFAULT_BAND, folds: int = 5,
) -> tuple[ScreenResult, ...]:
    lo, hi = band
    scoring = "accuracy" if task == "classification" else "r2"
    out = []
    for entry in entries:
        scores = cross_val_score(entry.factory(), X, y, cv=folds, scoring=scoring)
        mean = float(np.mean(scores))
        out.append(ScreenResult(entry.label, mean, lo <= mean <= hi))
    return tuple(out)


def predict_scores(model, X: np.ndarray, task: str) -> np.ndarray:
    """Class-1 probability (classification) or clipped value (regression).

    Margin-only classifiers (Ridge) go through a logistic squash of the
    decision function; the manifest records this.
    """
    if task == "classification":
        if hasattr(model, "predict_proba"):
            return model.predict_proba(X)[:, 1]
        margin = model.decision_function(X)
        return 1.0 / (1.0 + np.exp(-margin))
    return np.clip(model.predict(X), 0.0, 1.0)
