"""CATE meta-learners over scikit-learn base models, plus tree subgrouping.

Implements the S-, T-, and X-learners directly (two or three regression
stages over gradient boosting). The R-learner and the uplift tree come
from the causalml package when it is installed; otherwise they are
reported as unavailable rather than silently substituted.

Subgroups come from a depth-bounded regression tree fitted on the
inverse-propensity transformed outcome (propensity 0.5 under a randomized
trial): its leaves partition the covariate space into cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.ensemble import GradientBoostingRegressor
from sklearn.tree import DecisionTreeRegressor


def _base(seed: int) -> GradientBoostingRegressor:
    return GradientBoostingRegressor(n_estimators=80, max_depth=3, random_state=seed)


def s_learner(X, y, t, seed: int) -> np.ndarray:
    """One model over (X, t); effect = mu(x, 1) - mu(x, 0)."""
    Xt = np.column_stack([X, t])
    model = _base(seed).fit(Xt, y)
    ones = np.column_stack([X, np.ones(len(X))])
    zeros = np.column_stack([X, np.zeros(len(X))])
    return model.predict(ones) - model.predict(zeros)


def t_learner(X, y, t, seed: int) -> np.ndarray:
    """Separate outcome models per arm; effect = mu1(x) - mu0(x)."""
    treated = t == 1
    mu1 = _base(seed).fit(X[treated], y[treated])
    mu0 = _base(seed + 1).fit(X[~treated], y[~treated])
    return mu1.predict(X) - mu0.predict(X)


def x_learner(X, y, t, seed: int, propensity: float = 0.5) -> np.ndarray:
    """Imputed-effect regressions per arm, blended by the propensity."""
    treated = t == 1
    mu1 = _base(seed).fit(X[treated], y[treated])
    mu0 = _base(seed + 1).fit(X[~treated], y[~treated])
    d1 = y[treated] - mu0.predict(X[treated])
    d0 = mu1.predict(X[~treated]) - y[~treated]
    tau1 = _base(seed + 2).fit(X[treated], d1)
    tau0 = _base(seed + 3).fit(X[~treated], d0)
    return propensity * tau0.predict(X) + (1.0 - propensity) * tau1.predict(X)


def r_learner(X, y, t, seed: int) -> np.ndarray:
    try:
        from causalml.inference.meta import BaseRRegressor
    except ImportError as exc:
        raise EstimatorUnavailable("r_learner requires the causalml package") from exc
    learner = BaseRRegressor(learner=_base(seed), random_state=seed)
    return learner.fit_predict(X=X, treatment=t.astype(int), y=y).ravel()


def uplift_tree(X, y, t, seed: int) -> np.ndarray:
    try:
        from causalml.inference.tree import UpliftTreeClassifier
    except ImportError as exc:
        raise EstimatorUnavailable("uplift_tree requires the causalml package") from exc
    model = UpliftTreeClassifier(control_name="0", random_state=seed)
    model.fit(X, treatment=np.where(t == 1, "1", "0"), y=y.astype(int))
    pred = model.predict(X)
    return np.asarray(pred[:, 1] - pred[:, 0], dtype=float)


class EstimatorUnavailable(Exception):
    """An optional estimator's backing package is not installed."""


META_LEARNERS = {
    "s_learner": s_learner,
    "t_learner": t_learner,
    "x_learner": x_learner,
    "r_learner": r_learner,
    "uplift_tree": uplift_tree,
}


@dataclass(frozen=True)
class Subgrouping:
    cells: np.ndarray  # cell id per unit, dense 0..n_cells-1
    n_cells: int


def tree_subgroups(
    X, y, t, max_leaf_nodes: int, seed: int, min_samples_leaf: int = 20
) -> Subgrouping:
    """Leaves of a tree on the transformed outcome 2*y*t - 2*y*(1-t).

    Small leaves make the per-cell pseudo-outcomes noisy (and let the tree
    chase noise pockets); raise min_samples_leaf when stable cell-level
    targets matter more than resolution.
    """
    z = 2.0 * y * t - 2.0 * y * (1.0 - t)
    tree = DecisionTreeRegressor(
        max_leaf_nodes=max_leaf_nodes, min_samples_leaf=min_samples_leaf, random_state=seed
    ).fit(X, z)
    leaves = tree.apply(X)
    _, dense = np.unique(leaves, return_inverse=True)
    return Subgrouping(cells=dense.astype(int), n_cells=int(dense.max()) + 1)


def cell_means(values: np.ndarray, cells: np.ndarray, n_cells: int) -> np.ndarray:
    sums = np.bincount(cells, weights=values, minlength=n_cells)
    counts = np.bincount(cells, minlength=n_cells)
    return sums / np.maximum(counts, 1)
