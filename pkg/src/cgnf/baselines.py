"""Classical ATE estimators for the 2-wave benchmark: IPW, RWR, GCOM, GCOM_THETA.

Designs are written as *feature recipes*: lists of terms such as ``"C1"``,
``"A1*C1"``, ``"center(C1)"`` or ``"resid(C2 ~ C1+A1)"``. Derived columns
(``center``/``resid``) are computed once from the observed data and held
fixed when treatment columns are overridden for arm predictions.
"""
from __future__ import annotations

import logging
import re
import warnings
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from .errors import EmptyStratum, SingularDesign
from .scm_sim import ARMS, COLUMNS

log = logging.getLogger(__name__)

PROB_CLIP = 1e-6


class Ate(NamedTuple):
    l10: float
    l01: float
    l11: float


class PositivityWarning(UserWarning):
    """More than 1% of propensities were clipped."""


def ate_from_arm_means(means: Mapping[tuple[int, int], float]) -> Ate:
    return Ate(means[1, 0] - means[0, 0], means[0, 1] - means[0, 0], means[1, 1] - means[1, 0])


def as_columns(data) -> dict[str, np.ndarray]:
    """Accept a dict of columns or an ``(n, 5)`` array in ``C1,A1,C2,A2,Y`` order."""
    if isinstance(data, Mapping):
        return {k: np.asarray(v, dtype=float) for k, v in data.items()}
    arr = np.asarray(getattr(data, "observed", data), dtype=float)
    return {name: arr[:, k] for k, name in enumerate(COLUMNS)}


# -- linear and logistic fits ---------------------------------------------------

@dataclass
class LinearModel:
    coef: np.ndarray
    terms: list[str]

    @property
    def intercept(self) -> float:
        return float(self.coef[0])

    def __getitem__(self, term: str) -> float:
        return float(self.coef[1 + self.terms.index(term)])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return _with_intercept(X) @ self.coef


@dataclass
class LogisticModel:
    coef: np.ndarray
    terms: list[str]
    n_iter: int = 0
    grad_norm: float = 0.0

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return expit(_with_intercept(X) @ self.coef)


def _with_intercept(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return np.column_stack([np.ones(X.shape[0]), X])


def ols(X, y, terms: Sequence[str] = (), weights=None) -> LinearModel:
    """(Weighted) least squares with an intercept column prepended."""
    D = _with_intercept(X)
    y = np.asarray(y, dtype=float)
    if weights is not None:
        sw = np.sqrt(np.asarray(weights, dtype=float))
        D_fit, y_fit = D * sw[:, None], y * sw
    else:
        D_fit, y_fit = D, y
    coef, _, rank, _ = np.linalg.lstsq(D_fit, y_fit, rcond=None)
    if rank < D.shape[1]:
        raise SingularDesign(f"design of rank {rank} < {D.shape[1]} columns ({list(terms)})")
    return LinearModel(coef, list(terms))


def logistic_irls(X, y, terms: Sequence[str] = (), tol: float = 1e-8, max_iter: int = 100) -> LogisticModel:
    """Logistic regression by Newton/IRLS until the score norm drops below ``tol``."""
    D = _with_intercept(X)
    y = np.asarray(y, dtype=float)
    beta = np.zeros(D.shape[1])
    grad_norm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(D @ beta)
        grad = D.T @ (y - p)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < tol:
            break
        w = np.clip(p * (1 - p), 1e-12, None)
        hess = D.T @ (D * w[:, None])
        try:
            beta = beta + np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            raise SingularDesign(f"singular Fisher information for {list(terms)}") from exc
    return LogisticModel(beta, list(terms), it, grad_norm)


# -- feature recipes --------------------------------------------------------------

_RESID = re.compile(r"^resid\(\s*(\w+)\s*~\s*([\w\s+]+)\)$")
_CENTER = re.compile(r"^center\(\s*(\w+)\s*\)$")


@dataclass
class Design:
    """Compiled feature recipe bound to an observed dataset."""

    terms: list[str]
    columns: dict[str, np.ndarray]
    derived: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def compile(cls, terms: Sequence[str], data) -> "Design":
        cols = as_columns(data)
        design = cls(list(terms), cols)
        for term in terms:
            for factor in _split_factors(term):
                design._factor(factor, cols)
        return design

    def _factor(self, factor: str, cols: Mapping[str, np.ndarray]) -> np.ndarray:
        if factor in self.derived:
            return self.derived[factor]
        if m := _CENTER.match(factor):
            value = self.columns[m.group(1)] - self.columns[m.group(1)].mean()
            self.derived[factor] = value
            return value
        if m := _RESID.match(factor):
            target = m.group(1)
            regressors = [r.strip() for r in m.group(2).split("+") if r.strip()]
            X = np.column_stack([self.columns[r] for r in regressors])
            fit = ols(X, self.columns[target], regressors)
            value = self.columns[target] - fit.predict(X)
            self.derived[factor] = value
            return value
        if factor in cols:
            return cols[factor]
        raise KeyError(f"unknown feature {factor!r}")

    def matrix(self, overrides: Mapping[str, float] | None = None) -> np.ndarray:
        """Design matrix (no intercept) with raw columns optionally overridden."""
        cols = dict(self.columns)
        n = len(next(iter(cols.values())))
        for name, value in (overrides or {}).items():
            cols[name] = np.full(n, float(value))
        out = []
        for term in self.terms:
            col = np.ones(n)
            for factor in _split_factors(term):
                col = col * self._factor(factor, cols)
            out.append(col)
        return np.column_stack(out) if out else np.zeros((n, 0))


def _split_factors(term: str) -> list[str]:
    parts, depth, cur = [], 0, ""
    for ch in term:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "*" and depth == 0:
            parts.append(cur.strip())
            cur = ""
        else:
            cur += ch
    parts.append(cur.strip())
    return parts


# -- estimators -------------------------------------------------------------------

DEFAULT_A1_RECIPE = ("C1",)
DEFAULT_A2_RECIPE = ("A1", "C2")
MSM_TERMS = ("A1", "A2", "A1*A2")


def _msm_contrasts(fit: LinearModel) -> Ate:
    return Ate(fit["A1"], fit["A2"], fit["A2"] + fit["A1*A2"])


def ipw_weights(data, a1_recipe=DEFAULT_A1_RECIPE, a2_recipe=DEFAULT_A2_RECIPE) -> tuple[np.ndarray, dict]:
    """Stabilized inverse-probability weights and positivity diagnostics."""
    cols = as_columns(data)
    a1, a2 = cols["A1"], cols["A2"]
    den1 = logistic_irls(Design.compile(a1_recipe, cols).matrix(), a1, a1_recipe)
    den2 = logistic_irls(Design.compile(a2_recipe, cols).matrix(), a2, a2_recipe)
    num2 = logistic_irls(a1[:, None], a2, ["A1"])
    raw = {
        "p_a1_given_c": den1.predict_proba(Design.compile(a1_recipe, cols).matrix()),
        "p_a2_given_hist": den2.predict_proba(Design.compile(a2_recipe, cols).matrix()),
        "p_a2_given_a1": num2.predict_proba(a1[:, None]),
    }
    clipped = {k: np.clip(v, PROB_CLIP, 1 - PROB_CLIP) for k, v in raw.items()}
    altered = np.zeros(a1.shape, dtype=bool)
    for k in raw:
        altered |= raw[k] != clipped[k]
    p_a1 = a1.mean()

    def at_observed(p, a):
        return np.where(a == 1, p, 1 - p)

    numer = at_observed(np.full_like(a1, p_a1), a1) * at_observed(clipped["p_a2_given_a1"], a2)
    denom = at_observed(clipped["p_a1_given_c"], a1) * at_observed(clipped["p_a2_given_hist"], a2)
    weights = numer / denom
    frac = float(altered.mean())
    diag = {"clipped_fraction": frac, "weight_mean": float(weights.mean()),
            "weight_max": float(weights.max()), "positivity_violation": frac > 0.01}
    if diag["positivity_violation"]:
        warnings.warn(f"{frac:.2%} of propensities clipped at {PROB_CLIP}", PositivityWarning)
    return weights, diag


def ipw_estimate(data, a1_recipe=DEFAULT_A1_RECIPE, a2_recipe=DEFAULT_A2_RECIPE,
                 return_diagnostics: bool = False):
    """Stabilized IPW fit of the saturated marginal structural model E[Y_a] = b0 + b1 a1 + b2 a2 + b3 a1 a2."""
    cols = as_columns(data)
    weights, diag = ipw_weights(cols, a1_recipe, a2_recipe)
    fit = ols(Design.compile(MSM_TERMS, cols).matrix(), cols["Y"], MSM_TERMS, weights=weights)
    est = _msm_contrasts(fit)
    return (est, diag) if return_diagnostics else est


RWR_STAGE2 = ("center(C1)", "A1", "resid(C2 ~ C1+A1)", "A2", "A1*A2")


def rwr_estimate(data) -> Ate:
    """Regression with residuals: residualize C2 on its history, then one outcome regression."""
    cols = as_columns(data)
    fit = ols(Design.compile(RWR_STAGE2, cols).matrix(), cols["Y"], RWR_STAGE2)
    return _msm_contrasts(fit)


GCOM_STRATUM = ("C1", "C2")
GCOM_THETA_TERMS = ("center(C1)", "A1", "A1*C1", "resid(C2 ~ C1+A1)", "resid(C2 ~ C1+A1)*C1",
                    "A2", "A2*C1", "A1*A2")


def gcom_estimate(data, correct_form: bool = False) -> Ate:
    """Outcome-model g-computation averaged over the full sample.

    ``correct_form=False`` fits one linear model of Y on (C1, C2) per treatment
    arm; ``correct_form=True`` fits a single model with the data-generating
    interaction terms.
    """
    cols = as_columns(data)
    means = {}
    if correct_form:
        design = Design.compile(GCOM_THETA_TERMS, cols)
        fit = ols(design.matrix(), cols["Y"], GCOM_THETA_TERMS)
        for a1, a2 in ARMS:
            means[a1, a2] = float(fit.predict(design.matrix({"A1": a1, "A2": a2})).mean())
        return ate_from_arm_means(means)
    design = Design.compile(GCOM_STRATUM, cols)
    X = design.matrix()
    for a1, a2 in ARMS:
        rows = (cols["A1"] == a1) & (cols["A2"] == a2)
        if not rows.any():
            raise EmptyStratum(f"no units with A1={a1}, A2={a2}")
        fit = ols(X[rows], cols["Y"][rows], GCOM_STRATUM)
        means[a1, a2] = float(fit.predict(X).mean())
    return ate_from_arm_means(means)


ESTIMATORS = {
    "ipw": ipw_estimate,
    "rwr": rwr_estimate,
    "gcom": lambda data: gcom_estimate(data, correct_form=False),
    "gcom_theta": lambda data: gcom_estimate(data, correct_form=True),
}
