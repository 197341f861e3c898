"""Statistical attribution of performance effects.

Implements the regression protocol used to decide which dataset
characteristic drives classification performance: standardize all
variables, drop collinear predictors by variance inflation factor,
fit a robust (Huber) linear model with coefficient t-tests, and check
goodness of fit with a two-sample Kolmogorov-Smirnov test between the
fitted and observed response distributions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special, stats

from .errors import SingularFitError, ValidationError

HUBER_C = 1.345  # 95% Gaussian efficiency
IRLS_TOL = 1e-8
IRLS_MAX_ITER = 100


@dataclass
class DesignMatrix:
    """Named predictor columns and a response, one row per run."""

    predictors: list[str]
    x: np.ndarray
    y: np.ndarray
    response: str = "relaxed_f1"

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.x.ndim != 2 or self.x.shape[1] != len(self.predictors):
            raise ValidationError("x must be (rows, len(predictors))")
        if self.y.shape != (self.x.shape[0],):
            raise ValidationError("y must have one entry per row")
        if not np.isfinite(self.x).all() or not np.isfinite(self.y).all():
            raise ValidationError("design matrix contains missing or non-finite values")

    def drop(self, name: str) -> "DesignMatrix":
        j = self.predictors.index(name)
        keep = [i for i in range(len(self.predictors)) if i != j]
        return DesignMatrix([self.predictors[i] for i in keep], self.x[:, keep],
                            self.y, self.response)


def standardize(m: DesignMatrix) -> DesignMatrix:
    """Scale every predictor and the response to mean 0, population std 1."""
    x = m.x.copy()
    for j, name in enumerate(m.predictors):
        std = x[:, j].std()
        if std == 0.0:
            raise ValidationError(f"column {name!r} has zero variance")
        x[:, j] = (x[:, j] - x[:, j].mean()) / std
    y_std = m.y.std()
    if y_std == 0.0:
        raise ValidationError(f"response {m.response!r} has zero variance")
    y = (m.y - m.y.mean()) / y_std
    return DesignMatrix(list(m.predictors), x, y, m.response)


def _r_squared(target: np.ndarray, others: np.ndarray) -> float:
    design = np.column_stack([np.ones(len(target)), others])
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ coef
    ss_tot = ((target - target.mean()) ** 2).sum()
    if ss_tot == 0.0:
        return 1.0
    return 1.0 - (resid ** 2).sum() / ss_tot


def variance_inflation(m: DesignMatrix) -> np.ndarray:
    """VIF_j = 1 / (1 - R^2) of regressing predictor j on the others."""
    p = len(m.predictors)
    if p < 2:
        raise ValidationError("VIF needs at least two predictors")
    out = np.empty(p)
    for j in range(p):
        others = np.delete(m.x, j, axis=1)
        r2 = min(_r_squared(m.x[:, j], others), 1.0)
        out[j] = np.inf if r2 >= 1.0 else 1.0 / (1.0 - r2)
    return out


def vif_prune(m: DesignMatrix, threshold: float = 10.0,
              ) -> tuple[DesignMatrix, list[tuple[str, float]]]:
    """Iteratively drop the highest-VIF predictor above the threshold."""
    dropped: list[tuple[str, float]] = []
    while len(m.predictors) >= 2:
        vifs = variance_inflation(m)
        worst = int(np.argmax(vifs))
        if vifs[worst] <= threshold:
            break
        dropped.append((m.predictors[worst], float(vifs[worst])))
        m = m.drop(m.predictors[worst])
    return m, dropped


@dataclass
class RegressionResult:
    """Robust-fit coefficients with confidence intervals and p-values."""

    terms: list[str]
    coef: np.ndarray
    se: np.ndarray
    t_values: np.ndarray
    p_values: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    n_obs: int
    dropped: list[tuple[str, float]] = field(default_factory=list)
    ks_stat: Optional[float] = None
    ks_p: Optional[float] = None

    def term(self, name: str) -> dict:
        i = self.terms.index(name)
        return {"coef": float(self.coef[i]), "se": float(self.se[i]),
                "t": float(self.t_values[i]), "p": float(self.p_values[i]),
                "ci": (float(self.ci_lo[i]), float(self.ci_hi[i]))}


def robust_fit(m: DesignMatrix, huber_c: float = HUBER_C, tol: float = IRLS_TOL,
               max_iter: int = IRLS_MAX_ITER, ci_level: float = 0.95) -> RegressionResult:
    """Huber-weighted iteratively reweighted least squares with t-tests.

    Residual scale is the median absolute residual / 0.6745; standard
    errors come from the final weighted fit.  Noise-free linear data
    reproduces the ordinary least-squares solution exactly (all weights
    stay 1).
    """
    n, p = m.x.shape
    if n <= p + 1:
        raise ValidationError(f"{n} rows are too few for {p} predictors")
    design = np.column_stack([np.ones(n), m.x])
    k = design.shape[1]

    def weighted_solve(w):
        xtw = design.T * w
        try:
            return np.linalg.solve(xtw @ design, xtw @ m.y), xtw
        except np.linalg.LinAlgError as exc:
            raise SingularFitError(f"weighted normal equations are singular: {exc}") from None

    weights = np.ones(n)
    beta, _ = weighted_solve(weights)
    for _ in range(max_iter):
        resid = m.y - design @ beta
        scale = np.median(np.abs(resid)) / 0.6745
        if scale < 1e-12:
            weights = np.ones(n)
            break
        u = np.abs(resid / scale)
        weights = np.where(u <= huber_c, 1.0, huber_c / u)
        new_beta, _ = weighted_solve(weights)
        if np.max(np.abs(new_beta - beta)) < tol:
            beta = new_beta
            break
        beta = new_beta

    resid = m.y - design @ beta
    df = n - k
    s2 = float((weights * resid ** 2).sum() / df)
    xtwx = (design.T * weights) @ design
    try:
        cov = s2 * np.linalg.inv(xtwx)
    except np.linalg.LinAlgError as exc:
        raise SingularFitError(f"singular covariance: {exc}") from None
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_vals = np.where(se > 0, beta / se, np.inf * np.sign(beta))
    p_vals = 2.0 * stats.t.sf(np.abs(t_vals), df)
    crit = stats.t.ppf(0.5 + ci_level / 2.0, df)
    return RegressionResult(terms=["intercept"] + list(m.predictors), coef=beta, se=se,
                            t_values=t_vals, p_values=p_vals,
                            ci_lo=beta - crit * se, ci_hi=beta + crit * se, n_obs=n)


def ks_gof(fitted: Sequence[float], observed: Sequence[float]) -> tuple[float, float]:
    """Two-sample KS statistic and asymptotic p-value.

    p comes from the Kolmogorov distribution evaluated at
    sqrt(n*m/(n+m)) * stat.
    """
    a = np.sort(np.asarray(list(fitted), dtype=np.float64))
    b = np.sort(np.asarray(list(observed), dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValidationError("KS test needs non-empty samples")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    stat = float(np.abs(fa - fb).max())
    effective = a.size * b.size / (a.size + b.size)
    p = float(special.kolmogorov(np.sqrt(effective) * stat))
    return stat, min(1.0, p)


def attribute_performance(m: DesignMatrix, vif_threshold: float = 10.0,
                          huber_c: float = HUBER_C) -> RegressionResult:
    """Full protocol: standardize, VIF-prune, robust fit, KS goodness of fit."""
    std = standardize(m)
    pruned, dropped = vif_prune(std, threshold=vif_threshold)
    result = robust_fit(pruned, huber_c=huber_c)
    design = np.column_stack([np.ones(len(pruned.y)), pruned.x])
    fitted = design @ result.coef
    result.dropped = dropped
    result.ks_stat, result.ks_p = ks_gof(fitted, pruned.y)
    return result


def write_regression_csv(result: RegressionResult, path) -> None:
    """Report in the term,coef,ci_lo,ci_hi,p layout with a KS footer row."""
    with open(path, "w", newline="") as fh:
        fh.write("# alertlab-regression v1\n")
        for name, vif in result.dropped:
            fh.write(f"# dropped: {name} (vif={vif!r})\n")
        writer = csv.writer(fh)
        writer.writerow(["term", "coef", "ci_lo", "ci_hi", "p"])
        for i, term in enumerate(result.terms):
            writer.writerow([term, repr(float(result.coef[i])), repr(float(result.ci_lo[i])),
                             repr(float(result.ci_hi[i])), repr(float(result.p_values[i]))])
        writer.writerow(["ks_stat", "ks_p", "n_obs"])
        writer.writerow([repr(result.ks_stat) if result.ks_stat is not None else "",
                         repr(result.ks_p) if result.ks_p is not None else "",
                         result.n_obs])
