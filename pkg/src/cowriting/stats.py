"""Group-comparison statistics.

Random-intercept mixed models are fit by profiled REML over the variance
ratio; inference uses cluster (author-level) bootstrap percentile intervals
and p-values.  Also provides ANOVA ICC(1), Cohen's d on the total SD, and
Cohen's kappa for rater agreement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

_LAMBDA_MAX = 1e7
_TOL = 1e-10


class StatsError(Exception):
    pass


# ---------------------------------------------------------------------------
# Cohen's kappa


@dataclass(frozen=True)
class KappaResult:
    kappa: float
    observed_agreement: float
    expected_agreement: float


def cohens_kappa(ratings_a: Sequence[int], ratings_b: Sequence[int]) -> KappaResult:
    """Cohen's kappa for two binary rating vectors."""
    a = np.asarray(ratings_a)
    b = np.asarray(ratings_b)
    if a.shape != b.shape or a.size == 0:
        raise StatsError("ratings must be equal-length, non-empty vectors")
    n = a.size
    po = float(np.mean(a == b))
    labels = np.union1d(a, b)
    pe = float(
        sum((np.mean(a == v)) * (np.mean(b == v)) for v in labels)
    )
    if pe >= 1.0:
        if po == 1.0:
            return KappaResult(1.0, po, pe)
        raise StatsError("kappa undefined: both raters constant but unequal")
    return KappaResult((po - pe) / (1 - pe), po, pe)


# ---------------------------------------------------------------------------
# ICC


@dataclass(frozen=True)
class IccResult:
    icc: float
    ci: tuple[float, float]
    groups: int
    mean_group_size: float
    clamped: bool = False


def icc(
    values: Sequence[float],
    grouping: Sequence,
    *,
    n_boot: int = 1000,
    level: float = 0.95,
    seed: int = 0,
) -> IccResult:
    """One-way random-effects ANOVA ICC(1) with a group-level bootstrap CI.

    Negative point estimates are clamped to 0 and flagged.
    """
    y = np.asarray(values, dtype=float)
    g = np.asarray(grouping)
    labels = np.unique(g)
    if labels.size < 2:
        raise StatsError("ICC requires at least two groups")
    point, clamped = _icc_point(y, g, labels)
    rng = np.random.default_rng(seed)
    groups = [y[g == lab] for lab in labels]
    boots = []
    for _ in range(n_boot):
        pick = rng.integers(0, len(groups), size=len(groups))
        yy = np.concatenate([groups[i] for i in pick])
        gg = np.concatenate(
            [np.full(groups[i].size, k) for k, i in enumerate(pick)]
        )
        try:
            est, _ = _icc_point(yy, gg, np.unique(gg))
        except StatsError:
            continue
        boots.append(est)
    alpha = 1 - level
    ci = (
        float(np.quantile(boots, alpha / 2)),
        float(np.quantile(boots, 1 - alpha / 2)),
    )
    return IccResult(
        icc=point,
        ci=ci,
        groups=int(labels.size),
        mean_group_size=float(y.size / labels.size),
        clamped=clamped,
    )


def _icc_point(y: np.ndarray, g: np.ndarray, labels: np.ndarray) -> tuple[float, bool]:
    n = y.size
    k = labels.size
    if n <= k:
        raise StatsError("ICC needs replicate observations within groups")
    grand = y.mean()
    ssb = 0.0
    ssw = 0.0
    sizes = []
    for lab in labels:
        yi = y[g == lab]
        sizes.append(yi.size)
        ssb += yi.size * (yi.mean() - grand) ** 2
        ssw += float(np.sum((yi - yi.mean()) ** 2))
    msb = ssb / (k - 1)
    msw = ssw / (n - k)
    sizes_arr = np.asarray(sizes, dtype=float)
    k0 = (n - float(np.sum(sizes_arr**2)) / n) / (k - 1)
    if msw == 0:
        return 1.0, False
    val = (msb - msw) / (msb + (k0 - 1) * msw)
    if val < 0:
        return 0.0, True
    return float(val), False


# ---------------------------------------------------------------------------
# Random-intercept REML


@dataclass
class RegressionFit:
    beta: np.ndarray
    se: np.ndarray
    var_random: float
    var_residual: float
    loglik: float
    names: list[str]
    n_obs: int
    n_groups: int
    converged: bool = True
    boundary: bool = False
    ci: Optional[dict[str, tuple[float, float]]] = None
    p: Optional[dict[str, float]] = None
    d: Optional[dict[str, float]] = None

    @property
    def aic(self) -> float:
        return -2 * self.loglik + 2 * (len(self.beta) + 2)

    @property
    def bic(self) -> float:
        return -2 * self.loglik + math.log(self.n_obs) * (len(self.beta) + 2)


def _group_blocks(groups: Sequence) -> tuple[np.ndarray, list[np.ndarray]]:
    g = np.asarray(groups)
    labels = np.unique(g)
    return labels, [np.flatnonzero(g == lab) for lab in labels]


def _profiled(
    lam: float,
    y: np.ndarray,
    x: np.ndarray,
    blocks: list[np.ndarray],
) -> tuple[float, np.ndarray, float, float]:
    """REML criterion at variance ratio lam plus the GLS solution there.

    Returns (criterion, beta, sigma2, logdet_xtwx).  W = (I + lam ZZ')^-1 is
    applied per group via the rank-one update W_g = I - lam/(1+lam n_g) J.
    """
    n, p = x.shape
    xtwx = np.zeros((p, p))
    xtwy = np.zeros(p)
    ytwy = 0.0
    logdet_v = 0.0
    for idx in blocks:
        xg = x[idx]
        yg = y[idx]
        ng = idx.size
        c = lam / (1 + lam * ng)
        xs = xg.sum(axis=0)
        ys = yg.sum()
        xtwx += xg.T @ xg - c * np.outer(xs, xs)
        xtwy += xg.T @ yg - c * xs * ys
        ytwy += float(yg @ yg) - c * ys * ys
        logdet_v += math.log(1 + lam * ng)
    beta = np.linalg.solve(xtwx, xtwy)
    rss = ytwy - float(beta @ xtwy)
    rss = max(rss, 1e-300)
    sigma2 = rss / (n - p)
    sign, logdet_xtwx = np.linalg.slogdet(xtwx)
    if sign <= 0:
        raise StatsError("X'WX not positive definite (design rank deficient?)")
    crit = (n - p) * math.log(sigma2) + logdet_v + logdet_xtwx
    return crit, beta, sigma2, logdet_xtwx


def fit_random_intercept(
    y: Sequence[float],
    x: np.ndarray,
    groups: Sequence,
    *,
    names: Optional[Sequence[str]] = None,
) -> RegressionFit:
    """REML fit of y = X beta + Z u + eps with one intercept variance.

    The variance ratio lambda = var_random / var_residual is profiled out
    and optimized by bounded scalar search; beta comes from GLS at the
    optimum.  A boundary estimate (var_random = 0) is reported, not raised.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, p = x.shape
    if names is None:
        names = [f"x{i}" for i in range(p)]
    labels, blocks = _group_blocks(groups)
    if n <= p:
        raise StatsError("more parameters than observations")

    def objective(log_lam: float) -> float:
        return _profiled(math.exp(log_lam), y, x, blocks)[0]

    res = minimize_scalar(
        objective,
        bounds=(math.log(1e-12), math.log(_LAMBDA_MAX)),
        method="bounded",
        options={"xatol": _TOL},
    )
    lam = math.exp(res.x)
    crit0, *_ = _profiled(0.0, y, x, blocks)
    boundary = False
    if crit0 <= res.fun:
        lam = 0.0
        boundary = True
    crit, beta, sigma2, _ = _profiled(lam, y, x, blocks)
    # covariance of beta at the optimum
    xtwx = np.zeros((p, p))
    for idx in blocks:
        xg = x[idx]
        ng = idx.size
        c = lam / (1 + lam * ng)
        xs = xg.sum(axis=0)
        xtwx += xg.T @ xg - c * np.outer(xs, xs)
    cov = sigma2 * np.linalg.inv(xtwx)
    loglik = -0.5 * (crit + (n - p) * (math.log(2 * math.pi) + 1))
    return RegressionFit(
        beta=beta,
        se=np.sqrt(np.diag(cov)),
        var_random=lam * sigma2,
        var_residual=sigma2,
        loglik=loglik,
        names=list(names),
        n_obs=n,
        n_groups=int(labels.size),
        converged=bool(res.success),
        boundary=boundary,
    )


def cohens_d(beta: float, var_random: float, var_residual: float) -> float:
    """Effect size on the total-SD scale: beta / sqrt(sum of components)."""
    total = var_random + var_residual
    if total <= 0:
        raise StatsError("total variance is zero")
    return beta / math.sqrt(total)


@dataclass
class BootstrapResult:
    ci: dict[str, tuple[float, float]]
    p: dict[str, float]
    dropped: int
    estimates: np.ndarray  # B x p


def bootstrap_fit(
    y: Sequence[float],
    x: np.ndarray,
    groups: Sequence,
    *,
    b: int = 1000,
    level: float = 0.95,
    seed: int = 0,
    names: Optional[Sequence[str]] = None,
) -> BootstrapResult:
    """Cluster (group-level) bootstrap percentile CIs and sign-based p-values.

    Authors are resampled with their observations; each replicate refits the
    mixed model with a partitioned seeded stream.  Non-convergent replicates
    are dropped and counted; more than 10% drops raises a warning flag via
    the dropped count (caller decides).
    """
    if b < 200:
        raise StatsError("bootstrap needs B >= 200")
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if names is None:
        names = [f"x{i}" for i in range(x.shape[1])]
    labels, blocks = _group_blocks(groups)
    seeds = np.random.SeedSequence(seed).spawn(b)
    est = []
    dropped = 0
    for ss in seeds:
        rng = np.random.default_rng(ss)
        pick = rng.integers(0, len(blocks), size=len(blocks))
        idx = np.concatenate([blocks[i] for i in pick])
        gg = np.concatenate(
            [np.full(blocks[i].size, k) for k, i in enumerate(pick)]
        )
        try:
            fit = fit_random_intercept(y[idx], x[idx], gg, names=names)
        except (StatsError, np.linalg.LinAlgError):
            dropped += 1
            continue
        est.append(fit.beta)
    if not est:
        raise StatsError("all bootstrap replicates failed")
    est_arr = np.vstack(est)
    alpha = 1 - level
    ci = {}
    p = {}
    for j, name in enumerate(names):
        col = est_arr[:, j]
        ci[name] = (
            float(np.quantile(col, alpha / 2)),
            float(np.quantile(col, 1 - alpha / 2)),
        )
        nb = col.size
        left = (np.sum(col <= 0) + 1) / (nb + 1)
        right = (np.sum(col >= 0) + 1) / (nb + 1)
        p[name] = float(min(1.0, 2 * min(left, right)))
    return BootstrapResult(ci=ci, p=p, dropped=dropped, estimates=est_arr)


# ---------------------------------------------------------------------------
# Design-matrix assembly


@dataclass(frozen=True)
class Predictor:
    name: str
    levels: tuple[str, str]  # (reference, contrast)


def design_matrix(
    rows: Sequence[dict],
    predictors: Sequence[Predictor],
    *,
    interactions: bool = False,
) -> tuple[np.ndarray, list[str]]:
    """Encode binary categorical predictors with an intercept column.

    Constant columns (single observed level) are dropped so the design stays
    full rank; the returned names record what survived.
    """
    cols = [np.ones(len(rows))]
    names = ["intercept"]
    encoded = []
    for pred in predictors:
        vals = np.array(
            [1.0 if r[pred.name] == pred.levels[1] else 0.0 for r in rows]
        )
        if np.all(vals == vals[0]):
            continue
        cols.append(vals)
        names.append(f"{pred.name}_{pred.levels[1]}")
        encoded.append((f"{pred.name}_{pred.levels[1]}", vals))
    if interactions:
        for i in range(len(encoded)):
            for j in range(i + 1, len(encoded)):
                ni, vi = encoded[i]
                nj, vj = encoded[j]
                prod = vi * vj
                if np.all(prod == prod[0]):
                    continue
                cols.append(prod)
                names.append(f"{ni}:{nj}")
    return np.column_stack(cols), names
