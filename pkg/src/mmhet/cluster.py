"""Clustered working-covariance estimation.

Each cluster gets a rank-one random shift on the maximal velocity, so its
working covariance is

    V_i = tau2 * z_i z_i^T + gamma * diag(h_i),   z_ij = s_ij / (km + s_ij).

All solves against V_i go through the rank-one downdate

    Vinv = Ginv - (tau2 / (1 + tau2 * z'Ginv z)) (Ginv z)(Ginv z)',

with G = gamma * diag(h), so nothing ever materializes a dense inverse.
Fixed effects solve the stacked GLS score sum_i D_i' Vinv_i (y_i - mu_i),
profiled to one scalar equation in km exactly like the single-curve case;
tau2 and gamma come from moment matching on within-cluster residual
products, and the two blocks are alternated to a fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .core import (
    ClusteredDataset,
    Dataset,
    MMParams,
    VarianceSpec,
    eval_h,
    mm_gradient,
    mm_mean,
)
from .exceptions import (
    DegenerateDesign,
    InsufficientReplication,
    NonconvergedFit,
    NonPositiveGamma,
    SingularInformation,
)
from .rootfind import SearchConfig, SolverDiagnostics, solve_scalar
from .single import COND_LIMIT, FitConfig, fit_single

# Relative floor for the moment-matched gamma, scaled by the pooled
# response variance.
GAMMA_FLOOR_REL = 1e-12


@dataclass(frozen=True)
class ClusterConfig:
    alpha: float = 0.05
    search: SearchConfig = SearchConfig()
    max_iter: int = 200
    rel_tol: float = 1e-8
    damping: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if not (0.0 < self.damping <= 1.0):
            raise ValueError("damping must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class ClusterFitResult:
    params: MMParams
    tau2: float
    gamma: float
    cov: np.ndarray
    se: np.ndarray
    ci_vmax: tuple[float, float]
    ci_km: tuple[float, float]
    iterations: int
    converged: bool
    boundary_tau2: bool
    variance_spec: VarianceSpec
    alpha: float


def cluster_design(
    cluster: Dataset, params: MMParams, spec: VarianceSpec
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Random-effect loading z, mean Jacobian D, and h values for one cluster."""
    z = cluster.s / (params.km + cluster.s)
    d = mm_gradient(cluster.s, params)
    h = eval_h(spec, cluster.s)
    return z, d, h


def solve_working_cov(z, h, tau2: float, gamma: float, rhs):
    """Solve V x = rhs with V = tau2 z z^T + gamma diag(h).

    ``rhs`` may be a vector or a matrix of stacked right-hand sides.  Cost
    is linear in the cluster size via the rank-one downdate.
    """
    z = np.asarray(z, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    if not np.isfinite(gamma) or gamma <= 0.0:
        raise NonPositiveGamma(f"gamma must be positive, got {gamma!r}")
    if not np.isfinite(tau2) or tau2 < 0.0:
        raise ValueError(f"tau2 must be finite and nonnegative, got {tau2!r}")
    ginv = 1.0 / (gamma * h)
    w = z * ginv
    a2 = float(z @ w)
    c = tau2 / (1.0 + tau2 * a2)
    if rhs.ndim == 1:
        return rhs * ginv - c * w * float(w @ rhs)
    return rhs * ginv[:, None] - c * np.outer(w, w @ rhs)


def _stack(data: ClusteredDataset, spec: VarianceSpec):
    s = np.concatenate([c.s for c in data.clusters])
    y = np.concatenate([c.y for c in data.clusters])
    h = eval_h(spec, s)
    sizes = np.array([c.n for c in data.clusters])
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.intp)
    return s, y, h, starts


def _cluster_score_terms(ks, s, y, h, starts, tau2, gamma):
    """Stacked-score km component over an array of trial k values.

    For each k the loading z(k) = s/(k+s) doubles as the vmax regressor, the
    GLS plug-in vmax(k) is the ratio of weighted projections, and the score
    is assembled from per-cluster rank-one pieces.  Returns (score, scale,
    vhat) with scale the sum of absolute score contributions, used for the
    relative tolerance.
    """
    kk = np.atleast_1d(np.asarray(ks, dtype=np.float64))[:, None]
    d = kk + s
    z = s / d
    ginv = 1.0 / (gamma * h)
    uz = z * ginv
    a1 = np.add.reduceat(uz * y, starts, axis=1)
    a2 = np.add.reduceat(uz * z, starts, axis=1)
    c = tau2 / (1.0 + tau2 * a2)
    t = 1.0 - c * a2  # equals 1 / (1 + tau2 * z'Ginv z)
    den = (a2 * t).sum(axis=1)
    num = (a1 * t).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        vhat = num / den
    e = z / d  # s / (k+s)^2, the km sensitivity direction divided by -vhat
    q1 = np.add.reduceat(e * ginv * y, starts, axis=1)
    q2 = np.add.reduceat(e * ginv * z, starts, axis=1)
    vh = vhat[:, None]
    inner = (q1 - vh * q2) - c * q2 * (a1 - vh * a2)
    score = -vhat * inner.sum(axis=1)
    scale = np.abs(vhat) * (
        np.abs(q1) + np.abs(vh) * q2 + c * q2 * (np.abs(a1) + np.abs(vh) * a2)
    ).sum(axis=1)
    return score, scale, vhat


def gls_km_profile(
    data: ClusteredDataset,
    spec: VarianceSpec,
    tau2: float,
    gamma: float,
    search: SearchConfig | None = None,
) -> tuple[float, float, SolverDiagnostics]:
    """Solve the km component of the stacked GLS score at fixed (tau2, gamma).

    Uses the same log-grid bracket plus Brent/golden machinery as the
    single-curve solve.  Returns (km, vmax, diagnostics).
    """
    if not np.isfinite(gamma) or gamma <= 0.0:
        raise NonPositiveGamma(f"gamma must be positive, got {gamma!r}")
    cfg = search if search is not None else SearchConfig()
    s, y, h, starts = _stack(data, spec)
    if np.unique(s).size < 3:
        raise DegenerateDesign(
            "need at least 3 distinct substrate levels across clusters"
        )
    k_lo, k_hi = cfg.resolve_bracket(s)

    def eval_grid(ks):
        score, scale, _ = _cluster_score_terms(ks, s, y, h, starts, tau2, gamma)
        return score, scale

    def eval_one(k):
        score, scale, _ = _cluster_score_terms(k, s, y, h, starts, tau2, gamma)
        return float(score[0]), float(scale[0])

    km, diag = solve_scalar(eval_grid, eval_one, k_lo, k_hi, cfg)
    _, _, vhat = _cluster_score_terms(km, s, y, h, starts, tau2, gamma)
    return km, float(vhat[0]), diag


def _moment_update(
    data: ClusteredDataset,
    params: MMParams,
    spec: VarianceSpec,
    gamma_floor: float,
) -> tuple[float, float, bool]:
    """Moment-matched (tau2, gamma) at the current mean parameters.

    tau2 solves the off-diagonal residual-product moments; gamma then
    matches the diagonal.  Returns (tau2, gamma, truncated) with truncated
    marking a negative raw tau2 clipped to zero.
    """
    if not any(c.n >= 2 for c in data.clusters):
        raise InsufficientReplication(
            "no cluster has two or more observations; tau2 is not estimable"
        )
    num = 0.0
    den = 0.0
    diag_sum = 0.0
    n_total = 0
    pieces = []
    for cluster in data.clusters:
        r = cluster.y - mm_mean(cluster.s, params)
        z = cluster.s / (params.km + cluster.s)
        h = eval_h(spec, cluster.s)
        rz = r * z
        zz = z * z
        num += (float(rz.sum()) ** 2 - float((rz * rz).sum())) / 2.0
        den += (float(zz.sum()) ** 2 - float((zz * zz).sum())) / 2.0
        pieces.append((r, zz, h))
        n_total += cluster.n
    if den <= 0.0:
        raise InsufficientReplication(
            "off-diagonal moment denominator vanished (no usable pairs)"
        )
    raw = num / den
    truncated = raw < 0.0
    tau2 = max(0.0, raw)
    for r, zz, h in pieces:
        diag_sum += float(((r * r - tau2 * zz) / h).sum())
    gamma = max(gamma_floor, diag_sum / n_total)
    return tau2, gamma, truncated


def moment_update_variance(
    data: ClusteredDataset, params: MMParams, spec: VarianceSpec
) -> tuple[float, float]:
    """Public moment update; the gamma floor is tied to the pooled variance."""
    floor = GAMMA_FLOOR_REL * float(np.var(data.pooled().y))
    tau2, gamma, _ = _moment_update(data, params, spec, floor)
    return tau2, gamma


def cluster_covariance(
    data: ClusteredDataset,
    params: MMParams,
    tau2: float,
    gamma: float,
    spec: VarianceSpec,
) -> np.ndarray:
    """Plug-in covariance: inverse of sum_i D_i' Vinv_i D_i."""
    info = np.zeros((2, 2))
    for cluster in data.clusters:
        z, d, h = cluster_design(cluster, params, spec)
        info += d.T @ solve_working_cov(z, h, tau2, gamma, d)
    if not np.all(np.isfinite(info)) or np.linalg.cond(info) > COND_LIMIT:
        raise SingularInformation(
            f"clustered information condition exceeds {COND_LIMIT:g}"
        )
    cov = np.linalg.inv(info)
    return (cov + cov.T) / 2.0


def _neg2_working_loglik(
    data: ClusteredDataset,
    params: MMParams,
    tau2: float,
    gamma: float,
    spec: VarianceSpec,
) -> float:
    """Gaussian working -2 log-likelihood up to an additive constant."""
    total = 0.0
    for cluster in data.clusters:
        r = cluster.y - mm_mean(cluster.s, params)
        z = cluster.s / (params.km + cluster.s)
        h = eval_h(spec, cluster.s)
        quad = float(r @ solve_working_cov(z, h, tau2, gamma, r))
        logdet = (
            cluster.n * np.log(gamma)
            + float(np.log(h).sum())
            + np.log1p(tau2 * float((z * z / (gamma * h)).sum()))
        )
        total += quad + logdet
    return total


def _rel_change(old: float, new: float) -> float:
    scale = max(abs(old), abs(new))
    if scale == 0.0:
        return 0.0
    return abs(new - old) / scale


def fit_clustered(
    data: ClusteredDataset, spec: VarianceSpec, conf: ClusterConfig | None = None
) -> ClusterFitResult:
    """Alternate the GLS profile and the moment update to a fixed point.

    Initialization pools all clusters through the single-curve fit under the
    same working shape.  Nonconvergence within max_iter returns the last
    iterate flagged converged=False rather than raising.
    """
    conf = conf if conf is not None else ClusterConfig()
    pooled = data.pooled()
    try:
        init = fit_single(pooled, spec, FitConfig(alpha=conf.alpha, search=conf.search))
        params = init.params
    except NonconvergedFit as err:
        if err.result is None:
            raise
        params = err.result.params
    gamma_floor = GAMMA_FLOOR_REL * float(np.var(pooled.y))
    tau2, gamma, truncated = _moment_update(data, params, spec, gamma_floor)

    converged = False
    iterations = 0
    diag: SolverDiagnostics | None = None
    for iterations in range(1, conf.max_iter + 1):
        km, vmax, diag = gls_km_profile(data, spec, tau2, gamma, conf.search)
        if not np.isfinite(vmax) or vmax <= 0:
            raise DegenerateDesign(
                f"GLS plug-in vmax = {vmax!r}; data are not consistent with "
                "a saturating curve"
            )
        new_params = MMParams(vmax, km)
        new_tau2, new_gamma, truncated = _moment_update(
            data, new_params, spec, gamma_floor
        )
        if _neg2_working_loglik(
            data, new_params, new_tau2, new_gamma, spec
        ) > _neg2_working_loglik(data, new_params, tau2, gamma, spec):
            new_tau2 = tau2 + conf.damping * (new_tau2 - tau2)
            new_gamma = gamma + conf.damping * (new_gamma - gamma)
        change = max(
            _rel_change(params.vmax, new_params.vmax),
            _rel_change(params.km, new_params.km),
            _rel_change(tau2, new_tau2),
            _rel_change(gamma, new_gamma),
        )
        params, tau2, gamma = new_params, new_tau2, new_gamma
        if change < conf.rel_tol:
            converged = True
            break

    cov = cluster_covariance(data, params, tau2, gamma, spec)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    z = float(norm.ppf(1.0 - conf.alpha / 2.0))
    return ClusterFitResult(
        params=params,
        tau2=tau2,
        gamma=gamma,
        cov=cov,
        se=se,
        ci_vmax=(params.vmax - z * se[0], params.vmax + z * se[0]),
        ci_km=(params.km - z * se[1], params.km + z * se[1]),
        iterations=iterations,
        converged=bool(converged and (diag is None or diag.converged)),
        boundary_tau2=truncated,
        variance_spec=spec,
        alpha=conf.alpha,
    )
