"""Single-curve heteroscedastic Michaelis-Menten estimation.

For a fixed working variance shape h, the dispersion-free estimating
equations for (vmax, km) collapse to one scalar equation in k.  With the
shorthand w_i = s_i / ((k + s_i) h_i), the profile equation is

    F_h(k) = [sum w_i y_i] * [sum w_i s_i / (k + s_i)^2]
           - [sum w_i y_i / (k + s_i)] * [sum w_i s_i / (k + s_i)],

whose root is the half-saturation estimate.  The maximal velocity follows
by the plug-in ratio

    vmax(k) = [sum w_i y_i] / [sum w_i s_i / (k + s_i)],

the dispersion is gamma = mean(resid^2 / h), and plug-in Wald inference
uses (gamma / n) * Minv with M = mean over i of g_i g_i^T / h_i.  These
mean equations coincide with Gaussian weighted nonlinear least squares
with weights 1/h_i, which is what the test-suite oracles exploit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import norm

from .core import (
    DEFAULT_CANDIDATES,
    Dataset,
    MMParams,
    VarianceSpec,
    eval_h,
    mm_gradient,
    mm_mean,
)
from .exceptions import (
    AllCandidatesFailed,
    DegenerateDesign,
    MMHetError,
    NonconvergedFit,
    SingularInformation,
)
from .rootfind import SearchConfig, SolverDiagnostics, solve_scalar

# Condition-number cutoff above which the information matrix is treated
# as singular.
COND_LIMIT = 1e12

# Parameter count charged by the information criteria: vmax, km, gamma.
N_PARAMS = 3


@dataclass(frozen=True)
class FitConfig:
    alpha: float = 0.05
    search: SearchConfig = SearchConfig()

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class FitResult:
    params: MMParams
    gamma: float
    cov: np.ndarray
    se: np.ndarray
    ci_vmax: tuple[float, float]
    ci_km: tuple[float, float]
    loglik: float
    aic: float
    bic: float
    variance_spec: VarianceSpec
    solver: SolverDiagnostics
    alpha: float


def _profile_terms(ks, s, y, h):
    """Evaluate the two product terms of F_h on an array of k values.

    Returns (F, scale) where scale is the larger product-term magnitude,
    the natural yardstick for a relative |F| tolerance.
    """
    kk = np.atleast_1d(np.asarray(ks, dtype=np.float64))[:, None]
    d = kk + s
    w = s / (d * h)
    wd = w / d
    s1 = (w * y).sum(axis=1)
    s4 = (w * s / d).sum(axis=1)
    s2 = (wd * y).sum(axis=1)
    s3 = (wd * s / d).sum(axis=1)
    t1 = s1 * s3
    t2 = s2 * s4
    return t1 - t2, np.maximum(np.abs(t1), np.abs(t2))


def profile_F(k: float, data: Dataset, spec: VarianceSpec) -> float:
    """The scalar profile equation at k (root = half-saturation estimate)."""
    if not (np.isfinite(k) and k > 0):
        raise ValueError("k must be positive and finite")
    h = eval_h(spec, data.s)
    value, _ = _profile_terms(k, data.s, data.y, h)
    return float(value[0])


def _vmax_plugin_arrays(km: float, s, y, h) -> float:
    d = km + s
    w = s / (d * h)
    num = float((w * y).sum())
    den = float((w * s / d).sum())
    if not np.isfinite(den) or den <= 0:
        raise DegenerateDesign(
            f"vmax plug-in denominator is {den!r}; design cannot identify vmax"
        )
    return num / den


def vmax_plugin(km: float, data: Dataset, spec: VarianceSpec) -> float:
    """Closed-form maximal velocity given the half-saturation constant."""
    if not (np.isfinite(km) and km > 0):
        raise ValueError("km must be positive and finite")
    h = eval_h(spec, data.s)
    return _vmax_plugin_arrays(km, data.s, data.y, h)


def _require_identifiable(data: Dataset) -> None:
    if data.n < 3 or data.distinct_levels() < 3:
        raise DegenerateDesign(
            "need at least 3 observations over 3 distinct substrate levels"
        )


def solve_km(
    data: Dataset, spec: VarianceSpec, search: SearchConfig | None = None
) -> tuple[float, SolverDiagnostics]:
    """Root of the profile equation, with bracket/fallback diagnostics."""
    _require_identifiable(data)
    cfg = search if search is not None else SearchConfig()
    h = eval_h(spec, data.s)
    s, y = data.s, data.y
    k_lo, k_hi = cfg.resolve_bracket(s)

    def eval_grid(ks):
        return _profile_terms(ks, s, y, h)

    def eval_one(k):
        value, scale = _profile_terms(k, s, y, h)
        return float(value[0]), float(scale[0])

    return solve_scalar(eval_grid, eval_one, k_lo, k_hi, cfg)


def gamma_hat(data: Dataset, params: MMParams, spec: VarianceSpec) -> float:
    """Dispersion estimate: mean of squared residuals over h."""
    h = eval_h(spec, data.s)
    r = data.y - mm_mean(data.s, params)
    return float(np.mean(r * r / h))


def plugin_covariance(
    data: Dataset, params: MMParams, gamma: float, spec: VarianceSpec
) -> np.ndarray:
    """(gamma / n) * Minv with M = mean of g g^T / h over observations."""
    if not np.isfinite(gamma) or gamma < 0:
        raise ValueError("gamma must be finite and nonnegative")
    g = mm_gradient(data.s, params)
    h = eval_h(spec, data.s)
    m = (g.T @ (g / h[:, None])) / data.n
    if not np.all(np.isfinite(m)) or np.linalg.cond(m) > COND_LIMIT:
        raise SingularInformation(
            f"information matrix condition exceeds {COND_LIMIT:g}"
        )
    cov = (gamma / data.n) * np.linalg.inv(m)
    return (cov + cov.T) / 2.0


def information_criteria(
    data: Dataset, params: MMParams, gamma: float, spec: VarianceSpec
) -> tuple[float, float, float]:
    """Gaussian log-likelihood with variance gamma*h, and AIC/BIC at p = 3."""
    h = eval_h(spec, data.s)
    r = data.y - mm_mean(data.s, params)
    n = data.n
    if gamma == 0.0:
        if np.any(r != 0.0):
            # Impossible by construction: gamma is the mean of r^2/h.
            raise MMHetError("internal: zero dispersion with nonzero residuals")
        loglik = np.inf
    else:
        loglik = -0.5 * float(
            np.sum(np.log(2.0 * np.pi * gamma * h) + r * r / (gamma * h))
        )
    aic = -2.0 * loglik + 2.0 * N_PARAMS
    bic = -2.0 * loglik + N_PARAMS * np.log(n)
    return float(loglik), float(aic), float(bic)


def fit_single(
    data: Dataset, spec: VarianceSpec, conf: FitConfig | None = None
) -> FitResult:
    """Full single-curve fit under one working variance shape.

    Raises NonconvergedFit (carrying the partial result and diagnostics)
    when the scalar solve had to fall back without reaching a root.
    """
    conf = conf if conf is not None else FitConfig()
    km, diag = solve_km(data, spec, conf.search)
    h = eval_h(spec, data.s)
    vmax = _vmax_plugin_arrays(km, data.s, data.y, h)
    if not np.isfinite(vmax) or vmax <= 0:
        raise DegenerateDesign(
            f"plug-in vmax = {vmax!r}; data are not consistent with a "
            "saturating curve"
        )
    params = MMParams(vmax, km)
    gamma = gamma_hat(data, params, spec)
    cov = plugin_covariance(data, params, gamma, spec)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    z = float(norm.ppf(1.0 - conf.alpha / 2.0))
    ci_vmax = (vmax - z * se[0], vmax + z * se[0])
    ci_km = (km - z * se[1], km + z * se[1])
    loglik, aic, bic = information_criteria(data, params, gamma, spec)
    result = FitResult(
        params=params,
        gamma=gamma,
        cov=cov,
        se=se,
        ci_vmax=ci_vmax,
        ci_km=ci_km,
        loglik=loglik,
        aic=aic,
        bic=bic,
        variance_spec=spec,
        solver=diag,
        alpha=conf.alpha,
    )
    if not diag.converged:
        raise NonconvergedFit(
            "profile equation has no root in the bracket and the fallback "
            f"minimum leaves |F| = {abs(diag.f_at_solution):.3e}",
            result=result,
            diagnostics=diag,
        )
    return result


@dataclass(frozen=True, eq=False)
class ScreenEntry:
    """One candidate's outcome within a screening run."""

    spec: VarianceSpec
    result: FitResult | None
    error: str | None
    rank: int | None


def screen_models(
    data: Dataset,
    candidates: Sequence[VarianceSpec] = DEFAULT_CANDIDATES,
    conf: FitConfig | None = None,
) -> list[ScreenEntry]:
    """Fit every candidate shape and rank by AIC (ties: BIC, then order).

    Failed candidates are reported with their error at the end of the list
    rather than dropped.  Raises AllCandidatesFailed when nothing fits.
    """
    if not candidates:
        raise ValueError("need at least one candidate variance spec")
    fitted: list[tuple[int, VarianceSpec, FitResult]] = []
    failed: list[tuple[int, VarianceSpec, FitResult | None, str]] = []
    for i, spec in enumerate(candidates):
        try:
            fitted.append((i, spec, fit_single(data, spec, conf)))
        except NonconvergedFit as err:
            failed.append((i, spec, err.result, str(err)))
        except MMHetError as err:
            failed.append((i, spec, None, str(err)))
    if not fitted:
        raise AllCandidatesFailed(
            "; ".join(f"{spec.label()}: {msg}" for _, spec, _, msg in failed)
        )
    fitted.sort(key=lambda item: (item[2].aic, item[2].bic, item[0]))
    entries = [
        ScreenEntry(spec=spec, result=res, error=None, rank=rank)
        for rank, (_, spec, res) in enumerate(fitted, start=1)
    ]
    entries.extend(
        ScreenEntry(spec=spec, result=res, error=msg, rank=None)
        for _, spec, res, msg in failed
    )
    return entries


@dataclass(frozen=True, eq=False)
class PanelSpecSummary:
    """Cross-label aggregate for one candidate shape."""

    spec: VarianceSpec
    mean_aic: float
    mean_bic: float
    mean_vmax: float
    mean_km: float
    labels_used: int
    wins: int


@dataclass(frozen=True, eq=False)
class GroupFitResult:
    per_label: dict[str, list[ScreenEntry]]
    label_errors: dict[str, str]
    best_by_label: dict[str, str]
    summary: tuple[PanelSpecSummary, ...]


def group_fit(
    panel: Mapping[str, Dataset],
    candidates: Sequence[VarianceSpec] = DEFAULT_CANDIDATES,
    conf: FitConfig | None = None,
) -> GroupFitResult:
    """Screen every labeled curve independently and aggregate across labels.

    A label whose screening fails entirely is isolated into label_errors;
    the others are unaffected.  The summary averages AIC/BIC and point
    estimates per candidate over the labels where that candidate fit.
    """
    if not panel:
        raise ValueError("panel must contain at least one labeled dataset")
    per_label: dict[str, list[ScreenEntry]] = {}
    label_errors: dict[str, str] = {}
    for label, dataset in panel.items():
        try:
            per_label[label] = screen_models(dataset, candidates, conf)
        except MMHetError as err:
            label_errors[label] = str(err)
            per_label[label] = []
    best_by_label = {
        label: entries[0].spec.label()
        for label, entries in per_label.items()
        if entries and entries[0].rank == 1
    }
    summary: list[PanelSpecSummary] = []
    for spec in candidates:
        key = spec.label()
        rows = [
            e
            for entries in per_label.values()
            for e in entries
            if e.spec.label() == key and e.error is None and e.result is not None
        ]
        if not rows:
            continue
        summary.append(
            PanelSpecSummary(
                spec=spec,
                mean_aic=float(np.mean([e.result.aic for e in rows])),
                mean_bic=float(np.mean([e.result.bic for e in rows])),
                mean_vmax=float(np.mean([e.result.params.vmax for e in rows])),
                mean_km=float(np.mean([e.result.params.km for e in rows])),
                labels_used=len(rows),
                wins=sum(1 for e in rows if e.rank == 1),
            )
        )
    summary.sort(key=lambda row: (row.mean_aic, row.mean_bic))
    return GroupFitResult(
        per_label=per_label,
        label_errors=label_errors,
        best_by_label=best_by_label,
        summary=tuple(summary),
    )
