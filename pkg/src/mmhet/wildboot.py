"""Studentized wild bootstrap for the single-curve fit.

Resamples y*_i = mu_i + resid_i * w_i with mean-zero unit-variance
multipliers, refits under the same working variance shape, and inverts the
percentile-t pivot: with t* = (theta* - theta) / se*, the level (1 - alpha)
interval is

    [ theta - q_{1-alpha/2}(t*) * se,  theta - q_{alpha/2}(t*) * se ].

Replicate b draws its multipliers from an independent stream keyed by
(seed, stream tag, b), so results are identical no matter how replicates
are scheduled; quantiles are the usual linear-interpolation (type 7) ones.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import Dataset, mm_mean
from .exceptions import MMHetError, TooManyFailures
from .single import FitConfig, FitResult, fit_single

# Stream tag separating bootstrap draws from the benchmark generators.
BOOT_STREAM = 3

# Mammen two-point law: values -(sqrt5-1)/2 and (sqrt5+1)/2 with
# probabilities (sqrt5+1)/(2 sqrt5) and (sqrt5-1)/(2 sqrt5); matches the
# first three moments of a standardized residual.
_SQRT5 = np.sqrt(5.0)
MAMMEN_LOW = -(_SQRT5 - 1.0) / 2.0
MAMMEN_HIGH = (_SQRT5 + 1.0) / 2.0
MAMMEN_P_LOW = (_SQRT5 + 1.0) / (2.0 * _SQRT5)

FLAG_FAILURE_FRAC = 0.05
MAX_FAILURE_FRAC = 0.20


@dataclass(frozen=True)
class BootstrapConfig:
    replicates: int = 999
    multiplier: str = "rademacher"
    seed: int = 0
    level: float = 0.95
    threads: int = 1

    def __post_init__(self):
        if self.replicates < 99:
            raise ValueError("need at least 99 bootstrap replicates")
        if self.multiplier not in ("rademacher", "mammen"):
            raise ValueError("multiplier must be 'rademacher' or 'mammen'")
        if not (0.0 < self.level < 1.0):
            raise ValueError("level must lie in (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.threads < 1:
            raise ValueError("threads must be positive")


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    ci_vmax: tuple[float, float]
    ci_km: tuple[float, float]
    t_quantiles: np.ndarray  # rows (vmax, km), columns (lower, upper)
    replicates_used: int
    failures: int
    flagged: bool
    level: float


def draw_multipliers(kind: str, n: int, rng: np.random.Generator) -> np.ndarray:
    """Mean-zero, unit-variance wild multipliers of the requested law."""
    if kind == "rademacher":
        return rng.integers(0, 2, size=n).astype(np.float64) * 2.0 - 1.0
    if kind == "mammen":
        return np.where(rng.random(n) < MAMMEN_P_LOW, MAMMEN_LOW, MAMMEN_HIGH)
    raise ValueError(f"unknown multiplier law {kind!r}")


def _replicate_stream(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, BOOT_STREAM, index)))


def _one_replicate(index, conf, s, mu, resid, spec, theta, fit_conf):
    rng = _replicate_stream(conf.seed, index)
    w = draw_multipliers(conf.multiplier, s.size, rng)
    try:
        refit = fit_single(Dataset(s, mu + resid * w), spec, fit_conf)
    except MMHetError:
        return None
    boot_theta = refit.params.as_array()
    t = np.empty(2)
    for j in range(2):
        diff = boot_theta[j] - theta[j]
        se = refit.se[j]
        if se == 0.0 and diff == 0.0:
            t[j] = 0.0  # degenerate 0/0 pivot guarded to zero
        else:
            t[j] = diff / se
    if not np.all(np.isfinite(t)):
        return None
    return t


def wild_bootstrap_ci(
    data: Dataset, fit: FitResult, conf: BootstrapConfig | None = None
) -> BootstrapResult:
    """Percentile-t wild bootstrap intervals for (vmax, km).

    Failed refits are dropped and counted; more than 5 percent flags the
    result, and more than 20 percent raises TooManyFailures.
    """
    conf = conf if conf is not None else BootstrapConfig()
    if not np.all(np.isfinite(fit.se)):
        raise ValueError("original fit must carry finite standard errors")
    mu = mm_mean(data.s, fit.params)
    resid = data.y - mu
    theta = fit.params.as_array()
    fit_conf = FitConfig(alpha=fit.alpha)

    indices = range(1, conf.replicates + 1)
    if conf.threads > 1:
        with ThreadPoolExecutor(max_workers=conf.threads) as pool:
            outcomes = list(
                pool.map(
                    lambda b: _one_replicate(
                        b, conf, data.s, mu, resid, fit.variance_spec, theta, fit_conf
                    ),
                    indices,
                )
            )
    else:
        outcomes = [
            _one_replicate(
                b, conf, data.s, mu, resid, fit.variance_spec, theta, fit_conf
            )
            for b in indices
        ]

    pivots = np.array([t for t in outcomes if t is not None])
    failures = conf.replicates - len(pivots)
    failure_frac = failures / conf.replicates
    if failure_frac > MAX_FAILURE_FRAC:
        raise TooManyFailures(
            f"{failures} of {conf.replicates} bootstrap refits failed"
        )

    alpha = 1.0 - conf.level
    q = np.quantile(
        pivots, [alpha / 2.0, 1.0 - alpha / 2.0], axis=0, method="linear"
    )  # shape (2 quantiles, 2 params)
    t_quantiles = q.T.copy()
    ci = [
        (theta[j] - t_quantiles[j, 1] * fit.se[j], theta[j] - t_quantiles[j, 0] * fit.se[j])
        for j in range(2)
    ]
    return BootstrapResult(
        ci_vmax=ci[0],
        ci_km=ci[1],
        t_quantiles=t_quantiles,
        replicates_used=int(len(pivots)),
        failures=int(failures),
        flagged=bool(failure_frac > FLAG_FAILURE_FRAC),
        level=conf.level,
    )
