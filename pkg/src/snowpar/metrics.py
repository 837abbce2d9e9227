"""Evaluation statistics, a paired signed-rank test, and accumulated local
effects for model interpretation.

Degenerate inputs yield None for the affected statistic instead of raising:
a zero-variance observation window has no defined NSE, a window with no
positive depths has no defined skill-to-pack ratio, and so on.  Callers
decide how to present missing values.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

DAY_SECONDS = 86400.0


@dataclass
class MetricReport:
    n: int
    rmse: float | None
    mae: float | None
    bias: float | None       # mean(model - data)
    mpe: float | None        # median |error| / |observed|, a fraction
    nse: float | None
    spe: float | None        # MAE / mean positive observation, a fraction
    pearson_r: float | None


def compute_metrics(obs, pred) -> MetricReport:
    obs = np.asarray(obs, np.float64).ravel()
    pred = np.asarray(pred, np.float64).ravel()
    if obs.shape != pred.shape:
        raise DataError("obs and pred must have the same length")
    ok = np.isfinite(obs) & np.isfinite(pred)
    obs, pred = obs[ok], pred[ok]
    n = obs.size
    if n == 0:
        return MetricReport(0, None, None, None, None, None, None, None)
    err = pred - obs
    rmse = float(np.sqrt(np.mean(err ** 2)))
    mae = float(np.mean(np.abs(err)))
    bias = float(np.mean(err))
    nz = obs != 0.0
    mpe = float(np.median(np.abs(err[nz]) / np.abs(obs[nz]))) if nz.any() else None
    denom = float(np.sum((obs - obs.mean()) ** 2))
    nse = 1.0 - float(np.sum(err ** 2)) / denom if denom > 0.0 else None
    pos = obs > 0.0
    spe = mae / float(obs[pos].mean()) if pos.any() else None
    if obs.std() > 0.0 and pred.std() > 0.0:
        pearson = float(np.corrcoef(obs, pred)[0, 1])
    else:
        pearson = None
    return MetricReport(n=n, rmse=rmse, mae=mae, bias=bias, mpe=mpe, nse=nse,
                        spe=spe, pearson_r=pearson)


# ---------------------------------------------------------------------------
# Wilcoxon signed rank
# ---------------------------------------------------------------------------


@dataclass
class WilcoxonResult:
    statistic: float     # W+, the sum of ranks of positive differences
    p_value: float       # two-sided
    n: int               # effective sample size after dropping zero diffs
    n_zero: int
    method: str          # "exact", "approx" or "degenerate"


def _rank_average(v: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing their average rank."""
    order = np.argsort(v, kind="mergesort")
    sv = v[order]
    ranks = np.empty(v.size)
    i = 0
    while i < v.size:
        j = i
        while j < v.size and sv[j] == sv[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j - 1) + 1.0
        i = j
    return ranks


def wilcoxon_signed_rank(a, b=None, exact_limit: int = 15) -> WilcoxonResult:
    """Two-sided paired signed-rank test.

    Pass two paired samples, or a single array of differences.  Zero
    differences are dropped; tied magnitudes get average ranks.  Up to
    exact_limit effective pairs the null distribution is enumerated exactly
    (dynamic program over doubled ranks, which are integers even with
    average-rank ties); beyond that a normal approximation with tie
    correction and no continuity correction is used.  All differences zero
    yields p = 1 flagged as degenerate.
    """
    a = np.asarray(a, np.float64).ravel()
    d = a - np.asarray(b, np.float64).ravel() if b is not None else a
    if not np.all(np.isfinite(d)):
        raise DataError("differences must be finite")
    n_zero = int(np.sum(d == 0.0))
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        return WilcoxonResult(statistic=0.0, p_value=1.0, n=0, n_zero=n_zero,
                              method="degenerate")
    ranks = _rank_average(np.abs(d))
    w_plus = float(ranks[d > 0.0].sum())
    if n <= exact_limit:
        r2 = np.rint(2.0 * ranks).astype(np.int64)
        total = int(r2.sum())
        counts = np.zeros(total + 1)
        counts[0] = 1.0
        for r in r2:
            counts[r:] += counts[:total + 1 - r].copy()
        denom = 2.0 ** n
        w2 = int(round(2.0 * w_plus))
        p_le = counts[:w2 + 1].sum() / denom
        p_ge = counts[w2:].sum() / denom
        return WilcoxonResult(statistic=w_plus,
                              p_value=min(1.0, 2.0 * min(p_le, p_ge)),
                              n=n, n_zero=n_zero, method="exact")
    mu = n * (n + 1) / 4.0
    tie_term = 0.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    for t in tie_counts:
        tie_term += t ** 3 - t
    sigma = math.sqrt(n * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0)
    z = (w_plus - mu) / sigma
    return WilcoxonResult(statistic=w_plus, p_value=math.erfc(abs(z) / math.sqrt(2.0)),
                          n=n, n_zero=n_zero, method="approx")


# ---------------------------------------------------------------------------
# accumulated local effects
# ---------------------------------------------------------------------------


@dataclass
class ALECurve:
    feature: int
    edges: np.ndarray    # bin edges, length B+1
    values: np.ndarray   # centered accumulated effect at each edge
    counts: np.ndarray   # samples per bin, length B

    @property
    def span(self) -> float:
        return float(self.values.max() - self.values.min())


def ale_first_order(predict, X, feature: int, min_bin: int = 50,
                    max_bins: int = 20) -> ALECurve:
    """First-order accumulated local effect of one feature.

    Bins come from quantiles of the feature column (duplicates merged); the
    bin count shrinks until every bin holds at least min_bin samples.  Within
    each bin the mean prediction difference between the two edges is taken,
    the differences are accumulated along the edges, and the curve is
    centered so the sample-weighted mean effect is zero.  predict must accept
    an (m, k) array and return m values.
    """
    X = np.asarray(X, np.float64)
    if X.ndim != 2:
        raise DataError("X must be a 2-d design matrix")
    if not 0 <= feature < X.shape[1]:
        raise ConfigError(f"feature index {feature} out of range")
    n = X.shape[0]
    if n < min_bin:
        raise DataError(f"need at least min_bin={min_bin} samples, got {n}")
    col = X[:, feature]
    if np.all(col == col[0]):
        raise DataError("feature is constant; no effect curve exists")
    B = max(1, min(max_bins, n // min_bin))
    while True:
        edges = np.unique(np.quantile(col, np.linspace(0.0, 1.0, B + 1)))
        nb = edges.size - 1
        idx = np.clip(np.searchsorted(edges, col, side="right") - 1, 0, nb - 1)
        counts = np.bincount(idx, minlength=nb)
        if counts.min() >= min_bin or B == 1:
            break
        B -= 1
    deltas = np.empty(nb)
    for k in range(nb):
        rows = X[idx == k]
        lo = rows.copy()
        hi = rows.copy()
        lo[:, feature] = edges[k]
        hi[:, feature] = edges[k + 1]
        deltas[k] = float(np.mean(np.asarray(predict(hi)) - np.asarray(predict(lo))))
    edge_vals = np.concatenate([[0.0], np.cumsum(deltas)])
    center = float(np.sum(counts * edge_vals[1:]) / n)
    return ALECurve(feature=feature, edges=edges, values=edge_vals - center,
                    counts=counts)


# ---------------------------------------------------------------------------
# mass conservation audit
# ---------------------------------------------------------------------------


@dataclass
class MassAudit:
    """Does simulated water equivalent ever grow faster than snowfall while
    the air is below freezing?  Rates are per day."""

    n_steps: int
    n_considered: int
    n_violations: int
    violation_rate: float | None
    max_excess: float        # m/day beyond the snowfall input
    median_excess: float


def mass_conservation_audit(result, series, t_air_index: int = 5,
                            p_snow_index: int = 6,
                            dt: float = DAY_SECONDS) -> MassAudit:
    """Audit a simulation's water path against its precipitation forcing.

    Uses result.swe when present (coupled runs), otherwise result.state (a
    standalone water equivalent run).  Reset transitions are skipped: their
    jumps come from the data, not the model.
    """
    swe_hat = result.swe if result.swe is not None else result.state
    steps = result.K.size
    t_air = series.X[:-1, t_air_index]
    p_snow = series.X[:-1, p_snow_index]
    rate = (swe_hat[1:] - swe_hat[:-1]) / (result.K * dt) * DAY_SECONDS
    consider = (t_air < 0.0) & ~result.reset
    n_considered = int(consider.sum())
    excess = rate[consider] - p_snow[consider]
    violations = excess > 0.0
    n_violations = int(violations.sum())
    return MassAudit(
        n_steps=steps,
        n_considered=n_considered,
        n_violations=n_violations,
        violation_rate=n_violations / n_considered if n_considered else None,
        max_excess=float(excess[violations].max()) if n_violations else 0.0,
        median_excess=float(np.median(excess[violations])) if n_violations else 0.0,
    )
