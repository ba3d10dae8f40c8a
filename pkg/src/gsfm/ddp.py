"""Truncated stick-breaking machinery for stratum-dependent baseline survival mixtures.

A baseline survival function is modelled as a finite mixture of log-normal
survival kernels.  The mixture weights come from a truncated stick-breaking
construction and are shared across treatment strata; the kernel locations are
selected per stratum through a 0/1 design vector applied to a shared atom
location vector.  All mixture evaluations run in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, logsumexp

__all__ = [
    "AtomSet",
    "DesignMatrix",
    "stick_break",
    "stick_break_inverse",
    "design_one_way",
    "design_two_way",
    "log_surv_lognormal",
    "log_pdf_lognormal",
    "baseline_log_surv",
    "baseline_log_pdf",
    "baseline_curve",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class DesignMatrix:
    """Rows of 0/1 effect-selection vectors, one per treatment stratum."""

    rows: np.ndarray  # (G, q)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2:
            raise ValueError("design matrix must be two-dimensional")
        object.__setattr__(self, "rows", rows)

    @property
    def n_strata(self) -> int:
        return self.rows.shape[0]

    @property
    def n_effects(self) -> int:
        return self.rows.shape[1]

    def vector(self, j: int) -> np.ndarray:
        """Design vector of stratum ``j`` (1-based)."""
        if not 1 <= j <= self.n_strata:
            raise ValueError(f"stratum {j} outside 1..{self.n_strata}")
        return self.rows[j - 1]


@dataclass(frozen=True)
class AtomSet:
    """One truncated random measure: weights, atom locations and kernel scales.

    ``weights`` is a simplex of length L, ``locations`` is (L, q) with q the
    effect dimension of the accompanying design, and ``scales`` holds the L
    positive kernel standard deviations.
    """

    weights: np.ndarray
    locations: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        loc = np.asarray(self.locations, dtype=float)
        sc = np.asarray(self.scales, dtype=float)
        if w.ndim != 1 or loc.ndim != 2 or sc.ndim != 1:
            raise ValueError("weights/scales must be 1-d, locations 2-d")
        L = w.shape[0]
        if L < 1 or loc.shape[0] != L or sc.shape[0] != L:
            raise ValueError("weights, locations and scales disagree on L")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be a simplex (sum 1 within 1e-12)")
        if np.any(sc <= 0):
            raise ValueError("kernel scales must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "scales", sc)

    @property
    def truncation(self) -> int:
        return self.weights.shape[0]


def stick_break(raw_sticks) -> np.ndarray:
    """Map L-1 stick fractions in (0,1) to a weight simplex of length L.

    The last weight is the deterministic remainder of the stick, so the
    output sums to one up to rounding.
    """
    v = np.asarray(raw_sticks, dtype=float)
    if v.ndim != 1:
        raise ValueError("raw sticks must be a 1-d vector")
    if np.any(v <= 0.0) or np.any(v >= 1.0):
        raise ValueError("stick fractions must lie strictly inside (0, 1)")
    remainder = np.concatenate([[1.0], np.cumprod(1.0 - v)])
    weights = np.append(v * remainder[:-1], remainder[-1])
    return weights


def stick_break_inverse(weights) -> np.ndarray:
    """Recover the L-1 stick fractions from a strictly positive simplex."""
    w = np.asarray(weights, dtype=float)
    if np.any(w <= 0.0):
        raise ValueError("inverse stick-breaking needs strictly positive weights")
    tail = np.cumsum(w[::-1])[::-1]  # tail[h] = sum_{l >= h} w_l
    return w[:-1] / tail[:-1]


def design_one_way(G: int) -> DesignMatrix:
    """Identity design: stratum j selects the j-th atom coordinate."""
    if G < 1:
        raise ValueError("need at least one stratum")
    return DesignMatrix(np.eye(G))


def design_two_way(V: int, U: int) -> DesignMatrix:
    """Two-factor design with a grand effect and one effect per factor level.

    The stratum for level pair (v, u) selects entries (grand, A_v, B_u), so
    each of the V*U rows has exactly three ones and q = 1 + V + U.
    """
    if V < 1 or U < 1:
        raise ValueError("factor level counts must be positive")
    q = 1 + V + U
    rows = np.zeros((V * U, q))
    for v in range(V):
        for u in range(U):
            r = rows[v * U + u]
            r[0] = 1.0
            r[1 + v] = 1.0
            r[1 + V + u] = 1.0
    return DesignMatrix(rows)


def _check_t_sigma(t, sigma):
    if np.any(np.asarray(t) <= 0.0):
        raise ValueError("time must be positive")
    if np.any(np.asarray(sigma) <= 0.0):
        raise ValueError("scale must be positive")


def log_surv_lognormal(t, mu, sigma):
    """log S(t) of the log-normal: log Phi(-(log t - mu)/sigma), in log space.

    Stays finite for standardized arguments out to about +-38.
    """
    _check_t_sigma(t, sigma)
    z = (np.log(t) - mu) / sigma
    return log_ndtr(-z)


def log_pdf_lognormal(t, mu, sigma):
    """Log density of the log-normal distribution at t."""
    _check_t_sigma(t, sigma)
    logt = np.log(t)
    z = (logt - mu) / sigma
    return -logt - np.log(sigma) - 0.5 * _LOG_2PI - 0.5 * z * z


def _mixture_terms(t, j, atoms: AtomSet, design: DesignMatrix, kernel):
    mu = atoms.locations @ design.vector(j)  # (L,)
    t_arr = np.asarray(t, dtype=float)
    terms = kernel(t_arr[..., np.newaxis], mu, atoms.scales)
    with np.errstate(divide="ignore"):  # exact zero weights are fine
        logw = np.log(atoms.weights)
    return logsumexp(logw + terms, axis=-1)


def baseline_log_surv(t, j: int, atoms: AtomSet, design: DesignMatrix):
    """log of the mixture baseline survival for stratum j, via log-sum-exp."""
    return _mixture_terms(t, j, atoms, design, log_surv_lognormal)


def baseline_log_pdf(t, j: int, atoms: AtomSet, design: DesignMatrix):
    """log of the mixture baseline density for stratum j, via log-sum-exp."""
    return _mixture_terms(t, j, atoms, design, log_pdf_lognormal)


def baseline_curve(grid, j: int, atomsets, design: DesignMatrix):
    """Pointwise posterior summary of the baseline survival over draws.

    Parameters
    ----------
    grid : increasing positive times at which to evaluate the curve.
    j : stratum (1-based).
    atomsets : list of AtomSet posterior draws.
    design : the effect-selection design shared by the draws.

    Returns
    -------
    dict with keys ``t``, ``mean``, ``q025``, ``q975`` (equal-length arrays).
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a nonempty 1-d array")
    if np.any(np.diff(grid) <= 0) or grid[0] <= 0:
        raise ValueError("grid must be strictly increasing and positive")
    if len(atomsets) == 0:
        raise ValueError("need at least one posterior draw")
    curves = np.stack(
        [np.exp(baseline_log_surv(grid, j, a, design)) for a in atomsets]
    )
    return {
        "t": grid,
        "mean": curves.mean(axis=0),
        "q025": np.quantile(curves, 0.025, axis=0),
        "q975": np.quantile(curves, 0.975, axis=0),
    }
