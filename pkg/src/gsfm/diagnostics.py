"""Convergence and efficiency diagnostics for MCMC draws.

ESS and R-hat follow the rank-normalized split-chain recipe: chains are split
in halves, draws are replaced by normal scores of their pooled ranks, ESS
comes from Geyer's initial-positive/monotone truncated autocorrelation sum
and R-hat is the larger of the bulk and tail (folded) statistics.  Pace is
wall time per effective sample.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats as sstats

__all__ = [
    "ess",
    "split_rhat",
    "mcmc_pace",
    "summarize",
    "PosteriorSummary",
    "ESS_ADEQUATE",
]

ESS_ADEQUATE = 400.0  # reporting threshold below which a parameter is flagged


def _as_chain_matrix(chains) -> np.ndarray:
    ary = np.asarray(chains, dtype=float)
    if ary.ndim == 1:
        ary = ary[np.newaxis, :]
    if ary.ndim != 2:
        raise ValueError("chains must be a (n_chains, n_draws) array")
    return ary


def _split_chains(ary: np.ndarray) -> np.ndarray:
    half = ary.shape[1] // 2
    return np.vstack([ary[:, :half], ary[:, ary.shape[1] - half :]])


def _z_scale(ary: np.ndarray) -> np.ndarray:
    """Normal scores of the pooled ranks (average ranks on ties)."""
    rank = sstats.rankdata(ary, method="average").reshape(ary.shape)
    return sstats.norm.ppf((rank - 0.5) / ary.size)


def _autocovariance(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    xc = x - x.mean()
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n].real
    return acov / n


def _ess_core(ary: np.ndarray) -> float:
    n_chain, n_draw = ary.shape
    if n_draw < 4:
        raise ValueError("need at least 4 draws per chain for ESS")
    acov = np.array([_autocovariance(ary[c]) for c in range(n_chain)])
    chain_mean = ary.mean(axis=1)
    mean_var = acov[:, 0].mean() * n_draw / (n_draw - 1.0)
    var_plus = mean_var * (n_draw - 1.0) / n_draw
    if n_chain > 1:
        var_plus += chain_mean.var(ddof=1)

    rho = np.zeros(n_draw)
    rho[0] = 1.0
    rho_even = 1.0
    rho_odd = 1.0 - (mean_var - acov[:, 1].mean()) / var_plus
    rho[1] = rho_odd
    # Geyer initial positive sequence
    t = 1
    while t < n_draw - 2 and rho_even + rho_odd >= 0.0:
        rho_even = 1.0 - (mean_var - acov[:, t + 1].mean()) / var_plus
        rho_odd = 1.0 - (mean_var - acov[:, t + 2].mean()) / var_plus
        rho[t + 1] = rho_even
        if rho_even + rho_odd >= 0.0:
            rho[t + 2] = rho_odd
        t += 2
    max_t = t
    # Geyer initial monotone sequence
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2
    tau = -1.0 + 2.0 * rho[:max_t].sum() + rho[max_t + 1 : max_t + 2].sum()
    return float(n_chain * n_draw / tau)


def ess(chains) -> float:
    """Rank-normalized split-chain effective sample size (bulk).

    Constant chains have no information and are defined to have ESS 0 so the
    caller can flag them.
    """
    ary = _as_chain_matrix(chains)
    if ary.shape[1] < 8:
        raise ValueError("need at least 8 draws for a split-chain ESS")
    if np.ptp(ary) == 0.0:
        return 0.0
    return max(_ess_core(_z_scale(_split_chains(ary))), 0.0)


def _rhat_core(ary: np.ndarray) -> float:
    n_chain, n_draw = ary.shape
    chain_mean = ary.mean(axis=1)
    within = ary.var(axis=1, ddof=1).mean()
    between = n_draw * chain_mean.var(ddof=1)
    var_plus = (n_draw - 1.0) / n_draw * within + between / n_draw
    return float(np.sqrt(var_plus / within))


def split_rhat(chains) -> float:
    """Rank-normalized split R-hat: max of the bulk and folded-tail statistics."""
    ary = _as_chain_matrix(chains)
    if ary.shape[1] < 4:
        raise ValueError("need at least 4 draws for split R-hat")
    if np.ptp(ary) == 0.0:
        return np.nan
    bulk = _rhat_core(_z_scale(_split_chains(ary)))
    folded = np.abs(ary - np.median(ary))
    tail = _rhat_core(_z_scale(_split_chains(folded)))
    return max(bulk, tail)


def mcmc_pace(wall_time_seconds: float, ess_value: float) -> float:
    """Seconds of sampling per effective draw; infinite when ESS is zero."""
    if wall_time_seconds <= 0:
        raise ValueError("wall time must be positive")
    if ess_value < 0:
        raise ValueError("ESS cannot be negative")
    if ess_value == 0:
        return np.inf
    return wall_time_seconds / ess_value


@dataclass(frozen=True)
class PosteriorSummary:
    """One parameter row: point estimate, spread, interval and MCMC quality."""

    parameter: str
    estimate: float
    sd: float
    ci_low: float
    ci_high: float
    ess: float
    rhat: float
    pace: float
    ess_adequate: bool

    def row(self) -> list:
        return [
            self.parameter,
            self.estimate,
            self.sd,
            self.ess,
            self.rhat,
            self.pace,
            self.ci_low,
            self.ci_high,
        ]


def summarize(
    chains: np.ndarray,
    names: list[str],
    wall_times=None,
    median_for: tuple[str, ...] = ("tau",),
) -> list[PosteriorSummary]:
    """Per-parameter posterior summaries from (n_chains, n_draws, dim) draws.

    The point estimate is the posterior mean except for parameters named in
    ``median_for`` (the frailty scale is conventionally reported as a
    median).  The 95% interval is the Wald form, estimate +- 1.96 sd.
    """
    ary = np.asarray(chains, dtype=float)
    if ary.ndim != 3:
        raise ValueError("chains must have shape (n_chains, n_draws, dim)")
    if ary.shape[2] != len(names):
        raise ValueError(f"{ary.shape[2]} columns but {len(names)} names")
    total_time = float(np.sum(wall_times)) if wall_times is not None else np.nan
    out = []
    for d, name in enumerate(names):
        draws = ary[:, :, d]
        pooled = draws.ravel()
        est = float(np.median(pooled)) if name in median_for else float(pooled.mean())
        sd = float(pooled.std(ddof=1))
        e = ess(draws)
        r = split_rhat(draws)
        pace = mcmc_pace(total_time, e) if np.isfinite(total_time) else np.nan
        out.append(
            PosteriorSummary(
                parameter=name,
                estimate=est,
                sd=sd,
                ci_low=est - 1.96 * sd,
                ci_high=est + 1.96 * sd,
                ess=e,
                rhat=r,
                pace=pace,
                ess_adequate=e > ESS_ADEQUATE,
            )
        )
    return out


def write_summary_csv(rows: list[PosteriorSummary], target) -> None:
    own = isinstance(target, (str, Path))
    fh = open(target, "w", encoding="utf-8", newline="") if own else target
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["parameter", "est", "sd", "ess", "rhat", "pace", "ci_low", "ci_high"])
        for r in rows:
            writer.writerow([r.parameter] + [f"{x:.17g}" for x in r.row()[1:]])
    finally:
        if own:
            fh.close()


def format_summary(rows: list[PosteriorSummary]) -> str:
    header = f"{'parameter':<16}{'est':>12}{'sd':>12}{'ess':>9}{'rhat':>8}{'pace':>9}{'ci_low':>12}{'ci_high':>12}"
    lines = [header, "-" * len(header)]
    for r in rows:
        flag = "" if r.ess_adequate else "  (ess<400)"
        lines.append(
            f"{r.parameter:<16}{r.estimate:>12.4f}{r.sd:>12.4f}{r.ess:>9.0f}"
            f"{r.rhat:>8.3f}{r.pace:>9.3f}{r.ci_low:>12.4f}{r.ci_high:>12.4f}{flag}"
        )
    return "\n".join(lines)
