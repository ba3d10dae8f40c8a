"""End-to-end fitting: target construction, chains, summaries and curves."""

from __future__ import annotations

import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .ddp import DesignMatrix, baseline_curve, baseline_log_surv, design_one_way
from .diagnostics import PosteriorSummary, summarize
from .model import (
    Hyperparams,
    ParameterLayout,
    atomsets_from_params,
    build_target,
    pooled_mode,
    unpack,
)
from .sampler import ChainOutput, NutsConfig, multi_chain

__all__ = ["FitResult", "fit_gsfm", "fit_pooled", "curves_cross"]


@dataclass
class FitResult:
    """Posterior draws plus the bookkeeping needed to interpret them."""

    chains: list[ChainOutput]
    layout: ParameterLayout
    hyper: Hyperparams
    design: DesignMatrix
    pooled: bool = False

    @property
    def names(self) -> list[str]:
        return self.layout.names(constrained=True)

    @property
    def wall_times(self) -> list[float]:
        return [c.wall_time for c in self.chains]

    def draws(self, constrained: bool = True) -> np.ndarray:
        """(n_chains, n_draws, dim) array of draws."""
        if constrained:
            return np.stack([c.constrained for c in self.chains])
        return np.stack([c.draws for c in self.chains])

    def monitored_indices(self) -> list[int]:
        names = self.names
        picked = [i for i, n in enumerate(names) if n.startswith("beta[")]
        picked.append(names.index("tau"))
        return picked

    def summary(self, full: bool = False) -> list[PosteriorSummary]:
        """Summaries of beta and tau (or of every coordinate with full=True)."""
        idx = list(range(self.layout.dim)) if full else self.monitored_indices()
        names = [self.names[i] for i in idx]
        draws = self.draws(constrained=True)[:, :, idx]
        return summarize(draws, names, wall_times=self.wall_times)

    def baseline_curves(self, grid, k: int, j: int, max_draws: int = 2000) -> dict:
        """Posterior summary of S_0kj on a grid, over (thinned) draws."""
        flat = self.draws(constrained=False).reshape(-1, self.layout.dim)
        stride = max(1, len(flat) // max_draws)
        atomsets = [
            atomsets_from_params(unpack(vec, self.layout))[k - 1]
            for vec in flat[::stride]
        ]
        return baseline_curve(grid, j, atomsets, self.design)

    def pooled_stratum_curves(self, grid, n_strata: int, max_draws: int = 2000) -> dict[int, np.ndarray]:
        """Mean per-stratum survival under a pooled fit: E[S0(t)^exp(beta_j)].

        The pooled model encodes stratum j >= 2 as the (j-1)-th indicator
        counted from the end of the covariate vector; stratum 1 is the
        reference.  Each stratum curve is a power transform of the shared
        baseline, so curves of different strata cannot cross.
        """
        if not self.pooled:
            raise ValueError("only meaningful for pooled fits")
        grid = np.asarray(grid, dtype=float)
        flat = self.draws(constrained=False).reshape(-1, self.layout.dim)
        stride = max(1, len(flat) // max_draws)
        sub = flat[::stride]
        first_ind = self.layout.p - (n_strata - 1)
        curves = {j: np.zeros(grid.size) for j in range(1, n_strata + 1)}
        for vec in sub:
            params = unpack(vec, self.layout)
            atoms = atomsets_from_params(params)[0]
            log_s0 = baseline_log_surv(grid, 1, atoms, self.design)
            for j in range(1, n_strata + 1):
                shift = 0.0 if j == 1 else params.beta[first_ind + j - 2]
                curves[j] += np.exp(np.exp(shift) * log_s0)
        return {j: c / len(sub) for j, c in curves.items()}


def _fit_chain_worker(args):
    ds, hyper, design_rows, cfg, init, seed_seq = args
    target = build_target(ds, hyper, DesignMatrix(design_rows))
    from .sampler import _run_chain

    return _run_chain(target, init, cfg, np.random.default_rng(seed_seq))


def fit_gsfm(
    ds: Dataset,
    hyper: Hyperparams = Hyperparams(),
    cfg: NutsConfig = NutsConfig(),
    design: DesignMatrix | None = None,
    n_jobs: int = 1,
    pooled: bool = False,
) -> FitResult:
    """Fit the frailty model by NUTS; chains may run as parallel processes.

    Results are independent of ``n_jobs``: chain c always consumes the c-th
    RNG stream spawned from ``cfg.seed``.
    """
    if pooled:
        ds, design = pooled_mode(ds)
    if design is None:
        design = design_one_way(ds.n_strata)
    target = build_target(ds, hyper, design)
    lay = target.layout

    if n_jobs > 1 and cfg.chains > 1:
        root = np.random.SeedSequence(cfg.seed)
        children = root.spawn(2 * cfg.chains)
        inits = [
            np.random.default_rng(s).uniform(-cfg.init_radius, cfg.init_radius, lay.dim)
            for s in children[cfg.chains :]
        ]
        jobs = [
            (ds, hyper, design.rows, cfg, inits[c], children[c])
            for c in range(cfg.chains)
        ]
        with ProcessPoolExecutor(min(n_jobs, cfg.chains), mp_context=mp.get_context("spawn")) as pool:
            chains = list(pool.map(_fit_chain_worker, jobs))
    else:
        chains = multi_chain(target, cfg)

    for c in chains:
        c.constrained = lay.constrain(c.draws)
    return FitResult(chains=chains, layout=lay, hyper=hyper, design=design, pooled=pooled)


def fit_pooled(ds: Dataset, hyper=Hyperparams(), cfg=NutsConfig(), n_jobs: int = 1) -> FitResult:
    """Model-checking alternative: one shared baseline, strata as indicators."""
    return fit_gsfm(ds, hyper, cfg, n_jobs=n_jobs, pooled=True)


def curves_cross(curve_a: np.ndarray, curve_b: np.ndarray, tol: float = 1e-3) -> bool:
    """True when two survival curves change order somewhere on the grid."""
    diff = np.asarray(curve_a) - np.asarray(curve_b)
    signs = np.sign(diff[np.abs(diff) > tol])
    return bool(signs.size and (signs.min() < 0 < signs.max()))


def replication_fitter(
    ds: Dataset,
    seed: int,
    hyper: Hyperparams = Hyperparams(),
    cfg: NutsConfig = NutsConfig(chains=4, warmup=1000, draws=1000),
) -> dict[str, tuple[float, float, float]]:
    """Study fitter: full NUTS fit, returning (estimate, sd, rhat) per parameter.

    Picklable at module level so replications can fan out across processes;
    the replication seed replaces the sampler seed.
    """
    from dataclasses import replace

    result = fit_gsfm(ds, hyper, replace(cfg, seed=seed), n_jobs=1)
    return {r.parameter: (r.estimate, r.sd, r.rhat) for r in result.summary()}
