"""Self-contained No-U-Turn sampler with dual-averaging and mass adaptation.

The transition builds a leapfrog trajectory by repeated doubling, selects the
next state multinomially among the visited points (progressive, biased toward
the newest subtree) and stops at a U-turn or at ``max_tree_depth`` doublings.
Warmup adapts the step size by dual averaging toward ``target_accept`` and a
diagonal inverse mass matrix from draw variances collected in expanding
windows (initial fast window, doubling slow windows, terminal fast window;
window lengths shrink proportionally for short warmups).

The target is any callable ``vec -> (log_density, gradient)``.  Non-finite
values are treated as divergent leapfrog states and rejected; they never
abort a run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NutsConfig",
    "ChainOutput",
    "SamplerError",
    "nuts_run",
    "adapt_warmup",
    "multi_chain",
]

DIVERGENCE_THRESHOLD = 1000.0  # Hamiltonian-error units


class SamplerError(RuntimeError):
    """Initialization or adaptation failure of a chain."""


@dataclass(frozen=True)
class NutsConfig:
    chains: int = 4
    warmup: int = 2000
    draws: int = 3000
    target_accept: float = 0.8
    max_tree_depth: int = 10
    seed: int = 0
    init_radius: float = 2.0  # inits uniform on (-radius, radius) per coordinate
    adapt_mass: bool = True
    step_size: float | None = None  # fixed step size; disables step adaptation
    # Warmup trajectories are capped at this depth.  While the step size is
    # still equilibrating, uncapped trees can lock into a tiny-step regime
    # whose truncated trajectories keep the acceptance statistic pinned near
    # the target; the cap both bounds the cost of those iterations and breaks
    # the equilibrium (shorter trees push the statistic, and hence the step
    # size, back up).  Sampling iterations always use max_tree_depth.
    warmup_max_depth: int = 8

    def __post_init__(self):
        if self.warmup < 1 or self.draws < 1:
            raise ValueError("warmup and draws must both be at least 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if not 0 <= self.max_tree_depth <= 15:
            raise ValueError("max_tree_depth must be in 0..15")
        if self.chains < 1:
            raise ValueError("need at least one chain")


@dataclass
class ChainOutput:
    """Draws and per-iteration statistics of one chain."""

    draws: np.ndarray  # (draws, dim), unconstrained space
    step_size: np.ndarray
    tree_depth: np.ndarray
    divergent: np.ndarray
    accept_stat: np.ndarray
    energy: np.ndarray
    wall_time: float
    adapted_step_size: float
    inv_mass_diag: np.ndarray
    constrained: np.ndarray | None = None  # filled by model-level fitters

    @property
    def n_divergent(self) -> int:
        return int(self.divergent.sum())


def _eval(target, theta):
    value, grad = target(theta)
    return float(value), np.asarray(grad, dtype=float)


def _leapfrog(target, theta, r, grad, eps, inv_mass):
    r = r + 0.5 * eps * grad
    theta = theta + eps * (inv_mass * r)
    value, grad = _eval(target, theta)
    r = r + 0.5 * eps * grad
    return theta, r, value, grad


def _kinetic(r, inv_mass):
    return 0.5 * float(np.dot(r, inv_mass * r))


class _DualAveraging:
    """Nesterov dual averaging of log step size (gamma/t0/kappa as usual)."""

    def __init__(self, eps0: float, target: float):
        self.mu = np.log(10.0 * eps0)
        self.target = target
        self.log_eps = np.log(eps0)
        self.log_eps_bar = 0.0
        self.h_bar = 0.0
        self.count = 0

    def update(self, accept_prob: float) -> float:
        self.count += 1
        m, gamma, t0, kappa = self.count, 0.05, 10.0, 0.75
        eta = 1.0 / (m + t0)
        self.h_bar = (1 - eta) * self.h_bar + eta * (self.target - accept_prob)
        self.log_eps = self.mu - np.sqrt(m) / gamma * self.h_bar
        w = m ** (-kappa)
        self.log_eps_bar = (1 - w) * self.log_eps_bar + w * self.log_eps
        return np.exp(self.log_eps)

    @property
    def adapted(self) -> float:
        return float(np.exp(self.log_eps_bar))


class _Welford:
    def __init__(self, dim: int):
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def push(self, x):
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def variance(self):
        if self.count < 2:
            return None
        return self.m2 / (self.count - 1)


def _regularized_inv_mass(welford: _Welford) -> np.ndarray | None:
    var = welford.variance()
    if var is None:
        return None
    n = welford.count
    return (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))


def _find_reasonable_step(target, theta, value, grad, inv_mass, rng) -> float:
    """Double/halve the step until one leapfrog's acceptance crosses 1/2."""
    eps = 1.0
    r = rng.standard_normal(theta.shape[0]) / np.sqrt(inv_mass)
    h0 = -value + _kinetic(r, inv_mass)
    for _ in range(60):
        _, r1, v1, _ = _leapfrog(target, theta, r, grad, eps, inv_mass)
        if np.isfinite(v1) and np.isfinite(r1).all():
            break
        eps *= 0.5
    else:
        raise SamplerError("could not find a finite leapfrog step at the initial point")
    log_ratio = h0 - (-v1 + _kinetic(r1, inv_mass))
    direction = 1.0 if log_ratio > np.log(0.5) else -1.0
    for _ in range(60):
        eps *= 2.0**direction
        _, r1, v1, _ = _leapfrog(target, theta, r, grad, eps, inv_mass)
        if not (np.isfinite(v1) and np.isfinite(r1).all()):
            log_ratio = -np.inf
        else:
            log_ratio = h0 - (-v1 + _kinetic(r1, inv_mass))
        if direction * log_ratio <= direction * np.log(0.5):
            break
    return float(min(max(eps, 1e-10), 1e7))


class _Tree:
    """End states, multinomial proposal and statistics of one subtree."""

    __slots__ = (
        "theta_minus", "r_minus", "grad_minus",
        "theta_plus", "r_plus", "grad_plus",
        "theta", "value", "grad",
        "log_weight", "sum_accept", "n_states", "ok", "diverged",
    )

    def __init__(self, theta, r, grad, value, log_weight, accept, diverged):
        self.theta_minus = self.theta_plus = self.theta = theta
        self.r_minus = self.r_plus = r
        self.grad_minus = self.grad_plus = self.grad = grad
        self.value = value
        self.log_weight = log_weight
        self.sum_accept = accept
        self.n_states = 1
        self.diverged = diverged
        self.ok = not diverged


def _turned(theta_minus, r_minus, theta_plus, r_plus, inv_mass) -> bool:
    span = theta_plus - theta_minus
    return (
        np.dot(span, inv_mass * r_minus) < 0.0
        or np.dot(span, inv_mass * r_plus) < 0.0
    )


def _build_tree(target, state, depth, direction, eps, h0, inv_mass, rng) -> _Tree:
    if depth == 0:
        theta, r, grad = (
            (state.theta_plus, state.r_plus, state.grad_plus)
            if direction > 0
            else (state.theta_minus, state.r_minus, state.grad_minus)
        )
        theta1, r1, v1, g1 = _leapfrog(target, theta, r, grad, direction * eps, inv_mass)
        if np.isfinite(v1) and np.isfinite(r1).all():
            h1 = -v1 + _kinetic(r1, inv_mass)
        else:
            h1 = np.inf
        delta = h1 - h0
        diverged = not np.isfinite(delta) or delta > DIVERGENCE_THRESHOLD
        log_weight = -delta if not diverged else -np.inf
        accept = float(np.exp(min(0.0, -delta))) if np.isfinite(delta) else 0.0
        return _Tree(theta1, r1, g1, v1, log_weight, accept, diverged)

    first = _build_tree(target, state, depth - 1, direction, eps, h0, inv_mass, rng)
    if not first.ok:
        return first
    second = _build_tree(target, first, depth - 1, direction, eps, h0, inv_mass, rng)

    # merge: multinomial choice between the two halves' proposals
    total = np.logaddexp(first.log_weight, second.log_weight)
    if np.isfinite(second.log_weight) and np.log(rng.random()) < second.log_weight - total:
        first.theta, first.value, first.grad = second.theta, second.value, second.grad
    first.log_weight = total
    first.sum_accept += second.sum_accept
    first.n_states += second.n_states
    if direction > 0:
        first.theta_plus, first.r_plus, first.grad_plus = (
            second.theta_plus, second.r_plus, second.grad_plus,
        )
    else:
        first.theta_minus, first.r_minus, first.grad_minus = (
            second.theta_minus, second.r_minus, second.grad_minus,
        )
    first.diverged = second.diverged
    first.ok = second.ok and not _turned(
        first.theta_minus, first.r_minus, first.theta_plus, first.r_plus, inv_mass
    )
    return first


def _transition(target, theta, value, grad, eps, inv_mass, max_depth, rng):
    """One NUTS draw; returns the new state and iteration statistics."""
    r0 = rng.standard_normal(theta.shape[0]) / np.sqrt(inv_mass)
    h0 = -value + _kinetic(r0, inv_mass)
    tree = _Tree(theta, r0, grad, value, 0.0, 1.0, False)
    tree.sum_accept = 0.0
    tree.n_states = 0
    depth = 0
    diverged = False
    # at least one doubling, so max_depth=0 still takes a single leapfrog step
    while depth < max(max_depth, 1):
        direction = 1 if rng.random() < 0.5 else -1
        sub = _build_tree(target, tree, depth, direction, eps, h0, inv_mass, rng)
        tree.sum_accept += sub.sum_accept
        tree.n_states += sub.n_states
        if not sub.ok:
            diverged = sub.diverged
            break
        # biased progressive sampling toward the new half of the trajectory
        if np.log(rng.random()) < sub.log_weight - tree.log_weight:
            tree.theta, tree.value, tree.grad = sub.theta, sub.value, sub.grad
        tree.log_weight = np.logaddexp(tree.log_weight, sub.log_weight)
        if direction > 0:
            tree.theta_plus, tree.r_plus, tree.grad_plus = (
                sub.theta_plus, sub.r_plus, sub.grad_plus,
            )
        else:
            tree.theta_minus, tree.r_minus, tree.grad_minus = (
                sub.theta_minus, sub.r_minus, sub.grad_minus,
            )
        depth += 1
        if _turned(tree.theta_minus, tree.r_minus, tree.theta_plus, tree.r_plus, inv_mass):
            break
    accept_stat = tree.sum_accept / max(tree.n_states, 1)
    return tree.theta, tree.value, tree.grad, depth, diverged, accept_stat, h0


def _warmup_schedule(warmup: int, adapt_mass: bool):
    """(init_fast, slow-window ends, term_fast start); empty windows if no mass adaptation."""
    if not adapt_mass or warmup < 100:
        return warmup, [], warmup
    init_fast, base_window, term_fast = 75, 25, 50
    if init_fast + base_window + term_fast > warmup:
        init_fast = int(round(0.15 * warmup))
        term_fast = int(round(0.10 * warmup))
    ends = []
    start = init_fast
    size = base_window
    while start + size < warmup - term_fast:
        if start + 3 * size >= warmup - term_fast:
            size = warmup - term_fast - start  # absorb the remainder
        ends.append(start + size)
        start += size
        size *= 2
    if not ends:
        ends = [warmup - term_fast]
    return init_fast, ends, warmup - term_fast


def _run_chain(target, init, cfg: NutsConfig, rng, collect_warmup_only=False):
    theta = np.asarray(init, dtype=float).copy()
    dim = theta.shape[0]
    value, grad = _eval(target, theta)
    if not np.isfinite(value):
        raise SamplerError("target is not finite at the initial point")

    inv_mass = np.ones(dim)
    eps = cfg.step_size or _find_reasonable_step(target, theta, value, grad, inv_mass, rng)
    averager = _DualAveraging(eps, cfg.target_accept)
    init_fast, window_ends, term_start = _warmup_schedule(cfg.warmup, cfg.adapt_mass)
    welford = _Welford(dim)
    start = time.perf_counter()

    n_div_warmup = 0
    warmup_depth = min(cfg.max_tree_depth, cfg.warmup_max_depth)
    for it in range(cfg.warmup):
        theta, value, grad, depth, diverged, accept, _ = _transition(
            target, theta, value, grad, eps, inv_mass, warmup_depth, rng
        )
        n_div_warmup += diverged
        if cfg.step_size is None:
            eps = averager.update(accept)
        in_slow = init_fast <= it < term_start
        if in_slow and not diverged:  # divergent draws stay out of the mass estimate
            welford.push(theta)
        if in_slow and (it + 1) in window_ends:
            new_inv_mass = _regularized_inv_mass(welford)
            if new_inv_mass is not None:
                inv_mass = new_inv_mass
            welford = _Welford(dim)
            if cfg.step_size is None:
                eps = _find_reasonable_step(target, theta, value, grad, inv_mass, rng)
                averager = _DualAveraging(eps, cfg.target_accept)
    if n_div_warmup == cfg.warmup:
        raise SamplerError("every warmup iteration diverged; the target is unusable")
    if cfg.step_size is None:
        eps = averager.adapted
    if collect_warmup_only:
        return float(eps), inv_mass

    draws = np.empty((cfg.draws, dim))
    stats = {
        "step_size": np.full(cfg.draws, eps),
        "tree_depth": np.zeros(cfg.draws, dtype=int),
        "divergent": np.zeros(cfg.draws, dtype=bool),
        "accept_stat": np.zeros(cfg.draws),
        "energy": np.zeros(cfg.draws),
    }
    for it in range(cfg.draws):
        theta, value, grad, depth, diverged, accept, h0 = _transition(
            target, theta, value, grad, eps, inv_mass, cfg.max_tree_depth, rng
        )
        draws[it] = theta
        stats["tree_depth"][it] = depth
        stats["divergent"][it] = diverged
        stats["accept_stat"][it] = accept
        stats["energy"][it] = h0
    return ChainOutput(
        draws=draws,
        wall_time=time.perf_counter() - start,
        adapted_step_size=float(eps),
        inv_mass_diag=inv_mass,
        **stats,
    )


def nuts_run(target, init, cfg: NutsConfig, rng=None) -> ChainOutput:
    """Run one chain: warmup with adaptation, then ``cfg.draws`` retained draws."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    return _run_chain(target, init, cfg, rng)


def adapt_warmup(target, init, cfg: NutsConfig, rng=None):
    """Warmup only; returns the adapted (step_size, inverse-mass diagonal)."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    return _run_chain(target, init, cfg, rng, collect_warmup_only=True)


def _default_inits(cfg: NutsConfig, dim: int, seeds) -> list[np.ndarray]:
    return [
        np.random.default_rng(s).uniform(-cfg.init_radius, cfg.init_radius, size=dim)
        for s in seeds
    ]


def multi_chain(target, cfg: NutsConfig, inits=None, dim: int | None = None) -> list[ChainOutput]:
    """Run ``cfg.chains`` chains with RNG streams spawned from ``cfg.seed``.

    Chains are independent given their streams; identical (seed, cfg, target,
    inits) reproduce identical draws.  Initial points default to coordinates
    uniform on (-init_radius, init_radius) drawn from per-chain streams.
    """
    root = np.random.SeedSequence(cfg.seed)
    children = root.spawn(2 * cfg.chains)
    run_seeds = children[: cfg.chains]
    if inits is None:
        if dim is None:
            dim = getattr(getattr(target, "layout", None), "dim", None)
            if dim is None:
                raise ValueError("pass explicit inits or dim for this target")
        inits = _default_inits(cfg, dim, children[cfg.chains :])
    if len(inits) != cfg.chains:
        raise ValueError(f"got {len(inits)} inits for {cfg.chains} chains")
    outputs = []
    for c in range(cfg.chains):
        rng = np.random.default_rng(run_seeds[c])
        outputs.append(_run_chain(target, inits[c], cfg, rng))
    return outputs
