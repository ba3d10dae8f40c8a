"""Frailty-model parameterization, priors, likelihood and differentiable target.

The hazard of subject i (stratum j, recurrence k) is
``w_i * lambda_0kj(t) * exp(beta' z)`` with log-frailty ``v_i = log w_i``.
Each baseline ``S_0kj`` is a truncated stick-breaking mixture of log-normal
survival kernels whose locations are selected per stratum by a design vector
(see :mod:`gsfm.ddp`).

Everything the sampler sees is one flat unconstrained vector with layout

    [beta | v | log tau | per k: zeta_k | vec(alpha_k) | log sigma_k]

where ``zeta`` are logit stick fractions.  The posterior value and gradient
are produced by automatic differentiation of this target; the prior includes
the change-of-variable Jacobians for log tau, log sigma and the logit sticks,
so the target is the density of the unconstrained coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

import jax

jax.config.update("jax_enable_x64", True)

import jax.numpy as jnp
from jax.scipy.special import log_ndtr as _jlog_ndtr
from jax.scipy.special import logsumexp as _jlogsumexp

from .data import Dataset, Observation
from .ddp import DesignMatrix, design_one_way, stick_break

__all__ = [
    "Hyperparams",
    "Parameters",
    "ParameterLayout",
    "PosteriorTarget",
    "pack",
    "unpack",
    "log_prior",
    "log_likelihood",
    "build_target",
    "pooled_mode",
    "atomsets_from_params",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Hyperparams:
    """Prior settings; defaults follow the analysis configuration (L=12, M=1)."""

    truncation: int = 12  # L
    mass: float = 1.0  # Dirichlet-process mass per recurrence
    beta_prior_sd: float = math.sqrt(1000.0)
    scale_prior_scale: float = 5.0  # half-Cauchy scale for sigma_h and tau

    def __post_init__(self):
        if self.truncation < 2:
            raise ValueError("truncation must be at least 2")
        if self.mass <= 0 or self.beta_prior_sd <= 0 or self.scale_prior_scale <= 0:
            raise ValueError("hyperparameter scales must be positive")


@dataclass(frozen=True)
class Parameters:
    """Model parameters; tau constrained positive, sticks and scales stored raw."""

    beta: np.ndarray  # (p,)
    v: np.ndarray  # (n,) log-frailties
    tau: float
    raw_sticks: np.ndarray  # (K, L-1) logit stick fractions
    atoms: np.ndarray  # (K, L, q)
    log_scales: np.ndarray  # (K, L)

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        for name in ("beta", "v", "raw_sticks", "atoms", "log_scales"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    def weights(self, k: int) -> np.ndarray:
        """Mixture weight simplex of recurrence k (1-based)."""
        fractions = 1.0 / (1.0 + np.exp(-self.raw_sticks[k - 1]))
        return stick_break(fractions)


@dataclass(frozen=True)
class ParameterLayout:
    """Flat-vector layout bookkeeping: sizes, slices, names, transforms."""

    p: int
    n: int
    K: int
    L: int
    q: int
    subject_ids: tuple[int, ...] = ()

    @property
    def per_k(self) -> int:
        return (self.L - 1) + self.L * self.q + self.L

    @property
    def dim(self) -> int:
        return self.p + self.n + 1 + self.K * self.per_k

    @property
    def tau_index(self) -> int:
        return self.p + self.n

    def block(self, k: int) -> int:
        """Vector offset of recurrence k's block (k 1-based)."""
        return self.p + self.n + 1 + (k - 1) * self.per_k

    def names(self, constrained: bool = False) -> list[str]:
        ids = self.subject_ids or tuple(range(1, self.n + 1))
        out = [f"beta[{i + 1}]" for i in range(self.p)]
        out += [f"v[{sid}]" for sid in ids]
        out.append("tau" if constrained else "log_tau")
        for k in range(1, self.K + 1):
            out += [
                (f"stick[{k},{h + 1}]" if constrained else f"zeta[{k},{h + 1}]")
                for h in range(self.L - 1)
            ]
            out += [
                f"alpha[{k},{h + 1},{c + 1}]"
                for h in range(self.L)
                for c in range(self.q)
            ]
            out += [
                (f"sigma[{k},{h + 1}]" if constrained else f"log_sigma[{k},{h + 1}]")
                for h in range(self.L)
            ]
        return out

    def constrain(self, draws: np.ndarray) -> np.ndarray:
        """Map unconstrained draws (…, dim) to the constrained-space view.

        tau and sigma are exponentiated and the logit sticks become stick
        fractions in (0,1); everything else is the identity.
        """
        out = np.array(draws, dtype=float, copy=True)
        out[..., self.tau_index] = np.exp(out[..., self.tau_index])
        for k in range(1, self.K + 1):
            b = self.block(k)
            zet = out[..., b : b + self.L - 1]
            out[..., b : b + self.L - 1] = 1.0 / (1.0 + np.exp(-zet))
            s0 = b + (self.L - 1) + self.L * self.q
            out[..., s0 : s0 + self.L] = np.exp(out[..., s0 : s0 + self.L])
        return out


def layout_for(ds: Dataset, hyper: Hyperparams, design: DesignMatrix) -> ParameterLayout:
    return ParameterLayout(
        p=ds.n_covariates,
        n=ds.n_subjects,
        K=ds.n_recurrences,
        L=hyper.truncation,
        q=design.n_effects,
        subject_ids=ds.subjects,
    )


def pack(params: Parameters, layout: ParameterLayout) -> np.ndarray:
    """Flatten Parameters into the unconstrained vector (log for tau)."""
    parts = [params.beta, params.v, [math.log(params.tau)]]
    for k in range(layout.K):
        parts += [params.raw_sticks[k], params.atoms[k].ravel(), params.log_scales[k]]
    vec = np.concatenate([np.asarray(x, dtype=float).ravel() for x in parts])
    if vec.shape[0] != layout.dim:
        raise ValueError(f"packed length {vec.shape[0]} != layout dim {layout.dim}")
    return vec


def unpack(vec: np.ndarray, layout: ParameterLayout) -> Parameters:
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (layout.dim,):
        raise ValueError(f"expected vector of length {layout.dim}, got {vec.shape}")
    p, n, K, L, q = layout.p, layout.n, layout.K, layout.L, layout.q
    beta = vec[:p]
    v = vec[p : p + n]
    tau = math.exp(vec[layout.tau_index])
    sticks = np.empty((K, L - 1))
    atoms = np.empty((K, L, q))
    log_scales = np.empty((K, L))
    for k in range(K):
        b = layout.block(k + 1)
        sticks[k] = vec[b : b + L - 1]
        atoms[k] = vec[b + L - 1 : b + L - 1 + L * q].reshape(L, q)
        log_scales[k] = vec[b + L - 1 + L * q : b + layout.per_k]
    return Parameters(beta, v, tau, sticks, atoms, log_scales)


def atomsets_from_params(params: Parameters) -> list:
    """Per-recurrence AtomSet views of the mixture (index k-1 in the list)."""
    from .ddp import AtomSet

    out = []
    for k in range(params.raw_sticks.shape[0]):
        out.append(
            AtomSet(
                weights=params.weights(k + 1),
                locations=params.atoms[k],
                scales=np.exp(params.log_scales[k]),
            )
        )
    return out


# ---------------------------------------------------------------------------
# Density pieces, written once in jnp and reused by the jitted target and the
# float-returning convenience wrappers.


def _stick_log_weights(zeta):
    """(K, L) log mixture weights from (K, L-1) logit stick fractions."""
    log_frac = -jax.nn.softplus(-zeta)  # log v'
    log_rest = -jax.nn.softplus(zeta)  # log(1 - v')
    csum = jnp.cumsum(log_rest, axis=-1)
    head = log_frac.at[..., 1:].add(csum[..., :-1])
    return jnp.concatenate([head, csum[..., -1:]], axis=-1)


def _log_half_cauchy(x, scale):
    return math.log(2.0 / math.pi) - jnp.log(scale) - jnp.log1p((x / scale) ** 2)


def _log_prior_jnp(beta, v, log_tau, zeta, atoms, log_sigma, hyper: Hyperparams):
    tau = jnp.exp(log_tau)
    sigma = jnp.exp(log_sigma)
    n = v.shape[0]
    lp = -0.5 * jnp.sum((beta / hyper.beta_prior_sd) ** 2) - beta.shape[0] * (
        0.5 * _LOG_2PI + math.log(hyper.beta_prior_sd)
    )
    lp += -0.5 * jnp.sum((v / tau) ** 2) - n * (0.5 * _LOG_2PI + log_tau)
    lp += _log_half_cauchy(tau, hyper.scale_prior_scale) + log_tau
    # Beta(1, M) stick fractions plus the logistic Jacobian.
    log_frac = -jax.nn.softplus(-zeta)
    log_rest = -jax.nn.softplus(zeta)
    lp += jnp.sum(math.log(hyper.mass) + (hyper.mass - 1.0) * log_rest)
    lp += jnp.sum(log_frac + log_rest)
    lp += -0.5 * jnp.sum(atoms**2) - atoms.size * 0.5 * _LOG_2PI
    lp += jnp.sum(_log_half_cauchy(sigma, hyper.scale_prior_scale) + log_sigma)
    return lp


def _log_lik_jnp(beta, v, zeta, atoms, log_sigma, arr):
    """Sum of per-record log-likelihood terms.

    arr carries the frozen data: log_y (m,), delta (m,), z (m,p), subject
    row sidx (m,), recurrence row kidx (m,), design row per record d (m,q).
    """
    log_w = _stick_log_weights(zeta)  # (K, L)
    eta = arr["z"] @ beta + v[arr["sidx"]]
    theta = jnp.einsum("mq,mhq->mh", arr["d"], atoms[arr["kidx"]])  # (m, L)
    sig = jnp.exp(log_sigma)[arr["kidx"]]  # (m, L)
    std = (arr["log_y"][:, None] - theta) / sig
    lw = log_w[arr["kidx"]]
    log_s0 = _jlogsumexp(lw + _jlog_ndtr(-std), axis=1)
    log_f0 = _jlogsumexp(
        lw - 0.5 * std**2 - jnp.log(sig) - 0.5 * _LOG_2PI - arr["log_y"][:, None],
        axis=1,
    )
    delta = arr["delta"]
    return jnp.sum(
        delta * (eta + log_f0 + jnp.expm1(eta) * log_s0)
        + (1.0 - delta) * jnp.exp(eta) * log_s0
    )


def _split(vec, lay: ParameterLayout):
    p, n, K, L, q = lay.p, lay.n, lay.K, lay.L, lay.q
    beta = vec[:p]
    v = vec[p : p + n]
    log_tau = vec[p + n]
    rest = vec[p + n + 1 :].reshape(K, lay.per_k)
    zeta = rest[:, : L - 1]
    atoms = rest[:, L - 1 : L - 1 + L * q].reshape(K, L, q)
    log_sigma = rest[:, L - 1 + L * q :]
    return beta, v, log_tau, zeta, atoms, log_sigma


def _data_arrays(ds: Dataset, design: DesignMatrix):
    subject_row = {sid: i for i, sid in enumerate(ds.subjects)}
    obs = ds.observations
    return {
        "log_y": jnp.array([math.log(o.gap_time) for o in obs]),
        "delta": jnp.array([float(o.event) for o in obs]),
        "z": jnp.array([o.covariates for o in obs]),
        "sidx": jnp.array([subject_row[o.subject_id] for o in obs], dtype=jnp.int32),
        "kidx": jnp.array([o.recurrence - 1 for o in obs], dtype=jnp.int32),
        "d": jnp.array([design.vector(o.stratum) for o in obs]),
    }


@dataclass
class PosteriorTarget:
    """Differentiable unconstrained log posterior for one dataset.

    ``value_and_grad(vec)`` returns a float and a numpy gradient; non-finite
    values signal a divergent evaluation and are handled by the sampler as a
    rejection, never as a crash.
    """

    layout: ParameterLayout
    hyper: Hyperparams
    design: DesignMatrix
    _value_and_grad: callable = field(repr=False)
    _value: callable = field(repr=False)

    def value_and_grad(self, vec: np.ndarray) -> tuple[float, np.ndarray]:
        val, grad = self._value_and_grad(jnp.asarray(vec))
        return float(val), np.asarray(grad)

    def value(self, vec: np.ndarray) -> float:
        return float(self._value(jnp.asarray(vec)))

    def __call__(self, vec: np.ndarray) -> tuple[float, np.ndarray]:
        return self.value_and_grad(vec)


def build_target(ds: Dataset, hyper: Hyperparams, design: DesignMatrix | None = None) -> PosteriorTarget:
    """Compile the log posterior (likelihood + prior with Jacobians) for ds."""
    if design is None:
        design = design_one_way(ds.n_strata)
    if design.n_strata < ds.n_strata:
        raise ValueError("design has fewer strata than the data")
    lay = layout_for(ds, hyper, design)
    arr = _data_arrays(ds, design)

    def logpost(vec):
        beta, v, log_tau, zeta, atoms, log_sigma = _split(vec, lay)
        return _log_lik_jnp(beta, v, zeta, atoms, log_sigma, arr) + _log_prior_jnp(
            beta, v, log_tau, zeta, atoms, log_sigma, hyper
        )

    return PosteriorTarget(
        layout=lay,
        hyper=hyper,
        design=design,
        _value_and_grad=jax.jit(jax.value_and_grad(logpost)),
        _value=jax.jit(logpost),
    )


def log_prior(params: Parameters, hyper: Hyperparams) -> float:
    """Unconstrained-target log prior (transform Jacobians included)."""
    return float(
        _log_prior_jnp(
            jnp.asarray(params.beta),
            jnp.asarray(params.v),
            jnp.asarray(math.log(params.tau)),
            jnp.asarray(params.raw_sticks),
            jnp.asarray(params.atoms),
            jnp.asarray(params.log_scales),
            hyper,
        )
    )


def log_likelihood(ds: Dataset, params: Parameters, design: DesignMatrix | None = None) -> float:
    """Log likelihood of the dataset under the frailty model."""
    if design is None:
        design = design_one_way(ds.n_strata)
    arr = _data_arrays(ds, design)
    return float(
        _log_lik_jnp(
            jnp.asarray(params.beta),
            jnp.asarray(params.v),
            jnp.asarray(params.raw_sticks),
            jnp.asarray(params.atoms),
            jnp.asarray(params.log_scales),
            arr,
        )
    )


def pooled_mode(ds: Dataset) -> tuple[Dataset, DesignMatrix]:
    """Classical shared-frailty view: one baseline, strata as indicators.

    Every record is remapped to recurrence 1 and stratum 1 and G-1 indicator
    covariates (strata 2..G) are appended, which is the model-checking
    alternative fitted alongside the stratified model.
    """
    G = ds.n_strata
    remapped = []
    for o in ds.observations:
        indicators = tuple(1.0 if o.stratum == j else 0.0 for j in range(2, G + 1))
        remapped.append(
            Observation(
                subject_id=o.subject_id,
                recurrence=1,
                stratum=1,
                gap_time=o.gap_time,
                event=o.event,
                covariates=o.covariates + indicators,
            )
        )
    pooled = Dataset(tuple(remapped), stratum_labels=dict(ds.stratum_labels))
    return pooled, design_one_way(1)
