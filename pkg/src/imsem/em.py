"""Generic EM machinery for mixtures whose components come from different families.

A mixture is described by a :class:`MixtureState`: one :class:`ComponentDensity`
per component, the component parameters as dicts of named floats, the mixture
weights and (after an E-step) the n x C membership matrix.  Model-specific code
supplies only the M-step; :func:`run_em` drives the loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .core import ContractError, ImsemError

_LOG_2PI = math.log(2.0 * math.pi)


class EmError(ImsemError, ArithmeticError):
    pass


class DegenerateDatumError(EmError):
    """Every component density vanishes at some datum."""

    def __init__(self, index: int):
        super().__init__(f"all component densities vanish at datum {index}")
        self.index = index


class NumericError(EmError):
    pass


# ---------------------------------------------------------------------------
# Component densities
# ---------------------------------------------------------------------------


class ComponentDensity:
    """Evaluator of one mixture component ``f_c(x | theta_c)``.

    Subclasses implement :meth:`logpdf`; ``param_names`` fixes the order in
    which parameters enter the convergence test.
    """

    param_names: tuple[str, ...] = ()

    def logpdf(self, x: np.ndarray, **theta: float) -> np.ndarray:
        raise NotImplementedError

    def pdf(self, x, **theta) -> np.ndarray:
        return np.exp(self.logpdf(np.asarray(x, dtype=np.float64), **theta))


class Gaussian(ComponentDensity):
    param_names = ("mu", "sigma")

    def logpdf(self, x, mu, sigma):
        z = (x - mu) / sigma
        return -0.5 * z * z - math.log(sigma) - 0.5 * _LOG_2PI


class InverseGaussian(ComponentDensity):
    """Inverse Gaussian with mean ``mu`` and shape ``lam``; zero density for x <= 0."""

    param_names = ("mu", "lam")

    def logpdf(self, x, mu, lam):
        x = np.asarray(x, dtype=np.float64)
        out = np.full(x.shape, -np.inf)
        pos = x > 0
        xp = x[pos]
        out[pos] = 0.5 * (math.log(lam) - _LOG_2PI - 3.0 * np.log(xp)) - lam * (xp - mu) ** 2 / (
            2.0 * mu * mu * xp
        )
        return out


class Uniform(ComponentDensity):
    """Uniform density on the closed interval ``[low, high]`` (no free parameters)."""

    def __init__(self, low: float, high: float):
        if not high > low:
            raise ContractError(f"uniform range must be non-empty, got [{low}, {high}]")
        self.low = float(low)
        self.high = float(high)

    def logpdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        inside = (x >= self.low) & (x <= self.high)
        return np.where(inside, -math.log(self.high - self.low), -np.inf)


# ---------------------------------------------------------------------------
# State and configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmConfig:
    epsilon: float = 0.001
    max_iterations: int = 1000

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ContractError("epsilon must be positive")
        if self.max_iterations < 1:
            raise ContractError("max_iterations must be at least 1")


@dataclass
class MixtureState:
    components: list[ComponentDensity]
    params: list[dict[str, float]]
    weights: np.ndarray
    memberships: Optional[np.ndarray] = None
    log_likelihood: Optional[float] = None
    ids: Optional[list] = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if not (len(self.components) == len(self.params) == len(self.weights)):
            raise ContractError("components, params and weights must have equal length")
        if len(self.components) == 0:
            raise ContractError("a mixture needs at least one component")

    @property
    def num_components(self) -> int:
        return len(self.components)

    def parameter_vector(self) -> np.ndarray:
        """All component parameters followed by the weights, as one flat vector."""
        values = [p[name] for comp, p in zip(self.components, self.params) for name in comp.param_names]
        return np.concatenate([np.asarray(values, dtype=np.float64), self.weights])


@dataclass
class EmResult:
    state: MixtureState
    iterations: int
    converged: bool
    log_likelihood: list[float] = field(default_factory=list)


# ---------------------------------------------------------------------------
# E-step, convergence, loop
# ---------------------------------------------------------------------------


def log_density_matrix(data: np.ndarray, state: MixtureState) -> np.ndarray:
    """n x C matrix of ``log(omega_c) + log f_c(x_i)``."""
    with np.errstate(divide="ignore"):
        log_w = np.log(state.weights)
    cols = [
        lw + comp.logpdf(data, **theta)
        for lw, comp, theta in zip(log_w, state.components, state.params)
    ]
    return np.column_stack(cols)


def e_step(data, state: MixtureState) -> MixtureState:
    """Memberships ``W`` and new weights ``omega*``; component parameters untouched.

    Ratios are formed in log space with max subtraction so that tiny densities
    do not underflow to 0/0.
    """
    data = np.asarray(data, dtype=np.float64)
    logp = log_density_matrix(data, state)
    if np.isnan(logp).any():
        i = int(np.argwhere(np.isnan(logp))[0, 0])
        raise NumericError(f"NaN density at datum {i}")
    top = logp.max(axis=1)
    if np.isinf(top).any():
        i = int(np.argwhere(np.isinf(top))[0, 0])
        if top[i] > 0:
            raise NumericError(f"infinite density at datum {i}")
        raise DegenerateDatumError(i)
    w = np.exp(logp - top[:, None])
    total = w.sum(axis=1)
    w /= total[:, None]
    weights = w.mean(axis=0)
    weights /= weights.sum()
    loglik = float(np.sum(top + np.log(total)))
    return replace(state, memberships=w, weights=weights, log_likelihood=loglik)


def relative_change(old, new) -> np.ndarray:
    """Elementwise ``|new - old| / max(|new|, |old|)``, defined as 0 where both are 0."""
    old = np.asarray(old, dtype=np.float64)
    new = np.asarray(new, dtype=np.float64)
    if old.shape != new.shape:
        raise ContractError(f"parameter shapes differ: {old.shape} vs {new.shape}")
    scale = np.maximum(np.abs(old), np.abs(new))
    diff = np.abs(new - old)
    with np.errstate(invalid="ignore", divide="ignore"):
        kappa = np.where(scale == 0, 0.0, diff / np.where(scale == 0, 1.0, scale))
    return kappa


def has_converged(old, new, epsilon: float = 0.001) -> bool:
    kappa = relative_change(old, new)
    return bool(np.all(kappa < epsilon))


MStep = Callable[[np.ndarray, MixtureState], MixtureState]
Hook = Callable[[np.ndarray, MixtureState, int], MixtureState]


def run_em(
    data,
    state: MixtureState,
    m_step: MStep,
    config: EmConfig = EmConfig(),
    hook: Optional[Hook] = None,
    min_iterations: int = 1,
) -> EmResult:
    """Alternate E-step, optional hook and M-step until all parameters settle.

    ``hook`` runs between E- and M-step and may change the number of
    components; an iteration in which that happens never counts as converged.
    Convergence is not declared before ``min_iterations`` iterations.
    Hitting ``config.max_iterations`` is reported through ``converged=False``.
    """
    data = np.asarray(data, dtype=np.float64)
    trace: list[float] = []
    converged = False
    iteration = 0
    for iteration in range(1, config.max_iterations + 1):
        previous = state
        state = e_step(data, state)
        trace.append(state.log_likelihood)
        if hook is not None:
            state = hook(data, state, iteration)
        state = m_step(data, state)
        if (
            iteration >= min_iterations
            and state.num_components == previous.num_components
            and has_converged(previous.parameter_vector(), state.parameter_vector(), config.epsilon)
        ):
            converged = True
            break
    return EmResult(state, iteration, converged, trace)


def mixture_log_likelihood(data, state: MixtureState) -> float:
    logp = log_density_matrix(np.asarray(data, dtype=np.float64), state)
    top = logp.max(axis=1)
    return float(np.sum(top + np.log(np.exp(logp - top[:, None]).sum(axis=1))))
