"""Per-chromatogram EM baseline correction and the naive/median reference corrections."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ContractError, Imsc
from .em import EmConfig, Gaussian, MixtureState, Uniform, run_em

SIGMA_FLOOR = 1e-6


@dataclass(frozen=True)
class BaselineFit:
    mu: float
    sigma: float
    omega_b: float
    omega_s: float
    b: float
    iterations: int = 0
    converged: bool = True


def histogram_mode(values) -> float:
    """Centre of the most populated unit-width bin ``[k - 0.5, k + 0.5)``.

    Ties go to the smaller centre.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ContractError("histogram mode of an empty chromatogram")
    centres, counts = np.unique(np.floor(values + 0.5), return_counts=True)
    return float(centres[np.argmax(counts)])


def baseline_m_step(x: np.ndarray, w_b: np.ndarray) -> tuple[float, float]:
    """Membership-weighted mean and standard deviation of the baseline Gaussian."""
    total = w_b.sum()
    mu = float(np.dot(w_b, x) / total)
    var = float(np.dot(w_b, (mu - x) ** 2) / total)
    return mu, max(math.sqrt(var), SIGMA_FLOOR)


def fit_baseline(chromatogram, config: EmConfig = EmConfig()) -> BaselineFit:
    """Fit Gaussian baseline + uniform signal to one chromatogram."""
    x = np.asarray(chromatogram, dtype=np.float64).ravel()
    if x.size < 2:
        raise ContractError("a chromatogram needs at least two points")
    low, high = float(x.min()), float(x.max())
    if high == low:
        return BaselineFit(low, SIGMA_FLOOR, 1.0, 0.0, low + 2.0 * SIGMA_FLOOR, 0, True)

    state = MixtureState(
        components=[Gaussian(), Uniform(low, high)],
        params=[{"mu": histogram_mode(x), "sigma": 1.0}, {}],
        weights=np.array([0.9, 0.1]),
    )

    def m_step(data, st: MixtureState) -> MixtureState:
        w_b = st.memberships[:, 0]
        if w_b.sum() > 0:
            mu, sigma = baseline_m_step(data, w_b)
            st.params = [{"mu": mu, "sigma": sigma}, {}]
        return st

    result = run_em(x, state, m_step, config)
    st = result.state
    mu, sigma = st.params[0]["mu"], st.params[0]["sigma"]
    return BaselineFit(
        mu=mu,
        sigma=sigma,
        omega_b=float(st.weights[0]),
        omega_s=float(st.weights[1]),
        b=mu + 2.0 * sigma,
        iterations=result.iterations,
        converged=result.converged,
    )


def fit_chromatograms(s: Imsc, config: EmConfig = EmConfig()) -> list[BaselineFit]:
    """One independent fit per column."""
    return [fit_baseline(s.values[:, t], config) for t in range(s.shape[1])]


def subtract_baseline(s: Imsc, levels) -> Imsc:
    """``max(S[r, t] - levels[t], 0)``."""
    levels = np.asarray(levels, dtype=np.float64)
    if levels.shape != (s.shape[1],):
        raise ContractError(f"need one baseline level per column, got {levels.shape}")
    return s.with_values(np.maximum(s.values - levels[None, :], 0.0))


def correct_baseline_em(s: Imsc, config: EmConfig = EmConfig()) -> Imsc:
    fits = fit_chromatograms(s, config)
    return subtract_baseline(s, [f.b for f in fits])


def reference_baseline(s: Imsc, method: str) -> Imsc:
    """``naive`` subtracts the first spectrum, ``median`` each chromatogram's median."""
    if method == "naive":
        if s.shape[0] < 2:
            raise ContractError("naive baseline correction needs at least two spectra")
        return subtract_baseline(s, s.values[0])
    if method == "median":
        return subtract_baseline(s, np.median(s.values, axis=0))
    raise ContractError(f"unknown baseline method {method!r}")
