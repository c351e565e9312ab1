"""EM denoising on locally averaged IMSCs, and the reference smoothers it is compared with.

The smoothed matrix ``A`` is modelled as a mixture of Gaussian noise,
inverse-Gaussian signal and a uniform background.  The denoised IMSC keeps
each original intensity in proportion to its non-noise membership.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage, signal

from .core import ContractError, Imsc, ImsemError
from .em import EmConfig, Gaussian, InverseGaussian, MixtureState, Uniform, run_em

#: Minimum RIM distance separating two peaks (Vs/cm^2); motivates the default window margin.
MIN_PEAK_DISTANCE = 0.003
DEFAULT_RHO = 4
SIGMA_FLOOR = 1e-6
MARGIN_FRACTION = 0.1


class InitError(ImsemError, ValueError):
    pass


class ModelError(ImsemError, ValueError):
    pass


@dataclass(frozen=True)
class DenoiseParams:
    mu_n: float
    sigma_n: float
    mu_s: float
    lambda_s: float
    omega_n: float
    omega_s: float
    omega_b: float
    rho: int = DEFAULT_RHO


@dataclass
class DenoiseFit:
    params: DenoiseParams
    memberships: np.ndarray  # rows x cols x 3, components (noise, signal, background)
    iterations: int
    converged: bool
    log_likelihood: list[float]


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, Imsc) else np.asarray(x, dtype=np.float64)


def local_average(s, rho: int = DEFAULT_RHO):
    """Mean over the ``(2 rho + 1)^2`` window around every cell.

    Near the border only the existing entries are averaged.
    """
    if rho < 0:
        raise ContractError(f"rho must be non-negative, got {rho}")
    values = _values(s)
    size = 2 * int(rho) + 1
    total = ndimage.uniform_filter(values, size=size, mode="constant", cval=0.0)
    count = ndimage.uniform_filter(np.ones_like(values), size=size, mode="constant", cval=0.0)
    averaged = total / count
    return s.with_values(averaged) if isinstance(s, Imsc) else averaged


def noise_margins(values: np.ndarray) -> np.ndarray:
    """First and last 10% of the cells of every spectrum (at least one column each side)."""
    k = max(1, int(math.floor(MARGIN_FRACTION * values.shape[1])))
    return np.concatenate([values[:, :k].ravel(), values[:, -k:].ravel()])


def init_denoise(a, rho: int = DEFAULT_RHO) -> DenoiseParams:
    a = _values(a)
    if a.size == 0:
        raise ContractError("cannot denoise an empty matrix")
    margins = noise_margins(a)
    mu_n = float(np.mean(margins))
    sigma_n = max(float(np.std(margins)), SIGMA_FLOOR)
    threshold = mu_n + 3.0 * sigma_n
    omega_n = float(np.count_nonzero(a <= threshold)) / a.size
    signal_cells = a[a > threshold]
    if signal_cells.size == 0:
        raise InitError("no signal-like cells above the initial noise level")
    mu_s = float(np.mean(signal_cells))
    spread = float(np.sum(1.0 / signal_cells - 1.0 / mu_s))
    # weighted-MLE form: count over the sum, as in the M-step
    lambda_s = signal_cells.size / spread if spread > 0 else 1e12 * mu_s
    return DenoiseParams(
        mu_n=mu_n,
        sigma_n=sigma_n,
        mu_s=mu_s,
        lambda_s=lambda_s,
        omega_n=omega_n,
        omega_s=(1.0 - omega_n) * 0.999,
        omega_b=(1.0 - omega_n) * 0.001,
        rho=rho,
    )


def denoise_m_step(x: np.ndarray, w: np.ndarray, previous: Optional[dict] = None) -> dict:
    """Weighted ML estimates of the noise Gaussian and the signal inverse Gaussian.

    ``w`` holds the noise and signal membership columns.
    """
    w_n, w_s = w[:, 0], w[:, 1]
    sw_n = w_n.sum()
    sw_s = w_s.sum()
    out = dict(previous or {})
    if sw_n > 0:
        mu_n = float(np.dot(w_n, x) / sw_n)
        var_n = float(np.dot(w_n, (x - mu_n) ** 2) / sw_n)
        out["mu_n"], out["sigma_n"] = mu_n, max(math.sqrt(var_n), SIGMA_FLOOR)
    if sw_s > 0:
        mu_s = float(np.dot(w_s, x) / sw_s)
        pos = x > 0
        inv = np.zeros_like(x)
        inv[pos] = 1.0 / x[pos]
        spread = float(np.dot(w_s, inv) - sw_s / mu_s)
        out["mu_s"] = mu_s
        if spread > 0:
            out["lambda_s"] = float(sw_s / spread)
    return out


def fit_denoise(
    a,
    init: DenoiseParams,
    config: EmConfig = EmConfig(),
    uniform_range: Optional[tuple[float, float]] = None,
) -> DenoiseFit:
    """Run EM for the noise/signal/background mixture on the smoothed matrix.

    The background is uniform over ``uniform_range``, by default the value
    range of ``a`` itself.
    """
    values = _values(a)
    x = values.ravel()
    if not np.any(x > 0):
        raise ModelError("no positive intensities; the signal component cannot be evaluated")
    low, high = uniform_range if uniform_range is not None else (float(x.min()), float(x.max()))
    low, high = min(low, float(x.min())), max(high, float(x.max()))
    components = [Gaussian(), InverseGaussian(), Uniform(low, high)]
    state = MixtureState(
        components=components,
        params=[
            {"mu": init.mu_n, "sigma": init.sigma_n},
            {"mu": init.mu_s, "lam": init.lambda_s},
            {},
        ],
        weights=np.array([init.omega_n, init.omega_s, init.omega_b]),
    )

    def m_step(data, st: MixtureState) -> MixtureState:
        prev = {
            "mu_n": st.params[0]["mu"],
            "sigma_n": st.params[0]["sigma"],
            "mu_s": st.params[1]["mu"],
            "lambda_s": st.params[1]["lam"],
        }
        new = denoise_m_step(data, st.memberships, prev)
        st.params = [
            {"mu": new["mu_n"], "sigma": new["sigma_n"]},
            {"mu": new["mu_s"], "lam": new["lambda_s"]},
            {},
        ]
        return st

    result = run_em(x, state, m_step, config)
    st = result.state
    params = DenoiseParams(
        mu_n=st.params[0]["mu"],
        sigma_n=st.params[0]["sigma"],
        mu_s=st.params[1]["mu"],
        lambda_s=st.params[1]["lam"],
        omega_n=float(st.weights[0]),
        omega_s=float(st.weights[1]),
        omega_b=float(st.weights[2]),
        rho=init.rho,
    )
    memberships = st.memberships.reshape(values.shape + (3,))
    return DenoiseFit(params, memberships, result.iterations, result.converged, result.log_likelihood)


def apply_noise_memberships(s, noise_membership: np.ndarray):
    """``S+ = S * (1 - W_N)`` elementwise."""
    values = _values(s)
    out = values * (1.0 - noise_membership)
    return s.with_values(out) if isinstance(s, Imsc) else out


def denoise_em(
    s: Imsc,
    rho: int = DEFAULT_RHO,
    config: EmConfig = EmConfig(),
    uniform_range: str = "smoothed",
) -> tuple[Imsc, DenoiseFit]:
    """Full EM denoising: smooth, initialise, fit, and reweight the original IMSC.

    ``uniform_range`` is ``"smoothed"`` (background spans the smoothed matrix)
    or ``"raw"`` (it spans the unsmoothed input).
    """
    if s.values.size == 0:
        raise ContractError("cannot denoise an empty matrix")
    a = local_average(s, rho)
    init = init_denoise(a, rho)
    if uniform_range == "raw":
        bounds = (float(s.values.min()), float(s.values.max()))
    elif uniform_range == "smoothed":
        bounds = None
    else:
        raise ContractError(f"uniform_range must be 'smoothed' or 'raw', got {uniform_range!r}")
    fit = fit_denoise(a, init, config, bounds)
    return apply_noise_memberships(s, fit.memberships[..., 0]), fit


# ---------------------------------------------------------------------------
# Reference smoothers
# ---------------------------------------------------------------------------


def _check_window(values: np.ndarray, window: int) -> None:
    if window < 1 or window % 2 == 0:
        raise ContractError(f"window length must be odd and positive, got {window}")
    if window > min(values.shape):
        raise ContractError(f"window {window} larger than matrix {values.shape}")


def gaussian_smooth(s, sigma: float = DEFAULT_RHO / 2, window: int = 2 * DEFAULT_RHO + 1):
    """Separable Gaussian filter truncated to a ``window`` x ``window`` support."""
    values = _values(s)
    _check_window(values, window)
    if not sigma > 0:
        raise ContractError("sigma must be positive")
    out = ndimage.gaussian_filter(values, sigma=sigma, radius=window // 2, mode="nearest")
    return s.with_values(out) if isinstance(s, Imsc) else out


def savitzky_golay_smooth(s, window: int = 2 * DEFAULT_RHO + 1, order: int = 2):
    """Savitzky-Golay filter applied along retention time, then along RIM."""
    values = _values(s)
    _check_window(values, window)
    if not 0 <= order < window:
        raise ContractError(f"polynomial order must be in [0, window), got {order}")
    out = signal.savgol_filter(values, window, order, axis=0, mode="interp")
    out = signal.savgol_filter(out, window, order, axis=1, mode="interp")
    return s.with_values(out) if isinstance(s, Imsc) else out


def fft_lowpass(s, cutoff: float = 0.1):
    """Zero all 2D Fourier coefficients outside an ellipse of ``cutoff`` times Nyquist per axis."""
    values = _values(s)
    if not 0 < cutoff <= 1:
        raise ContractError(f"cutoff must be in (0, 1], got {cutoff}")
    spectrum = np.fft.fft2(values)
    fr = np.fft.fftfreq(values.shape[0]) / 0.5
    ft = np.fft.fftfreq(values.shape[1]) / 0.5
    keep = (fr[:, None] ** 2 + ft[None, :] ** 2) <= cutoff**2
    out = np.fft.ifft2(np.where(keep, spectrum, 0.0)).real
    return s.with_values(out) if isinstance(s, Imsc) else out


REFERENCE_METHODS = {
    "gaussian": gaussian_smooth,
    "savitzky_golay": savitzky_golay_smooth,
    "fft_lowpass": fft_lowpass,
}


def reference_smooth(s, method: str, **params):
    try:
        fn = REFERENCE_METHODS[method]
    except KeyError:
        raise ContractError(f"unknown smoothing method {method!r}") from None
    return fn(s, **params)
