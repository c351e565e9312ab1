"""Ground-truth generators: peaks, IMSCs, device noise, RIP baselines and peak-location scenarios."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .core import AxisConfig, ContractError, Imsc, PeakDescriptors, PeakLocation, PeakParams

log = logging.getLogger(__name__)


class DomainError(ContractError):
    """Descriptors for which no shifted inverse Gaussian exists."""


# ---------------------------------------------------------------------------
# Shifted inverse Gaussian and its descriptors
# ---------------------------------------------------------------------------


def shifted_ig_pdf(x, mu, lam, o):
    """Inverse Gaussian density with mean ``mu`` and shape ``lam``, shifted right by ``o``.

    Zero for ``x <= o``.  Vectorised over ``x``.
    """
    if not (mu > 0 and lam > 0):
        raise ContractError(f"mu and lambda must be positive, got mu={mu}, lambda={lam}")
    x = np.asarray(x, dtype=np.float64)
    y = x - o
    out = np.zeros(np.shape(y))
    pos = y > 0
    yp = y[pos]
    out[pos] = np.sqrt(lam / (2.0 * np.pi * yp**3)) * np.exp(-lam * (yp - mu) ** 2 / (2.0 * mu * mu * yp))
    if np.ndim(x) == 0:
        return float(out)
    return out


def _mode_factor(q):
    # sqrt(1 + q^2) - q, written without cancellation
    return 1.0 / (math.sqrt(1.0 + q * q) + q)


def descriptors_from_params(mu: float, lam: float, o: float) -> tuple[float, float, float]:
    """(mean, standard deviation, mode) of the shifted inverse Gaussian."""
    if not (mu > 0 and lam > 0):
        raise ContractError(f"mu and lambda must be positive, got mu={mu}, lambda={lam}")
    q = 1.5 * mu / lam
    mean = mu + o
    std = math.sqrt(mu**3 / lam)
    mode = mu * _mode_factor(q) + o
    return mean, std, mode


def _gap_ratio(q: float) -> float:
    # (mean - mode) / std as a function of q = 3 mu / (2 lambda)
    h = q - q * q / (1.0 + math.sqrt(1.0 + q * q))  # 1 + q - sqrt(1 + q^2)
    return math.sqrt(1.5 / q) * h


#: Largest possible (mean - mode) / std of an inverse Gaussian, attained at q = 1.
MAX_GAP_RATIO = _gap_ratio(1.0)


def params_from_descriptors(mean: float, std: float, mode: float, skewed: bool = False) -> tuple[float, float, float]:
    """Recover ``(mu, lambda, o)`` from mean, standard deviation and mode.

    Apart from the boundary case ``lambda = 1.5 mu`` two inverse Gaussians
    share every feasible triple.  By default the broad branch
    ``lambda >= 1.5 mu`` is returned, which gives smooth, mildly tailing peaks;
    ``skewed=True`` selects ``lambda <= 1.5 mu`` instead.
    """
    if not std > 0:
        raise DomainError(f"standard deviation must be positive, got {std}")
    gap = mean - mode
    if not gap > 0:
        raise DomainError(f"mode {mode} must lie strictly below mean {mean}")
    ratio = gap / std
    if ratio > MAX_GAP_RATIO * (1.0 + 1e-12):
        raise DomainError(
            f"(mean - mode) / std = {ratio:.6g} exceeds {MAX_GAP_RATIO:.6g}; no inverse Gaussian has these descriptors"
        )
    if ratio >= MAX_GAP_RATIO:
        q = 1.0
    else:
        if skewed:
            bracket = (1.0, 1.0 + 6.0 / (ratio * ratio))
        else:
            bracket = (min(ratio * ratio / 6.0, 0.5), 1.0)
        q = brentq(lambda s: _gap_ratio(s) - ratio, *bracket, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    mu = std * math.sqrt(1.5 / q)
    lam = mu**3 / std**2
    return mu, lam, mean - mu


DESCRIPTOR_INTERVALS = {
    "mode_t": (0.551, 1.015),
    "std_t": (0.0046, 0.0174),
    "gap_t": (0.00058, 0.0029),
    "mode_r": (25.0, 250.0),
    "std_r": (4.0, 7.5),
    "gap_r": (0.5, 2.5),
    "volume": (1.45, 14.5),
}


def sample_peak_descriptors(rng: np.random.Generator, intervals: dict = DESCRIPTOR_INTERVALS) -> PeakDescriptors:
    """Draw the seven descriptors uniformly; each mean is drawn relative to its mode."""
    u = {k: rng.uniform(*intervals[k]) for k in ("mode_t", "std_t", "gap_t", "mode_r", "std_r", "gap_r", "volume")}
    return PeakDescriptors(
        mean_t=u["mode_t"] + u["gap_t"],
        std_t=u["std_t"],
        mode_t=u["mode_t"],
        mean_r=u["mode_r"] + u["gap_r"],
        std_r=u["std_r"],
        mode_r=u["mode_r"],
        volume=u["volume"],
    )


def peak_from_descriptors(d: PeakDescriptors) -> PeakParams:
    mu_t, lam_t, o_t = params_from_descriptors(d.mean_t, d.std_t, d.mode_t)
    mu_r, lam_r, o_r = params_from_descriptors(d.mean_r, d.std_r, d.mode_r)
    return PeakParams(mu_t, lam_t, o_t, mu_r, lam_r, o_r, d.volume)


def sample_peaks(
    rng: np.random.Generator,
    count: tuple[int, int] = (5, 10),
    intervals: dict = DESCRIPTOR_INTERVALS,
) -> list[PeakParams]:
    """Random number of peaks (inclusive range), each from fresh descriptors."""
    n = int(rng.integers(count[0], count[1] + 1))
    return [peak_from_descriptors(sample_peak_descriptors(rng, intervals)) for _ in range(n)]


# ---------------------------------------------------------------------------
# IMSC synthesis
# ---------------------------------------------------------------------------


def peak_matrix(peak: PeakParams, axes: AxisConfig) -> np.ndarray:
    g_t = shifted_ig_pdf(axes.rim, peak.mu_t, peak.lambda_t, peak.o_t)
    g_r = shifted_ig_pdf(axes.retention, peak.mu_r, peak.lambda_r, peak.o_r)
    return peak.volume * np.outer(g_r, g_t)


def synthesize_imsc(peaks, axes: AxisConfig) -> Imsc:
    values = np.zeros((axes.num_rows, axes.num_cols))
    for peak in peaks:
        values += peak_matrix(peak, axes)
    return Imsc(axes, values)


@dataclass(frozen=True)
class NoiseModel:
    mu: float = 0.8
    sigma: float = 2.0
    intensity: float = 1.0
    frequency_range: tuple[float, float] = (1000.0, 6000.0)

    def __post_init__(self):
        lo, hi = self.frequency_range
        if not self.sigma >= 0:
            raise ContractError("noise sigma must be non-negative")
        if not (0 < lo <= hi):
            raise ContractError(f"invalid frequency range {self.frequency_range}")


def sinusoid_matrix(axes: AxisConfig, frequencies: np.ndarray, intensity: float) -> np.ndarray:
    """``intensity * sin(U / (f_r * l^2) * T_t)`` for every row frequency ``f_r``."""
    factor = axes.voltage / (np.asarray(frequencies, dtype=np.float64) * axes.tube_length**2)
    return intensity * np.sin(np.outer(factor, axes.rim))


def add_noise(m: Imsc, model: NoiseModel, rng: np.random.Generator) -> Imsc:
    """Gaussian device noise plus a per-spectrum low-frequency oscillation."""
    axes = m.axes
    gaussian = rng.normal(model.mu, model.sigma, size=m.shape)
    frequencies = rng.uniform(*model.frequency_range, size=axes.num_rows)
    return m.with_values(m.values + gaussian + sinusoid_matrix(axes, frequencies, model.intensity))


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BaselineModel:
    mu_alpha: float = 0.174
    lambda_alpha: tuple[float, float] = (0.087, 0.127)
    o_alpha: float = 0.443
    mu_beta: float = 0.127
    lambda_beta: tuple[float, float] = (23.2, 29.0)
    o_beta: float = 0.353
    omega: tuple[float, float] = (0.6, 0.7)
    tau_mean: float = 60000.0
    tau_std: float = 600.0


@dataclass(frozen=True)
class BaselineCurve:
    """One drawn RIP baseline shape ``B(t)``, a two-component IG mixture density."""

    mu_alpha: float
    lambda_alpha: float
    o_alpha: float
    mu_beta: float
    lambda_beta: float
    o_beta: float
    omega: float

    def __call__(self, t):
        return self.omega * shifted_ig_pdf(t, self.mu_alpha, self.lambda_alpha, self.o_alpha) + (
            1.0 - self.omega
        ) * shifted_ig_pdf(t, self.mu_beta, self.lambda_beta, self.o_beta)


def draw_baseline_curve(model: BaselineModel, rng: np.random.Generator) -> BaselineCurve:
    return BaselineCurve(
        mu_alpha=model.mu_alpha,
        lambda_alpha=rng.uniform(*model.lambda_alpha),
        o_alpha=model.o_alpha,
        mu_beta=model.mu_beta,
        lambda_beta=rng.uniform(*model.lambda_beta),
        o_beta=model.o_beta,
        omega=rng.uniform(*model.omega),
    )


@dataclass
class BaselineDraw:
    curve: BaselineCurve
    tau: np.ndarray
    tau_prime: np.ndarray
    clamped_rows: int = 0


def peak_row_mass(peaks, axes: AxisConfig) -> np.ndarray:
    """Intensity consumed by the peaks in every spectrum (row sums of the clean IMSC)."""
    mass = np.zeros(axes.num_rows)
    for peak in peaks:
        g_t = shifted_ig_pdf(axes.rim, peak.mu_t, peak.lambda_t, peak.o_t)
        g_r = shifted_ig_pdf(axes.retention, peak.mu_r, peak.lambda_r, peak.o_r)
        mass += peak.volume * g_r * g_t.sum()
    return mass


def add_baseline(
    m: Imsc, peaks, model: BaselineModel, rng: np.random.Generator
) -> tuple[Imsc, np.ndarray, BaselineDraw]:
    """Add ``tau'_r * B(t)`` to every spectrum.

    ``B`` is discretised on the RIM grid and normalised to unit sum, so a
    peak-free spectrum of the result sums to its drawn total ``tau_r``.
    Returns the new IMSC, the added baseline matrix and the draws.
    """
    axes = m.axes
    tau = rng.normal(model.tau_mean, model.tau_std, size=axes.num_rows)
    tau_prime = tau - peak_row_mass(peaks, axes)
    clamped = int(np.sum(tau_prime < 0))
    if clamped:
        log.warning("clamped %d negative spectrum totals to 0", clamped)
        tau_prime = np.maximum(tau_prime, 0.0)
    curve = draw_baseline_curve(model, rng)
    shape = curve(axes.rim)
    total = shape.sum()
    if not total > 0:
        raise ContractError("baseline curve vanishes on the RIM grid")
    baseline = np.outer(tau_prime, shape / total)
    return m.with_values(m.values + baseline), baseline, BaselineDraw(curve, tau, tau_prime, clamped)


# ---------------------------------------------------------------------------
# Peak-location scenarios for clustering
# ---------------------------------------------------------------------------

SHAPES = ("normal", "exponential", "uniform")


@dataclass(frozen=True)
class ClusterScenario:
    """Boxes are ((rim_lo, retention_lo), (rim_hi, retention_hi)) in (Vs/cm^2, s)."""

    measurement: tuple = ((0.0, 0.0), (1.45, 600.0))
    dense: tuple = ((0.5, 4.0), (0.7, 60.0))
    sparse: tuple = ((0.5, 4.0), (1.2, 450.0))
    n_dense: int = 30
    n_sparse: int = 20
    members: tuple[int, int] = (3, 10)
    n_noise: int = 200
    normal_sigma_t: float = 0.002
    exponential_scale_t: float = 1.45 / 2500
    uniform_radius_t: float = 0.006


@dataclass
class LabeledPeakSet:
    peaks: list[PeakLocation]
    centroids: np.ndarray  # (rim, retention) per cluster
    shapes: list[str]

    @property
    def labels(self) -> np.ndarray:
        return np.array([p.truth_label for p in self.peaks])


def _in_box(t, r, box) -> bool:
    (t0, r0), (t1, r1) = box
    return t0 <= t <= t1 and r0 <= r <= r1


def _draw_member(rng, shape, mu_t, mu_r, sc: ClusterScenario) -> tuple[float, float]:
    if shape == "normal":
        return rng.normal(mu_t, sc.normal_sigma_t), rng.normal(mu_r, mu_r * 0.002 + 0.2)
    if shape == "exponential":
        return rng.laplace(mu_t, sc.exponential_scale_t), rng.laplace(mu_r, mu_r * 0.002 + 0.2)
    # uniform on the ellipse: radius sqrt(U) for area uniformity
    rho_t, rho_r = sc.uniform_radius_t, mu_r * 0.02 + 1.0
    angle = rng.uniform(0.0, 2.0 * np.pi)
    radius = math.sqrt(rng.uniform())
    return mu_t + rho_t * radius * math.cos(angle), mu_r + rho_r * radius * math.sin(angle)


def simulate_cluster_scenario(
    rng: np.random.Generator, with_noise: bool = False, scenario: ClusterScenario = ClusterScenario()
) -> LabeledPeakSet:
    """Clustered peak locations with their true partition.

    Every cluster draws its shape and member count uniformly; members falling
    outside the measurement area are redrawn.  With ``with_noise`` the
    scenario's noise peaks are spread uniformly over the measurement area, each
    in its own partition block.
    """
    sc = scenario
    centroids = []
    for box, count in ((sc.dense, sc.n_dense), (sc.sparse, sc.n_sparse)):
        (t0, r0), (t1, r1) = box
        for _ in range(count):
            centroids.append((rng.uniform(t0, t1), rng.uniform(r0, r1)))

    peaks: list[PeakLocation] = []
    shapes = []
    next_id = 0
    for label, (mu_t, mu_r) in enumerate(centroids):
        shape = SHAPES[int(rng.integers(len(SHAPES)))]
        shapes.append(shape)
        size = int(rng.integers(sc.members[0], sc.members[1] + 1))
        for member in range(size):
            while True:
                t, r = _draw_member(rng, shape, mu_t, mu_r, sc)
                if _in_box(t, r, sc.measurement):
                    break
            peaks.append(PeakLocation(f"m{member:03d}", next_id, float(r), float(t), label))
            next_id += 1

    if with_noise:
        (t0, r0), (t1, r1) = sc.measurement
        label = len(centroids)
        for k in range(sc.n_noise):
            t, r = rng.uniform(t0, t1), rng.uniform(r0, r1)
            peaks.append(PeakLocation(f"noise{k:03d}", next_id, float(r), float(t), label))
            next_id += 1
            label += 1

    return LabeledPeakSet(peaks, np.array(centroids), shapes)
