"""Replicated comparison experiments: generate, corrupt, correct with every method, score.

Each replicate draws from its own child of a ``SeedSequence``, so results do
not depend on the number of worker processes or their completion order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, NamedTuple

import numpy as np

from . import baseline as bl
from . import denoise as dn
from . import peakcluster as pc
from .core import AxisConfig, ContractError
from .em import EmConfig
from .metrics import cosine_similarity, fmi, nvi
from .simulate import (
    BaselineModel,
    ClusterScenario,
    NoiseModel,
    add_baseline,
    add_noise,
    sample_peaks,
    simulate_cluster_scenario,
    synthesize_imsc,
)

EXPERIMENTS = ("denoising", "baseline", "clustering", "clustering_noise")
DEFAULT_GRIDS = {
    "denoising": (800, 2500),
    "baseline": (1200, 2500),
    "clustering": (1200, 2500),
    "clustering_noise": (1200, 2500),
}


class ScoreRow(NamedTuple):
    replicate: int
    method: str
    score_name: str
    score: float


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    replicates: int = 100
    rows: int = 0  # 0 selects the experiment's default grid
    cols: int = 0
    peak_count: tuple[int, int] = (5, 10)
    epsilon: float = 0.001
    max_iterations: int = 1000
    rho: int = dn.DEFAULT_RHO
    uniform_range: str = "smoothed"
    gaussian_sigma: float = dn.DEFAULT_RHO / 2
    gaussian_window: int = 2 * dn.DEFAULT_RHO + 1
    sg_window: int = 2 * dn.DEFAULT_RHO + 1
    sg_order: int = 2
    fft_cutoff: float = 0.1
    dbscan_eps: float = 1.0
    dbscan_min_pts: int = 2
    jobs: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ContractError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.replicates < 1:
            raise ContractError("replicate count must be at least 1")
        if self.jobs < 1:
            raise ContractError("jobs must be at least 1")
        if not self.rows:
            self.rows = DEFAULT_GRIDS[self.experiment][0]
        if not self.cols:
            self.cols = DEFAULT_GRIDS[self.experiment][1]

    @property
    def axes(self) -> AxisConfig:
        return AxisConfig(self.rows, self.cols)

    @property
    def em_config(self) -> EmConfig:
        return EmConfig(self.epsilon, self.max_iterations)

    def to_dict(self) -> dict:
        return asdict(self)


def replicate_generators(seed: int, replicates: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(replicates)]


def _noisy_imsc(cfg: ExperimentConfig, rng: np.random.Generator):
    peaks = sample_peaks(rng, cfg.peak_count)
    clean = synthesize_imsc(peaks, cfg.axes)
    return peaks, clean, add_noise(clean, NoiseModel(), rng)


def denoising_replicate(cfg: ExperimentConfig, rng: np.random.Generator) -> list[tuple[str, str, float]]:
    _, clean, noisy = _noisy_imsc(cfg, rng)
    denoised, fit = dn.denoise_em(noisy, cfg.rho, cfg.em_config, cfg.uniform_range)
    results = {
        "em": denoised,
        "gaussian": dn.gaussian_smooth(noisy, cfg.gaussian_sigma, cfg.gaussian_window),
        "savitzky_golay": dn.savitzky_golay_smooth(noisy, cfg.sg_window, cfg.sg_order),
        "fft_lowpass": dn.fft_lowpass(noisy, cfg.fft_cutoff),
    }
    rows = [(m, "cosine", cosine_similarity(clean, out)) for m, out in results.items()]
    rows.append(("em", "iterations", float(fit.iterations)))
    rows.append(("em", "converged", float(fit.converged)))
    rows.append(("em", "omega_b", fit.params.omega_b))
    return rows


def baseline_replicate(cfg: ExperimentConfig, rng: np.random.Generator) -> list[tuple[str, str, float]]:
    peaks, clean, noisy = _noisy_imsc(cfg, rng)
    shifted, _, _ = add_baseline(noisy, peaks, BaselineModel(), rng)
    fits = bl.fit_chromatograms(shifted, cfg.em_config)
    results = {
        "em": bl.subtract_baseline(shifted, [f.b for f in fits]),
        "naive": bl.reference_baseline(shifted, "naive"),
        "median": bl.reference_baseline(shifted, "median"),
    }
    rows = [(m, "cosine", cosine_similarity(clean, out)) for m, out in results.items()]
    rows.append(("em", "iterations", float(np.median([f.iterations for f in fits]))))
    return rows


def _clustering_replicate(cfg: ExperimentConfig, rng: np.random.Generator, with_noise: bool):
    scenario = simulate_cluster_scenario(rng, with_noise=with_noise, scenario=ClusterScenario())
    truth = scenario.labels
    em_result, _ = pc.em_cluster(scenario.peaks, cfg.em_config)
    results = {
        "em": em_result,
        "kmeanspp": pc.kmeanspp_cluster(scenario.peaks, len(scenario.centroids), rng),
        "dbscan": pc.dbscan_cluster(scenario.peaks, cfg.dbscan_eps, cfg.dbscan_min_pts),
    }
    rows = []
    for method, clustering in results.items():
        rows.append((method, "fmi", fmi(truth, clustering)))
        rows.append((method, "nvi", nvi(truth, clustering)))
    rows.append(("em", "iterations", float(em_result.iterations)))
    return rows


def clustering_replicate(cfg, rng):
    return _clustering_replicate(cfg, rng, with_noise=False)


def clustering_noise_replicate(cfg, rng):
    return _clustering_replicate(cfg, rng, with_noise=True)


RUNNERS: dict[str, Callable] = {
    "denoising": denoising_replicate,
    "baseline": baseline_replicate,
    "clustering": clustering_replicate,
    "clustering_noise": clustering_noise_replicate,
}


def _run_one(args) -> list[ScoreRow]:
    cfg, index, rng = args
    return [ScoreRow(index, m, name, float(score)) for m, name, score in RUNNERS[cfg.experiment](cfg, rng)]


def run_experiment(cfg: ExperimentConfig) -> list[ScoreRow]:
    """All score rows, sorted by (replicate, method, score_name)."""
    tasks = [(cfg, i, rng) for i, rng in enumerate(replicate_generators(cfg.seed, cfg.replicates))]
    if cfg.jobs == 1:
        chunks = map(_run_one, tasks)
        rows = [row for chunk in chunks for row in chunk]
    else:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            rows = [row for chunk in pool.map(_run_one, tasks) for row in chunk]
    return sorted(rows, key=lambda r: (r.replicate, r.method, r.score_name))


def scores(rows, method: str, score_name: str) -> np.ndarray:
    return np.array([r.score for r in rows if r.method == method and r.score_name == score_name])


def summarize(rows) -> dict[tuple[str, str], tuple[float, float]]:
    """(method, score_name) -> (mean, sample standard deviation)."""
    keys = sorted({(r.method, r.score_name) for r in rows})
    out = {}
    for key in keys:
        values = scores(rows, *key)
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        out[key] = (float(np.mean(values)), std)
    return out


HISTOGRAM_BINS = 20


def histograms(rows, bins: int = HISTOGRAM_BINS) -> list[tuple[str, str, float, float, int]]:
    """Per (method, score) bin counts over a range shared by all methods of that score.

    Similarities and FMI use [0, 1] unless a value falls outside it.
    """
    out = []
    for name in sorted({r.score_name for r in rows}):
        if name in ("iterations", "converged", "omega_b"):
            continue
        values = np.array([r.score for r in rows if r.score_name == name])
        low = min(0.0, float(values.min()))
        high = max(1.0, float(values.max()))
        edges = np.linspace(low, high, bins + 1)
        for method in sorted({r.method for r in rows if r.score_name == name}):
            counts, _ = np.histogram(scores(rows, method, name), bins=edges)
            out.extend((method, name, float(a), float(b), int(c)) for a, b, c in zip(edges[:-1], edges[1:], counts))
    return out
