"""Clustering of peak locations across measurements.

:func:`em_cluster` starts with one 2D Gaussian per peak and merges clusters
whose centres come within the minimum peak distance.  K-means++ and DBSCAN
are provided as baselines; both work in a scaled space where one unit is
roughly one merge tolerance.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .core import ClusterParams, Clustering, ContractError, PeakLocation, peak_coordinates
from .em import ComponentDensity, EmConfig, MixtureState, run_em

RIM_TOLERANCE = 0.003  # Vs/cm^2
RETENTION_REL_TOLERANCE = 0.001
RETENTION_ABS_TOLERANCE = 3.0  # s
_LOG_2PI = math.log(2.0 * math.pi)


def sigma_r_floor(mu_r):
    return (0.1 * mu_r + 3.0) / 3.0


SIGMA_T_FLOOR = RIM_TOLERANCE


class Gaussian2D(ComponentDensity):
    """Axis-aligned 2D Gaussian over ``x[:, 0]`` = retention, ``x[:, 1]`` = RIM."""

    param_names = ("mu_r", "sigma_r", "mu_t", "sigma_t")

    def logpdf(self, x, mu_r, sigma_r, mu_t, sigma_t):
        zr = (x[:, 0] - mu_r) / sigma_r
        zt = (x[:, 1] - mu_t) / sigma_t
        return -0.5 * (zr * zr + zt * zt) - math.log(sigma_r * sigma_t) - _LOG_2PI


_GAUSSIAN_2D = Gaussian2D()


@dataclass(frozen=True)
class MergeEvent:
    iteration: int
    absorbed: int
    survivor: int


@dataclass
class MergeLog:
    events: list[MergeEvent] = field(default_factory=list)

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def groups(self, n: int) -> dict[int, list[int]]:
        """Replay the merges over singletons ``0..n-1``; maps surviving id to its peaks."""
        members = {i: [i] for i in range(n)}
        for ev in self.events:
            members[ev.survivor].extend(members.pop(ev.absorbed))
        return {k: sorted(v) for k, v in members.items()}


def centers_close(mu_r_j, mu_t_j, mu_r_k, mu_t_k) -> bool:
    return abs(mu_t_j - mu_t_k) < RIM_TOLERANCE and abs(mu_r_j - mu_r_k) < (
        RETENTION_REL_TOLERANCE * max(mu_r_j, mu_r_k) + RETENTION_ABS_TOLERANCE
    )


def _close_matrix(mu_r: np.ndarray, mu_t: np.ndarray) -> np.ndarray:
    dt = np.abs(mu_t[:, None] - mu_t[None, :])
    dr = np.abs(mu_r[:, None] - mu_r[None, :])
    limit = RETENTION_REL_TOLERANCE * np.maximum(mu_r[:, None], mu_r[None, :]) + RETENTION_ABS_TOLERANCE
    return (dt < RIM_TOLERANCE) & (dr < limit)


def merge_clusters(state: MixtureState, iteration: int, log: MergeLog) -> MixtureState:
    """One merge scan over all pairs ``j < k`` in index order.

    Merged clusters sum their weights and membership columns and keep the
    location of the heavier one (the lower index on ties).
    """
    mu_r = np.array([p["mu_r"] for p in state.params])
    mu_t = np.array([p["mu_t"] for p in state.params])
    close = _close_matrix(mu_r, mu_t)
    weights = state.weights.copy()
    w = state.memberships.copy()
    alive = np.ones(len(weights), dtype=bool)
    merged = False
    for j in range(len(weights)):
        if not alive[j]:
            continue
        for k in np.flatnonzero(close[j, j + 1 :]) + j + 1:
            if not alive[k]:
                continue
            survivor, absorbed = (j, k) if weights[j] >= weights[k] else (k, j)
            weights[survivor] += weights[absorbed]
            w[:, survivor] += w[:, absorbed]
            alive[absorbed] = False
            log.events.append(MergeEvent(iteration, state.ids[absorbed], state.ids[survivor]))
            merged = True
            if absorbed == j:
                break
    if not merged:
        return state
    keep = np.flatnonzero(alive)
    return replace(
        state,
        components=[state.components[i] for i in keep],
        params=[state.params[i] for i in keep],
        weights=weights[keep],
        memberships=w[:, keep],
        ids=[state.ids[i] for i in keep],
    )


def cluster_m_step(x: np.ndarray, w: np.ndarray, previous: Sequence[dict]) -> list[dict]:
    """Weighted 2D Gaussian ML estimates with the minimum spreads enforced."""
    totals = w.sum(axis=0)
    safe = np.where(totals > 0, totals, 1.0)
    mu = (w.T @ x) / safe[:, None]
    var_r = np.einsum("ij,ij->j", w, (x[:, 0:1] - mu[:, 0]) ** 2) / safe
    var_t = np.einsum("ij,ij->j", w, (x[:, 1:2] - mu[:, 1]) ** 2) / safe
    out = []
    for j, prev in enumerate(previous):
        if totals[j] <= 0:
            out.append(dict(prev))
            continue
        mu_r, mu_t = float(mu[j, 0]), float(mu[j, 1])
        out.append(
            {
                "mu_r": mu_r,
                "sigma_r": max(math.sqrt(var_r[j]), sigma_r_floor(mu_r)),
                "mu_t": mu_t,
                "sigma_t": max(math.sqrt(var_t[j]), SIGMA_T_FLOOR),
            }
        )
    return out


def em_cluster(
    peaks: Sequence[PeakLocation],
    config: EmConfig = EmConfig(),
    on_iteration: Optional[Callable[[MixtureState], None]] = None,
) -> tuple[Clustering, MergeLog]:
    """EM clustering with dynamic merging, starting from one cluster per peak.

    Merging starts in the second iteration.  The loop ends once an iteration
    performs no merge and all parameters have settled.  The hard assignment of
    a peak is the surviving cluster its singleton was merged into.
    ``on_iteration`` sees the state after every M-step.
    """
    if len(peaks) == 0:
        raise ContractError("cannot cluster an empty peak list")
    x = peak_coordinates(peaks)
    n = len(x)
    state = MixtureState(
        components=[_GAUSSIAN_2D] * n,
        params=[
            {"mu_r": r, "sigma_r": sigma_r_floor(r), "mu_t": t, "sigma_t": SIGMA_T_FLOOR}
            for r, t in x.tolist()
        ],
        weights=np.full(n, 1.0 / n),
        ids=list(range(n)),
    )
    log = MergeLog()

    def hook(data, st, iteration):
        if iteration < 2:
            return st
        return merge_clusters(st, iteration, log)

    def m_step(data, st):
        params = cluster_m_step(data, st.memberships, st.params)
        st = replace(st, params=params)
        if on_iteration is not None:
            on_iteration(st)
        return st

    result = run_em(x, state, m_step, config, hook=hook, min_iterations=2)
    st = result.state
    groups = log.groups(n)
    assignments = np.empty(n, dtype=np.int64)
    for cid, members in groups.items():
        assignments[members] = cid
    clusters = [
        ClusterParams(cid, float(wt), p["mu_r"], p["sigma_r"], p["mu_t"], p["sigma_t"])
        for cid, wt, p in zip(st.ids, st.weights, st.params)
    ]
    clustering = Clustering(
        assignments, clusters, st.memberships, iterations=result.iterations, converged=result.converged
    )
    return clustering, log


# ---------------------------------------------------------------------------
# Baselines in scaled coordinates
# ---------------------------------------------------------------------------


def scale_coordinates(x: np.ndarray) -> np.ndarray:
    """Map (retention, RIM) to (r / (0.001 r + 3), t / 0.003)."""
    r, t = x[:, 0], x[:, 1]
    return np.column_stack([r / (RETENTION_REL_TOLERANCE * r + RETENTION_ABS_TOLERANCE), t / RIM_TOLERANCE])


def clustering_from_labels(x: np.ndarray, labels: np.ndarray, ids: Optional[Sequence[int]] = None) -> Clustering:
    """Hard clustering with per-cluster weights, means and (floored) spreads."""
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    if ids is None:
        ids = np.unique(labels).tolist()
    clusters = []
    for cid in ids:
        pts = x[labels == cid]
        if len(pts) == 0:
            clusters.append(ClusterParams(int(cid), 0.0, math.nan, math.nan, math.nan, math.nan))
            continue
        mu_r, mu_t = pts.mean(axis=0)
        sd_r, sd_t = pts.std(axis=0)
        clusters.append(
            ClusterParams(
                int(cid),
                len(pts) / n,
                float(mu_r),
                max(float(sd_r), sigma_r_floor(mu_r)),
                float(mu_t),
                max(float(sd_t), SIGMA_T_FLOOR),
            )
        )
    return Clustering(labels, clusters)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def kmeanspp_seeds(z: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of ``k`` starting centres drawn by D^2 sampling."""
    n = len(z)
    chosen = [int(rng.integers(n))]
    d2 = np.sum((z - z[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.choice(np.setdiff1d(np.arange(n), chosen)))
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((z - z[idx]) ** 2, axis=1))
    return np.array(chosen)


def kmeanspp_cluster(
    peaks: Sequence[PeakLocation], k: int, seed: Union[int, np.random.Generator, None] = 0, max_iterations: int = 300
) -> Clustering:
    """K-means++ seeding followed by Lloyd iterations until assignments stop changing."""
    x = peak_coordinates(peaks)
    n = len(x)
    if not 1 <= k <= n:
        raise ContractError(f"K must lie in [1, {n}], got {k}")
    z = scale_coordinates(x)
    centers = z[kmeanspp_seeds(z, k, _rng(seed))].copy()
    labels = np.full(n, -1)
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        d2 = ((z[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(d2, axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            members = z[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    clustering = clustering_from_labels(x, labels, ids=range(k))
    clustering.iterations = iterations
    clustering.converged = iterations < max_iterations
    return clustering


def dbscan_labels(z: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """DBSCAN over points ``z``; noise gets label -1.

    A point is core if at least ``min_pts`` points (itself included) lie
    within distance ``eps``.  Border points stay with the first cluster that
    reaches them in scan order.
    """
    n = len(z)
    d2 = ((z[:, None, :] - z[None, :, :]) ** 2).sum(axis=2)
    neighbours = [np.flatnonzero(row <= eps * eps) for row in d2]
    core = np.array([len(nb) >= min_pts for nb in neighbours])
    labels = np.full(n, -1)
    current = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = current
        stack = [i]
        while stack:
            p = stack.pop()
            for q in neighbours[p]:
                if labels[q] == -1:
                    labels[q] = current
                    if core[q]:
                        stack.append(q)
        current += 1
    return labels


def dbscan_cluster(peaks: Sequence[PeakLocation], eps: float = 1.0, min_pts: int = 2) -> Clustering:
    """DBSCAN in scaled coordinates; every noise point becomes its own cluster."""
    if not eps > 0:
        raise ContractError("eps must be positive")
    if min_pts < 1:
        raise ContractError("min_pts must be at least 1")
    x = peak_coordinates(peaks)
    labels = dbscan_labels(scale_coordinates(x), eps, min_pts)
    noise = np.flatnonzero(labels == -1)
    next_id = labels.max(initial=-1) + 1
    labels[noise] = np.arange(next_id, next_id + len(noise))
    clustering = clustering_from_labels(x, labels)
    clustering.extra["noise_points"] = int(len(noise))
    return clustering


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def clustering_to_dict(clustering: Clustering, peaks: Sequence[PeakLocation], merge_log: Optional[MergeLog] = None) -> dict:
    return {
        "clusters": [
            {
                "id": c.id,
                "omega": c.omega,
                "mu_r_s": c.mu_r,
                "sigma_r_s": c.sigma_r,
                "mu_t": c.mu_t,
                "sigma_t": c.sigma_t,
            }
            for c in clustering.clusters
        ],
        "assignments": [
            {"measurement": p.measurement_id, "peak_id": p.peak_id, "cluster_id": int(cid)}
            for p, cid in zip(peaks, clustering.assignments)
        ],
        "merge_log": [asdict(ev) for ev in (merge_log or [])],
    }


def write_clustering_json(path, clustering: Clustering, peaks, merge_log: Optional[MergeLog] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(clustering_to_dict(clustering, peaks, merge_log), fh, indent=2)
        fh.write("\n")


def read_clustering_json(path) -> tuple[Clustering, list[dict], MergeLog]:
    """Inverse of :func:`write_clustering_json`; returns the clustering, the assignment records and the log."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        clusters = [
            ClusterParams(c["id"], c["omega"], c["mu_r_s"], c["sigma_r_s"], c["mu_t"], c["sigma_t"])
            for c in doc["clusters"]
        ]
        records = doc["assignments"]
        assignments = [a["cluster_id"] for a in records]
        log = MergeLog([MergeEvent(**ev) for ev in doc.get("merge_log", [])])
    except (KeyError, TypeError) as exc:
        raise ContractError(f"{path}: malformed clustering JSON ({exc})") from None
    return Clustering(np.array(assignments, dtype=np.int64), clusters), records, log
