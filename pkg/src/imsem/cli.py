"""Command-line interface: ``imsem simulate``, ``imsem process`` and ``imsem evaluate``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import baseline as bl
from . import denoise as dn
from . import experiments as ex
from . import peakcluster as pc
from .core import AxisConfig, ContractError, read_imsc, read_peaks, write_imsc, write_peaks
from .em import EmConfig
from .simulate import (
    BaselineModel,
    NoiseModel,
    add_baseline,
    add_noise,
    descriptors_from_params,
    sample_peaks,
    simulate_cluster_scenario,
    synthesize_imsc,
)

log = logging.getLogger("imsem")

EXIT_OK, EXIT_CONTRACT, EXIT_IO = 0, 1, 2


def _versions() -> dict:
    return {"imsem": __version__, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


def _write_json(path: Path, doc) -> None:
    with path.open("w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(out: Path, command: str, args: argparse.Namespace, extra=None) -> None:
    config = {k: v for k, v in vars(args).items() if k != "func"}
    doc = {"command": command, "config": config, "versions": _versions()}
    if extra:
        doc.update(extra)
    _write_json(out / "manifest.json", doc)


def _em_config(args) -> EmConfig:
    return EmConfig(args.epsilon, args.max_iterations)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _peak_record(p) -> dict:
    mean_t, std_t, mode_t = descriptors_from_params(p.mu_t, p.lambda_t, p.o_t)
    mean_r, std_r, mode_r = descriptors_from_params(p.mu_r, p.lambda_r, p.o_r)
    return {
        "params": asdict(p),
        "descriptors": {
            "mean_t": mean_t,
            "std_t": std_t,
            "mode_t": mode_t,
            "mean_r": mean_r,
            "std_r": std_r,
            "mode_r": mode_r,
            "volume": p.volume,
        },
    }


def cmd_simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(args.seed).spawn(args.replicates)
    for i, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        stem = out / f"replicate{i:03d}"
        if args.kind == "imsc":
            axes = AxisConfig(args.rows, args.cols)
            peaks = sample_peaks(rng, (args.min_peaks, args.max_peaks))
            clean = synthesize_imsc(peaks, axes)
            noisy = add_noise(clean, NoiseModel(intensity=args.sine_intensity), rng)
            write_imsc(clean, f"{stem}_clean.csv")
            write_imsc(noisy, f"{stem}_noisy.csv")
            truth = {"peaks": [_peak_record(p) for p in peaks]}
            if args.baseline:
                shifted, _, draw = add_baseline(noisy, peaks, BaselineModel(), rng)
                write_imsc(shifted, f"{stem}_baseline.csv")
                truth["baseline"] = {
                    "curve": asdict(draw.curve),
                    "tau": draw.tau.tolist(),
                    "tau_prime": draw.tau_prime.tolist(),
                    "clamped_rows": draw.clamped_rows,
                }
        else:
            scenario = simulate_cluster_scenario(rng, with_noise=args.kind == "peaks_noise")
            write_peaks(scenario.peaks, f"{stem}_peaks.csv")
            truth = {"centroids": scenario.centroids.tolist(), "shapes": scenario.shapes}
        _write_json(Path(f"{stem}_truth.json"), truth)
    _write_manifest(out, "simulate", args, {"seed_entropy": seeds[0].entropy if seeds else args.seed})
    return EXIT_OK


# ---------------------------------------------------------------------------
# process
# ---------------------------------------------------------------------------


def _output_paths(args, suffix: str) -> tuple[Path, Path]:
    src = Path(args.input)
    result = Path(args.out) if args.out else src.with_name(f"{src.stem}_{suffix}{src.suffix}")
    report = Path(args.report) if args.report else result.with_name(result.stem + "_report.json")
    return result, report


def cmd_process_denoise(args) -> int:
    s = read_imsc(args.input, device=args.device_range)
    result, report_path = _output_paths(args, "denoised")
    report = {"method": args.method}
    if args.method == "em":
        denoised, fit = dn.denoise_em(s, args.rho, _em_config(args), args.uniform_range)
        report.update(
            parameters=asdict(fit.params),
            iterations=fit.iterations,
            converged=fit.converged,
            omega_b=fit.params.omega_b,
            log_likelihood=fit.log_likelihood[-1] if fit.log_likelihood else None,
        )
    elif args.method == "gaussian":
        denoised = dn.gaussian_smooth(s, args.sigma, args.window)
        report["parameters"] = {"sigma": args.sigma, "window": args.window}
    elif args.method == "savitzky_golay":
        denoised = dn.savitzky_golay_smooth(s, args.window, args.order)
        report["parameters"] = {"window": args.window, "order": args.order}
    else:
        denoised = dn.fft_lowpass(s, args.cutoff)
        report["parameters"] = {"cutoff": args.cutoff}
    write_imsc(denoised, result)
    _write_json(report_path, report)
    return EXIT_OK


def cmd_process_baseline(args) -> int:
    s = read_imsc(args.input, device=args.device_range)
    result, report_path = _output_paths(args, "corrected")
    report = {"method": args.method}
    if args.method == "em":
        fits = bl.fit_chromatograms(s, _em_config(args))
        corrected = bl.subtract_baseline(s, [f.b for f in fits])
        iterations = [f.iterations for f in fits]
        report.update(
            chromatograms=[asdict(f) for f in fits],
            iterations_median=float(np.median(iterations)),
            iterations_max=int(max(iterations)),
            converged=all(f.converged for f in fits),
        )
    else:
        corrected = bl.reference_baseline(s, args.method)
    write_imsc(corrected, result)
    _write_json(report_path, report)
    return EXIT_OK


def cmd_process_cluster(args) -> int:
    peaks = read_peaks(args.input)
    src = Path(args.input)
    result = Path(args.out) if args.out else src.with_name(f"{src.stem}_clusters.json")
    merge_log = None
    if args.method == "em":
        clustering, merge_log = pc.em_cluster(peaks, _em_config(args))
    elif args.method == "kmeanspp":
        k = args.k
        if k is None:
            labels = {p.truth_label for p in peaks}
            if None in labels:
                raise ContractError("--k is required when the peak list has no truth labels")
            k = len(labels)
        clustering = pc.kmeanspp_cluster(peaks, k, args.seed)
    else:
        clustering = pc.dbscan_cluster(peaks, args.eps, args.min_pts)
    pc.write_clustering_json(result, clustering, peaks, merge_log)
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def cmd_evaluate(args) -> int:
    cfg = ex.ExperimentConfig(
        experiment=args.experiment,
        seed=args.seed,
        replicates=args.replicates,
        rows=args.rows or 0,
        cols=args.cols or 0,
        epsilon=args.epsilon,
        max_iterations=args.max_iterations,
        rho=args.rho,
        uniform_range=args.uniform_range,
        gaussian_sigma=args.sigma,
        gaussian_window=args.window,
        sg_window=args.window,
        sg_order=args.order,
        fft_cutoff=args.cutoff,
        dbscan_eps=args.eps,
        dbscan_min_pts=args.min_pts,
        jobs=args.jobs,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = ex.run_experiment(cfg)
    with (out / "scores.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ex.ScoreRow._fields)
        writer.writerows((r.replicate, r.method, r.score_name, repr(r.score)) for r in rows)
    summary = ex.summarize(rows)
    with (out / "summary.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("method", "score_name", "mean", "std"))
        for (method, name), (mean, std) in summary.items():
            writer.writerow((method, name, repr(mean), repr(std)))
    with (out / "histogram.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("method", "score_name", "bin_low", "bin_high", "count"))
        writer.writerows(ex.histograms(rows))
    _write_manifest(out, "evaluate", args, {"experiment_config": cfg.to_dict()})
    for (method, name), (mean, std) in summary.items():
        print(f"{method:16s} {name:11s} mean={mean:.4f} std={std:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_em_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float, default=0.001, help="relative convergence tolerance")
    p.add_argument("--max-iterations", type=int, default=1000)


def _add_smoothing_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rho", type=int, default=dn.DEFAULT_RHO, help="EM smoothing margin (cells)")
    p.add_argument("--uniform-range", choices=("smoothed", "raw"), default="smoothed")
    p.add_argument("--sigma", type=float, default=dn.DEFAULT_RHO / 2, help="Gaussian kernel width (cells)")
    p.add_argument("--window", type=int, default=2 * dn.DEFAULT_RHO + 1, help="Gaussian/Savitzky-Golay window")
    p.add_argument("--order", type=int, default=2, help="Savitzky-Golay polynomial order")
    p.add_argument("--cutoff", type=float, default=0.1, help="FFT low-pass cutoff (fraction of Nyquist)")


def _add_cluster_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eps", type=float, default=1.0, help="DBSCAN radius in scaled units")
    p.add_argument("--min-pts", type=int, default=2)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imsem", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate simulated IMSCs or peak lists")
    p.add_argument("--kind", choices=("imsc", "peaks", "peaks_noise"), default="imsc")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--rows", type=int, default=1200)
    p.add_argument("--cols", type=int, default=2500)
    p.add_argument("--min-peaks", type=int, default=5)
    p.add_argument("--max-peaks", type=int, default=10)
    p.add_argument("--sine-intensity", type=float, default=1.0)
    p.add_argument("--baseline", action="store_true", help="also write an IMSC with a RIP baseline")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("process", help="apply one method to one input file")
    psub = p.add_subparsers(dest="step", required=True)

    q = psub.add_parser("denoise")
    q.add_argument("input")
    q.add_argument("--method", choices=("em",) + tuple(dn.REFERENCE_METHODS), default="em")
    _add_smoothing_flags(q)
    _add_em_flags(q)
    q.add_argument("--device-range", action="store_true", help="reject values outside the 12-bit device range")
    q.add_argument("--out")
    q.add_argument("--report")
    q.set_defaults(func=cmd_process_denoise)

    q = psub.add_parser("baseline")
    q.add_argument("input")
    q.add_argument("--method", choices=("em", "naive", "median"), default="em")
    _add_em_flags(q)
    q.add_argument("--device-range", action="store_true")
    q.add_argument("--out")
    q.add_argument("--report")
    q.set_defaults(func=cmd_process_baseline)

    q = psub.add_parser("cluster")
    q.add_argument("input", help="peak CSV")
    q.add_argument("--method", choices=("em", "kmeanspp", "dbscan"), default="em")
    q.add_argument("--k", type=int, help="K-means++ cluster count (default: number of truth labels)")
    q.add_argument("--seed", type=int, default=0)
    _add_cluster_flags(q)
    _add_em_flags(q)
    q.add_argument("--out")
    q.set_defaults(func=cmd_process_cluster)

    p = sub.add_parser("evaluate", help="run a replicated method comparison")
    p.add_argument("experiment", choices=ex.EXPERIMENTS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--rows", type=int, help="grid rows (default depends on the experiment)")
    p.add_argument("--cols", type=int)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    _add_smoothing_flags(p)
    _add_cluster_flags(p)
    _add_em_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ContractError as exc:
        print(f"imsem: error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except OSError as exc:
        print(f"imsem: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
