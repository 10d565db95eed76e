"""Experiment runners: deterministic data files plus a manifest.

Every runner writes its data files with repr-formatted floats and sorted
JSON keys, so reruns with the same config are byte-identical; the manifest
carries the config echo, library versions, wall time and a sha256 per
emitted file (wall time is the only nondeterministic entry).
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__, coupling, green, percolation, sampler, tree
from .config import ExperimentConfig, resolved_params
from .graphs import build_random_regular, midpoint_graph, spectral_gap
from .operator import critical_level, principal_eigenvalue
from .rng import chunk_sizes

NEG_INF = float("-inf")


def _jsonable(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def write_json(path: Path, payload: dict) -> None:
    payload = {k: _jsonable(v) for k, v in payload.items()}
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def write_jsonl(path: Path, records: list[dict]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps({k: _jsonable(v) for k, v in rec.items()}, sort_keys=True))
            fh.write("\n")


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                             for v in row])


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def parallel_map(fn, items: list, threads: int) -> list:
    """Ordered map over independent work items; identical results for any
    worker count because each item carries its own seed."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- runners


def run_green_validate(params, out: Path, threads: int) -> list[Path]:
    g = build_random_regular(params["n"], params["d"], params["seed"])
    gt = green.zero_average_green(g)
    cov = green.covariance_table(gt)
    raw = green.green_table_raw(gt)
    eigs = np.linalg.eigvalsh(cov)
    summary = {
        "n": g.n_vertices, "d": g.degree, "seed": params["seed"],
        "max_row_sum": float(np.abs(raw.sum(axis=1)).max()),
        "max_asymmetry": float(np.abs(gt.gbar - gt.gbar.T).max()),
        "min_eigenvalue": float(eigs[0]),
        "null_eigenvalue": float(cov.sum() / g.n_vertices ** 2),
        "diag_min": float(np.diag(raw).min()),
        "c0": gt.c0,
    }
    files = [out / "green_summary.json"]
    write_json(files[0], summary)
    if params["dump_covariance"]:
        files.append(out / "covariance.csv")
        green.dump_covariance_csv(gt, files[-1])
    return files


def run_sampler_validate(params, out: Path, threads: int) -> list[Path]:
    g = build_random_regular(params["n"], params["d"], params["seed"])
    mg = midpoint_graph(g)
    gap = spectral_gap(g)
    k_max = params["k_max"] or sampler.default_k_max(gap)
    vals = sampler.sample_decomposition_batch(mg, k_max, params["replicas"], params["seed"])
    emp = vals @ vals.T / vals.shape[1]
    cov = green.covariance_table(green.zero_average_green(g))
    field, _ = sampler.sample_decomposition(mg, k_max, params["seed"])
    files = [out / "sampler_summary.json", out / "field_sample.csv",
             out / "field_sample.json"]
    write_json(files[0], {
        "n": g.n_vertices, "d": g.degree, "seed": params["seed"],
        "replicas": params["replicas"], "k_max": k_max, "spectral_gap": gap,
        "max_cov_error": float(np.abs(emp - cov).max()),
        "max_zero_sum": float(np.abs(vals.sum(axis=0)).max()),
    })
    sampler.dump_field(field, files[1], files[2])
    return files


def run_tree_eta(params, out: Path, threads: int) -> list[Path]:
    est = tree.estimate_eta(params["d"], params["h"], params["p"], params["gamma"],
                            params["depth"], params["replicas"], params["seed"],
                            keep_counts=True)
    counts = est.level_counts
    rows = []
    for rep in range(counts.shape[0]):
        survived = int(counts[rep, -1] > 0)
        for lvl in range(counts.shape[1]):
            rows.append([rep, lvl, int(counts[rep, lvl]), survived])
    files = [out / "tree_eta.csv", out / "tree_eta.json"]
    write_csv(files[0], ["replica", "level", "front_size", "survived"], rows)
    write_json(files[1], {
        "d": params["d"], "h": params["h"], "p": params["p"], "gamma": params["gamma"],
        "depth": params["depth"], "replicas": params["replicas"], "seed": params["seed"],
        "survival_fraction": est.survival_fraction, "ci_halfwidth": est.ci_halfwidth,
        "front_means": est.front_means,
    })
    return files


def run_operator_sweep(params, out: Path, threads: int) -> list[Path]:
    rows = []
    for h in params["h_grid"]:
        lam = principal_eigenvalue(params["d"], h, params["p"], params["gamma"],
                                   params["n_nodes"])
        rows.append([h, params["p"], params["gamma"], lam, params["n_nodes"]])
    files = [out / "operator_sweep.csv"]
    write_csv(files[0], ["h", "p", "gamma", "lambda", "n_nodes"], rows)
    return files


def run_hstar(params, out: Path, threads: int) -> list[Path]:
    value = critical_level(params["d"], tol=params["tol"], n_nodes=params["n_nodes"])
    files = [out / "hstar.json"]
    write_json(files[0], {"d": params["d"], "h_star": value,
                          "n_nodes": params["n_nodes"], "tol": params["tol"]})
    return files


def run_coupling_tail(params, out: Path, threads: int) -> list[Path]:
    g = build_random_regular(params["n"], params["d"], params["seed"])
    mg = midpoint_graph(g)
    gap = spectral_gap(g)
    rows = []
    summary = {}
    for r in params["r_grid"]:
        k_max = params["k_max"] or max(2 * r, int(math.ceil(12.0 / gap)))
        x, xp = coupling.find_coupled_pair(g, r)
        res = coupling.run_coupling_batch(mg, x, xp, r, k_max, params["replicas"],
                                          params["seed"])
        combined = np.maximum(res["d_x"], res["d_xp"])
        for rep in range(params["replicas"]):
            for eps in params["eps_grid"]:
                rows.append([rep, r, eps, float(res["d_x"][rep]), float(res["d_xp"][rep])])
        summary[f"r={r}"] = {
            "x": int(x), "x_prime": int(xp), "k_max": k_max,
            "max_identity_residual": float(max(res["residual_x"].max(),
                                               res["residual_xp"].max())),
            "tail": {repr(eps): float((combined > eps).mean()) for eps in params["eps_grid"]},
        }
    files = [out / "coupling_tail.csv", out / "coupling_tail.json"]
    write_csv(files[0], ["replica", "r", "eps", "D_x", "D_xprime"], rows)
    write_json(files[1], {"n": params["n"], "d": params["d"], "seed": params["seed"],
                          "spectral_gap": gap, "results": summary})
    return files


def _giant_one(args):
    n, d, h, seed, k_max = args
    return percolation.giant_experiment(n, d, h, seed, k_max)


def run_giant(params, out: Path, threads: int) -> list[Path]:
    items = [(params["n"], params["d"], params["h"], params["seed"] + i, params["k_max"])
             for i in range(params["seeds"])]
    records = parallel_map(_giant_one, items, threads)
    files = [out / "giant.jsonl"]
    write_jsonl(files[0], records)
    return files


def _meso_one(args):
    n, d, h, p, t, seed, k_max = args
    return percolation.mesoscopic_experiment(n, d, h, p, t, seed, k_max)


def run_mesoscopic(params, out: Path, threads: int) -> list[Path]:
    items = [(params["n"], params["d"], params["h"], params["p"], params["t"],
              params["seed"] + i, params["k_max"]) for i in range(params["seeds"])]
    records = parallel_map(_meso_one, items, threads)
    files = [out / "mesoscopic.jsonl"]
    write_jsonl(files[0], records)
    return files


def _sprinkle_one(args):
    n, d, h, h_prime, p, seed, t, eta_ref = args
    return percolation.sprinkling_run(n, d, h, h_prime, p, seed, t=t, eta_ref=eta_ref)


def run_sprinkle(params, out: Path, threads: int) -> list[Path]:
    eta_ref = tree.estimate_eta(params["d"], params["h_prime"], params["p"], NEG_INF,
                                16, 20000, params["seed"]).survival_fraction
    items = []
    for n in params["n_grid"]:
        for i in range(params["replicas"]):
            items.append((n, params["d"], params["h"], params["h_prime"], params["p"],
                          params["seed"] + i, params["t"], eta_ref))
    records = parallel_map(_sprinkle_one, items, threads)
    files = [out / "sprinkle.jsonl"]
    write_jsonl(files[0], records)
    return files


RUNNERS = {
    "green-validate": run_green_validate,
    "sampler-validate": run_sampler_validate,
    "tree-eta": run_tree_eta,
    "operator-sweep": run_operator_sweep,
    "hstar": run_hstar,
    "coupling-tail": run_coupling_tail,
    "giant": run_giant,
    "mesoscopic": run_mesoscopic,
    "sprinkle": run_sprinkle,
}


def run(config: ExperimentConfig, out_dir, threads: int = 1) -> Path:
    """Execute one experiment; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = resolved_params(config)
    started = time.time()
    files = RUNNERS[config.experiment](params, out, threads)
    manifest = {
        "experiment": config.experiment,
        "config": {k: _jsonable(v) for k, v in params.items()},
        "versions": {"gfflab": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "wall_time_s": time.time() - started,
        "files": {f.name: _sha256(f) for f in files},
    }
    manifest_path = out / "manifest.json"
    write_json(manifest_path, manifest)
    return manifest_path
