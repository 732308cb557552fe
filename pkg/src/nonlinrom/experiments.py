"""Experiment drivers: two-model selection (Test 1) and the splitting sweep (Test 2).

Both drivers take a plain config dict, write CSV tables (every row carries the
config hash and seed) plus a JSON metadata file, and return the tables as
lists of dicts.  CSV content depends only on the config, so identical configs
produce byte-identical files.
"""

import csv
import hashlib
import json
import logging
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .estimation import select_state
from .family import build_family, fixed_family
from .fem import build_space, v_norm
from .measurement import build_measurements, project_W
from .model import PRNG_NAME, build_model, sample_snapshots, solve_state
from .pbdw import reconstruct
from .reduced_basis import best_dimension, greedy_hierarchy

__all__ = [
    "SCALES",
    "default_config",
    "config_hash",
    "c_vector",
    "run_test1",
    "run_test2",
    "sigma_decay_ratio",
    "decay_flags",
    "setup_test2_case",
    "run_test2_case",
    "write_csv",
]

log = logging.getLogger(__name__)

SCALES = {
    "desk": {"n_per_side": 32, "n_train": 500, "n_test": 200},
    "paper": {"n_per_side": 128, "n_train": 5000, "n_test": {"test1": 2000, "test2": 1000}},
}

C_MODES = {"0.9/l": (0.9, 1), "0.99/l": (0.99, 1), "0.9/l^2": (0.9, 2), "0.99/l^2": (0.99, 2)}

TEST2_COLUMNS = ["config_hash", "seed", "d", "m", "c_mode", "K", "sigma_K", "err_surrogate_avg",
                 "err_oracle_avg", "err_max", "err_min"]


def default_config(command, scale="desk", seed=0):
    if scale not in SCALES:
        raise ValueError(f"unknown scale {scale!r}")
    s = SCALES[scale]
    n_test = s["n_test"][command] if isinstance(s["n_test"], dict) else s["n_test"]
    base = {"n_per_side": s["n_per_side"], "n_train": s["n_train"], "n_test": n_test, "seed": seed,
            "abar": 1.0, "box_width": None}
    if command == "test1":
        base.update({"m": 8, "c": 0.9, "placement": "random", "n_min": 1, "global_Y": False})
    elif command == "test2":
        base.update({"d_values": [4, 16], "m_values": [4, 16], "c_modes": list(C_MODES),
                     "K_max": 64, "rule": "tau_probe", "placement": "evenly_spaced",
                     "inherit": True, "global_Y": False})
    else:
        raise ValueError(f"no default config for {command!r}")
    return base


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def c_vector(c_mode, d):
    """Amplitudes ``c_l = a * l^-p`` for a mode name such as ``'0.9/l^2'``."""
    try:
        a, p = C_MODES[c_mode]
    except KeyError:
        raise ValueError(f"unknown c mode {c_mode!r}; choose from {list(C_MODES)}") from None
    return a * np.arange(1, d + 1, dtype=float) ** (-p)


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x)) if np.isfinite(x) else str(float(x))
    return x


def write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _meta(command, config, timings):
    return {"command": command, "config": config, "config_hash": config_hash(config),
            "prng": PRNG_NAME, "python": platform.python_version(), "numpy": np.__version__,
            "timings_s": timings}


# ---------------------------------------------------------------------------
# Test 1

def run_test1(config, out=None, threads=1):
    """Affine space for the union of two manifolds vs. one space per manifold.

    The two models use mirror-image partitions.  Test states from each model
    are reconstructed by the affine method, by the per-model spaces with
    surrogate selection and with oracle selection.

    Returns
    -------
    dict with ``selection``, ``errors`` and ``mu_eps`` row lists, plus the
    raw per-sample arrays under ``samples``.
    """
    cfg = dict(config)
    seed = int(cfg["seed"])
    h = config_hash(cfg)
    t0 = time.perf_counter()
    space = build_space(cfg["n_per_side"])
    models = [build_model(space, p, cfg["abar"], cfg["c"]) for p in ("test1_partition1", "test1_partition2")]
    mspace = build_measurements(space, cfg["placement"], cfg["m"], cfg["box_width"], seed=[seed, 1])
    train = [sample_snapshots(mdl, cfg["n_train"], seed=[seed, 2], threads=threads) for mdl in models]
    test = [sample_snapshots(mdl, cfg["n_test"], seed=[seed, 3], threads=threads) for mdl in models]
    t_snap = time.perf_counter() - t0

    t0 = time.perf_counter()
    offset = solve_state(models[0], np.zeros(models[0].d))
    n_min = cfg["n_min"]
    h0 = greedy_hierarchy(np.hstack([t.states for t in train]), offset, mspace.m, mspace)
    n0, _ = best_dimension(h0, "sigma", n_min=n_min)
    affine = h0.space(n0)
    hk = [greedy_hierarchy(t.states, offset, mspace.m, mspace) for t in train]
    family = fixed_family(hk, [models[0].box, models[1].box], model_indices=[0, 1], n_min=n_min)
    t_train = time.perf_counter() - t0

    def estimate(u):
        w = project_W(mspace, u)
        sel = select_state(family, models, mspace, w, truth=u, global_Y=cfg["global_Y"])
        errs = np.array([r.error for r in sel.records])
        u0, _ = reconstruct(affine, mspace, w)
        return (sel.k_star, int(np.argmin(errs)), v_norm(space, u - u0), float(errs[sel.k_star]),
                float(errs.min()), sel.S.copy())

    t0 = time.perf_counter()
    samples = []
    for t in test:
        res = _map(estimate, list(t.states.T), threads)
        samples.append({
            "k_surrogate": np.array([r[0] for r in res]),
            "k_oracle": np.array([r[1] for r in res]),
            "err_affine": np.array([r[2] for r in res]),
            "err_surrogate": np.array([r[3] for r in res]),
            "err_oracle": np.array([r[4] for r in res]),
            "S": np.array([r[5] for r in res]),
        })
    t_est = time.perf_counter() - t0

    selection, errors = [], []
    for ts, smp in enumerate(samples, start=1):
        for method in ("surrogate", "oracle"):
            k = smp[f"k_{method}"]
            selection.append({"config_hash": h, "seed": seed, "test_set": ts, "method": method,
                              "k_star_1": int(np.sum(k == 0)), "k_star_2": int(np.sum(k == 1)),
                              "success_rate": float(np.mean(k == ts - 1))})
        for method in ("affine", "oracle", "surrogate"):
            e = smp[f"err_{method}"]
            errors.append({"config_hash": h, "seed": seed, "test_set": ts, "method": method,
                           "err_avg": float(e.mean()), "err_worst": float(e.max())})
    mu_eps = []
    for k, hier in enumerate([h0] + hk):
        n_star = n0 if k == 0 else family.cells[k - 1].n_star
        for n in range(hier.depth + 1):
            mu_eps.append({"config_hash": h, "seed": seed, "space": k, "n": n, "mu": float(hier.mu[n]),
                           "eps": float(hier.eps[n]), "mu_eps": float(hier.mu[n] * hier.eps[n]),
                           "chosen": int(n == n_star)})
    result = {"selection": selection, "errors": errors, "mu_eps": mu_eps, "samples": samples,
              "n_star": [n0] + [c.n_star for c in family.cells]}
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "test1_selection.csv", selection,
                  ["config_hash", "seed", "test_set", "method", "k_star_1", "k_star_2", "success_rate"])
        write_csv(out / "test1_errors.csv", errors,
                  ["config_hash", "seed", "test_set", "method", "err_avg", "err_worst"])
        write_csv(out / "test1_mu_eps.csv", mu_eps,
                  ["config_hash", "seed", "space", "n", "mu", "eps", "mu_eps", "chosen"])
        meta = _meta("test1", cfg, {"snapshots": t_snap, "training": t_train, "estimation": t_est})
        meta["n_star"] = result["n_star"]
        meta["measurements"] = mspace.layout()
        (out / "test1_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return result


# ---------------------------------------------------------------------------
# Test 2

def sigma_decay_ratio(history, K):
    """``sigma_K / sigma_1`` from a family's split history."""
    by_k = {hh["K"]: hh["sigma_K"] for hh in history}
    if K not in by_k:
        raise ValueError(f"history does not reach K = {K}")
    return by_k[K] / by_k[1] if by_k[1] > 0 else 0.0


def setup_test2_case(cfg, d, m, c_mode, threads=1, space=None, build=True):
    """Model, measurements, training/test snapshots and (optionally) the family of one case."""
    seed = int(cfg["seed"])
    space = build_space(cfg["n_per_side"]) if space is None else space
    partition = {4: "grid2x2", 16: "grid4x4"}.get(d)
    if partition is None:
        raise ValueError(f"d must be 4 or 16, got {d}")
    model = build_model(space, partition, cfg["abar"], c_vector(c_mode, d))
    mspace = build_measurements(space, cfg["placement"], m, cfg["box_width"], seed=[seed, 1])
    train = sample_snapshots(model, cfg["n_train"], seed=[seed, 2, d], threads=threads)
    test = sample_snapshots(model, cfg["n_test"], seed=[seed, 3, d], threads=threads)
    family = None
    if build:
        family = build_family(model, train, mspace, mode="sigma", sigma=cfg.get("sigma"),
                              K_max=cfg["K_max"], rule=cfg["rule"], inherit=cfg["inherit"])
    return model, mspace, train, test, family


def run_test2_case(cfg, d, m, c_mode, threads=1, space=None):
    """One (d, m, c) combination: build the family, evaluate every K.

    Returns ``(rows, family, info)`` with one row per K.
    """
    seed = int(cfg["seed"])
    t0 = time.perf_counter()
    model, mspace, train, test, family = setup_test2_case(cfg, d, m, c_mode, threads, space)
    t_family = time.perf_counter() - t0
    n_K = family.n_steps

    def per_sample(u):
        w = project_W(mspace, u)
        cache = {}
        sur, ora = np.empty(n_K), np.empty(n_K)
        for K in range(1, n_K + 1):
            sel = select_state(family, model, mspace, w, K=K, truth=u, global_Y=cfg["global_Y"],
                               cache=cache)
            errs = np.array([r.error for r in sel.records])
            sur[K - 1] = sel.best.error
            ora[K - 1] = errs.min()
        return sur, ora

    t0 = time.perf_counter()
    res = _map(per_sample, list(test.states.T), threads)
    t_est = time.perf_counter() - t0
    sur = np.array([r[0] for r in res])
    ora = np.array([r[1] for r in res])
    h = config_hash(cfg)
    rows = []
    for K in range(1, n_K + 1):
        rows.append({"config_hash": h, "seed": seed, "d": d, "m": m, "c_mode": c_mode, "K": K,
                     "sigma_K": family.sigma_K(K), "err_surrogate_avg": float(sur[:, K - 1].mean()),
                     "err_oracle_avg": float(ora[:, K - 1].mean()),
                     "err_max": float(ora[:, K - 1].max()), "err_min": float(ora[:, K - 1].min())})
    info = {"d": d, "m": m, "c_mode": c_mode, "converged": family.converged, "K": n_K,
            "data_starved_cells": sum(c.data_starved for c in family.active()),
            "timings_s": {"setup_and_family": t_family, "estimation": t_est},
            "split_log": family.history}
    return rows, family, info


def decay_flags(infos, K_ref=32, reference="0.9/l^2"):
    """Compare sigma_K at ``K_ref`` against the ``reference`` c-mode with the same (d, m).

    Adds ``sigma_ratio`` (``sigma_Kref / sigma_1``), ``sigma_rel_ref``
    (``sigma_Kref`` over the reference's) and ``slow_decay``
    (``sigma_rel_ref > 1``) to every info dict.
    """
    for info in infos:
        K = min(K_ref, info["K"])
        by_k = {hh["K"]: hh["sigma_K"] for hh in info["split_log"]}
        info["sigma_ratio_K"] = K
        info["sigma_K_ref"] = by_k[K]
        info["sigma_ratio"] = sigma_decay_ratio(info["split_log"], K)
    for info in infos:
        ref = next((i for i in infos if (i["d"], i["m"], i["c_mode"]) == (info["d"], info["m"], reference)),
                   None)
        if ref is None or ref["sigma_ratio_K"] != info["sigma_ratio_K"] or ref["sigma_K_ref"] == 0:
            info["sigma_rel_ref"], info["slow_decay"] = None, None
        else:
            info["sigma_rel_ref"] = info["sigma_K_ref"] / ref["sigma_K_ref"]
            info["slow_decay"] = bool(info["sigma_rel_ref"] > 1.0)
    return infos


def run_test2(config, out=None, threads=1, cases=None):
    """Sweep over (d, m, c) combinations; ``cases`` restricts it to a list of triples."""
    cfg = dict(config)
    if cases is None:
        cases = [(d, m, c) for d in cfg["d_values"] for m in cfg["m_values"] for c in cfg["c_modes"]]
    space = build_space(cfg["n_per_side"])
    rows, infos = [], []
    for d, m, c_mode in cases:
        log.info("test2: d=%d m=%d c=%s", d, m, c_mode)
        r, fam, info = run_test2_case(cfg, d, m, c_mode, threads, space)
        rows.extend(r)
        infos.append(info)
    decay_flags(infos)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "test2_splitting.csv", rows, TEST2_COLUMNS)
        flag_cols = ["config_hash", "seed", "d", "m", "c_mode", "K", "converged", "data_starved_cells",
                     "sigma_ratio_K", "sigma_K_ref", "sigma_ratio", "sigma_rel_ref", "slow_decay"]
        summary_rows = [{**i, "config_hash": config_hash(cfg), "seed": cfg["seed"]} for i in infos]
        write_csv(out / "test2_flags.csv", summary_rows, flag_cols)
        meta = _meta("test2", cfg, {f"{i['d']}_{i['m']}_{i['c_mode']}": i["timings_s"] for i in infos})
        meta["cases"] = [{k: v for k, v in i.items() if k != "timings_s"} for i in infos]
        (out / "test2_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=_fmt) + "\n")
    return {"rows": rows, "cases": infos}
