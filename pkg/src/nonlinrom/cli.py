"""Command-line entry point: ``nonlinrom {test1,test2,train,estimate,solve}``."""

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import experiments
from .altmin import run_altmin
from .estimation import plausible_set, select_state
from .family import build_family
from .fem import build_space
from .measurement import build_measurements, observe_noisy, project_W
from .model import build_model, sample_snapshots, solve_state
from .storage import (FORMAT_VERSION, dump_states, load_family, load_observation, save_family,
                      save_observation, write_json)

log = logging.getLogger("nonlinrom")

TRAIN_DEFAULTS = {"partition": "grid2x2", "c": 0.9, "c_mode": None, "abar": 1.0, "m": 4,
                  "placement": "evenly_spaced", "box_width": None, "mode": "sigma", "sigma": None,
                  "eps_target": None, "mu_target": None, "K_max": 16, "rule": "tau_probe",
                  "inherit": True, "n_min": 0}


def _load_config(path):
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _config(args, command):
    cfg = experiments.default_config(command if command in ("test1", "test2") else "test2",
                                     args.scale, args.seed)
    if command not in ("test1", "test2"):
        cfg = {k: cfg[k] for k in ("n_per_side", "n_train", "n_test", "seed", "abar", "box_width")}
        cfg.update(TRAIN_DEFAULTS)
    user = _load_config(args.config)
    unknown = set(user) - set(cfg)
    if unknown:
        raise SystemExit(f"unknown config keys: {sorted(unknown)}")
    cfg.update(user)
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _out(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_test1(args):
    cfg = _config(args, "test1")
    res = experiments.run_test1(cfg, _out(args), threads=args.threads)
    for row in res["selection"]:
        print(f"T{row['test_set']} {row['method']:9s} success {100 * row['success_rate']:.1f}%")
    for row in res["errors"]:
        print(f"T{row['test_set']} {row['method']:9s} avg {row['err_avg']:.3e} worst {row['err_worst']:.3e}")
    return 0


def cmd_test2(args):
    cfg = _config(args, "test2")
    res = experiments.run_test2(cfg, _out(args), threads=args.threads)
    for c in res["cases"]:
        last = [r for r in res["rows"] if (r["d"], r["m"], r["c_mode"]) == (c["d"], c["m"], c["c_mode"])][-1]
        flag = "" if c["converged"] else " (not converged)"
        print(f"d={c['d']:2d} m={c['m']:2d} c={c['c_mode']:8s} K={c['K']:3d} sigma_K={last['sigma_K']:.3e} "
              f"oracle={last['err_oracle_avg']:.3e} surrogate={last['err_surrogate_avg']:.3e}{flag}")
    return 0


def _train_model(cfg, space):
    partition = cfg["partition"]
    if cfg.get("c_mode"):
        d = {"grid2x2": 4, "grid4x4": 16}.get(partition, 4)
        c = experiments.c_vector(cfg["c_mode"], d)
    else:
        c = cfg["c"]
    return build_model(space, partition, cfg["abar"], c)


def cmd_train(args):
    cfg = _config(args, "train")
    out = _out(args)
    t0 = time.perf_counter()
    space = build_space(cfg["n_per_side"])
    model = _train_model(cfg, space)
    seed = int(cfg["seed"])
    mspace = build_measurements(space, cfg["placement"], cfg["m"], cfg["box_width"], seed=[seed, 1])
    train = sample_snapshots(model, cfg["n_train"], seed=[seed, 2], threads=args.threads)
    family = build_family(model, train, mspace, mode=cfg["mode"], sigma=cfg["sigma"],
                          eps_target=cfg["eps_target"], mu_target=cfg["mu_target"], K_max=cfg["K_max"],
                          rule=cfg["rule"], n_min=cfg["n_min"], inherit=cfg["inherit"])
    save_family(out / "family", family, model, mspace)
    write_json(out / "train_meta.json", {
        "format_version": FORMAT_VERSION, "config": cfg, "config_hash": experiments.config_hash(cfg),
        "K": family.K, "sigma_K": family.sigma_K(), "converged": family.converged,
        "timings_s": {"total": time.perf_counter() - t0}})
    print(f"family with K={family.K} cells, sigma_K={family.sigma_K():.3e} -> {out / 'family.json'}")
    return 0


def cmd_solve(args):
    cfg = _config(args, "solve")
    out = _out(args)
    space = build_space(cfg["n_per_side"])
    if args.family:
        _, models, mspace = load_family(args.family)
        model = models[0]
    else:
        model = _train_model(cfg, space)
        mspace = build_measurements(space, cfg["placement"], cfg["m"], cfg["box_width"],
                                    seed=[int(cfg["seed"]), 1])
    if args.param is not None:
        y = np.array([float(v) for v in args.param.split(",")])
    else:
        y = model.box.sample(np.random.Generator(np.random.PCG64([int(cfg["seed"]), 4])), 1)[0]
    u = solve_state(model, y)
    dump_states(out / "state", u, parameter=y.tolist(), model=model.spec())
    if args.noise:
        obs = observe_noisy(mspace, u, args.noise, seed=[int(cfg["seed"]), 5])
    else:
        obs = project_W(mspace, u)
    save_observation(out / "observation.json", obs, parameter=y.tolist(),
                     measurements=mspace.layout())
    print(f"solved y={np.array2string(y, precision=4)} -> {out / 'state.bin'}, {out / 'observation.json'}")
    return 0


def cmd_estimate(args):
    out = _out(args)
    t0 = time.perf_counter()
    family, models, mspace = load_family(args.family)
    obs = load_observation(args.observation)
    if args.noise:
        if obs.z is None:
            raise SystemExit("--noise needs an observation with raw measurements z")
        eps_noise = obs.eps_noise
    else:
        eps_noise = None
    t_load = time.perf_counter() - t0
    t0 = time.perf_counter()
    sel = select_state(family, models, mspace, obs)
    plaus = plausible_set(family, sel, models)
    t_sel = time.perf_counter() - t0
    report = {"format_version": FORMAT_VERSION, **sel.to_dict(), "plausible_set": plaus.indices,
              "sigma_K": family.sigma_K(), "u_star": sel.u_star.tolist()}
    if eps_noise is not None:
        report["eps_noise"] = eps_noise
        report["noise_bound"] = family.sigma_K() + eps_noise
    timings = {"load": t_load, "selection": t_sel}
    if args.altmin:
        t0 = time.perf_counter()
        model = models[family.active()[sel.k_star].model_index]
        st = run_altmin(model, mspace, obs, sel, max_iters=args.max_iters)
        timings["altmin"] = time.perf_counter() - t0
        report["altmin"] = st.to_dict()
        report["u_altmin"] = st.u.tolist()
    report["timings_s"] = timings
    write_json(out / "estimate.json", report)
    print(f"k*={sel.k_star} S={sel.best.S:.3e} "
          f"plausible={plaus.indices} -> {out / 'estimate.json'}")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config overriding the defaults")
    common.add_argument("--seed", type=int, default=None, metavar="N")
    common.add_argument("--scale", choices=sorted(experiments.SCALES), default="desk")
    common.add_argument("--out", metavar="DIR", default="out")
    common.add_argument("--threads", type=int, default=1, metavar="N")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="nonlinrom", description="Nonlinear reduced models for state estimation.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("test1", parents=[common], help="two-model selection experiment")
    sub.add_parser("test2", parents=[common], help="splitting sweep experiment")
    sub.add_parser("train", parents=[common], help="build and save a reduced family")
    s = sub.add_parser("solve", parents=[common], help="solve one state and write its observation")
    s.add_argument("--param", help="comma-separated parameter vector (default: random draw)")
    s.add_argument("--family", metavar="PATH", help="take model and measurements from a family artifact")
    s.add_argument("--noise", type=float, default=0.0, help="uniform measurement noise level")
    e = sub.add_parser("estimate", parents=[common], help="estimate a state from an observation")
    e.add_argument("--family", metavar="PATH", required=True, help="family artifact (without suffix)")
    e.add_argument("--observation", metavar="PATH", required=True)
    e.add_argument("--altmin", action="store_true", help="refine by alternating minimisation")
    e.add_argument("--max-iters", type=int, default=50)
    e.add_argument("--noise", action="store_true", help="report the noise-inflated error bound")
    return p


COMMANDS = {"test1": cmd_test1, "test2": cmd_test2, "train": cmd_train, "solve": cmd_solve,
            "estimate": cmd_estimate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is None:
        args.seed = 0
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
