"""Command-line harness.

Subcommands wire the library into workflows:

    verify-gains   certify the configured barrier gains (exit code = verdict)
    train          run the learner, writing curve, checkpoints and figures
    eval           evaluate a checkpoint or the PID baseline
    compare        PID baseline against one or more checkpoints
    cycle-gen      generate a synthetic drive cycle CSV
    dump-config    print or write the merged configuration

Every JSON summary carries the config hash and seed; every CSV starts
with a comment line holding both.  Reruns with identical config and seed
reproduce outputs bit for bit.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import figures
from .config import RunConfig, load_config, make_rng
from .control import PidController
from .learn.agent import HmpoAgent
from .learn.obs import ObservationEncoder
from .learn.policy import TorqueMap
from .learn.trainer import PolicyController, train
from .safety import verify_gains
from .scenario import (DriveCycle, load_cycle, randomize, run_episode,
                       save_cycle, synthetic_cycle)


def _meta_line(cfg: RunConfig) -> str:
    return f"# config_hash={cfg.hash} seed={cfg.seed}\n"


def _cell(v: object) -> str:
    # repr of a Python float round-trips exactly; numpy scalars must be
    # unwrapped first or their repr leaks the type name into the file
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _write_csv(path: str, cfg: RunConfig, header: Sequence[str],
               rows: Sequence[Sequence[object]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_meta_line(cfg))
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _write_json(path: str, cfg: RunConfig, payload: Dict[str, object]) \
        -> None:
    doc = {"config_hash": cfg.hash, "seed": cfg.seed}
    doc.update(payload)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _load_run_config(args: argparse.Namespace) -> RunConfig:
    overrides: Dict[str, object] = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    cfg = load_config(args.config, overrides=overrides)
    return RunConfig(cfg)


def _resolve_cycle(args: argparse.Namespace, run_cfg: RunConfig,
                   stream: int) -> DriveCycle:
    scen = run_cfg.scenario_config()
    if getattr(args, "cycle", None):
        return load_cycle(args.cycle, dt=scen.dt)
    kind = getattr(args, "cycle_kind", None) or "urban"
    return synthetic_cycle(kind, scen.horizon,
                           make_rng(run_cfg.seed, stream), dt=scen.dt,
                           max_decel=scen.max_lead_decel,
                           max_accel=scen.max_lead_accel)


def _certified_ecbf(run_cfg: RunConfig, unsafe_override: bool):
    ecbf = run_cfg.ecbf_config(certified=True)
    if ecbf.certified:
        return ecbf
    if not unsafe_override:
        raise SystemExit(
            "refusing to run: gain certification failed "
            f"({ecbf.certification.reason}); pass --unsafe-override to "
            "run the filter anyway")
    print("warning: running with UNCERTIFIED gains (--unsafe-override)",
          file=sys.stderr)
    forced = dataclasses.replace(
        ecbf.certification, certified=True,
        reason=ecbf.certification.reason + " (overridden)")
    return dataclasses.replace(ecbf, certification=forced)


def _make_controller(run_cfg: RunConfig, checkpoint: Optional[str],
                     allow_hash_mismatch: bool):
    """PID baseline or a deterministic policy controller from a file."""
    drivetrain = run_cfg.drivetrain()
    scen = run_cfg.scenario_config()
    if checkpoint is None:
        return PidController(run_cfg.pid_config(), drivetrain,
                             z0=scen.z0, decision_dt=scen.decision_dt), "pid"
    agent = HmpoAgent(ObservationEncoder.DIM, run_cfg.learn_config(),
                      run_cfg.seed)
    expect = None if allow_hash_mismatch else run_cfg.hash
    agent.load_checkpoint(checkpoint, expect_hash=expect)
    torque_map = TorqueMap(drivetrain.min_wheel_torque(scen.mass_range[1]),
                           drivetrain.traction_torque_ceiling)
    ctrl = PolicyController(agent, run_cfg.encoder(), torque_map,
                            explore=False)
    name = os.path.basename(checkpoint).rsplit(".", 1)[0]
    return ctrl, f"rl-{name}"


def _eval_episodes(run_cfg: RunConfig, controller, cycle: DriveCycle,
                   ecbf, episodes: int, stream: int,
                   mass: Optional[float] = None, collect_trace: bool = False):
    params = run_cfg.vehicle_params()
    drivetrain = run_cfg.drivetrain()
    scen = run_cfg.scenario_config()
    weights = run_cfg.reward_weights()
    reports = []
    for ep in range(episodes):
        rng = make_rng(run_cfg.seed, stream, ep)
        setup = randomize(scen, cycle, rng)
        if mass is not None:
            setup = dataclasses.replace(setup, mass=mass)
        reports.append(run_episode(
            controller, setup, scen, params, drivetrain, weights, rng,
            ecbf=ecbf, collect_trace=collect_trace and ep == 0))
    return reports


# ----------------------------------------------------------------------
# subcommands


def cmd_verify_gains(args: argparse.Namespace) -> int:
    run_cfg = _load_run_config(args)
    os.makedirs(args.out, exist_ok=True)
    ecbf = run_cfg.ecbf_config()
    eta = run_cfg.worst_case_state()
    result = verify_gains(ecbf, eta)
    rows = [tuple(r) for r in result.trace]
    _write_csv(os.path.join(args.out, "h_trace.csv"), run_cfg,
               ("t", "h", "h_dot", "mu_demand", "mu_applied"), rows)
    figures.plot_certification(result.trace,
                               os.path.join(args.out, "h_trace.png"))
    payload = {
        "certified": result.certified,
        "converged": result.converged,
        "min_h": result.min_h,
        "final_h": result.final_h,
        "final_h_dot": result.final_h_dot,
        "reason": result.reason,
        "k_alpha": list(ecbf.k_alpha),
        "mu_bounds_extreme": [ecbf.mu_tmax_xrm, ecbf.mu_tmin_xrm],
        "eta_extreme": [eta.h, eta.h_dot],
    }
    if args.sweep:
        lo1, hi1, n1, lo2, hi2, n2 = (float(x) for x in
                                      args.sweep.split(","))
        grid_rows = []
        for k1 in np.linspace(lo1, hi1, int(n1)):
            for k2 in np.linspace(lo2, hi2, int(n2)):
                cfg_k = dataclasses.replace(ecbf, k_alpha=(float(k1),
                                                           float(k2)))
                res = verify_gains(cfg_k, eta)
                grid_rows.append((float(k1), float(k2),
                                  int(res.certified), res.min_h))
        _write_csv(os.path.join(args.out, "gain_sweep.csv"), run_cfg,
                   ("k1", "k2", "certified", "min_h"), grid_rows)
        payload["sweep_points"] = len(grid_rows)
    _write_json(os.path.join(args.out, "certification.json"), run_cfg,
                payload)
    print(f"certified={result.certified} reason={result.reason} "
          f"min_h={result.min_h:.6g}")
    return 0 if result.certified else 1


def cmd_train(args: argparse.Namespace) -> int:
    run_cfg = _load_run_config(args)
    os.makedirs(args.out, exist_ok=True)
    cycle = _resolve_cycle(args, run_cfg, stream=7)
    if args.safety == "ecbf":
        # fail fast with the same refusal semantics as eval
        _certified_ecbf(run_cfg, args.unsafe_override)
    agent, rows = train(run_cfg, args.episodes, args.safety, args.out,
                        cycle=cycle)
    figures.plot_learning_curve(rows,
                                os.path.join(args.out,
                                             "learning_curve.png"))
    n = max(1, len(rows) // 10)
    payload = {
        "episodes": len(rows),
        "safety": args.safety,
        "cycle": cycle.name,
        "reward_first_decile": float(np.mean([r.reward for r in rows[:n]]))
        if rows else 0.0,
        "reward_last_decile": float(np.mean([r.reward for r in rows[-n:]]))
        if rows else 0.0,
        "collisions_total": int(sum(r.collisions for r in rows)),
        "violations_total": int(sum(r.violations for r in rows)),
        "checkpoint": "checkpoint_final.json",  # relative to this directory
    }
    _write_json(os.path.join(args.out, "train_summary.json"), run_cfg,
                payload)
    print(f"trained {len(rows)} episodes; "
          f"reward {payload['reward_first_decile']:.3f} -> "
          f"{payload['reward_last_decile']:.3f}; "
          f"collisions {payload['collisions_total']}")
    return 0


def _summarize(reports) -> Dict[str, object]:
    return {
        "episodes": len(reports),
        "mpg_mean": float(np.mean([r.mpg for r in reports])),
        "reward_mean": float(np.mean([r.reward for r in reports])),
        "mean_separation_in_range": float(np.nanmean(
            [r.mean_separation_in_range for r in reports])),
        "min_separation": float(np.min([r.min_separation
                                        for r in reports])),
        "collisions": int(sum(r.collision for r in reports)),
        "interventions": int(sum(r.interventions for r in reports)),
        "violations": int(sum(r.violations for r in reports)),
    }


def cmd_eval(args: argparse.Namespace) -> int:
    run_cfg = _load_run_config(args)
    os.makedirs(args.out, exist_ok=True)
    scen = run_cfg.scenario_config()
    cycle = _resolve_cycle(args, run_cfg, stream=11)
    ecbf = None
    if args.safety == "ecbf":
        ecbf = _certified_ecbf(run_cfg, args.unsafe_override)
    controller, name = _make_controller(run_cfg, args.checkpoint,
                                        args.allow_hash_mismatch)
    reports = _eval_episodes(run_cfg, controller, cycle, ecbf,
                             args.episodes, stream=13, collect_trace=True)
    ep_rows = [tuple(r.to_dict()[k] for k in (
        "reward", "mpg", "mean_separation_in_range", "min_separation",
        "collision", "violations", "interventions")) for r in reports]
    _write_csv(os.path.join(args.out, "episodes.csv"), run_cfg,
               ("reward", "mpg", "mean_separation_in_range",
                "min_separation", "collision", "violations",
                "interventions"), ep_rows)
    trace = reports[0].trace
    if trace is not None:
        _write_csv(os.path.join(args.out, "trace.csv"), run_cfg,
                   ("t", "separation", "v_host", "v_lead", "gear",
                    "torque", "fuel_rate", "intervened"),
                   list(zip(*(trace[k] for k in
                              ("t", "separation", "v_host", "v_lead",
                               "gear", "torque", "fuel_rate",
                               "intervened")))))
        figures.plot_episode_trace(trace,
                                   os.path.join(args.out, "trace.png"),
                                   z0=scen.z0,
                                   sensor_range=scen.sensor_range,
                                   v_set=scen.v_set)
    payload: Dict[str, object] = {"controller": name, "cycle": cycle.name,
                                  "safety": args.safety}
    payload.update(_summarize(reports))
    if args.mass_sweep:
        masses = [float(m) for m in
                  np.arange(scen.mass_range[0], scen.mass_range[1] + 1.0,
                            1000.0)]
        sweep_rows = []
        mpgs = []
        for m in masses:
            reps = _eval_episodes(run_cfg, controller, cycle, ecbf,
                                  args.episodes, stream=17, mass=m)
            s = _summarize(reps)
            mpgs.append(s["mpg_mean"])
            sweep_rows.append((m, s["mpg_mean"], s["reward_mean"],
                               s["mean_separation_in_range"],
                               s["min_separation"], s["collisions"]))
        _write_csv(os.path.join(args.out, "mass_sweep.csv"), run_cfg,
                   ("mass", "mpg", "reward", "mean_separation_in_range",
                    "min_separation", "collisions"), sweep_rows)
        figures.plot_mass_sweep(masses, {name: mpgs},
                                os.path.join(args.out, "mass_sweep.png"))
        payload["mass_sweep"] = {"masses": masses, "mpg": mpgs}
    _write_json(os.path.join(args.out, "eval_summary.json"), run_cfg,
                payload)
    print(f"{name}: mpg={payload['mpg_mean']:.3f} "
          f"reward={payload['reward_mean']:.3f} "
          f"collisions={payload['collisions']}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    run_cfg = _load_run_config(args)
    os.makedirs(args.out, exist_ok=True)
    scen = run_cfg.scenario_config()
    cycle = _resolve_cycle(args, run_cfg, stream=11)
    ecbf = None
    if args.safety == "ecbf":
        ecbf = _certified_ecbf(run_cfg, args.unsafe_override)
    entries = [(None, "pid")] + [(ck, None) for ck in args.checkpoint]
    rows = []
    series: Dict[str, List[float]] = {}
    masses = [float(m) for m in
              np.arange(scen.mass_range[0], scen.mass_range[1] + 1.0,
                        1000.0)] if args.mass_sweep else [None]
    results: Dict[str, Dict[str, object]] = {}
    for ck, forced_name in entries:
        controller, name = _make_controller(run_cfg, ck,
                                            args.allow_hash_mismatch)
        name = forced_name or name
        mpg_by_mass = []
        for m in masses:
            reps = _eval_episodes(run_cfg, controller, cycle, ecbf,
                                  args.episodes, stream=13,
                                  mass=m)
            s = _summarize(reps)
            mpg_by_mass.append(s["mpg_mean"])
            rows.append((name, -1.0 if m is None else m, s["mpg_mean"],
                         s["reward_mean"], s["mean_separation_in_range"],
                         s["min_separation"], s["collisions"],
                         s["interventions"]))
            if m is None or m == masses[0]:
                results[name] = s
        if args.mass_sweep:
            series[name] = mpg_by_mass
    _write_csv(os.path.join(args.out, "compare.csv"), run_cfg,
               ("controller", "mass", "mpg", "reward",
                "mean_separation_in_range", "min_separation", "collisions",
                "interventions"), rows)
    if args.mass_sweep:
        figures.plot_mass_sweep(masses, series,
                                os.path.join(args.out, "compare.png"))
    else:
        figures.plot_mass_sweep(
            [0.0], {k: [v["mpg_mean"]] for k, v in results.items()},
            os.path.join(args.out, "compare.png"))
    base = results.get("pid", {}).get("mpg_mean", 0.0)
    payload = {"cycle": cycle.name, "results": results,
               "mpg_delta_vs_pid": {k: float(v["mpg_mean"]) - float(base)
                                    for k, v in results.items()}}
    _write_json(os.path.join(args.out, "compare.json"), run_cfg, payload)
    for name, s in results.items():
        print(f"{name}: mpg={s['mpg_mean']:.3f} "
              f"reward={s['reward_mean']:.3f}")
    return 0


def cmd_cycle_gen(args: argparse.Namespace) -> int:
    run_cfg = _load_run_config(args)
    scen = run_cfg.scenario_config()
    cycle = synthetic_cycle(args.kind, args.duration,
                            make_rng(run_cfg.seed, 23), dt=scen.dt,
                            max_decel=scen.max_lead_decel,
                            max_accel=scen.max_lead_accel)
    out_dir = os.path.dirname(args.out_file) or "."
    os.makedirs(out_dir, exist_ok=True)
    save_cycle(cycle, args.out_file)
    png = args.out_file.rsplit(".", 1)[0] + ".png"
    figures.plot_cycle(np.arange(cycle.speed.size) * cycle.dt, cycle.speed,
                       png)
    print(f"wrote {args.out_file} ({cycle.duration:.1f} s, "
          f"mean {float(np.mean(cycle.speed)):.2f} m/s)")
    return 0


def cmd_dump_config(args: argparse.Namespace) -> int:
    run_cfg = _load_run_config(args)
    text = json.dumps(run_cfg.raw, sort_keys=True, indent=2)
    if args.out_file:
        with open(args.out_file, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="safeacc",
        description="Safety-filtered RL adaptive cruise control for a "
                    "heavy truck")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, out_default: str) -> None:
        p.add_argument("--config", default=None,
                       help="JSON config file overriding the defaults")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (overrides config)")
        p.add_argument("--out", default=out_default,
                       help="output directory")

    p = sub.add_parser("verify-gains",
                       help="certify the configured barrier gains")
    common(p, "out/verify")
    p.add_argument("--sweep", default=None, metavar="K1LO,K1HI,N1,K2LO,K2HI,N2",
                   help="also sweep a gain grid and write verdicts")
    p.set_defaults(func=cmd_verify_gains)

    p = sub.add_parser("train", help="train the RL controller")
    common(p, "out/train")
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--safety", choices=("ecbf", "reward-shaping", "none"),
                   default="ecbf")
    p.add_argument("--cycle", default=None,
                   help="drive-cycle CSV for the lead (default: synthetic)")
    p.add_argument("--cycle-kind", choices=("urban", "highway"),
                   default="urban")
    p.add_argument("--unsafe-override", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint or the PID "
                                    "baseline")
    common(p, "out/eval")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--safety", choices=("ecbf", "reward-shaping", "none"),
                   default="ecbf")
    p.add_argument("--cycle", default=None)
    p.add_argument("--cycle-kind", choices=("urban", "highway"),
                   default="urban")
    p.add_argument("--mass-sweep", action="store_true")
    p.add_argument("--allow-hash-mismatch", action="store_true")
    p.add_argument("--unsafe-override", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="compare controllers on one cycle")
    common(p, "out/compare")
    p.add_argument("--checkpoint", action="append", default=[])
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--safety", choices=("ecbf", "reward-shaping", "none"),
                   default="ecbf")
    p.add_argument("--cycle", default=None)
    p.add_argument("--cycle-kind", choices=("urban", "highway"),
                   default="urban")
    p.add_argument("--mass-sweep", action="store_true")
    p.add_argument("--allow-hash-mismatch", action="store_true")
    p.add_argument("--unsafe-override", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("cycle-gen", help="generate a synthetic drive cycle")
    common(p, "out/cycles")
    p.add_argument("--kind", choices=("urban", "highway"), default="urban")
    p.add_argument("--duration", type=float, default=600.0)
    p.add_argument("--out-file", default="out/cycles/cycle.csv")
    p.set_defaults(func=cmd_cycle_gen)

    p = sub.add_parser("dump-config", help="print the merged configuration")
    common(p, "out")
    p.add_argument("--out-file", default=None)
    p.set_defaults(func=cmd_dump_config)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
