"""Command-line front end.

Each command reads one experiment config, creates a fresh run directory
named ``<command>-<UTC timestamp>-<config hash>`` under the output root and
writes CSV/JSON results there.  Exit codes: 0 pass, 2 certification failed
or threshold/trend not met, 1 usage or runtime error.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .certify import (certify_model, min_coupling_gain, verify_media_layer,
                      verify_node_contraction, _box_from)
from .config import (ExperimentConfig, CertifySpec, build_system, config_hash, grid_values,
                     initial_states, integrator_config, is_vector_field, load_config,
                     model_params, parse_config)
from .diagnostics import (distortion, dumps, fit_exponential_rate, group_distance,
                          pairwise_sync_error, sync_report)
from .errors import DivergenceError, InputError, QuorumSyncError
from .sim import SdeConfig, integrate, integrate_sde

__all__ = ["main", "build_parser", "cmd_certify", "cmd_simulate", "cmd_sweep", "cmd_noise"]

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def _write(path: Path, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def _write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)] + [",".join(_fmt(v) for v in row) for row in rows]
    _write(path, "\n".join(lines) + "\n")


def make_run_dir(root, command: str, cfg: ExperimentConfig) -> Path:
    """Fresh directory ``<root>/<command>-<timestamp>-<hash8>``; never reuses one."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    base = f"{command}-{stamp}-{config_hash(cfg, command)}"
    path, k = root / base, 1
    while True:
        try:
            path.mkdir()
            return path
        except FileExistsError:
            k += 1
            path = root / f"{base}-{k}"


def _resolve_seed(cfg: ExperimentConfig, command: str, seed: Optional[int]) -> ExperimentConfig:
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": int(seed)})
    if cfg.seed is None and cfg.randomized(command):
        raise InputError(f"'{command}' draws random numbers under this config: set 'seed' "
                         "in the config or pass --seed")
    return cfg


def _need_span(cfg: ExperimentConfig) -> tuple[float, float]:
    if cfg.t_span is None:
        raise InputError("config needs 't_span'")
    return cfg.t_span


def preflight(cfg: ExperimentConfig, command: str) -> None:
    """Checks that need no computation; run before any output is created."""
    if command in ("simulate", "sweep", "noise"):
        _need_span(cfg)
    if command == "sweep":
        if cfg.sweep is None:
            raise InputError("config needs a 'sweep' section")
        if cfg.model is None:
            raise InputError("sweeps need a catalog model")
        grid_values(cfg.sweep.grid)
    if command == "noise" and cfg.noise is None:
        raise InputError("config needs a 'noise' section")
    build_system(cfg)


# -- certify ----------------------------------------------------------------------------


def cmd_certify(cfg: ExperimentConfig, run_dir: Path) -> int:
    spec = cfg.certify or CertifySpec()
    samples = {"n_lowdisc": spec.n_lowdisc, "n_random": spec.n_random}
    box = spec.box.model_dump() if spec.box is not None else None
    seed = cfg.seed if cfg.seed is not None else 0
    if cfg.model is not None:
        params, settings = model_params(cfg)
        result = certify_model(cfg.model, params, settings, box, spec.measure, samples, seed)
    else:
        net = build_system(cfg)
        kind = spec.measure or "L1"
        parts = []
        for g in net.groups:
            d = g.node_dim + net.medium(net.attachments[g.name]).dim
            parts.append(verify_node_contraction(g, _box_from(box, d, 0.0, 10.0), kind,
                                                 seed=seed, **samples))
        for m in net.media:
            parts.append(verify_media_layer(net, _box_from(box, 2 * m.dim, 0.0, 10.0), kind,
                                            m.name, seed=seed, **samples))
        result = {"schema": "quorumsync.certificate/1", "model": "inline",
                  "verdict": "pass" if all(p.passed for p in parts) else "fail",
                  "params": dict(cfg.network.params), "parts": [p.to_dict() for p in parts]}
    _write(run_dir / "certificate.json", dumps(result))
    print(f"certify: {result['verdict']}")
    return EXIT_PASS if result["verdict"] == "pass" else EXIT_FAIL


# -- simulate ---------------------------------------------------------------------------


def _error_table(traj, net, norm):
    header, cols = ["t"], [traj.times]
    for g in net.groups:
        header.append(f"e:{g.name}")
        cols.append(pairwise_sync_error(traj, net, g.name, norm))
    names = [g.name for g in net.groups]
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            if net.group(a).node_dim == net.group(b).node_dim:
                header.append(f"d:{a}|{b}")
                cols.append(group_distance(traj, net, a, b, norm))
    return header, np.column_stack(cols)


def cmd_simulate(cfg: ExperimentConfig, run_dir: Path) -> int:
    t_span = _need_span(cfg)
    system = build_system(cfg)
    x0s = initial_states(cfg, system, cfg.seed)
    rep_spec = cfg.report
    runs, finals, ok = [], [], True
    for r, x0 in enumerate(x0s):
        if cfg.noise is not None:
            sde = SdeConfig(h=cfg.noise.h, sigma=cfg.noise.sigma, seed=cfg.seed, run_index=r,
                            dt_out=cfg.noise.dt_out)
            traj = integrate_sde(system, x0, t_span, sde)
        else:
            traj = integrate(system, x0, t_span, integrator_config(cfg))
        traj.to_csv(run_dir / f"trajectory_{r:03d}.csv")
        finals.append(traj.final)
        entry = {"run": r, "initial_state": x0, "final_state": traj.final,
                 "flags": list(traj.flags)}
        if is_vector_field(system):
            entry["final_residual"] = float(np.max(np.abs(system(traj.final, traj.times[-1]))))
        else:
            rep = sync_report(traj, system, rep_spec.observables, rep_spec.sync_tol,
                              rep_spec.norm, with_distortion=cfg.noise is not None)
            _write(run_dir / f"report_{r:03d}.json", rep.to_json())
            header, table = _error_table(traj, system, rep_spec.norm)
            _write_csv(run_dir / f"errors_{r:03d}.csv", header, table.tolist())
            entry["report"] = rep.to_dict()
            ok = ok and all(g["synchronized"] for g in entry["report"]["groups"].values())
        runs.append(entry)
    F = np.array(finals)
    spread = float(np.max(np.abs(F[:, None, :] - F[None, :, :]))) if len(F) > 1 else 0.0
    summary = {"schema": "quorumsync.simulate/1", "model": cfg.model or "inline",
               "t_span": list(t_span), "runs": runs, "final_spread": spread,
               "all_synchronized": ok if not is_vector_field(system) else None}
    _write(run_dir / "summary.json", dumps(summary))
    print(f"simulate: {len(runs)} run(s), final spread {spread:.3e}")
    if rep_spec.require_sync and not ok:
        return EXIT_FAIL
    return EXIT_PASS


# -- sweep ------------------------------------------------------------------------------


def _as_param(value: float):
    return int(value) if float(value).is_integer() else float(value)


def _sweep_point(cfg_dict: dict, i: int, outer_value, grid_value: float) -> dict:
    """One sweep point; pure function of its arguments (safe in a worker process)."""
    cfg = parse_config(cfg_dict)
    sw = cfg.sweep
    overrides = {}
    if sw.outer is not None:
        overrides[sw.outer.parameter] = _as_param(outer_value)
    value = grid_value
    if sw.scale_by is not None:
        params, _ = model_params(cfg, overrides)
        value = grid_value / float(getattr(params, sw.scale_by))
    overrides[sw.parameter] = value
    net = build_system(cfg, overrides)
    x0 = initial_states(cfg, net, cfg.seed, stream=(i,))[0]
    out = {"outer_index": i, "outer_value": outer_value, "grid_value": grid_value,
           "value": value, "alpha": net.metadata.get("alpha") if hasattr(net, "metadata") else None}
    try:
        traj = integrate(net, x0, cfg.t_span, integrator_config(cfg))
    except DivergenceError:
        out.update(synchronized=False, rate=None, metric=float("inf"))
        return out
    e = np.max([pairwise_sync_error(traj, net, g.name, cfg.report.norm) for g in net.groups],
               axis=0)
    metric = float(e[-1] / e[0]) if e[0] > 0 else 0.0
    try:
        rate = fit_exponential_rate(traj.times, e).rate
    except InputError:
        rate = None
    out.update(synchronized=bool(e[-1] < sw.tol * e[0]) if e[0] > 0 else True,
               rate=rate, metric=metric)
    return out


def _threshold(points: list[dict]) -> dict:
    """Smallest grid value from which every larger grid value synchronizes."""
    pts = sorted(points, key=lambda p: p["grid_value"])
    flags = [p["synchronized"] for p in pts]
    flips = sum(1 for a, b in zip(flags, flags[1:]) if a != b)
    monotone = flips == 0 or (flips == 1 and not flags[0])
    k = len(flags)
    while k > 0 and flags[k - 1]:
        k -= 1
    if k == len(flags):
        return {"grid_threshold": None, "value_threshold": None, "monotone": monotone,
                "bracketed": False}
    return {"grid_threshold": pts[k]["grid_value"], "value_threshold": pts[k]["value"],
            "monotone": monotone, "bracketed": k > 0}


def _pool_map(fn, tasks, workers: int):
    if workers <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, *zip(*tasks)))


def cmd_sweep(cfg: ExperimentConfig, run_dir: Path, workers: int = 1) -> int:
    preflight(cfg, "sweep")
    sw = cfg.sweep
    grid = grid_values(sw.grid)
    outer = sw.outer.values if sw.outer is not None else [None]
    tasks = [(cfg.canonical(), i, ov, float(g)) for i, ov in enumerate(outer) for g in grid]
    results = _pool_map(_sweep_point, tasks, workers)
    _write_csv(run_dir / "sweep.csv",
               ["outer_value", "grid_value", "parameter_value", "synchronized", "rate", "metric"],
               [[r["outer_value"], r["grid_value"], r["value"], r["synchronized"], r["rate"],
                 r["metric"]] for r in results])
    rows, table, met = [], [], True
    for i, ov in enumerate(outer):
        pts = [r for r in results if r["outer_index"] == i]
        th = _threshold(pts)
        alpha = pts[0]["alpha"]
        params, _ = model_params(cfg, {sw.outer.parameter: _as_param(ov)} if sw.outer else {})
        scale = float(getattr(params, sw.scale_by)) if sw.scale_by is not None else None
        # the sufficient gain alpha/N exists only for models that publish alpha
        count = getattr(params, "N", None)
        cert = min_coupling_gain(alpha, int(count)) if alpha is not None and count else None
        row = {"outer_value": ov, **th, "scale": scale, "certified_value": cert}
        rows.append(row)
        table.append([ov, th["value_threshold"], th["grid_threshold"], cert, th["monotone"],
                      th["bracketed"]])
        met = met and th["value_threshold"] is not None
    _write_csv(run_dir / "thresholds.csv",
               ["outer_value", "threshold", "threshold_times_scale", "certified_value",
                "monotone", "bracketed"], table)
    _write(run_dir / "summary.json",
           dumps({"schema": "quorumsync.sweep/1", "model": cfg.model, "parameter": sw.parameter,
                  "scale_by": sw.scale_by, "outer": sw.outer.parameter if sw.outer else None,
                  "tol": sw.tol, "thresholds": rows, "all_thresholds_found": met}))
    print(f"sweep: {len(results)} point(s), thresholds found: {met}")
    return EXIT_PASS if met else EXIT_FAIL


# -- noise ------------------------------------------------------------------------------


def _noise_run(cfg_dict: dict, i: int, outer_value, r: int) -> dict:
    cfg = parse_config(cfg_dict)
    nz = cfg.noise
    overrides = {nz.outer.parameter: _as_param(outer_value)} if nz.outer is not None else {}
    net = build_system(cfg, overrides)
    if is_vector_field(net) or len(net.groups) != 1:
        raise InputError("the noise command needs a single-group network")
    x0 = initial_states(cfg, net, cfg.seed, stream=(i, r))[0]
    sde = SdeConfig(h=nz.h, sigma=nz.sigma, seed=cfg.seed, run_index=i * nz.runs + r,
                    dt_out=nz.dt_out)
    traj = integrate_sde(net, x0, cfg.t_span, sde)
    # same initial state without noise: reference for the center of mass
    ref = integrate_sde(net, x0, cfg.t_span, SdeConfig(h=nz.h, sigma=0.0, dt_out=nz.dt_out))
    d = distortion(traj, net, kind=cfg.report.norm)
    n0 = int(round(traj.times.size * (1.0 - nz.tail_fraction)))
    g = net.groups[0].name
    dev = d.center - net.group_states(ref.states, g).mean(axis=1)
    return {"outer_index": i, "run": r,
            "distortion": float(d.norm[n0:].mean()),
            "com_fluctuation": float(np.sqrt((dev[n0:] ** 2).sum(axis=1).mean()))}


def _strictly_decreasing(v) -> bool:
    return bool(np.all(np.diff(np.asarray(v, dtype=float)) < 0))


def cmd_noise(cfg: ExperimentConfig, run_dir: Path, workers: int = 1) -> int:
    preflight(cfg, "noise")
    nz = cfg.noise
    outer = nz.outer.values if nz.outer is not None else [None]
    tasks = [(cfg.canonical(), i, ov, r) for i, ov in enumerate(outer) for r in range(nz.runs)]
    results = _pool_map(_noise_run, tasks, workers)
    _write_csv(run_dir / "noise_runs.csv", ["outer_value", "run", "distortion", "com_fluctuation"],
               [[outer[x["outer_index"]], x["run"], x["distortion"], x["com_fluctuation"]]
                for x in results])
    rows, dist, com = [], [], []
    for i, ov in enumerate(outer):
        a = np.array([x["distortion"] for x in results if x["outer_index"] == i])
        b = np.array([x["com_fluctuation"] for x in results if x["outer_index"] == i])
        sem = (lambda v: float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else None)
        rows.append([ov, a.size, a.mean(), sem(a), b.mean(), sem(b)])
        dist.append(float(a.mean()))
        com.append(float(b.mean()))
    _write_csv(run_dir / "noise.csv", ["outer_value", "runs", "mean_distortion", "sem_distortion",
                                       "mean_com_fluctuation", "sem_com_fluctuation"], rows)
    trend = {"distortion_decreasing": _strictly_decreasing(dist),
             "com_fluctuation_decreasing": _strictly_decreasing(com)}
    _write(run_dir / "summary.json",
           dumps({"schema": "quorumsync.noise/1", "model": cfg.model or "inline",
                  "sigma": nz.sigma, "runs": nz.runs,
                  "outer": nz.outer.parameter if nz.outer else None, "outer_values": outer,
                  "mean_distortion": dist, "mean_com_fluctuation": com, **trend}))
    print("noise: distortion " + " ".join(f"{v:.4g}" for v in dist)
          + "; com fluctuation " + " ".join(f"{v:.4g}" for v in com))
    if len(outer) > 1 and not all(trend.values()):
        return EXIT_FAIL
    return EXIT_PASS


# -- entry point ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quorumsync",
                                description="Certify and simulate synchronization in "
                                            "quorum-sensing networks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [("certify", "contraction certificate for the configured system"),
                        ("simulate", "integrate and report synchronization"),
                        ("sweep", "parameter sweep with empirical sync threshold"),
                        ("noise", "Monte-Carlo noise statistics")]:
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True, help="experiment config (.json/.yaml)")
        s.add_argument("--out", default=None, help="output root (default: config output_dir "
                                                   "or ./runs)")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        if name in ("sweep", "noise"):
            s.add_argument("--workers", type=int, default=1, help="worker processes")
    sub.add_parser("schema", help="print the config JSON schema")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "schema":
        sys.stdout.write(dumps(ExperimentConfig.model_json_schema(by_alias=True)))
        return EXIT_PASS
    try:
        if args.seed is not None and args.seed < 0:
            raise InputError("--seed must be nonnegative")
        cfg = _resolve_seed(load_config(args.config), args.command, args.seed)
        preflight(cfg, args.command)
        root = args.out or cfg.output_dir or "runs"
        run_dir = make_run_dir(root, args.command, cfg)
        _write(run_dir / "config.json", dumps(cfg.canonical()))
        print(f"run directory: {run_dir}")
        if args.command == "certify":
            return cmd_certify(cfg, run_dir)
        if args.command == "simulate":
            return cmd_simulate(cfg, run_dir)
        if args.command == "sweep":
            return cmd_sweep(cfg, run_dir, max(1, args.workers))
        return cmd_noise(cfg, run_dir, max(1, args.workers))
    except (QuorumSyncError, ValueError, ArithmeticError, NotImplementedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
