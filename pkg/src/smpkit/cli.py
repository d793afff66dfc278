"""Command-line runner: ``smpkit --config exp.json [--seed N] [--out DIR] [--quiet]``.

Exit codes: 0 success, 1 a check failed or solver and Monte Carlo disagree,
2 the config is invalid (nothing is written), 3 a numerical error at run time.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from .config import ExperimentConfig, load_config
from .errors import ConfigError, SMPError
from .forward_solver import solve_row, support_defect, transition_prob, write_rows_csv
from .monte_carlo import estimate_duration_cdfs, estimate_transition
from .simulator import simulate_batch, write_trajectories_csv
from .verification import (CheckReport, check_derivative_limit, check_dominating_bound, check_forward_residual,
                           check_quick_cycle, check_two_jump, embedded_chain_test)

log = logging.getLogger("smpkit")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _fmt(x) -> str:
    return f"{x:.12g}" if isinstance(x, (float, np.floating)) else str(x)


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_simulate(cfg: ExperimentConfig) -> int:
    p, m = cfg.params, cfg.model
    batch = simulate_batch(m, p["i0"], p["s"], p["u"], p["horizon"], p["n_paths"], cfg.seed,
                           max_jumps=p["max_jumps"])
    write_trajectories_csv(batch, os.path.join(cfg.out, "trajectories.csv"), m.states.labels)
    z, _, n = batch.state_at(p["horizon"])
    summary = {
        "n_paths": len(batch),
        "mean_jumps": float(n.mean()),
        "max_jumps": int(n.max(initial=0)),
        "final_state_counts": {m.states.labels[k]: int(c) for k, c in enumerate(np.bincount(z, minlength=m.size))},
    }
    _write_json(os.path.join(cfg.out, "summary.json"), summary)
    log.info("simulated %d paths, mean jumps %.4g", len(batch), summary["mean_jumps"])
    return EXIT_OK


def run_solve(cfg: ExperimentConfig) -> int:
    p, m = cfg.params, cfg.model
    outs = p["output_times"] if p["output_times"] is not None else [p["t_end"]]
    sol = solve_row(m, p["i0"], p["s"], p["u"], p["t_end"], p["dt"], output_times=outs)
    summary = {"defect": sol.defect, "leaked": sol.leaked, "rows": []}
    for k, t in enumerate(sorted(set(float(x) for x in outs))):
        row = sol.at(t)
        name = f"row_{k:03d}.csv"
        write_rows_csv([row], os.path.join(cfg.out, name), m.states.labels)
        summary["rows"].append({"file": name, "t": t, "total_mass": row.total_mass,
                                "support_defect": support_defect(row),
                                "marginals": {m.states.labels[j]: float(v) for j, v in enumerate(row.marginals)}})
    _write_json(os.path.join(cfg.out, "summary.json"), summary)
    log.info("solved %d steps, mass defect %.3g", sol.times.size - 1, sol.defect)
    return EXIT_OK


def run_compare(cfg: ExperimentConfig) -> int:
    p, m = cfg.params, cfg.model
    lab = m.states.labels
    i0 = m.states.index(p["i0"])
    row = solve_row(m, i0, p["s"], p["u"], p["t"], p["dt"]).final
    marg = estimate_transition(m, i0, p["s"], p["u"], p["t"], p["n_paths"], cfg.seed)
    cdfs = estimate_duration_cdfs(m, i0, p["s"], p["u"], p["t"], p["d_grid"], p["n_paths"], cfg.seed) \
        if p["d_grid"] else {}
    lines, ok = [], True

    def add(j, d, solver, est, se, n):
        nonlocal ok
        agree = abs(est - solver) <= p["k_se"] * se + p["abs_tol"]
        ok &= agree
        lines.append([lab[i0], lab[j], _fmt(p["s"]), _fmt(p["t"]), _fmt(p["u"]), d, _fmt(solver), _fmt(est),
                      _fmt(se), n, "true" if agree else "false"])

    for j in range(m.size):
        add(j, "total", transition_prob(row, j), float(marg.estimate[j]), float(marg.stderr[j]), marg.n)
        if j in cdfs:
            for c, d in enumerate(cdfs[j].keys):
                add(j, _fmt(float(d)), transition_prob(row, j, d), float(cdfs[j].estimate[c]),
                    float(cdfs[j].stderr[c]), cdfs[j].n)
    with open(os.path.join(cfg.out, "compare.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "s", "t", "u", "d_or_total", "solver", "estimate", "stderr", "n", "agree"])
        w.writerows(lines)
    log.info("compare: %d rows, %s", len(lines), "all agree" if ok else "DISAGREEMENT")
    return EXIT_OK if ok else EXIT_FAIL


def _run_check(cfg: ExperimentConfig, c: dict) -> list:
    m, seed = cfg.model, cfg.seed
    name = c["check"]
    if name == "two_jump":
        return check_two_jump(m, m.states.index(c["i"]), c["t"], c["u"], c["h_list"], c["n_paths"], seed)
    if name == "quick_cycle":
        return check_quick_cycle(m, m.states.index(c["i"]), c["t"], c["u"], c["h_list"], c["n_paths"], seed)
    if name == "derivative_limit":
        return check_derivative_limit(m, c["t"], c["u"], c["h_list"], c["dt"], c["min_order"], c["final_tol"])
    if name == "dominating_bound":
        return [check_dominating_bound(m, c["t"], c["u"], c["h_list"], c["dt"])]
    if name == "forward_residual":
        return [check_forward_residual(m, m.states.index(c["i0"]), c["s"], c["u"], c["d"], c["t_grid"],
                                       tuple(c["dts"]), c["max_ratio"])]
    if name == "embedded_chain":
        y0 = m.states.index(c["y0"]) if c["y0"] is not None else 0
        return [embedded_chain_test(m, c["n_paths"], c["n_events"], seed, c["significance"], y0=y0)]
    if name == "conservation":
        sol = solve_row(m, m.states.index(c["i0"]), c["s"], c["u"], c["t_end"], c["dt"])
        span = max(c["t_end"] - c["s"], 1e-300)
        drift = sol.defect / span
        sup = support_defect(sol.final)
        inp = {k: c[k] for k in ("i0", "s", "u", "t_end", "dt")}
        return [CheckReport("conservation", inp, drift, c["per_unit_time"], drift <= c["per_unit_time"],
                            c["per_unit_time"] - drift),
                CheckReport("support", inp, sup, 0.0, sup == 0.0, -sup)]
    raise ConfigError(f"unknown check {name!r}")


def run_verify(cfg: ExperimentConfig) -> int:
    reports = []
    for c in cfg.params["checks"]:
        reports.extend(_run_check(cfg, c))
    _write_json(os.path.join(cfg.out, "checks.json"), [r.to_dict() for r in reports])
    for r in reports:
        log.info("%-24s %s  computed=%.6g target=%.6g", r.name, "PASS" if r.passed else "FAIL", r.computed, r.target)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


RUNNERS = {"simulate": run_simulate, "solve": run_solve, "verify": run_verify, "compare": run_compare}


def run(config_path, seed: int | None = None, out: str | None = None) -> int:
    """Load, validate and execute a config; returns the process exit code."""
    try:
        cfg = load_config(config_path, seed, out)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "resolved_config.json"), "w") as fh:
        fh.write(cfg.to_json())
    try:
        return RUNNERS[cfg.kind](cfg)
    except SMPError as exc:
        log.error("run failed: %s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2^64)")
    return v


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="smpkit", description="Semi-Markov simulation, forward solver and checks.")
    ap.add_argument("--config", required=True, help="experiment JSON file")
    ap.add_argument("--seed", type=_u64, help="override the config seed")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--quiet", action="store_true", help="only report errors")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(message)s",
                        stream=sys.stderr, force=True)
    return run(args.config, args.seed, args.out)


if __name__ == "__main__":
    sys.exit(main())
