"""Command-line orchestration.

Commands: flow, diagnose, theta, stability, mcond, diameter, validate; shared
flags --config <path>, --out <dir>, --seed <u64>.  Every exit path writes a
machine-readable status.json naming the terminating condition; artifacts are
written atomically and are byte-identical for identical config + seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import (
    RunConfig,
    build_potential,
    load_polygon_checked,
    load_run_config,
)
from .curvature import sup_rm_estimate, write_field_csv
from .errors import ConfigError, ToricFlowError
from .flow import (
    HISTORY_HEADER,
    ModifiedCalabiFlow,
    observed_decay_rate,
    write_history_csv,
)
from .functionals import (
    QuadratureRule,
    boundary_integral_normalized,
    energy_report,
    l_functional,
    solve_theta,
)
from .potential import AffineFunction, save_potential
from .stability import (
    CreaseFunction,
    diameter_estimate,
    l_of_crease,
    lambda_estimate,
    m_condition_estimate,
)

COMMANDS = ("flow", "diagnose", "theta", "stability", "mcond", "diameter", "validate")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_TIME_LIMIT = 2
EXIT_DEGENERATE = 3
EXIT_CURVATURE = 4

_FLOW_EXIT = {
    "converged": EXIT_OK,
    "time_limit": EXIT_TIME_LIMIT,
    "stalled": EXIT_DEGENERATE,
    "degenerate": EXIT_DEGENERATE,
    "curvature_bound": EXIT_CURVATURE,
}

PLOT_SCRIPT = """\
#!/usr/bin/env python3
\"\"\"Render energy and curvature traces from history.csv (written next to it).\"\"\"
import csv
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "history.csv"
rows = list(csv.DictReader(open(path)))
t = [float(r["t"]) for r in rows]
fig, axes = plt.subplots(2, 2, figsize=(10, 7))
for ax, col in zip(axes.flat, ("mabuchi_rel", "calabi_mod", "sup_rm", "l2_ref")):
    y = [float(r[col]) for r in rows]
    ax.plot(t, y)
    ax.set_xlabel("t")
    ax.set_ylabel(col)
    if col == "calabi_mod":
        ax.set_yscale("log")
fig.tight_layout()
fig.savefig("flow_traces.png", dpi=150)
print("wrote flow_traces.png")
"""


def _write_text(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path, data):
    _write_text(path, json.dumps(data, indent=1, sort_keys=True) + "\n")


def _finish(out_dir, command, condition, detail, code):
    os.makedirs(out_dir, exist_ok=True)
    _write_json(
        os.path.join(out_dir, "status.json"),
        {"command": command, "condition": condition, "detail": detail, "exit_code": code},
    )
    if code == EXIT_CONFIG:
        print(f"error: {detail}", file=sys.stderr)
    return code


def _parse(argv):
    parser = argparse.ArgumentParser(prog="toricflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="RNG seed (overrides config)")
    return parser.parse_args(argv)


def main(argv=None):
    args = _parse(argv if argv is not None else sys.argv[1:])
    command = args.command
    fallback_out = args.out or "runs"
    try:
        cfg = load_run_config(args.config)
    except ConfigError as exc:
        return _finish(fallback_out, command, "config_error", str(exc), EXIT_CONFIG)
    if args.out:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)

    try:
        poly = load_polygon_checked(cfg)
    except ConfigError as exc:
        return _finish(out, command, "config_error", str(exc), EXIT_CONFIG)

    report = poly.validate()
    if command == "validate":
        _write_json(
            os.path.join(out, "validation.json"),
            {"ok": report.ok, "violations": report.violations},
        )
        for line in report.violations:
            print(line)
        print("valid" if report.ok else "invalid")
        condition = "valid_polygon" if report.ok else "invalid_polygon"
        return _finish(out, command, condition, "; ".join(report.violations), 0 if report.ok else EXIT_CONFIG)
    if not report.ok:
        return _finish(out, command, "invalid_polygon", "; ".join(report.violations), EXIT_CONFIG)

    try:
        return _dispatch(command, cfg, poly, out)
    except ConfigError as exc:
        return _finish(out, command, "config_error", str(exc), EXIT_CONFIG)
    except ToricFlowError as exc:
        return _finish(out, command, "error", str(exc), EXIT_DEGENERATE)


def _dispatch(command, cfg, poly, out):
    q = cfg.quadrature
    rule = QuadratureRule.build(
        poly, depth=q.depth, order=q.order,
        boundary_order=q.boundary_order, boundary_depth=q.boundary_depth,
    )
    theta = solve_theta(poly)

    if command == "theta":
        print(f"theta = ({theta.a0!r}, {theta.a1!r}, {theta.a2!r})")
        _write_json(os.path.join(out, "theta.json"), {"theta": list(theta.coefficients)})
        return _finish(out, command, "done", "", EXIT_OK)

    if command == "flow":
        return _cmd_flow(cfg, poly, rule, out)

    u = build_potential(poly, cfg.potential)
    st = cfg.stability

    if command == "stability":
        res = lambda_estimate(
            poly, theta, n_directions=st.n_directions, n_offsets=st.n_offsets,
            refine=st.refine, keep_table=st.dump_crease_csv,
        )
        if st.dump_crease_csv and res.table:
            lines = ["angle,b,ratio"] + [f"{a!r},{b!r},{r!r}" for a, b, r in res.table]
            _write_text(os.path.join(out, "creases.csv"), "\n".join(lines) + "\n")
        _write_json(os.path.join(out, "stability.json"), _lambda_dict(res))
        return _finish(out, command, "done", f"lambda_hat={res.lambda_hat!r}", EXIT_OK)

    if command == "mcond":
        res = m_condition_estimate(
            u, offsets=st.mcond_offsets,
            edge_fractions=st.mcond_edge_fractions, grid_n=st.mcond_grid,
        )
        _write_json(os.path.join(out, "mcond.json"), _mcond_dict(res))
        return _finish(out, command, "done", f"M_hat={res.m_hat!r}", EXIT_OK)

    if command == "diameter":
        res = diameter_estimate(u, depth=st.diameter_depth, order=st.diameter_order)
        _write_json(
            os.path.join(out, "diameter.json"),
            {"diam_hat": res.diam_hat, "rays": res.rays},
        )
        return _finish(out, command, "done", f"diam_hat={res.diam_hat!r}", EXIT_OK)

    if command == "diagnose":
        return _cmd_diagnose(cfg, poly, theta, rule, u, out)

    raise ConfigError(f"unknown command {command}")


def _cmd_flow(cfg, poly, rule, out):
    u0 = build_potential(poly, cfg.potential)
    driver = ModifiedCalabiFlow(
        poly, degree=cfg.potential.degree, params=cfg.flow, rule=rule, seed=cfg.seed
    )
    state = driver.initial_state(u0)
    state = driver.run(state)
    write_history_csv(state.history, os.path.join(out, "history.csv"))
    save_potential(state.potential, os.path.join(out, "final_potential.json"))
    rep = energy_report(state.potential, driver.theta, rule)
    _write_text(
        os.path.join(out, "energy_report.csv"),
        rep.CSV_HEADER + "\n" + rep.csv_row() + "\n",
    )
    _write_text(os.path.join(out, "plot_history.py"), PLOT_SCRIPT)
    code = _FLOW_EXIT[state.status]
    rate = observed_decay_rate(state.history)
    detail = (
        f"t={state.t!r} steps={len(state.history) - 1} "
        f"calabi={state.history[-1].calabi_mod!r} decay_rate={rate!r}"
    )
    return _finish(out, "flow", state.status, detail, code)


def _cmd_diagnose(cfg, poly, theta, rule, u, out):
    st = cfg.stability
    affine_check = l_functional(poly, theta, AffineFunction(1.0, 0.5, -0.25), rule)
    lo, hi = poly.bounding_box
    mid_crease = CreaseFunction((1.0, 0.0), 0.5 * (lo[0] + hi[0]))
    res_lambda = lambda_estimate(
        poly, theta, n_directions=st.n_directions, n_offsets=st.n_offsets, refine=st.refine
    )
    res_m = m_condition_estimate(
        u, offsets=st.mcond_offsets, edge_fractions=st.mcond_edge_fractions, grid_n=st.mcond_grid
    )
    res_d = diameter_estimate(u, depth=st.diameter_depth, order=st.diameter_order)
    report = {
        "theta": list(theta.coefficients),
        "l_spot_checks": {
            "affine": affine_check,
            "mid_crease": l_of_crease(poly, theta, mid_crease),
        },
        "lambda_hat": res_lambda.lambda_hat,
        "argmin_crease": {"a": list(res_lambda.crease.a), "b": res_lambda.crease.b},
        "M_hat": res_m.m_hat,
        "worst_segment": {"x1": list(res_m.worst.x1), "x4": list(res_m.worst.x4)},
        "diam_hat": res_d.diam_hat,
        "sup_rm": sup_rm_estimate(u, seed=cfg.seed),
        "boundary_int": boundary_integral_normalized(u, rule),
    }
    _write_json(os.path.join(out, "report.json"), report)
    rep = energy_report(u, theta, rule)
    _write_text(
        os.path.join(out, "energy_report.csv"), rep.CSV_HEADER + "\n" + rep.csv_row() + "\n"
    )
    # curvature field on a small interior grid
    gx = np.linspace(lo[0], hi[0], 22)[1:-1]
    gy = np.linspace(lo[1], hi[1], 22)[1:-1]
    mesh = np.array([(x, y) for x in gx for y in gy])
    mesh = mesh[poly.contains(mesh, margin=1e-3 * poly.scale)]
    write_field_csv(u, mesh, os.path.join(out, "curvature_field.csv"))
    return _finish(out, "diagnose", "done", f"lambda_hat={res_lambda.lambda_hat!r}", EXIT_OK)


def _lambda_dict(res):
    return {
        "lambda_hat": res.lambda_hat,
        "argmin_crease": {"a": list(res.crease.a), "b": res.crease.b},
        "stable_in_family": res.stable_in_family,
        "n_evaluated": res.n_evaluated,
    }


def _mcond_dict(res):
    return {
        "M_hat": res.m_hat,
        "worst_segment": {"x1": list(res.worst.x1), "x4": list(res.worst.x4)},
        "n_segments": res.n_segments,
    }


if __name__ == "__main__":
    sys.exit(main())
