"""Command-line experiment runner.

Subcommands ``check``, ``simulate`` and ``sweep`` read a YAML experiment
file, validated against the bundled JSON schema, and write their results
to an output directory.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
import time
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np
import yaml

from .cones import certify, generate_H, generate_Z
from .dynamics import IntegrationError, IntegratorConfig, convergence_study, format_float, integrate, tracking_error
from .geometry import ConfigurationError
from .models import HovercraftParams, SubmarineParams, flat_system, hovercraft, orthogonality_drift, sample_states, submarine
from .synthesis import (ReferenceCurve, SynthesisError, eta_schedule, parameterize_reference, recursion_H,
                        recursion_Z)

__all__ = ["main", "load_config", "validate_config", "build_system", "build_reference", "bundled_configs",
           "svg_chart", "EXIT_OK", "EXIT_VIOLATED", "EXIT_UNDECIDED", "EXIT_FAILURE"]

log = logging.getLogger("acctrack")

EXIT_OK, EXIT_FAILURE, EXIT_VIOLATED, EXIT_UNDECIDED = 0, 1, 2, 3

DEFAULTS = {
    "seed": 0,
    "check": {"max_level": 3, "n_states": 20, "box": 2.0},
    "synthesis": {"mode": "Z", "family": "involved", "regime": "Z4", "epsilon": 0.05, "sequence": "psi",
                  "period": 1.0, "grid": 201},
    "integrator": {"rel_tol": 1e-7, "abs_tol": 1e-7, "n_out": 2001, "project": False, "method": "auto"},
    "output": {"control_rate": 1000.0, "plots": True},
}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------
def _schema() -> dict:
    return json.loads(resources.files("acctrack.configs").joinpath("schema.json").read_text())


def bundled_configs() -> list:
    """Names of the example configurations shipped with the package."""
    return sorted(p.name[:-5] for p in resources.files("acctrack.configs").iterdir() if p.name.endswith(".yaml"))


def validate_config(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise ConfigurationError(f"invalid configuration at {where}: {exc.message}") from None
    return cfg


def load_config(path) -> dict:
    """Read and validate a config file; bare names refer to bundled configs."""
    p = Path(path)
    if p.exists():
        text = p.read_text()
    else:
        name = p.name[:-5] if p.name.endswith(".yaml") else p.name
        res = resources.files("acctrack.configs").joinpath(f"{name}.yaml")
        if not res.is_file():
            raise ConfigurationError(f"no config file {path!r} and no bundled config named {name!r}")
        text = res.read_text()
    cfg = yaml.safe_load(text)
    if not isinstance(cfg, dict):
        raise ConfigurationError("configuration must be a mapping")
    return validate_config(cfg)


def _section(cfg: dict, key: str) -> dict:
    out = dict(DEFAULTS.get(key, {}))
    out.update(cfg.get(key, {}))
    return out


def build_system(cfg: dict):
    m = cfg["model"]
    params = m.get("params", {})
    jac = m.get("jacobian", "closed")
    if m["name"] == "hovercraft":
        return hovercraft(HovercraftParams(**params), jacobian=jac)
    if m["name"] == "submarine":
        return submarine(SubmarineParams(**params), jacobian=jac, inputs=m.get("inputs", "momentum"))
    return flat_system(int(m.get("dim", 2)), m.get("actuated"))


def build_reference(cfg: dict, system) -> ReferenceCurve:
    r = cfg.get("reference")
    if r is None:
        raise ConfigurationError("this command needs a 'reference' section")
    horizon = tuple(r.get("horizon", (0.0, 1.0)))
    if r["name"] == "rest":
        return ReferenceCurve.rest(system, horizon)
    if r["name"] == "submarine_diagonal":
        return ReferenceCurve.submarine_diagonal(system, horizon)
    if r["name"] == "hovercraft_sideways":
        return ReferenceCurve.hovercraft_sideways(system, r.get("accel", 0.5), horizon)
    coefs = r.get("coefficients")
    if coefs is None or len(coefs) != system.phase_chart.dim:
        raise ConfigurationError(f"polynomial reference needs {system.phase_chart.dim} coefficient rows")
    return ReferenceCurve.polynomial(coefs, horizon, system.base_dim)


def _integrator(cfg: dict) -> IntegratorConfig:
    s = _section(cfg, "integrator")
    kw = {k: s[k] for k in ("rel_tol", "abs_tol", "n_out", "project", "method")}
    if "max_step" in s:
        kw["max_step"] = s["max_step"]
    return IntegratorConfig(**kw)


def _synthesizer(cfg: dict, system, gamma):
    """Return ``(parameterization, eps -> ControlLaw)``."""
    s = _section(cfg, "synthesis")
    mode = s["mode"]
    grid = gamma.grid(int(s["grid"]))
    if mode == "Z":
        level = int(s.get("level", 2))
        param = parameterize_reference(system, gamma, generate_Z(system, level), "Z", grid)
        lv = param.level

        def synth(eps):
            sched = eta_schedule(eps, lv, s["regime"]) if lv else None
            return recursion_Z(system, param, sched, family=s["family"], period=s["period"])
    else:
        param = parameterize_reference(system, gamma, generate_H(system, 1), "H", grid)
        lv = param.level

        def synth(eps):
            sched = eta_schedule(eps, lv, s["regime"]) if lv else None
            return recursion_H(system, param, sched, period=s["period"], sequence=s["sequence"])
    return param, synth


def _metric(cfg: dict, system) -> list:
    return list(cfg.get("metric", range(system.base_dim)))


# ---------------------------------------------------------------------------
# SVG charts
# ---------------------------------------------------------------------------
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")


def svg_chart(t: np.ndarray, series: Sequence, title: str, width: int = 720, height: int = 360,
              max_points: int = 2001) -> str:
    """Polyline chart; ``series`` holds ``(label, values, dashed)`` tuples."""
    t = np.asarray(t, dtype=float)
    step = max(1, t.size // max_points)
    idx = np.arange(0, t.size, step)
    ys = np.concatenate([np.asarray(v, dtype=float)[idx] for _, v, _ in series]) if series else np.zeros(1)
    lo_, hi = float(np.min(ys)), float(np.max(ys))
    if hi - lo_ < 1e-12:
        lo_, hi = lo_ - 1.0, hi + 1.0
    pad = 50
    sx = lambda x: pad + (x - t[0]) / (t[-1] - t[0]) * (width - 2 * pad)
    sy = lambda y: height - pad - (y - lo_) / (hi - lo_) * (height - 2 * pad)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-family="sans-serif" '
           f'font-size="14">{title}</text>',
           f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>']
    for val, y in ((lo_, height - pad), (hi, pad)):
        out.append(f'<text x="{pad - 4}" y="{y + 4:.1f}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="10">{val:.3g}</text>')
    for val, x in ((t[0], pad), (t[-1], width - pad)):
        out.append(f'<text x="{x:.1f}" y="{height - pad + 14}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="10">{val:.3g}</text>')
    for i, (label, vals, dashed) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        v = np.asarray(vals, dtype=float)[idx]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(t[idx], v))
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1"{dash} points="{pts}"/>')
        out.append(f'<text x="{width - pad + 4}" y="{pad + 14 * i}" font-family="sans-serif" font-size="10" '
                   f'fill="{color}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def cmd_check(cfg: dict, out: Path, seed: int, jobs: int) -> int:
    system = build_system(cfg)
    c = _section(cfg, "check")
    states = sample_states(system, int(c["n_states"]), np.random.default_rng(seed), float(c["box"]))
    report = certify(system, int(c["max_level"]), states)
    (out / "report.txt").write_text(report.to_text())
    (out / "report.kv").write_text(report.to_kv())
    print(report.summary())
    return report.exit_code()


def _write_table(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join("" if v is None else (format_float(v) if isinstance(v, float) else str(v)) for v in r))
    with open(path, "w", newline="") as fh:
        fh.write("\r\n".join(lines) + "\r\n")


def cmd_simulate(cfg: dict, out: Path, seed: int, jobs: int) -> int:
    system = build_system(cfg)
    gamma = build_reference(cfg, system)
    started = time.perf_counter()
    param, synth = _synthesizer(cfg, system, gamma)
    eps = float(_section(cfg, "synthesis")["epsilon"])
    law = synth(eps)
    traj = integrate(system, law, gamma.initial_state(), _integrator(cfg))
    metric = _metric(cfg, system)
    err = tracking_error(traj, gamma, metric)
    runtime = time.perf_counter() - started

    traj.to_csv(out / "trajectory.csv")
    law.to_csv(out / "controls.csv", rate=float(_section(cfg, "output")["control_rate"]))
    ref = gamma.state(traj.times)
    _write_table(out / "reference.csv", ["t"] + list(system.phase_chart.coordinate_names),
                 [[float(t)] + [float(v) for v in row] for t, row in zip(traj.times, ref)])
    (out / "law.json").write_text(json.dumps({"parameterization": param.describe(), "law": law.record()},
                                             indent=1, default=float) + "\n")
    lines = [f"experiment: {cfg.get('name', system.name)}",
             f"system: {system.name}",
             f"reference: {gamma.name}",
             f"epsilon: {format_float(eps)}",
             f"schedule: {list(law.schedule.values) if law.schedule else []}",
             f"metric components: {[system.phase_chart.coordinate_names[i] for i in metric]}",
             f"sup tracking error: {format_float(err)}",
             f"integrator steps: {traj.stats['accepted']} accepted, {traj.stats['rejected']} rejected",
             f"runtime seconds: {runtime:.2f}"]
    if "rotation" in system.layout:
        lines.append(f"orthogonality defect: {orthogonality_drift(traj, system.layout['rotation']):.3e}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    if _section(cfg, "output")["plots"]:
        names = system.phase_chart.coordinate_names
        series = []
        for i in metric:
            series.append((names[i], traj.states[:, i], False))
            series.append((f"{names[i]} ref", ref[:, i], True))
        (out / "states.svg").write_text(svg_chart(traj.times, series, "tracked components and reference"))
        U = law.sample(traj.times)
        (out / "controls.svg").write_text(
            svg_chart(traj.times, [(f"u{a + 1}", U[:, a], False) for a in range(law.k)], "inputs"))
    print("\n".join(lines))
    return EXIT_OK


def cmd_sweep(cfg: dict, out: Path, seed: int, jobs: int) -> int:
    if "sweep" not in cfg:
        raise ConfigurationError("this command needs a 'sweep' section with eps_list")
    system = build_system(cfg)
    gamma = build_reference(cfg, system)
    _, synth = _synthesizer(cfg, system, gamma)
    rows = convergence_study(system, gamma, synth, cfg["sweep"]["eps_list"], _integrator(cfg),
                             _metric(cfg, system), jobs=jobs)
    _write_table(out / "convergence.csv", ["eps", "error", "order", "steps"],
                 [[r["eps"], r["error"], r["order"], r["steps"]] for r in rows])
    lines = [f"eps={format_float(r['eps'])} error={format_float(r['error'])} "
             f"order={'' if r['order'] is None else format(r['order'], '.4f')} runtime={r['runtime']:.2f}s"
             for r in rows]
    (out / "sweep_summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


COMMANDS = {"check": cmd_check, "simulate": cmd_simulate, "sweep": cmd_sweep}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="acctrack", description="Trackability certificates and oscillatory tracking laws.")
    p.add_argument("-v", "--verbose", action="store_true", help="log pruning and solver details")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("check", "certify trackability at sampled states"),
                        ("simulate", "synthesize a law and integrate the closed loop"),
                        ("sweep", "tracking error over a list of eps values")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True, help="YAML file or bundled config name")
        s.add_argument("--out", default="out", help="output directory")
        s.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        s.add_argument("--jobs", type=int, default=1, help="worker threads for sweeps")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        if args.jobs < 1:
            raise ConfigurationError("--jobs must be at least 1")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](copy.deepcopy(cfg), out, seed, args.jobs)
    except (ConfigurationError, SynthesisError, IntegrationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
