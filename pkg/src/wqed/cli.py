"""Command-line front end.

    wqed generate   [--config PATH] [--engine analytic|oracle|both] [--out DIR]
    wqed manipulate ...
    wqed detect     ... [--xi VALUE ...]
    wqed check      [--grid N] [--break-bound-term]

Configuration is an INI file (sections physical, pulse, run, generation,
manipulation, detection) or the manifest.json of an earlier run.  All
physical inputs are in units of Omega and v_g/Omega.

Exit codes: 0 success, 1 failed self-check, 2 configuration error,
3 convergence failure, 4 engine mismatch under --check-oracle.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import logging
import math
import os
import platform
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import ConfigError, ConvergenceError, GridCoverageError, ResolutionError
from .model import PhysicalParams, WavepacketSpec
from .scenarios import (
    Engine,
    Scenario,
    ScenarioConfig,
    ScenarioResult,
    clamp_probability,
    default_delta_scan,
    default_gamma_grid,
    default_xi_grid,
    run_scenario,
)

log = logging.getLogger("wqed")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_MISMATCH = 0, 1, 2, 3, 4
TRACE_COLUMNS = ("t_gamma", "rho_gs", "rho_plus", "rho_minus", "rho_beta", "competitor",
                 "concurrence")


# ------------------------------------------------------------- formatting


def fmt(x) -> str:
    """17 significant digits, '.' decimal; integers and flags stay short."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    v = float(x)
    if v == 0.0:
        return "0"
    return format(v, ".17g")


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def parse_complex(text: str) -> complex:
    s = text.strip().replace(" ", "").replace("i", "j")
    if s in ("j", "+j"):
        return 1j
    if s == "-j":
        return -1j
    try:
        return complex(s)
    except ValueError as exc:
        raise ConfigError(f"cannot read {text!r} as a number") from exc


def parse_list(text: str, conv=float):
    return [conv(t) for t in text.replace(";", ",").split(",") if t.strip()]


# ----------------------------------------------------------------- config


DEFAULT_RUN = {"engine": "analytic", "t_max_gamma": "25", "n_times": "501",
               "oracle_times": "101", "oracle_half_width": "8", "oracle_wing": "300"}


def _number(section, key, raw, kind=float, positive=False, nonneg=False):
    try:
        val = kind(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}.{key}: expected a number, got {raw!r}") from exc
    if kind is float and not math.isfinite(val):
        raise ConfigError(f"{section}.{key}: must be finite, got {raw!r}")
    if positive and not val > 0:
        raise ConfigError(f"{section}.{key}: must be positive, got {raw!r}")
    if nonneg and val < 0:
        raise ConfigError(f"{section}.{key}: must be >= 0, got {raw!r}")
    return val


def load_config_sections(path) -> dict:
    """{section: {key: str}} from an INI file or a manifest.json."""
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ConfigError(f"config file {path!r} not found")
    if path.endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        cfg = data.get("config", data)
        return {s: {k: str(v) for k, v in kv.items()} for s, kv in cfg.items()}
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return {s: dict(cp[s]) for s in cp.sections()}


def build_config(scenario: Scenario, sections: dict, engine: str = None, xi=None):
    """ScenarioConfig plus the fully expanded config snapshot."""
    known = {"physical", "pulse", "run", "generation", "manipulation", "detection"}
    unknown = set(sections) - known
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    phys = sections.get("physical", {})
    pulse = sections.get("pulse", {})
    run = dict(DEFAULT_RUN, **sections.get("run", {}))
    if engine:
        run["engine"] = engine
    try:
        Engine(run["engine"])
    except ValueError as exc:
        raise ConfigError(f"run.engine: expected analytic, oracle or both, got {run['engine']!r}") from exc

    if scenario is Scenario.DETECTION:
        det = sections.get("detection", {})
        mu = _number("detection", "mu", det.get("mu", pulse.get("mu", 1.0 / 3000.0)), positive=True)
        defaults = {"omega_q": 1.0, "gamma": mu / 2.0, "v_g": 1.0}
    else:
        defaults = {"omega_q": 1.0, "gamma": 0.01, "v_g": 1.0}
    vals = {k: _number("physical", k, phys.get(k, defaults[k])) for k in defaults}
    try:
        params = PhysicalParams(**vals)
    except ConfigError as exc:
        raise ConfigError(f"physical.{exc}") from exc
    g, vg = params.gamma, params.v_g

    runkw = dict(
        engine=run["engine"],
        t_max_gamma=_number("run", "t_max_gamma", run["t_max_gamma"], positive=True),
        n_times=_number("run", "n_times", run["n_times"], int, positive=True),
        oracle_times=_number("run", "oracle_times", run["oracle_times"], int, positive=True),
        oracle_half_width=_number("run", "oracle_half_width", run["oracle_half_width"], positive=True),
        oracle_wing=_number("run", "oracle_wing", run["oracle_wing"], nonneg=True),
    )
    omega = _number("pulse", "omega", pulse.get("omega", params.omega_q), positive=True)
    snap = {"physical": {k: fmt(v) for k, v in vals.items()},
            "run": {k: fmt(v) if not isinstance(v, str) else v for k, v in runkw.items()}}

    if scenario is Scenario.GENERATION:
        gen = sections.get("generation", {})
        if "mu_list" in gen:
            mus = parse_list(gen["mu_list"])
        elif "mu_over_gamma" in gen:
            mus = [m * g for m in parse_list(gen["mu_over_gamma"])]
        else:
            mus = [0.5 * g, 2.0 * g, g / 15.0] if g > 0 else [0.005]
        for m in mus:
            if not (math.isfinite(m) and m > 0):
                raise ConfigError(f"generation.mu_list: values must be positive, got {m!r}")
        front = _number("pulse", "front", pulse.get("front", 200.0 * params.wavelength), nonneg=True)
        spec = WavepacketSpec(mus[0], omega, front)
        cfg = ScenarioConfig(params, scenario, spec, mu_list=tuple(mus), **runkw)
        snap["pulse"] = {"omega": fmt(omega), "front": fmt(front)}
        snap["generation"] = {"mu_list": ", ".join(fmt(m) for m in mus)}
    elif scenario is Scenario.MANIPULATION:
        man = sections.get("manipulation", {})
        if g <= 0:
            raise ConfigError("physical.gamma: manipulation needs gamma > 0")
        mu = _number("pulse", "mu", pulse.get("mu", 0.5 * g), positive=True)
        front = _number("pulse", "front", pulse.get("front", 0.0), nonneg=True)
        if "delta" in man:
            deltas = parse_list(man["delta"])
        elif "delta_gamma" in man:
            deltas = [d * vg / g for d in parse_list(man["delta_gamma"])]
        else:
            deltas = list(default_delta_scan(g, vg))
        if any(not math.isfinite(d) or d < 0 for d in deltas):
            raise ConfigError("manipulation.delta: values must be >= 0")
        if "oracle_delta" in man:
            odel = parse_list(man["oracle_delta"])
        else:
            odel = [0.0, 3.0 * vg / g, 20.0 * vg / g]
        odel = [d for d in odel if any(abs(d - x) <= 1e-12 * max(1.0, x) for x in deltas)]
        odel = [min(deltas, key=lambda x: abs(x - d)) for d in odel]
        spec = WavepacketSpec(mu, omega, front)
        cfg = ScenarioConfig(params, scenario, spec, delta=tuple(deltas),
                             oracle_delta=tuple(odel), **runkw)
        snap["pulse"] = {"mu": fmt(mu), "omega": fmt(omega), "front": fmt(front)}
        snap["manipulation"] = {"delta": ", ".join(fmt(d) for d in deltas),
                                "oracle_delta": ", ".join(fmt(d) for d in odel)}
    else:
        det = sections.get("detection", {})
        if xi:
            xis = [parse_complex(x) for x in xi]
        elif "xi" in det:
            xis = parse_list(det["xi"], parse_complex)
        else:
            xis = default_xi_grid()
        if "gamma_grid" in det:
            gammas = parse_list(det["gamma_grid"])
        elif "gamma_over_mu" in det:
            gammas = [r * mu for r in parse_list(det["gamma_over_mu"])]
        else:
            gammas = list(default_gamma_grid(mu))
        oxi = parse_list(det["oracle_xi"], parse_complex) if "oracle_xi" in det else [0.0, 1.0, 1j]
        spec = WavepacketSpec(mu, omega, 1e-3 * vg / g if g > 0 else 0.0)
        cfg = ScenarioConfig(params, scenario, spec, xi_grid=tuple(xis),
                             gamma_grid=tuple(gammas), oracle_xi=tuple(oxi), **runkw)
        snap["detection"] = {"mu": fmt(mu), "xi": ", ".join(_cfmt(x) for x in xis),
                             "gamma_grid": ", ".join(fmt(x) for x in gammas),
                             "oracle_xi": ", ".join(_cfmt(complex(x)) for x in oxi)}
        snap["pulse"] = {"omega": fmt(omega)}
    return cfg, snap


def _cfmt(z: complex) -> str:
    z = complex(z)
    if z.imag == 0:
        return fmt(z.real)
    return f"{fmt(z.real)}{'+' if z.imag >= 0 else '-'}{fmt(abs(z.imag))}j"


# -------------------------------------------------------------------- SVG


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf",
           "#7f7f7f")


def render_svg(series, xlabel, ylabel, title, width=640, height=400) -> str:
    """Static line plot; series = [(label, x, y, dashed)]."""
    pad_l, pad_r, pad_t, pad_b = 60, 150, 30, 45
    xs = np.concatenate([np.asarray(s[1], float) for s in series]) if series else np.zeros(1)
    ys = np.concatenate([np.asarray(s[2], float) for s in series]) if series else np.zeros(1)
    x0, x1 = float(np.nanmin(xs)), float(np.nanmax(xs))
    y0, y1 = min(0.0, float(np.nanmin(ys))), float(np.nanmax(ys))
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def X(v):
        return pad_l + (v - x0) / (x1 - x0) * pw

    def Y(v):
        return pad_t + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{pad_l}" y="18" font-size="13">{title}</text>',
           f'<rect x="{pad_l}" y="{pad_t}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for k in range(5):
        xv = x0 + (x1 - x0) * k / 4
        yv = y0 + (y1 - y0) * k / 4
        out.append(f'<text x="{X(xv):.1f}" y="{pad_t + ph + 15}" text-anchor="middle">{xv:.3g}</text>')
        out.append(f'<text x="{pad_l - 5}" y="{Y(yv) + 4:.1f}" text-anchor="end">{yv:.3g}</text>')
    out.append(f'<text x="{pad_l + pw / 2}" y="{height - 8}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="14" y="{pad_t + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 14 {pad_t + ph / 2})">{ylabel}</text>')
    for i, (label, x, y, dashed) in enumerate(series):
        c = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in zip(x, y) if np.isfinite(b))
        dash = ' stroke-dasharray="5,3"' if dashed else ""
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.4"{dash} points="{pts}"/>')
        ly = pad_t + 12 + 14 * i
        out.append(f'<line x1="{width - pad_r + 10}" y1="{ly - 4}" x2="{width - pad_r + 30}" '
                   f'y2="{ly - 4}" stroke="{c}"{dash}/>')
        out.append(f'<text x="{width - pad_r + 34}" y="{ly}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- outputs


def _trace_rows(tr):
    t = tr.meta.get("t_gamma", tr.times)
    cols = [t] + [clamp_probability(getattr(tr, c), c) for c in TRACE_COLUMNS[1:5]]
    cols += [np.asarray(tr.competitor, float), clamp_probability(tr.concurrence, "concurrence")]
    return list(zip(*cols))


def emit(result: ScenarioResult, snap: dict, out_dir: str, argv, started: float) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    files = []
    cfg = result.config
    traces = result.traces
    if cfg.scenario is Scenario.DETECTION and not traces:
        traces = result.oracle_traces
    if traces:
        write_csv(os.path.join(out_dir, "trace.csv"), TRACE_COLUMNS, _trace_rows(traces[0]))
        files.append("trace.csv")
        if len(traces) > 1:
            for k, tr in enumerate(traces):
                name = f"trace_{k:02d}.csv"
                write_csv(os.path.join(out_dir, name), TRACE_COLUMNS, _trace_rows(tr))
                files.append(name)
    if result.oracle_traces and cfg.scenario is not Scenario.DETECTION and result.traces:
        for k, tr in enumerate(result.oracle_traces):
            name = f"oracle_trace_{k:02d}.csv"
            write_csv(os.path.join(out_dir, name), TRACE_COLUMNS, _trace_rows(tr))
            files.append(name)
    rows = result.table
    if rows:
        header = list(rows[0].keys())
        write_csv(os.path.join(out_dir, "summary.csv"), header,
                  [[r[h] for h in header] for r in rows])
        files.append("summary.csv")
    if result.deviations:
        write_csv(os.path.join(out_dir, "deviations.csv"),
                  ["label", "max_population", "max_concurrence", "max_p_rr", "passed"],
                  [[d.label, d.max_population, d.max_concurrence, d.max_p_rr, d.passed]
                   for d in result.deviations])
        files.append("deviations.csv")
    with open(os.path.join(out_dir, "plot.svg"), "w", encoding="utf-8", newline="") as fh:
        fh.write(_plot(result))
    files.append("plot.svg")
    import scipy

    manifest = {
        "tool": "wqed", "version": __version__, "command": cfg.scenario.value,
        "argv": list(argv), "config": snap,
        "environment": {"python": platform.python_version(), "numpy": np.__version__,
                        "scipy": scipy.__version__},
        "settings": {"engine": cfg.engine.value, "oracle_half_width": cfg.oracle_half_width,
                     "oracle_wing": cfg.oracle_wing, "time_quadrature": "Gauss-Legendre panels, order 20",
                     "oracle_propagator": "Chebyshev series, tol 1e-15",
                     "workers_cap": os.environ.get("WQED_THREADS")},
        "meta": {k: (v if not isinstance(v, dict) else {fmt(a): b for a, b in v.items()})
                 for k, v in result.meta.items()},
        "started_utc": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "wall_clock_s": time.time() - started,
        "files": {f: sha256(os.path.join(out_dir, f)) for f in files},
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return manifest


def _plot(result: ScenarioResult) -> str:
    cfg = result.config
    if cfg.scenario is Scenario.DETECTION:
        rows = [r for r in result.table if r["gamma"] == cfg.params.gamma and r["xi_im"] == 0]
        if not rows:
            rows = [r for r in result.table if r["xi_im"] == 0]
            g0 = rows[0]["gamma"] if rows else None
            rows = [r for r in rows if r["gamma"] == g0]
        rows.sort(key=lambda r: r["xi_re"])
        x = [r["xi_re"] for r in rows]
        series = [("|P_RR/P_RR(0) - 1|", x, [r["ratio"] for r in rows], False),
                  ("2xi/(1+xi^2)", x, [abs(r["bound"]) for r in rows], True)]
        return render_svg(series, "xi", "ratio", "two-photon detection")
    series = []
    for lab, tr in zip(result.labels, result.traces):
        series.append((lab, tr.meta.get("t_gamma", tr.times), tr.concurrence, False))
    return render_svg(series[:8], "gamma t", "C", f"{cfg.scenario.value}: concurrence")


# ----------------------------------------------------------------- check


def run_checks(grid: int = 512, break_bound: bool = False, seed: int = 7, out=None):
    """Residual table for the self-checks; returns (ok, rows, warnings)."""
    out = out or sys.stdout
    from .model import (Direction, QubitBasisPopulations, assemble_density_matrix,
                        wootters_concurrence, x_state_concurrence)
    from .oracle import oracle_evolve, oracle_model_for
    from .single_ex import n1_evolve_trace, n1_project
    from .two_ex import (DetectionInitial, TwoPhotonInitial, TwoExcitationEngine,
                         jump_residuals, n2_beta_quadrature, n2_project, n2_project_closed,
                         n2_t0_identity)

    rng = np.random.default_rng(seed)
    p = PhysicalParams(1.0, 0.01, 1.0)
    g = p.gamma
    rows, warnings = [], []

    worst = {}
    for _ in range(24):
        k1, k2 = p.omega_q / p.v_g + rng.normal(0.0, 3 * g, 2)
        x = rng.choice([-1.0, 1.0]) * rng.uniform(0.1, 5.0) / g
        for key, val in jump_residuals(p, k1, k2, x, bound_term=not break_bound).items():
            worst[key] = max(worst.get(key, 0.0), float(val))
    for key, val in worst.items():
        rows.append((f"jump:{key}", val, 1e-8))

    mu = g / 2
    ini_gen = TwoPhotonInitial(WavepacketSpec(mu, 1.0, 0.0),
                               WavepacketSpec(mu, 1.0, 3.0 / g, Direction.LEFTWARD))
    ini_det = DetectionInitial(WavepacketSpec(mu, 1.0, 1e-3 / g), 0.7)
    for name, ini in (("generation", ini_gen), ("detection", ini_det)):
        try:
            st = n2_project(p, ini, n=grid, tol=1.0)
        except GridCoverageError as exc:
            warnings.append(str(exc))
            continue
        for key, val in n2_t0_identity(p, st).items():
            rows.append((f"t0:{name}:{key}", val, 1e-6))
        # refinement drift of a grid observable
        fine = n2_project(p, ini, n=int(1.5 * grid), tol=1.0)
        tt = [0.5 / g, 1.0 / g]
        drift = float(np.max(np.abs(n2_beta_quadrature(p, st, tt) - n2_beta_quadrature(p, fine, tt))))
        rows.append((f"grid-drift:{name}:beta", drift, 1e-3))
        if drift > 1e-3:
            warnings.append(f"grid {grid} not converged for {name}: beta drift {drift:.3g} > 1e-3")

    for name, ini in (("generation", ini_gen), ("detection", ini_det)):
        eng = TwoExcitationEngine(p, n2_project_closed(p, ini).sectors, 30.0 / g)
        dev_sum, dev_norm = 0.0, 0.0
        for t in np.linspace(0.0, 30.0 / g, 7):
            pops = eng.populations(t)
            dev_sum = max(dev_sum, abs(pops.as_array().sum() - 1.0))
            dev_norm = max(dev_norm, abs(eng.photon_norm(t) - pops.rho_gs))
        rows.append((f"conservation:{name}:sum", dev_sum, 1e-6))
        rows.append((f"conservation:{name}:photon_norm", dev_norm, 1e-6))

    worst_w = 0.0
    for _ in range(1000):
        v = rng.dirichlet(np.ones(3))
        pops = QubitBasisPopulations(v[0], v[1], 0.0, v[2])
        w = wootters_concurrence(assemble_density_matrix(pops))
        worst_w = max(worst_w, abs(w - x_state_concurrence(pops)))
    rows.append(("wootters-vs-x", worst_w, 1e-10))

    spec = WavepacketSpec(mu, 1.0, 0.0)
    ts = np.linspace(0.0, 20.0 / g, 81)
    a = n1_evolve_trace(p, n1_project(p, spec), ts)
    o = oracle_evolve(oracle_model_for(p, [spec], ts[-1]), spec, ts)
    rows.append(("oracle:generation:rho_plus", float(np.max(np.abs(a.rho_plus - o.trace.rho_plus))), 1e-2))
    rows.append(("oracle:generation:norm_drift", o.norm_drift, 1e-6))

    ok = all(v <= tol for _, v, tol in rows)
    print(f"{'check':44s} {'residual':>12s} {'limit':>8s}  status", file=out)
    for name, val, tol in rows:
        print(f"{name:44s} {val:12.3e} {tol:8.0e}  {'ok' if val <= tol else 'FAIL'}", file=out)
    for w in warnings:
        print(f"warning: {w}", file=out)
    return ok, rows, warnings


# ------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wqed", description="Two qubits in a waveguide: "
                                 "entanglement generation, manipulation and detection.")
    ap.add_argument("--version", action="version", version=f"wqed {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("generate", "manipulate", "detect", "check"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI file or manifest.json of an earlier run")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--grid", type=int, default=512, help="momentum nodes per axis for grid checks")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name != "check":
            sp.add_argument("--engine", choices=[e.value for e in Engine], default=None)
            sp.add_argument("--check-oracle", action="store_true",
                            help="run both engines and exit 4 on disagreement")
        else:
            sp.add_argument("--break-bound-term", action="store_true",
                            help="drop the bound-state term (negative control)")
        if name == "detect":
            sp.add_argument("--xi", action="append", help="initial-state parameter (repeatable)")
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    try:
        if args.command == "check":
            if args.grid < 16:
                raise ConfigError("--grid must be at least 16")
            ok, _, _ = run_checks(grid=args.grid, break_bound=args.break_bound_term)
            return EXIT_OK if ok else EXIT_CHECK
        scenario = {"generate": Scenario.GENERATION, "manipulate": Scenario.MANIPULATION,
                    "detect": Scenario.DETECTION}[args.command]
        sections = load_config_sections(args.config)
        engine = "both" if args.check_oracle else args.engine
        cfg, snap = build_config(scenario, sections, engine, getattr(args, "xi", None))
        result = run_scenario(cfg)
        out_dir = args.out or f"wqed-{args.command}"
        emit(result, snap, out_dir, argv, started)
        _print_summary(result)
        if args.check_oracle and not all(d.passed for d in result.deviations):
            for d in result.deviations:
                if not d.passed:
                    print(f"engine mismatch: {d.label}: population {d.max_population:.3g}, "
                          f"concurrence {d.max_concurrence:.3g}", file=sys.stderr)
            return EXIT_MISMATCH
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, GridCoverageError, ResolutionError) as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


def _print_summary(result: ScenarioResult):
    cfg = result.config
    if cfg.scenario is Scenario.GENERATION:
        for r in result.table:
            print(f"mu={r['mu']:.6g}  peak C={r['peak_concurrence']:.6f}")
    elif cfg.scenario is Scenario.MANIPULATION:
        for r in result.table:
            print(f"delta*gamma={r['delta_gamma']:.4g}  peak C={r['peak_concurrence']:.4f}  "
                  f"deaths={r['n_death_intervals']}  revival={r['revival']}")
    else:
        if "gamma_max_p_rr_over_mu" in result.meta:
            print(f"max P_RR at gamma/mu = {result.meta['gamma_max_p_rr_over_mu']:.4g}")
    for d in result.deviations:
        print(f"engines [{d.label}]: population {d.max_population:.3g}, "
              f"concurrence {d.max_concurrence:.3g}  {'ok' if d.passed else 'MISMATCH'}")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
