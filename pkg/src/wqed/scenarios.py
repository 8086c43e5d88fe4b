"""Experiment drivers: generation, manipulation and detection studies.

Times handed back to callers are physical times; `t_gamma` columns are
gamma * (t - first arrival).  All grid points are independent, so scans
fan out to worker processes (capped by WQED_THREADS) and are merged back by
grid index, which keeps the output independent of the worker count.
"""

from __future__ import annotations

import enum
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .model import ConcurrenceTrace, Direction, PhysicalParams, WavepacketSpec, xi_concurrence
from .single_ex import n1_evolve_trace, n1_project
from .two_ex import (
    DetectionInitial,
    TwoPhotonInitial,
    n2_concurrence_trace,
    n2_project_closed,
    two_photon_rr_probability,
)

log = logging.getLogger(__name__)

DEATH_THRESHOLD = 0.01
ENGINE_TOLERANCE = 1e-2
DETECTION_FRONT = 1e-3  # gamma * x0 / v_g


class Scenario(str, enum.Enum):
    GENERATION = "generation"
    MANIPULATION = "manipulation"
    DETECTION = "detection"


class Engine(str, enum.Enum):
    ANALYTIC = "analytic"
    ORACLE = "oracle"
    BOTH = "both"


def default_delta_scan(gamma: float, v_g: float = 1.0, n: int = 16, top: float = 20.0):
    """Zero plus n-1 log-spaced delays up to top * v_g / gamma."""
    return np.concatenate([[0.0], np.geomspace(0.25, top, n - 1)]) * v_g / gamma


def default_gamma_grid(mu: float, n: int = 24):
    return mu * np.geomspace(1.0 / 8.0, 8.0, n)


def default_xi_grid():
    return [complex(x) for x in np.arange(-4.0, 4.0 + 1e-9, 0.5)] + [1j]


@dataclass
class ScenarioConfig:
    """Inputs of one study, in units of Omega and v_g / Omega.

    mu_list: generation pulse widths; delta: manipulation delays;
    xi_grid / gamma_grid: detection scan; oracle_xi: the xi values that
    are cross-checked against the oracle when engine is 'both'."""

    params: PhysicalParams
    scenario: Scenario
    pulse: WavepacketSpec
    mu_list: tuple = ()
    delta: tuple = ()
    xi_grid: tuple = ()
    gamma_grid: tuple = ()
    oracle_xi: tuple = (0.0, 1.0, 1j)
    oracle_delta: tuple = ()
    engine: Engine = Engine.ANALYTIC
    t_max_gamma: float = 25.0
    n_times: int = 501
    oracle_times: int = 101
    oracle_half_width: float = 8.0
    oracle_wing: float = 300.0
    out_dir: str = None

    def __post_init__(self):
        self.scenario = Scenario(self.scenario)
        self.engine = Engine(self.engine)
        self.validate()

    def validate(self):
        if self.n_times < 2 or self.oracle_times < 2:
            raise ConfigError("need at least two time samples")
        if not self.t_max_gamma > 0:
            raise ConfigError("t_max_gamma must be positive")
        if self.scenario is Scenario.GENERATION and not self.mu_list:
            raise ConfigError("generation needs mu_list")
        if self.scenario is Scenario.MANIPULATION:
            if len(self.delta) == 0:
                raise ConfigError("manipulation needs at least one delta")
            if any(d < 0 or not np.isfinite(d) for d in self.delta):
                raise ConfigError("delta must be >= 0")
        if self.scenario is Scenario.DETECTION:
            if len(self.xi_grid) == 0:
                raise ConfigError("detection needs xi_grid")
            if any(g <= 0 or g >= self.params.omega_q for g in self.gamma_grid):
                raise ConfigError("gamma_grid values must lie in (0, omega_q)")
        return self

    @classmethod
    def default(cls, scenario, params: PhysicalParams = None, **kw):
        scenario = Scenario(scenario)
        if scenario is Scenario.DETECTION:
            mu = kw.pop("mu", 1.0 / 3000.0)
            params = params or PhysicalParams(1.0, mu / 2.0, 1.0)
            front = DETECTION_FRONT * params.v_g / params.gamma
            base = dict(pulse=WavepacketSpec(mu, params.omega_q, front),
                        xi_grid=tuple(default_xi_grid()),
                        gamma_grid=tuple(default_gamma_grid(mu)))
        else:
            params = params or PhysicalParams()
            g = params.gamma
            front = 200.0 * params.wavelength if scenario is Scenario.GENERATION else 0.0
            base = dict(pulse=WavepacketSpec(0.5 * g if g > 0 else 0.005, params.omega_q, front))
            if scenario is Scenario.GENERATION:
                base["mu_list"] = (0.5 * g, 2.0 * g, g / 15.0) if g > 0 else (0.005,)
            else:
                base["delta"] = tuple(default_delta_scan(g, params.v_g))
                base["oracle_delta"] = (0.0, 3.0 * params.v_g / g, 20.0 * params.v_g / g)
        base.update(kw)
        return cls(params=params, scenario=scenario, **base)


@dataclass(frozen=True)
class DeathRevivalReport:
    """Death intervals (C = 0 while rho_plus >= threshold, after C first
    exceeded the threshold), revival flag and the local peaks of C."""

    death_intervals: tuple
    revival: bool
    peak_values: tuple
    never_entangled: bool
    threshold: float = DEATH_THRESHOLD


@dataclass(frozen=True)
class DeviationReport:
    label: str
    max_population: float
    max_concurrence: float
    max_p_rr: float = float("nan")
    tolerance: float = ENGINE_TOLERANCE

    @property
    def passed(self) -> bool:
        vals = [self.max_population, self.max_concurrence]
        if not math.isnan(self.max_p_rr):
            vals.append(self.max_p_rr)
        return max(vals) <= self.tolerance


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    labels: list
    traces: list = field(default_factory=list)          # analytic (or oracle if only oracle)
    oracle_traces: list = field(default_factory=list)
    reports: list = field(default_factory=list)         # DeathRevivalReport per Delta
    deviations: list = field(default_factory=list)
    table: list = field(default_factory=list)           # detection rows (dicts)
    meta: dict = field(default_factory=dict)


# ----------------------------------------------------------- death/revival


def detect_death_revival(trace: ConcurrenceTrace, threshold: float = DEATH_THRESHOLD,
                         zero: float = 1e-12) -> DeathRevivalReport:
    c = np.asarray(trace.concurrence, float)
    rp = np.asarray(trace.rho_plus, float)
    t = np.asarray(trace.times, float)
    if c.size == 0 or c.max() <= threshold:
        return DeathRevivalReport((), False, (), True, threshold)
    seen = np.maximum.accumulate(c > threshold)
    dead = (c <= zero) & (rp >= threshold) & seen
    intervals = []
    i = 0
    while i < c.size:
        if dead[i]:
            j = i
            while j + 1 < c.size and dead[j + 1]:
                j += 1
            intervals.append((float(t[i]), float(t[j])))
            i = j + 1
        else:
            i += 1
    revival = False
    if intervals:
        after = t > intervals[0][1]
        revival = bool(np.any(c[after] > threshold))
    peaks = []
    for k in range(c.size):
        left = c[k - 1] if k > 0 else -np.inf
        right = c[k + 1] if k + 1 < c.size else -np.inf
        if c[k] > threshold and c[k] >= left and c[k] > right:
            peaks.append(float(c[k]))
    return DeathRevivalReport(tuple(intervals), revival, tuple(peaks), False, threshold)


# ---------------------------------------------------------------- helpers


def worker_count(n_tasks: int) -> int:
    cap = os.environ.get("WQED_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, min(limit, int(cap)))
        except ValueError as exc:
            raise ConfigError(f"WQED_THREADS must be an integer, got {cap!r}") from exc
    return max(1, min(limit, n_tasks))


def parallel_map(fn, items):
    """Ordered map; processes only when more than one worker is allowed."""
    items = list(items)
    n = worker_count(len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def time_unit(params: PhysicalParams, mus) -> float:
    """1/gamma, or 1/(2 mu_min) in the decoupled limit."""
    if params.gamma > 0:
        return 1.0 / params.gamma
    return 1.0 / (2.0 * min(mus))


def sample_times(cfg: ScenarioConfig, t_first: float, extra: float = 0.0, n: int = None):
    unit = time_unit(cfg.params, [cfg.pulse.mu] + list(cfg.mu_list))
    n = n or cfg.n_times
    return t_first + np.linspace(0.0, cfg.t_max_gamma * unit + extra, n)


def _deviation(label, a: ConcurrenceTrace, o: ConcurrenceTrace, p_rr=None):
    pop = max(float(np.max(np.abs(getattr(a, k) - getattr(o, k))))
              for k in ("rho_gs", "rho_plus", "rho_minus", "rho_beta"))
    cd = float(np.max(np.abs(a.concurrence - o.concurrence)))
    return DeviationReport(label, pop, cd, float("nan") if p_rr is None else p_rr)


def _oracle_trace(params, initial, specs, times, cfg, want_directions=False):
    from .oracle import oracle_evolve, oracle_model_for

    model = oracle_model_for(params, specs, float(times[-1]), cfg.oracle_half_width,
                             cfg.oracle_wing)
    return oracle_evolve(model, initial, times, want_directions=want_directions)


def _retime(trace: ConcurrenceTrace, t0: float, unit: float):
    trace.meta["t_gamma"] = (trace.times - t0) / unit
    return trace


# ------------------------------------------------------------- generation


def _generation_task(args):
    cfg, mu = args
    p = cfg.params
    spec = replace(cfg.pulse, mu=mu)
    t0 = spec.arrival_time(p.v_g)
    unit = time_unit(p, [mu])
    times = sample_times(cfg, t0)
    out = {"mu": mu}
    if cfg.engine is not Engine.ORACLE:
        tr = n1_evolve_trace(p, n1_project(p, spec), times)
        tr.meta["mu"] = mu
        out["analytic"] = _retime(tr, t0, unit)
    if cfg.engine is not Engine.ANALYTIC and p.gamma > 0:
        ot = sample_times(cfg, t0, n=cfg.oracle_times)
        res = _oracle_trace(p, spec, [spec], ot, cfg)
        res.trace.meta.update(res.meta, mu=mu)
        out["oracle"] = _retime(res.trace, t0, unit)
        if cfg.engine is Engine.BOTH:
            ref = n1_evolve_trace(p, n1_project(p, spec), ot)
            out["deviation"] = _deviation(f"generation mu={mu:.6g}", ref, res.trace)
    return out


def run_generation(cfg: ScenarioConfig) -> ScenarioResult:
    if cfg.scenario is not Scenario.GENERATION:
        raise ConfigError("run_generation needs scenario=generation")
    outs = parallel_map(_generation_task, [(cfg, mu) for mu in cfg.mu_list])
    res = ScenarioResult(cfg, [f"mu={o['mu']:.6g}" for o in outs])
    for o in outs:
        tr = o.get("analytic", o.get("oracle"))
        if tr is None:  # oracle requested with gamma = 0: nothing couples
            tr = _flat_trace(sample_times(cfg, cfg.pulse.arrival_time(cfg.params.v_g)))
        res.traces.append(tr)
        if "oracle" in o:
            res.oracle_traces.append(o["oracle"])
        if "deviation" in o:
            res.deviations.append(o["deviation"])
    res.table = [{"mu_over_gamma": (o["mu"] / cfg.params.gamma if cfg.params.gamma > 0
                                    else float("inf")),
                  "mu": o["mu"], "peak_concurrence": tr.peak(),
                  "t_peak_gamma": float(tr.meta["t_gamma"][np.argmax(tr.concurrence)])
                  if "t_gamma" in tr.meta else 0.0}
                 for o, tr in zip(outs, res.traces)]
    return res


def _flat_trace(times):
    z = np.zeros(len(times))
    tr = ConcurrenceTrace(times, 1.0 + z, z, z, z, z.astype(complex), z, z, {"engine": "none"})
    tr.meta["t_gamma"] = times - times[0]
    return tr


# ----------------------------------------------------------- manipulation


def manipulation_initial(cfg: ScenarioConfig, delta: float) -> TwoPhotonInitial:
    """Rightward photon at the configured front, leftward one delta behind."""
    base = cfg.pulse
    right = WavepacketSpec(base.mu, base.omega, base.front, Direction.RIGHTWARD)
    left = WavepacketSpec(base.mu, base.omega, base.front + delta, Direction.LEFTWARD)
    return TwoPhotonInitial(right, left)


def _manipulation_task(args):
    cfg, delta, with_oracle = args
    p = cfg.params
    ini = manipulation_initial(cfg, delta)
    t0 = ini.right.arrival_time(p.v_g)
    unit = time_unit(p, [cfg.pulse.mu])
    times = sample_times(cfg, t0, extra=delta / p.v_g)
    out = {"delta": delta}
    st = n2_project_closed(p, ini)
    if cfg.engine is not Engine.ORACLE:
        tr = n2_concurrence_trace(p, st, times)
        tr.meta["delta"] = delta
        out["analytic"] = _retime(tr, t0, unit)
    if with_oracle:
        ot = sample_times(cfg, t0, extra=delta / p.v_g, n=cfg.oracle_times)
        res = _oracle_trace(p, ini, [ini.right, ini.left], ot, cfg)
        res.trace.meta.update(res.meta, delta=delta)
        out["oracle"] = _retime(res.trace, t0, unit)
        if cfg.engine is Engine.BOTH:
            ref = n2_concurrence_trace(p, st, ot)
            out["deviation"] = _deviation(f"manipulation delta_gamma={delta * p.gamma:.6g}",
                                          ref, res.trace)
    return out


def run_manipulation(cfg: ScenarioConfig) -> ScenarioResult:
    if cfg.scenario is not Scenario.MANIPULATION:
        raise ConfigError("run_manipulation needs scenario=manipulation")
    if cfg.params.gamma <= 0:
        raise ConfigError("manipulation needs gamma > 0")
    deltas = [float(d) for d in cfg.delta]
    checks = set(float(d) for d in cfg.oracle_delta)
    if cfg.engine is Engine.ORACLE:
        checks = set(deltas)
    tasks = [(cfg, d, cfg.engine is not Engine.ANALYTIC and (d in checks)) for d in deltas]
    outs = parallel_map(_manipulation_task, tasks)
    res = ScenarioResult(cfg, [f"delta_gamma={o['delta'] * cfg.params.gamma:.6g}" for o in outs])
    for o in outs:
        tr = o.get("analytic", o.get("oracle"))
        res.traces.append(tr)
        res.reports.append(detect_death_revival(tr))
        if "oracle" in o:
            res.oracle_traces.append(o["oracle"])
        if "deviation" in o:
            res.deviations.append(o["deviation"])
    res.table = [
        {"delta_gamma": o["delta"] * cfg.params.gamma, "peak_concurrence": tr.peak(),
         "n_peaks": len(r.peak_values), "n_death_intervals": len(r.death_intervals),
         "revival": int(r.revival), "never_entangled": int(r.never_entangled)}
        for o, tr, r in zip(outs, res.traces, res.reports)
    ]
    return res


# -------------------------------------------------------------- detection


def detection_photon(cfg: ScenarioConfig, gamma: float) -> WavepacketSpec:
    front = DETECTION_FRONT * cfg.params.v_g / gamma
    return WavepacketSpec(cfg.pulse.mu, cfg.pulse.omega, front, Direction.RIGHTWARD)


def _detection_task(args):
    cfg, gamma, xi = args
    p = PhysicalParams(cfg.params.omega_q, gamma, cfg.params.v_g)
    st = n2_project_closed(p, DetectionInitial(detection_photon(cfg, gamma), xi))
    return two_photon_rr_probability(p, st, full=True)


def _detection_oracle_task(args):
    cfg, xi = args
    p = cfg.params
    photon = detection_photon(cfg, p.gamma)
    ini = DetectionInitial(photon, xi)
    unit = time_unit(p, [photon.mu])
    ot = sample_times(cfg, 0.0, n=cfg.oracle_times)
    res = _oracle_trace(p, ini, [photon], ot, cfg, want_directions=True)
    res.trace.meta.update(res.meta, xi=xi, p_rr=res.p_rr)
    st = n2_project_closed(p, ini)
    ref = n2_concurrence_trace(p, st, ot)
    ref_prr = two_photon_rr_probability(p, st)
    dev = _deviation(f"detection xi={xi}", ref, res.trace, abs(res.p_rr - ref_prr))
    return _retime(res.trace, 0.0, unit), dev


def run_detection(cfg: ScenarioConfig) -> ScenarioResult:
    if cfg.scenario is not Scenario.DETECTION:
        raise ConfigError("run_detection needs scenario=detection")
    p = cfg.params
    gammas = [float(g) for g in cfg.gamma_grid] or [p.gamma]
    xis = [complex(x) for x in cfg.xi_grid]
    if 0j not in xis:
        xis = [0j] + xis
    # the front is placed at gamma x0 / v_g = DETECTION_FRONT for every gamma
    tasks = [(cfg, g, xi) for g in gammas for xi in xis]
    probs = parallel_map(_detection_task, tasks) if cfg.engine is not Engine.ORACLE else []
    res = ScenarioResult(cfg, [])
    k = 0
    for g in gammas:
        block = probs[k:k + len(xis)]
        k += len(xis)
        if not block:
            continue
        p0 = block[xis.index(0j)][0]
        for xi, (prr, prl, pll) in zip(xis, block):
            res.table.append({
                "gamma": g, "gamma_over_mu": g / cfg.pulse.mu, "xi_re": xi.real, "xi_im": xi.imag,
                "p_rr": prr, "p_rl": prl, "p_ll": pll, "p_rr_over_p0": prr / p0,
                "ratio": abs(prr / p0 - 1.0),
                "bound": 2.0 * xi.real / (1.0 + abs(xi) ** 2), "concurrence": xi_concurrence(xi),
            })
    if res.table:
        best = {}
        for row in res.table:
            best[row["gamma"]] = max(best.get(row["gamma"], -1.0), row["p_rr"])
        g_star = max(best, key=best.get)
        res.meta["gamma_max_p_rr"] = g_star
        res.meta["gamma_max_p_rr_over_mu"] = g_star / cfg.pulse.mu
        res.meta["max_p_rr_by_gamma"] = best
    if cfg.engine is not Engine.ANALYTIC:
        outs = parallel_map(_detection_oracle_task, [(cfg, complex(x)) for x in cfg.oracle_xi])
        for tr, dev in outs:
            res.oracle_traces.append(tr)
            res.deviations.append(dev)
            res.labels.append(dev.label)
    return res


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    return {
        Scenario.GENERATION: run_generation,
        Scenario.MANIPULATION: run_manipulation,
        Scenario.DETECTION: run_detection,
    }[cfg.scenario](cfg)


def clamp_probability(values, label: str, tol: float = 1e-10):
    """Clamp to [0, 1]; values further out than tol are reported."""
    arr = np.asarray(values, dtype=float)
    bad = (arr < -tol) | (arr > 1.0 + tol)
    if np.any(bad):
        log.warning("%s: %d value(s) outside [0, 1] beyond %g (worst %r)", label,
                    int(bad.sum()), tol, float(arr[bad][np.argmax(np.abs(arr[bad] - 0.5))]))
    clipped = np.clip(arr, 0.0, 1.0)
    n = int(np.sum(clipped != arr))
    if n:
        log.info("%s: clamped %d value(s) to [0, 1]", label, n)
    return clipped
