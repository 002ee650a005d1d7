"""Scenario configuration and the plan -> simulate -> report pipeline."""
from __future__ import annotations

import copy
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import (DEFAULT_GAINS, GainSet, TeamSimulator, affine_placement,
                       assemble_collective, initial_state, stability_report)
from .errors import (AssumptionViolation, ConfigError, CovnetError, DivergenceError,
                     InvalidInputError, NetworkError)
from .geometry import Simplex
from .network import (Check, CommGraph, ValidationReport, build_layers,
                      decompose_leading_polytope, fan_network, load_graph,
                      reference_configuration, save_graph, validate_network)
from .targets import generate_shape, load_targets, regenerate_gaussian, save_targets
from .training import CENTROID_MODES, DesiredPlan

log = logging.getLogger(__name__)

DEFAULTS = {
    "network": {"generator": {"n_boundary": 5, "depth": 2, "radius": 12.0,
                              "center": [0.0, 0.0, 0.0]}},
    "leaders": {},
    "targets": {"shape": "ellipse", "count": 500},
    "regenerate": {"mode": "auto", "grid_step": None, "threshold": None},
    "gains": list(DEFAULT_GAINS),
    "yaw_gains": [2.0, 1.0],
    "mass": 1.0,
    "initial_yaw": 0.0,
    "initial": {"scale": 0.9, "rotation": 0.1, "translation": [1.0, -0.5, 0.0]},
    "dt": 1e-3,
    "horizon": 30.0,
    "weight_update_every": 10,
    "log_every": 0.01,
    "centroid_mode": "eq17",
    "agent_model": "integrator",
    "settle_tol": None,
    "weight_tol": 1e-2,
    "output_dir": "runs/default",
    "seed": 7,
}


class ValidationFailure(CovnetError):
    def __init__(self, message, report: ValidationReport | None = None):
        self.report = report
        super().__init__(message)


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("network", "targets", "leaders"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class SimConfig:
    data: dict
    base_dir: Path = field(default_factory=Path.cwd)

    def __post_init__(self):
        unknown = set(self.data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        self.data = _merge(DEFAULTS, self.data)
        d = self.data
        if not d["horizon"] > 0:
            raise ConfigError("horizon must be positive")
        if not d["dt"] > 0:
            raise ConfigError("dt must be positive")
        if int(d["weight_update_every"]) < 1:
            raise ConfigError("weight_update_every must be >= 1")
        ratio = d["log_every"] / d["dt"]
        if not d["log_every"] > 0 or abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
            raise ConfigError("log_every must be a positive multiple of dt")
        if d["centroid_mode"] not in CENTROID_MODES:
            raise ConfigError(f"centroid_mode must be one of {CENTROID_MODES}")
        if d["agent_model"] not in ("integrator", "quadcopter"):
            raise ConfigError("agent_model must be 'integrator' or 'quadcopter'")
        if d["regenerate"]["mode"] not in ("auto", "always", "never"):
            raise ConfigError("regenerate.mode must be auto, always or never")
        net = d["network"]
        if ("generator" in net) == ("graph_file" in net):
            raise ConfigError("network needs exactly one of 'generator' or 'graph_file'")
        if "graph_file" in net and not self.path(net["graph_file"]).exists():
            raise ConfigError(f"graph file {net['graph_file']} not found")
        tg = d["targets"]
        if ("file" in tg) == ("shape" in tg):
            raise ConfigError("targets needs exactly one of 'file' or 'shape'")
        if "file" in tg and not self.path(tg["file"]).exists():
            raise ConfigError(f"target file {tg['file']} not found")

    def __getitem__(self, key):
        return self.data[key]

    def path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        return cls(doc, path.parent.resolve())

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)


def default_config_json() -> str:
    return json.dumps(DEFAULTS, indent=2, sort_keys=True)


# ----------------------------------------------------------------- setup

@dataclass(eq=False)
class Scenario:
    """Everything the pipeline derives from a config before simulating."""

    cfg: SimConfig
    net: object
    leaders_p: dict
    reference: dict
    targets: object
    regenerated: bool
    cells: list
    plan: DesiredPlan | None = None


def _gains(cfg, N, check=True):
    g = cfg["gains"]
    if isinstance(g, dict):
        cols = [np.atleast_1d(np.asarray(g[f"k{j}"], dtype=float)) for j in (1, 2, 3, 4)]
        if any(len(c) not in (1, N) for c in cols):
            raise ConfigError(f"per-agent gains need 1 or {N} entries")
        return GainSet(*(np.broadcast_to(c, (N,)) for c in cols), check=check)
    if len(g) != 4:
        raise ConfigError("gains must be [k1, k2, k3, k4] or a per-agent {k1..k4} table")
    return GainSet.uniform(N, g, check=check)


def _network(cfg, strict=True):
    net_cfg = cfg["network"]
    if "generator" in net_cfg:
        gp = dict(net_cfg["generator"])
        fan = fan_network(int(gp.get("n_boundary", 5)), int(gp.get("depth", 2)),
                          float(gp.get("radius", 12.0)), gp.get("center", (0.0, 0.0, 0.0)),
                          gp.get("phase"))
        net = build_layers(fan.graph, fan.boundary, fan.core, fan.n, check_arity=strict)
        return net, dict(fan.leader_positions)
    graph, boundary, core, n = load_graph(cfg.path(net_cfg["graph_file"]))
    return build_layers(graph, boundary, core, n, check_arity=strict), {}


def _leaders(cfg, net, generated):
    given = cfg["leaders"].get("positions", {}) if cfg["leaders"] else {}
    pos = dict(generated)
    for k, v in given.items():
        pos[int(k)] = np.asarray(v, dtype=float)
    missing = [i for i in net.leaders if i not in pos]
    if missing:
        raise ConfigError(f"no position for leaders {missing} (set leaders.positions)")
    return {i: np.asarray(pos[i], dtype=float) for i in net.leaders}


def _targets(cfg):
    tg = cfg["targets"]
    if "file" in tg:
        return load_targets(cfg.path(tg["file"]))
    seed = tg.get("seed", cfg["seed"])
    return generate_shape(tg["shape"], int(tg.get("count", 500)), tg.get("params"),
                          int(seed), float(tg.get("z", 0.0)), float(tg.get("intensity", 1.0)))


def _regenerate(cfg, ts, cells):
    rg = cfg["regenerate"]
    return regenerate_gaussian(ts, cells, rg.get("grid_step"), rg.get("threshold"))


def prepare(cfg: SimConfig) -> Scenario:
    """Network, leaders, leading polytope, targets and desired plan."""
    net, generated = _network(cfg)
    leaders_p = _leaders(cfg, net, generated)
    poly = decompose_leading_polytope(net.boundary, leaders_p, net.core, net.n)
    cells = [Simplex([leaders_p[a] for a in c]) for c in poly.cells]
    ts = _targets(cfg)
    mode = cfg["regenerate"]["mode"]
    regenerated = False
    if mode == "always":
        ts, regenerated = _regenerate(cfg, ts, cells), True
    try:
        plan = DesiredPlan.build(net, leaders_p, ts, cfg["centroid_mode"])
    except AssumptionViolation as exc:
        if mode != "auto" or regenerated:
            raise
        log.warning("%s; regenerating targets", exc)
        ts, regenerated = _regenerate(cfg, ts, cells), True
        plan = DesiredPlan.build(net, leaders_p, ts, cfg["centroid_mode"])
    reference = reference_configuration(net, leaders_p)
    return Scenario(cfg, net, leaders_p, reference, ts, regenerated, cells, plan)


# ------------------------------------------------------------ validation

def validate_only(cfg: SimConfig) -> ValidationReport:
    """All assumption checks plus the stability report, without simulating."""
    rep = ValidationReport()
    try:
        net, generated = _network(cfg, strict=False)
    except NetworkError as exc:
        rep.checks.append(Check("layering", False, [], str(exc)))
        return rep
    rep.checks.append(Check("layering", True, [], f"M = {net.M}"))
    leaders_p = _leaders(cfg, net, generated)
    positions = reference_configuration(net, leaders_p)
    plan = None
    try:
        ts = _targets(cfg)
        plan = DesiredPlan.build(net, leaders_p, ts, cfg["centroid_mode"])
        positions = plan.p
        rep.checks.append(Check("target_coverage", True, [], f"{ts.n_d} targets"))
    except AssumptionViolation as exc:
        rep.checks.append(Check("target_coverage", False,
                                [exc.agent] if exc.agent is not None else [], str(exc)))
    except (CovnetError, KeyError) as exc:
        rep.checks.append(Check("target_coverage", False, [], str(exc)))
    rep.checks.extend(validate_network(net, positions).checks)

    gains = _gains(cfg, net.N, check=False)
    bad = (np.flatnonzero(~gains.hurwitz()) + 1).tolist()
    rep.checks.append(Check("gains_hurwitz", not bad, bad, "per-agent quartic Routh-Hurwitz"))
    if plan is not None:
        cs = assemble_collective(plan.Lbar, gains, len(net.boundary), net.leaders)
        st = stability_report(cs)
        rep.checks.append(Check("stability", st.stable, [], f"max real part {st.max_real:.6g}"))
        rep.extra["stability"] = st.to_dict()
    return rep


# ------------------------------------------------------------- simulate

@dataclass(eq=False)
class RunOutput:
    times: np.ndarray
    positions: np.ndarray  # (T, N, 3)
    inputs: np.ndarray  # (T, N, 3)
    weights: np.ndarray  # (T, F, k)
    scenario: Scenario
    metrics: dict
    out_dir: Path | None = None
    diverged: bool = False


def settle_time(times, err, tol):
    """First logged time after which `err` stays <= tol; None if it never does."""
    above = np.flatnonzero(err > tol)
    if above.size == 0:
        return float(times[0])
    last = above[-1]
    if last == len(times) - 1:
        return None
    return float(times[last + 1])


def _min_pairwise(positions):
    from scipy.spatial.distance import pdist

    best, when = math.inf, 0
    for k, P in enumerate(positions):
        if len(P) < 2:
            break
        d = float(pdist(P).min())
        if d < best:
            best, when = d, k
    return best, when


def compute_metrics(out: RunOutput, stability: dict) -> dict:
    sc = out.scenario
    net, plan = sc.net, sc.plan
    P = plan.positions_array(net.N)
    diam = float(max(np.linalg.norm(a - b) for a in sc.leaders_p.values() for b in sc.leaders_p.values()))
    tol = sc.cfg["settle_tol"] if sc.cfg["settle_tol"] is not None else 1e-2 * diam
    wtol = sc.cfg["weight_tol"]
    t = out.times
    metrics = {
        "n_agents": net.N,
        "n_followers": len(net.followers),
        "layers": net.M + 1,
        "n_targets": sc.targets.n_d,
        "targets_regenerated": sc.regenerated,
        "horizon": float(sc.cfg["horizon"]),
        "dt": float(sc.cfg["dt"]),
        "agent_model": sc.cfg["agent_model"],
        "diverged": out.diverged,
        "stability": stability,
        "settle_tol": tol,
        "weight_tol": wtol,
    }
    if len(t) == 0:
        return metrics
    err = np.linalg.norm(out.positions - P[None], axis=2)  # (T, N)
    vp = np.array([[plan.varpi[(i, j)] for j in net.in_nbrs[i]] for i in net.followers])
    werr = np.abs(out.weights - vp[None]).max(axis=2) if vp.size else np.zeros((len(t), 0))
    settle = {str(i): settle_time(t, err[:, i - 1], tol) for i in range(1, net.N + 1)}
    wsettle = {str(i): settle_time(t, werr[:, f], wtol) for f, i in enumerate(net.followers)}
    finite = [v for v in settle.values() if v is not None]
    wfinite = [v for v in wsettle.values() if v is not None]
    dmin, kmin = _min_pairwise(out.positions)
    metrics.update({
        "final_time": float(t[-1]),
        "final_max_position_error": float(err[-1].max()),
        "final_max_weight_error": float(werr[-1].max()) if werr.size else 0.0,
        "settle_time": settle,
        "max_settle_time": max(finite) if len(finite) == len(settle) else None,
        "weight_settle_time": wsettle,
        "max_weight_settle_time": (max(wfinite, default=0.0)
                                   if len(wfinite) == len(wsettle) else None),
        "min_pairwise_distance": dmin,
        "min_pairwise_distance_time": float(t[kmin]),
    })
    return metrics


def _make_simulator(sc: Scenario, gains):
    cfg = sc.cfg
    pl = cfg["initial"]
    start = affine_placement(sc.reference, pl.get("scale", 1.0), pl.get("rotation", 0.0),
                             pl.get("translation", (0.0, 0.0, 0.0)), pl.get("center"))
    state = initial_state(start, sc.net.N)
    args = (sc.net, sc.leaders_p, sc.targets, gains, state, cfg["dt"],
            int(cfg["weight_update_every"]), cfg["centroid_mode"])
    if cfg["agent_model"] == "quadcopter":
        from .quadcopter import QuadcopterTeamSimulator, QuadParams

        return QuadcopterTeamSimulator(*args, params=QuadParams(float(cfg["mass"])),
                                       yaw_gains=tuple(cfg["yaw_gains"]),
                                       initial_yaw=float(cfg["initial_yaw"]))
    return TeamSimulator(*args)


def simulate(sc: Scenario, gains: GainSet):
    """Run to the horizon; returns (times, positions, inputs, weights, diverged)."""
    cfg = sc.cfg
    sim = _make_simulator(sc, gains)
    dt = cfg["dt"]
    stride = int(round(cfg["log_every"] / dt))
    total = int(round(cfg["horizon"] / dt))
    times, pos, inp, wts = [], [], [], []

    def record():
        sim.prepare()
        times.append(round(sim.steps * dt, 9))
        pos.append(sim.state[:, 0, :].copy())
        inp.append(sim.inputs())
        wts.append(sim.weights.copy())

    diverged = False
    record()
    try:
        while sim.steps < total:
            sim.advance(min(stride, total - sim.steps))
            record()
    except DivergenceError as exc:
        log.error("%s", exc)
        diverged = exc
    F, k = sim.weights.shape
    return (np.array(times), np.array(pos).reshape(-1, sc.net.N, 3),
            np.array(inp).reshape(-1, sc.net.N, 3), np.array(wts).reshape(-1, F, k), diverged)


def run_scenario(cfg: SimConfig, out_dir=None, write: bool = True) -> RunOutput:
    """Plan, check, simulate and (optionally) write outputs.

    Raises ValidationFailure before any simulation when an assumption or the
    stability gate fails, and DivergenceError (after flushing partial logs)
    if the state blows up.
    """
    try:
        sc = prepare(cfg)
    except (AssumptionViolation, NetworkError, InvalidInputError) as exc:
        raise ValidationFailure(str(exc)) from exc
    report = validate_network(sc.net, sc.plan.p)
    if not report.passed:
        raise ValidationFailure("network validation failed", report)
    gains = _gains(cfg, sc.net.N, check=False)
    if not np.all(gains.hurwitz()):
        bad = (np.flatnonzero(~gains.hurwitz()) + 1).tolist()
        raise ValidationFailure(f"gains of agents {bad} are not Hurwitz")
    stab = stability_report(assemble_collective(sc.plan.Lbar, gains, len(sc.net.boundary),
                                                sc.net.leaders))
    if not stab.stable:
        raise ValidationFailure(f"collective system unstable (max real part {stab.max_real:.3g})")

    times, pos, inp, wts, diverged = simulate(sc, gains)
    out = RunOutput(times, pos, inp, wts, sc, {}, None, bool(diverged))
    out.metrics = compute_metrics(out, stab.to_dict())
    if write:
        out.out_dir = Path(out_dir) if out_dir is not None else cfg.path(cfg["output_dir"])
        write_outputs(out, out.out_dir)
    if diverged:
        raise diverged
    return out


# --------------------------------------------------------------- output

def _write_rows(path, header, arr, fmt):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        if len(arr):
            np.savetxt(fh, arr, fmt=fmt, delimiter=",")


def write_outputs(out: RunOutput, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sc = out.scenario
    net, plan = sc.net, sc.plan
    T, N = len(out.times), net.N
    agents = np.tile(np.arange(1, N + 1), T)
    tt = np.repeat(out.times, N)
    traj = np.column_stack([tt, agents, out.positions.reshape(-1, 3), out.inputs.reshape(-1, 3)])
    _write_rows(out_dir / "trajectory.csv", ["t", "agent", "rx", "ry", "rz", "rdx", "rdy", "rdz"],
                traj, ["%.6f", "%d"] + ["%.17g"] * 6)

    edges = [(i, j) for i in net.followers for j in net.in_nbrs[i]]
    E = len(edges)
    if E:
        ij = np.array(edges * T)
        vp = np.tile([plan.varpi[e] for e in edges], T)
        w = out.weights.reshape(T, -1).reshape(-1)
        rows = np.column_stack([np.repeat(out.times, E), ij, w, vp])
    else:
        rows = np.zeros((0, 5))
    _write_rows(out_dir / "weights.csv", ["t", "i", "j", "w", "varpi"], rows,
                ["%.6f", "%d", "%d", "%.17g", "%.17g"])

    (out_dir / "metrics.json").write_text(json.dumps(out.metrics, indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")
    (out_dir / "plan.json").write_text(plan.to_json() + "\n", encoding="utf-8")
    save_targets(sc.targets, out_dir / "targets.csv")
    save_graph(out_dir / "network.json", net.graph, net.boundary, net.core, net.n)
    (out_dir / "config.json").write_text(sc.cfg.to_json() + "\n", encoding="utf-8")


# ---------------------------------------------------------------- plots

PLOT_KINDS = ("traj", "weights", "targets")


def _read_csv(path):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # header-only file
        return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def emit_plot_data(run, which: str) -> list:
    """Write per-figure CSV series under ``<run>/plots`` and return their paths."""
    if which not in PLOT_KINDS:
        raise InvalidInputError(f"which must be one of {PLOT_KINDS}")
    run_dir = Path(run.out_dir if isinstance(run, RunOutput) else run)
    plots = run_dir / "plots"
    plots.mkdir(exist_ok=True)
    try:
        plan_doc = json.loads((run_dir / "plan.json").read_text(encoding="utf-8"))
        graph, boundary, core, n = load_graph(run_dir / "network.json")
    except OSError as exc:
        raise OSError(f"{exc.filename}: {exc.strerror}") from exc
    plan = DesiredPlan.from_dict(plan_doc)
    net = build_layers(graph, boundary, core, n, check_arity=False)
    written = []
    if which == "traj":
        arr = _read_csv(run_dir / "trajectory.csv")
        for i in graph.agents:
            rows = arr[arr[:, 1] == i] if arr.size else np.zeros((0, 8))
            p = plan.p[i]
            data = np.column_stack([rows[:, 0], rows[:, 2:8], np.tile(p, (len(rows), 1))]) \
                if len(rows) else np.zeros((0, 10))
            path = plots / f"traj_agent{i}.csv"
            _write_rows(path, ["t", "rx", "ry", "rz", "rdx", "rdy", "rdz", "px", "py", "pz"], data,
                        ["%.6f"] + ["%.17g"] * 9)
            written.append(path)
    elif which == "weights":
        arr = _read_csv(run_dir / "weights.csv")
        for i in net.followers:
            nb = net.in_nbrs[i]
            header = ["t"]
            for j in nb:
                header += [f"w_{i}_{j}", f"varpi_{i}_{j}"]
            cols = []
            for j in nb:
                rows = arr[(arr[:, 1] == i) & (arr[:, 2] == j)] if arr.size else np.zeros((0, 5))
                cols.append(rows)
            T = len(cols[0])
            data = np.zeros((T, 1 + 2 * len(nb)))
            if T:
                data[:, 0] = cols[0][:, 0]
                for k, rows in enumerate(cols):
                    data[:, 1 + 2 * k] = rows[:, 3]
                    data[:, 2 + 2 * k] = rows[:, 4]
            path = plots / f"weights_agent{i}.csv"
            _write_rows(path, header, data, ["%.6f"] + ["%.17g"] * (2 * len(nb)))
            written.append(path)
    else:
        ts = load_targets(run_dir / "targets.csv")
        path = plots / "targets.csv"
        save_targets(ts, path)
        written.append(path)
        data = np.array([[i, net.layer_of[i], *plan.p[i]] for i in graph.agents])
        path = plots / "desired_positions.csv"
        _write_rows(path, ["agent", "layer", "x", "y", "z"], data, ["%d", "%d"] + ["%.17g"] * 3)
        written.append(path)
    return written
