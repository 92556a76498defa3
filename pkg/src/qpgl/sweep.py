"""Configuration, task expansion and deterministic parallel execution of sweeps.

A sweep is a cartesian product over parameter axes.  Every task is a pure
function of (config, task index); randomness comes from a stream keyed by
``(seed, task index)``, and results are emitted in task order, so output
files do not depend on the worker count.
"""
from __future__ import annotations

import copy
import functools
import itertools
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from ._io import csv_text, digest, dumps
from ._rng import make_rng
from .dual_green import NearSingular, assemble, dump_matrix, green
from .lattice import (BlockStructure, Region, RegionDescriptor, StructuralError, cube,
                      enumerate_region)
from .msa_checks import (BlochSample, LatticeVector, absence_witness, build_covering,
                         spectral_window_check, verify_coupling_decay, verify_coupling_norm,
                         verify_perturbation_lemma, window_grid, duality_residual)
from .potential import ConfigurationError, InvariantError, PotentialModel, from_named_model
from .resonance import (PreconditionError, ResonanceSpec, ScaleSchedule, double_resonance_scan,
                        first_step_coupling, first_step_delta, in_resonance, section_measure,
                        section_bound, cartan_probe)

SUBCOMMANDS = ("assemble", "green", "ldt-scan", "resonance-measure", "double-resonance",
               "cartan-probe", "coupling-verify", "witness", "duality", "spectrum-window",
               "selftest")

FIRST_STEP = "first-step"

# axes expanded into tasks, outermost first
AXES = {
    "assemble": ("N", "Theta", "omega", "eps"),
    "green": ("N", "Theta", "E", "omega", "eps"),
    "ldt-scan": ("N", "E", "omega", "eps", "Theta"),
    "resonance-measure": ("j", "theta_section", "N", "delta", "E", "omega"),
    "double-resonance": ("N", "delta", "Theta", "E", "omega"),
    "cartan-probe": ("Theta", "E", "omega", "eps"),
    "coupling-verify": ("check", "instance"),
    "witness": ("N", "Theta", "E", "omega", "eps"),
    "duality": ("N", "Theta", "E", "omega", "eps"),
    "spectrum-window": ("N", "E", "omega", "eps"),
    "selftest": ("suite",),
}

# distinct stream offsets so sampled axes never share random numbers with tasks
_AXIS_STREAM = {"Theta": 1 << 40, "E": 2 << 40, "omega": 3 << 40, "eps": 4 << 40,
                "theta_section": 5 << 40, "delta": 6 << 40}


# ---------------------------------------------------------------- configuration

def parse_override(text: str) -> tuple[list[str], object]:
    """``a.b.c=value`` with the value read as a TOML literal (bare strings allowed)."""
    if "=" not in text:
        raise ConfigurationError(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigurationError(f"--set has an empty key in {text!r}")
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key.split("."), value


def apply_overrides(raw: dict, overrides) -> dict:
    raw = copy.deepcopy(raw)
    for item in overrides or ():
        path, value = parse_override(item)
        node = raw
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"--set {item!r}: {part!r} is not a table")
        node[path[-1]] = value
    return raw


def load_config_text(text: str, source: str = "<config>") -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{source}: {exc}") from exc


@dataclass
class SweepConfig:
    raw: dict
    bs: BlockStructure
    seed: int | None
    workers: int
    schedule: ScaleSchedule
    out_dir: Path
    axes: dict = field(default_factory=dict)

    @property
    def digest(self) -> str:
        return digest(self.raw)

    def table(self, name: str) -> dict:
        return self.raw.get(name.replace("-", "_"), {}) or {}


def _field(raw: dict, path: str, default=None, required=False):
    node = raw
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            if required:
                raise ConfigurationError(f"missing required field {path!r}")
            return default
        node = node[part]
    return node


def build_config(raw: dict, subcommand: str, seed: int | None = None,
                 workers: int | None = None, out: str | None = None) -> SweepConfig:
    if subcommand not in SUBCOMMANDS:
        raise ConfigurationError(f"unknown subcommand {subcommand!r}")
    raw = copy.deepcopy(raw)
    if seed is not None:
        raw["seed"] = int(seed)
    try:
        bs = BlockStructure(tuple(int(v) for v in _field(raw, "structure.blocks", required=True)))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"field 'structure.blocks': {exc}") from exc
    sched_raw = dict(_field(raw, "schedule", {}) or {})
    try:
        schedule = ScaleSchedule(**{k: v for k, v in sched_raw.items()})
    except TypeError as exc:
        raise ConfigurationError(f"table 'schedule': {exc}") from exc
    rho = float(_field(raw, "potential.rho", 0.5))
    if not 0 < rho < 1:
        raise ConfigurationError("field 'potential.rho' must lie in (0, 1)")
    w = int(workers if workers is not None else raw.get("workers", 1))
    if w < 1:
        raise ConfigurationError("workers must be at least 1")
    out_dir = Path(out if out is not None else _field(raw, "output.dir", "qpgl-out"))
    s = raw.get("seed")
    cfg = SweepConfig(raw, bs, None if s is None else int(s), w, schedule, out_dir)
    cfg.axes = {name: _axis(cfg, name, subcommand) for name in AXES[subcommand]}
    for name, values in cfg.axes.items():
        if len(values) == 0:
            raise ConfigurationError(f"grid axis {name!r} is empty")
    if subcommand == "double-resonance":
        cfg.schedule.check_scales(cfg.axes["N"])
    return cfg


def _need_seed(cfg: SweepConfig, what: str) -> int:
    if cfg.seed is None:
        raise ConfigurationError(f"{what} is stochastic: a seed is required (--seed or 'seed')")
    return cfg.seed


_AXIS_DEFAULTS = {"N": [4], "E": [1.0], "eps": [0.0], "j": [0], "instance": None,
                  "check": ["perturbation", "coupling-norm", "coupling-decay"], "suite": None}


def _axis(cfg: SweepConfig, name: str, subcommand: str) -> list:
    bs = cfg.bs
    grid = cfg.raw.get("grid", {}) or {}
    spec = grid.get(name, _AXIS_DEFAULTS.get(name))
    if name == "instance":
        n = int(cfg.table("coupling_verify").get("instances", 50))
        return list(range(n))
    if name == "suite":
        from .selftest import SUITES
        return list(SUITES)
    if name == "theta_section":
        dim = bs.d - 1
        if dim == 0:
            return [()]
    elif name == "Theta":
        dim = bs.d
    elif name == "omega":
        dim = bs.b
    else:
        dim = 0
    if spec is None:
        if name == "Theta":
            spec = [[0.3] * bs.d]
        else:
            raise ConfigurationError(f"grid axis {name!r} is required for this subcommand")
    if spec is None and name == "delta" and subcommand == "double-resonance":
        spec = FIRST_STEP
    if isinstance(spec, str):
        if spec == FIRST_STEP and name in ("eps", "delta"):
            return [FIRST_STEP]
        raise ConfigurationError(f"field 'grid.{name}': unsupported value {spec!r}")
    if isinstance(spec, dict):
        values = _axis_from_table(cfg, name, spec, dim)
    else:
        values = list(spec) if isinstance(spec, list) else [spec]
    out = []
    for v in values:
        if dim:
            vec = np.atleast_1d(np.asarray(v, dtype=float)).reshape(-1)
            if vec.size != dim:
                raise ConfigurationError(f"field 'grid.{name}': entries need {dim} components")
            if name == "omega" and (np.any(vec < 0) or np.any(vec > 2 * np.pi)):
                raise ConfigurationError("field 'grid.omega': entries must lie in [0, 2pi]")
            out.append(tuple(float(x) for x in vec))
        elif name in ("N", "j", "instance"):
            out.append(int(v))
        elif name == "check":
            if v not in ("perturbation", "coupling-norm", "coupling-decay"):
                raise ConfigurationError(f"field 'grid.check': unknown check {v!r}")
            out.append(str(v))
        elif v == FIRST_STEP and name in ("eps", "delta"):
            out.append(FIRST_STEP)
        else:
            try:
                out.append(float(v))
            except (TypeError, ValueError):
                raise ConfigurationError(f"field 'grid.{name}': {v!r} is not a number") from None
    return out


def _axis_from_table(cfg: SweepConfig, name: str, spec: dict, dim: int) -> list:
    if "samples" in spec:
        n = int(spec["samples"])
        default_hi = 2 * np.pi if name == "omega" else 1.0
        lo, hi = float(spec.get("low", 0.0)), float(spec.get("high", default_hi))
        seed = _need_seed(cfg, f"sampled axis {name!r}")
        base = _AXIS_STREAM.get(name, 7 << 40)
        return [make_rng(seed, base + i).uniform(lo, hi, size=max(dim, 1)).tolist()
                if dim else float(make_rng(seed, base + i).uniform(lo, hi))
                for i in range(n)]
    if {"start", "stop", "num"} <= spec.keys():
        vals = np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]))
        return [[float(v)] * dim if dim else float(v) for v in vals]
    if {"start", "stop", "step"} <= spec.keys():
        n = int(math.floor((spec["stop"] - spec["start"]) / spec["step"] + 1e-9)) + 1
        vals = spec["start"] + spec["step"] * np.arange(n)
        return [[float(v)] * dim if dim else float(v) for v in vals]
    raise ConfigurationError(f"field 'grid.{name}': table needs samples or start/stop/(num|step)")


@functools.lru_cache(maxsize=8)
def _potential_cached(text: str, blocks: tuple) -> PotentialModel:
    spec = json.loads(text)
    bs = BlockStructure(blocks)
    if "file" in spec:
        return PotentialModel.load(spec["file"], bs=bs)
    name = spec.get("name", "separable-cosine")
    return from_named_model(name, bs, rho=float(spec.get("rho", 0.5)),
                            K_cut=spec.get("K_cut"), seed=spec.get("seed"),
                            amplitude=float(spec.get("amplitude", 1.0)))


def potential_from_config(cfg: SweepConfig) -> PotentialModel:
    spec = dict(cfg.raw.get("potential", {}) or {})
    if spec.get("name") == "random-analytic" and "seed" not in spec:
        spec["seed"] = _need_seed(cfg, "the random-analytic potential")
    try:
        return _potential_cached(json.dumps(spec, sort_keys=True), cfg.bs.blocks)
    except (InvariantError, ConfigurationError):
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"table 'potential': {exc}") from exc


def region_from_config(cfg: SweepConfig, N: int) -> Region:
    spec = cfg.raw.get("region", {}) or {}
    kind = spec.get("kind", "cube")
    b = cfg.bs.b
    center = tuple(spec.get("center", (0,) * b))
    if kind == "cube":
        return cube(N, b, center)
    if kind == "elementary":
        tags = tuple(spec.get("tags", ("none",) * b))
        return enumerate_region(RegionDescriptor(center, N, tags, spec.get("removal", "axes")))
    if kind == "points":
        return Region(np.asarray(spec["points"], dtype=np.int64).reshape(-1, b))
    raise ConfigurationError(f"field 'region.kind': unknown kind {kind!r}")


# ---------------------------------------------------------------- tasks

def expand_tasks(cfg: SweepConfig, subcommand: str) -> list[dict]:
    names = AXES[subcommand]
    return [dict(zip(names, combo)) for combo in itertools.product(*(cfg.axes[n] for n in names))]


def _resolve_first_step(cfg: SweepConfig, N: int):
    b = cfg.bs.b
    delta = first_step_delta(N, cfg.schedule.c1, b, cfg.schedule.C)
    return delta, first_step_coupling(N, delta, b)


def _eps_of(cfg, task):
    eps = task.get("eps", 0.0)
    if eps == FIRST_STEP:
        return _resolve_first_step(cfg, task["N"])[1]
    return eps


def _flat(prefix: str, values) -> dict:
    return {f"{prefix}_{i + 1}": float(v) for i, v in enumerate(values)}


def _task_assemble(cfg, V, task, index):
    N, eps = task["N"], _eps_of(cfg, task)
    Lam = region_from_config(cfg, N)
    h = assemble(Lam, task["Theta"], task["omega"], eps, V)
    rec = {"N": N, "size": len(Lam), "eps": eps,
           "hermitian_error": float(np.max(np.abs(h.matrix - h.matrix.conj().T))) if len(Lam) else 0.0}
    if cfg.table("assemble").get("dump", True):
        path = cfg.out_dir / "assemble" / f"h_{index:05d}.txt"
        path.parent.mkdir(parents=True, exist_ok=True)
        dump_matrix(path, h.matrix)
        rec["file"] = str(path.relative_to(cfg.out_dir))
    return rec


def _task_green(cfg, V, task, index):
    N, eps = task["N"], _eps_of(cfg, task)
    Lam = region_from_config(cfg, N)
    opts = cfg.table("green")
    rep = green(Lam, task["E"], task["Theta"], task["omega"], eps, V, N=N,
                sing_tol=opts.get("sing_tol"))
    rec = {"eps": eps, **rep.as_record(), "max_decay_ratio": rep.max_decay_ratio}
    if opts.get("dump", False) and rep.inverse is not None:
        path = cfg.out_dir / "green" / f"G_{index:05d}.txt"
        path.parent.mkdir(parents=True, exist_ok=True)
        dump_matrix(path, rep.inverse)
        rec["file"] = str(path.relative_to(cfg.out_dir))
    if rep.near_singular:
        rec["status"] = f"near-singular: smallest singular value {rep.smallest_sv:.3e}"
    return rec


def _task_ldt(cfg, V, task, index):
    N = task["N"]
    b = cfg.bs.b
    delta = first_step_delta(N, cfg.schedule.c1, b, cfg.schedule.C)
    eps = _eps_of(cfg, task)
    res, _ = in_resonance(task["Theta"], ResonanceSpec(N, delta, task["E"], task["omega"], cfg.bs))
    rep = green(cube(N, b), task["E"], task["Theta"], task["omega"], eps, V, N=N)
    rec = {"delta": delta, "eps": eps, "in_X_N": res, "op_norm": rep.op_norm,
           "near_singular": rep.near_singular, "ldt_pass": rep.ldt_pass}
    if rep.inverse is not None:
        from .dual_green import max_weighted_entry
        fs_norm = rep.op_norm <= 2.0 / delta
        fs_decay = max_weighted_entry(rep.inverse, rep.region, V.rho, 0.0) <= 2.0 / delta
        rec.update({"first_step_norm_ok": fs_norm, "first_step_decay_ok": fs_decay,
                    "first_step_pass": fs_norm and fs_decay})
    else:
        rec.update({"first_step_norm_ok": False, "first_step_decay_ok": False, "first_step_pass": False})
    return rec


def _task_resonance(cfg, V, task, index):
    N = task["N"]
    delta = task["delta"]
    if delta == FIRST_STEP:
        delta = _resolve_first_step(cfg, N)[0]
    spec = ResonanceSpec(N, delta, task["E"], task["omega"], cfg.bs)
    m = section_measure(task["j"], task["theta_section"], spec)
    return {"delta": delta, "measure": m, "bound4": section_bound(spec)}


def _task_double(cfg, V, task, index):
    opts = cfg.table("double_resonance")
    eps = opts.get("eps")
    # "first-step" means the first-step width at the subordinate scale N1
    delta = None if task["delta"] == FIRST_STEP else task["delta"]
    res = double_resonance_scan(task["Theta"], task["E"], task["omega"], task["N"], cfg.schedule,
                                cfg.bs, N1=opts.get("N1"), delta=delta, eps=eps)
    return {"N1": res.N1, "delta": res.delta, "M": res.M, "success": res.success,
            "candidates": len(res.records),
            "_detail": [[r.M, r.annulus_size, r.failures, r.first_failure_k] for r in res.records]}


def _task_cartan(cfg, V, task, index):
    opts = cfg.table("cartan_probe")
    b = cfg.bs.b
    Nt = int(opts.get("N_tilde", 4))
    N1 = int(opts.get("N1", 1))
    samples = int(opts.get("samples", 200))
    Lam = cube(Nt, b)
    bar = cube(int(opts.get("bar_radius", 0)), b)
    seed = _need_seed(cfg, "cartan-probe")
    eps = _eps_of(cfg, {**task, "N": Nt})
    est = cartan_probe(Lam, bar, task["Theta"], int(opts.get("j", 0)), task["E"], task["omega"],
                       eps, V, Nt, samples, seed=(seed + index) & ((1 << 63) - 1), N1=N1)
    return {"eps": eps, "estimate": est.estimate, "ci_low": est.ci[0], "ci_high": est.ci[1],
            "interval_length": est.interval_length, "bad": est.bad, "samples": est.samples,
            "target": est.target, "within_target": est.within_target,
            "_detail": [list(p) for p in est.probes]}


def coupling_instance(check: str, rng: np.random.Generator, V: PotentialModel, opts: dict):
    """Random instance for one of the coupling checks, aimed at satisfying its gate.

    Theta (and omega, unless fixed) are uniform; E sits in the middle of the
    widest gap of the unperturbed diagonal so the local inverses stay moderate.
    """
    b = V.bs.b
    N = int(opts.get("N", 8))
    M = int(opts.get("M", 3))
    eps = float(opts.get("eps", 1e-4))
    rho_bar = float(opts.get("rho_bar", V.rho))
    fixed_omega = opts.get("omega")
    Lam = cube(N, b)
    gap = float(opts.get("gap", 0.2))
    e_lo, e_hi = float(opts.get("E_low", 0.0)), float(opts.get("E_high", 4.0))
    for _ in range(int(opts.get("attempts", 200))):
        omega = np.asarray(fixed_omega if fixed_omega is not None
                           else rng.uniform(0, 2 * np.pi, size=b), dtype=float)
        Theta = rng.uniform(-2.0, 2.0, size=V.bs.d)
        diag = np.sort(assemble(Lam, Theta, omega, 0.0, V).diagonal)
        # widest spectral gap of the unperturbed diagonal inside [e_lo, e_hi]
        edges = np.concatenate(([e_lo - gap], diag[(diag > e_lo - gap) & (diag < e_hi + gap)], [e_hi + gap]))
        widths = np.diff(edges)
        i = int(np.argmax(widths))
        E = float(np.clip(0.5 * (edges[i] + edges[i + 1]), e_lo, e_hi))
        if np.min(np.abs(diag - E)) >= gap:
            break
    else:
        raise PreconditionError(f"no energy at distance {gap} from the diagonal after sampling")
    return dict(N=N, M=M, eps=eps, rho_bar=rho_bar, omega=omega, Lam=Lam, Theta=Theta, E=E)


def run_coupling(check: str, rng: np.random.Generator, V: PotentialModel, opts: dict):
    inst = coupling_instance(check, rng, V, opts)
    N, M, eps, rho_bar = inst["N"], inst["M"], inst["eps"], inst["rho_bar"]
    Lam, Theta, E, omega = inst["Lam"], inst["Theta"], inst["E"], inst["omega"]
    if check == "perturbation":
        A = assemble(Lam, Theta, omega, eps, V).shifted(E)
        D = Lam.distances()
        scale = float(opts.get("perturbation_scale", 1.0))
        P = rng.uniform(-1.0, 1.0, size=A.shape) * np.exp(-3 * rho_bar * N - rho_bar * D) * scale
        P = (P + P.T) / 2.0
        return verify_perturbation_lemma(A, A + P, rho_bar, N, Lam)
    if check == "coupling-norm":
        cov = build_covering(Lam, M, "shifted")
        return verify_coupling_norm(Lam, E, Theta, omega, eps, V, cov, M, M, rho_bar, N=N)
    if check == "coupling-decay":
        Lam1 = Region(np.zeros((1, V.bs.b), dtype=np.int64))
        rest = Lam.difference(Lam1)
        cov = build_covering(rest, M, "ball")
        return verify_coupling_decay(Lam, Lam1, E, Theta, omega, eps, V, cov, M, rho_bar, N=N,
                                     C=float(opts.get("C", 1.0)))
    raise ConfigurationError(f"unknown check {check!r}")


def _task_coupling(cfg, V, task, index):
    seed = _need_seed(cfg, "coupling-verify")
    rep = run_coupling(task["check"], make_rng(seed, index), V, cfg.table("coupling_verify"))
    margin = rep.margins.get("margin_relative", rep.margins.get("norm_relative",
                                                                rep.margins.get("margin")))
    return {"hypotheses_hold": rep.hypotheses_hold, "conclusions_hold": rep.conclusions_hold,
            "margin": margin, "_report": rep.as_dict()}


def _task_witness(cfg, V, task, index):
    N = task["N"]
    opts = cfg.table("witness")
    eps = _eps_of(cfg, task)
    C = float(opts.get("poly_C", 1.0))
    deg = float(opts.get("poly_degree", 5 * cfg.bs.b))
    res = absence_witness(N, task["E"], task["Theta"], task["omega"], eps, V, poly_bound=(C, deg),
                          c1=cfg.schedule.c1, C=cfg.schedule.C)
    return {"eps": eps, "rhs_bound": res.rhs_bound, "threshold": res.threshold, "pass": res.passed}


def _task_duality(cfg, V, task, index):
    opts = cfg.table("duality")
    N, eps = task["N"], _eps_of(cfg, task)
    Lam = cube(N, cfg.bs.b)
    h = assemble(Lam, task["Theta"], task["omega"], eps, V).matrix
    w, U = np.linalg.eigh(h)
    i = int(np.argmin(np.abs(w - task["E"])))
    seed = cfg.seed if cfg.seed is not None else 0
    rng = make_rng(seed, index)
    theta = rng.uniform(0, 2 * np.pi, size=cfg.bs.b)
    x_lo, x_hi, nx = float(opts.get("x_low", -5.0)), float(opts.get("x_high", 5.0)), int(opts.get("x_points", 41))
    axis = np.linspace(x_lo, x_hi, nx)
    x = np.stack(np.meshgrid(*([axis] * cfg.bs.d), indexing="ij"), axis=-1).reshape(-1, cfg.bs.d)
    E = w[i] + float(opts.get("energy_shift", 0.0))
    res = duality_residual(BlochSample(task["Theta"], theta, E, LatticeVector(Lam, U[:, i]), x),
                           task["omega"], eps, V)
    return {"eps": eps, "eigenvalue": w[i], "E_used": E, "residual": res.residual,
            "psi_max": res.psi_max, **{f"budget_{k}": v for k, v in res.budget.items()},
            "within_budget": res.within_budget}


def _task_window(cfg, V, task, index):
    opts = cfg.table("spectrum_window")
    N, eps = task["N"], _eps_of(cfg, task)
    step = float(opts.get("step", 0.05))
    grid = window_grid(task["E"], cfg.bs.d, step, float(opts.get("pad", 0.5)))
    res = spectral_window_check(task["E"], cube(N, cfg.bs.b), task["omega"], eps, V, grid)
    return {"eps": eps, **{k: v for k, v in res.as_dict().items() if k != "E"}}


def _task_selftest(cfg, V, task, index):
    from .selftest import run_suite
    ok, detail = run_suite(task["suite"])
    return {"passed": ok, "detail": detail, **({} if ok else {"status": "error: suite failed"})}


_RUNNERS = {
    "assemble": _task_assemble, "green": _task_green, "ldt-scan": _task_ldt,
    "resonance-measure": _task_resonance, "double-resonance": _task_double,
    "cartan-probe": _task_cartan, "coupling-verify": _task_coupling, "witness": _task_witness,
    "duality": _task_duality, "spectrum-window": _task_window, "selftest": _task_selftest,
}


def run_task(payload) -> dict:
    """Execute one task; never raises.  ``payload = (subcommand, cfg, index, task)``."""
    subcommand, cfg, index, task = payload
    rec = {"status": "ok"}
    with threadpool_limits(limits=1):
        try:
            V = potential_from_config(cfg) if subcommand != "selftest" else None
            out = _RUNNERS[subcommand](cfg, V, task, index)
            rec.update(out)
        except PreconditionError as exc:
            rec["status"] = f"refused: {exc}"
        except NearSingular as exc:
            rec["status"] = f"near-singular: {exc}"
        except Exception as exc:  # noqa: BLE001 - recorded per task, never fatal
            rec["status"] = f"error: {type(exc).__name__}: {exc}"
    return rec


# ---------------------------------------------------------------- output

@dataclass
class SweepResult:
    subcommand: str
    tasks: list[dict]
    records: list[dict]
    summary: dict
    provenance: dict
    files: list[Path] = field(default_factory=list)

    @property
    def errored(self) -> bool:
        return any(r["status"].startswith("error") for r in self.records)


def _columns(subcommand: str, cfg: SweepConfig, records: list[dict]) -> list[str]:
    """Task columns first, then record keys in first-seen order, status last."""
    bs = cfg.bs
    cols = ["task"]
    if subcommand == "resonance-measure":
        cols = ["j"] + [f"theta_section_{i + 1}" for i in range(bs.d - 1)] + [
            "N", "delta", "E", "measure", "bound4"] + [f"omega_{i + 1}" for i in range(bs.b)]
    else:
        for name in AXES[subcommand]:
            if name == "Theta":
                cols += [f"Theta_{i + 1}" for i in range(bs.d)]
            elif name == "omega":
                cols += [f"omega_{i + 1}" for i in range(bs.b)]
            else:
                cols.append(name)
    for rec in records:
        for k in rec:
            if k not in cols and k != "status" and not k.startswith("_"):
                cols.append(k)
    return cols + ["status"]


def _row(subcommand, idx, task, rec, cols):
    flat = {"task": idx}
    for k, v in task.items():
        if k == "Theta":
            flat.update(_flat("Theta", v))
        elif k == "omega":
            flat.update(_flat("omega", v))
        elif k == "theta_section":
            flat.update(_flat("theta_section", v))
        else:
            flat[k] = v
    # resolved values (e.g. a first-step coupling) replace their placeholders
    flat.update({k: v for k, v in rec.items() if not k.startswith("_")})
    return [flat.get(c) for c in cols]


def _summary(subcommand: str, records: list[dict], tasks: list[dict]) -> dict:
    n = len(records)
    ok = [r for r in records if r["status"] == "ok"]
    out = {"tasks": n, "ok": len(ok), "failed": n - len(ok)}
    if subcommand == "ldt-scan":
        outside = [r for r in ok if not r.get("in_X_N")]
        out["outside_X_N"] = len(outside)
        if outside:
            out["first_step_pass_rate_outside_X_N"] = sum(r["first_step_pass"] for r in outside) / len(outside)
            out["ldt_pass_rate_outside_X_N"] = sum(r["ldt_pass"] for r in outside) / len(outside)
    elif subcommand == "double-resonance":
        rates = {}
        for t, r in zip(tasks, records):
            if r["status"] == "ok":
                rates.setdefault(f"N={t['N']},delta={r['delta']!r}", []).append(r["success"])
        out["success_rate"] = (sum(r["success"] for r in ok) / len(ok)) if ok else float("nan")
        out["success_rate_by_N_delta"] = {k: sum(v) / len(v) for k, v in rates.items()}
    elif subcommand == "coupling-verify":
        gated = [r for r in ok if r["hypotheses_hold"]]
        out["gated"] = len(gated)
        out["conclusions_held"] = sum(bool(r["conclusions_hold"]) for r in gated)
    elif subcommand in ("witness", "spectrum-window"):
        out["passed"] = sum(bool(r.get("pass")) for r in ok)
    elif subcommand == "duality":
        out["within_budget"] = sum(bool(r.get("within_budget")) for r in ok)
    elif subcommand == "green":
        out["ldt_pass"] = sum(bool(r.get("ldt_pass")) for r in ok)
    elif subcommand == "selftest":
        out["passed"] = sum(bool(r.get("passed")) for r in ok)
    return out


_DETAIL = {
    "double-resonance": ("scans", ["task", "M", "annulus_size", "failures", "first_failure_k"]),
    "cartan-probe": ("probes", ["task", "y", "norm", "is_bad"]),
}


def run(subcommand: str, cfg: SweepConfig) -> SweepResult:
    """Execute a sweep and write ``<out>/<subcommand>.csv`` and ``.json``."""
    tasks = expand_tasks(cfg, subcommand)
    payloads = [(subcommand, cfg, i, t) for i, t in enumerate(tasks)]
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(run_task, payloads, chunksize=max(1, len(tasks) // (4 * cfg.workers))))
    else:
        records = [run_task(p) for p in payloads]
    provenance = {"artifact": "qpgl", "version": __version__, "subcommand": subcommand,
                  "config_digest": cfg.digest, "seed": cfg.seed}
    summary = _summary(subcommand, records, tasks)
    result = SweepResult(subcommand, tasks, records, summary, provenance)
    write_outputs(result, cfg)
    return result


def write_outputs(result: SweepResult, cfg: SweepConfig) -> None:
    sub = result.subcommand
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    pre = [f"{k} {v}" for k, v in result.provenance.items()]
    cols = _columns(sub, cfg, result.records)
    rows = [_row(sub, i, t, r, cols) for i, (t, r) in enumerate(zip(result.tasks, result.records))]
    stem = sub.replace("-", "_")
    path = cfg.out_dir / f"{stem}.csv"
    path.write_text(csv_text(cols, rows, pre), encoding="utf-8", newline="")
    result.files.append(path)
    if sub in _DETAIL:
        name, dcols = _DETAIL[sub]
        drows = [[i] + row for i, r in enumerate(result.records) for row in r.get("_detail", [])]
        dpath = cfg.out_dir / f"{stem}_{name}.csv"
        dpath.write_text(csv_text(dcols, drows, pre), encoding="utf-8", newline="")
        result.files.append(dpath)
    records = []
    for i, (t, r) in enumerate(zip(result.tasks, result.records)):
        rec = {"task": i, "params": t}
        rec.update({k: v for k, v in r.items() if k != "_detail"})
        if "_report" in rec:
            rec["report"] = rec.pop("_report")
        records.append(rec)
    doc = {"provenance": result.provenance, "summary": result.summary, "records": records}
    jpath = cfg.out_dir / f"{stem}.json"
    jpath.write_text(dumps(doc), encoding="utf-8")
    result.files.append(jpath)
