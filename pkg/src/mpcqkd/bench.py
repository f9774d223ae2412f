"""Experiment harness: random instances x cell variants -> SoD / CSC_P tables.

For each network scale a fixed number of instances is generated from the
master seed; every variant of a group is solved on the same instance so
comparisons are paired.  Results go to two CSV files:

``raw.csv``
    ``scale,instance,variant,sod,csc_p,strong_relays,devices,status,wall_s,instance_hash``
``aggregate.csv``
    ``scale,variant,mean_sod,min_sod,max_sod,mean_cscp``

Both start with a ``# config_hash: ...`` comment line, then the header.
Rows are ordered by scale, instance, then the group's variant order.
Floats are written with ``repr`` so a reparse is exact.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import netmodel
from .errors import MpcQkdError, ParseError
from .formulation import CellVariant, EconParams, VariantKind, build_program, extract_metrics
from .keyrate import RateParams, link_rates
from .solver.milp import SolverConfig, solve_milp
from .solver.verify import verify_solution

log = logging.getLogger(__name__)

RAW_COLUMNS = ("scale", "instance", "variant", "sod", "csc_p", "strong_relays", "devices",
               "status", "wall_s", "instance_hash")
AGG_COLUMNS = ("scale", "variant", "mean_sod", "min_sod", "max_sod", "mean_cscp")
RAW_FILE = "raw.csv"
AGG_FILE = "aggregate.csv"

FULL_SCALES = (10, 13, 15, 18, 20, 23, 25, 28, 30, 33, 35, 38, 40, 43, 45)
PROFILES = {
    "ci": {"node_scales": (10, 13, 15, 18, 20), "instances_per_scale": 3},
    "paper": {"node_scales": FULL_SCALES, "instances_per_scale": 10},
}
SOLVED = ("optimal", "feasible")


class Group(str, Enum):
    ONE = "1"
    TWO = "2"


def group_variants(group):
    group = Group(str(group.value if isinstance(group, Group) else group))
    if group is Group.ONE:
        return (CellVariant(VariantKind.MDI), CellVariant(VariantKind.TF),
                CellVariant(VariantKind.MPC, 1.0))
    return (CellVariant(VariantKind.BB84), CellVariant(VariantKind.NSA),
            CellVariant(VariantKind.HYBRID_BB84_MDI), CellVariant(VariantKind.HYBRID_BB84_TF),
            CellVariant(VariantKind.MPC, 0.5))


def variant_token(v):
    """Stable text form, parseable by :meth:`CellVariant.parse`."""
    return v.label if v.tau is None else f"{v.label}:{v.tau:g}"


@dataclass(frozen=True)
class ExperimentConfig:
    node_scales: tuple = PROFILES["ci"]["node_scales"]
    instances_per_scale: int = PROFILES["ci"]["instances_per_scale"]
    variant_list: tuple = ()
    econ: EconParams = field(default_factory=EconParams)
    rates: RateParams = field(default_factory=RateParams)
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    timing: bool = False
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "node_scales", tuple(int(s) for s in self.node_scales))
        object.__setattr__(self, "variant_list", tuple(self.variant_list))
        if not self.node_scales or min(self.node_scales) < 2:
            raise MpcQkdError("node_scales must be a nonempty list of sizes >= 2")
        if self.instances_per_scale < 1:
            raise MpcQkdError("instances_per_scale must be >= 1")

    @classmethod
    def profile(cls, name, **kw):
        try:
            base = PROFILES[name]
        except KeyError:
            raise MpcQkdError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None
        return cls(**{**base, **kw})


@dataclass(frozen=True)
class ResultRow:
    scale: int
    instance: int
    variant: str
    sod: float
    csc_p: float
    strong_relays: int
    devices: int
    status: str
    wall_s: float
    instance_hash: str
    # verifier findings on the solver output; kept in memory, not in the CSV
    violations: int = field(default=0, compare=False)

    def as_tuple(self):
        return tuple(getattr(self, c) for c in RAW_COLUMNS)


@dataclass(frozen=True)
class AggregateRow:
    scale: int
    variant: str
    mean_sod: float
    min_sod: float
    max_sod: float
    mean_cscp: float


@dataclass
class ExperimentResult:
    rows: list
    variants: tuple = ()

    def by_variant(self, scale, variant):
        return [r for r in self.rows if r.scale == scale and r.variant == variant]


def instance_seed(master, scale, index):
    return int(np.random.SeedSequence([int(master), int(scale), int(index)])
               .generate_state(1, np.uint64)[0])


def make_instance(master, scale, index):
    spec = netmodel.InstanceSpec(n_nodes=scale, seed=instance_seed(master, scale, index))
    net = netmodel.generate_network(spec)
    return net, netmodel.generate_demands(net, spec)


def _solve_instance(args):
    cfg, scale, index, variants = args
    net, demands = make_instance(cfg.seed, scale, index)
    ihash = netmodel.instance_hash(net, demands)
    rates = link_rates(net, cfg.rates)
    rows = []
    for v in variants:
        t0 = time.perf_counter()
        violations = 0
        try:
            prob = build_program(net, demands, rates, cfg.econ, v)
            sol = solve_milp(prob, cfg.solver)
            status = sol.status.value
            if status in SOLVED:
                violations = len(verify_solution(prob.program, sol.x))
                if violations:
                    log.warning("scale %d instance %d %s: %d constraint violations",
                                scale, index, variant_token(v), violations)
                m = extract_metrics(sol, prob)
                vals = (m.sod, m.csc_p, m.strong_relays, m.devices)
            else:
                vals = (0.0, 0.0, 0, 0)
        except MpcQkdError as exc:
            log.warning("scale %d instance %d %s failed: %s", scale, index, variant_token(v), exc)
            status = f"error:{type(exc).__name__}"
            vals = (math.nan, math.nan, 0, 0)
        wall = time.perf_counter() - t0 if cfg.timing else 0.0
        rows.append(ResultRow(scale, index, variant_token(v), float(vals[0]), float(vals[1]),
                              int(vals[2]), int(vals[3]), status, float(wall), ihash,
                              violations))
    return rows


def run(cfg):
    """Solve every (scale, instance, variant) cell of ``cfg``."""
    if not cfg.variant_list:
        raise MpcQkdError("no variants to run")
    jobs = [(cfg, s, i, cfg.variant_list)
            for s in cfg.node_scales for i in range(cfg.instances_per_scale)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(_solve_instance, jobs))
    else:
        chunks = []
        for job in jobs:
            log.info("solving scale %d instance %d", job[1], job[2])
            chunks.append(_solve_instance(job))
    rows = [r for chunk in chunks for r in chunk]
    return ExperimentResult(rows, tuple(variant_token(v) for v in cfg.variant_list))


def run_group(cfg, group):
    """Run Group 1 (CSC-only cells, MPC at tau=1) or Group 2 (cells with C2C flows)."""
    return run(replace(cfg, variant_list=group_variants(group)))


def aggregate(result):
    """Per-(scale, variant) mean, min and max SoD and mean CSC_P.

    Error rows are skipped; a cell with no usable rows reports NaN.
    """
    if not result.rows:
        raise MpcQkdError("cannot aggregate an empty result")
    order = list(result.variants) or sorted({r.variant for r in result.rows})
    out = []
    for scale in sorted({r.scale for r in result.rows}):
        for variant in order:
            rows = [r for r in result.by_variant(scale, variant) if not r.status.startswith("error")]
            if not result.by_variant(scale, variant):
                continue
            sods = [r.sod for r in rows]
            cscp = [r.csc_p for r in rows]
            if sods:
                out.append(AggregateRow(scale, variant, math.fsum(sods) / len(sods), min(sods),
                                        max(sods), math.fsum(cscp) / len(cscp)))
            else:
                out.append(AggregateRow(scale, variant, math.nan, math.nan, math.nan, math.nan))
    return out


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _render(columns, rows, config_hash):
    buf = io.StringIO()
    buf.write(f"# config_hash: {config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(getattr(row, c)) for c in columns])
    return buf.getvalue()


def render_raw(result, config_hash):
    return _render(RAW_COLUMNS, result.rows, config_hash)


def render_aggregate(agg, config_hash):
    return _render(AGG_COLUMNS, agg, config_hash)


def _write(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc


def emit_report(result, out_dir, config_hash):
    """Write ``raw.csv`` and ``aggregate.csv`` into ``out_dir``; returns both paths."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot create {out_dir}: {exc.strerror}") from exc
    raw_path = os.path.join(out_dir, RAW_FILE)
    agg_path = os.path.join(out_dir, AGG_FILE)
    _write(raw_path, render_raw(result, config_hash))
    _write(agg_path, render_aggregate(aggregate(result), config_hash))
    return raw_path, agg_path


def parse_csv(text, columns):
    """Return ``(config_hash, list of dicts)``; raises :class:`ParseError`."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# config_hash:"):
        raise ParseError("missing '# config_hash:' line", "line 1")
    chash = lines[0].split(":", 1)[1].strip()
    reader = csv.reader(lines[1:])
    header = next(reader, None)
    if header is None or tuple(header) != tuple(columns):
        raise ParseError(f"header must be {','.join(columns)}", "line 2")
    records = []
    for lineno, rec in enumerate(reader, 3):
        if len(rec) != len(columns):
            raise ParseError(f"expected {len(columns)} fields, got {len(rec)}", f"line {lineno}")
        records.append(dict(zip(columns, rec)))
    return chash, records


def read_raw(path):
    """Load a raw CSV back into an :class:`ExperimentResult` and its config hash."""
    with open(path, encoding="utf-8") as fh:
        chash, records = parse_csv(fh.read(), RAW_COLUMNS)
    rows = []
    for i, r in enumerate(records, 3):
        try:
            rows.append(ResultRow(int(r["scale"]), int(r["instance"]), r["variant"],
                                  float(r["sod"]), float(r["csc_p"]), int(r["strong_relays"]),
                                  int(r["devices"]), r["status"], float(r["wall_s"]),
                                  r["instance_hash"]))
        except ValueError as exc:
            raise ParseError(str(exc), f"line {i}") from exc
    variants = tuple(dict.fromkeys(r.variant for r in rows))
    return chash, ExperimentResult(rows, variants)


def read_aggregate(path):
    with open(path, encoding="utf-8") as fh:
        chash, records = parse_csv(fh.read(), AGG_COLUMNS)
    return chash, [AggregateRow(int(r["scale"]), r["variant"], float(r["mean_sod"]),
                                float(r["min_sod"]), float(r["max_sod"]), float(r["mean_cscp"]))
                   for r in records]


def _mean(vals):
    vals = [v for v in vals if not math.isnan(v)]
    return math.fsum(vals) / len(vals) if vals else math.nan


def summary_ratios(result):
    """Per-scale comparison figures computed from our own runs.

    ``sod_mpc_over_mdi`` / ``sod_mpc_over_tf`` compare mean SoD (Group 1);
    ``relay_reduction_vs_bb84`` is ``1 - mean strong relays(MPC) / mean(BB84)``
    (Group 2).  Entries whose inputs are missing are omitted.
    """
    out = []
    variants = set(r.variant for r in result.rows)
    mpc = next((v for v in variants if v.startswith("MPC")), None)
    for scale in sorted({r.scale for r in result.rows}):
        entry = {"scale": scale}

        def mean_of(variant, attr):
            rows = [r for r in result.by_variant(scale, variant) if r.status in SOLVED]
            return _mean([float(getattr(r, attr)) for r in rows])

        if mpc:
            m = mean_of(mpc, "sod")
            for other, key in (("MDI", "sod_mpc_over_mdi"), ("TF", "sod_mpc_over_tf")):
                if other in variants:
                    d = mean_of(other, "sod")
                    entry[key] = m / d if d > 0 else math.inf
            if "BB84" in variants:
                b = mean_of("BB84", "strong_relays")
                if b > 0:
                    entry["relay_reduction_vs_bb84"] = 1.0 - mean_of(mpc, "strong_relays") / b
        out.append(entry)
    return out
