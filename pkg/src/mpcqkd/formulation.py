"""Topology-optimization programs for the networking-cell variants.

Every variant shares one template: directed C2C flows ``f`` and/or directed
CSC flows ``fh`` per demand pair, an epigraph variable ``Bmin`` for the
minimum satisfaction degree, integer device counts, binary trust flags and
a single budget row.  :func:`variant_table` states which pieces a variant
instantiates; :func:`build_program` turns the recipe into a
:class:`~mpcqkd.solver.model.Program`.

Variable names (LP-format safe)::

    f.s{s}.t{t}.u{u}.v{v}         C2C flow on directed link u->v
    fh.s{s}.t{t}.u{u}.p{p}.v{v}   CSC flow u->v relayed by p
    Sh.{u}.{p}.{v}                devices on canonical CSC edge (u < v)
    S.{u}.{v}                     dedicated BB84 devices on link u-v
    T.{w}                         node w is a trusted node
    Bmin                          min over pairs of delivered/demand
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .errors import FormulationError, InvalidInput
from .netmodel import DemandSet
from .solver.model import BINARY, EQ, INTEGER, LE, ProgramBuilder

FLOW_TOL = 1e-7


class VariantKind(str, Enum):
    MDI = "MDI"
    TF = "TF"
    MPC = "MPC"
    BB84 = "BB84"
    NSA = "NSA"
    HYBRID_BB84_MDI = "BB84-MDI"
    HYBRID_BB84_TF = "BB84-TF"


@dataclass(frozen=True)
class CellVariant:
    kind: VariantKind
    tau: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", VariantKind(self.kind))
        if self.tau is not None and not 0 <= self.tau <= 1:
            raise InvalidInput(f"tau must lie in [0, 1], got {self.tau}")

    @property
    def label(self):
        return self.kind.value

    def resolved_tau(self, econ):
        return econ.tau if self.tau is None else self.tau

    def to_dict(self):
        return {"kind": self.kind.value, "tau": self.tau}

    @classmethod
    def parse(cls, text):
        """``"mpc"``, ``"MPC:0.5"``, ``"bb84-mdi"`` ..."""
        name, _, tau = text.partition(":")
        lookup = {k.value.lower(): k for k in VariantKind}
        try:
            kind = lookup[name.strip().lower()]
        except KeyError:
            raise InvalidInput(f"unknown variant {text!r}; choose from {sorted(lookup)}") from None
        return cls(kind, float(tau) if tau else None)


@dataclass(frozen=True)
class EconParams:
    q_trust_cost: float = 100.0
    total_budget: float = 10_000.0
    tau: float = 0.5
    beta: float = 0.9
    device_count_cap: int = 10_000
    charge_bb84_relays: bool = True

    def __post_init__(self):
        if self.q_trust_cost < 0:
            raise InvalidInput("q_trust_cost must be >= 0")
        if not self.total_budget > 0:
            raise InvalidInput("total_budget must be > 0")
        if not 0 <= self.tau <= 1 or not 0 <= self.beta <= 1:
            raise InvalidInput("tau and beta must lie in [0, 1]")
        if self.device_count_cap < 0:
            raise InvalidInput("device_count_cap must be >= 0")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Recipe:
    """Declarative description of one variant's program.

    ``c2c_capacity``: ``"equivalent"`` -> links get ``(1-tau) R_B / 2`` per
    equivalent device derived from CSC devices; ``"dedicated"`` -> links
    carry their own integer device count ``S`` with capacity ``S R_B``;
    ``None`` -> no C2C flows.  ``csc_rate`` picks the per-device CSC rate
    (``"mpc"`` = two-hop BB84 harmonic combination, ``"mdi"``, ``"tf"``)
    scaled by ``csc_share``.
    """

    c2c_capacity: str | None
    csc_rate: str | None
    csc_share: float
    c2c_share: float
    charge_csc_endpoints: bool
    charge_c2c_transit: bool
    csc_only_group: bool

    @property
    def c2c_flows(self):
        return self.c2c_capacity is not None

    @property
    def csc_flows(self):
        return self.csc_rate is not None


def variant_table(variant, econ=None):
    econ = econ or EconParams()
    tau = variant.resolved_tau(econ)
    k = variant.kind
    transit = econ.charge_bb84_relays
    if k is VariantKind.MPC:
        return Recipe("equivalent", "mpc", tau, 1.0 - tau, True, False, tau == 1.0)
    if k is VariantKind.NSA:
        return Recipe("equivalent", "mdi", tau, 1.0 - tau, True, False, tau == 1.0)
    if k is VariantKind.MDI:
        return Recipe(None, "mdi", 1.0, 0.0, True, False, True)
    if k is VariantKind.TF:
        return Recipe(None, "tf", 1.0, 0.0, True, False, True)
    if k is VariantKind.BB84:
        return Recipe("dedicated", None, 0.0, 1.0, False, transit, False)
    if k is VariantKind.HYBRID_BB84_MDI:
        return Recipe("dedicated", "mdi", 1.0, 1.0, True, transit, False)
    if k is VariantKind.HYBRID_BB84_TF:
        return Recipe("dedicated", "tf", 1.0, 1.0, True, transit, False)
    raise InvalidInput(f"no recipe for {k}")


def equivalent_device_terms(network):
    """Directed link ``(u, v)`` -> canonical CSC keys summed into ``S_(u,v)``.

    ``S_(u,v) = sum_t Sh_(u,v,t) + sum_s Sh_(s,u,v)`` where an oriented CSC
    triple shares the device count of its canonical form.
    """
    terms = defaultdict(list)
    for e in network.csc_edges:
        for a, p, b in e.oriented():
            # (a, p, b) enters S_(a,p) as Sh_(u=a, v=p, t=b) and S_(p,b) as Sh_(s=a, u=p, v=b)
            terms[(a, p)].append(e.key)
            terms[(p, b)].append(e.key)
    return {k: sorted(v) for k, v in terms.items()}


def equivalent_devices(network, s_hat):
    """Evaluate equivalent device counts for every directed link."""
    out = {}
    terms = equivalent_device_terms(network)
    for u, v, _ in network.c2c_edges:
        for d in ((u, v), (v, u)):
            out[d] = sum(s_hat.get(k, 0) for k in terms.get(d, []))
    return out


@dataclass(frozen=True)
class MilpProblem:
    program: object
    network: object
    demands: DemandSet
    variant: CellVariant
    econ: EconParams
    recipe: Recipe
    pairs: tuple
    bmin: int
    c2c_flow: dict = field(repr=False)   # var index -> (pair, u, v)
    csc_flow: dict = field(repr=False)   # var index -> (pair, u, p, v)
    devices: dict = field(repr=False)    # var index -> key
    trust: dict = field(repr=False)      # node -> var index
    delivered: dict = field(repr=False)  # pair -> (indices, coefficients)

    @property
    def names(self):
        return self.program.names

    def var(self, name):
        return self.program.index(name)


def _fname(pair, u, v):
    return f"f.s{pair[0]}.t{pair[1]}.u{u}.v{v}"


def _fhname(pair, u, p, v):
    return f"fh.s{pair[0]}.t{pair[1]}.u{u}.p{p}.v{v}"


def _csc_rate(rates, recipe, key, beta):
    u, p, v = key
    try:
        if recipe.csc_rate == "mpc":
            return rates.mpc(u, p, v, beta)
        if recipe.csc_rate == "mdi":
            return rates.mdi(u, p, v)
        return rates.tf(u, p, v)
    except KeyError:
        raise FormulationError(f"missing {recipe.csc_rate} rate for CSC edge {key}") from None


def build_program(net, demands, rates, econ, variant):
    """Mixed-integer program for one network, demand set and cell variant."""
    if not isinstance(demands, DemandSet):
        demands = DemandSet(dict(demands))
    if len(demands) == 0:
        raise FormulationError("demand set is empty")
    for (s, t), d in demands.items():
        if not (0 <= s < net.n_nodes and 0 <= t < net.n_nodes):
            raise FormulationError(f"demand ({s},{t}) references a node outside the network")
        if not d > 0:
            raise FormulationError(f"demand ({s},{t}) must be positive")
    recipe = variant_table(variant, econ)
    r_b = {}
    for u, v, _ in net.c2c_edges:
        if (u, v) not in rates.r_b:
            raise FormulationError(f"missing BB84 rate for C2C edge ({u},{v})")
        r_b[(u, v)] = rates.r_b[(u, v)]
    csc_keys = [e.key for e in net.csc_edges]
    r_csc = {}
    if recipe.csc_flows:
        r_csc = {k: _csc_rate(rates, recipe, k, econ.beta) for k in csc_keys}

    cap = econ.device_count_cap
    pairs = tuple(demands.pairs())
    b = ProgramBuilder()
    bmin = b.add_var("Bmin", 0.0, math.inf, obj=1.0)

    # devices
    devices = {}
    sh = {}
    if recipe.csc_flows or recipe.c2c_capacity == "equivalent":
        for k in csc_keys:
            j = b.add_var("Sh.%d.%d.%d" % k, 0, cap, INTEGER)
            sh[k] = j
            devices[j] = k
    s_ded = {}
    if recipe.c2c_capacity == "dedicated":
        for u, v, _ in net.c2c_edges:
            j = b.add_var(f"S.{u}.{v}", 0, cap, INTEGER)
            s_ded[(u, v)] = j
            devices[j] = (u, v)

    # trust flags for nodes that can be charged
    chargeable = set()
    if recipe.charge_csc_endpoints and sh:
        for u, _, v in sh:
            chargeable.update((u, v))
    if recipe.charge_c2c_transit:
        chargeable.update(w for w in range(net.n_nodes) if net.degree(w) >= 2)
    trust = {w: b.add_var(f"T.{w}", 0, 1, BINARY) for w in sorted(chargeable)}

    # flows
    c2c_flow = {}
    csc_flow = {}
    out_terms = defaultdict(list)  # (pair, node) -> [(j, +1/-1)]
    c2c_load = defaultdict(list)   # canonical link -> [j]
    csc_load = defaultdict(list)   # canonical csc -> [j]
    transit = defaultdict(list)    # node -> [j] C2C flow leaving node as a relay
    secondary = {}
    for pair in pairs:
        if recipe.c2c_flows:
            for u, v, _ in net.c2c_edges:
                for a, c in ((u, v), (v, u)):
                    j = b.add_var(_fname(pair, a, c))
                    c2c_flow[j] = (pair, a, c)
                    out_terms[(pair, a)].append((j, 1.0))
                    out_terms[(pair, c)].append((j, -1.0))
                    c2c_load[(u, v)].append(j)
                    if a not in pair:
                        transit[a].append(j)
                    secondary[j] = 1.0
        if recipe.csc_flows:
            for k in csc_keys:
                for a, p, c in ((k[0], k[1], k[2]), (k[2], k[1], k[0])):
                    j = b.add_var(_fhname(pair, a, p, c))
                    csc_flow[j] = (pair, a, p, c)
                    out_terms[(pair, a)].append((j, 1.0))
                    out_terms[(pair, c)].append((j, -1.0))
                    csc_load[k].append(j)
                    secondary[j] = 1.0

    # epigraph: D * Bmin - A <= 0
    delivered = {}
    for pair in pairs:
        s, t = pair
        terms = out_terms.get((pair, s), [])
        delivered[pair] = (np.array([j for j, _ in terms], dtype=np.int64),
                           np.array([a for _, a in terms], dtype=float))
        b.add_row(f"sod.s{s}.t{t}", [(bmin, demands.entries[pair])] + [(j, -a) for j, a in terms],
                  LE, 0.0)

    # link bandwidth
    if recipe.c2c_flows:
        eq_terms = equivalent_device_terms(net) if recipe.c2c_capacity == "equivalent" else {}
        for u, v, _ in net.c2c_edges:
            R = r_b[(u, v)]
            row = [(j, 1.0) for j in c2c_load[(u, v)]]
            if recipe.c2c_capacity == "equivalent":
                half = recipe.c2c_share * R / 2.0
                for d in ((u, v), (v, u)):
                    row.extend((sh[k], -half) for k in eq_terms.get(d, []))
            else:
                row.append((s_ded[(u, v)], -R))
            b.add_row(f"bw.c2c.{u}.{v}", row, LE, 0.0)

    # CSC bandwidth: both orientation terms use the canonical device count
    if recipe.csc_flows:
        for k in csc_keys:
            coef = recipe.csc_share * r_csc[k]
            row = [(j, 1.0) for j in csc_load[k]]
            row.append((sh[k], -coef))
            row.append((sh[k], -coef))
            b.add_row("bw.csc.%d.%d.%d" % k, row, LE, 0.0)

    # flow conservation at every node other than the pair's endpoints
    for pair in pairs:
        for w in range(net.n_nodes):
            if w in pair:
                continue
            terms = out_terms.get((pair, w))
            if terms:
                b.add_row(f"cons.s{pair[0]}.t{pair[1]}.n{w}", terms, EQ, 0.0)

    # trust linking
    if recipe.charge_csc_endpoints:
        for k, j in sh.items():
            for w in (k[0], k[2]):
                b.add_row("link.%d.%d.%d" % k + f".n{w}", [(j, 1.0), (trust[w], -float(cap))], LE, 0.0)
    if recipe.charge_c2c_transit:
        for w, js in sorted(transit.items()):
            if w not in trust:
                continue
            big_m = 0.0
            for u, v, _ in net.c2c_edges:
                if w in (u, v):
                    big_m += cap * r_b[(u, v)]
            b.add_row(f"transit.n{w}", [(j, 1.0) for j in js] + [(trust[w], -big_m)], LE, 0.0)

    # budget
    row = [(j, 1.0) for j in devices]
    row += [(j, econ.q_trust_cost) for j in trust.values()]
    b.add_row("budget", row, LE, econ.total_budget)

    prog = b.build(secondary=secondary)
    return MilpProblem(prog, net, demands, variant, econ, recipe, pairs, bmin,
                       c2c_flow, csc_flow, devices, trust, delivered)


@dataclass(frozen=True)
class Metrics:
    sod: float
    csc_p: float
    strong_relays: int
    devices: int


def extract_metrics(sol, prob):
    """SoD, CSC share, strongly trusted relay count and device count."""
    x = getattr(sol, "x", sol)
    status = getattr(sol, "status", None)
    if x is None or (status is not None and getattr(status, "value", status) in ("infeasible", "unknown")):
        raise FormulationError("cannot extract metrics from an infeasible solution")
    x = np.asarray(x, float)
    sods = []
    for pair in prob.pairs:
        idx, coef = prob.delivered[pair]
        sods.append(float(coef @ x[idx]) / prob.demands.entries[pair] if len(idx) else 0.0)
    sod = max(min(sods), 0.0)
    f_tot = float(sum(max(x[j], 0.0) for j in prob.c2c_flow))
    fh_tot = float(sum(max(x[j], 0.0) for j in prob.csc_flow))
    total = f_tot + fh_tot
    if total <= FLOW_TOL:
        csc_p = 1.0 if prob.recipe.csc_only_group else 0.0
    else:
        csc_p = fh_tot / total
    relays = set()
    for j, (pair, a, _c) in prob.c2c_flow.items():
        if a not in pair and x[j] > FLOW_TOL:
            relays.add(a)
    devices = int(round(sum(x[j] for j in prob.devices)))
    return Metrics(sod, csc_p, len(relays), devices)
