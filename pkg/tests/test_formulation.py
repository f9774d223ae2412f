import math

import numpy as np
import pytest

from mpcqkd import formulation as fm
from mpcqkd import keyrate as kr
from mpcqkd.errors import FormulationError, InvalidInput
from mpcqkd.netmodel import DemandSet, InstanceSpec, Network, generate_demands, generate_network
from mpcqkd.solver import SolverConfig, solve_lp, solve_milp, verify_solution

PATH = Network(3, ((0, 1, 20.0), (1, 2, 30.0)))
# 0-1, 1-2, 1-3, 2-3: five CSC edges
KITE = Network(4, ((0, 1, 10.0), (1, 2, 20.0), (1, 3, 30.0), (2, 3, 40.0)))


def build(net, demands, variant, **econ):
    return fm.build_program(net, DemandSet(demands), kr.link_rates(net, kr.RateParams()),
                            fm.EconParams(**econ), fm.CellVariant.parse(variant))


def row(prob, name):
    prog = prob.program
    i = prog.row_index(name)
    a = prog.A.getrow(i)
    return {prog.names[j]: v for j, v in zip(a.indices, a.data)}, prog.senses[i], prog.rhs[i]


def test_path_mpc_variable_set():
    prob = build(PATH, {(0, 2): 100.0}, "MPC")
    expected = {
        "fh.s0.t2.u0.p1.v2", "fh.s0.t2.u2.p1.v0",
        "f.s0.t2.u0.v1", "f.s0.t2.u1.v0", "f.s0.t2.u1.v2", "f.s0.t2.u2.v1",
        "Sh.0.1.2", "T.0", "T.2", "Bmin",
    }
    assert set(prob.names) == expected
    cons = [r for r in prob.program.row_names if r.startswith("cons.")]
    assert cons == ["cons.s0.t2.n1"]
    assert [r for r in prob.program.row_names if r == "budget"] == ["budget"]
    # budget is sum Sh + q * sum T
    coeffs, sense, rhs = row(prob, "budget")
    assert coeffs == {"Sh.0.1.2": 1.0, "T.0": 100.0, "T.2": 100.0}
    assert (sense, rhs) == ("<=", 10_000.0)


def test_path_mpc_rows_match_model():
    econ = fm.EconParams()
    prob = build(PATH, {(0, 2): 100.0}, "MPC")
    rates = kr.link_rates(PATH, kr.RateParams())
    tau, beta = econ.tau, econ.beta
    coeffs, _, _ = row(prob, "bw.csc.0.1.2")
    r_cell = kr.csc_bandwidth(rates.bb84(0, 1), rates.bb84(1, 2), beta)
    assert coeffs["Sh.0.1.2"] == -2 * tau * r_cell
    coeffs, _, rhs = row(prob, "bw.c2c.0.1")
    assert coeffs["Sh.0.1.2"] == -2 * (1 - tau) * rates.bb84(0, 1) / 2
    assert rhs == 0.0
    coeffs, sense, rhs = row(prob, "sod.s0.t2")
    assert coeffs["Bmin"] == 100.0 and sense == "<=" and rhs == 0.0
    assert coeffs["fh.s0.t2.u0.p1.v2"] == -1.0 and coeffs["fh.s0.t2.u2.p1.v0"] == 1.0
    for w in (0, 2):
        coeffs, _, _ = row(prob, f"link.0.1.2.n{w}")
        assert coeffs == {"Sh.0.1.2": 1.0, f"T.{w}": -float(econ.device_count_cap)}


def test_equivalent_devices_on_hand_built_fixture():
    s_hat = {(0, 1, 2): 1, (0, 1, 3): 2, (2, 1, 3): 4, (1, 2, 3): 8, (1, 3, 2): 16}
    assert {e.key for e in KITE.csc_edges} == set(s_hat)
    got = fm.equivalent_devices(KITE, s_hat)
    hand = {(0, 1): 1 + 2, (1, 2): 8 + 1 + 4, (1, 3): 16 + 2 + 4, (2, 3): 16 + 8}
    for (u, v), val in hand.items():
        assert got[(u, v)] == val
        assert got[(v, u)] == val


def test_equivalent_devices_in_c2c_rows():
    prob = build(KITE, {(0, 3): 150.0}, "MPC", tau=0.5)
    rates = kr.link_rates(KITE, kr.RateParams())
    coeffs, _, _ = row(prob, "bw.c2c.1.2")
    half = 0.5 * rates.bb84(1, 2) / 2
    # every CSC edge in S_(1,2) also appears in S_(2,1)
    assert {k: v for k, v in coeffs.items() if k.startswith("Sh.")} == {
        "Sh.1.2.3": -2 * half, "Sh.0.1.2": -2 * half, "Sh.2.1.3": -2 * half}


def test_tau_one_forces_zero_c2c_flow():
    prob = build(KITE, {(0, 3): 150.0, (2, 0): 120.0}, "MPC:1")
    for name in prob.program.row_names:
        if name.startswith("bw.c2c."):
            coeffs, sense, rhs = row(prob, name)
            assert sense == "<=" and rhs == 0.0
            assert all(k.startswith("f.") and v == 1.0 for k, v in coeffs.items())
    sol = solve_milp(prob, SolverConfig())
    assert sum(sol.x[j] for j in prob.c2c_flow) == 0.0
    assert fm.extract_metrics(sol, prob).csc_p == 1.0


def test_recipes():
    t = fm.variant_table(fm.CellVariant.parse("MDI"))
    assert t.c2c_capacity is None and t.csc_rate == "mdi" and t.charge_csc_endpoints
    t = fm.variant_table(fm.CellVariant.parse("BB84"))
    assert t.c2c_capacity == "dedicated" and t.csc_rate is None and t.charge_c2c_transit
    t = fm.variant_table(fm.CellVariant.parse("MPC:0.5"))
    assert (t.c2c_capacity, t.csc_rate, t.csc_share, t.c2c_share) == ("equivalent", "mpc", 0.5, 0.5)
    t = fm.variant_table(fm.CellVariant.parse("NSA"))
    assert (t.c2c_capacity, t.csc_rate) == ("equivalent", "mdi")
    t = fm.variant_table(fm.CellVariant.parse("BB84-TF"))
    assert (t.c2c_capacity, t.csc_rate) == ("dedicated", "tf")


def test_mdi_program_has_only_csc_flows():
    prob = build(KITE, {(0, 3): 150.0}, "MDI")
    assert not prob.c2c_flow and prob.csc_flow
    assert not any(n.startswith("S.") for n in prob.names)


def test_bb84_program_has_transit_rows():
    prob = build(KITE, {(0, 3): 150.0}, "BB84")
    assert not prob.csc_flow
    assert {n for n in prob.names if n.startswith("S.")} == {"S.0.1", "S.1.2", "S.1.3", "S.2.3"}
    transit = [r for r in prob.program.row_names if r.startswith("transit.")]
    # node 3 is the destination of the only pair, so it never relays
    assert transit == ["transit.n1", "transit.n2"]


def test_missing_rate_names_edge():
    rates = kr.link_rates(PATH, kr.RateParams())
    del rates.r_b[(1, 2)]
    with pytest.raises(FormulationError, match=r"\(1,2\)"):
        fm.build_program(PATH, DemandSet({(0, 2): 1.0}), rates, fm.EconParams(),
                         fm.CellVariant.parse("MPC"))


def test_empty_and_zero_demands_rejected():
    rates = kr.link_rates(PATH, kr.RateParams())
    with pytest.raises(FormulationError):
        fm.build_program(PATH, DemandSet({}), rates, fm.EconParams(), fm.CellVariant.parse("MPC"))
    with pytest.raises(InvalidInput):
        DemandSet({(0, 2): 0.0})


def test_variant_parse():
    assert fm.CellVariant.parse("mpc:0.5") == fm.CellVariant(fm.VariantKind.MPC, 0.5)
    assert fm.CellVariant.parse("bb84-mdi").kind is fm.VariantKind.HYBRID_BB84_MDI
    with pytest.raises(InvalidInput):
        fm.CellVariant.parse("quantum")


def test_metrics_demand_exactly_met():
    prob = build(PATH, {(0, 2): 100.0}, "MPC")
    x = np.zeros(prob.program.n_vars)
    x[prob.var("fh.s0.t2.u0.p1.v2")] = 100.0
    x[prob.var("Bmin")] = 1.0
    m = fm.extract_metrics(x, prob)
    assert m.sod == 1.0 and m.csc_p == 1.0 and m.strong_relays == 0


def test_metrics_zero_flow_group_two():
    prob = build(KITE, {(0, 3): 150.0}, "BB84", total_budget=0.5)
    sol = solve_milp(prob, SolverConfig())
    m = fm.extract_metrics(sol, prob)
    assert (m.sod, m.csc_p, m.devices) == (0.0, 0.0, 0)


def test_budget_below_one_device_gives_zero():
    prob = build(PATH, {(0, 2): 100.0}, "MPC", total_budget=0.9, q_trust_cost=0.0)
    sol = solve_milp(prob, SolverConfig(mode="exact"))
    assert sol.objective == 0.0


def test_path_one_device_satisfies_demand():
    # rates large enough that one device covers the demand
    prob = build(PATH, {(0, 2): 1.0}, "MPC", device_count_cap=3)
    sol = solve_milp(prob, SolverConfig(mode="exact", gap_tol=1e-9))
    assert sol.status.value == "optimal"
    assert sol.objective >= 1.0
    assert sol.x[prob.var("Sh.0.1.2")] >= 1


def test_strong_relays_counted_from_c2c_transit():
    prob = build(PATH, {(0, 2): 100.0}, "BB84")
    sol = solve_milp(prob, SolverConfig())
    assert fm.extract_metrics(sol, prob).strong_relays == 1


def small_instance(seed, n=6):
    spec = InstanceSpec(n_nodes=n, seed=seed)
    net = generate_network(spec)
    return net, generate_demands(net, spec)


@pytest.mark.parametrize("variant", ["MPC:0.5", "BB84", "MDI"])
def test_doubling_demand_halves_bmin_for_fixed_devices(variant):
    net, dem = small_instance(5)
    rates = kr.link_rates(net, kr.RateParams())
    econ = fm.EconParams()
    v = fm.CellVariant.parse(variant)
    prob = fm.build_program(net, dem, rates, econ, v)
    sol = solve_milp(prob, SolverConfig())
    ints = prob.program.integer_mask

    def fixed_lp(p):
        lb, ub = p.lb.copy(), p.ub.copy()
        lb[ints] = ub[ints] = sol.x[ints]
        return solve_lp(p.objective, p.A, p.senses, p.rhs, lb, ub).objective

    base = fixed_lp(prob.program)
    doubled = fixed_lp(fm.build_program(net, dem.scaled(2.0), rates, econ, v).program)
    assert base > 0
    assert doubled == pytest.approx(base / 2, rel=1e-7)


def test_free_trust_never_hurts():
    net, dem = small_instance(2, n=4)
    rates = kr.link_rates(net, kr.RateParams())
    cfg = SolverConfig(mode="exact", gap_tol=1e-9)
    vals = []
    for q in (0.0, 2.0):
        econ = fm.EconParams(q_trust_cost=q, total_budget=8, device_count_cap=2)
        prob = fm.build_program(net, dem, rates, econ, fm.CellVariant.parse("MPC:0.5"))
        vals.append(solve_milp(prob, cfg).objective)
    assert vals[0] >= vals[1] - 1e-9


def test_epigraph_holds_for_solver_output():
    net, dem = small_instance(9)
    prob = fm.build_program(net, dem, kr.link_rates(net, kr.RateParams()), fm.EconParams(),
                            fm.CellVariant.parse("MPC:0.5"))
    sol = solve_milp(prob, SolverConfig())
    assert verify_solution(prob.program, sol.x) == []
    bmin = sol.x[prob.bmin]
    for pair, (idx, coef) in prob.delivered.items():
        assert coef @ sol.x[idx] >= bmin * dem.entries[pair] - 1e-6 * (1 + dem.entries[pair])
    assert math.isclose(fm.extract_metrics(sol, prob).sod, bmin, rel_tol=1e-6, abs_tol=1e-9)
