import copy
import math

import networkx as nx
import numpy as np
import pytest
from oracles import (
    exhaustive_optimum,
    fixed_map_objective,
    random_instance,
    shared_link_min_reservation,
    shared_link_problem,
)

from vinfpool.embed import (
    EmbeddingProblem,
    PhysicalNetwork,
    Reservation,
    apply,
    apply_reservation,
    build_program,
    release,
    solution_from_dict,
    solve_embedding,
    solve_fixed_map,
    validate,
)
from vinfpool.embed import _build
from vinfpool.errors import CapacityError, EmbeddingInfeasible, InconsistentProblem, ReleaseError
from vinfpool.lp import solve
from vinfpool.topology import VInfRequest, expand


def three_critical_path() -> VInfRequest:
    return VInfRequest(
        nodes={"u": 2, "c1": 3, "c2": 2, "c3": 3},
        edges={("u", "c1"): 1, ("c1", "c2"): 2, ("c2", "c3"): 1},
        critical=frozenset({"c1", "c2", "c3"}), reliability=0.999,
    )


def seven_node_net() -> PhysicalNetwork:
    g = nx.circulant_graph(7, [1, 2])
    return PhysicalNetwork({f"m{i}": 20.0 for i in range(7)},
                           {(f"m{a}", f"m{b}"): 30.0 for a, b in g.edges()})


# -- shared link ---------------------------------------------------------------


def test_shared_link_reserves_one_unit_on_shared_link():
    problem = shared_link_problem()
    sol = solve_embedding(problem)
    assert sol.mapping == {"c": "m1", "v": "m4", "a1": "m2", "a2": "m3"}
    assert sol.redundant_bandwidth[("m2", "m4")] == pytest.approx(1.0, abs=1e-9)
    assert shared_link_min_reservation() == 1.0
    assert validate(sol, problem).worst() == 0.0


@pytest.mark.parametrize("mode", ["scenario-sum", "none"])
def test_shared_link_literal_forms_reserve_two(mode):
    problem = shared_link_problem(overlap=mode)
    sol = solve_embedding(problem)
    assert sol.redundant_bandwidth[("m2", "m4")] == pytest.approx(2.0, abs=1e-9)
    assert validate(sol, problem).ok()


def test_shared_link_built_in_solver_agrees():
    a = solve_embedding(shared_link_problem())
    b = solve_embedding(shared_link_problem(backend="simplex"))
    assert a.mapping == b.mapping
    assert a.objective == pytest.approx(b.objective, abs=1e-9)


def test_shared_link_round_trips_through_json():
    problem = shared_link_problem()
    sol = solve_embedding(problem)
    again = solution_from_dict(sol.to_dict())
    assert again.mapping == sol.mapping
    assert validate(again, problem).worst() == 0.0


# -- program shape -------------------------------------------------------------


def test_single_node_program():
    net = PhysicalNetwork({"a": 4.0, "b": 9.0, "c": 1.0}, {})
    problem = EmbeddingProblem(net, expand(VInfRequest({"u": 3.0}, {}), 0))
    lp = build_program(problem)
    rho = [v for v in lp.variables if v.name.startswith("rho")]
    assert len(rho) == 3 and all(v.integer for v in rho)
    assert sum(c.name.startswith("onemap") for c in lp.constraints) == 1
    assert sum(c.name.startswith("cpu") for c in lp.constraints) == 2  # c cannot host u
    assert solve_embedding(problem).mapping == {"u": "b"}


def test_scenario_row_count():
    net = seven_node_net()
    problem = EmbeddingProblem(net, expand(three_critical_path(), 2), overlap="scenario-sum")
    lp, lay = _build(problem)
    arcs = 2 * len(net.links)
    neighbours = len(problem.neighbor_criticals())
    assert lay.scenarios == 6
    assert neighbours == 4
    assert lay.overlap_rows == 6 * arcs * neighbours
    assert sum(c.name.startswith("ov[") for c in lp.constraints) == 6 * arcs * neighbours


def test_no_backups_means_plain_flow_program():
    net = seven_node_net()
    vinf = VInfRequest({"a": 1, "b": 2, "c": 3}, {("a", "b"): 1.0, ("b", "c"): 2.0})
    lp = build_program(EmbeddingProblem(net, expand(vinf, 0)))
    names = [v.name for v in lp.variables]
    assert not any("L1" in n or "L2" in n or n.startswith("lo[") for n in names)


def test_omitting_l2_drops_its_variables():
    net = seven_node_net()
    exp = expand(three_critical_path(), 2)
    with_l2 = [v.name for v in build_program(EmbeddingProblem(net, exp)).variables]
    without = [v.name for v in build_program(EmbeddingProblem(net, exp, l2_demand=0.0)).variables]
    assert any("[L2," in n for n in with_l2)
    assert not any("[L2," in n for n in without)


def test_exclusions_never_lower_relaxed_objective():
    net = seven_node_net()
    exp = expand(three_critical_path(), 1)
    base = solve(build_program(EmbeddingProblem(net, exp)), backend="highs").objective
    excluded: dict[str, set[str]] = {}
    prev = base
    for u, mu in [("c1", "m0"), ("c1", "m1"), ("u", "m2"), ("b0", "m3"), ("c3", "m4")]:
        excluded.setdefault(u, set()).add(mu)
        cur = solve(build_program(EmbeddingProblem(net, exp, excluded=excluded)), backend="highs").objective
        assert cur >= prev - 1e-9
        prev = cur


def test_inconsistent_rules_rejected():
    net = seven_node_net()
    exp = expand(three_critical_path(), 1)
    with pytest.raises(InconsistentProblem):
        EmbeddingProblem(net, exp, pinned={"u": "m0", "c1": "m0"})
    with pytest.raises(InconsistentProblem):
        EmbeddingProblem(net, exp, pinned={"u": "m0"}, excluded={"u": ["m0"]})
    with pytest.raises(InconsistentProblem):
        EmbeddingProblem(net, exp, preferred={"u": ["m1"]}, excluded={"u": ["m1"]})
    with pytest.raises(InconsistentProblem):
        EmbeddingProblem(net, exp, pinned={"ghost": "m0"})


# -- solving -------------------------------------------------------------------


def test_over_demand_is_infeasible():
    net = PhysicalNetwork({"a": 10.0, "b": 10.0}, {("a", "b"): 5.0})
    vinf = VInfRequest({"big": 50.0, "w": 1.0}, {("big", "w"): 1.0})
    with pytest.raises(EmbeddingInfeasible):
        solve_embedding(EmbeddingProblem(net, expand(vinf, 0)))


def test_placement_rules_respected():
    net = seven_node_net()
    exp = expand(three_critical_path(), 2)
    problem = EmbeddingProblem(net, exp, excluded={"c1": ["m0", "m1", "m2"]}, preferred={"u": ["m5", "m6"]},
                               pinned={"b0": "m3"})
    sol = solve_embedding(problem)
    assert sol.mapping["c1"] not in {"m0", "m1", "m2"}
    assert sol.mapping["u"] in {"m5", "m6"}
    assert sol.mapping["b0"] == "m3"
    assert len(set(sol.mapping.values())) == len(sol.mapping)
    assert validate(sol, problem).ok()


def test_rack_separation():
    g = nx.complete_graph(6)
    net = PhysicalNetwork({f"m{i}": 10.0 for i in range(6)}, {(f"m{a}", f"m{b}"): 10.0 for a, b in g.edges()},
                          racks={f"m{i}": f"r{i // 2}" for i in range(6)})
    vinf = VInfRequest({"a": 1, "b": 1, "c": 1}, {("a", "b"): 1.0, ("b", "c"): 1.0})
    problem = EmbeddingProblem(net, expand(vinf, 0), rack_separation=True)
    sol = solve_embedding(problem)
    assert len({net.racks[sol.mapping[u]] for u in "abc"}) == 3
    assert validate(sol, problem).ok()


def test_overlap_dominance():
    net = seven_node_net()
    exp = expand(three_critical_path(), 2)
    for mode in ("assignment", "scenario-sum"):
        problem = EmbeddingProblem(net, exp, overlap=mode)
        sol = solve_embedding(problem)
        for v, crit in problem.neighbor_criticals().items():
            for arc, have in sol.overlap.get(v, {}).items():
                pa = (("p", arc[0]), ("p", arc[1]))
                flows = {(a, c): sol.flows.get(("L1", a, c, v), {}).get(pa, 0.0)
                         for a in exp.backups for c in crit}
                assert have <= math.fsum(flows.values()) + 1e-7
                for a in exp.backups:
                    for c in crit:
                        assert have >= flows[(a, c)] - 1e-7


def test_assignment_reserves_no_more_than_none():
    net = seven_node_net()
    exp = expand(three_critical_path(), 2)
    totals = {}
    for mode in ("assignment", "none"):
        sol = solve_fixed_map(EmbeddingProblem(net, exp, overlap=mode),
                              {"u": "m0", "c1": "m1", "c2": "m2", "c3": "m3", "b0": "m4", "b1": "m5"})
        totals[mode] = sum(sol.redundant_bandwidth.values())
    assert totals["assignment"] <= totals["none"] + 1e-9


@pytest.mark.parametrize("seed", range(20))
def test_matches_exhaustive_oracle(seed):
    problem = random_instance(seed)
    best, arg = exhaustive_optimum(problem)
    assert best is not None
    assert solve_fixed_map(problem, arg).objective == pytest.approx(best, abs=1e-7)
    try:
        sol = solve_embedding(problem)
    except EmbeddingInfeasible:
        return
    assert sol.objective >= best - 1e-7
    assert validate(sol, problem).ok()
    assert sol.objective == pytest.approx(fixed_map_objective(problem, sol.mapping), abs=1e-7)
    assert sol.relaxed_objective <= best + 1e-7


def test_deterministic_solution():
    problem = shared_link_problem()
    assert solve_embedding(problem).to_dict() == solve_embedding(shared_link_problem()).to_dict()


# -- validation ----------------------------------------------------------------


def test_fault_injection_localised():
    problem = shared_link_problem()
    sol = solve_embedding(problem)
    broken = copy.deepcopy(sol)
    key = ("E", "c", "v")
    arc = (("p", "m1"), ("p", "m4"))
    broken.flows[key][arc] += 1.0
    rep = validate(broken, problem)
    assert rep.violations["conservation"] == pytest.approx(1.0)
    assert "('E', 'c', 'v')" in rep.locations["conservation"]


def test_validation_catches_overlap_and_capacity():
    problem = shared_link_problem()
    sol = solve_embedding(problem)
    broken = copy.deepcopy(sol)
    broken.overlap["v"][("m2", "m4")] = 0.0
    assert validate(broken, problem).violations["overlap"] == pytest.approx(1.0)
    tight = shared_link_problem()
    tight.physical.link_capacity[("m2", "m4")] = 0.5
    assert validate(sol, tight).violations["capacity"] == pytest.approx(0.5)


def test_validation_catches_double_mapping():
    problem = shared_link_problem()
    sol = copy.deepcopy(solve_embedding(problem))
    sol.mapping["a2"] = "m2"
    rep = validate(sol, problem)
    assert rep.violations["no_overlap"] == 1.0


# -- leases --------------------------------------------------------------------


def residuals(net: PhysicalNetwork) -> tuple:
    return (tuple(net.residual_compute(n) for n in net.nodes),
            tuple(net.residual_bandwidth(*k) for k in net.links))


def test_apply_release_bitwise():
    net = seven_node_net()
    before = residuals(net)
    problem = EmbeddingProblem(net.snapshot(), expand(three_critical_path(), 2))
    sol = solve_embedding(problem)
    apply(net, sol, "x")
    assert residuals(net) != before
    release(net, "x")
    assert residuals(net) == before


def test_apply_order_commutes():
    rng = np.random.default_rng(0)
    res = [Reservation({f"m{i}": float(rng.uniform(0, 3))}, {}, {("m0", "m1"): float(rng.uniform(0, 2))}, {})
           for i in range(5)]
    nets = []
    for order in (range(5), reversed(range(5))):
        net = seven_node_net()
        for i in order:
            apply_reservation(net, f"r{i}", res[i])
        nets.append(residuals(net))
    assert nets[0] == nets[1]


def test_over_subscription_and_double_release():
    net = seven_node_net()
    apply_reservation(net, "a", Reservation(bandwidth={("m0", "m1"): 20.0}))
    with pytest.raises(CapacityError):
        apply_reservation(net, "b", Reservation(redundant_bandwidth={("m0", "m1"): 11.0}))
    with pytest.raises(CapacityError):
        apply_reservation(net, "a", Reservation())
    release(net, "a")
    with pytest.raises(ReleaseError):
        release(net, "a")
