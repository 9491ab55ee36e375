"""vinfpool command line.

Exit codes: 0 success, 2 bad flags/config/schema, 3 infeasible backup
sizing, 4 pool state violates an invariant, 5 infeasible embedding,
6 too many failure scenarios.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from vinfpool import cascade, schemas
from vinfpool.embed import EmbeddingProblem, PhysicalNetwork, build_program, solve_embedding, validate
from vinfpool.errors import (
    EmbeddingInfeasible,
    InconsistentProblem,
    InfeasibleError,
    MemberNotFound,
    ModelError,
    PoolInvariantError,
    ScenarioCapError,
    SchemaError,
)
from vinfpool.lp import emit_mps
from vinfpool.pooling import BackupPool, PoolMember
from vinfpool.reliability import (
    FailureDistribution,
    independent_distribution,
    min_backups,
    reliability_general,
)
from vinfpool.topology import DEFAULT_SCENARIO_CAP, VInfRequest, expand

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_POOL, EXIT_EMBED, EXIT_SCENARIOS = 0, 2, 3, 4, 5, 6


class CliError(Exception):
    def __init__(self, message: str, code: int) -> None:
        super().__init__(message)
        self.code = code


def fmt(v: float) -> str:
    return format(float(v), ".12g")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _read_json(path: str, schema: str) -> Any:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_USAGE) from None
    schemas.check(data, schema)
    return data


def _write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dumps(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=False) + "\n"


# -- failure models ------------------------------------------------------------


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=["independent", "load", "tree", "degree", "pmf"], default="independent")
    p.add_argument("--d-hat", type=float, help="normalised initial disturbance (load model)")
    p.add_argument("--p-hat", type=float, help="normalised load transfer per failure (load model)")
    p.add_argument("--tree", help="JSON file with cascade_rates, fail_rates, repair_rates, env_rates")
    p.add_argument("--degree-dist", type=_floats, help="comma-separated degree pmf p_0,p_1,...")
    p.add_argument("--phi", type=float, help="fixed failure threshold (degree model)")
    p.add_argument("--pmf", type=_floats, help="comma-separated failure pmf f(0..n)")


def _model_params(args: argparse.Namespace, n: int) -> Any:
    if args.model == "load":
        if args.d_hat is None or args.p_hat is None:
            raise CliError("--model load needs --d-hat and --p-hat", EXIT_USAGE)
        return cascade.LoadModelParams.normalized(n, args.d_hat, args.p_hat)
    if args.model == "tree":
        if not args.tree:
            raise CliError("--model tree needs --tree FILE", EXIT_USAGE)
        try:
            data = json.loads(Path(args.tree).read_text())
            params = cascade.TreeModelParams(
                np.array(data["cascade_rates"], dtype=float),
                np.array(data["fail_rates"], dtype=float),
                np.array(data["repair_rates"], dtype=float),
                np.array(data.get("env_rates", [0.0]), dtype=float),
            )
        except (OSError, KeyError, TypeError, ValueError) as exc:
            raise CliError(f"bad tree model file: {exc}", EXIT_USAGE) from None
        if params.n != n:
            raise CliError(f"tree model has {params.n} categories, --n is {n}", EXIT_USAGE)
        return params
    if args.model == "degree":
        if args.degree_dist is None or args.phi is None:
            raise CliError("--model degree needs --degree-dist and --phi", EXIT_USAGE)
        return cascade.DegreeModelParams.fixed_threshold(args.degree_dist, args.phi, n)
    return None


def _distribution(args: argparse.Namespace, n: int, p: float) -> FailureDistribution:
    if args.model == "independent":
        return independent_distribution(n, p)
    if args.model == "pmf":
        if args.pmf is None:
            raise CliError("--model pmf needs --pmf", EXIT_USAGE)
        return FailureDistribution(args.pmf)
    params = _model_params(args, n)
    if isinstance(params, cascade.LoadModelParams):
        return cascade.load_based_distribution(params)
    if isinstance(params, cascade.TreeModelParams):
        return cascade.tree_based_distribution(params)
    return cascade.degree_worst_case_distribution(params)


# -- subcommands ---------------------------------------------------------------


def cmd_kcalc(args: argparse.Namespace) -> int:
    if args.n < 0:
        raise CliError("--n must be non-negative", EXIT_USAGE)
    f = _distribution(args, args.n, args.p)
    k = min_backups(args.n, args.p, args.r, f)
    rel = 1.0 if args.n == 0 else reliability_general(k, args.p, f)
    print(f"k={k} reliability={fmt(rel)}")
    return EXIT_OK


def cmd_distribution(args: argparse.Namespace) -> int:
    if args.model in ("independent", "pmf") and args.trials:
        raise CliError("Monte-Carlo estimation needs a cascade model", EXIT_USAGE)
    if args.trials:
        params = _model_params(args, args.n)
        dist = cascade.monte_carlo_distribution(params, args.trials, args.seed)
    else:
        dist = _distribution(args, args.n, args.p)
    out: dict[str, Any] = {"model": args.model, "n": args.n, "probs": dist.tolist()}
    if args.trials:
        out.update(trials=args.trials, seed=args.seed)
    if args.self_check:
        schemas.check(out, "distribution")
    print(json.dumps(out))
    return EXIT_OK


def _member(args: argparse.Namespace, member_id: str) -> PoolMember:
    f = independent_distribution(args.n, args.p)
    if args.k is None:
        return PoolMember.sized(member_id, args.n, args.p, args.r, f)
    return PoolMember(id=member_id, n=args.n, k=args.k, p=args.p, r=args.r, f=f)


def _load_pool(path: str) -> BackupPool:
    data = _read_json(path, "pool")
    try:
        pool = BackupPool.from_dict(data)
    except (ValueError, KeyError) as exc:
        raise CliError(f"bad pool state: {exc}", EXIT_USAGE) from None
    pool.check_invariants()
    return pool


def _save_pool(path: str, pool: BackupPool, self_check: bool) -> None:
    data = pool.to_dict()
    if self_check:
        schemas.check(data, "pool")
    _write_atomic(path, _dumps(data))


def cmd_pool(args: argparse.Namespace) -> int:
    if args.action == "init":
        if Path(args.state).exists() and not args.force:
            raise CliError(f"{args.state} exists (use --force)", EXIT_USAGE)
        pool = BackupPool(_member(args, args.id))
        pool.check_invariants()
        _save_pool(args.state, pool, args.self_check)
        print(f"initialised k0={pool.anchor.k} r0'={fmt(pool.reliability())}")
        return EXIT_OK
    pool = _load_pool(args.state)
    if args.action == "show":
        print(_dumps({"free_slots": pool.free_slots, "lent": pool.lent,
                      "members": list(pool.members), "r0'": fmt(pool.reliability())}), end="")
        return EXIT_OK
    if args.action == "admit":
        decision = pool.admit(_member(args, args.id))
        if decision.admitted:
            pool.check_invariants()
            _save_pool(args.state, pool, args.self_check)
            print(f"admitted r0'={fmt(decision.reliability)}")
        else:
            print(f"rejected reason={decision.reason} r0'={fmt(decision.reliability)}")
        return EXIT_OK
    try:
        r0 = pool.remove(args.id)
    except MemberNotFound:
        print(f"rejected reason=unknown-member r0'={fmt(pool.reliability())}")
        return EXIT_USAGE
    pool.check_invariants()
    _save_pool(args.state, pool, args.self_check)
    print(f"removed r0'={fmt(r0)}")
    return EXIT_OK


def _vinf_from_json(data: dict[str, Any]) -> VInfRequest:
    nodes = {}
    for entry in data["nodes"]:
        if entry["id"] in nodes:
            raise SchemaError(f"duplicate virtual node {entry['id']!r}")
        nodes[entry["id"]] = float(entry["compute"])
    edges = {(e["a"], e["b"]): float(e["bandwidth"]) for e in data.get("edges", [])}
    if len(edges) != len(data.get("edges", [])):
        raise SchemaError("duplicate virtual edge")
    critical = frozenset(e["id"] for e in data["nodes"] if e.get("critical"))
    failure = FailureDistribution(data["failure"]) if "failure" in data else None
    return VInfRequest(nodes, edges, critical, data.get("reliability"), data.get("p", 0.01), failure,
                       data.get("name", ""))


def cmd_embed(args: argparse.Namespace) -> int:
    net = PhysicalNetwork.from_dict(_read_json(args.physical, "topology"))
    vdata = _read_json(args.vinf, "vinf")
    req = _vinf_from_json(vdata)
    if args.k is not None:
        k = args.k
    elif "backups" in vdata:
        k = vdata["backups"]
    elif req.critical:
        k = min_backups(len(req.critical), req.p, req.reliability, req.failure)
    else:
        k = 0
    exp = expand(req, k, names=vdata.get("backup_names"))
    problem = EmbeddingProblem(
        net, exp,
        excluded=vdata.get("excluded", {}),
        preferred=vdata.get("preferred", {}),
        pinned=vdata.get("pinned", {}),
        rack_separation=vdata.get("rack_separation", False),
        overlap=args.overlap,
        scenario_cap=args.scenario_cap,
        backend=args.backend,
    )
    if args.emit_mps:
        text, names = emit_mps(build_program(problem))
        _write_atomic(args.emit_mps, text)
        _write_atomic(args.emit_mps + ".names.json", _dumps(names))
    sol = solve_embedding(problem)
    report = validate(sol, problem)
    if not report.ok():
        raise CliError(f"solution failed validation: {report.violations}", EXIT_EMBED)
    data = sol.to_dict()
    if args.self_check:
        schemas.check(data, "solution")
    text = _dumps(data)
    if args.out:
        _write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    red = sum(sol.redundant_bandwidth.values())
    print(f"objective={fmt(sol.objective)} redundant_bandwidth={fmt(red)}", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    from vinfpool.sim import compare_policies, load_grid

    grid = load_grid(args.config)
    if args.full:
        grid = replace(grid, base=replace(grid.base, nodes=40, horizon=800), seeds=tuple(range(10)))
    if args.seed is not None:
        grid = replace(grid, seeds=tuple(args.seed + i for i in range(args.seeds or len(grid.seeds))))
    if args.check:
        grid = replace(grid, base=replace(grid.base, check_every=args.check))
    report = compare_policies(grid, jobs=args.jobs)
    report.write(args.out)
    print(f"{'cell':<24} {'policy':<8} {'acceptance':>22} {'admitted':>22}")
    for value in grid.values:
        for policy in grid.policies:
            acc = report.mean(policy, value, "acceptance")
            adm = report.mean(policy, value, "admitted")
            cell = f"{grid.parameter}={fmt(value) if isinstance(value, float) else value}"
            print(f"{cell:<24} {policy:<8} {fmt(acc[0]):>12} ± {fmt(acc[1]):<8} "
                  f"{fmt(adm[0]):>12} ± {fmt(adm[1]):<8}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vinfpool", description=__doc__.splitlines()[0])
    parser.add_argument("--self-check", action="store_true",
                        help="validate every machine-readable output against its schema")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kcalc", help="smallest backup count meeting a reliability target")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--r", type=float, required=True)
    _add_model_flags(p)
    p.set_defaults(func=cmd_kcalc)

    p = sub.add_parser("distribution", help="failure pmf of a cascade model")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float, default=0.01)
    p.add_argument("--trials", type=int, default=0, help="estimate by Monte-Carlo with this many trials")
    p.add_argument("--seed", type=int, default=0)
    _add_model_flags(p)
    p.set_defaults(func=cmd_distribution)

    p = sub.add_parser("pool", help="manage a backup pool state file")
    p.add_argument("action", choices=["init", "admit", "remove", "show"])
    p.add_argument("--state", required=True)
    p.add_argument("--id", default="vinf0")
    p.add_argument("--n", type=int, default=0)
    p.add_argument("--p", type=float, default=0.01)
    p.add_argument("--r", type=float, default=0.99999)
    p.add_argument("--k", type=int, help="backup count (default: smallest meeting --r)")
    p.add_argument("--force", action="store_true", help="overwrite an existing state on init")
    p.set_defaults(func=cmd_pool)

    p = sub.add_parser("embed", help="embed one VInf with its backups")
    p.add_argument("--physical", required=True)
    p.add_argument("--vinf", required=True)
    p.add_argument("--out", help="solution JSON path (default: stdout)")
    p.add_argument("--emit-mps", help="also write the program in MPS format")
    p.add_argument("--k", type=int, help="override the backup count")
    p.add_argument("--overlap", choices=["assignment", "scenario-sum", "none"], default="assignment")
    p.add_argument("--backend", choices=["highs", "simplex"], default="highs")
    p.add_argument("--scenario-cap", type=int, default=DEFAULT_SCENARIO_CAP)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("simulate", help="run policy comparisons and write CSVs")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="master seed; overrides the config's seeds")
    p.add_argument("--seeds", type=int, help="number of consecutive seeds from --seed")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--full", action="store_true", help="40 nodes, 800 slots, 10 seeds")
    p.add_argument("--check", type=int, default=0, help="check capacity and pool invariants every N slots")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except PoolInvariantError as exc:
        print(f"pool invariant violated: {exc}", file=sys.stderr)
        return EXIT_POOL
    except EmbeddingInfeasible as exc:
        print(f"embedding infeasible: {exc}", file=sys.stderr)
        return EXIT_EMBED
    except ScenarioCapError as exc:
        print(f"too many failure scenarios: {exc}", file=sys.stderr)
        return EXIT_SCENARIOS
    except (SchemaError, ModelError, InconsistentProblem, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
