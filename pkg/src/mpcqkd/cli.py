"""``mpcqkd`` command-line entry point.

Subcommands: gen, rates, optimize, simulate-relay, experiment, report.
Exit codes: 0 ok, 2 usage, 3 bad input, 4 solver failure, 5 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from . import bench, netmodel, relaysim
from .config import OUT_DIR_ENV, resolve
from .errors import InvalidInput, MpcQkdError, ParseError, PoolDepleted, SolverError
from .formulation import CellVariant, build_program, extract_metrics
from .keyrate import link_rates, rate_table
from .solver import lpformat
from .solver.backends import get_backend
from .solver.verify import verify_solution

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4, 5

log = logging.getLogger("mpcqkd")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _parse_scalar(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _overrides(args):
    """Collect ``--set section.field=value`` and shortcut flags into a nested dict."""
    out = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot:
            raise UsageError(f"--set expects section.field=value, got {item!r}")
        out.setdefault(section, {})[name] = _parse_scalar(value)
    for flag, (section, name) in {"mode": ("solver", "mode"), "backend": ("solver", "backend"),
                                  "tau": ("econ", "tau"), "beta": ("econ", "beta"),
                                  "rate_model": ("rates", "model_kind")}.items():
        value = getattr(args, flag, None)
        if value is not None:
            out.setdefault(section, {})[name] = value
    if getattr(args, "log_level", None):
        out["log_level"] = args.log_level
    return out


def _read_text(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except FileNotFoundError:
        raise InvalidInput(f"input file not found: {path}") from None
    except OSError as exc:
        raise InvalidInput(f"cannot read {path}: {exc.strerror}") from None


def _write_text(path, text):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    log.info("wrote %s", path)


def _dump_json(obj):
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=True) + "\n"


def _span(text, name, cast=float):
    parts = text.split(":")
    try:
        vals = [cast(p) for p in parts]
    except ValueError:
        raise UsageError(f"{name} must look like a:b or a:b:step, got {text!r}") from None
    if len(vals) not in (2, 3):
        raise UsageError(f"{name} must look like a:b or a:b:step, got {text!r}")
    return vals


# -- subcommands ------------------------------------------------------------

def cmd_gen(args, cfg):
    spec = netmodel.InstanceSpec(n_nodes=args.nodes, seed=args.seed, edge_factor=args.edge_factor)
    net = netmodel.generate_network(spec)
    demands = netmodel.generate_demands(net, spec)
    doc = netmodel.to_document(net, demands, args.seed)
    doc["config_hash"] = cfg.config_hash()
    path = args.out or os.path.join(cfg.out_dir, f"instance_n{args.nodes}_s{args.seed}.json")
    _write_text(path, _dump_json(doc))
    print(path)
    return EXIT_OK


def cmd_rates(args, cfg):
    lo, hi, *rest = _span(args.lengths, "--lengths")
    step = rest[0] if rest else 10.0
    if step <= 0 or hi < lo or lo < 0:
        raise UsageError("--lengths needs 0 <= a <= b and a positive step")
    lengths = np.arange(lo, hi + step / 2, step)
    lines = [f"# config_hash: {cfg.config_hash()}", "length_km,bb84_kbps,mdi_kbps,tf_kbps,mpc_kbps"]
    for row in rate_table(lengths, cfg.rates, beta=cfg.econ.beta):
        lines.append(",".join(repr(float(v)) for v in row))
    text = "\n".join(lines) + "\n"
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_optimize(args, cfg):
    net, demands, seed = netmodel.loads(_read_text(args.input))
    if not len(demands):
        raise InvalidInput(f"{args.input} has no demands to optimize")
    variant = CellVariant.parse(args.variant)
    prob = build_program(net, demands, link_rates(net, cfg.rates), cfg.econ, variant)
    chash = cfg.config_hash()
    if args.lp_out:
        _write_text(args.lp_out, lpformat.dumps(prob.program, comment=f"config_hash: {chash}"))
    sol = get_backend(cfg.solver.backend).solve(prob.program, cfg.solver)
    if sol.x is None:
        raise SolverError(f"no feasible solution ({sol.status.value})")
    metrics = extract_metrics(sol, prob)
    violations = verify_solution(prob.program, sol.x, cfg.solver.feas_tol)
    names = prob.program.names
    result = {
        "config": cfg.model_dict(),
        "config_hash": chash,
        "instance_hash": netmodel.instance_hash(net, demands),
        "variant": bench.variant_token(variant),
        "status": sol.status.value,
        "objective": sol.objective,
        "bound": sol.bound if math.isfinite(sol.bound) else None,
        "metrics": {"sod": metrics.sod, "csc_p": metrics.csc_p,
                    "strong_relays": metrics.strong_relays, "devices": metrics.devices},
        "violations": [[v.kind, v.name, v.amount] for v in violations],
        "solution": {names[j]: float(sol.x[j]) for j in np.flatnonzero(np.abs(sol.x) > 1e-12)},
    }
    path = args.out or os.path.join(cfg.out_dir, "optimize.json")
    _write_text(path, _dump_json(result))
    print(f"{result['variant']}: status={result['status']} sod={metrics.sod:.6g} "
          f"csc_p={metrics.csc_p:.4f} strong_relays={metrics.strong_relays} "
          f"devices={metrics.devices} violations={len(violations)}")
    if violations:
        raise SolverError(f"solution violates {len(violations)} constraints")
    return EXIT_OK


def cmd_simulate_relay(args, cfg):
    lo, hi = [int(v) for v in _span(args.size_range, "--size-range", int)[:2]]
    if args.messages < 0 or lo < 0 or hi < lo:
        raise UsageError("--messages must be >= 0 and --size-range a:b with 0 <= a <= b")
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 99]))
    sizes = rng.integers(lo, hi + 1, size=args.messages)
    messages = [rng.bytes(int(n)) for n in sizes]
    pool_sizes = relaysim.required_pool_sizes(sizes, args.rekey_every)
    pools = relaysim.establish_pools(args.seed, pool_sizes, rekey_every=args.rekey_every)
    flags = {"roundtrip_ok": 0, "relay_inner_ct_only": 0, "relay_saw_plaintext": 0,
             "relay_saw_mdi_key": 0, "channels_otp_masked": 0}
    entries = []
    for i, msg in enumerate(messages):
        trace = relaysim.mpc_send(msg, pools)
        report = relaysim.audit_exposure(trace, pools)
        flags["roundtrip_ok"] += trace.recovered == msg
        flags["relay_inner_ct_only"] += report.relay_c.inner_ct_only
        flags["relay_saw_plaintext"] += report.relay_c.saw_plaintext
        flags["relay_saw_mdi_key"] += report.relay_c.saw_mdi_key
        flags["channels_otp_masked"] += report.channel_ac.otp_masked and report.channel_cb.otp_masked
        entry = {"index": i, "length": len(msg), "key_ids": {k: list(v) for k, v in trace.key_ids.items()},
                 "exposure": report.to_dict(include_bytes=args.traces)}
        if args.traces:
            entry["trace"] = trace.to_dict()
        entries.append(entry)
    summary = {"messages": len(messages), **flags,
               "otp_ranges_disjoint": relaysim.ranges_disjoint(pools),
               "consumed": {p.label.value: p.consumed_offset for p in pools.pools()}}
    doc = {"config_hash": cfg.config_hash({"relay_seed": args.seed}), "seed": args.seed,
           "size_range": [lo, hi], "rekey_every": args.rekey_every, "summary": summary,
           "messages": entries}
    path = args.audit or os.path.join(cfg.out_dir, "relay_audit.json")
    _write_text(path, _dump_json(doc))
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_experiment(args, cfg):
    kw = {}
    if args.scales:
        try:
            kw["node_scales"] = tuple(int(s) for s in args.scales.split(","))
        except ValueError:
            raise UsageError(f"--scales must be comma-separated integers, got {args.scales!r}") from None
    if args.instances:
        kw["instances_per_scale"] = args.instances
    ecfg = bench.ExperimentConfig.profile(args.profile, econ=cfg.econ, rates=cfg.rates,
                                          solver=cfg.solver, seed=args.seed, timing=args.timing,
                                          workers=args.workers, **kw)
    result = bench.run_group(ecfg, args.group)
    chash = cfg.config_hash({"group": args.group, "seed": args.seed,
                             "scales": list(ecfg.node_scales),
                             "instances": ecfg.instances_per_scale})
    out = args.out or os.path.join(cfg.out_dir, f"group{args.group}")
    raw, agg = bench.emit_report(result, out, chash)
    print(raw)
    print(agg)
    failed = [r for r in result.rows if r.status.startswith("error")]
    if failed:
        log.warning("%d of %d rows failed to solve", len(failed), len(result.rows))
    return EXIT_OK


def cmd_report(args, cfg):
    hashes = {}
    rows = []
    for d in args.inputs:
        path = os.path.join(d, bench.RAW_FILE) if os.path.isdir(d) else d
        if not os.path.exists(path):
            raise InvalidInput(f"input file not found: {path}")
        chash, result = bench.read_raw(path)
        hashes[path] = chash
        rows.extend(result.rows)
    if len(set(hashes.values())) > 1 and not args.force:
        listing = ", ".join(f"{p}={h}" for p, h in hashes.items())
        raise InvalidInput(f"config hashes differ ({listing}); pass --force to combine anyway")
    rows.sort(key=lambda r: (r.scale, r.instance))
    result = bench.ExperimentResult(rows, tuple(dict.fromkeys(r.variant for r in rows)))
    chash = next(iter(hashes.values())) if len(set(hashes.values())) == 1 else "mixed"
    agg = bench.aggregate(result)
    text = bench.render_aggregate(agg, chash)
    if args.out:
        _write_text(args.out, text)
    sys.stdout.write(text)
    for entry in bench.summary_ratios(result):
        print(json.dumps(entry, sort_keys=True))
    return EXIT_OK


# -- wiring -----------------------------------------------------------------

def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file (flags override it)")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--set", action="append", metavar="SECTION.FIELD=VALUE",
                        help="override any config field, e.g. econ.q_trust_cost=50")
    model = _Parser(add_help=False)
    model.add_argument("--mode", choices=["heuristic", "exact"])
    model.add_argument("--backend", choices=["builtin", "highs"])
    model.add_argument("--tau", type=float)
    model.add_argument("--beta", type=float)
    model.add_argument("--rate-model", choices=["simplified", "gllp"])

    p = _Parser(prog="mpcqkd", description="MPC QKD networking toolkit. "
                f"Default output directory comes from ${OUT_DIR_ENV} (else ./out).")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="generate a random instance")
    g.add_argument("--nodes", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--edge-factor", type=float, default=1.5)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("rates", parents=[common, model], help="print a length vs key-rate table")
    r.add_argument("--lengths", default="0:300:10", help="a:b[:step] in km")
    r.add_argument("--out")
    r.set_defaults(func=cmd_rates)

    o = sub.add_parser("optimize", parents=[common, model], help="solve one instance")
    o.add_argument("--in", dest="input", required=True)
    o.add_argument("--variant", default="MPC", help="MDI, TF, MPC[:tau], BB84, NSA, BB84-MDI, BB84-TF")
    o.add_argument("--out")
    o.add_argument("--lp-out", help="also write the program in LP format")
    o.set_defaults(func=cmd_optimize)

    s = sub.add_parser("simulate-relay", parents=[common], help="run and audit the relay cell")
    s.add_argument("--messages", type=int, default=1000)
    s.add_argument("--size-range", default="1:4096")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--rekey-every", type=int, default=1)
    s.add_argument("--audit")
    s.add_argument("--traces", action="store_true", help="include hex byte fields in the audit")
    s.set_defaults(func=cmd_simulate_relay)

    e = sub.add_parser("experiment", parents=[common, model], help="run an experiment group")
    e.add_argument("--group", choices=["1", "2"], required=True)
    e.add_argument("--profile", choices=sorted(bench.PROFILES), default="ci")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--scales", help="comma-separated node counts (overrides the profile)")
    e.add_argument("--instances", type=int)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--timing", action="store_true", help="record wall time (breaks byte-identical reruns)")
    e.add_argument("--out")
    e.set_defaults(func=cmd_experiment)

    rp = sub.add_parser("report", parents=[common], help="aggregate raw CSVs")
    rp.add_argument("--in", dest="inputs", nargs="+", required=True, help="raw.csv files or experiment dirs")
    rp.add_argument("--force", action="store_true", help="combine files with different config hashes")
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve(args.config, _overrides(args))
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return EXIT_USAGE
    except (InvalidInput, ParseError) as exc:
        sys.stderr.write(f"mpcqkd: {exc}\n")
        return EXIT_INPUT
    logging.basicConfig(level=cfg.log_level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr, force=True)
    log.info("resolved config: %s", json.dumps(cfg.to_dict(), sort_keys=True))
    try:
        return args.func(args, cfg)
    except UsageError as exc:
        sys.stderr.write(f"mpcqkd: {exc}\n")
        return EXIT_USAGE
    except SolverError as exc:
        sys.stderr.write(f"mpcqkd: solver failure: {exc}\n")
        return EXIT_SOLVER
    except (InvalidInput, ParseError, PoolDepleted) as exc:
        sys.stderr.write(f"mpcqkd: {exc}\n")
        return EXIT_INPUT
    except OSError as exc:
        sys.stderr.write(f"mpcqkd: I/O failure: {exc}\n")
        return EXIT_IO
    except MpcQkdError as exc:
        sys.stderr.write(f"mpcqkd: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
