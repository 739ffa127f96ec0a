"""Command line front end: solve, sweep, verify, gen."""
from __future__ import annotations

import argparse
import json
import sys

from . import bench, oracle, outer
from .errors import InvariantError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONTRACT = 3


def _parse_gen(text):
    """Generator spec, optionally parameterized: name[:rank[:noise]]."""
    parts = text.split(":")
    name = parts[0]
    rank = int(parts[1]) if len(parts) > 1 else 1
    noise = float(parts[2]) if len(parts) > 2 else 0.1
    if len(parts) > 3:
        raise ValueError(f"malformed generator spec `{text}`")
    return name, rank, noise


def _instance_spec(kind, m, n, gen, seed):
    name, rank, noise = _parse_gen(gen)
    return bench.InstanceSpec(kind, m, n, name, seed, rank, noise)


def read_config(path):
    """Flat key=value file; blank lines and # comments allowed."""
    conf = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, val = line.split("=", 1)
            conf[key.strip()] = val.strip()
    return conf


def _conf_instance(conf):
    try:
        kind = conf["kind"]
        m = int(conf["m"])
        n = int(conf["n"])
    except KeyError as exc:
        raise ValueError(f"config missing key {exc}") from exc
    gen = conf.get("generator", conf.get("gen", "rademacher"))
    seed = int(conf.get("seed", "0"))
    spec = _instance_spec(kind, m, n, gen, seed)
    if "rank" in conf or "noise" in conf:
        spec = bench.InstanceSpec(kind, m, n, spec.generator, seed,
                                  int(conf.get("rank", spec.rank)),
                                  float(conf.get("noise", spec.noise)))
    return spec


_TRUE = {"1", "true", "yes", "on"}
_KNOWN_KEYS = {"kind", "m", "n", "generator", "gen", "seed", "rank", "noise",
               "eps", "reps", "solvers", "audit", "out", "format",
               "pi_factor"}


def _check_keys(conf):
    unknown = set(conf) - _KNOWN_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")


def cmd_solve(args):
    spec = _instance_spec(args.kind, args.m, args.n, args.gen, args.seed)
    orc = bench.generate(spec)
    report, trail = outer.solve_game(orc, args.eps, audit=args.audit)
    doc = report.as_dict()
    if trail is not None:
        doc["audit"] = {
            "movement": trail.movement,
            "alt_movement": trail.alt_movement,
            "telescope_err": trail.telescope_err,
            "size_released": trail.size_released,
        }
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_sweep(args):
    conf = read_config(args.config)
    _check_keys(conf)
    inst = _conf_instance(conf)
    eps_grid = tuple(float(tok) for tok in conf["eps"].split(","))
    solvers = tuple(tok.strip() for tok in
                    conf.get("solvers", ",".join(bench.SOLVERS)).split(","))
    sweep = bench.SweepSpec(inst, eps_grid,
                            reps=int(conf.get("reps", "1")),
                            solvers=solvers,
                            audit=conf.get("audit", "0").lower() in _TRUE)
    bench.run_sweep(sweep, out=conf.get("out"),
                    fmt=conf.get("format", "jsonl"))
    return EXIT_OK


def cmd_verify(args):
    conf = read_config(args.config)
    _check_keys(conf)
    inst = _conf_instance(conf)
    eps = float(conf.get("eps", "0.1"))
    pi_factor = float(conf["pi_factor"]) if "pi_factor" in conf else None
    graded = bench.verify(inst, eps, pi_factor=pi_factor)
    print(json.dumps(graded, indent=2, sort_keys=True))
    ok = all(entry["pass"] for entry in graded.values())
    print("verify:", "ok" if ok else "FAIL", file=sys.stderr)
    return EXIT_OK if ok else EXIT_CONTRACT


def cmd_gen(args):
    spec = _instance_spec(args.kind, args.m, args.n, args.gen, args.seed)
    oracle.save(args.out, bench.generate(spec))
    return EXIT_OK


def build_parser():
    top = argparse.ArgumentParser(prog="mgame")
    sub = top.add_subparsers(dest="command", required=True)

    def instance_flags(p):
        p.add_argument("--kind", required=True, choices=("l1l1", "l2l1"))
        p.add_argument("--m", type=int, required=True)
        p.add_argument("--n", type=int, required=True)
        p.add_argument("--gen", default="rademacher",
                       help="generator name, optionally name:rank:noise")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("solve", help="solve one generated instance")
    instance_flags(p)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--audit", action="store_true")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("sweep", help="run a solver/eps/rep grid from a config")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("verify", help="grade every invariant on one audited run")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("gen", help="write a generated instance to a file")
    instance_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen)
    return top


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except InvariantError as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
