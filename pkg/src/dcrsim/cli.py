"""Command-line front end.

Subcommands cover the whole pipeline: generate a topology, build an overlay
over it, evaluate overlay metrics, compare the three constructions across a
batch of random topologies, and run a scenario. All output is deterministic
for fixed arguments.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

from .errors import ConfigError, OverlayError, ParseError, ScenarioError
from .overlay import build_overlay, format_overlay, load_overlay, overlay_metrics
from .simulator import Simulation, load_scenario
from .topology import format_topology, generate_random_topology, load_topology


@dataclass(frozen=True)
class RunConfig:
    """One parsed invocation: the subcommand plus its inputs and knobs."""

    subcommand: str
    topology: str | None = None
    scenario: str | None = None
    overlay: str | None = None
    seed: int = 0
    n: int = 11
    n_range: str = "16"
    extent: float = 100.0
    alg: int = 3
    count: int = 10
    out: str | None = None
    trace: str | None = None

    def __post_init__(self) -> None:
        if self.alg not in (1, 2, 3):
            raise ConfigError(f"alg must be 1, 2 or 3, got {self.alg}")


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text)


def cmd_gen_topology(cfg: RunConfig) -> int:
    t = generate_random_topology(cfg.seed, cfg.n, cfg.extent)
    _write(format_topology(t), cfg.out)
    return 0


def cmd_build_overlay(cfg: RunConfig) -> int:
    t = load_topology(cfg.topology)
    o = build_overlay(t, cfg.alg)
    _write(format_overlay(o), cfg.out)
    return 0


def cmd_eval_overlay(cfg: RunConfig) -> int:
    o = load_overlay(cfg.overlay)
    m = overlay_metrics(o)
    print(f"worst={m.worst_delay:.2f} avg={m.avg_delay:.2f} "
          f"overhead={m.flooding_overhead:.2f}")
    return 0


def _parse_n_spec(spec: str) -> tuple[int, int]:
    try:
        if ".." in spec:
            lo_s, hi_s = spec.split("..", 1)
            lo, hi = int(lo_s), int(hi_s)
        else:
            lo = hi = int(spec)
    except ValueError:
        raise ConfigError(f"--n must be an integer or LO..HI, got {spec!r}") from None
    if lo < 2 or hi < lo:
        raise ConfigError(f"bad --n range {spec!r}")
    return lo, hi


def cmd_compare(cfg: RunConfig) -> int:
    lo, hi = _parse_n_spec(cfg.n_range)
    if cfg.count < 1:
        raise ConfigError(f"--count must be >= 1, got {cfg.count}")
    rows = ["topology,seed,n,alg,worst_delay,avg_delay,flooding_overhead"]
    sums = {alg: [0.0, 0.0, 0.0] for alg in (1, 2, 3)}
    for i in range(cfg.count):
        seed = cfg.seed + i
        n = lo + i % (hi - lo + 1)
        t = generate_random_topology(seed, n, cfg.extent)
        for alg in (1, 2, 3):
            m = overlay_metrics(build_overlay(t, alg))
            rows.append(f"t{i},{seed},{n},{alg},{m.worst_delay:.6f},"
                        f"{m.avg_delay:.6f},{m.flooding_overhead:.6f}")
            sums[alg][0] += m.worst_delay
            sums[alg][1] += m.avg_delay
            sums[alg][2] += m.flooding_overhead
    for alg in (1, 2, 3):
        w, a, o = (s / cfg.count for s in sums[alg])
        rows.append(f"mean,,,{alg},{w:.6f},{a:.6f},{o:.6f}")
    _write("\n".join(rows) + "\n", cfg.out)
    return 0


def cmd_run(cfg: RunConfig) -> int:
    t = load_topology(cfg.topology)
    events = load_scenario(cfg.scenario)
    if cfg.overlay is not None:
        o = load_overlay(cfg.overlay)
    else:
        o = build_overlay(t, cfg.alg)
    report = Simulation(t, o, events).run()
    _write(report.to_csv(), cfg.out)
    if cfg.trace is not None:
        _write("\n".join(report.trace_lines) + "\n" if report.trace_lines else "",
               cfg.trace)
    return 0


_HANDLERS = {
    "gen-topology": cmd_gen_topology,
    "build-overlay": cmd_build_overlay,
    "eval-overlay": cmd_eval_overlay,
    "compare": cmd_compare,
    "run": cmd_run,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dcrsim",
        description="Anycast VM mobility simulator over federated data centers.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gen-topology", help="generate a random topology file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=11)
    p.add_argument("--extent", type=float, default=100.0)
    p.add_argument("--out", default=None, help="output file (default stdout)")

    p = sub.add_parser("build-overlay", help="build an overlay over a topology")
    p.add_argument("topology", help="topology file")
    p.add_argument("--alg", type=int, choices=(1, 2, 3), default=3)
    p.add_argument("--out", default=None, help="output file (default stdout)")

    p = sub.add_parser("eval-overlay", help="print worst/avg delay and overhead")
    p.add_argument("overlay", help="overlay file")

    p = sub.add_parser("compare",
                       help="metrics of all three constructions over random topologies")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--n", default="16", help="DCR count, fixed (K) or cycling (LO..HI)")
    p.add_argument("--extent", type=float, default=100.0)
    p.add_argument("--out", default=None, help="output CSV (default stdout)")

    p = sub.add_parser("run", help="run a scenario and write the packet report")
    p.add_argument("topology", help="topology file")
    p.add_argument("scenario", help="scenario file")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--overlay", default=None, help="overlay file to use")
    group.add_argument("--alg", type=int, choices=(1, 2, 3), default=3,
                       help="construction to build when no overlay file is given")
    p.add_argument("--out", default=None, help="report CSV (default stdout)")
    p.add_argument("--trace", default=None, help="also write the NOTIFY/PKT log here")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    fields = {"subcommand": args.subcommand}
    for name in ("topology", "scenario", "overlay", "seed", "extent", "alg",
                 "count", "out", "trace"):
        if hasattr(args, name):
            fields[name] = getattr(args, name)
    if args.subcommand == "compare":
        fields["n_range"] = args.n
    elif hasattr(args, "n"):
        fields["n"] = args.n
    return RunConfig(**fields)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        return _HANDLERS[cfg.subcommand](cfg)
    except (ConfigError, ParseError, OverlayError, ScenarioError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
