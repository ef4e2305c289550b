"""Command-line entry point.

``topoblend blend CONFIG [--out DIR] [--trace] [--seed N]`` runs the full
pipeline and writes the requested outputs; ``topoblend analyze CONFIG``
reports the topology of the plain initial blend without optimizing;
``topoblend mesh GRID --out PATH`` meshes an exported grid.

Exit codes: 0 success, 2 configuration error, 3 unconverged optimization
(outputs still written), 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import mesh as M
from . import topology
from .config import load_config
from .errors import ConfigError, DomainError
from .pipeline import BlendError, blend_many

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNCONVERGED = 3
EXIT_IO = 4

log = logging.getLogger("topoblend")


def _write_outputs(phi, report, config, box, out: Path, seed) -> None:
    out.mkdir(parents=True, exist_ok=True)
    formats = set(config.data["output"]["formats"])
    resolution = tuple(config.data["output"].get("resolution", config.data["optimize"]["resolution"]))
    grid = topology.sample_field(phi, box, resolution)
    if "report" in formats:
        data = report.to_dict()
        data["seed"] = seed
        M.write_json(data, out / "report.json")
    if "raw" in formats:
        M.write_grid(grid, out / "field.raw")
    if "diagram" in formats:
        diagram = topology.inverse_map(grid, topology.compute_persistence(grid, dims=(0, 2)))
        topology.write_diagram_csv(diagram, out / "diagram.csv")
    if formats & {"obj", "stl"}:
        mesh = M.marching_cubes(grid, 0.0)
        if "obj" in formats:
            M.write_obj(mesh, out / "mesh.obj")
        if "stl" in formats:
            M.write_stl(mesh, out / "mesh.stl")


def cmd_blend(args) -> int:
    config = load_config(args.config)
    np.random.seed(args.seed)
    out = Path(args.out or config.data["output"]["dir"])
    trace_dir = str(out / "trace") if args.trace else None
    problem = config.build_problem(trace_dir)
    phi, report = blend_many(problem)
    _write_outputs(phi, report, config, problem.total_box(), out, args.seed)
    status = "converged" if report.converged else "unconverged"
    print(
        f"{status}: betti b0={report.betti[0]} b1={report.betti[1]} b2={report.betti[2]} "
        f"(oracle b0={report.oracle[0]} b2={report.oracle[1]}), "
        f"{report.iterations} iterations, {report.wall_time:.2f} s -> {out}"
    )
    return EXIT_OK if report.converged else EXIT_UNCONVERGED


def cmd_analyze(args) -> int:
    config = load_config(args.config)
    problem = config.build_problem()
    problem.settings = replace(problem.settings, max_iters=0)
    _, report = blend_many(problem)
    box = problem.total_box()
    inputs = []
    for i, f in enumerate(problem.fields()):
        grid = topology.sample_field(f, box, problem.settings.resolution)
        b0, b2 = topology.oracle_betti(grid, 0.0)
        inputs.append({"structure": i, "b0": b0, "b2": b2})
    data = {
        "inputs": inputs,
        "initial_blend": report.to_dict(),
        "initial_loss": [s.loss_trace[0] for s in report.stages],
    }
    print(json.dumps(data, indent=2))
    return EXIT_OK


def cmd_mesh(args) -> int:
    grid = M.read_grid(args.grid)
    mesh = M.marching_cubes(grid, 0.0)
    out = Path(args.out)
    if out.suffix.lower() == ".stl":
        M.write_stl(mesh, out)
    else:
        M.write_obj(mesh, out)
    print(f"{len(mesh.vertices)} vertices, {len(mesh.faces)} triangles -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topoblend", description="Topology-preserving blending of implicit porous structures.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("blend", help="blend the structures of a config and write outputs")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (default: output.dir of the config)")
    p.add_argument("--trace", action="store_true", help="dump per-iteration loss and diagrams")
    p.add_argument("--seed", type=int, default=0, help="seed recorded in the report")
    p.set_defaults(func=cmd_blend)

    p = sub.add_parser("analyze", help="topology of the initial blend, no optimization")
    p.add_argument("config")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("mesh", help="mesh an exported grid")
    p.add_argument("grid")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mesh)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, BlendError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
