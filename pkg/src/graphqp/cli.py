"""Command-line driver.

Subcommands cover the whole pipeline: ``build`` emits a model document for
one of the bundled model families, ``partition`` computes or checks a
Metis-style label file, ``aggregate`` collapses subgraph structure,
``solve`` runs one of the three solvers, and ``export`` renders DOT.

Every stage is deterministic for fixed arguments, so repeating a pipeline
reproduces its output files byte for byte.  Exit codes: 0 on success, 1 on
a usage or input error, 2 when a solve fails.
"""

from __future__ import annotations

import argparse
import os
import sys

from .aggregate import aggregate
from .errors import GraphQPError, SolveError
from .io import (export_dot, read_model, variable_paths, write_model,
                 write_solution)
from .ipm import Solution, SolverOptions, solve_monolithic
from .models import (DEFAULT_BETA, DynOptConfig, build_dcopf_model,
                     build_dynamic_model, generate_grid_network)
from .partition import (apply_partition, make_partition, metrics,
                        partition_heuristic, read_labels, write_labels)
from .schur import solve_structured
from .schwarz import SchwarzOptions, schwarz_solve
from .topology import to_hypergraph

USAGE_ERROR = 1
SOLVE_ERROR = 2


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits 1 on usage errors, not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="graphqp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("build", help="emit a model document for a bundled family")
    p.add_argument("family", choices=("dynamic", "dcopf-grid"))
    p.add_argument("--T", type=int, dest="horizon",
                   help="horizon of the dynamic family")
    p.add_argument("--rows", type=int, help="grid rows (dcopf-grid)")
    p.add_argument("--cols", type=int, help="grid columns (dcopf-grid)")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--beta", type=float, default=DEFAULT_BETA,
                   help="angle-difference regularization weight "
                        f"(default {DEFAULT_BETA})")
    p.add_argument("-o", "--output", required=True, metavar="model.json")

    p = sub.add_parser("partition", help="compute or check a node labeling")
    p.add_argument("model", metavar="model.json")
    p.add_argument("-k", type=int, dest="parts", help="number of parts")
    p.add_argument("--imbalance", type=float, default=0.1,
                   help="allowed relative part overweight (default 0.1)")
    p.add_argument("--labels", metavar="out.part",
                   help="write the labeling, one label per line")
    p.add_argument("--from-labels", dest="from_labels", metavar="in.part",
                   help="validate an existing label file instead of computing")
    p.add_argument("--objective", choices=("edgecut",), default="edgecut")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("aggregate", help="collapse subgraphs into single nodes")
    p.add_argument("model", metavar="model.json")
    p.add_argument("--levels", type=int, default=0,
                   help="hierarchy depth to keep (default 0: collapse all)")
    p.add_argument("-o", "--output", required=True, metavar="out.json")

    p = sub.add_parser("solve", help="solve a model document")
    p.add_argument("model", metavar="model.json")
    p.add_argument("--method", choices=("monolithic", "schur", "schwarz"),
                   default="monolithic")
    p.add_argument("--parts", type=int,
                   help="partition into this many parts before solving")
    p.add_argument("--imbalance", type=float, default=0.1)
    p.add_argument("--overlap", type=int, default=1,
                   help="expansion distance of each part (schwarz)")
    p.add_argument("--tol", type=float, help="convergence tolerance")
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--seed", type=int, default=0, help="partitioning seed")
    p.add_argument("--trace", metavar="trace.csv",
                   help="write per-iteration residuals (schwarz only)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker pool size for schwarz subproblem solves")
    p.add_argument("--primal-links", action="append", default=[], metavar="TAG",
                   help="treat links carrying TAG primally instead of dually "
                        "(schwarz; repeatable)")
    p.add_argument("-o", "--output", required=True, metavar="solution.json")

    p = sub.add_parser("export", help="render a model as a graph")
    p.add_argument("model", metavar="model.json")
    p.add_argument("--format", choices=("dot",), default="dot")
    p.add_argument("--color-partitions", action="store_true",
                   help="fill nodes by their top-level subgraph")
    p.add_argument("--aggregated", action="store_true",
                   help="one vertex per top-level subgraph")
    p.add_argument("-o", "--output", required=True, metavar="graph.dot")

    return parser


def _cmd_build(args, parser: _Parser) -> int:
    if args.family == "dynamic":
        if args.horizon is None:
            parser.error("build dynamic requires --T")
        graph = build_dynamic_model(DynOptConfig.sinusoid(args.horizon))
    else:
        if args.rows is None or args.cols is None:
            parser.error("build dcopf-grid requires --rows and --cols")
        network = generate_grid_network(args.rows, args.cols, seed=args.seed)
        network.beta = args.beta
        graph = build_dcopf_model(network)
    write_model(graph, args.output)
    return 0


def _cmd_partition(args, parser: _Parser) -> int:
    graph = read_model(args.model)
    hypergraph, ref = to_hypergraph(graph)
    if args.from_labels:
        labels = read_labels(args.from_labels)
    else:
        if args.parts is None:
            parser.error("partition requires -k unless --from-labels is given")
        labels = partition_heuristic(hypergraph, args.parts, args.imbalance,
                                     seed=args.seed)
    # same validity gate for both sources
    partition = make_partition(graph, labels, ref, num_parts=args.parts)
    stats = metrics(hypergraph, labels, partition.num_parts)
    print(f"parts: {stats.num_parts}")
    print(f"edge_cut: {stats.edge_cut}")
    print(f"connectivity: {stats.connectivity}")
    print(f"sizes: {' '.join(str(s) for s in stats.part_sizes)}")
    print(f"imbalance: {stats.imbalance!r}")
    if args.labels:
        write_labels(args.labels, labels)
    return 0


def _cmd_aggregate(args, parser: _Parser) -> int:
    graph = read_model(args.model)
    collapsed, _ = aggregate(graph, args.levels)
    write_model(collapsed, args.output)
    return 0


def _write_trace(path, trace) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("iter,r_pr,r_du,seconds\n")
        for iteration, r_pr, r_du, seconds in trace:
            fh.write(f"{iteration},{r_pr!r},{r_du!r},{seconds:.6f}\n")


def _cmd_solve(args, parser: _Parser) -> int:
    if args.trace and args.method != "schwarz":
        parser.error("--trace records the decomposition loop; "
                     "use it with --method schwarz")
    if args.threads < 1:
        parser.error(f"--threads must be at least 1, got {args.threads}")
    tol = args.tol
    max_iter = args.max_iter
    graph = read_model(args.model)
    paths = variable_paths(graph)

    if args.parts is not None:
        hypergraph, ref = to_hypergraph(graph)
        labels = partition_heuristic(hypergraph, args.parts, args.imbalance,
                                     seed=args.seed)
        apply_partition(graph, make_partition(graph, labels, ref))

    if args.method == "monolithic":
        options = SolverOptions(tol=1e-8 if tol is None else tol,
                                max_iter=200 if max_iter is None else max_iter)
        solution = solve_monolithic(graph, options)
    elif args.method == "schur":
        options = SolverOptions(tol=1e-8 if tol is None else tol,
                                max_iter=200 if max_iter is None else max_iter)
        condensed, amap = aggregate(graph, 0)
        inner = solve_structured(condensed, options)
        solution = Solution(status=inner.status, objective=inner.objective,
                            primal=amap.transport_primal(inner.primal),
                            duals_node={}, duals_link={}, reduced_costs={},
                            iterations=inner.iterations, info=inner.info)
    else:
        if not graph.subgraphs:
            parser.error("schwarz needs parts: pass --parts or a partitioned "
                         "model document")
        options = SchwarzOptions(
            overlap=args.overlap,
            tolerance=1e-6 if tol is None else tol,
            max_iterations=100 if max_iter is None else max_iter,
            treatment_overrides={tag: "primal" for tag in args.primal_links},
        )
        solution = schwarz_solve(graph, options=options, workers=args.threads)
        if args.trace:
            _write_trace(args.trace, solution.info["trace"])

    write_solution(solution, graph, args.output, method=args.method, paths=paths)
    if not solution.is_optimal:
        print(f"solve finished with status {solution.status!r}: "
              f"{solution.info.get('message', '')}", file=sys.stderr)
        return SOLVE_ERROR
    return 0


def _cmd_export(args, parser: _Parser) -> int:
    graph = read_model(args.model)
    text = export_dot(graph, color_by_partition=args.color_partitions,
                      aggregated=args.aggregated)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(text)
    return 0


_HANDLERS = {
    "build": _cmd_build,
    "partition": _cmd_partition,
    "aggregate": _cmd_aggregate,
    "solve": _cmd_solve,
    "export": _cmd_export,
}


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return USAGE_ERROR
    try:
        return _HANDLERS[args.command](args, parser)
    except SystemExit as exc:
        return int(exc.code or 0)
    except OSError as exc:
        print(f"graphqp: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except SolveError as exc:
        print(f"graphqp: solve failed: {exc}", file=sys.stderr)
        return SOLVE_ERROR
    except GraphQPError as exc:
        print(f"graphqp: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(cli_main())
