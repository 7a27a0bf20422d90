"""Graph-structured convex quadratic programming.

Models are hierarchical hypergraphs: nodes carry variables, constraints, and
objectives; hyperedges carry linking constraints across nodes; subgraphs nest.
The package flattens such graphs to standard-form QPs, partitions and
aggregates them, and solves them monolithically, by Schur-complement block
factorization, or by overlapping Schwarz decomposition.
"""

from .aggregate import AggregationMap, aggregate
from .errors import (BalanceError, BoundError, ClassificationError,
                     ConvexityError, EdgeArityError, GraphQPError,
                     HierarchyError, IntegrityError, ModelError, OptionError,
                     ParseError, PartitionError, RankError, ScopeError,
                     SolveError, StalePartitionError, StructureError,
                     SubproblemError, UnresolvedReferenceError)
from .flatten import FlatQP, flatten
from .io import (export_dot, model_from_json, model_to_json, read_model,
                 solution_to_json, variable_paths, write_model, write_solution)
from .ipm import (KKTResiduals, Solution, SolverOptions, kkt_residuals,
                  solve_monolithic)
from .model import (Edge, Graph, LinkConstraint, Node, NodeConstraint,
                    Variable, iter_links, query_elements)
from .models import (Bus, DynOptConfig, Generator, Line, PowerNetwork,
                     build_dcopf_model, build_dynamic_model,
                     generate_grid_network, load_network_csv)
from .partition import (Partition, PartitionMetrics, apply_partition,
                        make_partition, metrics, partition_heuristic,
                        read_labels, write_labels)
from .schur import KKTBlocks, assemble_blocks, schur_solve, solve_structured
from .schwarz import (SchwarzOptions, SchwarzState, build_subproblem,
                      classify_links, residuals, restrict, schwarz_solve)
from .topology import (Hypergraph, RefMap, SimpleGraph, SubgraphView, expand,
                       incident_edges, neighborhood, to_bipartite_graph,
                       to_clique_graph, to_hypergraph)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
