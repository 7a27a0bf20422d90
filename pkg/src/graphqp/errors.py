"""Exception hierarchy shared by all graphqp modules."""


class GraphQPError(Exception):
    """Base class for every error raised by this package."""


class ModelError(GraphQPError):
    """Invalid model construction (bad bounds, names, expressions)."""


class BoundError(ModelError):
    """Variable bounds with lower > upper."""


class EdgeArityError(ModelError):
    """Link constraint referencing variables of fewer than two nodes."""


class ScopeError(ModelError):
    """Element referenced outside the graph scope that owns it."""


class HierarchyError(ModelError):
    """Subgraph attachment that would create a cycle or double parent."""


class ConvexityError(ModelError):
    """Objective assembly produced a Hessian block that is not PSD."""

    def __init__(self, message: str, node=None):
        super().__init__(message)
        self.node = node


class IntegrityError(ModelError):
    """Constraint refers to a variable whose node left the graph."""


class PartitionError(GraphQPError):
    """Invalid partition labels or projection mismatch."""


class BalanceError(PartitionError):
    """No partition can satisfy the requested balance bound."""


class StalePartitionError(PartitionError):
    """Partition built against an earlier revision of the graph."""


class StructureError(GraphQPError):
    """Graph shape unsuitable for the requested decomposition."""


class RankError(GraphQPError):
    """Singular Schur complement (redundant linking rows)."""


class SolveError(GraphQPError):
    """Solver failed in a way that is not a clean status."""


class SubproblemError(SolveError):
    """A decomposition subproblem did not solve to optimality."""

    def __init__(self, message: str, subgraph_index: int, iteration: int, status: str):
        super().__init__(message)
        self.subgraph_index = subgraph_index
        self.iteration = iteration
        self.status = status


class ClassificationError(GraphQPError):
    """Link-treatment override names a link that is not incident anywhere."""


class ParseError(GraphQPError):
    """Malformed model or partition document."""


class UnresolvedReferenceError(ParseError):
    """Document references a node or variable that does not exist."""


class OptionError(GraphQPError):
    """Out-of-range solver or algorithm option."""
