"""Benchmark model builders: a discrete-time dynamic QP and DC optimal
power flow, plus a synthetic lattice network generator and CSV ingestion.

Builders are pure: the same inputs always produce structurally identical
graphs and therefore bitwise-identical flattened QPs.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field, replace

from .errors import ModelError, OptionError, ParseError, UnresolvedReferenceError
from .model import Graph

CONTROL_LOWER_BOUND = -1000.0
DEFAULT_BETA = 0.1

# Fixed constants of the synthetic grid (the load, admittance, and angle
# ranges are part of the generator's contract; the rest are free choices).
GRID_LOAD_RANGE = (0.5, 1.5)
GRID_ADMITTANCE_RANGE = (1.0, 5.0)
GRID_ANGLE_LIMIT = 0.5
GRID_GENERATOR_DENSITY = 0.25
GRID_C1_RANGE = (0.9, 1.1)
GRID_C2_RANGE = (0.1, 1.0)
GRID_P_MAX = 5.0


@dataclass(frozen=True)
class DynOptConfig:
    """Horizon and disturbance sequence of the dynamic test problem."""

    horizon: int
    disturbance: tuple[float, ...]

    def __post_init__(self):
        if not isinstance(self.horizon, int) or self.horizon < 2:
            raise OptionError(f"horizon must be an integer >= 2, got {self.horizon}")
        if len(self.disturbance) != self.horizon:
            raise OptionError(
                f"disturbance length {len(self.disturbance)} does not match "
                f"horizon {self.horizon}")

    @classmethod
    def sinusoid(cls, horizon: int) -> "DynOptConfig":
        return cls(horizon, tuple(math.sin(t) for t in range(1, horizon + 1)))


def build_dynamic_model(config: DynOptConfig) -> Graph:
    """Discrete-time tracking problem with separate state and control nodes.

    States x_t >= 0 carry objective x_t^2, controls u_t >= -1000 carry u_t^2,
    x_1 = 0 is a node constraint, and each transition
    x_{t+1} = x_t + u_t + d_t is a three-node link constraint.
    """
    t_end = config.horizon
    graph = Graph(name=f"dynamic_T{t_end}")
    states = []
    for t in range(1, t_end + 1):
        node = graph.add_node(f"state_{t}")
        x = node.add_variable("x", lower=0.0)
        node.set_objective(x * x)
        states.append((node, x))
    controls = []
    for t in range(1, t_end):
        node = graph.add_node(f"control_{t}")
        u = node.add_variable("u", lower=CONTROL_LOWER_BOUND)
        node.set_objective(u * u)
        controls.append((node, u))

    states[0][0].add_constraint(states[0][1], "==", 0.0)
    for t in range(1, t_end):
        x_now, x_next = states[t - 1][1], states[t][1]
        u = controls[t - 1][1]
        graph.add_link_constraint(x_next - x_now - u, "==",
                                  config.disturbance[t - 1])
    return graph


@dataclass(frozen=True)
class Generator:
    c1: float
    c2: float
    p_min: float
    p_max: float
    p_start: float = 0.0

    def __post_init__(self):
        if self.c2 < 0:
            raise ModelError(f"generator quadratic cost must be nonnegative, got {self.c2}")
        if self.p_min > self.p_max:
            raise ModelError(
                f"generator power bounds are reversed: [{self.p_min}, {self.p_max}]")


@dataclass
class Bus:
    load: float = 0.0
    generators: tuple[Generator, ...] = ()
    va_lower: float = -math.inf
    va_upper: float = math.inf
    reference: bool = False
    va_ref: float = 0.0
    va_start: float = 0.0


@dataclass(frozen=True)
class Line:
    src: int
    dst: int
    admittance: float
    angle_limit: float
    flow_start: float = 0.0

    def __post_init__(self):
        if self.admittance <= 0:
            raise ModelError(f"line admittance must be positive, got {self.admittance}")
        if self.angle_limit <= 0:
            raise ModelError(f"angle limit must be positive, got {self.angle_limit}")


@dataclass
class PowerNetwork:
    """Buses, lines, and the angle-difference regularization weight."""

    buses: list[Bus] = field(default_factory=list)
    lines: list[Line] = field(default_factory=list)
    beta: float = DEFAULT_BETA

    def validate(self) -> None:
        n = len(self.buses)
        for line in self.lines:
            if not (0 <= line.src < n and 0 <= line.dst < n):
                raise ModelError(
                    f"line endpoints ({line.src}, {line.dst}) outside bus range 0..{n - 1}")
            if line.src == line.dst:
                raise ModelError(f"line connects bus {line.src} to itself")
        # every connected component needs a reference angle
        parent = list(range(n))

        def find(a: int) -> int:
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for line in self.lines:
            ra, rb = find(line.src), find(line.dst)
            if ra != rb:
                parent[ra] = rb
        referenced = {find(i) for i, bus in enumerate(self.buses) if bus.reference}
        for i in range(n):
            if find(i) not in referenced:
                raise ModelError(
                    f"bus {i} belongs to a connected component without a reference bus")


def build_dcopf_model(net: PowerNetwork) -> Graph:
    """DC optimal power flow as a graph: one node per bus, one per line.

    Bus nodes hold the angle, generator outputs, and power_in/power_out
    auxiliaries with the balance sum(P) + sum(power_in) - sum(power_out) =
    load (received flows add, sent flows subtract).  Line nodes hold angle
    copies and the flow with its definition and angle limits.  Power links
    (tag "power") tie the auxiliaries to line flows; angle links (tag
    "angle") tie the angle copies to bus angles.
    """
    net.validate()
    graph = Graph(name="dcopf")
    lines_in = [[] for _ in net.buses]   # line indices with dst == bus
    lines_out = [[] for _ in net.buses]  # line indices with src == bus
    for k, line in enumerate(net.lines):
        lines_in[line.dst].append(k)
        lines_out[line.src].append(k)

    # flow on line k can never exceed angle_limit * admittance, so the
    # power_in/power_out copies carry 1.5x that range as explicit bounds.
    # Redundant for the full problem (strictly slack at any optimum, so
    # multipliers stay unique), but they keep decomposition subproblems
    # bounded when a link is relaxed into a dual penalty and the copy
    # would otherwise float free with a linear objective.
    cap = [1.5 * line.angle_limit * line.admittance for line in net.lines]

    bus_nodes = []
    for i, bus in enumerate(net.buses):
        node = graph.add_node(f"bus{i}")
        va = node.add_variable("va", lower=bus.va_lower, upper=bus.va_upper,
                               start=bus.va_start)
        gens = [node.add_variable(f"P{q}", lower=g.p_min, upper=g.p_max,
                                  start=g.p_start)
                for q, g in enumerate(bus.generators)]
        p_in = [node.add_variable(f"power_in{k}", lower=-cap[k], upper=cap[k],
                                  start=net.lines[k].flow_start)
                for k in lines_in[i]]
        p_out = [node.add_variable(f"power_out{k}", lower=-cap[k], upper=cap[k],
                                   start=net.lines[k].flow_start)
                 for k in lines_out[i]]
        balance = sum(gens) + sum(p_in) - sum(p_out)
        node.add_constraint(balance if gens or p_in or p_out else 0.0 * va,
                            "==", bus.load)
        objective = 0.0
        for g, p in zip(bus.generators, gens):
            objective = objective + g.c1 * p + g.c2 * p * p
        if gens:
            node.set_objective(objective)
        if bus.reference:
            node.add_constraint(va, "==", bus.va_ref)
        bus_nodes.append((node, va, {k: v for k, v in zip(lines_in[i], p_in)},
                          {k: v for k, v in zip(lines_out[i], p_out)}))

    line_nodes = []
    for k, line in enumerate(net.lines):
        node = graph.add_node(f"line{k}")
        va_i = node.add_variable("va_i", start=net.buses[line.src].va_start)
        va_j = node.add_variable("va_j", start=net.buses[line.dst].va_start)
        flow = node.add_variable("flow", start=line.flow_start)
        node.add_constraint(flow - line.admittance * (va_i - va_j), "==", 0.0)
        node.add_constraint(va_i - va_j, "<=", line.angle_limit)
        node.add_constraint(va_i - va_j, ">=", -line.angle_limit)
        node.set_objective(0.5 * net.beta * (va_i - va_j) * (va_i - va_j))
        line_nodes.append((node, va_i, va_j, flow))

    for k, line in enumerate(net.lines):
        _, va_i, va_j, flow = line_nodes[k]
        src_node, src_va, _, src_out = bus_nodes[line.src]
        dst_node, dst_va, dst_in, _ = bus_nodes[line.dst]
        graph.add_link_constraint(dst_in[k] - flow, "==", 0.0, tag="power")
        graph.add_link_constraint(src_out[k] - flow, "==", 0.0, tag="power")
        graph.add_link_constraint(va_i - src_va, "==", 0.0, tag="angle")
        graph.add_link_constraint(va_j - dst_va, "==", 0.0, tag="angle")
    return graph


REPAIR_PENALTY = 1000.0
_REPAIR_LIMIT = 40
_UNSERVED_TOL = 1e-6


def _elastic_dispatch(network: PowerNetwork):
    """Per-bus unserved power of an elastic dispatch, plus the operating
    point it found (bus angles, generator outputs, line flows).

    Every bus gets a relief injection and a relief absorption priced at
    REPAIR_PENALTY per unit, far above any locational price the base
    ranges can produce, so relief stays at zero exactly when the network
    is feasible (exact-penalty property of the linear price).
    """
    from .ipm import solve_monolithic

    relief = PowerNetwork(
        buses=[Bus(load=b.load,
                   generators=b.generators + (
                       Generator(c1=REPAIR_PENALTY, c2=0.0,
                                 p_min=0.0, p_max=GRID_P_MAX),
                       Generator(c1=-REPAIR_PENALTY, c2=0.0,
                                 p_min=-GRID_P_MAX, p_max=0.0)),
                   va_lower=b.va_lower, va_upper=b.va_upper,
                   reference=b.reference, va_ref=b.va_ref)
              for b in network.buses],
        lines=list(network.lines), beta=network.beta)
    graph = build_dcopf_model(relief)
    solution = solve_monolithic(graph)
    if solution.status != "optimal":
        raise ModelError(
            f"elastic dispatch did not solve (status {solution.status})")
    unserved = []
    angles = []
    outputs = []
    for i, bus in enumerate(network.buses):
        node = graph.nodes[i]
        k = len(bus.generators)
        unserved.append(abs(solution.value(node.variable(f"P{k}")))
                        + abs(solution.value(node.variable(f"P{k + 1}"))))
        angles.append(solution.value(node.variable("va")))
        outputs.append([solution.value(node.variable(f"P{q}")) for q in range(k)])
    nb = len(network.buses)
    flows = [solution.value(graph.nodes[nb + k].variable("flow"))
             for k in range(len(network.lines))]
    return unserved, angles, outputs, flows


def generate_grid_network(rows: int, cols: int, seed: int = 0) -> PowerNetwork:
    """Deterministic rows x cols lattice: loads U[0.5, 1.5], admittances
    U[1, 5], angle limit 0.5, generators on about a quarter of the buses
    (P in [0, 5], c1 in [0.9, 1.1], c2 in [0.1, 1]), reference at the
    center bus.

    Placement puts one generator per 2x2 tile at the bus with the best
    combined own-load and incident line capacity; a repair pass then adds
    generators where an elastic dispatch reports unserved load.  Both
    steps exist because the angle limit caps each line at 0.5 * Y, which
    sits close to the bus loads; careless placement strands load pockets
    and yields infeasible instances.  Draw order is fixed (loads, line
    admittances, tile generator costs, repair generator costs), so the
    same seed always produces the identical network.
    """
    if rows < 1 or cols < 1:
        raise OptionError(f"grid needs rows, cols >= 1, got {rows}x{cols}")
    rng = random.Random(seed)
    n = rows * cols
    loads = [rng.uniform(*GRID_LOAD_RANGE) for _ in range(n)]

    lines = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                lines.append(Line(src=i, dst=i + 1,
                                  admittance=rng.uniform(*GRID_ADMITTANCE_RANGE),
                                  angle_limit=GRID_ANGLE_LIMIT))
            if r + 1 < rows:
                lines.append(Line(src=i, dst=i + cols,
                                  admittance=rng.uniform(*GRID_ADMITTANCE_RANGE),
                                  angle_limit=GRID_ANGLE_LIMIT))
    capacity = [0.0] * n
    for line in lines:
        capacity[line.src] += line.angle_limit * line.admittance
        capacity[line.dst] += line.angle_limit * line.admittance

    # per-line angle steps are capped at GRID_ANGLE_LIMIT, so no bus angle
    # can sit further than diameter * limit from the reference; the bound
    # is slack at any optimum but keeps decomposition subproblems compact
    va_span = (rows + cols) * GRID_ANGLE_LIMIT
    # the angle datum sits at the grid center: the reference row is the only
    # constraint pinning the global angle level, and a central datum keeps it
    # within reach of any region of the lattice
    ref_bus = (rows // 2) * cols + cols // 2
    buses = [Bus(load=loads[i], va_lower=-va_span, va_upper=va_span,
                 reference=(i == ref_bus)) for i in range(n)]
    for tile_row in range(0, rows, 2):
        for tile_col in range(0, cols, 2):
            tile = [r * cols + c for r in range(tile_row, min(tile_row + 2, rows))
                    for c in range(tile_col, min(tile_col + 2, cols))]
            site = max(tile, key=lambda i: capacity[i] + loads[i])
            buses[site].generators = (Generator(
                c1=rng.uniform(*GRID_C1_RANGE), c2=rng.uniform(*GRID_C2_RANGE),
                p_min=0.0, p_max=GRID_P_MAX),)

    network = PowerNetwork(buses=buses, lines=lines)
    for _ in range(_REPAIR_LIMIT):
        unserved, angles, outputs, flows = _elastic_dispatch(network)
        worst = max(range(n), key=unserved.__getitem__)
        if unserved[worst] <= _UNSERVED_TOL:
            # record the dispatch as the network's operating point, the
            # same role the initial-condition columns play in real case
            # files; decomposition runs rely on it for a physically
            # consistent first iterate
            for i, bus in enumerate(buses):
                bus.va_start = angles[i]
                bus.generators = tuple(
                    replace(g, p_start=outputs[i][q])
                    for q, g in enumerate(bus.generators))
            network.lines = [replace(line, flow_start=flows[k])
                             for k, line in enumerate(lines)]
            return network
        buses[worst].generators += (Generator(
            c1=rng.uniform(*GRID_C1_RANGE), c2=rng.uniform(*GRID_C2_RANGE),
            p_min=0.0, p_max=GRID_P_MAX),)
    raise ModelError(
        f"{rows}x{cols} grid with seed {seed} still infeasible after "
        f"{_REPAIR_LIMIT} repair generators")


def _parse_float(value: str, path: str, line_no: int, column: str) -> float:
    try:
        return float(value)
    except ValueError as exc:
        raise ParseError(
            f"{path}:{line_no}: column {column!r} has non-numeric value {value!r}") from exc


def _parse_bool(value: str) -> bool:
    return value.strip().lower() in ("1", "true", "yes")


def load_network_csv(buses_path: str, lines_path: str,
                     generators_path: str | None = None,
                     beta: float = DEFAULT_BETA) -> PowerNetwork:
    """Read a network from CSV tables.

    buses.csv columns: bus, load [, va_min, va_max, reference, va_ref]
    lines.csv columns: src, dst, admittance [, angle_limit]
    generators.csv columns: bus, c1, c2, p_min, p_max
    """
    buses: dict[int, Bus] = {}
    with open(buses_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "bus" not in reader.fieldnames \
                or "load" not in reader.fieldnames:
            raise ParseError(f"{buses_path}: header must contain 'bus' and 'load'")
        for line_no, row in enumerate(reader, start=2):
            idx = int(_parse_float(row["bus"], buses_path, line_no, "bus"))
            bus = Bus(load=_parse_float(row["load"], buses_path, line_no, "load"))
            if row.get("va_min"):
                bus.va_lower = _parse_float(row["va_min"], buses_path, line_no, "va_min")
            if row.get("va_max"):
                bus.va_upper = _parse_float(row["va_max"], buses_path, line_no, "va_max")
            if row.get("reference"):
                bus.reference = _parse_bool(row["reference"])
            if row.get("va_ref"):
                bus.va_ref = _parse_float(row["va_ref"], buses_path, line_no, "va_ref")
            if idx in buses:
                raise ParseError(f"{buses_path}:{line_no}: duplicate bus id {idx}")
            buses[idx] = bus
    if not buses:
        raise ParseError(f"{buses_path}: no bus rows")
    ordered = sorted(buses)
    if ordered != list(range(len(ordered))):
        raise ParseError(f"{buses_path}: bus ids must be 0..{len(ordered) - 1}")

    lines: list[Line] = []
    with open(lines_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"src", "dst", "admittance"} <= set(reader.fieldnames):
            raise ParseError(
                f"{lines_path}: header must contain 'src', 'dst', and 'admittance'")
        for line_no, row in enumerate(reader, start=2):
            src = int(_parse_float(row["src"], lines_path, line_no, "src"))
            dst = int(_parse_float(row["dst"], lines_path, line_no, "dst"))
            for endpoint in (src, dst):
                if endpoint not in buses:
                    raise UnresolvedReferenceError(
                        f"{lines_path}:{line_no}: unknown bus {endpoint}")
            limit = GRID_ANGLE_LIMIT
            if row.get("angle_limit"):
                limit = _parse_float(row["angle_limit"], lines_path, line_no, "angle_limit")
            lines.append(Line(src=src, dst=dst,
                              admittance=_parse_float(row["admittance"], lines_path,
                                                      line_no, "admittance"),
                              angle_limit=limit))

    if generators_path is not None:
        gens_by_bus: dict[int, list[Generator]] = {}
        with open(generators_path, newline="") as fh:
            reader = csv.DictReader(fh)
            need = {"bus", "c1", "c2", "p_min", "p_max"}
            if reader.fieldnames is None or not need <= set(reader.fieldnames):
                raise ParseError(
                    f"{generators_path}: header must contain {sorted(need)}")
            for line_no, row in enumerate(reader, start=2):
                idx = int(_parse_float(row["bus"], generators_path, line_no, "bus"))
                if idx not in buses:
                    raise UnresolvedReferenceError(
                        f"{generators_path}:{line_no}: unknown bus {idx}")
                gens_by_bus.setdefault(idx, []).append(Generator(
                    c1=_parse_float(row["c1"], generators_path, line_no, "c1"),
                    c2=_parse_float(row["c2"], generators_path, line_no, "c2"),
                    p_min=_parse_float(row["p_min"], generators_path, line_no, "p_min"),
                    p_max=_parse_float(row["p_max"], generators_path, line_no, "p_max")))
        for idx, gens in gens_by_bus.items():
            buses[idx].generators = tuple(gens)

    network = PowerNetwork(buses=[buses[i] for i in ordered], lines=lines, beta=beta)
    network.validate()
    return network
