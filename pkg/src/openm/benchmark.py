"""Network-flow benchmark: a radial 15-node / 30-arc network with a single
source at the root, node-balance equality constraints and exponential arc
costs whose parameters are redrawn every round.

Randomness uses numpy's counter-based ``Philox`` bit generator. Streams are
keyed through ``SeedSequence(seed, spawn_key=...)``:

* ``spawn_key=(0,)`` builds the network;
* ``spawn_key=(1, t)`` draws round ``t``: first one ``zeta ~ U[0, 5]`` per
  load node (ascending node id), then one ``eta ~ U[0, 10]`` per arc, then
  one ``gamma ~ U[0, 10]`` per arc (ascending arc id).

So ``(seed, t)`` alone determines a round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import AffineEqualityConstraint, ProblemSequence, RoundProblem
from .errors import DimensionMismatch, DisconnectedNetwork

RNG_NAME = "numpy.random.Philox via SeedSequence(seed, spawn_key)"
DEFAULT_EPSILON = 1e-3
NODE_COUNT = 15
ARC_COUNT = 30
MAX_DEPTH = 2


@dataclass(frozen=True)
class NetworkSpec:
    node_count: int
    arcs: tuple[tuple[int, int], ...]
    source: int = 0

    def __post_init__(self):
        arcs = tuple((int(a), int(b)) for a, b in self.arcs)
        object.__setattr__(self, "arcs", arcs)
        for tail, head in arcs:
            if not (0 <= tail < self.node_count and 0 <= head < self.node_count) or tail == head:
                raise ValueError(f"invalid arc ({tail}, {head})")
        if not 0 <= self.source < self.node_count:
            raise ValueError(f"source {self.source} out of range")

    @property
    def arc_count(self) -> int:
        return len(self.arcs)

    @property
    def load_nodes(self) -> list[int]:
        return [i for i in range(self.node_count) if i != self.source]

    def is_connected(self) -> bool:
        adj = {i: set() for i in range(self.node_count)}
        for a, b in self.arcs:
            adj[a].add(b)
            adj[b].add(a)
        seen, stack = {self.source}, [self.source]
        while stack:
            for j in adj[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == self.node_count


@dataclass(frozen=True)
class RoundParams:
    """Sampled data of one round: per-load-node demand and per-arc cost
    parameters ``alpha`` (scale) and ``beta_cost`` (exponent rate)."""

    t: int
    loads: np.ndarray
    alpha: np.ndarray
    beta_cost: np.ndarray


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def round_rng(seed: int, t: int) -> np.random.Generator:
    return _rng(seed, 1, t)


def generate_network(seed: int, node_count: int = NODE_COUNT, arc_count: int = ARC_COUNT,
                     max_depth: int = MAX_DEPTH) -> NetworkSpec:
    """Random radial network rooted at node 0, oriented away from the root.

    Nodes ``1, 2, ...`` attach in turn to a uniformly chosen earlier node of
    depth below ``max_depth``. The remaining arcs are parallel copies of tree
    arcs, each placed on the tree arc whose subtree size per existing copy is
    largest (lowest arc id on ties), so heavily loaded feeders get the extra
    capacity.

    Both rules keep per-arc flows moderate. Loads of 10 or more per node with
    costs ``exp(beta x)``, ``beta`` up to 12, overflow double precision once
    an arc carries about 60 units.
    """
    if arc_count < node_count - 1:
        raise ValueError("a connected network needs at least node_count - 1 arcs")
    if max_depth < 1:
        raise ValueError("max_depth must be at least 1")
    rng = _rng(seed, 0)
    parent, depth = [-1], [0]
    for i in range(1, node_count):
        eligible = [j for j in range(i) if depth[j] < max_depth]
        p = eligible[int(rng.integers(0, len(eligible)))]
        parent.append(p)
        depth.append(depth[p] + 1)
    tree = [(parent[i], i) for i in range(1, node_count)]
    subtree = np.ones(node_count)
    for i in range(node_count - 1, 0, -1):
        subtree[parent[i]] += subtree[i]
    copies = np.ones(len(tree))
    extra = []
    for _ in range(arc_count - len(tree)):
        k = int(np.argmax(subtree[1:] / copies))
        copies[k] += 1
        extra.append(tree[k])
    return NetworkSpec(node_count, tuple(tree + extra), source=0)


def incidence_matrix(net: NetworkSpec, drop_source: bool = True) -> np.ndarray:
    """Node-arc matrix: +1 where the arc enters the node, -1 where it leaves."""
    A = np.zeros((net.node_count, net.arc_count))
    for l, (tail, head) in enumerate(net.arcs):
        A[head, l] += 1.0
        A[tail, l] -= 1.0
    if drop_source:
        A = np.delete(A, net.source, axis=0)
    return A


def incidence_constraint(net: NetworkSpec, loads) -> AffineEqualityConstraint:
    """Node balance ``A x = loads`` over the non-source nodes."""
    if not net.is_connected():
        raise DisconnectedNetwork("every node must be reachable from the source")
    loads = np.asarray(loads, dtype=float)
    if loads.shape != (net.node_count - 1,):
        raise DimensionMismatch(f"need {net.node_count - 1} loads, got shape {loads.shape}")
    return AffineEqualityConstraint(incidence_matrix(net), loads)


class SmoothedExpCost:
    """``sum_i alpha_i exp(beta_i s(x_i))`` with ``s(x) = sqrt(x^2 + eps^2)``.

    Separable, so the Hessian is diagonal.
    """

    def __init__(self, alpha, beta_cost, epsilon: float = DEFAULT_EPSILON):
        if not epsilon > 0:
            raise ValueError("epsilon must be positive")
        self.alpha = np.asarray(alpha, dtype=float)
        self.beta_cost = np.asarray(beta_cost, dtype=float)
        self.epsilon = float(epsilon)
        self.dim = self.alpha.shape[0]

    def _terms(self, x):
        x = np.asarray(x, dtype=float)
        s = np.sqrt(x * x + self.epsilon**2)
        e = self.alpha * np.exp(self.beta_cost * s)
        return x, s, e

    def value(self, x):
        return float(self._terms(x)[2].sum())

    def gradient(self, x):
        x, s, e = self._terms(x)
        return e * self.beta_cost * x / s

    def hessian_diagonal(self, x):
        x, s, e = self._terms(x)
        ds = x / s
        d2s = self.epsilon**2 / s**3
        return e * self.beta_cost * (self.beta_cost * ds * ds + d2s)

    def hessian(self, x):
        return np.diag(self.hessian_diagonal(x))


def draw_round_params(net: NetworkSpec, t: int, rng: np.random.Generator) -> RoundParams:
    if t < 1:
        raise ValueError("rounds start at t = 1")
    decay = 1.0 / math.sqrt(t)
    zeta = rng.uniform(0.0, 5.0, size=net.node_count - 1)
    eta = rng.uniform(0.0, 10.0, size=net.arc_count)
    gamma_cost = rng.uniform(0.0, 10.0, size=net.arc_count)
    return RoundParams(
        t=t,
        loads=zeta * decay + 10.0,
        alpha=eta * decay + 1.0,
        beta_cost=gamma_cost * decay + 2.0,
    )


def round_from_params(net: NetworkSpec, params: RoundParams, epsilon: float = DEFAULT_EPSILON,
                      constraint: AffineEqualityConstraint | None = None) -> RoundProblem:
    if constraint is None:
        constraint = incidence_constraint(net, params.loads)
    return RoundProblem(params.t, SmoothedExpCost(params.alpha, params.beta_cost, epsilon), constraint)


def sample_round(net: NetworkSpec, t: int, rng: np.random.Generator,
                 epsilon: float = DEFAULT_EPSILON) -> RoundProblem:
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return round_from_params(net, draw_round_params(net, t, rng), epsilon)


@dataclass
class BenchmarkInstance:
    network: NetworkSpec
    params: list[RoundParams]
    problems: ProblemSequence
    epsilon: float


def build_instance(seed: int, horizon: int, epsilon: float = DEFAULT_EPSILON,
                   static_loads: bool = False) -> BenchmarkInstance:
    """Network plus ``horizon`` sampled rounds (t = 1..horizon).

    With ``static_loads`` the loads drawn for round 1 are kept for every round
    (costs still vary), giving a fixed constraint on which OEN-M applies.
    """
    net = generate_network(seed)
    params = [draw_round_params(net, t, round_rng(seed, t)) for t in range(1, horizon + 1)]
    if static_loads:
        params = [RoundParams(p.t, params[0].loads, p.alpha, p.beta_cost) for p in params]
    return instance_from_params(net, params, epsilon)


def instance_from_params(net: NetworkSpec, params: list[RoundParams], epsilon: float) -> BenchmarkInstance:
    rounds = []
    shared = None
    for p in params:
        # reuse the constraint object when loads repeat so OEN-M sees an identical (A, b)
        if shared is None or not np.array_equal(shared.b, p.loads):
            shared = incidence_constraint(net, p.loads)
        rounds.append(round_from_params(net, p, epsilon, shared))
    return BenchmarkInstance(net, params, ProblemSequence(rounds), epsilon)


# --------------------------------------------------------------------------
# plain-text replay format (tab separated, '#' header lines)


def write_network(path, net: NetworkSpec) -> None:
    lines = [
        "# openm network v1",
        f"# node_count\t{net.node_count}",
        f"# source\t{net.source}",
        "arc\ttail\thead",
    ]
    lines += [f"{l}\t{a}\t{b}" for l, (a, b) in enumerate(net.arcs)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_network(path) -> NetworkSpec:
    meta, arcs = {}, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            parts = line[1:].strip().split("\t")
            if len(parts) == 2:
                meta[parts[0]] = int(parts[1])
            continue
        if not line.strip() or line.startswith("arc\t"):
            continue
        _, a, b = line.split("\t")
        arcs.append((int(a), int(b)))
    return NetworkSpec(meta["node_count"], tuple(arcs), meta.get("source", 0))


def write_round_params(path, net: NetworkSpec, params: list[RoundParams]) -> None:
    """One row per (round, kind, index): loads are indexed by node id, cost
    parameters by arc id. Values use 17 significant digits (exact round-trip)."""
    lines = ["# openm rounds v1", "t\tkind\tindex\tvalue"]
    nodes = net.load_nodes
    for p in params:
        lines += [f"{p.t}\tload\t{i}\t{v:.17g}" for i, v in zip(nodes, p.loads)]
        lines += [f"{p.t}\talpha\t{l}\t{v:.17g}" for l, v in enumerate(p.alpha)]
        lines += [f"{p.t}\tbeta_cost\t{l}\t{v:.17g}" for l, v in enumerate(p.beta_cost)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_round_params(path, net: NetworkSpec) -> list[RoundParams]:
    node_pos = {node: k for k, node in enumerate(net.load_nodes)}
    rows: dict[int, dict[str, np.ndarray]] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#") or line.startswith("t\t"):
            continue
        t, kind, idx, value = line.split("\t")
        t, idx = int(t), int(idx)
        r = rows.setdefault(t, {
            "load": np.full(net.node_count - 1, np.nan),
            "alpha": np.full(net.arc_count, np.nan),
            "beta_cost": np.full(net.arc_count, np.nan),
        })
        pos = node_pos[idx] if kind == "load" else idx
        r[kind][pos] = float(value)
    out = []
    for t in sorted(rows):
        r = rows[t]
        if any(np.isnan(v).any() for v in r.values()):
            raise ValueError(f"round {t} is incomplete")
        out.append(RoundParams(t, r["load"], r["alpha"], r["beta_cost"]))
    return out
