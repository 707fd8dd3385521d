"""Minimal token-based process engine with flow-control gateways.

Supports exclusive-OR, inclusive-OR, and parallel-AND gateways in split and
merge roles over acyclic graphs. Controller decision logic ships as
declarative ``.process`` documents (YAML) executed by this engine; actions
are bound to host-registered callbacks, and wait-for-feedback loops are
realized by the host re-invoking a blocked instance once it has supplied the
missing condition keys.

Gateway semantics:

  split   XOR  exactly one true-condition edge activates (optional declared
               default edge when every condition is false); zero or multiple
               true conditions is a fault.
          OR   every true-condition edge activates; zero is a fault.
          AND  every edge activates, conditions ignored.

  merge   XOR  fires on each single arrival, no synchronization.
          OR   fires once the arrivals equal exactly the branches the paired
               upstream split activated.
          AND  fires once every declared incoming edge has arrived.

Inclusive-OR merges rely on upstream-activation bookkeeping: at parse time
each OR/AND split is paired with the unique merge its branches converge on,
and at runtime the split records which merge inputs will receive a token.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Optional

import yaml

logger = logging.getLogger(__name__)


class GatewayKind(str, Enum):
    XOR = "xor"
    OR = "or"
    AND = "and"


class Direction(str, Enum):
    SPLIT = "split"
    MERGE = "merge"


class GatewayFault(Exception):
    """A gateway received conditions or arrivals its semantics forbid."""


class ProcessParseError(Exception):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


@dataclass(frozen=True)
class Edge:
    frm: str
    to: str
    when: Optional[str] = None
    is_default: bool = False

    @property
    def key(self) -> str:
        return f"{self.frm}->{self.to}"


@dataclass(frozen=True)
class Node:
    id: str
    action: Optional[str] = None
    gateway: Optional[GatewayKind] = None
    direction: Optional[Direction] = None

    @property
    def is_gateway(self) -> bool:
        return self.gateway is not None


@dataclass(frozen=True)
class MergePairing:
    """Which merge a split converges on, and which merge input each branch feeds."""

    merge_id: str
    entry_by_branch: Mapping[str, str]  # split outgoing edge key -> merge incoming edge key


@dataclass
class ProcessDefinition:
    id: str
    nodes: dict[str, Node]
    edges: list[Edge]
    start: str
    outgoing: dict[str, list[Edge]] = field(default_factory=dict)
    incoming: dict[str, list[Edge]] = field(default_factory=dict)
    pairings: dict[str, MergePairing] = field(default_factory=dict)

    @property
    def end_nodes(self) -> list[str]:
        return [n for n in self.nodes if not self.outgoing.get(n)]

    def __eq__(self, other):
        if not isinstance(other, ProcessDefinition):
            return NotImplemented
        return (
            self.id == other.id
            and self.nodes == other.nodes
            and self.edges == other.edges
            and self.start == other.start
        )


def split(
    kind: GatewayKind,
    conditions: list[tuple[str, bool]],
    default_edge: Optional[str] = None,
) -> set[str]:
    """Decide which outgoing edges a split gateway activates."""
    edges = [e for e, _ in conditions]
    if kind is GatewayKind.AND:
        activated = set(edges)
        if default_edge is not None:
            activated.add(default_edge)
        return activated
    true_edges = [e for e, c in conditions if c]
    if kind is GatewayKind.XOR:
        if len(true_edges) == 1:
            return {true_edges[0]}
        if not true_edges and default_edge is not None:
            return {default_edge}
        raise GatewayFault(
            f"exclusive split needs exactly one true condition, got {len(true_edges)}"
        )
    if not true_edges:
        raise GatewayFault("inclusive split with no true condition")
    return set(true_edges)


def merge_fire(kind: GatewayKind, arrived: set[str], activated: set[str]) -> bool:
    """Decide whether a merge gateway fires given current arrivals.

    ``activated`` is the set of incoming edges that will eventually receive a
    token: for AND (and XOR) merges that is every declared incoming edge; for
    OR merges it is the branch set recorded by the paired upstream split.
    """
    if not arrived <= activated:
        raise GatewayFault(
            f"arrival on a non-activated merge input: {sorted(arrived - activated)}"
        )
    if kind is GatewayKind.XOR:
        return len(arrived) >= 1
    return len(arrived) > 0 and arrived == activated


@dataclass
class Token:
    node: str
    via: Optional[str]  # edge key the token travelled, None at start
    seq: int


class InstanceStatus(str, Enum):
    RUNNING = "running"
    COMPLETED = "completed"
    FAULTED = "faulted"


@dataclass
class StepResult:
    moved: bool
    actions: list[str]


class ProcessInstance:
    """One run of a process definition. The host serializes steps."""

    def __init__(self, definition: ProcessDefinition):
        self.definition = definition
        self._seq = 0
        self.tokens: list[Token] = [Token(definition.start, None, self._next_seq())]
        self.merge_arrived: dict[str, set[str]] = {}
        self.merge_activated: dict[str, set[str]] = {}
        self.status = InstanceStatus.RUNNING
        self.fault: Optional[str] = None

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    @property
    def waiting(self) -> bool:
        return self.status is InstanceStatus.RUNNING and bool(self.tokens)

    def step(self, env: Mapping[str, bool]) -> StepResult:
        """Advance every ready token one node; blocked tokens stay in place.

        Tokens are processed in (node id, arrival order) for determinism.
        Raises GatewayFault and marks the instance faulted on gateway misuse.
        """
        if self.status is not InstanceStatus.RUNNING:
            return StepResult(False, [])
        ready = sorted(self.tokens, key=lambda tok: (tok.node, tok.seq))
        next_tokens: list[Token] = []
        actions: list[str] = []
        moved = False
        try:
            for token in ready:
                node = self.definition.nodes[token.node]
                if not node.is_gateway:
                    moved = True
                    if node.action is not None:
                        actions.append(node.action)
                    out = self.definition.outgoing.get(node.id, [])
                    if out:
                        next_tokens.append(Token(out[0].to, out[0].key, self._next_seq()))
                elif node.direction is Direction.SPLIT:
                    advanced = self._step_split(node, token, env, next_tokens)
                    moved = moved or advanced
                else:
                    self._step_merge(node, token, next_tokens)
                    moved = True
        except GatewayFault as fault:
            self.status = InstanceStatus.FAULTED
            self.fault = str(fault)
            raise
        self.tokens = next_tokens
        if not self.tokens:
            if any(self.merge_arrived.values()):
                self.status = InstanceStatus.FAULTED
                self.fault = "merge starved: arrivals pending with no live tokens"
                raise GatewayFault(self.fault)
            self.status = InstanceStatus.COMPLETED
        return StepResult(moved, actions)

    def _step_split(
        self,
        node: Node,
        token: Token,
        env: Mapping[str, bool],
        next_tokens: list[Token],
    ) -> bool:
        out = self.definition.outgoing[node.id]
        conditional = [e for e in out if not e.is_default]
        default = next((e for e in out if e.is_default), None)
        if node.gateway is not GatewayKind.AND:
            if any(e.when not in env for e in conditional):
                next_tokens.append(token)  # blocked until the host supplies the keys
                return False
        conditions = [(e.key, bool(env.get(e.when, False))) for e in conditional]
        activated = split(
            node.gateway, conditions, default.key if default is not None else None
        )
        by_key = {e.key: e for e in out}
        for edge_key in sorted(activated):
            edge = by_key[edge_key]
            next_tokens.append(Token(edge.to, edge.key, self._next_seq()))
        pairing = self.definition.pairings.get(node.id)
        if pairing is not None:
            self.merge_activated[pairing.merge_id] = {
                pairing.entry_by_branch[k] for k in activated
            }
        return True

    def _step_merge(self, node: Node, token: Token, next_tokens: list[Token]) -> None:
        out = self.definition.outgoing.get(node.id, [])
        declared = {e.key for e in self.definition.incoming[node.id]}
        if node.gateway is GatewayKind.XOR:
            if merge_fire(GatewayKind.XOR, {token.via}, declared) and out:
                next_tokens.append(Token(out[0].to, out[0].key, self._next_seq()))
            return
        arrived = self.merge_arrived.setdefault(node.id, set())
        if node.gateway is GatewayKind.OR:
            activated = self.merge_activated.get(node.id)
            if activated is None:
                raise GatewayFault(
                    f"inclusive merge {node.id!r} reached before its split recorded activation"
                )
        else:
            activated = declared
        if token.via in arrived:
            raise GatewayFault(f"duplicate arrival on merge input {token.via!r}")
        arrived.add(token.via)
        if merge_fire(node.gateway, arrived, activated):
            self.merge_arrived[node.id] = set()
            self.merge_activated.pop(node.id, None)
            if out:
                next_tokens.append(Token(out[0].to, out[0].key, self._next_seq()))


def step_instance(instance: ProcessInstance, env: Mapping[str, bool]) -> tuple[ProcessInstance, list[str]]:
    """Contract-shaped wrapper over ProcessInstance.step."""
    result = instance.step(env)
    return instance, result.actions


def run_to_quiescence(
    instance: ProcessInstance,
    env: Mapping[str, bool],
    handlers: Mapping[str, Callable[[], None]],
    max_waves: int = 1000,
) -> None:
    """Step and dispatch emitted actions until nothing moves.

    Handlers may mutate ``env``; the next wave sees the updates, which is how
    actions feed gateway conditions. The instance is left completed, faulted,
    or waiting for more condition keys.
    """
    for _ in range(max_waves):
        result = instance.step(env)
        for key in result.actions:
            if key not in handlers:
                raise KeyError(f"no handler bound for action {key!r}")
            handlers[key]()
        if not result.moved and not result.actions:
            return
        if instance.status is not InstanceStatus.RUNNING:
            return
    raise GatewayFault(f"process {instance.definition.id!r} did not quiesce in {max_waves} waves")


# ---------------------------------------------------------------------------
# Parsing / validation / serialization
# ---------------------------------------------------------------------------

_GATEWAY_KINDS = {k.value: k for k in GatewayKind}
_DIRECTIONS = {d.value: d for d in Direction}


def parse_process(document: str | Mapping) -> ProcessDefinition:
    """Parse a process document, raising ProcessParseError listing every violation."""
    if isinstance(document, str):
        try:
            raw = yaml.safe_load(document)
        except yaml.YAMLError as exc:
            raise ProcessParseError([f"document is not well-formed YAML: {exc}"]) from exc
    else:
        raw = dict(document)
    if not isinstance(raw, dict):
        raise ProcessParseError(["document root must be a mapping"])

    violations: list[str] = []
    proc_id = raw.get("id")
    if not isinstance(proc_id, str) or not proc_id:
        violations.append("missing or invalid top-level 'id'")
        proc_id = "?"
    start = raw.get("start")
    if not isinstance(start, str) or not start:
        violations.append("missing or invalid top-level 'start'")

    nodes: dict[str, Node] = {}
    for entry in raw.get("nodes") or []:
        if not isinstance(entry, dict) or not isinstance(entry.get("id"), str):
            violations.append(f"node entry without an id: {entry!r}")
            continue
        node_id = entry["id"]
        if node_id in nodes:
            violations.append(f"duplicate node id {node_id!r}")
            continue
        has_action = "action" in entry
        has_gateway = "gateway" in entry
        if has_action == has_gateway:
            violations.append(f"node {node_id!r} must declare exactly one of action/gateway")
            continue
        if has_action:
            nodes[node_id] = Node(node_id, action=entry["action"])
        else:
            kind = _GATEWAY_KINDS.get(str(entry.get("gateway")).lower())
            direction = _DIRECTIONS.get(str(entry.get("direction")).lower())
            if kind is None:
                violations.append(f"node {node_id!r} has unknown gateway kind {entry.get('gateway')!r}")
                continue
            if direction is None:
                violations.append(f"gateway {node_id!r} must declare direction split or merge")
                continue
            nodes[node_id] = Node(node_id, gateway=kind, direction=direction)

    edges: list[Edge] = []
    seen_edges: set[tuple[str, str]] = set()
    for entry in raw.get("edges") or []:
        if isinstance(entry, (list, tuple)) and len(entry) in (2, 3):
            frm, to = entry[0], entry[1]
            when = entry[2] if len(entry) == 3 else None
            edge = Edge(str(frm), str(to), when=when)
        elif isinstance(entry, dict) and "from" in entry and "to" in entry:
            edge = Edge(
                str(entry["from"]),
                str(entry["to"]),
                when=entry.get("when"),
                is_default=bool(entry.get("default", False)),
            )
        else:
            violations.append(f"malformed edge entry: {entry!r}")
            continue
        for endpoint in (edge.frm, edge.to):
            if endpoint not in nodes:
                violations.append(f"edge {edge.key!r} references undeclared node {endpoint!r}")
        if (edge.frm, edge.to) in seen_edges:
            violations.append(f"duplicate edge {edge.key!r}")
            continue
        seen_edges.add((edge.frm, edge.to))
        edges.append(edge)

    if violations:
        raise ProcessParseError(violations)

    definition = ProcessDefinition(id=proc_id, nodes=nodes, edges=edges, start=start)
    _index(definition)
    violations = validate_definition(definition)
    if violations:
        raise ProcessParseError(violations)
    _pair_splits(definition, violations)
    if violations:
        raise ProcessParseError(violations)
    return definition


def _index(definition: ProcessDefinition) -> None:
    definition.outgoing = {n: [] for n in definition.nodes}
    definition.incoming = {n: [] for n in definition.nodes}
    for edge in definition.edges:
        definition.outgoing[edge.frm].append(edge)
        definition.incoming[edge.to].append(edge)


def validate_definition(definition: ProcessDefinition) -> list[str]:
    """Structural checks; returns the complete violation list."""
    violations: list[str] = []
    if definition.start not in definition.nodes:
        violations.append(f"start node {definition.start!r} is not declared")
        return violations

    reachable = {definition.start}
    frontier = [definition.start]
    while frontier:
        current = frontier.pop()
        for edge in definition.outgoing.get(current, []):
            if edge.to not in reachable:
                reachable.add(edge.to)
                frontier.append(edge.to)
    for node_id in definition.nodes:
        if node_id not in reachable:
            violations.append(f"node {node_id!r} is unreachable from start")

    # cycle detection (engine only supports acyclic graphs)
    state: dict[str, int] = {}

    def visit(node_id: str) -> bool:
        state[node_id] = 1
        for edge in definition.outgoing.get(node_id, []):
            mark = state.get(edge.to, 0)
            if mark == 1:
                return True
            if mark == 0 and visit(edge.to):
                return True
        state[node_id] = 2
        return False

    if visit(definition.start):
        violations.append("graph contains a cycle")

    for node in definition.nodes.values():
        out = definition.outgoing.get(node.id, [])
        inc = definition.incoming.get(node.id, [])
        if not node.is_gateway:
            if len(out) > 1:
                violations.append(f"action node {node.id!r} has {len(out)} outgoing edges")
            continue
        if node.direction is Direction.SPLIT:
            if len(out) < 2:
                violations.append(f"split gateway {node.id!r} has {len(out)} outgoing edge(s), needs >=2")
            defaults = [e for e in out if e.is_default]
            if len(defaults) > 1:
                violations.append(f"split gateway {node.id!r} declares multiple default edges")
            if defaults and node.gateway is not GatewayKind.XOR:
                violations.append(f"default edge on non-exclusive split {node.id!r}")
            if node.gateway in (GatewayKind.XOR, GatewayKind.OR):
                for edge in out:
                    if not edge.is_default and edge.when is None:
                        violations.append(f"conditional split edge {edge.key!r} is missing a condition key")
            else:
                for edge in out:
                    if edge.when is not None:
                        violations.append(f"condition on parallel split edge {edge.key!r} is meaningless")
        else:
            if len(inc) < 2:
                violations.append(f"merge gateway {node.id!r} has {len(inc)} incoming edge(s), needs >=2")
            if len(out) > 1:
                violations.append(f"merge gateway {node.id!r} has {len(out)} outgoing edges, needs <=1")
    return violations


def _pair_splits(definition: ProcessDefinition, violations: list[str]) -> None:
    """Pair each OR/AND split with the merge its branches converge on."""
    for node in definition.nodes.values():
        if not node.is_gateway or node.direction is not Direction.SPLIT:
            continue
        if node.gateway is GatewayKind.XOR:
            continue
        entry_by_branch: dict[str, str] = {}
        merge_ids: set[str] = set()
        for branch in definition.outgoing[node.id]:
            entry = _walk_to_merge(definition, branch, violations, origin=node.id)
            if entry is None:
                return
            merge_id, entry_edge = entry
            merge_ids.add(merge_id)
            entry_by_branch[branch.key] = entry_edge
        if len(merge_ids) != 1:
            violations.append(
                f"branches of split {node.id!r} converge on multiple merges {sorted(merge_ids)}"
            )
            return
        merge_id = merge_ids.pop()
        if len(set(entry_by_branch.values())) != len(entry_by_branch):
            violations.append(f"two branches of split {node.id!r} share a merge input")
            return
        definition.pairings[node.id] = MergePairing(merge_id, entry_by_branch)


def _walk_to_merge(
    definition: ProcessDefinition,
    first_edge: Edge,
    violations: list[str],
    origin: str,
) -> Optional[tuple[str, str]]:
    """Follow a split branch to the merge it enters, skipping balanced nested regions."""
    edge = first_edge
    depth = 0
    for _ in range(len(definition.edges) + 1):
        node = definition.nodes[edge.to]
        if node.is_gateway and node.direction is Direction.MERGE:
            if depth == 0:
                return node.id, edge.key
            depth -= 1
            out = definition.outgoing.get(node.id, [])
        elif node.is_gateway:
            depth += 1
            out = definition.outgoing.get(node.id, [])
        else:
            out = definition.outgoing.get(node.id, [])
        if not out:
            violations.append(
                f"branch {first_edge.key!r} of split {origin!r} ends before reaching a merge"
            )
            return None
        edge = out[0]
    violations.append(f"branch walk from split {origin!r} did not terminate")
    return None


def serialize_process(definition: ProcessDefinition) -> dict:
    """Inverse of parse_process for valid definitions."""
    nodes = []
    for node in definition.nodes.values():
        if node.is_gateway:
            nodes.append(
                {"id": node.id, "gateway": node.gateway.value, "direction": node.direction.value}
            )
        else:
            nodes.append({"id": node.id, "action": node.action})
    edges = []
    for edge in definition.edges:
        entry: dict = {"from": edge.frm, "to": edge.to}
        if edge.when is not None:
            entry["when"] = edge.when
        if edge.is_default:
            entry["default"] = True
        edges.append(entry)
    return {"id": definition.id, "start": definition.start, "nodes": nodes, "edges": edges}


def load_controller_process(name: str) -> ProcessDefinition:
    """Load one of the packaged controller process documents by file stem."""
    from importlib import resources

    text = resources.files("mrsim").joinpath(f"processes/{name}.process").read_text("utf-8")
    return parse_process(text)
