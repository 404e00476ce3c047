import hashlib
import json
import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from . import nodesets
from .config import rank_name_matches
from .nodesets import NodeSet

logger = logging.getLogger(__name__)


class TaxonomyError(ValueError):
    pass


class TaxonomyDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    nodes: list[str]
    edges: list[tuple[str, str]] = []

    @field_validator("nodes")
    @classmethod
    def nodes_not_empty(cls, value):
        if not value:
            raise ValueError("node list is empty")
        for position, name in enumerate(value):
            if not name.strip():
                raise ValueError(f"node name at position {position} is empty")
        return value


@dataclass(frozen=True)
class Node:
    id: int
    name: str


@dataclass(frozen=True)
class Taxonomy:
    names: tuple[str, ...]
    children: tuple[tuple[int, ...], ...]
    parents: tuple[tuple[int, ...], ...]
    root: int
    descendants: tuple[NodeSet, ...]
    ancestors: tuple[NodeSet, ...]
    depths: tuple[int, ...]
    fingerprint: str
    index: dict[str, int] = field(repr=False, compare=False)
    leaves: NodeSet = field(init=False)
    leaf_indices: tuple[int, ...] = field(init=False)
    leaf_covers: tuple[NodeSet, ...] = field(init=False, repr=False)
    leaf_columns: tuple[np.ndarray, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        leaves = nodesets.from_indices(i for i, kids in enumerate(self.children) if not kids)
        leaf_indices = nodesets.to_indices(leaves)
        position = {node: column for column, node in enumerate(leaf_indices)}
        covers = tuple(
            (self.descendants[v] & leaves) | (nodesets.bit(v) & leaves)
            for v in range(len(self.names))
        )
        columns = []
        for cover in covers:
            cols = np.fromiter(
                (position[w] for w in nodesets.iter_indices(cover)), dtype=np.intp
            )
            cols.setflags(write=False)
            columns.append(cols)
        object.__setattr__(self, "leaves", leaves)
        object.__setattr__(self, "leaf_indices", leaf_indices)
        object.__setattr__(self, "leaf_covers", covers)
        object.__setattr__(self, "leaf_columns", tuple(columns))

    @property
    def size(self) -> int:
        return len(self.names)

    @property
    def all_nodes(self) -> NodeSet:
        return (1 << len(self.names)) - 1

    @property
    def depth(self) -> int:
        return max(self.depths)

    @property
    def nodes(self) -> tuple[Node, ...]:
        return tuple(Node(i, name) for i, name in enumerate(self.names))

    @property
    def leaf_names(self) -> tuple[str, ...]:
        return tuple(self.names[i] for i in self.leaf_indices)

    @property
    def internal_indices(self) -> tuple[int, ...]:
        return tuple(i for i, kids in enumerate(self.children) if kids)

    def is_leaf(self, v: int) -> bool:
        return not self.children[v]

    def is_ancestor(self, a: int, v: int) -> bool:
        return nodesets.contains(self.descendants[a], v)

    def node_id(self, name: str) -> int:
        try:
            return self.index[name]
        except KeyError:
            raise TaxonomyError(_unknown_name_message("node", name, self.names)) from None

    def leaf_id(self, name: str) -> int:
        v = self.node_id(name)
        if not self.is_leaf(v):
            raise TaxonomyError(f"Node '{name}' is not a leaf")
        return v

    def names_of(self, mask: NodeSet) -> list[str]:
        return [self.names[i] for i in nodesets.iter_indices(mask)]

    def mask_of(self, names: Iterable[str]) -> NodeSet:
        return nodesets.from_indices(self.node_id(name) for name in names)

    def check_range(self, mask: NodeSet):
        if mask < 0 or mask >> len(self.names):
            raise TaxonomyError(
                f"Node set references indices outside [0, {len(self.names)})"
            )

    def to_document(self) -> dict:
        return {
            "nodes": list(self.names),
            "edges": [
                [self.names[p], self.names[c]]
                for p, kids in enumerate(self.children)
                for c in kids
            ],
        }


def _unknown_name_message(kind, name, candidates):
    message = f"Unknown {kind} '{name}'"
    matches = rank_name_matches(name, candidates, limit=3)
    if matches:
        message += f" (closest: {', '.join(matches)})"
    return message


def taxonomy_fingerprint(names, edges) -> str:
    canonical = json.dumps(
        {"nodes": list(names), "edges": sorted([list(e) for e in edges])},
        separators=(",", ":"),
        ensure_ascii=False,
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_taxonomy(names: Iterable[str], edges: Iterable[tuple[str, str]]) -> Taxonomy:
    names = tuple(names)
    if not names:
        raise TaxonomyError("Taxonomy has an empty node list")
    index = {}
    for position, name in enumerate(names):
        if name in index:
            raise TaxonomyError(
                f"Duplicate node name '{name}' at positions {index[name]} and {position}"
            )
        index[name] = position

    graph = nx.DiGraph()
    graph.add_nodes_from(range(len(names)))
    edge_list = []
    for parent, child in edges:
        for endpoint in (parent, child):
            if endpoint not in index:
                raise TaxonomyError(
                    f"Edge [{parent}, {child}]: "
                    + _unknown_name_message("node", endpoint, names)
                )
        if parent == child:
            raise TaxonomyError(f"Cycle detected: {parent} -> {child}")
        if graph.has_edge(index[parent], index[child]):
            logger.debug("build_taxonomy: duplicate edge %s -> %s ignored", parent, child)
            continue
        graph.add_edge(index[parent], index[child])
        edge_list.append((parent, child))

    if not nx.is_directed_acyclic_graph(graph):
        cycle = nx.find_cycle(graph)
        path = " -> ".join(names[u] for u, _ in cycle) + f" -> {names[cycle[0][0]]}"
        raise TaxonomyError(f"Cycle detected: {path}")

    roots = [v for v in range(len(names)) if graph.in_degree(v) == 0]
    if len(roots) != 1:
        listed = ", ".join(names[v] for v in roots)
        raise TaxonomyError(f"Taxonomy must have exactly one root, found {len(roots)}: {listed}")
    root = roots[0]

    order = list(nx.topological_sort(graph))
    children = tuple(tuple(sorted(graph.successors(v))) for v in range(len(names)))
    parents = tuple(tuple(sorted(graph.predecessors(v))) for v in range(len(names)))

    descendants = [0] * len(names)
    for v in reversed(order):
        mask = 0
        for c in children[v]:
            mask |= (1 << c) | descendants[c]
        descendants[v] = mask

    ancestors = [0] * len(names)
    depths = [0] * len(names)
    for v in order:
        for c in children[v]:
            ancestors[c] |= (1 << v) | ancestors[v]
            depths[c] = max(depths[c], depths[v] + 1)

    taxonomy = Taxonomy(
        names=names,
        children=children,
        parents=parents,
        root=root,
        descendants=tuple(descendants),
        ancestors=tuple(ancestors),
        depths=tuple(depths),
        fingerprint=taxonomy_fingerprint(names, edge_list),
        index=index,
    )
    logger.debug(
        "build_taxonomy: nodes=%s leaves=%s depth=%s root=%s",
        taxonomy.size,
        len(taxonomy.leaf_indices),
        taxonomy.depth,
        names[root],
    )
    return taxonomy


def parse_taxonomy(raw: str | bytes | Mapping) -> Taxonomy:
    try:
        if isinstance(raw, Mapping):
            document = TaxonomyDocument.model_validate(raw)
        else:
            document = TaxonomyDocument.model_validate_json(raw)
    except ValidationError as exc:
        raise TaxonomyError(f"Invalid taxonomy document: {exc}") from exc
    return build_taxonomy(document.nodes, document.edges)


def load_taxonomy(path) -> Taxonomy:
    path = Path(path)
    logger.debug("load_taxonomy: path=%s", path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise TaxonomyError(f"Cannot read taxonomy file '{path}': {exc}") from exc
    return parse_taxonomy(raw)


def leaf_cover(t: Taxonomy, s: NodeSet) -> NodeSet:
    t.check_range(s)
    result = 0
    for v in nodesets.iter_indices(s):
        result |= t.leaf_covers[v]
    return result


def lca_set(t: Taxonomy, s: NodeSet) -> NodeSet:
    """Minimal strict common ancestors of ``s``; ``{v}`` for a singleton ``s``."""
    t.check_range(s)
    if not s:
        raise TaxonomyError("LCA of an empty node set is undefined")
    if nodesets.size(s) == 1:
        return s
    common = t.all_nodes
    for v in nodesets.iter_indices(s):
        common &= t.ancestors[v]
    if not common:
        # only possible when the root itself is in s
        return nodesets.bit(t.root)
    result = 0
    for c in nodesets.iter_indices(common):
        if not t.descendants[c] & common:
            result |= 1 << c
    return result


def node_depth(t: Taxonomy, v: int) -> int:
    if not 0 <= v < t.size:
        raise TaxonomyError(f"Node index {v} outside [0, {t.size})")
    return t.depths[v]


def perfect_binary_tree(depth: int) -> Taxonomy:
    if depth < 0:
        raise TaxonomyError("Tree depth must be nonnegative")
    names = ["n0"]
    edges = []
    frontier = ["n0"]
    for _ in range(depth):
        next_frontier = []
        for parent in frontier:
            for _ in range(2):
                child = f"n{len(names)}"
                names.append(child)
                edges.append((parent, child))
                next_frontier.append(child)
        frontier = next_frontier
    return build_taxonomy(names, edges)


def random_dag(n_nodes: int, seed: int, extra_parent_prob: float = 0.2) -> Taxonomy:
    if n_nodes < 1:
        raise TaxonomyError("A taxonomy needs at least one node")
    rng = np.random.default_rng(seed)
    names = [f"v{i}" for i in range(n_nodes)]
    edges = []
    for i in range(1, n_nodes):
        parents = {int(rng.integers(0, i))}
        for p in range(i):
            if rng.random() < extra_parent_prob:
                parents.add(p)
        edges.extend((names[p], names[i]) for p in sorted(parents))
    return build_taxonomy(names, edges)
