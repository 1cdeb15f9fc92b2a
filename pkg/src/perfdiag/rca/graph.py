"""Causal structure discovery: partial-correlation CI test and PC algorithm.

pc_build starts from a complete skeleton, removes edges level by level via
conditional-independence tests, orients v-structures from the recorded
separating sets, then propagates orientations with the Meek rules. Edges
whose direction stays unresolved remain undirected. Every iteration runs
in sorted node-name order so the output is deterministic.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtri

from ..errors import InvalidConfig, SingularSubmatrixWarning, TooFewSamples


@dataclass(frozen=True, eq=False)
class CausalGraph:
    """Partially directed graph: metric nodes plus the anomaly indicator."""

    nodes: tuple[str, ...]
    directed: tuple[tuple[str, str], ...]
    undirected: tuple[tuple[str, str], ...]

    def __post_init__(self):
        nodes = tuple(self.nodes)
        node_set = set(nodes)
        if len(node_set) != len(nodes):
            raise InvalidConfig("duplicate node names")
        directed = tuple(sorted((str(u), str(v)) for u, v in self.directed))
        undirected = tuple(sorted(tuple(sorted((str(a), str(b)))) for a, b in self.undirected))
        for u, v in directed + undirected:
            if u == v:
                raise InvalidConfig(f"self-loop on {u!r}")
            if u not in node_set or v not in node_set:
                raise InvalidConfig(f"edge ({u}, {v}) references unknown node")
        pairs_d = {tuple(sorted(e)) for e in directed}
        if pairs_d & set(undirected):
            raise InvalidConfig("edge appears both directed and undirected")
        if len(pairs_d) != len(directed):
            raise InvalidConfig("edge directed both ways")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "directed", directed)
        object.__setattr__(self, "undirected", undirected)
        if self._has_directed_cycle():
            raise InvalidConfig("directed part contains a cycle")

    def _has_directed_cycle(self) -> bool:
        in_deg = {n: 0 for n in self.nodes}
        children: dict[str, list[str]] = {n: [] for n in self.nodes}
        for u, v in self.directed:
            in_deg[v] += 1
            children[u].append(v)
        queue = sorted(n for n, deg in in_deg.items() if deg == 0)
        seen = 0
        while queue:
            n = queue.pop()
            seen += 1
            for c in children[n]:
                in_deg[c] -= 1
                if in_deg[c] == 0:
                    queue.append(c)
        return seen != len(self.nodes)

    def __eq__(self, other):
        return (
            isinstance(other, CausalGraph)
            and self.nodes == other.nodes
            and self.directed == other.directed
            and self.undirected == other.undirected
        )

    def predecessors(self, node: str) -> tuple[str, ...]:
        """Directed parents plus undirected neighbors, sorted."""
        preds = {u for u, v in self.directed if v == node}
        for a, b in self.undirected:
            if a == node:
                preds.add(b)
            elif b == node:
                preds.add(a)
        return tuple(sorted(preds))

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "directed": [list(e) for e in self.directed],
            "undirected": [list(e) for e in self.undirected],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CausalGraph":
        return cls(
            nodes=tuple(d["nodes"]),
            directed=tuple((u, v) for u, v in d["directed"]),
            undirected=tuple((a, b) for a, b in d["undirected"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"
        )

    @classmethod
    def load(cls, path) -> "CausalGraph":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def edge_list_text(self) -> str:
        lines = [f"{u} -> {v}" for u, v in self.directed]
        lines += [f"{a} -- {b}" for a, b in self.undirected]
        return "\n".join(lines) + ("\n" if lines else "")


def _correlation_matrix(data: np.ndarray) -> np.ndarray:
    centered = data - data.mean(axis=0)
    stds = data.std(axis=0)
    safe = np.where(stds == 0.0, 1.0, stds)
    z = centered / safe
    z[:, stds == 0.0] = 0.0
    corr = (z.T @ z) / data.shape[0]
    np.fill_diagonal(corr, 1.0)
    return corr


def partial_correlation(corr: np.ndarray, i: int, j: int, S: Sequence[int]) -> float:
    """rho(i, j | S) from the inverse of the correlation submatrix."""
    idx = [i, j, *S]
    sub = corr[np.ix_(idx, idx)]
    try:
        prec = np.linalg.inv(sub)
    except np.linalg.LinAlgError:
        warnings.warn(
            f"singular correlation submatrix for ({i}, {j} | {list(S)}); "
            "regularizing with 1e-8 ridge",
            SingularSubmatrixWarning,
        )
        prec = np.linalg.inv(sub + 1e-8 * np.eye(sub.shape[0]))
    denom = prec[0, 0] * prec[1, 1]
    if denom <= 0.0:
        return 0.0
    return float(np.clip(-prec[0, 1] / np.sqrt(denom), -1.0, 1.0))


def ci_test(
    data: np.ndarray,
    i: int,
    j: int,
    S: Iterable[int] = (),
    alpha: float = 0.05,
) -> bool:
    """True when columns i and j are independent given columns S.

    Fisher z transform of the partial correlation: the statistic
    sqrt(d - |S| - 3) * |z| is compared against the two-sided Gaussian
    quantile at level alpha.
    """
    S = tuple(S)
    if i == j or i in S or j in S:
        raise InvalidConfig(f"columns must be distinct: i={i}, j={j}, S={S}")
    d = data.shape[0]
    if d - len(S) - 3 <= 0:
        raise TooFewSamples(
            f"need d > |S| + 3 samples for the Fisher z test (d={d}, |S|={len(S)})"
        )
    corr = _correlation_matrix(data)
    return _ci_from_corr(corr, d, i, j, S, alpha)


def _ci_from_corr(
    corr: np.ndarray, d: int, i: int, j: int, S: tuple[int, ...], alpha: float
) -> bool:
    rho = partial_correlation(corr, i, j, S)
    if abs(rho) >= 1.0:
        return False
    z = 0.5 * np.log((1.0 + rho) / (1.0 - rho))
    stat = np.sqrt(d - len(S) - 3) * abs(z)
    return bool(stat <= ndtri(1.0 - alpha / 2.0))


class _Pdag:
    """Mutable partially directed graph used during orientation."""

    def __init__(self, nodes: Sequence[str], und_pairs: Iterable[tuple[str, str]]):
        self.nodes = tuple(nodes)
        self.und: set[tuple[str, str]] = {tuple(sorted(p)) for p in und_pairs}
        self.dir: set[tuple[str, str]] = set()

    def has_und(self, a: str, b: str) -> bool:
        return tuple(sorted((a, b))) in self.und

    def has_dir(self, u: str, v: str) -> bool:
        return (u, v) in self.dir

    def adjacent(self, a: str, b: str) -> bool:
        return self.has_und(a, b) or (a, b) in self.dir or (b, a) in self.dir

    def creates_cycle(self, u: str, v: str) -> bool:
        """Would directed edge u -> v close a cycle (path v => u)?"""
        stack = [v]
        seen = {v}
        while stack:
            x = stack.pop()
            if x == u:
                return True
            for (a, b) in self.dir:
                if a == x and b not in seen:
                    seen.add(b)
                    stack.append(b)
        return False

    def orient(self, u: str, v: str) -> bool:
        """Turn undirected u -- v into u -> v; skip if it would close a cycle."""
        if not self.has_und(u, v) or self.creates_cycle(u, v):
            return False
        self.und.discard(tuple(sorted((u, v))))
        self.dir.add((u, v))
        return True

    def unorient(self, a: str, b: str) -> None:
        self.dir.discard((a, b))
        self.dir.discard((b, a))
        self.und.add(tuple(sorted((a, b))))


def pc_build(values: np.ndarray, names: Sequence[str], alpha: float = 0.05) -> CausalGraph:
    """Run the PC algorithm on the columns of ``values``.

    Skeleton phase removes edge (i, j) at conditioning level l on the first
    size-l subset of adj(i) minus j found independent, recording it as the
    separating set (removal takes effect immediately). V-structures
    i -> k <- j are oriented for nonadjacent pairs whose separating set
    excludes k; conflicting orientations revert the edge to undirected.
    Meek rules then propagate directions until nothing changes.
    """
    names = tuple(names)
    if values.ndim != 2 or values.shape[1] != len(names):
        raise InvalidConfig("one name per data column required")
    d = values.shape[0]
    col = {name: k for k, name in enumerate(names)}
    corr = _correlation_matrix(values)

    adj: dict[str, set[str]] = {n: set(names) - {n} for n in names}
    sepset: dict[tuple[str, str], tuple[str, ...]] = {}

    level = 0
    while any(len(adj[n]) > level for n in names):
        if d - level - 3 <= 0:
            break  # not enough samples to condition any deeper
        for a in sorted(names):
            for b in sorted(adj[a]):
                candidates = sorted(adj[a] - {b})
                if len(candidates) < level:
                    continue
                for S in combinations(candidates, level):
                    if _ci_from_corr(
                        corr, d, col[a], col[b], tuple(col[s] for s in S), alpha
                    ):
                        adj[a].discard(b)
                        adj[b].discard(a)
                        sepset[tuple(sorted((a, b)))] = S
                        break
        level += 1

    g = _Pdag(names, ((a, b) for a in names for b in adj[a] if a < b))

    # v-structures: i -> k <- j for nonadjacent (i, j) with k outside sepset
    conflicted: set[tuple[str, str]] = set()
    for i, j in combinations(sorted(names), 2):
        if j in adj[i]:
            continue
        for k in sorted(adj[i] & adj[j]):
            if k in sepset.get((i, j) if i < j else (j, i), ()):
                continue
            for parent in (i, j):
                pair = tuple(sorted((parent, k)))
                if pair in conflicted:
                    continue
                if g.has_dir(k, parent):
                    g.unorient(k, parent)
                    conflicted.add(pair)
                elif not g.has_dir(parent, k):
                    g.orient(parent, k)

    _meek(g)
    return CausalGraph(nodes=names, directed=tuple(g.dir), undirected=tuple(g.und))


def _meek(g: _Pdag) -> None:
    """Apply the four orientation-propagation rules to fixpoint."""
    names = sorted(g.nodes)
    changed = True
    while changed:
        changed = False
        for a, b in [(x, y) for x, y in combinations(names, 2)] + [
            (y, x) for x, y in combinations(names, 2)
        ]:
            if not g.has_und(a, b):
                continue
            if _meek_applies(g, a, b, names):
                changed |= g.orient(a, b)


def _meek_applies(g: _Pdag, a: str, b: str, names: list[str]) -> bool:
    # R1: c -> a, a -- b, c and b nonadjacent => a -> b
    for c in names:
        if g.has_dir(c, a) and not g.adjacent(c, b):
            return True
    # R2: a -> c -> b with a -- b => a -> b
    for c in names:
        if g.has_dir(a, c) and g.has_dir(c, b):
            return True
    # R3: a -- c, a -- d, c -> b, d -> b, c and d nonadjacent => a -> b
    into_b = [c for c in names if g.has_dir(c, b) and g.has_und(a, c)]
    for c, e in combinations(into_b, 2):
        if not g.adjacent(c, e):
            return True
    # R4: a -- c, a -- d, c -> d -> b, c and b nonadjacent => a -> b
    for c in names:
        if not (g.has_und(a, c) and not g.adjacent(c, b)):
            continue
        for e in names:
            if g.has_dir(c, e) and g.has_dir(e, b) and g.has_und(a, e):
                return True
    return False
