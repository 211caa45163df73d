"""Communication graphs, random-walk kernels, and hitting-time weights.

The accounting pipeline consumes a row-stochastic kernel W over the user
graph.  Everything privacy-relevant about the walk enters through two
quantities computed here: the spectral gap of W (visit-count concentration)
and the first-visit time distribution between node pairs (mixture weights).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx
import numpy as np

from .errors import FormatError, GraphValidationError

ROW_SUM_TOL = 1e-12
SCHEMES = ("metropolis_hastings", "lazy_simple_walk", "explicit")


@dataclass(frozen=True)
class GraphSpec:
    """Undirected communication graph, optionally with an explicit kernel."""

    n: int
    edges: tuple[tuple[int, int], ...] = ()
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.n <= 0:
            raise GraphValidationError(f"node count must be positive, got {self.n}")
        seen = set()
        for (i, j) in self.edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphValidationError(f"edge ({i},{j}) out of range [0,{self.n})")
            if i == j:
                raise GraphValidationError(f"self-loop edge ({i},{j}) not allowed")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise GraphValidationError(f"duplicate edge {key}")
            seen.add(key)
        if self.matrix is not None:
            m = np.asarray(self.matrix, dtype=float)
            if m.shape != (self.n, self.n):
                raise FormatError(
                    f"explicit matrix must be {self.n}x{self.n}, got {m.shape}"
                )
            object.__setattr__(self, "matrix", m)

    @property
    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for (i, j) in self.edges:
            a[i, j] = 1.0
            a[j, i] = 1.0
        return a

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        return _support_connected(self.adjacency > 0)


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic walk kernel W with validity metadata."""

    matrix: np.ndarray
    scheme: str = "explicit"

    def __post_init__(self):
        w = np.asarray(self.matrix, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise FormatError(f"W must be square, got shape {w.shape}")
        if np.any(w < -ROW_SUM_TOL):
            raise FormatError("W has negative entries")
        rowsum = w.sum(axis=1)
        bad = np.where(np.abs(rowsum - 1.0) > 1e-9)[0]
        if bad.size:
            raise FormatError(
                f"rows {bad.tolist()[:5]} of W are not stochastic "
                f"(sums {rowsum[bad][:5].tolist()})"
            )
        object.__setattr__(self, "matrix", w)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def is_symmetric(self, tol: float = 1e-10) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.T)) <= tol)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"w{j}" for j in range(self.n)])
            for row in self.matrix:
                writer.writerow([repr(float(x)) for x in row])


@dataclass(frozen=True)
class SpectralReport:
    lambda2: float
    spectral_gap: float
    is_irreducible: bool
    is_aperiodic: bool
    stationary: np.ndarray

    def to_dict(self) -> dict:
        return {
            "lambda2": self.lambda2,
            "spectral_gap": self.spectral_gap,
            "is_irreducible": self.is_irreducible,
            "is_aperiodic": self.is_aperiodic,
            "stationary": [float(x) for x in self.stationary],
        }


@dataclass(frozen=True)
class HittingWeights:
    """First-visit probabilities w[t] for t=1..T plus the residual mass.

    ``weights[t-1]`` is the probability the walk started at ``source``
    reaches ``target`` for the first time exactly at step t; ``residual``
    is the probability it does not arrive within the horizon.
    """

    source: int
    target: int
    horizon: int
    weights: np.ndarray
    residual: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.horizon,):
            raise FormatError(f"expected {self.horizon} weights, got {w.shape}")
        if np.any(w < -1e-12):
            raise FormatError("negative hitting weight")
        w = np.clip(w, 0.0, None)
        object.__setattr__(self, "weights", w)
        resid = self.residual
        if resid is None:
            resid = 1.0 - float(w.sum())
        if resid < -1e-9:
            raise FormatError(f"hitting weights sum past 1 (residual {resid})")
        object.__setattr__(self, "residual", max(0.0, float(resid)))

    def total(self) -> float:
        return float(self.weights.sum() + self.residual)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "weight"])
            for t, w in enumerate(self.weights, start=1):
                writer.writerow([t, repr(float(w))])
            writer.writerow(["residual", repr(float(self.residual))])


def _support_connected(support: np.ndarray) -> bool:
    """BFS reachability on a boolean adjacency/support matrix."""
    n = support.shape[0]
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for v in np.where(support[u])[0]:
            if not seen[v]:
                seen[v] = True
                stack.append(int(v))
    return bool(seen.all())


def build_transition(spec: GraphSpec, scheme: str = "metropolis_hastings") -> TransitionMatrix:
    """Build the walk kernel W for a graph.

    metropolis_hastings: W_ij = min(1/(d_i+1), 1/(d_j+1)) on edges, the
    remainder on the diagonal.  lazy_simple_walk: W_ij = 1/(2 d_i) on edges
    and W_ii = 1/2 (symmetric only on regular graphs).  explicit: the rows
    provided in the spec, validated.
    """
    if scheme not in SCHEMES:
        raise FormatError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if scheme == "explicit":
        if spec.matrix is None:
            raise FormatError("explicit scheme requires matrix rows in the spec")
        w = TransitionMatrix(spec.matrix, scheme="explicit")
        if spec.edges:
            allowed = spec.adjacency > 0
            np.fill_diagonal(allowed, True)
            if np.any((w.matrix > 0) & ~allowed):
                raise GraphValidationError("explicit W has mass outside the edge set")
        return w

    if not spec.edges:
        raise GraphValidationError("built-in schemes need a non-empty edge set")
    if not spec.is_connected():
        raise GraphValidationError("graph is disconnected")
    a = spec.adjacency
    d = a.sum(axis=1)
    n = spec.n
    if scheme == "metropolis_hastings":
        inv = 1.0 / (d + 1.0)
        w = np.where(a > 0, np.minimum(inv[:, None], inv[None, :]), 0.0)
    else:  # lazy_simple_walk
        w = np.where(a > 0, 1.0 / (2.0 * d[:, None]), 0.0)
    w[np.arange(n), np.arange(n)] = 0.0
    w[np.arange(n), np.arange(n)] = 1.0 - w.sum(axis=1)
    return TransitionMatrix(w, scheme=scheme)


def analyze(w: TransitionMatrix, allow_asymmetric: bool = False) -> SpectralReport:
    """Spectral and structural report for a walk kernel.

    lambda2 is the second-largest eigenvalue (signed) of the symmetric
    kernel.  Irreducibility is checked by reachability closure on the
    support, aperiodicity by the gcd of return times (any positive diagonal
    entry short-circuits to aperiodic).
    """
    m = w.matrix
    n = w.n
    if not w.is_symmetric():
        if not allow_asymmetric:
            raise GraphValidationError(
                "W is not symmetric; pass allow_asymmetric=True to analyze "
                "the symmetrized part"
            )
        m = (m + m.T) / 2.0

    eigvals = np.sort(np.linalg.eigvalsh(m))[::-1]
    lambda2 = float(eigvals[1]) if n > 1 else float(eigvals[0])

    support = m > 0
    forward = _support_connected(support)
    backward = _support_connected(support.T)
    irreducible = forward and backward

    if np.any(np.diagonal(m) > 0):
        aperiodic = True
    else:
        aperiodic = _gcd_return_times(support) == 1

    if irreducible:
        # Symmetric doubly stochastic kernel: stationary law is uniform.
        vals, vecs = np.linalg.eigh(m)
        v = vecs[:, np.argmax(vals)]
        stationary = np.abs(v) / np.abs(v).sum()
    else:
        stationary = np.full(n, 1.0 / n)

    return SpectralReport(
        lambda2=lambda2,
        spectral_gap=1.0 - lambda2,
        is_irreducible=irreducible,
        is_aperiodic=aperiodic,
        stationary=stationary,
    )


def _gcd_return_times(support: np.ndarray) -> int:
    n = support.shape[0]
    g = 0
    p = np.eye(n, dtype=bool)
    for t in range(1, 2 * n + 1):
        p = (p @ support) > 0
        if np.any(np.diagonal(p)):
            g = math.gcd(g, t)
        if g == 1:
            return 1
    return g if g else 0


def hitting_profile(w: TransitionMatrix, target: int, horizon: int) -> np.ndarray:
    """First-visit probabilities to ``target`` from every start node.

    Returns array of shape (horizon, n): entry [t-1, i] = P[tau_{i,target} = t].
    Recursion: w_ij^t = sum_{k != j} W_ik w_kj^{t-1}, with w_ij^1 = W_ij.
    """
    if horizon < 1:
        raise GraphValidationError(f"horizon must be >= 1, got {horizon}")
    n = w.n
    if not (0 <= target < n):
        raise GraphValidationError(f"target {target} out of range")
    m = w.matrix
    mask = np.ones(n)
    mask[target] = 0.0
    out = np.empty((horizon, n))
    v = m[:, target].copy()
    out[0] = v
    for t in range(1, horizon):
        v = m @ (v * mask)
        out[t] = v
    return out


def hitting_weights(w: TransitionMatrix, source: int, target: int, horizon: int) -> HittingWeights:
    if not (0 <= source < w.n):
        raise GraphValidationError(f"source {source} out of range")
    profile = hitting_profile(w, target, horizon)
    weights = profile[:, source].copy()
    return HittingWeights(source=source, target=target, horizon=horizon, weights=weights)


def mc_hitting_oracle(
    w: TransitionMatrix,
    source: int,
    target: int,
    horizon: int,
    samples: int,
    seed: int,
) -> HittingWeights:
    """Empirical first-visit histogram over independent simulated walks.

    Test oracle for the recursion; deterministic given the seed.
    """
    if samples < 1:
        raise GraphValidationError(f"samples must be >= 1, got {samples}")
    if horizon < 1:
        raise GraphValidationError(f"horizon must be >= 1, got {horizon}")
    n = w.n
    if not (0 <= source < n and 0 <= target < n):
        raise GraphValidationError("source/target out of range")
    rng = np.random.default_rng(seed)
    cumw = np.cumsum(w.matrix, axis=1)
    cumw[:, -1] = 1.0  # guard against accumulated rounding

    pos = np.full(samples, source, dtype=np.int64)
    hit_at = np.zeros(samples, dtype=np.int64)  # 0 = not yet hit
    alive = np.ones(samples, dtype=bool)
    for t in range(1, horizon + 1):
        idx = np.where(alive)[0]
        if idx.size == 0:
            break
        u = rng.random(idx.size)
        nxt = np.empty(idx.size, dtype=np.int64)
        # group by current position so each row's cumulative law is applied once
        cur = pos[idx]
        for node in np.unique(cur):
            sel = cur == node
            nxt[sel] = np.searchsorted(cumw[node], u[sel], side="right")
        pos[idx] = nxt
        arrived = idx[nxt == target]
        hit_at[arrived] = t
        alive[arrived] = False
    counts = np.bincount(hit_at, minlength=horizon + 1).astype(float)
    weights = counts[1:] / samples
    return HittingWeights(source=source, target=target, horizon=horizon, weights=weights)


def laplacian_fiedler(spec: GraphSpec) -> float:
    """Smallest nonzero eigenvalue of the combinatorial Laplacian D - A."""
    if not spec.edges:
        raise GraphValidationError("graph has no edges")
    if not spec.is_connected():
        raise GraphValidationError("graph is disconnected; Fiedler value would be 0")
    a = spec.adjacency
    lap = np.diag(a.sum(axis=1)) - a
    vals = np.sort(np.linalg.eigvalsh(lap))
    return float(vals[1])


# ---------------------------------------------------------------------------
# Named generators and file IO


def named_graph(name: str, seed: int = 0) -> GraphSpec:
    """Build a GraphSpec from a compact name.

    Supported: ``ring:N``, ``complete:N``, ``hypercube:N`` (N a power of two),
    ``torus:RxC``, ``regular:N:D[:seed]``, ``cliques:KxM`` (ring of K cliques
    of size M bridged by single edges), ``path:N``.
    """
    parts = name.split(":")
    kind = parts[0]
    if kind == "ring":
        n = int(parts[1])
        g = nx.cycle_graph(n)
    elif kind == "path":
        n = int(parts[1])
        g = nx.path_graph(n)
    elif kind == "complete":
        n = int(parts[1])
        g = nx.complete_graph(n)
    elif kind == "hypercube":
        n = int(parts[1])
        dim = int(round(math.log2(n)))
        if 2**dim != n:
            raise FormatError(f"hypercube size must be a power of two, got {n}")
        g = nx.convert_node_labels_to_integers(nx.hypercube_graph(dim))
    elif kind == "torus":
        r, c = (int(x) for x in parts[1].lower().split("x"))
        g = nx.convert_node_labels_to_integers(
            nx.grid_2d_graph(r, c, periodic=True)
        )
    elif kind == "regular":
        n, d = int(parts[1]), int(parts[2])
        s = int(parts[3]) if len(parts) > 3 else seed
        g = nx.random_regular_graph(d, n, seed=s)
    elif kind == "cliques":
        k, m = (int(x) for x in parts[1].lower().split("x"))
        blocks = [nx.complete_graph(m) for _ in range(k)]
        g = nx.disjoint_union_all(blocks)
        for b in range(k):
            g.add_edge(b * m, ((b + 1) % k) * m + 1)
    else:
        raise FormatError(f"unknown graph name {name!r}")
    edges = tuple(sorted((min(u, v), max(u, v)) for u, v in g.edges()))
    return GraphSpec(n=g.number_of_nodes(), edges=edges)


def load_graph_json(source: str | Path | dict) -> tuple[GraphSpec, str]:
    """Load {"n", "edges", "scheme", "matrix"?} from a JSON file or dict."""
    if isinstance(source, (str, Path)):
        with open(source) as fh:
            data = json.load(fh)
    else:
        data = dict(source)
    try:
        n = int(data["n"])
    except KeyError as exc:
        raise FormatError("graph JSON needs an 'n' field") from exc
    edges = tuple((int(i), int(j)) for i, j in data.get("edges", []))
    matrix = data.get("matrix")
    if matrix is not None:
        matrix = np.asarray(matrix, dtype=float)
    scheme = data.get("scheme", "metropolis_hastings")
    return GraphSpec(n=n, edges=edges, matrix=matrix), scheme


def graph_spec_to_dict(spec: GraphSpec, scheme: str) -> dict:
    out = {"n": spec.n, "edges": [list(e) for e in spec.edges], "scheme": scheme}
    if spec.matrix is not None:
        out["matrix"] = [[float(x) for x in row] for row in spec.matrix]
    return out
