"""Mesoscopic diagnostics of the cell dynamics.

The map x -> x + beta v(x) moves mass between W-domains. Its transition kernel, the digraph of its support, the
strongly connected components of that digraph and their condensation are estimated here, together with the wandering
order parameter and a coupled edge percolation.
"""
import logging
import math

import networkx as nx
import numpy as np
import pandas as pd

from .context import get_active_context
from .wdomains import CellId

logger = logging.getLogger(__name__)


def _as_box(box, dim):
    box = np.asarray(box, dtype=float).reshape(dim, 2)
    if np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("The reference box must have positive volume")
    return box


def vertex_cells(part, box):
    """Cells with interior points, inside a box that covers both the reference box and the problem points"""
    box = _as_box(box, part.dim)
    bounds = part.default_bounds()
    bounds = np.stack([np.minimum(bounds[:, 0], box[:, 0] - 1), np.maximum(bounds[:, 1], box[:, 1] + 1)], axis=1)
    return part.nonempty_cells(bounds)


class KernelMatrix:
    """A Monte Carlo estimate of the cell transition kernel at step beta.

    Attributes:
        cells (list of CellId): Vertex order of the rows and columns.
        P (np.ndarray): Row-stochastic estimate (rows without samples are zero).
        counts (np.ndarray): Samples per row.
        beta (float): The step.
        box (np.ndarray): dim x 2 reference box of the uniform measure.
        solution (np.ndarray): Boolean mask of solution cells.
        lost (int): Samples mapped into a cell outside the vertex list.

    """

    def __init__(self, cells, P, counts, beta, box, solution, n_samples=None, seed=None, lost=0):
        self.cells = list(cells)
        self.P = np.asarray(P, dtype=float)
        self.counts = np.asarray(counts, dtype=int)
        self.beta = beta
        self.box = box
        self.solution = np.asarray(solution, dtype=bool)
        self.n_samples = n_samples
        self.seed = seed
        self.lost = lost
        self.index = {c: i for i, c in enumerate(self.cells)}

    def __len__(self):
        return len(self.cells)

    @property
    def empty_rows(self):
        return [c for c, n in zip(self.cells, self.counts) if n == 0]

    @property
    def low_confidence(self):
        limit = get_active_context().min_row_samples
        return [c for c, n in zip(self.cells, self.counts) if n < limit]

    def entry(self, source, target):
        return float(self.P[self.index[CellId(*source)], self.index[CellId(*target)]])

    def to_frame(self):
        """Long format: source, target, p, count of the source row (nonzero entries only)"""
        rows = [{"source": str(self.cells[i]), "target": str(self.cells[j]), "p": self.P[i, j],
                 "row_samples": int(self.counts[i])}
                for i, j in zip(*np.nonzero(self.P))]
        return pd.DataFrame(rows, columns=["source", "target", "p", "row_samples"])

    def __repr__(self):
        return "KernelMatrix(%d cells, beta=%g)" % (len(self), self.beta)


def estimate_kernel(part, beta, box, n_samples, seed=0, cells=None, chunk_size=100000):
    """Estimate P_beta(i, j) = mu(W_i and (W_j - beta v_i)) / mu(W_i) for mu uniform on a box.

    Points are drawn in chunks, each with its own generator spawned from the seed, so chunks may be processed
    independently with identical results.

    Args:
        part (CellPartition): The partition.
        beta (float): Step, >= 0.
        box (array-like): dim x 2 array of (lower, upper) bounds of the reference box.
        n_samples (int): Number of uniform samples.
        seed (int): Seed of the sampler.
        cells (list of CellId): Vertex list (default: every cell with interior points).
        chunk_size (int): Samples per chunk.

    Returns:
        KernelMatrix: The estimate.

    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    box = _as_box(box, part.dim)
    cells = vertex_cells(part, box) if cells is None else [CellId(*c) for c in cells]
    n_b = len(part.B)
    lookup = {c.a_index * n_b + c.b_index: i for i, c in enumerate(cells)}
    index_of = np.full(len(part.A) * n_b, -1)
    for key, i in lookup.items():
        index_of[key] = i
    velocities = np.asarray([part.velocity(c) for c in cells]).reshape(len(cells), part.dim)
    counts = np.zeros((len(cells), len(cells)), dtype=np.int64)
    lost = 0
    n_chunks = max(1, int(math.ceil(n_samples / chunk_size)))
    for k, child in enumerate(np.random.SeedSequence(seed).spawn(n_chunks)):
        size = min(chunk_size, n_samples - k * chunk_size)
        rng = np.random.default_rng(child)
        X = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((size, part.dim))
        a, b = part.locate_many(X)
        source = index_of[a * n_b + b]
        known = source >= 0
        X, source = X[known], source[known]
        Y = X + beta * velocities[source]
        a, b = part.locate_many(Y)
        target = index_of[a * n_b + b]
        lost += int(np.sum(~known) + np.sum(target < 0))
        keep = target >= 0
        np.add.at(counts, (source[keep], target[keep]), 1)
    row_counts = counts.sum(axis=1)
    P = np.divide(counts, row_counts[:, None], out=np.zeros(counts.shape), where=row_counts[:, None] > 0)
    solution = [part.is_solution(c) for c in cells]
    K = KernelMatrix(cells, P, row_counts, beta, box, solution, n_samples, seed, lost)
    if K.low_confidence:
        logger.warning("Kernel rows with fewer than %d samples: %s",
                       get_active_context().min_row_samples, ", ".join(str(c) for c in K.low_confidence))
    if lost:
        logger.info("%d samples fell in cells outside the vertex list", lost)
    return K


class CellDigraph:
    """A digraph over cells (or any hashable vertices) with a set of solution vertices"""

    def __init__(self, graph, solution=()):
        self.graph = graph
        self.solution = set(solution)

    @staticmethod
    def from_edges(nodes, edges, solution=()):
        graph = nx.DiGraph()
        graph.add_nodes_from(nodes)
        graph.add_edges_from(edges)
        return CellDigraph(graph, solution)

    @property
    def nodes(self):
        return list(self.graph.nodes)

    @property
    def edges(self):
        return set(self.graph.edges)

    def __len__(self):
        return self.graph.number_of_nodes()

    def write_edgelist(self, path):
        """Write the edges as 'source target' lines, cells named a:b"""
        def name(node):
            return "%d:%d" % tuple(node) if isinstance(node, tuple) else str(node)

        nx.write_edgelist(nx.relabel_nodes(self.graph, name), path, data=False)

    def __repr__(self):
        return "CellDigraph(%d vertices, %d edges, %d solutions)" % (len(self), self.graph.number_of_edges(),
                                                                     len(self.solution))


def support_digraph(K, tau=0.0):
    """Edges i -> j with P(i, j) > tau"""
    if tau < 0:
        raise ValueError("The support threshold must be nonnegative")
    sources, targets = np.nonzero(K.P > tau)
    return CellDigraph.from_edges(K.cells, [(K.cells[i], K.cells[j]) for i, j in zip(sources, targets)],
                                  [c for c, s in zip(K.cells, K.solution) if s])


class CondensationResult:
    """Strongly connected components and their condensation.

    Attributes:
        membership (dict): Vertex of the original graph -> vertex of the final condensation.
        condensation (nx.DiGraph): The acyclic condensation, nodes carrying a 'members' attribute.
        level (int): Number of condensations applied.

    """

    def __init__(self, membership, condensation, level):
        self.membership = membership
        self.condensation = condensation
        self.level = level

    @property
    def components(self):
        return [set(self.condensation.nodes[c]["members"]) for c in self.condensation.nodes]

    def __repr__(self):
        return "CondensationResult(%d components, level=%d)" % (self.condensation.number_of_nodes(), self.level)


def scc_condense(G, levels=1):
    """Collapse strongly connected components, repeatedly if levels > 1"""
    if levels < 1:
        raise ValueError("At least one condensation level is needed")
    graph = G.graph if isinstance(G, CellDigraph) else G
    membership = {v: v for v in graph.nodes}
    members = {v: {v} for v in graph.nodes}
    current = graph
    for _ in range(levels):
        C = nx.condensation(current)
        mapping = C.graph["mapping"]
        membership = {v: mapping[c] for v, c in membership.items()}
        grouped = {}
        for old, new in mapping.items():
            grouped.setdefault(new, set()).update(members[old])
        members = grouped
        for node in C.nodes:
            C.nodes[node]["members"] = members[node]
        current = C
    return CondensationResult(membership, current, levels)


def transitive_closure(graph, order):
    """Reflexive reachability as a boolean matrix over the given vertex order"""
    index = {v: i for i, v in enumerate(order)}
    R = np.eye(len(order), dtype=bool)
    for u, v in graph.edges:
        R[index[u], index[v]] = True
    while True:
        nxt = R | ((R.astype(np.int64) @ R.astype(np.int64)) > 0)
        if np.array_equal(nxt, R):
            return R
        R = nxt


def verify_reachability(G, result):
    """Whether u reaches v in G exactly when the component of u reaches that of v in the condensation"""
    graph = G.graph if isinstance(G, CellDigraph) else G
    order = list(graph.nodes)
    R = transitive_closure(graph, order)
    comp_order = list(result.condensation.nodes)
    Rc = transitive_closure(result.condensation, comp_order)
    position = {c: i for i, c in enumerate(comp_order)}
    comp = np.array([position[result.membership[v]] for v in order], dtype=int)
    return bool(np.array_equal(R, Rc[np.ix_(comp, comp)]))


def largest_wandering_component(G, nontrivial_only=False):
    """Size of the largest strongly connected component among non-solution vertices"""
    graph = G.graph.subgraph([v for v in G.graph.nodes if v not in G.solution])
    sizes = [len(c) for c in nx.strongly_connected_components(graph)]
    if nontrivial_only:
        sizes = [s for s in sizes if s > 1]
    return max(sizes, default=0)


def order_parameter(G, nontrivial_only=False):
    """Phi = |largest SCC among non-solution vertices| / |V|.

    Args:
        G (CellDigraph): The digraph.
        nontrivial_only (bool): Ignore singleton components (with or without self-loop). By default a singleton counts
            as a component of size 1, so Phi >= 1 / |V| whenever a non-solution vertex exists.

    """
    if len(G) == 0:
        return 0.0
    return largest_wandering_component(G, nontrivial_only) / len(G)


def percolation_uniforms(n, seed):
    """The shared uniforms U_ij of the coupled percolation"""
    return np.random.default_rng(seed).random((n, n))


def percolate_edges(K, seed, uniforms=None):
    """Open each edge i -> j independently when U_ij < P(i, j), with uniforms shared across kernels of equal size.

    Sharing the uniforms makes the realization monotone: an entrywise larger kernel opens a superset of edges.
    """
    U = percolation_uniforms(len(K), seed) if uniforms is None else uniforms
    sources, targets = np.nonzero(U < K.P)
    return CellDigraph.from_edges(K.cells, [(K.cells[i], K.cells[j]) for i, j in zip(sources, targets)],
                                  [c for c, s in zip(K.cells, K.solution) if s])


def _violations(P_lo, P_hi, tol=0.0):
    off = ~np.eye(P_lo.shape[0], dtype=bool)
    return int(np.sum((P_lo > P_hi + tol) & off))


def beta_sweep(part, betas, box, n_samples, seeds=(0,), tau=0.0, percolate=False, nontrivial_only=False):
    """Order parameter across a grid of steps.

    Args:
        part (CellPartition): The partition.
        betas (list of float): Grid of steps.
        box (array-like): Reference box.
        n_samples (int): Samples per kernel.
        seeds (list of int): Seeds; each gives one row per beta.
        tau (float): Support threshold (ignored when percolating).
        percolate (bool): Use the coupled percolation realization instead of the support digraph.
        nontrivial_only (bool): Passed to order_parameter.

    Returns:
        pd.DataFrame: Columns beta, phi, scc_max, edges, samples, seed. attrs["monotonicity_violations"] lists, per seed
        and consecutive pair of steps, the number of off-diagonal entries where the kernel decreased.

    """
    betas = sorted(betas)
    if not betas:
        raise ValueError("The beta grid is empty")
    cells = vertex_cells(part, box)
    rows = []
    violations = []
    for seed in seeds:
        previous = None
        uniforms = percolation_uniforms(len(cells), seed) if percolate else None
        for beta in betas:
            K = estimate_kernel(part, beta, box, n_samples, seed, cells=cells)
            G = percolate_edges(K, seed, uniforms) if percolate else support_digraph(K, tau)
            scc_max = largest_wandering_component(G, nontrivial_only)
            rows.append({"beta": beta, "phi": scc_max / len(G) if len(G) else 0.0, "scc_max": scc_max,
                         "edges": G.graph.number_of_edges(), "samples": n_samples, "seed": seed})
            if previous is not None:
                count = _violations(previous.P, K.P)
                if count:
                    violations.append({"seed": seed, "beta_lo": previous.beta, "beta_hi": beta, "entries": count})
            previous = K
    df = pd.DataFrame(rows, columns=["beta", "phi", "scc_max", "edges", "samples", "seed"])
    df.attrs["monotonicity_violations"] = violations
    if violations:
        logger.info("Kernel not monotone in beta at %d grid steps", len(violations))
    return df
