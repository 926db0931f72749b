"""Directed communication topology and the spectral quantities derived from it.

Convention: ``adjacency[i, j]`` is the weight of the edge carrying information
from node j into node i, so row i lists the in-neighbors of agent i. Pinning
gain ``pinning[i] > 0`` means agent i receives the leader directly.
"""
from dataclasses import dataclass

import numpy as np

from .errors import (
    NegativeWeight,
    NonSquareInput,
    NonpositiveQ,
    NoPinning,
    NotStronglyConnected,
    SelfLoop,
    SingularPinnedLaplacian,
)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DirectedGraph:
    """Validated weighted digraph with leader pinning gains."""

    n: int
    adjacency: np.ndarray   # (n, n), nonnegative, zero diagonal
    pinning: np.ndarray     # (n,), nonnegative

    @property
    def has_pinning(self):
        """True when at least one agent is pinned to the leader."""
        return bool(np.any(self.pinning > 0.0))


@dataclass(frozen=True)
class SpectralBounds:
    """Cached singular-value bounds consumed by the gain feasibility check."""

    sigma_max_adjacency: float    # largest singular value of A
    sigma_max_m_weights: float    # largest entry of the diagonal weight matrix
    sigma_min_degree_pinning: float   # smallest entry of B + D
    sigma_min_q: float            # smallest eigenvalue of the symmetrized form Q


@dataclass(frozen=True)
class GraphQuantities:
    """Everything the controller and gain check need from the topology."""

    in_degree: np.ndarray      # (n,) row sums of the adjacency
    laplacian: np.ndarray      # (n, n) L = D - A
    pinned: np.ndarray         # (n, n) L + B
    q: np.ndarray              # (n,) positive weight vector
    m_weights: np.ndarray      # (n,) m_i = 1 / q_i
    script_q: np.ndarray       # (n, n) symmetric Q = M(L+B) + (L+B)^T M
    sigma_min_pinned: float    # smallest singular value of L + B
    sigma_bounds: SpectralBounds


def build_graph(adjacency, pinning):
    """Validate raw weight tables into a DirectedGraph.

    Rejects non-square tables, negative weights/gains, and self-loops.
    A graph with all-zero pinning is built but unusable for control.
    """
    a = np.asarray(adjacency, dtype=float)
    b = np.asarray(pinning, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NonSquareInput(f"adjacency must be square, got shape {a.shape}")
    n = a.shape[0]
    if b.shape != (n,):
        raise NonSquareInput(
            f"pinning must have length {n}, got shape {b.shape}")
    if np.any(a < 0.0):
        raise NegativeWeight("adjacency weights must be nonnegative")
    if np.any(b < 0.0):
        raise NegativeWeight("pinning gains must be nonnegative")
    if np.any(np.diag(a) != 0.0):
        raise SelfLoop("self-connectivity is not allowed (nonzero diagonal)")
    return DirectedGraph(n=n, adjacency=_frozen(a), pinning=_frozen(b))


def default_five_ring():
    """Unit-weight directed ring 1->2->3->4->5->1 with the leader pinned to
    agents 1 and 5. Stand-in topology for the benchmark examples."""
    a = np.zeros((5, 5))
    for i in range(5):
        a[(i + 1) % 5, i] = 1.0
    b = np.array([1.0, 0.0, 0.0, 0.0, 1.0])
    return build_graph(a, b)


def validate_connectivity(g):
    """True iff the digraph is strongly connected.

    Two BFS passes from node 0: one along edge direction, one against it.
    """
    if g.n == 1:
        return True

    def _reaches_all(successors):
        seen = np.zeros(g.n, dtype=bool)
        seen[0] = True
        stack = [0]
        while stack:
            u = stack.pop()
            for v in np.nonzero(successors[u])[0]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(int(v))
        return bool(seen.all())

    # adjacency[i, j] > 0 is the edge j -> i: successors of u sit in column u
    forward = g.adjacency.T > 0.0
    backward = g.adjacency > 0.0
    return _reaches_all(forward) and _reaches_all(backward)


def min_singular_value(m):
    """Smallest singular value of a square matrix.

    Computed from the symmetric eigen-decomposition of M^T M; returns 0
    for singular input.
    """
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0.0
    gram = m.T @ m
    eigs = np.linalg.eigvalsh(gram)
    return float(np.sqrt(max(eigs[0], 0.0)))


def max_singular_value(m):
    """Largest singular value, via the same symmetric route."""
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0.0
    eigs = np.linalg.eigvalsh(m.T @ m)
    return float(np.sqrt(max(eigs[-1], 0.0)))


def laplacian_quantities(g, q_rule="inverse"):
    """Derive Laplacian, pinned matrix, and the q/M/Q weighting quantities.

    q_rule selects how the positive weight vector is built:
      * "inverse" (default): q = (L+B)^{-1} 1, the standard nonsingular
        M-matrix construction; guaranteed positive on strongly connected
        pinned graphs.
      * "literal": q = (L+B)^T 1 (plain column sums). On balanced graphs
        the Laplacian columns sum to zero, so entries can vanish; the rule
        then fails loudly with NonpositiveQ.
    """
    if not g.has_pinning:
        raise NoPinning("at least one pinning gain must be positive")
    if not validate_connectivity(g):
        raise NotStronglyConnected("graph must be strongly connected")

    d = g.adjacency.sum(axis=1)
    laplacian = np.diag(d) - g.adjacency
    pinned = laplacian + np.diag(g.pinning)

    ones = np.ones(g.n)
    if q_rule == "inverse":
        q = np.linalg.solve(pinned, ones)
    elif q_rule == "literal":
        q = pinned.T @ ones
    else:
        raise ValueError(f"unknown q_rule {q_rule!r}")
    if np.any(q <= 0.0):
        raise NonpositiveQ(
            f"q-rule {q_rule!r} produced nonpositive entries {q}")

    m_weights = 1.0 / q
    m_diag = np.diag(m_weights)
    script_q = m_diag @ pinned + pinned.T @ m_diag

    bounds = SpectralBounds(
        sigma_max_adjacency=max_singular_value(g.adjacency),
        sigma_max_m_weights=float(m_weights.max()),
        sigma_min_degree_pinning=float((d + g.pinning).min()),
        sigma_min_q=float(np.linalg.eigvalsh(script_q)[0]),
    )
    return GraphQuantities(
        in_degree=_frozen(d),
        laplacian=_frozen(laplacian),
        pinned=_frozen(pinned),
        q=_frozen(q),
        m_weights=_frozen(m_weights),
        script_q=_frozen(script_q),
        sigma_min_pinned=min_singular_value(pinned),
        sigma_bounds=bounds,
    )


def disagreement_bound(e, gq):
    """Upper bound ||e|| / sigma_min(L+B) on the norm of the disagreement
    x^1 - x0 implied by the synchronization error vector e."""
    sigma = gq.sigma_min_pinned
    if sigma <= 1e-300:
        raise SingularPinnedLaplacian("L + B has zero minimum singular value")
    return float(np.linalg.norm(np.asarray(e, dtype=float)) / sigma)
