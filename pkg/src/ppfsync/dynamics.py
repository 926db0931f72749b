"""Agent/leader models, the benchmark suites, and synchronization errors.

States are (order, channels) arrays: row m-1 holds the order-m state block,
so row 0 is the output and the last row receives the nonlinearity and the
control. The simulator knows each model's nonlinearity f in order to
integrate it; the controller side only ever sees states, errors, and
graph-local data.
"""
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch
from .graph import DirectedGraph, build_graph, default_five_ring


@dataclass(frozen=True)
class AgentModel:
    """One follower: integrator chain of length `order` on `channels` outputs.

    true_theta/true_omega are optional ground-truth parameters for scenarios
    whose nonlinearity really is theta ||x||_inf + omega; they enable the
    energy diagnostic and stay hidden from the controller.
    """

    order: int
    channels: int
    f: Callable            # (x: (order, channels), t) -> length-channels
    g_mat: np.ndarray      # (channels, channels), invertible
    true_theta: Optional[np.ndarray] = None
    true_omega: Optional[np.ndarray] = None

    def __post_init__(self):
        g = np.asarray(self.g_mat, dtype=float)
        if g.shape != (self.channels, self.channels):
            raise DimensionMismatch(
                f"input matrix shape {g.shape} does not match "
                f"{self.channels} channels")
        if abs(np.linalg.det(g)) < 1e-300:
            raise DimensionMismatch("input matrix must be invertible")


@dataclass(frozen=True)
class LeaderModel:
    """Leader as either an integrated vector field or an explicit trajectory.

    Field form: `field(t, x0)` returns the top-order derivative and the
    state is integrated from `initial`. Trajectory form: `trajectory(t)`
    returns all state orders (order, channels) analytically.
    """

    order: int
    channels: int
    field: Optional[Callable] = None
    initial: Optional[np.ndarray] = None
    trajectory: Optional[Callable] = None

    def __post_init__(self):
        if (self.field is None) == (self.trajectory is None):
            raise ValueError("provide exactly one of field or trajectory")
        if self.field is not None and self.initial is None:
            raise ValueError("field form requires an initial state")
        if self.trajectory is not None:
            _check_trajectory_consistency(self)

    def orders_at(self, t, state=None):
        """All state orders at time t: the integrated state for the field
        form, the analytic stack for the trajectory form."""
        if self.trajectory is not None:
            return np.asarray(self.trajectory(t), dtype=float)
        return state

    def derivative(self, t, state):
        """Time derivative of the integrated leader state (field form)."""
        out = np.empty_like(state)
        out[:-1] = state[1:]
        out[-1] = self.field(t, state)
        return out


def _check_trajectory_consistency(leader, times=(0.0, 0.37, 1.7, 5.3, 11.0)):
    """Finite-difference check that order m+1 is the derivative of order m."""
    if leader.order < 2:
        return
    h = 1e-5
    for t in times:
        hi = np.asarray(leader.trajectory(t + h), dtype=float)
        lo = np.asarray(leader.trajectory(t - h), dtype=float)
        mid = np.asarray(leader.trajectory(t), dtype=float)
        fd = (hi[:-1] - lo[:-1]) / (2.0 * h)
        scale = np.maximum(np.abs(mid[1:]), 1.0)
        if np.any(np.abs(fd - mid[1:]) / scale > 1e-4):
            raise ValueError(
                f"trajectory orders are not consistent derivatives at t={t}")


def eval_agent_field(model, x_i, t, u_i):
    """Plant derivative: chain shift with f + G u entering the top order."""
    x_i = np.asarray(x_i, dtype=float)
    if x_i.shape != (model.order, model.channels):
        raise DimensionMismatch(
            f"state shape {x_i.shape}, expected "
            f"({model.order}, {model.channels})")
    out = np.empty_like(x_i)
    out[:-1] = x_i[1:]
    out[-1] = np.asarray(model.f(x_i, t), dtype=float) \
        + np.asarray(model.g_mat, dtype=float) @ np.asarray(u_i, dtype=float)
    return out


@dataclass(frozen=True)
class SyncError:
    """Neighborhood synchronization errors, per agent/order/channel."""

    e: np.ndarray    # (n, order, channels)


def sync_error(states, leader_orders, g: DirectedGraph):
    """Local-sum synchronization errors for every state order.

    e_i = sum_j a_ij (x_i - x_j) + b_i (x_i - x0), evaluated per order and
    channel exactly as each agent would from neighbor measurements.
    """
    states = np.asarray(states, dtype=float)
    leader_orders = np.asarray(leader_orders, dtype=float)
    if states.shape[1:] != leader_orders.shape:
        raise DimensionMismatch(
            f"agent orders {states.shape[1:]} vs leader {leader_orders.shape}")
    n = g.n
    e = np.zeros_like(states)
    for i in range(n):
        acc = g.pinning[i] * (states[i] - leader_orders)
        row = g.adjacency[i]
        for j in np.nonzero(row)[0]:
            acc = acc + row[j] * (states[i] - states[j])
        e[i] = acc
    return SyncError(e=e)


def sync_error_kron(states, leader_orders, g: DirectedGraph):
    """Global Kronecker form ((L+B) (x) I_P)(x - x0_stack), order by order.

    Independent route used to cross-validate the local sums.
    """
    states = np.asarray(states, dtype=float)
    leader_orders = np.asarray(leader_orders, dtype=float)
    n, order, channels = states.shape
    d = g.adjacency.sum(axis=1)
    pinned = np.diag(d) - g.adjacency + np.diag(g.pinning)
    big = np.kron(pinned, np.eye(channels))
    e = np.empty_like(states)
    for m in range(order):
        diff = (states[:, m, :] - leader_orders[m][None, :]).reshape(-1)
        e[:, m, :] = (big @ diff).reshape(n, channels)
    return SyncError(e=e)


# ----------------------------------------------------------------------------
# Benchmark suite 1: five third-order SISO agents on the default ring.
# ----------------------------------------------------------------------------

def _siso_f1(x, t):
    return [x[1, 0] * math.sin(x[0, 0]) + math.cos(x[2, 0]) ** 2]


def _siso_f2(x, t):
    x1 = x[0, 0]
    return [-x1 ** 2 * x[1, 0] + 0.01 * x1 - 0.01 * x1 ** 3]


def _siso_f3(x, t):
    return [x[1, 0] + math.sin(x[2, 0])]


def _siso_f4(x, t):
    s = x[0, 0] + x[1, 0]
    return [-3.0 * (s - 1.0) ** 2 * (s + x[2, 0] - 1.0) - x[2, 0]
            + 0.5 * math.sin(2.0 * t) + math.cos(2.0 * t)]


def _siso_f5(x, t):
    return [math.cos(x[0, 0])]


def _siso_leader_field(t, x0):
    x1, x2, x3 = x0[0, 0], x0[1, 0], x0[2, 0]
    return [-x2 - 2.0 * x3 + 1.0 + 3.0 * math.sin(2.0 * t)
            + 6.0 * math.cos(2.0 * t)
            - (x1 + x2 - 1.0) * (x1 + 4.0 * x2 + 3.0 * x3 - 1.0) / 3.0]


@dataclass(frozen=True)
class ScenarioDefaults:
    """Suite-specific defaults the config layer fills in when absent."""

    name: str
    rho0: float
    rho_inf: float
    decay: float
    delta_upper: float
    delta_lower: float
    c: float
    k: float
    gamma1: float
    gamma2: float
    initial_states: np.ndarray    # (n, order, channels)


def _siso_vector_f(x, t, out):
    # fused evaluation of all five agents for the simulation hot loop;
    # must agree with the per-agent functions above (tested)
    xf = x.reshape(-1)
    x1, x2, x3 = float(xf[0]), float(xf[1]), float(xf[2])
    out[0, 0] = x2 * math.sin(x1) + math.cos(x3) ** 2
    x1, x2 = float(xf[3]), float(xf[4])
    out[1, 0] = -x1 * x1 * x2 + 0.01 * x1 - 0.01 * x1 ** 3
    x2, x3 = float(xf[7]), float(xf[8])
    out[2, 0] = x2 + math.sin(x3)
    x1, x2, x3 = float(xf[9]), float(xf[10]), float(xf[11])
    s = x1 + x2
    out[3, 0] = (-3.0 * (s - 1.0) ** 2 * (s + x3 - 1.0) - x3
                 + 0.5 * math.sin(2.0 * t) + math.cos(2.0 * t))
    out[4, 0] = math.cos(float(xf[12]))
    return out


def example1_suite():
    """Five heterogeneous third-order SISO agents with an unknown nonlinear
    leader, on the default ring topology."""
    g_unit = np.eye(1)
    models = [
        AgentModel(order=3, channels=1, f=f, g_mat=g_unit)
        for f in (_siso_f1, _siso_f2, _siso_f3, _siso_f4, _siso_f5)
    ]
    leader = LeaderModel(
        order=3, channels=1, field=_siso_leader_field,
        initial=np.full((3, 1), 0.3))
    initial = np.array([
        [-0.2850, -0.0821, -0.2126],
        [-0.6044, -0.3964, -0.0775],
        [-0.2110, -0.4237, -0.3253],
        [-0.1501, -0.3986, -0.0050],
        [-0.3281, 0.1618, -0.4160],
    ]).reshape(5, 3, 1)
    defaults = ScenarioDefaults(
        name="example1", rho0=5.0, rho_inf=0.03, decay=0.6,
        delta_upper=4.0, delta_lower=5.0, c=30.0, k=0.1,
        gamma1=10000.0, gamma2=10000.0, initial_states=initial)
    return models, leader, defaults


# ----------------------------------------------------------------------------
# Benchmark suite 2: five second-order two-channel agents with time-varying
# disturbances, tracking a cosine leader trajectory.
# ----------------------------------------------------------------------------

_MIMO_A = np.array([[1.5, 0.5], [0.5, 1.4], [0.7, 0.1], [1.3, 1.3],
                    [0.7, 2.4]])
_MIMO_B = np.array([[0.5, 0.7], [1.5, 1.2], [1.1, 1.3], [1.6, 0.5],
                    [0.3, 0.3]])
_MIMO_C = np.array([[1.5, 0.5], [2.5, 1.7], [0.5, 1.1], [1.7, 0.3],
                    [0.7, 0.4]])
_MIMO_POSITIONS = np.array([
    [0.2310, -0.0276],
    [-0.1362, -0.4615],
    [-0.2867, -0.1315],
    [0.5157, 0.3539],
    [-0.4700, 0.4070],
])


def mimo_psi(c1, c2, t):
    """Time-varying parametric disturbance matrix of one MIMO agent."""
    return ((3.0 * c1 * math.sin(0.5 * t),
             2.0 * c1 * math.sin(0.4 * c1 * t) * math.cos(0.3 * t)),
            (0.9 * math.sin(0.2 * c2 * t),
             2.5 * math.sin(0.3 * c2 * t) + 0.3 * math.cos(t)))


def mimo_disturbance(b1, b2, t):
    """Additive external disturbance of one MIMO agent."""
    return (1.0 + b1 * math.sin(b1 * t), 1.2 * math.cos(b2 * t))


def _make_mimo_f(a1, a2, b1, b2, c1, c2):
    def f(x, t):
        x1, x2 = x[0, 0], x[0, 1]
        xd1, xd2 = x[1, 0], x[1, 1]
        nl1 = a1 * x2 * x1 ** 2 * xd2 + 0.2 * math.sin(a1 * x1 * xd1)
        nl2 = -a2 * x1 * x2 * xd1 \
            - 0.2 * a2 * math.cos(a2 * x2 * t) * x1 * xd2
        (p11, p12), (p21, p22) = mimo_psi(c1, c2, t)
        d1, d2 = mimo_disturbance(b1, b2, t)
        return [nl1 + p11 * x1 + p12 * x2 + d1,
                nl2 + p21 * x1 + p22 * x2 + d2]
    return f


def _mimo_leader_orders(t):
    return [[0.6 * math.cos(0.6 * t), 0.8 * math.cos(0.5 * t)],
            [-0.36 * math.sin(0.6 * t), -0.4 * math.sin(0.5 * t)]]


_MIMO_SCALARS = [tuple(map(float, (_MIMO_A[i, 0], _MIMO_A[i, 1],
                                   _MIMO_B[i, 0], _MIMO_B[i, 1],
                                   _MIMO_C[i, 0], _MIMO_C[i, 1])))
                 for i in range(5)]


def _mimo_vector_f(x, t, out):
    # fused evaluation of all five agents; must agree with _make_mimo_f
    xf = x.reshape(-1)
    for i, (a1, a2, b1, b2, c1, c2) in enumerate(_MIMO_SCALARS):
        base = 4 * i
        x1, x2 = float(xf[base]), float(xf[base + 1])
        xd1, xd2 = float(xf[base + 2]), float(xf[base + 3])
        p11 = 3.0 * c1 * math.sin(0.5 * t)
        p12 = 2.0 * c1 * math.sin(0.4 * c1 * t) * math.cos(0.3 * t)
        p21 = 0.9 * math.sin(0.2 * c2 * t)
        p22 = 2.5 * math.sin(0.3 * c2 * t) + 0.3 * math.cos(t)
        out[i, 0] = (a1 * x2 * x1 * x1 * xd2 + 0.2 * math.sin(a1 * x1 * xd1)
                     + p11 * x1 + p12 * x2 + 1.0 + b1 * math.sin(b1 * t))
        out[i, 1] = (-a2 * x1 * x2 * xd1
                     - 0.2 * a2 * math.cos(a2 * x2 * t) * x1 * xd2
                     + p21 * x1 + p22 * x2 + 1.2 * math.cos(b2 * t))
    return out


def example2_suite(rng_seed=42):
    """Five heterogeneous second-order MIMO agents with time-varying
    disturbances; velocity initial conditions are drawn standard-normal
    from the seeded 64-bit generator so runs are reproducible."""
    models = [
        AgentModel(order=2, channels=2,
                   f=_make_mimo_f(_MIMO_A[i, 0], _MIMO_A[i, 1],
                                  _MIMO_B[i, 0], _MIMO_B[i, 1],
                                  _MIMO_C[i, 0], _MIMO_C[i, 1]),
                   g_mat=np.eye(2))
        for i in range(5)
    ]
    leader = LeaderModel(order=2, channels=2, trajectory=_mimo_leader_orders)
    velocities = np.random.default_rng(rng_seed).standard_normal((5, 2))
    initial = np.stack([_MIMO_POSITIONS, velocities], axis=1)
    defaults = ScenarioDefaults(
        name="example2", rho0=7.0, rho_inf=0.03, decay=0.6,
        delta_upper=7.0, delta_lower=7.0, c=30.0, k=0.01,
        gamma1=100.0, gamma2=100.0, initial_states=initial)
    return models, leader, defaults


SUITE_REGISTRY = {
    "example1": example1_suite,
    "example2": example2_suite,
}

# fused nonlinearity evaluators for the hot loop, keyed like the registry
VECTOR_F_REGISTRY = {
    "example1": _siso_vector_f,
    "example2": _mimo_vector_f,
}


def default_graph():
    """Topology shared by both benchmark suites."""
    return default_five_ring()


__all__ = [
    "AgentModel", "LeaderModel", "SyncError", "ScenarioDefaults",
    "eval_agent_field", "sync_error", "sync_error_kron",
    "example1_suite", "example2_suite", "SUITE_REGISTRY",
    "default_graph", "build_graph",
]
