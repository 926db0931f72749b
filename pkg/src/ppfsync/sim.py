"""Closed-loop assembly, fixed-step integration, and trace recording.

One scenario is one strictly sequential integration loop over a flat state
vector [agent states | leader state (field form only) | theta_hat |
omega_hat]. The adaptive estimates are integrated as part of the same
coupled system. The first integration stage of each step doubles as the
trace sample, so sampling every step costs no extra field evaluations.
"""
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .controller import (
    ControllerParams,
    FilterContext,
    GainCheckInputs,
    gain_check,
    lambda_bar_from_root,
    lyapunov_diagnostic,
)
from .dynamics import LeaderModel, sync_error, sync_error_kron
from .errors import (
    DimensionMismatch,
    EmptyTrace,
    FunnelViolation,
    NonFiniteState,
)
from .graph import DirectedGraph, laplacian_quantities

log = logging.getLogger("ppfsync")

try:
    from numba import njit as _njit
    _HAVE_NUMBA = True
except ImportError:    # pragma: no cover - numba is an optional accelerator
    _HAVE_NUMBA = False

    def _njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap


@_njit(cache=True)
def _field_core(y, t, x0, f_vals, leader_deriv, dy, n, order, channels,
                n_x, pinned, lo_eff, up_eff, rho_span, rho_inf, neg_decay,
                rho_dot_span, lambda_bar, c, k, gamma1, gamma2, db_m,
                d_plus_b, g_inv, g_stack, g_identity):
    """Compiled flat-state field evaluation; mirrors the numpy path.

    Returns 0 on success or 1 + i*channels + p identifying the first
    funnel-violating agent/channel (the caller raises with context).
    """
    e = np.empty((n, order, channels))
    for m in range(order):
        for p in range(channels):
            x0mp = x0[m * channels + p]
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    a = pinned[i, j]
                    if a != 0.0:
                        acc += a * (y[(j * order + m) * channels + p] - x0mp)
                e[i, m, p] = acc

    u_ctrl = np.empty((n, channels))
    rhs = np.empty(channels)
    theta_off = n_x + leader_deriv.shape[0]
    omega_off = theta_off + n * channels
    for i in range(n):
        x_inf = 0.0
        base = i * order * channels
        for s in range(order * channels):
            v = abs(y[base + s])
            if v > x_inf:
                x_inf = v
        for p in range(channels):
            env = np.exp(neg_decay[i, p] * t)
            rho = rho_span[i, p] * env + rho_inf[i, p]
            rho_dot = rho_dot_span[i, p] * env
            u_norm = e[i, 0, p] / rho
            lo_pu = lo_eff[i, p] + u_norm
            up_mu = up_eff[i, p] - u_norm
            if lo_pu <= 0.0 or up_mu <= 0.0:
                return 1 + i * channels + p
            r = (1.0 / lo_pu + 1.0 / up_mu) / (2.0 * rho)
            ratio = rho_dot / rho
            metric = 0.0
            correction = 0.0
            prev = 0.0
            for m in range(order):
                if m == 0:
                    eps_m = 0.5 * np.log(lo_pu / up_mu)
                else:
                    eps_m = r * (e[i, m, p] - e[i, m - 1, p] * ratio)
                    correction += lambda_bar[m - 1] * eps_m
                if m == order - 1:
                    metric += eps_m
                else:
                    metric += lambda_bar[m] * eps_m
            theta_ip = y[theta_off + i * channels + p]
            omega_ip = y[omega_off + i * channels + p]
            total = c * metric + theta_ip * x_inf + omega_ip
            if order > 1:
                total += correction / (r * d_plus_b[i])
            rhs[p] = total
            drive = db_m[i] * r * metric
            dy[theta_off + i * channels + p] = \
                gamma1[i] * (drive * x_inf - k * theta_ip)
            dy[omega_off + i * channels + p] = \
                gamma2[i] * (drive - k * omega_ip)
        if g_identity:
            for p in range(channels):
                u_ctrl[i, p] = -rhs[p]
        else:
            for p in range(channels):
                acc = 0.0
                for q in range(channels):
                    acc += g_inv[i, p, q] * rhs[q]
                u_ctrl[i, p] = -acc

    for i in range(n):
        base = i * order * channels
        for m in range(order - 1):
            for p in range(channels):
                dy[base + m * channels + p] = y[base + (m + 1) * channels + p]
        top = base + (order - 1) * channels
        if g_identity:
            for p in range(channels):
                dy[top + p] = f_vals[i, p] + u_ctrl[i, p]
        else:
            for p in range(channels):
                acc = 0.0
                for q in range(channels):
                    acc += g_stack[i, p, q] * u_ctrl[i, q]
                dy[top + p] = f_vals[i, p] + acc
    for s in range(leader_deriv.shape[0]):
        dy[n_x + s] = leader_deriv[s]
    return 0


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete experiment description, fully resolved and validated."""

    name: str
    graph: DirectedGraph
    models: list
    leader: LeaderModel
    initial_states: np.ndarray      # (n, order, channels)
    rho0: np.ndarray                # all ppf tables are (n, channels)
    rho_inf: np.ndarray
    decay: np.ndarray
    delta_upper: np.ndarray
    delta_lower: np.ndarray
    controller: ControllerParams
    h: float = 1e-3
    t_final: float = 20.0
    seed: int = 42
    decimate: int = 1
    substeps: int = 2
    q_rule: str = "inverse"
    debug: bool = False
    bounds: Optional[GainCheckInputs] = None
    trace_path: Optional[str] = None
    summary_path: Optional[str] = None
    models_doc: object = None    # raw models section, kept for serialization
    vector_f: object = None      # optional fused nonlinearity for the hot loop

    def __post_init__(self):
        if self.h <= 0.0:
            raise ValueError("step size h must be positive")
        if self.t_final < 0.0:
            raise ValueError("horizon must be nonnegative")
        if self.decimate < 1:
            raise ValueError("decimate must be >= 1")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        n = self.graph.n
        if len(self.models) != n:
            raise DimensionMismatch(
                f"{len(self.models)} models for {n} graph nodes")
        order = self.models[0].order
        channels = self.models[0].channels
        for m in self.models:
            if (m.order, m.channels) != (order, channels):
                raise DimensionMismatch(
                    "all agents must share one order and channel count")
        if (self.leader.order, self.leader.channels) != (order, channels):
            raise DimensionMismatch("leader order/channels mismatch")
        if self.initial_states.shape != (n, order, channels):
            raise DimensionMismatch(
                f"initial states shape {self.initial_states.shape}, expected "
                f"{(n, order, channels)}")

    @property
    def order(self):
        return self.models[0].order

    @property
    def channels(self):
        return self.models[0].channels


@dataclass
class SimState:
    """Structured view of one point of the closed-loop state."""

    x: np.ndarray                   # (n, order, channels)
    leader_state: Optional[np.ndarray]   # (order, channels) for field form
    theta_hat: np.ndarray           # (n, channels)
    omega_hat: np.ndarray           # (n, channels)
    t: float


class ClosedLoop:
    """Vector field of plant + controller + adaptive laws on a flat state.

    The evaluation order per call mirrors the per-step control recipe:
    synchronization errors, funnel radii, funnel gain r, transformed-error
    chain, metric error, control signal, estimate derivatives, then the
    stacked plant and estimate derivatives.
    """

    def __init__(self, cfg, gq, filter_ctx):
        self.cfg = cfg
        self.gq = gq
        self.filter_ctx = filter_ctx
        n, order, channels = cfg.graph.n, cfg.order, cfg.channels
        self.n, self.order, self.channels = n, order, channels

        self.pinned = np.ascontiguousarray(gq.pinned)
        self.d_plus_b = gq.in_degree + cfg.graph.pinning
        self.m_weights = gq.m_weights
        self.db_m = (self.d_plus_b * self.m_weights)[:, None]
        self.lambda_bar = filter_ctx.lambda_bar
        p = cfg.controller
        self.c, self.k, self.beta = p.c, p.k, p.beta
        self.gamma1 = p.gamma1[:, None]
        self.gamma2 = p.gamma2[:, None]

        self.rho_span = cfg.rho0 - cfg.rho_inf
        self.rho_inf = cfg.rho_inf
        self.neg_decay = -cfg.decay
        self.rho_dot_span = self.neg_decay * self.rho_span

        g_stack = np.stack([np.asarray(m.g_mat, dtype=float)
                            for m in cfg.models])
        self.g_stack = g_stack
        self.g_inv = np.linalg.inv(g_stack)
        self.g_is_identity = bool(
            np.all(g_stack == np.eye(channels)[None, :, :]))
        self.models = list(cfg.models)
        self.vector_f = cfg.vector_f
        self._f_buf = np.empty((n, channels))

        thetas = [m.true_theta for m in cfg.models]
        omegas = [m.true_omega for m in cfg.models]
        self.ground_truth = None
        if all(v is not None for v in thetas + omegas):
            self.ground_truth = (np.array(thetas, dtype=float),
                                 np.array(omegas, dtype=float))

        # flat layout: agents | leader (field form) | theta | omega
        self.leader_is_ode = cfg.leader.field is not None
        self.n_x = n * order * channels
        self.n_l = order * channels if self.leader_is_ode else 0
        self.i_th = self.n_x + self.n_l
        self.i_om = self.i_th + n * channels
        self.n_flat = self.i_om + n * channels

        # branch bounds fixed from the sign of the initial first-order error
        e0 = self.pinned @ (
            cfg.initial_states[:, 0, :]
            - cfg.leader.orders_at(0.0, cfg.leader.initial)[0][None, :])
        positive = e0 >= 0.0
        self.lo_eff = np.where(positive, cfg.delta_lower, cfg.delta_upper)
        self.up_eff = np.where(positive, cfg.delta_upper, cfg.delta_lower)
        self.positive_start = positive

        self._leader_buf = np.empty(self.n_l)
        self._use_core = _HAVE_NUMBA and not cfg.debug
        p = cfg.controller
        self._core_args = (
            n, order, channels, self.n_x, self.pinned,
            np.ascontiguousarray(self.lo_eff),
            np.ascontiguousarray(self.up_eff),
            np.ascontiguousarray(self.rho_span),
            np.ascontiguousarray(cfg.rho_inf),
            np.ascontiguousarray(self.neg_decay),
            np.ascontiguousarray(self.rho_dot_span),
            np.ascontiguousarray(self.lambda_bar, dtype=float),
            float(p.c), float(p.k),
            np.ascontiguousarray(p.gamma1, dtype=float),
            np.ascontiguousarray(p.gamma2, dtype=float),
            np.ascontiguousarray(self.d_plus_b * self.m_weights),
            np.ascontiguousarray(self.d_plus_b),
            np.ascontiguousarray(self.g_inv),
            np.ascontiguousarray(self.g_stack),
            self.g_is_identity)

    def initial_flat(self):
        y = np.empty(self.n_flat)
        y[: self.n_x] = self.cfg.initial_states.reshape(-1)
        if self.leader_is_ode:
            y[self.n_x: self.i_th] = self.cfg.leader.initial.reshape(-1)
        y[self.i_th:] = 0.0    # adaptive estimates start at zero
        return y

    def unpack(self, y, t):
        n, order, channels = self.n, self.order, self.channels
        leader = None
        if self.leader_is_ode:
            leader = y[self.n_x: self.i_th].reshape(order, channels).copy()
        return SimState(
            x=y[: self.n_x].reshape(n, order, channels).copy(),
            leader_state=leader,
            theta_hat=y[self.i_th: self.i_om].reshape(n, channels).copy(),
            omega_hat=y[self.i_om:].reshape(n, channels).copy(),
            t=t,
        )

    def leader_orders(self, t, y):
        if self.leader_is_ode:
            return y[self.n_x: self.i_th].reshape(self.order, self.channels)
        return np.asarray(self.cfg.leader.trajectory(t), dtype=float)

    def __call__(self, t, y):
        return self.derivative(t, y)

    def derivative(self, t, y, collect=False):
        if self._use_core and not collect:
            return self._derivative_core(t, y)
        return self._derivative_numpy(t, y, collect)

    def _derivative_core(self, t, y):
        n, order, channels = self.n, self.order, self.channels
        x0 = self.leader_orders(t, y)
        x = y[: self.n_x].reshape(n, order, channels)
        f_buf = self._f_buf
        if self.vector_f is not None:
            self.vector_f(x, t, f_buf)
        else:
            for i in range(n):
                f_buf[i] = self.models[i].f(x[i], t)
        x0_flat = x0.reshape(-1)
        if self.leader_is_ode:
            ld = self._leader_buf
            ld[: -channels] = x0_flat[channels:]
            ld[-channels:] = self.cfg.leader.field(t, x0)
        else:
            ld = self._leader_buf
        dy = np.empty(self.n_flat)
        code = _field_core(
            y, t, x0_flat, f_buf, ld, dy, *self._core_args)
        if code:
            # re-run the slow path to raise with full context
            return self._derivative_numpy(t, y, False)
        return dy

    def _derivative_numpy(self, t, y, collect=False):
        n, order, channels = self.n, self.order, self.channels
        x = y[: self.n_x].reshape(n, order, channels)
        x0 = self.leader_orders(t, y)
        theta_hat = y[self.i_th: self.i_om].reshape(n, channels)
        omega_hat = y[self.i_om:].reshape(n, channels)

        # synchronization errors for every order in one multiply
        diff = x - x0[None, :, :]
        e = (self.pinned @ diff.reshape(n, -1)).reshape(n, order, channels)

        if self.cfg.debug:
            ref = sync_error(x, x0, self.cfg.graph).e
            kron = sync_error_kron(x, x0, self.cfg.graph).e
            if np.max(np.abs(e - ref)) > 1e-12 or \
                    np.max(np.abs(e - kron)) > 1e-12:
                raise AssertionError("sync-error forms disagree")

        env = np.exp(self.neg_decay * t)
        rho = self.rho_span * env + self.rho_inf
        rho_dot = self.rho_dot_span * env

        u_norm = e[:, 0, :] / rho
        lo_pu = self.lo_eff + u_norm
        up_mu = self.up_eff - u_norm
        if lo_pu.min() <= 0.0 or up_mu.min() <= 0.0:
            bad = np.argwhere((lo_pu <= 0.0) | (up_mu <= 0.0))[0]
            i, p = int(bad[0]), int(bad[1])
            raise FunnelViolation(
                f"agent {i + 1} channel {p + 1} at t={t:.6f}: normalized "
                f"error {u_norm[i, p]:.6g} outside "
                f"({-self.lo_eff[i, p]:.6g}, {self.up_eff[i, p]:.6g})",
                t=t, agent=i + 1, channel=p + 1, ratio=float(u_norm[i, p]))

        lambda_bar = self.lambda_bar
        eps = np.empty((n, order, channels))
        eps[:, 0, :] = 0.5 * np.log(lo_pu / up_mu)
        r = (1.0 / lo_pu + 1.0 / up_mu) / (2.0 * rho)
        if order > 1:
            ratio = (rho_dot / rho)[:, None, :]
            eps[:, 1:, :] = r[:, None, :] * (e[:, 1:, :] - e[:, :-1, :] * ratio)
            metric = eps[:, -1, :].copy()
            correction = lambda_bar[0] * eps[:, 1, :]
            for j in range(order - 1):
                metric += lambda_bar[j] * eps[:, j, :]
                if j:
                    correction = correction + lambda_bar[j] * eps[:, j + 1, :]
        else:
            metric = eps[:, 0, :]

        x_inf = np.abs(x.reshape(n, -1)).max(axis=1)

        rhs = self.c * metric + theta_hat * x_inf[:, None] + omega_hat
        if order > 1:
            rhs = rhs + correction / (r * self.d_plus_b[:, None])
        if self.g_is_identity:
            u = -rhs
        else:
            u = -np.matmul(self.g_inv, rhs[:, :, None])[:, :, 0]

        drive = self.db_m * r * metric
        theta_dot = self.gamma1 * (drive * x_inf[:, None] - self.k * theta_hat)
        omega_dot = self.gamma2 * (drive - self.k * omega_hat)

        f_buf = self._f_buf
        if self.vector_f is not None:
            self.vector_f(x, t, f_buf)
        else:
            for i in range(n):
                f_buf[i] = self.models[i].f(x[i], t)
        if self.g_is_identity:
            top = f_buf + u
        else:
            top = f_buf + np.matmul(self.g_stack, u[:, :, None])[:, :, 0]

        dy = np.empty(self.n_flat)
        dx = dy[: self.n_x].reshape(n, order, channels)
        dx[:, :-1, :] = x[:, 1:, :]
        dx[:, -1, :] = top
        if self.leader_is_ode:
            dl = dy[self.n_x: self.i_th].reshape(order, channels)
            dl[:-1] = x0[1:]
            dl[-1] = self.cfg.leader.field(t, x0)
        dy[self.i_th: self.i_om] = theta_dot.reshape(-1)
        dy[self.i_om:] = omega_dot.reshape(-1)

        if not collect:
            return dy

        margin = np.minimum(self.up_eff * rho - e[:, 0, :],
                            e[:, 0, :] + self.lo_eff * rho)
        v = np.nan
        if self.ground_truth is not None:
            theta_true, omega_true = self.ground_truth
            v = lyapunov_diagnostic(
                metric, eps[:, :-1, :] if order > 1 else None,
                theta_true - theta_hat, omega_true - omega_hat,
                self.gq, self.filter_ctx, self.cfg.controller)
        diag = {
            "x": x.copy(), "x0": x0.copy(), "e": e, "rho": rho, "eps": eps,
            "metric": metric, "u": u, "theta_hat": theta_hat.copy(),
            "omega_hat": omega_hat.copy(), "margin": margin, "v": v,
        }
        return dy, diag


def assemble_closed_loop(cfg):
    """Resolve graph quantities and the filter, then build the closed loop."""
    gq = laplacian_quantities(cfg.graph, cfg.q_rule)
    lambda_bar = lambda_bar_from_root(cfg.controller.lam, cfg.order)
    filter_ctx = FilterContext.build(lambda_bar, cfg.controller.beta)
    return ClosedLoop(cfg, gq, filter_ctx)


def rk4_step(field, y, t, h, k1=None):
    """Classical four-stage fixed-step update from t to t+h.

    Funnel violations inside a stage are annotated with the stage index;
    a non-finite result aborts the step.
    """
    stage = 1
    try:
        if k1 is None:
            k1 = field(t, y)
        stage = 2
        k2 = field(t + 0.5 * h, y + (0.5 * h) * k1)
        stage = 3
        k3 = field(t + 0.5 * h, y + (0.5 * h) * k2)
        stage = 4
        k4 = field(t + h, y + h * k3)
    except FunnelViolation as exc:
        exc.stage = stage
        raise
    out = y + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    if not np.all(np.isfinite(out)):
        raise NonFiniteState(f"non-finite state after step from t={t:.6f}")
    return out


@dataclass
class TraceRecord:
    """Time-indexed log of one run, one row per retained sample."""

    columns: list
    data: np.ndarray
    n: int
    order: int
    channels: int
    lo_eff: np.ndarray
    up_eff: np.ndarray
    rho_inf: np.ndarray
    sigma_min_pinned: float
    index: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {name: j for j, name in enumerate(self.columns)}

    def col(self, name):
        return self.data[:, self.index[name]]

    def block(self, prefix):
        """All columns starting with `prefix`, in header order."""
        cols = [j for j, name in enumerate(self.columns)
                if name.startswith(prefix)]
        return self.data[:, cols]

    @property
    def t(self):
        return self.data[:, 0]


def trace_columns(n, order, channels):
    """Canonical agent/order/channel-qualified column schema."""

    def per_order(name):
        return [f"{name}_a{i}_o{m}_c{p}"
                for i in range(1, n + 1)
                for m in range(1, order + 1)
                for p in range(1, channels + 1)]

    def per_channel(name):
        return [f"{name}_a{i}_c{p}"
                for i in range(1, n + 1)
                for p in range(1, channels + 1)]

    cols = ["t"]
    cols += per_order("x")
    cols += [f"x0_o{m}_c{p}"
             for m in range(1, order + 1)
             for p in range(1, channels + 1)]
    cols += per_order("e")
    cols += per_channel("rho")
    cols += per_order("eps")
    for name in ("E", "u", "theta", "omega", "margin"):
        cols += per_channel(name)
    cols.append("V")
    return cols


def _diag_row(t, diag, n_cols):
    row = np.empty(n_cols)
    row[0] = t
    pos = 1
    for key in ("x", "x0", "e", "rho", "eps", "metric", "u",
                "theta_hat", "omega_hat", "margin"):
        block = diag[key].reshape(-1)
        row[pos: pos + block.size] = block
        pos += block.size
    row[pos] = diag["v"]
    return row


def run_scenario(cfg):
    """Integrate the closed loop over [0, t_final] and summarize the run.

    Each grid step h advances with `substeps` internal four-stage updates;
    the default of two keeps the marginally stiff adaptation coupling of
    the high-gain benchmark inside the explicit stability region while the
    grid, trace, and determinism contract stay at h. The trace is sampled
    every `decimate` grid steps plus the terminal state. On a funnel
    violation the partial trace is still written (when paths are
    configured) before the error propagates.
    """
    started = time.perf_counter()
    loop = assemble_closed_loop(cfg)
    y = loop.initial_flat()
    h = cfg.h
    h_sub = h / cfg.substeps
    n_steps = int(round(cfg.t_final / h)) if cfg.t_final > 0 else 0

    cols = trace_columns(loop.n, loop.order, loop.channels)
    n_rows = n_steps // cfg.decimate + 2
    data = np.empty((n_rows, len(cols)))
    n_recorded = 0

    def record(t, diag):
        nonlocal n_recorded
        data[n_recorded] = _diag_row(t, diag, len(cols))
        n_recorded += 1

    def make_trace():
        return TraceRecord(
            columns=cols, data=data[:n_recorded].copy(), n=loop.n,
            order=loop.order, channels=loop.channels, lo_eff=loop.lo_eff,
            up_eff=loop.up_eff, rho_inf=cfg.rho_inf,
            sigma_min_pinned=loop.gq.sigma_min_pinned)

    try:
        for step in range(n_steps + 1):
            t = step * h
            if step == n_steps:
                _, diag = loop.derivative(t, y, collect=True)
                record(t, diag)
                break
            if step % cfg.decimate == 0:
                k1, diag = loop.derivative(t, y, collect=True)
                record(t, diag)
            else:
                k1 = loop.derivative(t, y)
            y = rk4_step(loop, y, t, h_sub, k1=k1)
            for sub in range(1, cfg.substeps):
                y = rk4_step(loop, y, t + sub * h_sub, h_sub)
    except FunnelViolation:
        trace = make_trace()
        if cfg.trace_path and n_recorded:
            write_trace_csv(trace, cfg.trace_path)
            log.warning("funnel violation: partial trace written to %s",
                        cfg.trace_path)
        raise

    trace = make_trace()
    summary = summarize(trace)
    summary.runtime_seconds = time.perf_counter() - started
    summary.scenario = cfg.name
    if cfg.bounds is not None:
        report = gain_check(loop.gq, cfg.bounds, cfg.controller,
                            loop.filter_ctx)
        summary.gain_report = report
    if cfg.trace_path:
        write_trace_csv(trace, cfg.trace_path)
    if cfg.summary_path:
        write_summary(summary, cfg.summary_path)
    return trace, summary


@dataclass
class SummaryReport:
    """Aggregate statistics of one accepted run."""

    samples: int
    violation_count: int
    max_occupancy: float
    min_funnel_margin: float
    max_abs_terminal_error: float
    settling_time: list
    max_abs_u: float
    rms_u: float
    disagreement_satisfaction_rate: float
    scenario: str = ""
    runtime_seconds: float = 0.0
    gain_report: object = None

    def to_dict(self):
        out = {
            "scenario": self.scenario,
            "samples": self.samples,
            "violation_count": self.violation_count,
            "max_occupancy": self.max_occupancy,
            "min_funnel_margin": self.min_funnel_margin,
            "max_abs_terminal_error": self.max_abs_terminal_error,
            "settling_time": self.settling_time,
            "max_abs_u": self.max_abs_u,
            "rms_u": self.rms_u,
            "disagreement_satisfaction_rate":
                self.disagreement_satisfaction_rate,
            "runtime_seconds": self.runtime_seconds,
        }
        if self.gain_report is not None:
            out["gain_report"] = gain_report_dict(self.gain_report)
        return out


def gain_report_dict(report):
    """Deterministic plain-dict form of a GainReport for serialization."""
    return {
        "c_given": report.c_given,
        "c_required": report.c_required,
        "gamma1": report.gamma1,
        "gamma2": report.gamma2,
        "g": report.g,
        "nu": report.nu,
        "mu": report.mu,
        "h_matrix": [[float(v) for v in row] for row in report.h_matrix],
        "leading_minors": [float(v) for v in report.minors],
        "sylvester_ok": report.sylvester_ok,
        "eta": report.eta,
        "t0_estimate": report.t0_estimate,
        "feasible": report.feasible,
    }


def summarize(trace, settle_margin=1.0):
    """Settling, occupancy, effort, and disagreement statistics of a trace.

    The disagreement check asserts ||x^1 - x0^1|| <= ||e^1|| / sigma_min
    at every sample; accepted runs must satisfy it everywhere.
    """
    if trace.data.shape[0] == 0:
        raise EmptyTrace("no samples recorded")
    n, order, channels = trace.n, trace.order, trace.channels
    t = trace.t
    n_samples = t.shape[0]

    e_first = np.empty((n_samples, n, channels))
    x_first = np.empty((n_samples, n, channels))
    for i in range(1, n + 1):
        for p in range(1, channels + 1):
            e_first[:, i - 1, p - 1] = trace.col(f"e_a{i}_o1_c{p}")
            x_first[:, i - 1, p - 1] = trace.col(f"x_a{i}_o1_c{p}")
    x0_first = np.stack(
        [trace.col(f"x0_o1_c{p}") for p in range(1, channels + 1)], axis=1)
    rho = np.empty((n_samples, n, channels))
    for i in range(1, n + 1):
        for p in range(1, channels + 1):
            rho[:, i - 1, p - 1] = trace.col(f"rho_a{i}_c{p}")

    margins = trace.block("margin_")
    violation_count = int(np.sum(np.any(margins <= 0.0, axis=1)))
    min_margin = float(margins.min())

    occupancy = np.abs(e_first) / rho
    max_occupancy = float(occupancy.max())

    band = trace.rho_inf[None, :, :] * (1.0 + settle_margin)
    settled = np.abs(e_first) <= band
    settling = []
    for i in range(n):
        for p in range(channels):
            outside = np.nonzero(~settled[:, i, p])[0]
            if outside.size == 0:
                settling.append(float(t[0]))
            elif outside[-1] + 1 < n_samples:
                settling.append(float(t[outside[-1] + 1]))
            else:
                settling.append(None)

    u = trace.block("u_")
    max_abs_u = float(np.abs(u).max())
    rms_u = float(np.sqrt(np.mean(u ** 2)))

    disagreement = np.linalg.norm(
        (x_first - x0_first[:, None, :]).reshape(n_samples, -1), axis=1)
    e_norm = np.linalg.norm(e_first.reshape(n_samples, -1), axis=1)
    bound = e_norm / trace.sigma_min_pinned
    ok = disagreement <= bound + 1e-9
    rate = float(np.mean(ok))

    return SummaryReport(
        samples=n_samples,
        violation_count=violation_count,
        max_occupancy=max_occupancy,
        min_funnel_margin=min_margin,
        max_abs_terminal_error=float(np.abs(e_first[-1]).max()),
        settling_time=settling,
        max_abs_u=max_abs_u,
        rms_u=rms_u,
        disagreement_satisfaction_rate=rate,
    )


def write_trace_csv(trace, path):
    """CSV with the canonical header and 15-significant-digit values."""
    np.savetxt(path, trace.data, delimiter=",", fmt="%.15g",
               header=",".join(trace.columns), comments="")


def write_summary(summary, path):
    with open(path, "w") as fh:
        json.dump(summary.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
