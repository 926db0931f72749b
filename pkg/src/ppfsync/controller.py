"""Distributed control law, adaptive estimate updates, and stability checks.

The transformed-error chain of each agent is collapsed by a stable filter
(d/dt + lam)^{M-1} into a single metric error E per channel. The control
input drives E with gain c while the adaptive estimates absorb the unknown
dynamics; the gain check evaluates the conservative feasibility condition
and the residual-set diagnostics.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    NotHurwitz,
    SingularInputMatrix,
    SingularLyapunovSystem,
    ZeroDegreePlusPinning,
)
from .graph import max_singular_value, min_singular_value


@dataclass(frozen=True)
class ControllerParams:
    """Gains shared by the control and adaptation laws.

    gamma1/gamma2 are per-agent adaptation gains; lam is the filter root
    whose binomial expansion supplies the metric-error coefficients.
    """

    c: float
    k: float
    gamma1: np.ndarray    # (n,)
    gamma2: np.ndarray    # (n,)
    lam: float
    beta: float = 1.0

    def __post_init__(self):
        # lam is vetted downstream by the Hurwitz test on the filter
        if min(self.c, self.k, self.beta) <= 0.0:
            raise ValueError("c, k, beta must all be positive")
        if np.any(np.asarray(self.gamma1) <= 0.0) or \
                np.any(np.asarray(self.gamma2) <= 0.0):
            raise ValueError("adaptation gains must be positive")


def lambda_bar_from_root(lam, order):
    """Binomial coefficients of (s + lam)^{order-1}, lowest order first.

    Entry j-1 multiplies the order-j transformed error in the metric error,
    so lambda_bar[j-1] = C(order-1, j-1) lam^(order-j); the leading (order-1)
    coefficient is an implicit 1.
    """
    m1 = order - 1
    return np.array([math.comb(m1, j) * lam ** (m1 - j) for j in range(m1)])


def companion_matrix(lambda_bar):
    """Companion realization of the filter polynomial; must be Hurwitz.

    Shifted-identity rows with last row -lambda_bar. Raises NotHurwitz when
    any eigenvalue has nonnegative real part.
    """
    lambda_bar = np.asarray(lambda_bar, dtype=float)
    m1 = lambda_bar.shape[0]
    if m1 < 1:
        raise ValueError("filter order must be at least 1 (system order >= 2)")
    lam_mat = np.zeros((m1, m1))
    lam_mat[:-1, 1:] = np.eye(m1 - 1)
    lam_mat[-1, :] = -lambda_bar
    eigs = np.linalg.eigvals(lam_mat)
    if np.any(eigs.real >= 0.0):
        raise NotHurwitz(
            f"filter eigenvalues {np.sort_complex(eigs)} are not all in the "
            "open left half plane")
    return lam_mat


def solve_lyapunov(lam_mat, beta):
    """Symmetric positive definite M with Lam^T M + M Lam = -beta I.

    Solved by vectorizing the linear system with Kronecker products; the
    residual is asserted below 1e-10 and positive definiteness is verified.
    """
    lam_mat = np.asarray(lam_mat, dtype=float)
    m1 = lam_mat.shape[0]
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    eye = np.eye(m1)
    system = np.kron(eye, lam_mat.T) + np.kron(lam_mat.T, eye)
    try:
        vec = np.linalg.solve(system, -beta * eye.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise SingularLyapunovSystem(str(exc)) from exc
    m_lyap = vec.reshape(m1, m1)
    m_lyap = 0.5 * (m_lyap + m_lyap.T)
    residual = np.linalg.norm(
        lam_mat.T @ m_lyap + m_lyap @ lam_mat + beta * eye)
    if residual > 1e-10:
        raise SingularLyapunovSystem(
            f"residual {residual:.3e} exceeds 1e-10; matrix not Hurwitz?")
    if np.linalg.eigvalsh(m_lyap)[0] <= 0.0:
        raise SingularLyapunovSystem("solution is not positive definite")
    return m_lyap


@dataclass(frozen=True)
class FilterContext:
    """Filter companion matrix with its Lyapunov certificate.

    Degenerate for first-order systems: empty matrices, metric error
    reduces to the first transformed error.
    """

    lambda_bar: np.ndarray
    lam_mat: np.ndarray
    m_lyap: np.ndarray

    @staticmethod
    def build(lambda_bar, beta):
        lambda_bar = np.asarray(lambda_bar, dtype=float)
        if lambda_bar.size == 0:
            empty = np.zeros((0, 0))
            return FilterContext(lambda_bar, empty, empty)
        lam_mat = companion_matrix(lambda_bar)
        return FilterContext(lambda_bar, lam_mat, solve_lyapunov(lam_mat, beta))

    @property
    def last_selector(self):
        """Unit vector picking the last filter coordinate."""
        m1 = self.lambda_bar.shape[0]
        l = np.zeros(m1)
        if m1:
            l[-1] = 1.0
        return l


def metric_error(eps, lambda_bar):
    """Filtered metric error E = eps^M + sum_j lambda_bar[j-1] eps^j.

    eps has the order axis first: shape (M,) for one channel or (M, P).
    """
    eps = np.asarray(eps, dtype=float)
    if eps.shape[0] == 1:
        return eps[-1]
    return eps[-1] + np.tensordot(lambda_bar, eps[:-1], axes=(0, 0))


def control_input(metric_err, eps, r_channels, d_i, b_i, g_mat,
                  theta_hat, omega_hat, x_inf_norm, params, lambda_bar):
    """Control signal for one agent.

    u = -G^{-1} [ c E + theta_hat ||x||_inf + omega_hat
                  + (d+b)^{-1} Omega^{-1} (lambda_bar . eps^{2..M}) ]
    with Omega = diag(r per channel). The filter correction pairs the
    highest coefficient with the highest-order transformed error.
    """
    eps = np.asarray(eps, dtype=float)
    d_plus_b = d_i + b_i
    if d_plus_b <= 0.0:
        raise ZeroDegreePlusPinning(
            "agent has no neighbors and no pinning (d + b = 0)")
    rhs = params.c * np.asarray(metric_err, dtype=float) \
        + np.asarray(theta_hat) * x_inf_norm + np.asarray(omega_hat)
    if eps.shape[0] > 1:
        correction = np.tensordot(lambda_bar, eps[1:], axes=(0, 0))
        rhs = rhs + correction / (np.asarray(r_channels) * d_plus_b)
    g_mat = np.atleast_2d(np.asarray(g_mat, dtype=float))
    try:
        return -np.linalg.solve(g_mat, np.atleast_1d(rhs))
    except np.linalg.LinAlgError as exc:
        raise SingularInputMatrix(str(exc)) from exc


def adaptive_update(metric_err, r_channels, m_i, d_i, b_i, x_inf_norm,
                    theta_hat, omega_hat, params, agent):
    """Estimate derivatives for one agent under the leakage update laws.

    theta_dot = Gamma1 (d+b) r m E ||x||_inf - k Gamma1 theta_hat
    omega_dot = Gamma2 (d+b) r m E          - k Gamma2 omega_hat
    """
    g1 = params.gamma1[agent]
    g2 = params.gamma2[agent]
    drive = (d_i + b_i) * np.asarray(r_channels) * m_i \
        * np.asarray(metric_err, dtype=float)
    theta_dot = g1 * drive * x_inf_norm - params.k * g1 * np.asarray(theta_hat)
    omega_dot = g2 * drive - params.k * g2 * np.asarray(omega_hat)
    return theta_dot, omega_dot


@dataclass(frozen=True)
class GainCheckInputs:
    """User-supplied bounds feeding the conservative gain condition.

    r_min/r_max bracket the funnel-geometry gain over the admissible
    region; delta_bar_sigma bounds the neglected chain remainder (0 under
    the dominant-term convention). v0 is an optional initial value of the
    composite energy used for the escape-time estimate.
    """

    x_m: float
    theta_m: float
    omega_m: float
    f_m: float
    r_min: float
    r_max: float
    delta_bar_sigma: float = 0.0
    v0: float = 0.0

    def __post_init__(self):
        vals = [self.x_m, self.theta_m, self.omega_m, self.f_m,
                self.r_max, self.delta_bar_sigma, self.v0]
        if any(v < 0.0 for v in vals):
            raise ValueError("gain-check bounds must be nonnegative")
        if self.r_min <= 0.0:
            raise ValueError("r_min must be positive")


@dataclass(frozen=True)
class GainReport:
    """Advisory feasibility report: never blocks a simulation."""

    c_given: float
    c_required: float
    gamma1: float
    gamma2: float
    g: float
    nu: float
    mu: float
    h_matrix: np.ndarray
    minors: tuple
    sylvester_ok: bool
    eta: float
    t0_estimate: float
    feasible: bool


def h_matrix(beta, k, g, gamma1, gamma2, mu):
    """Quadratic-form matrix whose positive definiteness certifies decay."""
    return np.array([
        [0.5 * beta, 0.0, 0.0, g],
        [0.0, k, 0.0, gamma1],
        [0.0, 0.0, k, gamma2],
        [g, gamma1, gamma2, mu],
    ])


def leading_minors(mat):
    """Determinants of the leading principal submatrices."""
    return tuple(float(np.linalg.det(mat[: i + 1, : i + 1]))
                 for i in range(mat.shape[0]))


def gain_check(gq, inputs, params, filter_ctx):
    """Evaluate the sufficient gain condition and residual-set diagnostics.

    Builds the proof constants from the cached spectral bounds and the
    user-supplied magnitudes, assembles the 4x4 certificate matrix, and
    reports the minimum admissible control gain, the residual radius eta,
    and the escape-time estimate. Advisory only.
    """
    sb = gq.sigma_bounds
    sigma_m = sb.sigma_max_m_weights
    sigma_a = sb.sigma_max_adjacency
    sigma_bd = sb.sigma_min_degree_pinning
    sigma_q = sb.sigma_min_q
    sigma_r_max = inputs.r_max
    sigma_r_min = inputs.r_min

    lam_norm = float(np.linalg.norm(filter_ctx.lambda_bar))
    lam_mat_fro = float(np.linalg.norm(filter_ctx.lam_mat))
    sigma_m_lyap_max = max_singular_value(filter_ctx.m_lyap)
    sigma_m_lyap_min = min_singular_value(filter_ctx.m_lyap)

    gamma1 = 0.5 * sigma_m * sigma_r_max * sigma_a * inputs.x_m
    gamma2 = 0.5 * sigma_m * sigma_r_max * sigma_a
    g = 0.5 * (sigma_m_lyap_max
               + sigma_m * sigma_a * lam_mat_fro * lam_norm / sigma_bd)
    nu = sigma_m * sigma_a * lam_norm / sigma_bd
    mu = params.c * sigma_r_min * sigma_q - nu

    c_required = ((gamma1 ** 2 + gamma2 ** 2) / params.k
                  + 2.0 * g ** 2 / params.beta + nu) / (sigma_q * sigma_r_min)

    h = h_matrix(params.beta, params.k, g, gamma1, gamma2, mu)
    minors = leading_minors(h)
    sylvester_ok = all(m > 0.0 for m in minors)

    sigma_h_min = min_singular_value(h)
    numerator = (params.k * inputs.theta_m + params.k * inputs.omega_m
                 + sigma_m * (inputs.delta_bar_sigma
                              + sigma_r_max
                              * max_singular_value(gq.pinned) * inputs.f_m))
    eta = numerator / sigma_h_min if sigma_h_min > 0.0 else math.inf

    # Upper quadratic-form bound on the composite energy: the estimate
    # blocks enter through the inverse adaptation gains.
    x_upper = max(sigma_m_lyap_max,
                  1.0 / float(np.min(params.gamma1)),
                  1.0 / float(np.min(params.gamma2)),
                  float(np.max(gq.m_weights)))
    t0 = 0.0
    if math.isfinite(eta):
        t0 = max(0.0, (inputs.v0 - x_upper * eta ** 2) / params.k)

    return GainReport(
        c_given=params.c,
        c_required=float(c_required),
        gamma1=float(gamma1),
        gamma2=float(gamma2),
        g=float(g),
        nu=float(nu),
        mu=float(mu),
        h_matrix=h,
        minors=minors,
        sylvester_ok=sylvester_ok,
        eta=float(eta),
        t0_estimate=float(t0),
        feasible=bool(params.c > c_required and sylvester_ok),
    )


def default_r_bounds(rho0, rho_inf, delta_lower, delta_upper):
    """Bracket the funnel gain r over the admissible region.

    Minimum at zero error in the widest funnel; maximum near the tighter
    interval edge (99%) once the funnel has contracted to rho_inf.
    """
    lo = float(np.min(delta_lower))
    up = float(np.min(delta_upper))
    r_min = (1.0 / lo + 1.0 / up) / (2.0 * float(np.max(rho0)))
    edge = 0.99 * min(lo, up)
    rho_term = float(np.min(rho_inf))
    r_at = [(1.0 / (lo + u) + 1.0 / (up - u)) / (2.0 * rho_term)
            for u in (edge, -edge)]
    return r_min, max(r_at)


def lyapunov_diagnostic(metric_err, phi1, theta_err, omega_err,
                        gq, filter_ctx, params):
    """Composite energy V of the closed loop, for trace monitoring.

    V = 1/2 E^T M E + 1/2 th~^T G1^-1 th~ + 1/2 om~^T G2^-1 om~
        + 1/2 Tr{Phi1 M_lyap Phi1^T}
    metric_err/theta_err/omega_err have shape (n, P); phi1 has shape
    (n, M-1, P) with the order axis in the middle.
    """
    metric_err = np.asarray(metric_err, dtype=float)
    theta_err = np.asarray(theta_err, dtype=float)
    omega_err = np.asarray(omega_err, dtype=float)
    m_w = gq.m_weights
    v = 0.5 * float(np.sum(m_w[:, None] * metric_err ** 2))
    v += 0.5 * float(np.sum(theta_err ** 2 / params.gamma1[:, None]))
    v += 0.5 * float(np.sum(omega_err ** 2 / params.gamma2[:, None]))
    if phi1 is not None and np.asarray(phi1).size:
        phi1 = np.asarray(phi1, dtype=float)
        v += 0.5 * float(np.einsum(
            "imp,mn,inp->", phi1, filter_ctx.m_lyap, phi1))
    return v
