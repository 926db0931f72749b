import math

import numpy as np
import pytest

from ppfsync.dynamics import (
    AgentModel,
    LeaderModel,
    _mimo_vector_f,
    _siso_vector_f,
    eval_agent_field,
    example1_suite,
    example2_suite,
    mimo_disturbance,
    mimo_psi,
    sync_error,
    sync_error_kron,
)
from ppfsync.errors import DimensionMismatch
from ppfsync.graph import build_graph, default_five_ring


class TestEvalAgentField:
    def test_pure_chain(self):
        m = AgentModel(order=2, channels=1,
                       f=lambda x, t: [0.0], g_mat=np.eye(1))
        out = eval_agent_field(m, np.array([[1.0], [2.0]]), 0.0,
                               np.zeros(1))
        assert out.tolist() == [[2.0], [0.0]]

    def test_input_enters_top_order(self):
        m = AgentModel(order=2, channels=1,
                       f=lambda x, t: [0.0], g_mat=np.eye(1))
        out = eval_agent_field(m, np.array([[1.0], [2.0]]), 0.0,
                               np.array([3.0]))
        assert out.tolist() == [[2.0], [3.0]]

    def test_benchmark_agent5_at_origin(self):
        models, _, _ = example1_suite()
        out = eval_agent_field(models[4], np.zeros((3, 1)), 0.0, np.zeros(1))
        assert out[2, 0] == pytest.approx(1.0)    # cos(0) = 1

    def test_dimension_mismatch(self):
        m = AgentModel(order=2, channels=1,
                       f=lambda x, t: [0.0], g_mat=np.eye(1))
        with pytest.raises(DimensionMismatch):
            eval_agent_field(m, np.zeros((3, 1)), 0.0, np.zeros(1))

    def test_non_invertible_input_matrix_rejected(self):
        with pytest.raises(DimensionMismatch):
            AgentModel(order=1, channels=2,
                       f=lambda x, t: [0.0, 0.0], g_mat=np.zeros((2, 2)))


class TestExample1Suite:
    def test_shapes_and_defaults(self):
        models, leader, defaults = example1_suite()
        assert len(models) == 5
        assert all(m.order == 3 and m.channels == 1 for m in models)
        assert (defaults.rho0, defaults.rho_inf, defaults.decay) == \
            (5.0, 0.03, 0.6)
        assert (defaults.delta_upper, defaults.delta_lower) == (4.0, 5.0)
        assert (defaults.c, defaults.k) == (30.0, 0.1)
        assert defaults.gamma1 == defaults.gamma2 == 10000.0

    def test_agent2_nonlinearity(self):
        models, _, _ = example1_suite()
        x = np.ones((3, 1))
        assert models[1].f(x, 0.0)[0] == pytest.approx(-1.0)

    def test_leader_field_at_origin(self):
        _, leader, _ = example1_suite()
        got = leader.field(0.0, np.zeros((3, 1)))[0]
        assert got == pytest.approx(20.0 / 3.0)

    def test_leader_initial(self):
        _, leader, _ = example1_suite()
        assert leader.initial.tolist() == [[0.3], [0.3], [0.3]]

    def test_agent3_initial_state(self):
        _, _, defaults = example1_suite()
        assert defaults.initial_states[2, :, 0].tolist() == \
            [-0.2110, -0.4237, -0.3253]

    def test_vector_form_matches_models(self):
        models, _, _ = example1_suite()
        rng = np.random.default_rng(31)
        out = np.empty((5, 1))
        for _ in range(40):
            x = rng.standard_normal((5, 3, 1))
            t = float(rng.uniform(0.0, 10.0))
            _siso_vector_f(x, t, out)
            ref = np.array([models[i].f(x[i], t) for i in range(5)])
            assert np.allclose(out, ref, atol=1e-14)


class TestExample2Suite:
    def test_defaults(self):
        _, _, defaults = example2_suite(42)
        assert (defaults.rho0, defaults.rho_inf) == (7.0, 0.03)
        assert defaults.delta_upper == defaults.delta_lower == 7.0
        assert (defaults.c, defaults.k) == (30.0, 0.01)
        assert defaults.gamma1 == defaults.gamma2 == 100.0

    def test_disturbance_at_zero(self):
        assert mimo_disturbance(0.5, 0.7, 0.0) == pytest.approx((1.0, 1.2))

    def test_parameter_rows(self):
        models, _, defaults = example2_suite(42)
        # agent 1 carries (a1, a2) = (1.5, 0.5): probe through f with a
        # state that isolates the a1 x2 x1^2 xd2 monomial
        x = np.array([[1.0, 1.0], [0.0, 1.0]])
        val = models[0].f(x, 0.0)
        # channel 1 at t=0: a1*1*1*1 + 0.2 sin(0) + psi(0)@pos + D1(0)
        p = mimo_psi(1.5, 0.5, 0.0)
        d = mimo_disturbance(0.5, 0.7, 0.0)
        expected = 1.5 + p[0][0] * 1.0 + p[0][1] * 1.0 + d[0]
        assert val[0] == pytest.approx(expected)

    def test_psi_agent3_entry_zero_at_t0(self):
        # c3 = (0.5, 1.1): entry (1,1) is 3 c1 sin(0.5 t) = 0 at t = 0
        assert mimo_psi(0.5, 1.1, 0.0)[0][0] == 0.0

    def test_position_initial_conditions(self):
        _, _, defaults = example2_suite(42)
        assert defaults.initial_states[0, 0].tolist() == \
            pytest.approx([0.2310, -0.0276])
        assert defaults.initial_states[4, 0].tolist() == \
            pytest.approx([-0.4700, 0.4070])

    def test_seeded_velocities_deterministic(self):
        _, _, d1 = example2_suite(42)
        _, _, d2 = example2_suite(42)
        assert np.array_equal(d1.initial_states, d2.initial_states)
        _, _, d3 = example2_suite(43)
        assert not np.array_equal(d1.initial_states, d3.initial_states)

    def test_leader_trajectory_values(self):
        _, leader, _ = example2_suite(42)
        x0 = leader.orders_at(0.0)
        assert x0[0].tolist() == pytest.approx([0.6, 0.8])
        assert x0[1].tolist() == pytest.approx([0.0, 0.0])

    def test_leader_derivative_consistency_fd(self):
        _, leader, _ = example2_suite(42)
        rng = np.random.default_rng(37)
        h = 1e-5
        for _ in range(100):
            t = float(rng.uniform(0.0, 30.0))
            hi = leader.orders_at(t + h)
            lo = leader.orders_at(t - h)
            mid = leader.orders_at(t)
            fd = (hi[0] - lo[0]) / (2.0 * h)
            scale = np.maximum(np.abs(mid[1]), 1.0)
            assert np.all(np.abs(fd - mid[1]) / scale < 1e-4)

    def test_vector_form_matches_models(self):
        models, _, _ = example2_suite(42)
        rng = np.random.default_rng(41)
        out = np.empty((5, 2))
        for _ in range(40):
            x = rng.standard_normal((5, 2, 2))
            t = float(rng.uniform(0.0, 10.0))
            _mimo_vector_f(x, t, out)
            ref = np.array([models[i].f(x[i], t) for i in range(5)])
            assert np.allclose(out, ref, atol=1e-13)


class TestLeaderModel:
    def test_requires_exactly_one_form(self):
        with pytest.raises(ValueError):
            LeaderModel(order=2, channels=1)
        with pytest.raises(ValueError):
            LeaderModel(order=2, channels=1, field=lambda t, x: [0.0],
                        initial=np.zeros((2, 1)),
                        trajectory=lambda t: [[0.0], [0.0]])

    def test_inconsistent_trajectory_rejected(self):
        with pytest.raises(ValueError):
            LeaderModel(order=2, channels=1,
                        trajectory=lambda t: [[math.sin(t)],
                                              [2.0 * math.cos(t)]])


class TestSyncError:
    def test_agents_at_leader(self):
        g = default_five_ring()
        x0 = np.array([[0.3], [0.1], [-0.2]])
        states = np.tile(x0, (5, 1, 1))
        assert np.all(sync_error(states, x0, g).e == 0.0)

    def test_single_pinned_agent(self):
        g = build_graph([[0.0]], [1.0])
        states = np.array([[[1.0], [2.0]]])
        x0 = np.array([[0.5], [0.5]])
        e = sync_error(states, x0, g).e
        assert np.allclose(e[0], states[0] - x0)

    def test_ring_against_matrix_oracle(self):
        g = default_five_ring()
        rng = np.random.default_rng(43)
        states = rng.standard_normal((5, 3, 1))
        x0 = rng.standard_normal((3, 1))
        e = sync_error(states, x0, g).e
        # explicit matrix-vector oracle: (L+B)(x - x0) per order
        d = g.adjacency.sum(axis=1)
        pinned = np.diag(d) - g.adjacency + np.diag(g.pinning)
        for m in range(3):
            oracle = pinned @ (states[:, m, 0] - x0[m, 0])
            assert np.allclose(e[:, m, 0], oracle, atol=1e-12)

    def test_local_equals_kronecker_on_random_graphs(self):
        rng = np.random.default_rng(47)
        for _ in range(100):
            n = int(rng.integers(2, 7))
            channels = int(rng.integers(1, 4))
            order = int(rng.integers(1, 4))
            a = rng.uniform(0.0, 2.0, (n, n)) * (rng.random((n, n)) < 0.5)
            np.fill_diagonal(a, 0.0)
            b = rng.uniform(0.0, 2.0, n) * (rng.random(n) < 0.5)
            g = build_graph(a, b)
            states = rng.standard_normal((n, order, channels))
            x0 = rng.standard_normal((order, channels))
            local = sync_error(states, x0, g).e
            kron = sync_error_kron(states, x0, g).e
            assert np.max(np.abs(local - kron)) <= 1e-12

    def test_dimension_mismatch(self):
        g = default_five_ring()
        with pytest.raises(DimensionMismatch):
            sync_error(np.zeros((5, 3, 1)), np.zeros((2, 1)), g)
