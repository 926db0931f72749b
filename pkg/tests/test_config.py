import numpy as np
import pytest

from ppfsync.config import (
    apply_override,
    parse_config,
    serialize_config,
)
from ppfsync.errors import (
    BroadcastAmbiguity,
    MissingRequired,
    TypeMismatch,
    UnknownExample,
    UnknownKey,
)


def inline_doc():
    return {
        "models": {
            "order": 2,
            "channels": 1,
            "agents": [{"f": "sin(x[0,0]) - 0.1*t", "initial": [0.2, 0.0]}],
            "leader": {"field": "cos(t)", "initial": [0.0, 0.0]},
        },
        "graph": {"adjacency": [[0.0]], "pinning": [1.0]},
        "ppf": {"rho0": 2.0, "rho_inf": 0.05, "ell": 1.0,
                "delta_upper": 1.0, "delta_lower": 1.0},
        "controller": {"c": 5.0, "k": 0.2, "gamma1": 10.0, "gamma2": 10.0},
    }


class TestParseMinimal:
    def test_example1_defaults_fully_populated(self):
        cfg = parse_config({"models": "example1"})
        assert cfg.name == "example1"
        assert np.all(cfg.rho0 == 5.0)
        assert np.all(cfg.rho_inf == 0.03)
        assert np.all(cfg.decay == 0.6)
        assert np.all(cfg.delta_upper == 4.0)
        assert np.all(cfg.delta_lower == 5.0)
        assert cfg.controller.c == 30.0
        assert cfg.controller.k == 0.1
        assert np.all(cfg.controller.gamma1 == 10000.0)
        assert np.all(cfg.controller.gamma2 == 10000.0)
        assert cfg.controller.lam == 2.0
        assert cfg.controller.beta == 1.0
        assert (cfg.h, cfg.t_final, cfg.seed) == (1e-3, 20.0, 42)
        assert cfg.graph.n == 5
        assert cfg.bounds is not None

    def test_example2_defaults(self):
        cfg = parse_config({"models": "example2"})
        assert cfg.rho0.shape == (5, 2)
        assert np.all(cfg.rho0 == 7.0)
        assert np.all(cfg.delta_upper == 7.0)
        assert cfg.controller.k == 0.01
        assert np.all(cfg.controller.gamma1 == 100.0)

    def test_models_required(self):
        with pytest.raises(MissingRequired):
            parse_config({})

    def test_unknown_suite(self):
        with pytest.raises(UnknownExample):
            parse_config({"models": "example3"})


class TestBroadcast:
    def test_scalar_to_table(self):
        cfg = parse_config({"models": "example2", "ppf": {"rho0": 9.0}})
        assert cfg.rho0.shape == (5, 2)
        assert np.all(cfg.rho0 == 9.0)

    def test_per_agent_list(self):
        cfg = parse_config({"models": "example2",
                            "ppf": {"rho0": [9.0, 8.0, 9.0, 8.0, 9.0]}})
        assert np.all(cfg.rho0[:, 0] == cfg.rho0[:, 1])
        assert cfg.rho0[1, 0] == 8.0

    def test_full_table(self):
        table = (7.0 + np.arange(10).reshape(5, 2)).tolist()
        cfg = parse_config({"models": "example2", "ppf": {"rho0": table}})
        assert cfg.rho0.tolist() == table

    def test_channel_length_ambiguous(self):
        with pytest.raises(BroadcastAmbiguity):
            parse_config({"models": "example2", "ppf": {"rho0": [9.0, 8.0]}})

    def test_wrong_length_rejected(self):
        with pytest.raises(TypeMismatch):
            parse_config({"models": "example2", "ppf": {"rho0": [9.0] * 3}})


class TestValidation:
    def test_negative_rho0_rejected(self):
        with pytest.raises(MissingRequired):
            parse_config({"models": "example1", "ppf": {"rho0": -1.0}})

    def test_rho0_below_rho_inf_rejected(self):
        with pytest.raises(MissingRequired):
            parse_config({"models": "example1", "ppf": {"rho0": 0.01}})

    def test_unknown_top_level_key(self):
        with pytest.raises(UnknownKey):
            parse_config({"models": "example1", "funnel": {}})

    def test_unknown_section_key(self):
        with pytest.raises(UnknownKey):
            parse_config({"models": "example1", "sim": {"dt": 0.1}})

    def test_non_numeric_value(self):
        with pytest.raises(TypeMismatch):
            parse_config({"models": "example1", "sim": {"T": "long"}})

    def test_bad_q_rule(self):
        with pytest.raises(TypeMismatch):
            parse_config({"models": "example1",
                          "graph": {"adjacency": [[0.0]] ,
                                    "pinning": [1.0], "q_rule": "columns"}})

    def test_inline_needs_graph_when_not_five_agents(self):
        doc = inline_doc()
        del doc["graph"]
        with pytest.raises(MissingRequired):
            parse_config(doc)

    def test_inline_requires_controller(self):
        doc = inline_doc()
        del doc["controller"]
        with pytest.raises(MissingRequired):
            parse_config(doc)

    def test_unknown_expression_name_rejected(self):
        doc = inline_doc()
        doc["models"]["agents"][0]["f"] = "__import__('os').getcwd()"
        with pytest.raises(UnknownKey):
            parse_config(doc)


class TestInlineModels:
    def test_builds_and_runs_expressions(self):
        cfg = parse_config(inline_doc())
        assert cfg.models[0].f(np.zeros((2, 1)), 0.0) == [0.0]
        assert cfg.leader.field(0.0, np.zeros((2, 1))) == [1.0]

    def test_ground_truth_passthrough(self):
        doc = inline_doc()
        doc["models"]["agents"][0]["theta"] = [0.5]
        doc["models"]["agents"][0]["omega"] = [0.1]
        cfg = parse_config(doc)
        assert cfg.models[0].true_theta.tolist() == [0.5]
        assert cfg.models[0].true_omega.tolist() == [0.1]

    def test_trajectory_leader(self):
        doc = inline_doc()
        doc["models"]["leader"] = {
            "trajectory": [["0.6*cos(0.6*t)"], ["-0.36*sin(0.6*t)"]]}
        cfg = parse_config(doc)
        assert cfg.leader.trajectory is not None
        x0 = cfg.leader.orders_at(0.0)
        assert x0[0][0] == pytest.approx(0.6)


class TestRoundTrip:
    def test_parse_serialize_parse_is_stable(self):
        for doc in ({"models": "example1"},
                    {"models": "example2", "ppf": {"rho0": 9.0}},
                    inline_doc()):
            cfg1 = parse_config(doc)
            doc1 = serialize_config(cfg1)
            cfg2 = parse_config(doc1)
            doc2 = serialize_config(cfg2)
            assert doc1 == doc2

    def test_serialized_tables_are_full(self):
        doc = serialize_config(parse_config({"models": "example2"}))
        assert np.asarray(doc["ppf"]["rho0"]).shape == (5, 2)


class TestOverrides:
    def test_simple_override(self):
        doc = {"models": "example1"}
        apply_override(doc, "sim.T", "0.5")
        assert doc["sim"]["T"] == 0.5

    def test_last_writer_wins(self):
        doc = {"models": "example1", "sim": {"T": 20.0}}
        apply_override(doc, "sim.T", "1.0")
        apply_override(doc, "sim.T", "2.0")
        assert doc["sim"]["T"] == 2.0

    def test_yaml_typed_values(self):
        doc = {}
        apply_override(doc, "sim.debug", "true")
        apply_override(doc, "ppf.rho0", "[1.0, 2.0]")
        assert doc["sim"]["debug"] is True
        assert doc["ppf"]["rho0"] == [1.0, 2.0]

    def test_bad_key_rejected(self):
        with pytest.raises(UnknownKey):
            apply_override({}, "T", "1.0")
