"""Config documents: parsing, validation, broadcasting, and serialization.

A scenario is described by a YAML key-value tree with sections graph,
models, ppf, controller, sim, bounds, output. Unknown keys are rejected;
scalars broadcast to per-agent/channel tables with a log line; defaults
are filled and echoed. `models` is either a built-in suite name or an
inline description whose nonlinearities are small arithmetic expressions
in x and t (config files are trusted local input).
"""
import logging
import math

import numpy as np
import yaml

from .controller import ControllerParams, GainCheckInputs, default_r_bounds
from .dynamics import (SUITE_REGISTRY, VECTOR_F_REGISTRY, AgentModel,
                       LeaderModel, default_graph)
from .errors import (
    BroadcastAmbiguity,
    MissingRequired,
    TypeMismatch,
    UnknownExample,
    UnknownKey,
)
from .graph import build_graph
from .sim import ScenarioConfig

log = logging.getLogger("ppfsync")

_SECTION_KEYS = {
    "graph": {"adjacency", "pinning", "q_rule"},
    "ppf": {"rho0", "rho_inf", "ell", "delta_upper", "delta_lower"},
    "controller": {"c", "k", "gamma1", "gamma2", "lambda", "beta"},
    "sim": {"h", "T", "seed", "decimate", "substeps", "debug"},
    "bounds": {"x_M", "theta_M", "omega_M", "f_M", "delta_bar_sigma",
               "r_min", "r_max", "v0"},
    "output": {"trace_path", "summary_path"},
}
_TOP_KEYS = set(_SECTION_KEYS) | {"models"}

_MODEL_KEYS = {"order", "channels", "agents", "leader"}
_AGENT_KEYS = {"f", "G", "initial", "theta", "omega"}
_LEADER_KEYS = {"field", "trajectory", "initial"}

_DEFAULT_BOUNDS = {"x_M": 2.0, "theta_M": 5.0, "omega_M": 5.0, "f_M": 10.0,
                   "delta_bar_sigma": 0.0, "v0": 0.0}

_EXPR_NAMES = {
    "sin": math.sin, "cos": math.cos, "tan": math.tan, "tanh": math.tanh,
    "sinh": math.sinh, "cosh": math.cosh, "exp": math.exp, "log": math.log,
    "sqrt": math.sqrt, "atan": math.atan, "abs": abs, "pi": math.pi,
    "e": math.e, "sign": lambda v: math.copysign(1.0, v),
}


def compile_expression(text, variables):
    """Compile a small arithmetic expression over the given variable names."""
    if not isinstance(text, str):
        raise TypeMismatch(f"expected expression string, got {text!r}")
    try:
        code = compile(text, "<config expression>", "eval")
    except SyntaxError as exc:
        raise TypeMismatch(f"bad expression {text!r}: {exc}") from exc
    for name in code.co_names:
        if name not in _EXPR_NAMES and name not in variables:
            raise UnknownKey(
                f"unknown name {name!r} in expression {text!r}")
    namespace = dict(_EXPR_NAMES)

    def fn(**kw):
        return eval(code, {"__builtins__": {}}, {**namespace, **kw})

    return fn


def _check_keys(section, mapping, allowed):
    if not isinstance(mapping, dict):
        raise TypeMismatch(f"section {section!r} must be a mapping")
    unknown = set(mapping) - allowed
    if unknown:
        raise UnknownKey(
            f"unknown key(s) {sorted(unknown)} in section {section!r}; "
            f"allowed: {sorted(allowed)}")


def _as_float(section, key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeMismatch(f"{section}.{key} must be a number, got {value!r}")
    return float(value)


def broadcast_table(section, key, value, n, channels):
    """Broadcast a scalar or per-agent list to an (n, channels) table."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if n * channels > 1:
            log.info("%s.%s: scalar %s broadcast to %dx%d table",
                     section, key, value, n, channels)
        return np.full((n, channels), float(value))
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 1:
        if arr.shape[0] == n:
            if channels > 1:
                log.info("%s.%s: per-agent list broadcast across %d channels",
                         section, key, channels)
            return np.tile(arr[:, None], (1, channels))
        if arr.shape[0] == channels:
            raise BroadcastAmbiguity(
                f"{section}.{key}: length-{channels} list matches the channel "
                f"count, not the agent count {n}; give the full "
                f"{n}x{channels} table")
        raise TypeMismatch(
            f"{section}.{key}: list length {arr.shape[0]} matches neither "
            f"{n} agents nor a full table")
    if arr.shape == (n, channels):
        return arr
    raise TypeMismatch(
        f"{section}.{key}: shape {arr.shape}, expected ({n}, {channels})")


def _per_agent(section, key, value, n):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return np.full(n, float(value))
    arr = np.asarray(value, dtype=float)
    if arr.shape != (n,):
        raise TypeMismatch(
            f"{section}.{key}: expected scalar or length-{n} list")
    return arr


def _build_inline_models(doc):
    _check_keys("models", doc, _MODEL_KEYS)
    for key in ("order", "channels", "agents", "leader"):
        if key not in doc:
            raise MissingRequired(f"models.{key} is required for inline models")
    order = int(doc["order"])
    channels = int(doc["channels"])
    if order < 1 or channels < 1:
        raise TypeMismatch("models.order and models.channels must be >= 1")

    models, initials = [], []
    for idx, agent in enumerate(doc["agents"], start=1):
        _check_keys(f"models.agents[{idx}]", agent, _AGENT_KEYS)
        if "f" not in agent or "initial" not in agent:
            raise MissingRequired(
                f"models.agents[{idx}] needs both f and initial")
        expr = compile_expression(agent["f"], variables={"x", "t"})

        def f(x, t, _expr=expr, _p=channels):
            out = _expr(x=x, t=t)
            return [out] if _p == 1 and np.isscalar(out) else out

        g_mat = np.asarray(agent.get("G", np.eye(channels)), dtype=float)
        init = np.asarray(agent["initial"], dtype=float)
        if init.shape == (order,) and channels == 1:
            init = init[:, None]
        if init.shape != (order, channels):
            raise TypeMismatch(
                f"models.agents[{idx}].initial: shape {init.shape}, expected "
                f"({order}, {channels})")
        probe = np.asarray(f(init, 0.0), dtype=float)
        if probe.shape != (channels,):
            raise TypeMismatch(
                f"models.agents[{idx}].f returned shape {probe.shape}, "
                f"expected ({channels},)")
        theta = agent.get("theta")
        omega = agent.get("omega")
        models.append(AgentModel(
            order=order, channels=channels, f=f, g_mat=g_mat,
            true_theta=None if theta is None else np.asarray(theta, float),
            true_omega=None if omega is None else np.asarray(omega, float)))
        initials.append(init)

    leader_doc = doc["leader"]
    _check_keys("models.leader", leader_doc, _LEADER_KEYS)
    if "trajectory" in leader_doc:
        rows = leader_doc["trajectory"]
        if len(rows) != order or any(len(r) != channels for r in rows):
            raise TypeMismatch(
                f"models.leader.trajectory must be {order} rows of "
                f"{channels} expressions")
        fns = [[compile_expression(e, variables={"t"}) for e in row]
               for row in rows]

        def trajectory(t, _fns=fns):
            return [[f(t=t) for f in row] for row in _fns]

        leader = LeaderModel(order=order, channels=channels,
                             trajectory=trajectory)
    else:
        if "field" not in leader_doc or "initial" not in leader_doc:
            raise MissingRequired(
                "models.leader needs field+initial or trajectory")
        expr = compile_expression(leader_doc["field"], variables={"x", "t"})

        def field_fn(t, x, _expr=expr, _p=channels):
            out = _expr(x=x, t=t)
            return [out] if _p == 1 and np.isscalar(out) else out

        init = np.asarray(leader_doc["initial"], dtype=float)
        if init.shape == (order,) and channels == 1:
            init = init[:, None]
        leader = LeaderModel(order=order, channels=channels,
                             field=field_fn, initial=init)
    return models, leader, np.stack(initials), None


def parse_config(document, name="scenario"):
    """Validate a config document into a fully resolved ScenarioConfig."""
    if not isinstance(document, dict):
        raise TypeMismatch("config document must be a mapping")
    unknown = set(document) - _TOP_KEYS
    if unknown:
        raise UnknownKey(f"unknown top-level key(s) {sorted(unknown)}")
    if "models" not in document:
        raise MissingRequired("config needs a models section")

    models_doc = document["models"]
    defaults = None
    sim_doc = document.get("sim", {})
    _check_keys("sim", sim_doc, _SECTION_KEYS["sim"])
    seed = int(sim_doc.get("seed", 42))

    if isinstance(models_doc, str):
        if models_doc not in SUITE_REGISTRY:
            raise UnknownExample(
                f"unknown model suite {models_doc!r}; "
                f"available: {sorted(SUITE_REGISTRY)}")
        if models_doc == "example2":
            models, leader, defaults = SUITE_REGISTRY[models_doc](seed)
        else:
            models, leader, defaults = SUITE_REGISTRY[models_doc]()
        initial_states = defaults.initial_states
        name = defaults.name
        vector_f = VECTOR_F_REGISTRY.get(models_doc)
    else:
        models, leader, initial_states, defaults = \
            _build_inline_models(models_doc)
        vector_f = None

    n = len(models)
    order, channels = models[0].order, models[0].channels

    graph_doc = document.get("graph", {})
    _check_keys("graph", graph_doc, _SECTION_KEYS["graph"])
    if "adjacency" in graph_doc or "pinning" in graph_doc:
        if "adjacency" not in graph_doc or "pinning" not in graph_doc:
            raise MissingRequired("graph needs both adjacency and pinning")
        graph = build_graph(graph_doc["adjacency"], graph_doc["pinning"])
    else:
        if n != 5:
            raise MissingRequired(
                f"no graph given and the default 5-node ring does not fit "
                f"{n} agents")
        graph = default_graph()
        log.info("graph: default unit-weight 5-ring with pinning on "
                 "agents 1 and 5")
    q_rule = graph_doc.get("q_rule", "inverse")
    if q_rule not in ("inverse", "literal"):
        raise TypeMismatch(f"graph.q_rule must be inverse|literal, "
                           f"got {q_rule!r}")

    ppf_doc = dict(document.get("ppf", {}))
    _check_keys("ppf", ppf_doc, _SECTION_KEYS["ppf"])
    ppf_defaults = {}
    if defaults is not None:
        ppf_defaults = {"rho0": defaults.rho0, "rho_inf": defaults.rho_inf,
                        "ell": defaults.decay,
                        "delta_upper": defaults.delta_upper,
                        "delta_lower": defaults.delta_lower}
    tables = {}
    for key in ("rho0", "rho_inf", "ell", "delta_upper", "delta_lower"):
        if key in ppf_doc:
            value = ppf_doc[key]
        elif key in ppf_defaults:
            value = ppf_defaults[key]
            log.info("ppf.%s: default %s from suite %s", key, value, name)
        else:
            raise MissingRequired(f"ppf.{key} is required")
        tables[key] = broadcast_table("ppf", key, value, n, channels)
    if np.any(tables["rho_inf"] <= 0.0) or \
            np.any(tables["rho0"] <= tables["rho_inf"]):
        raise MissingRequired("ppf requires rho0 > rho_inf > 0 everywhere")
    if np.any(tables["ell"] <= 0.0):
        raise MissingRequired("ppf.ell must be positive")
    if np.any(tables["delta_upper"] <= 0.0) or \
            np.any(tables["delta_lower"] <= 0.0):
        raise MissingRequired("ppf delta bounds must be positive")

    ctl_doc = dict(document.get("controller", {}))
    _check_keys("controller", ctl_doc, _SECTION_KEYS["controller"])
    ctl_defaults = {"lambda": 2.0, "beta": 1.0}
    if defaults is not None:
        ctl_defaults.update({"c": defaults.c, "k": defaults.k,
                             "gamma1": defaults.gamma1,
                             "gamma2": defaults.gamma2})
    resolved = {}
    for key in ("c", "k", "lambda", "beta", "gamma1", "gamma2"):
        if key in ctl_doc:
            resolved[key] = ctl_doc[key]
        elif key in ctl_defaults:
            resolved[key] = ctl_defaults[key]
            log.info("controller.%s: default %s", key, resolved[key])
        else:
            raise MissingRequired(f"controller.{key} is required")
    try:
        controller = ControllerParams(
            c=_as_float("controller", "c", resolved["c"]),
            k=_as_float("controller", "k", resolved["k"]),
            gamma1=_per_agent("controller", "gamma1", resolved["gamma1"], n),
            gamma2=_per_agent("controller", "gamma2", resolved["gamma2"], n),
            lam=_as_float("controller", "lambda", resolved["lambda"]),
            beta=_as_float("controller", "beta", resolved["beta"]))
    except ValueError as exc:
        raise MissingRequired(str(exc)) from exc

    bounds_doc = dict(document.get("bounds", {}))
    _check_keys("bounds", bounds_doc, _SECTION_KEYS["bounds"])
    merged = dict(_DEFAULT_BOUNDS)
    merged.update(bounds_doc)
    if "r_min" not in merged or "r_max" not in merged:
        r_min, r_max = default_r_bounds(
            tables["rho0"], tables["rho_inf"],
            tables["delta_lower"], tables["delta_upper"])
        merged.setdefault("r_min", r_min)
        merged.setdefault("r_max", r_max)
        log.info("bounds: funnel-geometry r bracket [%g, %g]", r_min, r_max)
    bounds = GainCheckInputs(
        x_m=merged["x_M"], theta_m=merged["theta_M"],
        omega_m=merged["omega_M"], f_m=merged["f_M"],
        r_min=merged["r_min"], r_max=merged["r_max"],
        delta_bar_sigma=merged["delta_bar_sigma"], v0=merged["v0"])

    out_doc = document.get("output", {})
    _check_keys("output", out_doc, _SECTION_KEYS["output"])

    return ScenarioConfig(
        name=name,
        graph=graph,
        models=models,
        leader=leader,
        initial_states=np.asarray(initial_states, dtype=float),
        rho0=tables["rho0"],
        rho_inf=tables["rho_inf"],
        decay=tables["ell"],
        delta_upper=tables["delta_upper"],
        delta_lower=tables["delta_lower"],
        controller=controller,
        h=_as_float("sim", "h", sim_doc.get("h", 1e-3)),
        t_final=_as_float("sim", "T", sim_doc.get("T", 20.0)),
        seed=seed,
        decimate=int(sim_doc.get("decimate", 1)),
        substeps=int(sim_doc.get("substeps", 2)),
        q_rule=q_rule,
        debug=bool(sim_doc.get("debug", False)),
        bounds=bounds,
        trace_path=out_doc.get("trace_path"),
        summary_path=out_doc.get("summary_path"),
        models_doc=models_doc,
        vector_f=vector_f,
    )


def serialize_config(cfg):
    """Resolved document for a config; parse(serialize(parse(d))) is stable."""
    doc = {
        "models": cfg.models_doc,
        "graph": {
            "adjacency": cfg.graph.adjacency.tolist(),
            "pinning": cfg.graph.pinning.tolist(),
            "q_rule": cfg.q_rule,
        },
        "ppf": {
            "rho0": cfg.rho0.tolist(),
            "rho_inf": cfg.rho_inf.tolist(),
            "ell": cfg.decay.tolist(),
            "delta_upper": cfg.delta_upper.tolist(),
            "delta_lower": cfg.delta_lower.tolist(),
        },
        "controller": {
            "c": cfg.controller.c,
            "k": cfg.controller.k,
            "gamma1": np.asarray(cfg.controller.gamma1).tolist(),
            "gamma2": np.asarray(cfg.controller.gamma2).tolist(),
            "lambda": cfg.controller.lam,
            "beta": cfg.controller.beta,
        },
        "sim": {
            "h": cfg.h,
            "T": cfg.t_final,
            "seed": cfg.seed,
            "decimate": cfg.decimate,
            "substeps": cfg.substeps,
            "debug": cfg.debug,
        },
        "bounds": {
            "x_M": cfg.bounds.x_m,
            "theta_M": cfg.bounds.theta_m,
            "omega_M": cfg.bounds.omega_m,
            "f_M": cfg.bounds.f_m,
            "delta_bar_sigma": cfg.bounds.delta_bar_sigma,
            "r_min": cfg.bounds.r_min,
            "r_max": cfg.bounds.r_max,
            "v0": cfg.bounds.v0,
        },
    }
    output = {}
    if cfg.trace_path:
        output["trace_path"] = cfg.trace_path
    if cfg.summary_path:
        output["summary_path"] = cfg.summary_path
    if output:
        doc["output"] = output
    return doc


def load_config_file(path):
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if doc is None:
        doc = {}
    return doc


def apply_override(document, dotted_key, raw_value):
    """Apply one `--set section.key=value` override; last writer wins."""
    parts = dotted_key.split(".")
    if len(parts) < 2:
        raise UnknownKey(
            f"override key {dotted_key!r} must look like section.key")
    node = document
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise TypeMismatch(
                f"override {dotted_key!r} walks through a non-mapping")
    node[parts[-1]] = yaml.safe_load(raw_value)
    return document


def write_config_file(doc, path):
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=True, default_flow_style=None)
