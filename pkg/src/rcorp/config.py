"""JSON run-configuration parsing, validation, and system construction.

The configuration is validated structurally before any numerics run;
unknown keys are rejected everywhere so typos fail loudly.  Parsing
normalizes the document (explicit feedthrough blocks, per-agent
internal-model lists, floats everywhere), and parse -> serialize -> parse
is the identity on that normalized form.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .graphs import AugmentedGraph, GraphMatrices, build_graph_matrices
from .internal_model import InternalModel
from .plant import AgentPlant, ExogenousChannels, Exosystem, MasModel, UncertaintyDelta

__all__ = ["RunConfig", "load_config"]

SYNTHESIS_PATHS = ("global", "local", "acyclic", "check")


def _require_keys(section: dict, where: str, required: tuple, optional: tuple = ()):
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: expected an object, got {type(section).__name__}")
    missing = [k for k in required if k not in section]
    if missing:
        raise ConfigError(f"{where}: missing required keys {missing}")
    unknown = [k for k in section if k not in required and k not in optional]
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


def _matrix(value, where: str, rows=None, cols=None) -> list[list[float]]:
    if not isinstance(value, list) or not value or not all(
        isinstance(r, list) and r for r in value
    ):
        raise ConfigError(f"{where}: expected a non-empty 2-D array (list of lists)")
    width = len(value[0])
    out = []
    for i, row in enumerate(value):
        if len(row) != width:
            raise ConfigError(f"{where}: ragged row {i}")
        try:
            out.append([float(x) for x in row])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: non-numeric entry in row {i}") from exc
    if rows is not None and len(out) != rows:
        raise ConfigError(f"{where}: expected {rows} rows, got {len(out)}")
    if cols is not None and width != cols:
        raise ConfigError(f"{where}: expected {cols} columns, got {width}")
    return out


def _vector(value, where: str, length=None) -> list[float]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where}: expected a non-empty array")
    try:
        out = [float(x) for x in value]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: non-numeric entry") from exc
    if length is not None and len(out) != length:
        raise ConfigError(f"{where}: expected length {length}, got {len(out)}")
    return out


@dataclass(frozen=True)
class RunConfig:
    """Normalized run configuration; see from_dict for the schema."""

    graph: dict
    agents: list
    A0: list
    E: list | None = None
    F_ref: list | None = None
    delta: list | None = None
    internal_model: list | None = None
    synthesis: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    seed: int = 0
    out_dir: str | None = None

    # -- schema ------------------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        _require_keys(
            doc, "config",
            required=("graph", "agents", "A0"),
            optional=("E", "F_ref", "delta", "internal_model", "synthesis",
                      "simulation", "seed", "out_dir"),
        )
        graph = doc["graph"]
        _require_keys(graph, "graph", required=("adjacency", "pinning"))
        adjacency = _matrix(graph["adjacency"], "graph.adjacency")
        n_followers = len(adjacency)
        if len(adjacency[0]) != n_followers:
            raise ConfigError("graph.adjacency: must be square")
        pinning = _vector(graph["pinning"], "graph.pinning", length=n_followers)

        if not isinstance(doc["agents"], list) or not doc["agents"]:
            raise ConfigError("agents: expected a non-empty array")
        if len(doc["agents"]) != n_followers:
            raise ConfigError(
                f"agents: {len(doc['agents'])} entries for {n_followers} followers"
            )
        agents = []
        for i, entry in enumerate(doc["agents"]):
            where = f"agents[{i}]"
            _require_keys(entry, where, required=("A", "B", "C"), optional=("D",))
            A = _matrix(entry["A"], f"{where}.A")
            n = len(A)
            B = _matrix(entry["B"], f"{where}.B", rows=n)
            C = _matrix(entry["C"], f"{where}.C", cols=n)
            p, m = len(C), len(B[0])
            if "D" in entry:
                D = _matrix(entry["D"], f"{where}.D", rows=p, cols=m)
            else:
                D = [[0.0] * m for _ in range(p)]
            agents.append({"A": A, "B": B, "C": C, "D": D})
        p = len(agents[0]["C"])
        for i, ag in enumerate(agents):
            if len(ag["C"]) != p:
                raise ConfigError(f"agents[{i}]: output dimension differs from agent 0")

        A0 = _matrix(doc["A0"], "A0")
        n0 = len(A0)
        if len(A0[0]) != n0:
            raise ConfigError("A0: must be square")

        E = None
        if "E" in doc:
            if not isinstance(doc["E"], list) or len(doc["E"]) != n_followers:
                raise ConfigError(f"E: expected {n_followers} per-agent matrices")
            E = [
                _matrix(Ei, f"E[{i}]", rows=len(agents[i]["A"]), cols=n0)
                for i, Ei in enumerate(doc["E"])
            ]
        F_ref = _matrix(doc["F_ref"], "F_ref", rows=p, cols=n0) if "F_ref" in doc else None

        delta = None
        if "delta" in doc:
            if not isinstance(doc["delta"], list) or len(doc["delta"]) != n_followers:
                raise ConfigError(f"delta: expected {n_followers} per-agent objects")
            delta = []
            for i, d in enumerate(doc["delta"]):
                where = f"delta[{i}]"
                _require_keys(d, where, required=("A", "B", "C", "D"))
                ag = agents[i]
                delta.append({
                    "A": _matrix(d["A"], f"{where}.A", rows=len(ag["A"]), cols=len(ag["A"])),
                    "B": _matrix(d["B"], f"{where}.B", rows=len(ag["B"]), cols=len(ag["B"][0])),
                    "C": _matrix(d["C"], f"{where}.C", rows=p, cols=len(ag["A"])),
                    "D": _matrix(d["D"], f"{where}.D", rows=p, cols=len(ag["B"][0])),
                })

        internal = None
        if "internal_model" in doc:
            raw = doc["internal_model"]
            entries = raw if isinstance(raw, list) else [raw] * n_followers
            if len(entries) != n_followers:
                raise ConfigError(
                    f"internal_model: expected {n_followers} entries or a single object"
                )
            internal = []
            for i, entry in enumerate(entries):
                where = f"internal_model[{i}]"
                _require_keys(entry, where, required=("G1", "G2"))
                G1 = _matrix(entry["G1"], f"{where}.G1")
                n_z = len(G1)
                if len(G1[0]) != n_z:
                    raise ConfigError(f"{where}.G1: must be square")
                G2 = _matrix(entry["G2"], f"{where}.G2", rows=n_z, cols=p)
                internal.append({"G1": G1, "G2": G2})

        synthesis = {}
        if "synthesis" in doc:
            _require_keys(doc["synthesis"], "synthesis", required=(),
                          optional=("path", "r"))
            synthesis = dict(doc["synthesis"])
            if "path" in synthesis and synthesis["path"] not in SYNTHESIS_PATHS:
                raise ConfigError(
                    f"synthesis.path: must be one of {SYNTHESIS_PATHS}"
                )
            if "r" in synthesis:
                r = synthesis["r"]
                if isinstance(r, list):
                    synthesis["r"] = _vector(r, "synthesis.r", length=n_followers)
                else:
                    try:
                        synthesis["r"] = float(r)
                    except (TypeError, ValueError) as exc:
                        raise ConfigError("synthesis.r: must be a number or array") from exc

        simulation = {}
        if "simulation" in doc:
            _require_keys(doc["simulation"], "simulation", required=(),
                          optional=("horizon", "v0", "x0", "z0", "seed"))
            simulation = dict(doc["simulation"])
            if "horizon" in simulation:
                h = simulation["horizon"]
                if not isinstance(h, int) or h < 1:
                    raise ConfigError("simulation.horizon: must be an integer >= 1")
            if "v0" in simulation:
                simulation["v0"] = _vector(simulation["v0"], "simulation.v0", length=n0)
            if "x0" in simulation:
                x0 = simulation["x0"]
                if not isinstance(x0, list) or len(x0) != n_followers:
                    raise ConfigError(f"simulation.x0: expected {n_followers} vectors")
                simulation["x0"] = [
                    _vector(x, f"simulation.x0[{i}]", length=len(agents[i]["A"]))
                    for i, x in enumerate(x0)
                ]
            if "z0" in simulation:
                z0 = simulation["z0"]
                if not isinstance(z0, list) or len(z0) != n_followers:
                    raise ConfigError(f"simulation.z0: expected {n_followers} vectors")
                simulation["z0"] = [
                    _vector(z, f"simulation.z0[{i}]") for i, z in enumerate(z0)
                ]
            if "seed" in simulation and not isinstance(simulation["seed"], int):
                raise ConfigError("simulation.seed: must be an integer")

        seed = doc.get("seed", 0)
        if not isinstance(seed, int):
            raise ConfigError("seed: must be an integer")
        out_dir = doc.get("out_dir")
        if out_dir is not None and not isinstance(out_dir, str):
            raise ConfigError("out_dir: must be a string")

        return cls(
            graph={"adjacency": adjacency, "pinning": pinning},
            agents=agents, A0=A0, E=E, F_ref=F_ref, delta=delta,
            internal_model=internal, synthesis=synthesis,
            simulation=simulation, seed=seed, out_dir=out_dir,
        )

    def to_dict(self) -> dict:
        doc = {"graph": self.graph, "agents": self.agents, "A0": self.A0}
        for key in ("E", "F_ref", "delta", "internal_model"):
            value = getattr(self, key)
            if value is not None:
                doc[key] = value
        if self.synthesis:
            doc["synthesis"] = self.synthesis
        if self.simulation:
            doc["simulation"] = self.simulation
        if self.seed:
            doc["seed"] = self.seed
        if self.out_dir is not None:
            doc["out_dir"] = self.out_dir
        return doc

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    # -- construction --------------------------------------------------------

    def build_graph(self) -> AugmentedGraph:
        return AugmentedGraph(
            adjacency=self.graph["adjacency"], pinning=self.graph["pinning"]
        )

    def build_model(self) -> MasModel:
        return MasModel(
            agents=tuple(
                AgentPlant(A=a["A"], B=a["B"], C=a["C"], D=a["D"])
                for a in self.agents
            ),
            exo=Exosystem(A0=self.A0),
        )

    def build_internal_model(self, model: MasModel) -> InternalModel:
        if self.internal_model is None:
            return InternalModel.build(model.exo.A0, model.p, model.n_agents)
        return InternalModel(
            G1=tuple(np.array(e["G1"], dtype=float) for e in self.internal_model),
            G2=tuple(np.array(e["G2"], dtype=float) for e in self.internal_model),
        )

    def build_graph_matrices(self, model: MasModel) -> GraphMatrices:
        return build_graph_matrices(self.build_graph(), model.p)

    def build_channels(self, model: MasModel) -> ExogenousChannels:
        """Configured (E, F_ref), defaulting to zero disturbances and a
        unit-pattern reference map."""
        n0 = model.exo.n0
        E = self.E if self.E is not None else [
            np.zeros((ag.n, n0)) for ag in model.agents
        ]
        F_ref = self.F_ref if self.F_ref is not None else np.zeros((model.p, n0))
        return ExogenousChannels.validated(model, E, F_ref)

    def build_delta(self, model: MasModel) -> UncertaintyDelta | None:
        if self.delta is None:
            return None
        return UncertaintyDelta(
            dA=tuple(np.array(d["A"], dtype=float) for d in self.delta),
            dB=tuple(np.array(d["B"], dtype=float) for d in self.delta),
            dC=tuple(np.array(d["C"], dtype=float) for d in self.delta),
            dD=tuple(np.array(d["D"], dtype=float) for d in self.delta),
        )


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    return RunConfig.loads(text)
