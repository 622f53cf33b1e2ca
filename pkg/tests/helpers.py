"""Randomized instance generators shared by the module and acceptance tests.

All generators take an explicit numpy Generator so every test run is
reproducible from its seed.
"""
import numpy as np

from rcorp.assembly import GainSet
from rcorp.graphs import AugmentedGraph, build_graph_matrices
from rcorp.internal_model import InternalModel
from rcorp.plant import AgentPlant, Exosystem, MasModel, check_agent_stabilizable, check_transmission_rank


def random_antistable_exosystem(rng, allow_2d=True) -> Exosystem:
    """Draw a small exosystem with every eigenvalue modulus >= 1."""
    kind = rng.integers(0, 4 if allow_2d else 2)
    if kind == 0:
        return Exosystem(A0=[[float(rng.choice([-1, 1])) * (1.0 + rng.uniform(0, 1))]])
    if kind == 1:
        return Exosystem(A0=[[1.0]])
    if kind == 2:
        theta = rng.uniform(0.1, np.pi - 0.1)
        scale = 1.0 + rng.uniform(0, 0.5)
        c, s = np.cos(theta), np.sin(theta)
        return Exosystem(A0=(scale * np.array([[c, -s], [s, c]])).tolist())
    return Exosystem(A0=[[1.0, 1.0], [0.0, 1.0]])


def random_spanning_graph(rng, n_followers: int) -> AugmentedGraph:
    """Random weighted digraph whose augmented graph has a spanning tree,
    with at least one unpinned follower and d_i + g_i > 0 everywhere."""
    adj = np.zeros((n_followers, n_followers))
    pinning = np.zeros(n_followers)
    pinning[0] = rng.uniform(0.2, 1.0)
    for i in range(1, n_followers):
        j = int(rng.integers(0, i))  # reachable predecessor
        adj[i, j] = rng.uniform(0.1, 1.0)
    # sprinkle extra edges (possibly creating cycles)
    for i in range(n_followers):
        for j in range(n_followers):
            if i != j and rng.uniform() < 0.25:
                adj[i, j] = rng.uniform(0.05, 0.8)
    for i in range(1, n_followers - 1):
        if rng.uniform() < 0.2:
            pinning[i] = rng.uniform(0.1, 0.5)
    # the last follower stays unpinned so the graph is never fully pinned
    return AugmentedGraph(adjacency=adj, pinning=pinning)


def random_acyclic_graph(rng, n_followers: int) -> AugmentedGraph:
    """Spanning-tree graph whose follower digraph is acyclic (edges only
    from lower to higher index)."""
    adj = np.zeros((n_followers, n_followers))
    pinning = np.zeros(n_followers)
    pinning[0] = rng.uniform(0.2, 1.0)
    for i in range(1, n_followers):
        j = int(rng.integers(0, i))
        adj[i, j] = rng.uniform(0.1, 1.0)
        for j2 in range(i):
            if rng.uniform() < 0.3:
                adj[i, j2] = rng.uniform(0.05, 0.8)
    if n_followers > 2 and rng.uniform() < 0.3:
        # never pin the last follower, so the graph is never fully pinned
        pinning[int(rng.integers(1, n_followers - 1))] = rng.uniform(0.1, 0.5)
    return AugmentedGraph(adjacency=adj, pinning=pinning)


def random_agent(rng, n: int, m: int, p: int) -> AgentPlant:
    return AgentPlant(
        A=rng.uniform(-1.2, 1.2, (n, n)),
        B=rng.uniform(-1.0, 1.0, (n, m)),
        C=rng.uniform(-1.0, 1.0, (p, n)),
        D=np.zeros((p, m)),
    )


def random_gainset(rng, model: MasModel, n_z: int, scale: float = 1.0) -> GainSet:
    return GainSet(
        K1=tuple(rng.uniform(-scale, scale, (a.m, a.n)) for a in model.agents),
        K2=tuple(rng.uniform(-scale, scale, (a.m, n_z)) for a in model.agents),
    )


def random_acyclic_instance(rng, max_followers: int = 5, max_state: int = 3):
    """Acyclic-graph system with random plants, auto-built internal model,
    and a random structured gain."""
    n_followers = int(rng.integers(2, max_followers + 1))
    graph = random_acyclic_graph(rng, n_followers)
    exo = random_antistable_exosystem(rng)
    agents = tuple(
        random_agent(rng, int(rng.integers(1, max_state + 1)),
                     int(rng.integers(1, 3)), 1)
        for _ in range(n_followers)
    )
    model = MasModel(agents=agents, exo=exo)
    im = InternalModel.build(exo.A0, model.p, n_followers)
    gm = build_graph_matrices(graph, model.p)
    gains = random_gainset(rng, model, im.n_z)
    return model, im, gm, gains


def random_conditions_instance(rng, max_followers: int = 4):
    """System satisfying the spanning-tree, internal-model, transmission
    rank, and stabilizability conditions (resamples agents until the rank
    checks pass)."""
    n_followers = int(rng.integers(2, max_followers + 1))
    graph = random_spanning_graph(rng, n_followers)
    exo = random_antistable_exosystem(rng)
    agents = []
    while len(agents) < n_followers:
        ag = random_agent(rng, int(rng.integers(1, 4)), int(rng.integers(1, 3)), 1)
        if check_agent_stabilizable(ag) and check_transmission_rank(ag, exo):
            agents.append(ag)
    model = MasModel(agents=tuple(agents), exo=exo)
    im = InternalModel.build(exo.A0, model.p, n_followers)
    gm = build_graph_matrices(graph, model.p)
    return model, im, gm


def coupling_window_graph(rng) -> AugmentedGraph:
    """Three-follower graph whose averaged adjacency has exactly two
    nonzero singular values, sqrt(alpha^2 + delta^2) and
    sqrt(beta^2 + (1-beta)^2), both below one.

    Followers 0 and 2 each listen only to follower 1, with the normalized
    weight set through their pinning gains; follower 1 splits unit weight
    between the other two.  Keeping the nonzero singular values clustered
    keeps the coupling-gain bound sigma_max^3 / sigma_min_nz near or below
    one, which is where the agent-wise design program has room to breathe
    (the bound is very sensitive to near-rank-deficiency, so generic random
    weights almost always blow it up).
    """
    alpha, delta = rng.uniform(0.45, 0.65, 2)
    beta = rng.uniform(0.35, 0.65)
    adjacency = np.array([
        [0.0, 1.0, 0.0],
        [beta, 0.0, 1.0 - beta],
        [0.0, 1.0, 0.0],
    ])
    pinning = np.array([(1 - alpha) / alpha, 0.0, (1 - delta) / delta])
    return AugmentedGraph(adjacency=adjacency, pinning=pinning)


def random_zero_feedthrough_agent(rng) -> AgentPlant:
    if rng.uniform() < 0.5:
        return AgentPlant(
            A=[[rng.uniform(0.7, 1.3)]], B=[[1.0]], C=[[1.0]], D=[[0.0]]
        )
    return AgentPlant(
        A=[[1.0, rng.uniform(0.5, 1.0)], [0.0, rng.uniform(0.8, 1.1)]],
        B=[[rng.uniform(0.3, 0.8)], [1.0]],
        C=[[1.0, 0.0]],
        D=[[0.0]],
    )


def random_local_design_instance(rng):
    """Zero-feedthrough three-follower system over a coupling-window graph,
    tuned so the agent-wise convex design program is usually feasible."""
    graph = coupling_window_graph(rng)
    exo = Exosystem(A0=[[1.0]])
    agents = tuple(random_zero_feedthrough_agent(rng) for _ in range(3))
    model = MasModel(agents=agents, exo=exo)
    im = InternalModel.build(exo.A0, 1, 3)
    gm = build_graph_matrices(graph, 1)
    return model, im, gm
