import numpy as np
import pytest

from rcorp.assembly import GainSet, assemble_global, closed_loop
from rcorp.errors import NotSchur, SpectraOverlap
from rcorp.lmi import LmiConstraint, LmiVariable, solve_feasibility
from rcorp.plant import Exosystem, MasModel, UncertaintyDelta
from rcorp.verification import (
    evaluate_conditions,
    is_schur,
    membership,
    robustness_sample,
    simulate,
    solve_regulator,
    suggested_horizon,
)

CASE6_REFERENCE_GAINS = GainSet(
    K1=(np.array([[-1.3147]]), np.array([[-1.5978, -1.5674]]),
        np.array([[-1.3147]]), np.array([[-1.5978, -1.5674]])),
    K2=(np.array([[-0.1176]]), np.array([[-0.1609]]),
        np.array([[-0.1176]]), np.array([[-0.1609]])),
)


class TestIsSchur:
    def test_contraction(self):
        stable, radius = is_schur(0.5 * np.eye(3))
        assert stable and radius == pytest.approx(0.5)

    def test_unit_boundary(self):
        stable, radius = is_schur(np.eye(2))
        assert not stable and radius == pytest.approx(1.0)

    def test_bundled_stable_loop(self, case2):
        A_g, _ = closed_loop(case2["ga"], case2["gains"])
        stable, radius = is_schur(A_g)
        assert stable and radius == pytest.approx(0.8604141, abs=1e-6)

    def test_free_lyapunov_matches_schur(self):
        # free-variable Lyapunov feasibility agrees with the eigenvalue test
        # in both directions
        rng = np.random.default_rng(60)
        for _ in range(12):
            n = int(rng.integers(2, 5))
            M = rng.standard_normal((n, n))
            M *= rng.uniform(0.3, 1.6) / max(1e-9, np.abs(np.linalg.eigvals(M)).max())
            P = LmiVariable("P", (n, n), symmetric=True)
            sol = solve_feasibility([P], [
                LmiConstraint("pd", lambda v: v["P"], ">=", strict=True),
                LmiConstraint("dec", lambda v, M=M: M @ v["P"] @ M.T - v["P"],
                              "<=", strict=True),
            ])
            assert sol.feasible == is_schur(M)[0]


class TestMembership:
    def test_free_only_gain(self, case2):
        report = membership(case2["ga"], case2["la"], case2["gains"], case2["gm"])
        assert report.in_KG.yes
        assert report.in_KS.status == "numerically_no"
        assert report.in_KLA.status == "numerically_no"
        assert report.in_KLC.status == "numerically_no"

    def test_locally_stable_globally_unstable_gain(self, case4):
        report = membership(case4["ga"], case4["la"], case4["gains"], case4["gm"])
        assert report.in_KLA.yes
        assert report.in_KG.status == "numerically_no"
        assert report.in_KS.status == "numerically_no"

    def test_structured_member(self, case3):
        report = membership(case3["ga"], case3["la"], case3["gains"], case3["gm"])
        assert report.in_KS.yes
        assert report.in_KG.yes
        assert report.in_KLA.yes  # deadbeat local loops
        assert report.in_KLC.status == "numerically_no"

    def test_chain_respected_on_every_yes(self, case2, case3, case4):
        order = ("in_KLC", "in_KS", "in_KG")
        for case in (case2, case3, case4):
            report = membership(case["ga"], case["la"], case["gains"], case["gm"])
            verdicts = [getattr(report, name).yes for name in order]
            for narrower, wider in zip(verdicts, verdicts[1:]):
                assert (not narrower) or wider

    def test_report_serializes(self, case3):
        report = membership(case3["ga"], case3["la"], case3["gains"], case3["gm"])
        doc = report.as_dict()
        assert doc["K_S"]["status"] == "yes"
        assert set(doc) == {"K_G", "K_S", "K_LA", "K_LC"}

    def test_benchmark_gains_certified_everywhere(self, case6, case6_synthesis):
        report = membership(case6["ga"], case6["la"], case6_synthesis.gains,
                            case6["gm"])
        assert report.in_KLC.yes and report.in_KS.yes
        assert report.in_KG.yes and report.in_KLA.yes


class TestSolveRegulator:
    def test_zero_channels_zero_solution(self, case6):
        model = case6["model"]
        E = [np.zeros((ag.n, 1)) for ag in model.agents]
        reg = solve_regulator(case6["ga"], CASE6_REFERENCE_GAINS, E, np.zeros((1, 1)))
        np.testing.assert_allclose(reg.X_g, 0.0, atol=1e-12)
        assert reg.output_residual < 1e-12

    def test_internal_model_forces_zero_output_residual(self, case6):
        rng = np.random.default_rng(61)
        model = case6["model"]
        for _ in range(5):
            E = [rng.standard_normal((ag.n, 1)) for ag in model.agents]
            F_ref = rng.standard_normal((1, 1))
            reg = solve_regulator(case6["ga"], CASE6_REFERENCE_GAINS, E, F_ref)
            assert reg.sylvester_residual < 1e-9
            assert reg.output_residual < 1e-8

    def test_perturbed_model_keeps_residual(self, case6):
        rng = np.random.default_rng(62)
        model = case6["model"]
        hits = 0
        for _ in range(5):
            delta = UncertaintyDelta.sample(model, 0.01, rng)
            E = [rng.standard_normal((ag.n, 1)) for ag in model.agents]
            F_ref = rng.standard_normal((1, 1))
            reg = solve_regulator(case6["ga"], CASE6_REFERENCE_GAINS, E, F_ref,
                                  delta=delta)
            assert reg.output_residual < 1e-8
            hits += 1
        assert hits == 5

    def test_unstable_loop_rejected(self, case4):
        model = case4["model"]
        E = [np.zeros((ag.n, 1)) for ag in model.agents]
        with pytest.raises(NotSchur):
            solve_regulator(case4["ga"], case4["gains"], E, np.ones((1, 1)))

    def test_shared_eigenvalue_rejected(self, case3):
        # a deadbeat closed loop with eigenvalue 0.5 collides with a
        # (non-antistable) exosystem at 0.5
        config = case3["config"]
        model = config.build_model()
        clone = MasModel(agents=model.agents, exo=Exosystem(A0=[[0.5]]))
        ga = assemble_global(clone, case3["im"], case3["gm"])
        E = [np.zeros((1, 1)), np.zeros((1, 1))]
        with pytest.raises(SpectraOverlap):
            solve_regulator(ga, case3["gains"], E, np.ones((1, 1)))


class TestSimulate:
    def test_equilibrium_stays_zero(self, case6):
        model, im, gm = case6["model"], case6["im"], case6["gm"]
        E = [np.zeros((ag.n, 1)) for ag in model.agents]
        trace = simulate(model, im, gm, CASE6_REFERENCE_GAINS, E, np.ones((1, 1)),
                         x0=[np.zeros(ag.n) for ag in model.agents],
                         z0=[np.zeros(1)] * 4, v0=[0.0], horizon=30)
        assert np.all(trace.error_norms == 0.0)

    def test_tracking_converges(self, case6):
        model, im, gm = case6["model"], case6["im"], case6["gm"]
        rng = np.random.default_rng(63)
        E = [np.zeros((ag.n, 1)) for ag in model.agents]
        trace = simulate(model, im, gm, CASE6_REFERENCE_GAINS, E, np.ones((1, 1)),
                         x0=[rng.standard_normal(ag.n) for ag in model.agents],
                         z0=[np.zeros(1)] * 4, v0=[1.0], horizon=400)
        assert trace.error_norms[-1] < 1e-6
        assert trace.horizon == 400
        assert trace.e.shape == (401, 4, 1)

    def test_instability_is_data(self, case4):
        model, im, gm = case4["model"], case4["im"], case4["gm"]
        E = [np.zeros((1, 1)), np.zeros((1, 1))]
        trace = simulate(model, im, gm, case4["gains"], E, np.ones((1, 1)),
                         x0=[[0.1], [0.1]], z0=[[0.0], [0.0]], v0=[1.0],
                         horizon=30)
        assert trace.error_norms[-1] > 1e6

    def test_neighborhood_error_matches_averaging_matrix(self, case6):
        # the loop-form neighborhood errors coincide with W applied to the
        # stacked tracking error
        gm = case6["gm"]
        rng = np.random.default_rng(64)
        errors = rng.standard_normal((4, 1))
        adj = gm.graph.adjacency
        scale = gm.graph.in_degrees + gm.graph.pinning
        loop = np.vstack([
            (sum(adj[i, j] * (errors[i] - errors[j]) for j in range(4))
             + gm.graph.pinning[i] * errors[i]) / scale[i]
            for i in range(4)
        ])
        compact = gm.W @ errors
        np.testing.assert_allclose(loop, compact, atol=1e-12)

    def test_loop_iteration_matches_compact_form(self):
        # two-channel outputs: the agent-wise simulation must coincide with
        # iterating the stacked closed loop x+ = A_g x + B_g v_a,
        # e = C_g x + D_g v_a
        from helpers import random_spanning_graph
        from rcorp.graphs import build_graph_matrices
        from rcorp.internal_model import InternalModel
        from rcorp.plant import AgentPlant

        rng = np.random.default_rng(66)
        p = 2
        exo = Exosystem(A0=[[0.0, -1.0], [1.0, 0.0]])
        agents = tuple(
            AgentPlant(
                A=rng.uniform(-0.6, 0.6, (n, n)),
                B=rng.uniform(-1, 1, (n, 2)),
                C=rng.uniform(-1, 1, (p, n)),
                D=rng.uniform(-0.5, 0.5, (p, 2)),
            )
            for n in (2, 3)
        )
        model = MasModel(agents=agents, exo=exo)
        im = InternalModel.build(exo.A0, p, 2)
        gm = build_graph_matrices(random_spanning_graph(rng, 2), p)
        ga = assemble_global(model, im, gm)
        K = GainSet(
            K1=tuple(rng.uniform(-0.3, 0.3, (2, a.n)) for a in agents),
            K2=tuple(rng.uniform(-0.3, 0.3, (2, im.n_z)) for a in agents),
        )
        E = [rng.uniform(-1, 1, (a.n, 2)) for a in agents]
        F_ref = rng.uniform(-1, 1, (p, 2))
        x0 = [rng.standard_normal(a.n) for a in agents]
        z0 = [rng.standard_normal(im.n_z) for _ in agents]
        v0 = rng.standard_normal(2)

        horizon = 12
        trace = simulate(model, im, gm, K, E, F_ref, x0, z0, v0, horizon)

        A_g, C_g = closed_loop(ga, K)
        from rcorp.plant import ExogenousChannels

        B_g, D_g = ga.exo_input(ExogenousChannels(E=tuple(E), F_ref=F_ref))
        A0a = ga.A0a
        x_g = np.concatenate([*x0, *z0])
        v_a = np.kron(np.ones(2), v0)
        for t in range(horizon + 1):
            e_compact = C_g @ x_g + D_g @ v_a
            np.testing.assert_allclose(
                trace.e[t].ravel(), e_compact, atol=1e-10
            )
            x_g = A_g @ x_g + B_g @ v_a
            v_a = A0a @ v_a

    def test_steady_state_matches_regulator_solution(self, case6):
        model, im, gm, ga = case6["model"], case6["im"], case6["gm"], case6["ga"]
        rng = np.random.default_rng(65)
        E = [rng.standard_normal((ag.n, 1)) * 0.2 for ag in model.agents]
        F_ref = np.array([[1.0]])
        reg = solve_regulator(ga, CASE6_REFERENCE_GAINS, E, F_ref)
        trace = simulate(model, im, gm, CASE6_REFERENCE_GAINS, E, F_ref,
                         x0=[rng.standard_normal(ag.n) for ag in model.agents],
                         z0=[np.zeros(1)] * 4, v0=[1.0], horizon=400)
        # stack [x; z] at the final step in the global ordering and compare
        # against X_g v_a
        x_end = np.concatenate([trace.x[i][-1] for i in range(4)])
        z_end = np.concatenate([trace.z[i][-1] for i in range(4)])
        v_a = np.kron(np.ones(4), trace.v[-1])
        predicted = reg.X_g @ v_a
        achieved = np.concatenate([x_end, z_end])
        assert np.linalg.norm(achieved - predicted) < 1e-6


class TestRobustness:
    def test_nominal_sampling(self, case6):
        report = robustness_sample(case6["model"], case6["im"], case6["gm"],
                                   CASE6_REFERENCE_GAINS, rho=0.0, n_samples=5)
        assert report.fraction_schur == 1.0
        assert report.max_output_residual < 1e-8

    def test_small_perturbations_stay_stable(self, case6):
        report = robustness_sample(case6["model"], case6["im"], case6["gm"],
                                   CASE6_REFERENCE_GAINS, rho=1e-3, n_samples=25)
        assert report.fraction_schur == 1.0
        assert report.max_output_residual < 1e-8

    def test_large_perturbations_destabilize(self, case6):
        report = robustness_sample(case6["model"], case6["im"], case6["gm"],
                                   CASE6_REFERENCE_GAINS, rho=10.0, n_samples=20)
        assert report.fraction_schur < 1.0

    def test_deterministic_given_seed(self, case6):
        kwargs = dict(rho=0.05, n_samples=8, seed=123)
        a = robustness_sample(case6["model"], case6["im"], case6["gm"],
                              CASE6_REFERENCE_GAINS, **kwargs)
        b = robustness_sample(case6["model"], case6["im"], case6["gm"],
                              CASE6_REFERENCE_GAINS, **kwargs)
        assert a.radii == b.radii
        assert a.max_output_residual == b.max_output_residual

    def test_samples_independent_of_batch_size(self, case6):
        # per-sample seeds derive from (seed, index), so a sample's outcome
        # does not depend on how many others run alongside it
        small = robustness_sample(case6["model"], case6["im"], case6["gm"],
                                  CASE6_REFERENCE_GAINS, rho=0.05,
                                  n_samples=3, seed=7)
        large = robustness_sample(case6["model"], case6["im"], case6["gm"],
                                  CASE6_REFERENCE_GAINS, rho=0.05,
                                  n_samples=8, seed=7)
        assert small.radii == large.radii[:3]

    def test_unstable_nominal_rejected(self, case4):
        with pytest.raises(NotSchur):
            robustness_sample(case4["model"], case4["im"], case4["gm"],
                              case4["gains"], rho=0.1, n_samples=3)


class TestConditions:
    def test_bundled_case_passes(self, case6):
        config = case6["config"]
        results = evaluate_conditions(config.build_graph(), case6["model"],
                                      case6["im"])
        assert all(ok for ok, _ in results.values())

    def test_stable_exosystem_flagged(self, case6):
        model = MasModel(agents=case6["model"].agents, exo=Exosystem(A0=[[0.5]]))
        results = evaluate_conditions(case6["config"].build_graph(), model,
                                      case6["im"])
        assert not results["exosystem_antistable"][0]


class TestSuggestedHorizon:
    def test_fast_decay_uses_floor(self):
        assert suggested_horizon(0.5) == 200

    def test_slow_decay_scales(self):
        assert suggested_horizon(0.99) > 1000

    def test_unit_radius_rejected(self):
        with pytest.raises(NotSchur):
            suggested_horizon(1.0)
