import pytest

from rcorp import cases
from rcorp.assembly import assemble_global, assemble_local
from rcorp.synthesis import synthesize_local


def build_case(case_id):
    config, gains = cases.load_case(case_id)
    model = config.build_model()
    im = config.build_internal_model(model)
    gm = config.build_graph_matrices(model)
    ga = assemble_global(model, im, gm)
    la = assemble_local(model, im)
    return {
        "config": config, "gains": gains, "model": model, "im": im,
        "gm": gm, "ga": ga, "la": la,
    }


@pytest.fixture(scope="session")
def case1():
    return build_case(1)


@pytest.fixture(scope="session")
def case2():
    return build_case(2)


@pytest.fixture(scope="session")
def case3():
    return build_case(3)


@pytest.fixture(scope="session")
def case4():
    return build_case(4)


@pytest.fixture(scope="session")
def case6():
    return build_case(6)


@pytest.fixture(scope="session")
def case6_synthesis(case6):
    """Local synthesis for the four-agent benchmark, shared because the
    per-agent solves dominate test runtime."""
    config = case6["config"]
    return synthesize_local(
        case6["model"], case6["im"], case6["gm"], r=config.synthesis["r"]
    )
