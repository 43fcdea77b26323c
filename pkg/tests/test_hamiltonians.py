import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adjoint_mather import (
    InvalidArgument,
    InvalidProfile,
    InvalidShape,
    PotentialSpec,
    Profile,
    make_1d_nonconvex,
    make_conserved_sum,
    make_counterexample,
    make_mechanical,
    make_nonuniqueness,
    make_quasiconvex_square,
    make_radial,
)
from adjoint_mather.hamiltonians import (
    check_derivatives,
    check_periodicity,
    counterexample_level_set,
    h3_scan,
    rightward_branch,
)
from adjoint_mather.scenarios import SCENARIOS, build_model

RADIAL = Profile([0, 0, 0.5, -1.9 / 3, 0.25])


def all_models():
    return {name: build_model(s.model) for name, s in SCENARIOS.items()}


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_analytic_derivatives_match_finite_differences(name):
    errs = check_derivatives(all_models()[name], n=60, rng=np.random.default_rng(1))
    assert max(errs.values()) < 1e-6, errs


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_models_are_periodic(name):
    assert check_periodicity(all_models()[name], n=60, rng=np.random.default_rng(2)) < 1e-10


def test_mechanical_values():
    m = make_mechanical(PotentialSpec("cosine", [1.0]))
    x = np.array([[0.0, 0.25, 0.5]])
    p = np.array([[1.0, 2.0, 0.0]])
    np.testing.assert_allclose(m.value(x, p), [1.5, 2.0, -1.0], atol=1e-15)
    assert m.convexity_class == "uniformly-convex"


def test_convexity_classes():
    assert make_quasiconvex_square(PotentialSpec("cosine", [0.5])).convexity_class == "quasiconvex"
    assert make_quasiconvex_square(PotentialSpec("cosine", [0.5, 1.0])).convexity_class == "uniformly-convex"
    assert make_radial(RADIAL, PotentialSpec("constant", [0.0])).convexity_class == "quasiconvex"
    assert make_1d_nonconvex(RADIAL, PotentialSpec("cosine", [0.5])).convexity_class == "nonconvex"


def test_potential_kinds_agree():
    x = np.linspace(0, 1, 17)[None]
    cos = PotentialSpec("cosine", [0.7, 0.1])
    trig = PotentialSpec("trig-polynomial", [[1, 0.7, 0.0], [0, 0.1, 0.0]])
    samples = 0.1 + 0.7 * np.cos(2 * np.pi * np.arange(16) / 16)
    tab = PotentialSpec("tabulated-smooth", samples)
    for V in (trig, tab):
        np.testing.assert_allclose(V.value(x), cos.value(x), atol=1e-13)
        np.testing.assert_allclose(V.gradient(x), cos.gradient(x), atol=1e-11)
    with pytest.raises(InvalidArgument):
        PotentialSpec("gaussian", [1.0])


@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.floats(0, 1))
def test_trig_polynomial_gradient_fd(coef, x0):
    V = PotentialSpec("trig-polynomial", [[1, coef[0], coef[1]], [3, coef[2], 0.0]])
    h = 1e-6
    fd = (V.value(np.array([[x0 + h]])) - V.value(np.array([[x0 - h]]))) / (2 * h)
    assert abs(fd[0] - V.gradient(np.array([[x0]]))[0, 0]) < 1e-5 * (1 + np.abs(coef).sum() * 40)


def test_radial_profile_rejections():
    V = PotentialSpec("constant", [0.0])
    with pytest.raises(InvalidProfile):
        make_radial(Profile([0, 1.0, 0.5]), V)  # Hr'(0) != 0
    with pytest.raises(InvalidProfile):
        make_radial(Profile([0, 0, -0.5]), V)  # Hr''(0) < 0
    with pytest.raises(InvalidProfile):
        make_radial(Profile([0, 0, 0.5, -1.0, 0.25]), V)  # Hr' vanishes at s = 1


def test_nonuniqueness_has_two_classical_solutions():
    psi = PotentialSpec("cosine", [0.1])
    m = make_nonuniqueness(psi)
    x = np.linspace(0, 1, 50, endpoint=False)[None]
    assert np.abs(m.value(x, np.zeros_like(x))).max() < 1e-15
    assert np.abs(m.value(x, psi.gradient(x))).max() < 1e-15


def test_conserved_sum_bracket():
    """{p1 - p2, H} = 0."""
    m = build_model(SCENARIOS["conserved-sum"].model)
    r = np.random.default_rng(3)
    x, p = r.random((2, 40)), r.standard_normal((2, 40))
    gx = m.grad_x(x, p)
    assert np.abs(gx[0] - gx[1]).max() < 1e-12
    with pytest.raises(InvalidArgument):
        make_conserved_sum([Profile([0, 0, 0.5])], PotentialSpec("constant", [0.0]))


def test_counterexample_level_set_is_s_shaped():
    m = build_model(SCENARIOS["counterexample"].model)
    rep = counterexample_level_set(m)
    assert rep.min_gradient > 1.0  # no equilibria on the level set
    assert 0.2 < rep.non_graphical_fraction < 0.6
    assert max(rep.branch_counts) == 4 and min(rep.branch_counts) == 2
    xs, g, jumps = rightward_branch(m)
    assert len(jumps) >= 1
    hp = m.grad_p(xs[None], g[None])[0]
    assert np.all(hp < 0)
    np.testing.assert_allclose(m.value(xs[None], g[None])[0], 0.0, atol=1e-9)


def test_counterexample_rejects_graphical_level_set():
    # a(x) > r^4 everywhere: exactly two roots at every x, no S-shape
    with pytest.raises(InvalidShape, match="graphical"):
        make_counterexample(PotentialSpec("constant", [0.0]), PotentialSpec("cosine", [0.1, 3.0]))


def test_counterexample_rejects_empty_level_set():
    with pytest.raises(InvalidShape, match="empty"):
        make_counterexample(PotentialSpec("constant", [0.0]), PotentialSpec("cosine", [0.1, -3.0]))


def test_h3_scan_grows_for_quartic():
    m = build_model(SCENARIOS["counterexample"].model)
    scan = h3_scan(m, [1.0, 2.0, 4.0])
    assert scan.grows
