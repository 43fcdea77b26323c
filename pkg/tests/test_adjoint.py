import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adjoint_mather import (
    CellProblemSpec,
    InvalidArgument,
    PotentialSpec,
    Profile,
    TorusGrid,
    build_generator,
    build_phase_measure,
    dissipation_field,
    iul_functional,
    make_mechanical,
    mather_checks,
    solve_cell,
    stationary_adjoint,
    support_diagnostics,
    weak_kam_identity_check,
)
from adjoint_mather.adjoint import (
    adjointness_defect,
    convexity_constant,
    graph_defect,
    iul_weighted_trace,
    power_iteration_density,
    radial_recipe,
)
from adjoint_mather.scenarios import RADIAL_PROFILE, SCENARIOS, build_model
from adjoint_mather.testfunctions import catalog
from conftest import pendulum, pendulum_density, pendulum_solution
from oracles import dense_null_density


@pytest.mark.parametrize("flux", ["sg", "upwind"])
def test_generator_structure(flux):
    sol = pendulum_solution(2.0, 0.1, 256)
    G = -build_generator(sol, flux).matrix.toarray()
    off = G - np.diag(np.diag(G))
    assert off.min() >= 0
    assert np.abs(G.sum(axis=1)).max() <= 1e-12 * np.abs(G).max()


@pytest.mark.parametrize("P,eps", [(0.0, 0.3), (2.0, 0.1), (0.7, 0.05)])
def test_theta_matches_dense_null_space(P, eps):
    sol = solve_cell(CellProblemSpec(pendulum(), (P,), eps, TorusGrid((64,))))
    d = stationary_adjoint(sol)
    ref = dense_null_density(build_generator(sol).matrix.toarray(), sol.grid.cell_volume)
    np.testing.assert_allclose(d.theta.ravel(), ref, rtol=1e-8, atol=1e-10)
    assert abs(d.mass - 1) < 1e-13 and d.theta.min() >= 0


def test_theta_matches_power_iteration():
    sol = solve_cell(CellProblemSpec(pendulum(), (1.0,), 0.3, TorusGrid((48,))))
    theta, _ = power_iteration_density(sol, tol=1e-15)
    np.testing.assert_allclose(stationary_adjoint(sol).theta, theta, rtol=1e-7)


def test_theta_2d_matches_dense_null_space():
    model = build_model(SCENARIOS["conserved-sum"].model)
    sol = solve_cell(CellProblemSpec(model, (0.5, 0.25), 0.3, TorusGrid((12, 12))))
    d = stationary_adjoint(sol)
    ref = dense_null_density(build_generator(sol).matrix.toarray(), sol.grid.cell_volume)
    np.testing.assert_allclose(d.theta.ravel(), ref, rtol=1e-8)


@given(st.integers(0, 2**31 - 1))
def test_discrete_adjointness_for_random_fields(seed):
    d = pendulum_density(2.0, 0.1, 256)
    r = np.random.default_rng(seed)
    fields = [r.standard_normal(256) * r.uniform(0.1, 10) for _ in range(3)]
    assert adjointness_defect(d, fields) <= 1e-12


def test_free_measures_are_trivial():
    sol = solve_cell(CellProblemSpec(make_mechanical(PotentialSpec("constant", [0.0])), (0.5,), 0.1, TorusGrid((64,))))
    d = stationary_adjoint(sol)
    m = dissipation_field(sol, d)
    assert np.abs(d.theta - 1).max() < 1e-12
    assert m.trace_mass == 0.0
    rep = mather_checks(sol, d)
    assert max(rep.resA, rep.resB, rep.resC_po, rep.resC_po_continuum, rep.resC_raw) < 1e-12


def test_energy_identity_is_exact_up_to_newton_residual():
    sol = pendulum_solution(2.0, 0.1, 512)
    rep = mather_checks(sol, stationary_adjoint(sol))
    assert rep.resA_identity <= 1e-6 * rep.resA
    assert rep.resC_po < 1e-10


def test_mather_residuals_shrink_with_eps():
    reps = [mather_checks(pendulum_solution(2.0, e, 512), pendulum_density(2.0, e, 512)) for e in (0.4, 0.1)]
    assert reps[1].resA < reps[0].resA / 4
    assert reps[1].resB < reps[0].resB / 4
    assert reps[1].resC_raw < reps[0].resC_raw / 4


def test_phase_measure_is_a_probability_on_the_graph():
    sol = pendulum_solution(2.0, 0.1, 256)
    mu = build_phase_measure(sol, pendulum_density(2.0, 0.1, 256))
    assert abs(mu.total_mass - 1) < 1e-13
    np.testing.assert_allclose(mu.p.ravel(), sol.p.ravel())


def test_weak_kam_identity():
    sol = pendulum_solution(2.0, 0.1, 512)
    d = pendulum_density(2.0, 0.1, 512)
    m = dissipation_field(sol, d)
    rows = weak_kam_identity_check(sol, d, m)
    assert len(rows) == 24
    assert max(r.discrete for r in rows) < 1e-10
    coarse = weak_kam_identity_check(pendulum_solution(2.0, 0.1, 256), pendulum_density(2.0, 0.1, 256),
                                     dissipation_field(pendulum_solution(2.0, 0.1, 256), pendulum_density(2.0, 0.1, 256)))
    # the fixed-eps continuum identity holds up to O(h^2)
    assert max(r.continuum for r in rows) < max(r.continuum for r in coarse) / 3
    assert max(r.continuum for r in rows) < 1e-2


def test_dissipation_field_2d_is_psd_and_symmetric():
    model = build_model(SCENARIOS["conserved-sum"].model)
    sol = solve_cell(CellProblemSpec(model, (0.5, 0.25), 0.3, TorusGrid((32, 32))))
    m = dissipation_field(sol, stationary_adjoint(sol))
    I = m.integrated()
    assert np.allclose(I, I.T) and np.linalg.eigvalsh(I).min() > -1e-14
    assert abs(I[0, 0] - 2 * I[0, 1] + I[1, 1]) <= 1e-8 * m.trace_mass


def test_iul_at_zero_is_trace_for_mechanical():
    sol = pendulum_solution(2.0, 0.1, 256)
    m = dissipation_field(sol, pendulum_density(2.0, 0.1, 256))
    assert iul_functional(sol, m, 0.0).value == pytest.approx(m.trace_mass, rel=1e-12)
    assert convexity_constant(sol) == pytest.approx(1.0)


@given(st.floats(0.0, 400.0))
def test_iul_factorization_matches_direct_sum(lam):
    sol = pendulum_solution(2.0, 0.1, 256)
    m = dissipation_field(sol, pendulum_density(2.0, 0.1, 256))
    v = iul_functional(sol, m, lam)
    assert np.isfinite(v.mantissa)
    H = sol.model.value(sol.grid.coords, sol.p)
    Hp = sol.model.grad_p(sol.grid.coords, sol.p)[0]
    direct_log = np.log(np.sum(np.exp(lam * H - v.log_scale) * (lam * Hp**2 + 1) * m.density[0, 0]) * sol.grid.cell_volume)
    assert np.log(v.mantissa) == pytest.approx(direct_log, rel=1e-12, abs=1e-12)
    with pytest.raises(InvalidArgument):
        iul_functional(sol, m, float("inf"))


def test_radial_recipe_inequality():
    prof = Profile(RADIAL_PROFILE)
    rec = radial_recipe(prof, 2.0)
    s = np.linspace(rec.r, 2.0, 500)
    assert np.all(rec.lam * prof.d1(s) ** 2 + prof.d2(s) - prof.d1(s) / s >= -1e-12)
    assert 0 < rec.beta <= 0.5 * prof.d2(0.0)


def test_radial_iul_dominates_weighted_trace():
    model = build_model(SCENARIOS["radial"].model)
    sol = solve_cell(CellProblemSpec(model, (0.7,), 0.1, TorusGrid((512,))))
    m = dissipation_field(sol, stationary_adjoint(sol))
    rec = radial_recipe(model.params["profile"], float(np.abs(sol.p).max()))
    assert iul_functional(sol, m, rec.lam).value >= rec.beta * iul_weighted_trace(sol, m, rec.lam).value


def test_support_diagnostics():
    sol = pendulum_solution(2.0, 0.1, 256)
    m = dissipation_field(sol, pendulum_density(2.0, 0.1, 256))
    rep = support_diagnostics(sol, m)
    assert not rep.skipped and rep.fraction_outside == 0.0
    assert support_diagnostics(sol, m, box=0.1).skipped  # sublevel set leaves the sampling box


def test_graph_defect():
    sol = pendulum_solution(2.0, 0.1, 256)
    d = pendulum_density(2.0, 0.1, 256)
    assert graph_defect(sol, d).sup < 1e-14
    fine = pendulum_solution(2.0, 0.1, 1024)
    assert graph_defect(sol, d, fine).sup < 1e-2


def test_catalog_derivatives_by_finite_differences():
    r = np.random.default_rng(7)
    for dim in (1, 2):
        for f in catalog(dim, center=np.full(dim, 0.2), radius=1.5):
            x, p = r.random((dim, 5)), 0.2 + 0.5 * r.standard_normal((dim, 5))
            h = 1e-6
            for a in range(dim):
                e = np.zeros((dim, 1))
                e[a] = h
                fd_x = (f.value(x + e, p) - f.value(x - e, p)) / (2 * h)
                fd_p = (f.value(x, p + e) - f.value(x, p - e)) / (2 * h)
                np.testing.assert_allclose(fd_x, f.grad_x(x, p)[a], atol=1e-6 * (1 + np.abs(fd_x).max()))
                np.testing.assert_allclose(fd_p, f.grad_p(x, p)[a], atol=1e-6 * (1 + np.abs(fd_p).max()))
                fd_pp = (f.grad_p(x, p + e) - f.grad_p(x, p - e)) / (2 * h)
                np.testing.assert_allclose(fd_pp, f.hess_pp(x, p)[:, a], atol=1e-5 * (1 + np.abs(fd_pp).max()))
                fd_xp = (f.grad_x(x, p + e) - f.grad_x(x, p - e)) / (2 * h)
                np.testing.assert_allclose(fd_xp, f.hess_xp(x, p)[:, a], atol=1e-5 * (1 + np.abs(fd_xp).max()))
