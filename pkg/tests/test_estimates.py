import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adjoint_mather import (
    CellProblemSpec,
    InvalidArgument,
    PotentialSpec,
    TorusGrid,
    averaging_mode_defect,
    dP_u,
    dissipation_field,
    energy_report,
    make_mechanical,
    solve_cell,
    stationary_adjoint,
)
from adjoint_mather.estimates import bounded_by_first, mode_family, spread_ratio
from conftest import pendulum_density, pendulum_solution


def test_free_model_has_zero_energies():
    sol = solve_cell(CellProblemSpec(make_mechanical(PotentialSpec("constant", [0.0])), (0.5,), 0.1, TorusGrid((64,))))
    d = stationary_adjoint(sol)
    dpu = dP_u(sol.spec, base=sol)
    e = energy_report(sol, d, dpu)
    assert e.e2 == 0 and e.e2_raw == 0 and np.all(e.e3 == 0)
    assert e.e2P < 1e-16 and e.e3_rhs == 1.0
    for k in mode_family(1):
        md = averaging_mode_defect(sol, dpu, d, k)
        assert md.lhs < 1e-12 and md.holds


def test_trace_mass_equals_scaled_e2_raw():
    sol = pendulum_solution(2.0, 0.1, 256)
    d = pendulum_density(2.0, 0.1, 256)
    m = dissipation_field(sol, d)
    e = energy_report(sol, d)
    assert abs(m.trace_mass - 0.5 * sol.epsilon**2 * e.e2_raw) <= 1e-12 * max(1.0, m.trace_mass)
    assert np.isnan(e.e2P)


@given(st.floats(-100, 100))
def test_reports_invariant_under_constant_shift(c):
    sol = pendulum_solution(2.0, 0.1, 256)
    d = pendulum_density(2.0, 0.1, 256)
    shifted = dataclasses.replace(sol, u=sol.u + c)
    a, b = energy_report(sol, d), energy_report(shifted, d)
    assert a.e2 == b.e2 and a.e2_raw == b.e2_raw and np.array_equal(a.e3, b.e3)


def test_mode_inequality_pendulum():
    sol = pendulum_solution(2.0, 0.1, 256)
    d = pendulum_density(2.0, 0.1, 256)
    dpu = dP_u(sol.spec, base=sol)
    defects = [averaging_mode_defect(sol, dpu, d, k) for k in mode_family(1)]
    assert all(md.holds for md in defects)
    assert defects[0].rhs > 0


def test_mode_inequality_2d_family_size():
    assert len(mode_family(2)) == 16 and mode_family(2)[0] == (1, 1)


def test_unresolved_mode_is_rejected():
    sol = solve_cell(CellProblemSpec(make_mechanical(PotentialSpec("cosine", [1.0])), (2.0,), 0.2, TorusGrid((16,))))
    d = stationary_adjoint(sol)
    dpu = dP_u(sol.spec, base=sol)
    averaging_mode_defect(sol, dpu, d, (4,))
    with pytest.raises(InvalidArgument):
        averaging_mode_defect(sol, dpu, d, (5,))
    with pytest.raises(InvalidArgument):
        averaging_mode_defect(sol, dpu, d, (1, 1))


def test_uniformly_convex_lhs_is_order_eps_squared():
    lhs = []
    for eps in (0.2, 0.1):
        sol = pendulum_solution(2.0, eps, 1024)
        d = pendulum_density(2.0, eps, 1024)
        lhs.append(averaging_mode_defect(sol, dP_u(sol.spec, base=sol), d, (1,)).lhs)
    assert lhs[1] < lhs[0] / 3


def test_helpers():
    assert bounded_by_first([1.0, 5.0, 9.9]) and not bounded_by_first([1.0, 11.0])
    assert bounded_by_first([0.0, 0.0])
    assert spread_ratio([2.0, 4.0]) == 2.0 and spread_ratio([0.0, 1.0]) == float("inf")
