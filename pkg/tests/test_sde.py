import numpy as np
import pytest

from adjoint_mather import (
    CellProblemSpec,
    InvalidArgument,
    PotentialSpec,
    SimConfig,
    TorusGrid,
    dP_u,
    make_mechanical,
    simulate,
    solve_cell,
    stationary_adjoint,
)
from adjoint_mather.errors import DtTooLarge
from adjoint_mather.sde import drift_check_X, dynkin_residuals, occupation_tv, rotation_number_mc
from adjoint_mather.testfunctions import TestFunction, PShape, TrigMode
from conftest import pendulum_density, pendulum_solution

FAST = SimConfig(dt=1e-3, steps=100_000, replicates=8, seed=3)


def test_free_particle_rotation_is_minus_P():
    sol = solve_cell(CellProblemSpec(make_mechanical(PotentialSpec("constant", [0.0])), (0.8,), 0.1, TorusGrid((64,))))
    d = stationary_adjoint(sol)
    est = rotation_number_mc(sol, FAST, d)
    assert est.adjoint[0] == pytest.approx(-0.8)
    assert est.z_scores[0] < 4
    # the displacement is -P t + eps w: the standard error follows from eps alone
    T = FAST.steps * 0.9 * FAST.dt / FAST.batches
    assert est.stderr[0] == pytest.approx(0.1 / np.sqrt(T * FAST.batches * FAST.replicates), rel=0.5)


def test_same_seed_same_path():
    sol = pendulum_solution(2.0, 0.1, 256)
    a, b = simulate(sol, FAST), simulate(sol, FAST)
    assert np.array_equal(a.marks, b.marks) and np.array_equal(a.histogram, b.histogram)
    c = simulate(sol, SimConfig(dt=1e-3, steps=100_000, replicates=8, seed=4))
    assert not np.array_equal(a.marks, c.marks)


def test_occupation_and_rotation_agree_with_theta():
    sol = pendulum_solution(2.0, 0.1, 256)
    d = pendulum_density(2.0, 0.1, 256)
    cfg = SimConfig(dt=1e-3, steps=300_000, replicates=8, seed=11)
    rep = simulate(sol, cfg)
    assert occupation_tv(rep, d) < 0.05
    rot = rotation_number_mc(sol, cfg, d, rep)
    assert rot.z_scores[0] < 4
    assert rot.paper_sign[0] == pytest.approx(-rot.adjoint[0])


def test_drift_identity_and_variance_bound():
    sol = pendulum_solution(2.0, 0.1, 256)
    d = pendulum_density(2.0, 0.1, 256)
    dpu = dP_u(sol.spec, base=sol)
    dr = drift_check_X(sol, dpu, SimConfig(dt=1e-3, steps=300_000, replicates=8, seed=5), d)
    assert dr.z_scores[0] < 4
    assert dr.slack > 0 and dr.variance_exact <= dr.bound


def test_dynkin_residuals_small():
    sol = pendulum_solution(2.0, 0.1, 256)
    fs = [TestFunction(TrigMode((1,), kind), PShape(shape, (2.0,), 3.0)) for kind in ("cos", "sin") for shape in ("one", "bump")]
    rows = dynkin_residuals(sol, SimConfig(dt=1e-3, steps=200_000, replicates=8, seed=9), fs)
    assert all(abs(r.residual) < 4 * r.stderr + 1e-3 for r in rows)


def test_config_validation_and_large_dt():
    with pytest.raises(InvalidArgument):
        SimConfig(steps=0)
    with pytest.raises(InvalidArgument):
        SimConfig(steps=100, burn_in=100)
    sol = pendulum_solution(2.0, 0.1, 256)
    with pytest.raises(DtTooLarge), pytest.warns(UserWarning):
        simulate(sol, SimConfig(dt=1.0, steps=1000, replicates=1))
