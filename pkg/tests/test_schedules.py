import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wdrsl.model import ProblemParams, component_operator
from wdrsl.solvers import (TheoryScheduleInputs, estimate_G, sevr_theory_schedule, spprr_theory_schedule)
from wdrsl.solvers.trace import default_start

P = ProblemParams()
LIP = P.lipschitz_F

pos = st.floats(1e-3, 1e3, allow_nan=False)
eps = st.floats(1e-4, 0.99, allow_nan=False)


def test_sevr_epochs_example():
    cfg = sevr_theory_schedule(TheoryScheduleInputs(D_u=1.0, D_L=1.0, epsilon=0.1), P)
    assert cfg.epochs_S == 7


def test_sevr_small_epsilon_hits_middle_branch():
    inp = TheoryScheduleInputs(D_u=1.0, D_L=1.0, epsilon=1e-6)
    cfg = sevr_theory_schedule(inp, P)
    middle = 1e-6 / (2000 * math.sqrt(2) * LIP ** 2)
    assert cfg.eta == middle
    assert cfg.k0 == math.ceil(1.0 / middle)
    halved = sevr_theory_schedule(TheoryScheduleInputs(1.0, 1.0, 5e-7), P)
    assert halved.k0 >= 2 * cfg.k0 - 1


def test_sevr_large_DL_hits_last_branch():
    cfg = sevr_theory_schedule(TheoryScheduleInputs(D_u=1e-3, D_L=1e3, epsilon=0.5), P)
    assert cfg.eta == 1e-6 / 1e3


def test_spprr_M_example():
    # Lip = 2.25 here, so the epoch bound is 21 Du^2 = 4200 and S = ceil(8400 / 5000) = 2
    inp = TheoryScheduleInputs(D_u=math.sqrt(200.0), D_L=1.0, epsilon=0.5, G=1.0)
    assert LIP == 2.25
    cfg = spprr_theory_schedule(inp, 5000, P)
    assert cfg.epochs_S == 2 and cfg.fixed_point_M == 17


def test_spprr_eta_branches():
    big = spprr_theory_schedule(TheoryScheduleInputs(1.0, 1.0, 0.9, G=0.1), 100, P)
    assert big.eta == 1 / (2 * LIP)
    small = spprr_theory_schedule(TheoryScheduleInputs(1.0, 1.0, 0.01, G=10.0), 100, P)
    assert small.eta == 0.01 / 400


@pytest.mark.parametrize("e", [0.0, 1.0, -0.1, 2.0, math.nan])
def test_epsilon_out_of_range(e):
    with pytest.raises(ValueError):
        TheoryScheduleInputs(1.0, 1.0, e)


@pytest.mark.parametrize("field", ["D_u", "D_L", "G"])
def test_nonpositive_inputs(field):
    kw = dict(D_u=1.0, D_L=1.0, epsilon=0.1, G=1.0)
    kw[field] = 0.0
    with pytest.raises(ValueError):
        TheoryScheduleInputs(**kw)


@settings(max_examples=100)
@given(pos, pos, eps, st.floats(0.0, 5.0), st.floats(0.1, 5.0))
def test_sevr_inequalities(Du, DL, e, delta, kappa):
    p = ProblemParams(delta=delta, kappa=kappa)
    lip = 0.25 + kappa + 1.0
    cfg = sevr_theory_schedule(TheoryScheduleInputs(Du, DL, e), p)
    assert cfg.eta <= 1 / (100 * lip)
    assert cfg.eta <= e / (2000 * math.sqrt(2) * lip ** 2 * Du ** 2)
    assert cfg.eta <= Du ** 2 / DL
    assert cfg.k0 * cfg.eta * DL >= Du ** 2 * (1 - 1e-12)
    assert (cfg.k0 - 1) * cfg.eta * DL < Du ** 2 * (1 + 1e-12) or cfg.k0 == 1
    # 2^(S-1) <= 10 DL / eps < 2^S, unless the floor went negative and S was clamped
    x = 10 * DL / e
    if cfg.epochs_S > 1 or x >= 1:
        assert 2.0 ** cfg.epochs_S > x * (1 - 1e-12)
        assert 2.0 ** (cfg.epochs_S - 1) <= x * (1 + 1e-12)


@settings(max_examples=100)
@given(pos, eps, pos, st.integers(1, 10 ** 6), st.floats(0.1, 5.0))
def test_spprr_inequalities(Du, e, G, n, kappa):
    p = ProblemParams(kappa=kappa)
    lip = 0.25 + kappa + 1.0
    cfg = spprr_theory_schedule(TheoryScheduleInputs(Du, 1.0, e, G=G), n, p)
    S = cfg.epochs_S
    assert cfg.eta <= 1 / (2 * lip) and cfg.eta <= e / (4 * G ** 2)
    assert cfg.eta == pytest.approx(min(1 / (2 * lip), e / (4 * G ** 2)), rel=1e-15)
    assert 2 * lip * Du ** 2 / (n * S) + 3 * G ** 2 * Du ** 2 / (e * n * S) <= e / 2 * (1 + 1e-12)
    # the residual after M halvings is below a tenth of 1/(nS)
    assert 2.0 ** cfg.fixed_point_M > 10 * n * S
    assert 2.0 ** (cfg.fixed_point_M - 1) <= 10 * n * S


def test_estimate_G_bounds_sampled_components(small_ds, params):
    G = estimate_G(small_ds, params, n_points=20, seed=1)
    u = default_start(small_ds, params)
    norms = [np.linalg.norm(component_operator(u, i, small_ds, params).to_dense(small_ds.d, small_ds.n)
                            .to_vector()) for i in range(small_ds.n)]
    assert G >= max(norms) - 1e-12
    assert G == estimate_G(small_ds, params, n_points=20, seed=1)
    # bigger lambda range can only raise the estimate's scale
    assert estimate_G(small_ds, params, lam_cap=100.0, n_points=20, seed=1) > G
