import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from beamselect.errors import ConfigurationError, DomainError
from beamselect.gnn import BoundInputs, bound_constants, gap_terms, generalization_gap
from beamselect.minimal import accuracy_lower_bound, node_budget_bound, optimality_probability_floor


def _inputs(**kw):
    base = dict(B_x=1.0, B_Z=10.0, B_beta=1.0, C_xi=0.5, C_zeta=1.0, C_L=1.0, B_L=5.0, U=4, E=32, D=2, K=1000, delta=0.05)
    base.update(kw)
    return BoundInputs(**base)




@pytest.mark.parametrize("N", [1, 2, 4, 8, 16, 32])
def test_node_budget_at_perfect_accuracy(N):
    assert node_budget_bound(1.0, N) == 2 * N + 1


def test_node_budget_domain():
    with pytest.raises(DomainError):
        node_budget_bound(0.5, 8)
    with pytest.raises(DomainError):
        node_budget_bound(1.1, 8)


@given(st.floats(0.51, 0.999), st.integers(1, 40))
def test_node_budget_shrinks_with_accuracy(rho, N):
    lo = node_budget_bound(rho, N)
    hi = node_budget_bound(min(1.0, rho + 0.001), N)
    assert hi <= lo + 1e-9
    assert lo >= 2 * N + 1 - 1e-9


def test_accuracy_from_loss():
    assert accuracy_lower_bound(math.log(2.0)) == 0.5
    assert accuracy_lower_bound(0.0) == 1.0
    with pytest.raises(DomainError):
        accuracy_lower_bound(-1.0)


def test_optimality_floor():
    assert optimality_probability_floor(1.0, 8) == 1.0
    assert optimality_probability_floor(0.9, 2) == pytest.approx(0.81)
    with pytest.raises(DomainError):
        optimality_probability_floor(1.5, 2)


def test_gap_sqrt_k_terms_halve_when_k_quadruples():
    lam = 1e6
    a = gap_terms(_inputs(K=1000), Lambda=lam)
    b = gap_terms(_inputs(K=4000), Lambda=lam)
    assert b[0] == a[0] / 4
    assert b[1] == a[1] / 2
    assert b[2] == a[2] / 2


def test_gap_decreases_with_k():
    assert generalization_gap(_inputs(K=10_000)) < generalization_gap(_inputs(K=1000))


def test_depth_one_reduces_geometric_factors():
    # with D = 1 both depth series collapse to 1
    p = _inputs(D=1)
    c = bound_constants(p)
    alpha = (1 + p.U * p.C_xi) * p.C_xi * p.B_Z
    assert c["alpha"] == pytest.approx(alpha)
    assert c["sigma_z3"] == pytest.approx(p.C_zeta * p.B_beta * p.U * p.C_xi**2 * p.B_Z * p.B_x)
    assert c["sigma_z1"] == pytest.approx(p.C_zeta * p.B_beta * p.U * p.C_xi**3 * p.B_Z * p.B_x)
    assert c["sigma_z2"] == pytest.approx(p.U * p.C_xi * c["sigma_z1"])
    assert c["Lambda"] > 1


def test_alpha_one_is_outside_domain():
    # (1 + U C) C B_Z = 1 with U=1, C=0.5, B_Z=4/3
    with pytest.raises(DomainError):
        bound_constants(_inputs(U=1, C_xi=0.5, B_Z=4.0 / 3.0))


def test_input_validation():
    with pytest.raises(ConfigurationError):
        _inputs(delta=1.0)
    with pytest.raises(ConfigurationError):
        _inputs(K=0)
    with pytest.raises(ConfigurationError):
        _inputs(B_x=-1.0)
    with pytest.raises(DomainError):
        gap_terms(_inputs(), Lambda=1.0)


def test_gap_nondecreasing_in_depth():
    prev = 0.0
    for D in range(1, 8):
        g = generalization_gap(_inputs(D=D))
        assert g >= prev
        prev = g
    assert bound_constants(_inputs(D=1))["alpha"] > 1


def test_delta_two_rejected():
    with pytest.raises(ConfigurationError):
        _inputs(delta=2.0)
