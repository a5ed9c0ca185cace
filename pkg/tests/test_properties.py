import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsekit.activations import (
    REGISTRY,
    from_hermite_basis,
    get_activation,
    hermite_coeffs,
    mu_beta,
    nse,
    triple_hermite,
)
from nsekit.committee import CommitteeModel, CommitteeOrderParams, rs_gradient, rs_potential, se_step
from nsekit.numerics import gauss_hermite_rule

RULE = gauss_hermite_rule(80)
SETTINGS = settings(max_examples=60, deadline=None)


def he(k, z):
    return np.polynomial.hermite_e.hermeval(z, [0] * k + [1])


@SETTINGS
@given(st.integers(0, 12), st.integers(0, 12))
def test_hermite_orthogonality(i, j):
    # orthonormal family He_k / sqrt(k!)
    norm = math.sqrt(math.factorial(i) * math.factorial(j))
    val = RULE.expect(lambda z: he(i, z) * he(j, z)) / norm
    assert abs(val - (i == j)) <= 1e-10


@SETTINGS
@given(st.integers(0, 8), st.integers(0, 8), st.integers(0, 8))
def test_triple_product(k, h, j):
    norm = math.sqrt(math.factorial(k) * math.factorial(h) * math.factorial(j))
    quad = RULE.expect(lambda z: he(k, z) * he(h, z) * he(j, z))
    assert abs(triple_hermite(k, h, j) - quad) <= 1e-10 * norm


@SETTINGS
@given(st.permutations([2, 4, 6]))
def test_triple_product_symmetric(perm):
    assert triple_hermite(*perm) == triple_hermite(2, 4, 6)


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_parseval(name):
    spec = get_activation(name) if name != "mix" else get_activation(name, a=0.5, b=0.3)
    exp = hermite_coeffs(spec, 60, warn=False)
    if spec.is_polynomial:
        assert abs(exp.tail_residual) <= 1e-12 * exp.second_moment
    elif name == "abs":
        # kink: c_k^2/k! ~ k^(-5/2), so the tail after 60 terms is ~1e-3
        assert 0 < exp.tail_residual < 2e-3 * exp.second_moment
        assert hermite_coeffs(spec, 30, warn=False).tail_residual > exp.tail_residual
    else:
        assert abs(exp.tail_residual) <= 1e-8 * exp.second_moment


@SETTINGS
@given(st.lists(st.floats(-2, 2), min_size=2, max_size=7), st.floats(0.1, 10))
def test_nse_scale_invariant(basis, factor):
    spec = from_hermite_basis(basis)
    assert nse(spec).beta_star == nse(spec.scaled(factor)).beta_star


@SETTINGS
@given(st.lists(st.floats(-2, 2), min_size=2, max_size=7), st.integers(1, 4))
def test_mu_sign_flip(basis, beta):
    spec = from_hermite_basis(basis)
    flipped = from_hermite_basis([-a for a in basis])
    assert mu_beta(flipped, beta) == pytest.approx((-1) ** beta * mu_beta(spec, beta), rel=1e-9, abs=1e-9)


MODEL = CommitteeModel(get_activation("tanh"), 32)


@SETTINGS
@given(st.floats(0.02, 0.9), st.floats(0.05, 0.95), st.floats(0.5, 80))
def test_rs_gradient(q, h, alpha):
    x = CommitteeOrderParams(q, h)
    dq, dh = rs_gradient(x, alpha, MODEL)
    eps = 1e-6
    f = lambda a, b: rs_potential(CommitteeOrderParams(a, b), alpha, MODEL)
    fd_q = (f(q + eps, h) - f(q - eps, h)) / (2 * eps)
    fd_h = (f(q, h + eps) - f(q, h - eps)) / (2 * eps)
    assert dq == pytest.approx(fd_q, rel=1e-4, abs=1e-6)
    assert dh == pytest.approx(fd_h, rel=1e-4, abs=1e-6)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1 - 1e-9), st.floats(1e-9, 1), st.floats(1e-3, 1e4),
       st.sampled_from(["he2n", "he4n", "tanh", "beta3"]), st.integers(2, 1000))
def test_se_stays_in_box(q, h, alpha, name, p):
    model = CommitteeModel(get_activation(name), p)
    nxt = se_step(CommitteeOrderParams(q, h), alpha, model)
    assert 0 <= nxt.q_d < 1 and 0 < nxt.h <= 1 and nxt.q_a >= -nxt.q_d
