import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advfl import client, objectives as ob


def test_fedavg_quadratic_is_geometric(rng):
    L, eta, s = 2.0, 0.1, 7
    theta = rng.standard_normal(4)
    u = client.fedavg_local(ob.QuadraticLoss(L, np.zeros(4)), theta, eta, s)
    np.testing.assert_allclose(u.new_model, (1 - eta * L) ** s * theta, rtol=1e-13)
    np.testing.assert_array_equal(u.delta, u.new_model - theta)


def test_fedavg_fixed_point_and_single_step(rng):
    c = rng.standard_normal(3)
    loss = ob.QuadraticLoss(1.5, c)
    u = client.fedavg_local(loss, c, 0.1, 5)
    np.testing.assert_array_equal(u.delta, 0.0)
    theta = rng.standard_normal(3)
    u1 = client.fedavg_local(loss, theta, 0.1, 1)
    np.testing.assert_array_equal(u1.new_model, theta - 0.1 * loss.gradient(theta))


def test_fedavg_divergence_names_client_and_round():
    loss = ob.QuadraticLoss(1.0, np.zeros(2), client_id=3, round=11)
    with pytest.raises(client.DivergenceError, match="client 3, round 11"):
        client.fedavg_local(loss, np.ones(2), 1e200, 50)


def test_fedprox_closed_forms(rng):
    L, eta = 2.0, 0.3
    theta = rng.standard_normal(3)
    u = client.fedprox_local(ob.QuadraticLoss(L, np.zeros(3)), theta, eta)
    np.testing.assert_allclose(u.new_model, theta / (1 + eta * L), rtol=1e-15)
    shift = rng.standard_normal(3)
    g = ob.ShiftedQuadratic(L, shift).draw(0, None)
    z = client.fedprox_local(g, theta, eta).new_model
    np.testing.assert_allclose(z, (theta - eta * shift) / (1 + eta * L), rtol=1e-13)
    assert np.linalg.norm(g.gradient(z) + (z - theta) / eta) <= 1e-9


def test_fedprox_rejects_nonconvex_prox():
    loss = ob.DiagonalQuadraticLoss(np.array([1.0, -2.0]), np.zeros(2))
    with pytest.raises(ValueError):
        client.fedprox_local(loss, np.ones(2), 0.5)
    client.fedprox_local(loss, np.ones(2), 0.4)


def test_momentum_step(rng):
    loss = ob.QuadraticLoss(1.0, rng.standard_normal(3))
    theta = rng.standard_normal(3)
    g = loss.gradient(theta)
    u = client.momentum_step(loss, theta, rng.standard_normal(3), beta0=0.0, eta=0.1)
    np.testing.assert_array_equal(u.momentum, g)
    np.testing.assert_allclose(u.new_model, theta - 0.1 * g)
    u = client.momentum_step(loss, theta, g, beta0=0.9, eta=0.1)
    np.testing.assert_allclose(u.momentum, g, rtol=1e-15)
    with pytest.raises(ValueError):
        client.momentum_step(loss, theta, g, beta0=1.0)


def test_kappa_examples():
    assert client.kappa(1, 0.3, 2.0) == 0.0
    for x in (1e-8, 0.01, 0.5, 3.0):
        assert client.kappa(2, x, 1.0) == pytest.approx(1.0, abs=1e-15)
    bound = (math.exp(0.1) - 1 - 0.1) / (0.1 ** 2 / 2)
    assert bound == pytest.approx(1.0342, abs=1e-4)
    for s in range(2, 50):
        assert 1.0 <= client.kappa(s, 0.1 / s, 1.0) <= bound
    with pytest.raises(ValueError):
        client.kappa(0, 0.1, 1.0)


@settings(max_examples=200, deadline=None)
@given(s=st.integers(2, 12), x=st.floats(1e-3, 2.0))
def test_kappa_matches_definition(s, x):
    direct = ((1 + x) ** s - 1 - s * x) / (math.comb(s, 2) * x * x)
    assert client.kappa(s, x, 1.0) == pytest.approx(direct, rel=1e-9)


def test_local_updates_are_deterministic(synth, rng):
    batch = synth.clients[0].objective.draw(0, rng)
    theta = 0.1 * rng.standard_normal(batch.dim)
    a = client.fedavg_local(batch, theta, 0.05, 3)
    b = client.fedavg_local(batch, theta, 0.05, 3)
    assert a.new_model.tobytes() == b.new_model.tobytes()
