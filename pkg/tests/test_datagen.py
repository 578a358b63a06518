import numpy as np
import pytest

from advfl import datagen, objectives, seeding


def test_quadratic_family_spread_and_optimum(quad20, rng):
    assert quad20.weights.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(quad20.global_gradient(quad20.optimum), 0.0, atol=1e-12)
    probes = [rng.standard_normal(quad20.d) * 3 for _ in range(100)]
    for p in probes:
        _, G = objectives.measure_BG(quad20.clients, [p])
        assert G == pytest.approx(1.0, abs=1e-9)


def test_quadratic_family_zero_G(rng):
    inst = datagen.quadratic_family(5, 2.0, 0.0, 0.0, rng)
    centers = np.array([c.objective.center for c in inst.clients])
    assert np.all(centers == centers[0])
    np.testing.assert_allclose(inst.optimum, centers[0], rtol=1e-14, atol=1e-15)


def test_two_client_family_measures_G(rng):
    inst = datagen.quadratic_family(2, 1.0, 1.0, 0.0, rng, weights=[0.5, 0.5])
    c = np.array([cl.objective.center for cl in inst.clients])
    assert np.linalg.norm(c[0] - inst.optimum) == pytest.approx(1.0)
    _, G = objectives.measure_BG(inst.clients, [np.zeros(inst.d), np.ones(inst.d)])
    assert G == pytest.approx(1.0, abs=1e-9)


def test_uneven_weights(rng):
    inst = datagen.quadratic_family(3, 1.0, 0.5, 0.0, rng, weights=[0.5, 0.25, 0.25])
    assert list(inst.sizes) == [2, 1, 1]
    _, G = objectives.measure_BG(inst.clients, [np.zeros(inst.d)])
    assert G == pytest.approx(0.5, abs=1e-9)


def test_bad_inputs(rng):
    with pytest.raises(ValueError):
        datagen.quadratic_family(3, 0.0, 1.0, 0.0, rng)
    with pytest.raises(ValueError):
        datagen.quadratic_family(3, 1.0, 1.0, 0.0, rng, weights=[0.5, 0.6, -0.1])
    with pytest.raises(ValueError):
        datagen.synthetic_ab(1, 1, 0, rng)


def test_instance_invariants(rng):
    obj = objectives.IsotropicQuadratic(1.0, np.zeros(2))
    bad = (objectives.ClientSpec(0, 1, 0.6, obj), objectives.ClientSpec(1, 1, 0.6, obj))
    with pytest.raises(ValueError):
        datagen.FederationInstance(bad, objectives.HeterogeneityProfile())
    good = datagen.make_clients([obj, obj], [1, 3])
    with pytest.raises(ValueError):
        datagen.FederationInstance(good, objectives.HeterogeneityProfile(), optimum=np.ones(2))


def test_synthetic_generation(synth):
    assert synth.M == 6 and synth.d == 610
    assert synth.weights.sum() == pytest.approx(1.0, abs=1e-12)
    obj = synth.clients[0].objective
    assert obj.weights.shape == (10, 60) and obj.bias.shape == (10,)
    _, y = obj.sample(10_000, np.random.default_rng(0))
    freq = np.bincount(y, minlength=10) / len(y)
    assert freq.sum() == pytest.approx(1.0) and np.all(freq >= 0)


def test_synthetic_zero_hyperparameters_share_means():
    rng = np.random.default_rng(3)
    inst = datagen.synthetic_ab(0.0, 0.0, 200, rng, volumes=[10] * 200)
    W = np.array([c.objective.weights for c in inst.clients])
    v = np.array([c.objective.feature_mean for c in inst.clients])
    # per-client means are 0; the pooled entries are N(0, 1)
    assert abs(W.mean()) < 0.01 and abs(v.mean()) < 0.02
    assert W.std() == pytest.approx(1.0, abs=0.01)


def test_pareto_volumes(rng):
    n = datagen.pareto_volumes(5000, rng)
    assert n.min() >= 10 and n.max() <= 1000
    assert np.median(n) < np.mean(n)


def test_lower_bound_norms():
    s = datagen.lower_bound_pair("static", 4, 0.5, G=1.0)
    assert float(s.u @ s.u) == pytest.approx(4.0)
    assert s.hidden_set == (0, 1)
    r = datagen.lower_bound_pair("random", 4, 0.5, sigma=1.0)
    assert float(r.u @ r.u) == pytest.approx(4.0)
    for pair in (s, r):
        gap = np.linalg.norm(pair.homogeneous.optimum - pair.heterogeneous.optimum)
        assert gap == pytest.approx(pair.eps * np.linalg.norm(pair.u) / pair.L)
        assert pair.minimizer_gap == pytest.approx(gap)


def test_lower_bound_gradient_shift(rng):
    pair = datagen.lower_bound_pair("static", 8, 0.25, G=1.0)
    for _ in range(5):
        th = rng.standard_normal(pair.homogeneous.d)
        np.testing.assert_allclose(pair.heterogeneous.global_gradient(th),
                                   pair.homogeneous.global_gradient(th) + pair.eps * pair.u, atol=1e-12)


def test_static_pair_satisfies_assumption(rng):
    pair = datagen.lower_bound_pair("static", 8, 0.25, G=1.0)
    inst = pair.heterogeneous
    for _ in range(100):
        th = 3 * rng.standard_normal(inst.d)
        grads = np.array([c.objective.population_gradient(th) for c in inst.clients])
        lhs = inst.weights @ np.sum(grads ** 2, axis=1)
        gF = inst.global_gradient(th)
        assert lhs <= float(gF @ gF) + inst.profile.G ** 2 + 1e-9


def test_random_pair_noise_variance():
    pair = datagen.lower_bound_pair("random", 8, 0.25, sigma=1.0, mask_seed=3)
    obj = pair.heterogeneous.clients[5].objective
    theta = np.zeros(pair.homogeneous.d)
    G = np.array([obj.draw(t, None).gradient(theta) for t in range(20_000)])
    var = np.mean(np.sum((G - obj.population_gradient(theta)) ** 2, axis=1))
    assert var == pytest.approx(1.0, rel=0.05)
    assert obj.sigma == pytest.approx(1.0)


def test_lower_bound_rejects_infeasible():
    with pytest.raises(ValueError):
        datagen.lower_bound_pair("static", 4, 1.0, G=1.0)
    with pytest.raises(ValueError):
        datagen.lower_bound_pair("static", 4, 0.5, G=0.0)
    with pytest.raises(ValueError):
        datagen.lower_bound_pair("random", 4, 0.5, sigma=0.0)
    with pytest.raises(ValueError):
        datagen.lower_bound_pair("static", 5, 0.5, G=1.0)


def test_round_subset_is_shared():
    a = seeding.round_subset(4, 7, 10, 6)
    b = seeding.round_subset(4, 7, 10, 6)
    assert a.tolist() == b.tolist() and len(set(a.tolist())) == 6


@pytest.mark.parametrize("make", [
    lambda: datagen.quadratic_family(4, 1.0, 1.0, 0.3, np.random.default_rng(0)),
    lambda: datagen.synthetic_ab(1.0, 1.0, 3, np.random.default_rng(0), volumes=[12, 20, 15]),
    lambda: datagen.lower_bound_pair("random", 4, 0.5, sigma=1.0).heterogeneous,
    lambda: datagen.lower_bound_pair("static", 4, 0.5, G=1.0).heterogeneous,
])
def test_json_round_trip(make, tmp_path, rng):
    inst = make()
    inst.save(tmp_path / "inst.json")
    back = datagen.FederationInstance.load(tmp_path / "inst.json")
    assert back.M == inst.M and back.d == inst.d
    np.testing.assert_array_equal(back.sizes, inst.sizes)
    th = 0.1 * rng.standard_normal(inst.d)
    np.testing.assert_array_equal(back.global_gradient(th), inst.global_gradient(th))
    assert [c.sigma for c in back.clients] == pytest.approx([c.sigma for c in inst.clients])


def test_unknown_schema_version():
    with pytest.raises(ValueError):
        datagen.FederationInstance.from_dict({"version": 99})
