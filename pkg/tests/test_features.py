import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadic_intent.exceptions import InvalidInputError
from dyadic_intent.features import (
    PhysicalObject,
    PowerFeatureTransformer,
    Quadrant,
    agent_power,
    compute_power_features,
    projected_features,
    quadrant,
    quadrant_codes,
    total_power,
)
from dyadic_intent.fusion import FilterConfig, align
from dyadic_intent.kinematics import GoalLayout, goal_directions

finite = st.floats(-20, 20, allow_nan=False, allow_infinity=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)


def test_agent_power_examples():
    assert agent_power([2, 0, 0], [1.5, 0, 0]) == 3.0
    assert agent_power([2, 0, 0], [0, 1, 0]) == 0.0
    assert agent_power([2, 0, 0], [-1, 0, 0]) == -2.0


def test_total_power_examples():
    assert total_power(np.add([1, 0, 0], [1, 0, 0]), [0.5, 0, 0]) == 1.0
    v = np.array([0.3, -2.0, 0.7])
    assert total_power(np.add([1, 0, 0], [-1, 0, 0]), v) == 0.0


@settings(max_examples=200, deadline=None)
@given(vec3, vec3, vec3)
def test_pure_translation_power_budget(f1, f2, v):
    assert agent_power(f1, v) + agent_power(f2, v) == pytest.approx(total_power(f1 + f2, v), abs=1e-9)


def test_projected_examples():
    assert projected_features(np.array([1.0, 0, 0]), np.array([0.5, 0, 0]), np.array([1.0, 0])) == (1.0, 0.5, 0.5)
    fp, vp, pp = projected_features(np.array([-1.0, 0, 0]), np.array([-0.5, 0, 0]), np.array([1.0, 0]))
    assert (fp, vp, pp) == (-1.0, -0.5, 0.5)
    assert quadrant(fp, vp) is Quadrant.AWAY_DRIVE


def test_projection_trig_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        ang = rng.uniform(0, 2 * np.pi)
        d = np.array([np.cos(ang), np.sin(ang)])
        mag = rng.uniform(0.1, 10)
        fa = ang + np.deg2rad(40)
        f = mag * np.array([np.cos(fa), np.sin(fa), 0.0])
        v = 0.7 * np.array([d[0], d[1], 0.0])
        fp, vp, pp = projected_features(f, v, d)
        assert fp == pytest.approx(mag * np.cos(np.deg2rad(40)), abs=1e-9)
        assert vp == pytest.approx(0.7, abs=1e-12)
        # cosine form of the projected power
        cos_f = np.dot(f[:2], d) / np.linalg.norm(f[:2])
        cos_v = np.dot(v[:2], d) / np.linalg.norm(v[:2])
        assert pp == pytest.approx(np.linalg.norm(f[:2]) * cos_f * np.linalg.norm(v[:2]) * cos_v, abs=1e-9)


def test_quadrant_examples():
    assert quadrant(2, 0.3) is Quadrant.TOWARD_DRIVE
    assert quadrant(-2, -0.3) is Quadrant.AWAY_DRIVE
    assert quadrant(-2, 0.3) is Quadrant.RESIST
    assert quadrant(2, -0.3) is Quadrant.YIELD
    assert quadrant(0.01, 0.001, (0.5, 0.02)) is Quadrant.NEUTRAL
    assert Quadrant.from_label("Resist") is Quadrant.RESIST
    with pytest.raises(InvalidInputError):
        Quadrant.from_label("Sideways")


@settings(max_examples=300, deadline=None)
@given(finite, finite, st.floats(0.01, 5))
def test_quadrant_sign_consistency_and_scaling(f, v, a):
    db = (0.5, 0.02)
    q = quadrant(f, v, db)
    if abs(f) >= db[0] and abs(v) >= db[1]:
        pp = f * v
        assert np.sign(pp) == np.sign(f) * np.sign(v)
        assert (pp > 0) == (q in (Quadrant.TOWARD_DRIVE, Quadrant.AWAY_DRIVE))
        if abs(a * f) >= db[0]:
            assert quadrant(a * f, v, db) is q


def synthetic_stream(n=200, seed=0):
    from dyadic_intent.fusion import FusedStream
    from dyadic_intent.kinematics import handle_velocities, quat_from_yaw
    rng = np.random.default_rng(seed)
    t = np.arange(n) * 0.01
    pos = np.column_stack([np.linspace(0, 0.5, n), np.linspace(0, 0.2, n), np.zeros(n)])
    vel = np.column_stack([rng.normal(0, 0.3, (n, 2)), np.zeros(n)])
    om = np.column_stack([np.zeros((n, 2)), rng.normal(0, 0.5, n)])
    q = quat_from_yaw(rng.uniform(-1, 1, n))
    f1 = np.column_stack([rng.normal(0, 5, (n, 2)), np.full(n, 11.0)])
    f2 = np.column_stack([rng.normal(0, 5, (n, 2)), np.full(n, 11.0)])
    hq = (np.array([-0.305, 0, 0]), np.array([0.305, 0, 0]))
    return FusedStream(t, pos, q, vel, om, f1, f2, handle_velocities(q, vel, om, hq[0]),
                       handle_velocities(q, vel, om, hq[1]))


def test_power_features_against_direct_computation():
    fused = synthetic_stream()
    lay = GoalLayout.circular()
    pf = compute_power_features(fused, lay)
    dirs = goal_directions(fused.position, lay)
    for i in range(0, len(fused), 37):
        assert pf.p1[i] == pytest.approx(np.dot(fused.f1[i], fused.v1[i]))
        assert pf.p_sum[i] == pytest.approx(np.dot(fused.f1[i] + fused.f2[i], fused.linear_velocity[i]))
        for k, (f, v) in enumerate(((fused.f1, fused.v1), (fused.f2, fused.v2))):
            for g in range(3):
                fp, vp, pp = projected_features(f[i], v[i], dirs[i, g])
                assert pf.f_proj[i, k, g] == pytest.approx(fp, abs=1e-12)
                assert pf.p_proj[i, k, g] == pytest.approx(pp, abs=1e-12)
    assert np.array_equal(pf.quadrant, quadrant_codes(pf.f_proj, pf.v_proj))


def test_force_scaling_covariance():
    fused = synthetic_stream(seed=3)
    lay = GoalLayout.circular()
    pf = compute_power_features(fused, lay)
    a = 2.5
    fused.f1 = fused.f1 * a
    fused.f2 = fused.f2 * a
    pf2 = compute_power_features(fused, lay)
    np.testing.assert_allclose(pf2.p1, a * pf.p1, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(pf2.p_proj, a * pf.p_proj, rtol=1e-12, atol=1e-12)
    outside = np.abs(pf.f_proj) >= 0.5
    assert np.array_equal(pf2.quadrant[outside], pf.quadrant[outside])


def test_triangle_bound_on_simulated_sessions(noisy_cells):
    for raw, truth, _ in noisy_cells.values():
        fused = align(raw, FilterConfig(), mounts=((1, 0, 0, 0), (0, 0, 0, 1)))
        lhs = np.linalg.norm(fused.f1 + fused.f2, axis=1)
        assert np.all(lhs <= np.linalg.norm(fused.f1, axis=1) + np.linalg.norm(fused.f2, axis=1))


def test_transformer_matches_function():
    fused = synthetic_stream(seed=5)
    lay = GoalLayout.circular()
    out = PowerFeatureTransformer(layout=lay).fit(fused).transform(fused)
    ref = compute_power_features(fused, lay)
    np.testing.assert_array_equal(out.p_proj, ref.p_proj)


def test_physical_object():
    obj = PhysicalObject()
    assert obj.yaw_inertia == pytest.approx(2.3 * (0.61 ** 2 + 0.31 ** 2) / 12)
    with pytest.raises(InvalidInputError):
        PhysicalObject(mass=0.0)
    with pytest.raises(InvalidInputError):
        PhysicalObject(dimensions=(0.4, 0.31))
