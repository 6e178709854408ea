import configparser
from dataclasses import replace

import numpy as np
import pytest

from conftest import run_cell
from dyadic_intent.exceptions import ConfigError
from dyadic_intent.intent import AgentGoal, InteractionType, SUPPORTED_CELLS
from dyadic_intent.simulator import (
    AgentPolicy,
    NoiseConfig,
    SceneConfig,
    generate_batch,
    policies_for_cell,
    scripted_policies,
    session_seed,
    simulate,
)
from oracles import energy_terms

H, S, N = AgentGoal.hard, AgentGoal.soft, AgentGoal.no_goal


def test_no_goal_pair_does_not_drift(quiet_scene):
    _, tr = simulate(quiet_scene, (AgentPolicy(), AgentPolicy()), 0, duration=11.0)
    assert tr.t[-1] == pytest.approx(11.0)
    assert np.max(np.linalg.norm(tr.position - tr.position[0], axis=1)) < 0.05
    assert tr.consensus_time is None


def test_hard_goal_leads_no_goal_partner(quiet_scene):
    _, tr = simulate(quiet_scene, (AgentPolicy(goal=H(1)), AgentPolicy()), 0)
    assert tr.settled_goal == 1
    assert np.linalg.norm(tr.position[-1] - quiet_scene.layout.coordinate(1)) < quiet_scene.arrival_radius
    assert tr.consensus_time - tr.t_start < 2.0


def test_soft_conflict_bifurcates_then_one_concedes(quiet_scene):
    pol = (AgentPolicy(goal=S(1), commitment=0.9), AgentPolicy(goal=S(3), commitment=0.6))
    assert pol[0].push_gain == pol[1].push_gain
    _, tr = simulate(quiet_scene, pol, 0)
    assert len(tr.concessions) == 1
    assert len(tr.intent_switches) == 1
    agent, t_c, old, new = tr.intent_switches[0]
    assert (agent, old, new) == (2, 3, 1)
    assert tr.settled_goal == 1
    p1, p2 = tr.power(1), tr.power(2)
    before = tr.t < t_c
    opposed = (p1 * p2 < 0) & (np.abs(p1) > 0.5) & (np.abs(p2) > 0.5) & before
    assert np.sum(opposed) * tr.dt >= 0.1


def test_newton_consistency(quiet_cells):
    for _, tr, _ in quiet_cells.values():
        dv = np.diff(tr.velocity, axis=0) / tr.dt
        f = (tr.f1[:-1, :2] + tr.f2[:-1, :2] + tr.friction[:-1]) / tr.mass
        np.testing.assert_allclose(dv, f, atol=1e-9)


def test_energy_balance_on_random_intervals(quiet_cells):
    rng = np.random.default_rng(0)
    for _, tr, _ in quiet_cells.values():
        n = len(tr.t)
        for _ in range(5):
            i0, i1 = sorted(rng.choice(n, 2, replace=False))
            work, dke, diss = energy_terms(tr, i0, i1)
            scale = max(abs(work), abs(dke) + abs(diss), 1e-3)
            assert abs(work - (dke + diss)) <= 1e-9 * scale
        work, dke, diss = energy_terms(tr, 0, n - 1, rule="trapezoid")
        assert abs(work - (dke + diss)) <= 1e-3 * abs(work)


def test_squeeze_is_internal(quiet_scene):
    cell = InteractionType.NON_CONFLICTING_SS
    _, a, _ = run_cell(cell, 3, quiet_scene, base=AgentPolicy(grasp_preload=0.0))
    _, b, _ = run_cell(cell, 3, quiet_scene, base=AgentPolicy(grasp_preload=5.0))
    m = min(len(a.t), len(b.t))
    # the 5 N preload cancels; only rounding fed back through the loop remains
    np.testing.assert_allclose(a.f1[:m] + a.f2[:m], b.f1[:m] + b.f2[:m], atol=1e-4)
    np.testing.assert_allclose(a.position[:m], b.position[:m], atol=1e-6)
    assert np.max(np.abs(np.linalg.norm(a.f1[:m], axis=1) - np.linalg.norm(b.f1[:m], axis=1))) > 1.0


@pytest.mark.parametrize("cell", [InteractionType.NON_CONFLICTING_HH, InteractionType.NON_CONFLICTING_SS,
                                  InteractionType.NON_CONFLICTING_HS, InteractionType.KCG])
def test_cooperative_drive_power_adds_up(quiet_scene, cell):
    for seed in range(3):
        _, tr, _ = run_cell(cell, seed, quiet_scene)
        drives = tr.epochs_for(kind="drive")
        assert {e.agent for e in drives} == {1, 2}
        t0, t1 = max(e.t_on for e in drives), min(e.t_off for e in drives)
        m = (tr.t >= t0) & (tr.t < t1)
        p_sum = np.sum((tr.f1[m, :2] + tr.f2[m, :2]) * tr.velocity[m], axis=1)
        both = np.abs(tr.power(1)[m]) + np.abs(tr.power(2)[m])
        assert np.sum(p_sum) == pytest.approx(np.sum(both), rel=0.05)


def test_determinism(quiet_scene):
    pol, asg, kcg = policies_for_cell(InteractionType.CONFLICTING_SS, np.random.default_rng(5))
    for scene in (quiet_scene, SceneConfig()):
        r1, t1 = simulate(scene, pol, 11, assignment=asg)
        r2, t2 = simulate(scene, pol, 11, assignment=asg)
        np.testing.assert_array_equal(t1.position, t2.position)
        np.testing.assert_array_equal(r1.ft1.values, r2.ft1.values)
        np.testing.assert_array_equal(r1.pose.position, r2.pose.position)


def test_noise_only_touches_sensors():
    pol, asg, _ = policies_for_cell(InteractionType.NO_GOAL_VS_HARD, np.random.default_rng(2))
    _, quiet = simulate(SceneConfig(noise=NoiseConfig.noiseless()), pol, 4, assignment=asg)
    raw, noisy = simulate(SceneConfig(), pol, 4, assignment=asg)
    np.testing.assert_array_equal(quiet.position, noisy.position)
    assert raw.pose.t[-1] <= noisy.t[-1] + 1e-12


def test_conflicting_hard_pair_is_flagged(quiet_scene):
    _, tr, _ = run_cell(InteractionType.CONFLICTING_HH, 0, quiet_scene)
    assert tr.flags["unresolvable"] and tr.flags["no_consensus"]
    assert tr.consensus_time is None and tr.settled_goal is None
    assert tr.t[-1] == pytest.approx(16.0)


def test_every_cell_settles_on_an_assigned_goal(quiet_cells):
    for cell, (_, tr, policies) in quiet_cells.items():
        goals = {p.goal.index for p in policies if p.goal.index is not None}
        assert tr.settled_goal in goals, cell


def test_scripted_policies_follow_script(quiet_scene):
    pol, dur = scripted_policies(np.random.default_rng(1), n_actions=6, goals=[1, 2, 3, 1, 2, 3])
    _, tr = simulate(quiet_scene, pol, 0, duration=dur, stop_after_arrival=None)
    pushes = tr.epochs_for(kind="push")
    assert [e.goal for e in pushes] == [1, 2, 3, 1, 2, 3]
    assert not tr.epochs_for(kind="drive")
    with pytest.raises(ConfigError):
        scripted_policies(np.random.default_rng(1), n_actions=3, goals=[1])


def test_generate_batch(tmp_path):
    res = generate_batch([("KCG", 5), (InteractionType.CONFLICTING_SS, 10)], 7, tmp_path, duration=12.0)
    dirs = sorted(p.name for p in tmp_path.iterdir() if p.is_dir())
    assert len(dirs) == 15 and len(res) == 15
    cp = configparser.ConfigParser()
    cp.read(tmp_path / "manifest.ini")
    cells = [cp[d]["cell"] for d in dirs]
    assert cells == ["KCG"] * 5 + ["ConflictingSS"] * 10
    assert cp["dataset"]["n_sessions"] == "15"
    assert cp[dirs[0]]["seed"] == str(session_seed(7, 1))
    for d in dirs:
        assert (tmp_path / d / "session.ini").exists()
        assert (tmp_path / d / "truth.csv").exists()
    with pytest.raises(ConfigError):
        generate_batch([("KCG", 0)], 7, tmp_path / "x")


def test_session_seeds_are_distinct():
    seeds = {session_seed(3, i) for i in range(1, 200)}
    assert len(seeds) == 199
    assert session_seed(3, 1) == session_seed(3, 1)


def test_config_validation(quiet_scene):
    with pytest.raises(ConfigError):
        SceneConfig(ft_rate=300.0)
    with pytest.raises(ConfigError):
        NoiseConfig(force_sigma=-1.0)
    with pytest.raises(ConfigError):
        AgentPolicy(goal=H(1), commitment=0.5)
    with pytest.raises(ConfigError):
        AgentPolicy(commitment=0.0)
    with pytest.raises(ConfigError):
        simulate(quiet_scene, (AgentPolicy(), AgentPolicy()), 0, duration=0.5)
    with pytest.raises(ConfigError):
        policies_for_cell("bogus", np.random.default_rng(0))


def test_supported_cells_are_all_simulable(quiet_scene):
    for cell in SUPPORTED_CELLS:
        pol, asg, kcg = policies_for_cell(cell, np.random.default_rng(0))
        assert asg.agent1 == pol[0].goal and asg.agent2 == pol[1].goal
        assert kcg == (cell is InteractionType.KCG)
    hs = replace(AgentPolicy(), goal=S(2), commitment=0.5)
    assert hs.effective_threshold == pytest.approx(0.5 * hs.concession_threshold)
