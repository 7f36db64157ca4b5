import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harbordock.control import ControllerState, DpGains, Reference, control, pose_error
from harbordock.vessel import BodyVelocity, ModelParams, Pose, VesselState, rotation_matrix, tracking_feedforward

small = st.floats(-5.0, 5.0, allow_nan=False)


def rest_reference(pose=(0.0, 0.0, 0.0)):
    return Reference(np.array(pose, float), np.zeros(3), np.zeros(3))


def test_default_gains():
    g = DpGains()
    assert g.kp == (100.0, 100.0, 200.0)
    assert g.ki == (10.0, 10.0, 20.0)
    assert g.kd == (1000.0, 1000.0, 1500.0)
    assert g.antiwindup_limit == (150.0, 150.0, 200.0)


@pytest.mark.parametrize("bad", [dict(kp=(1, 1)), dict(ki=(1, 0, 1)), dict(kd=(1, -1, 1))])
def test_gains_validated(bad):
    with pytest.raises(ValueError):
        DpGains(**bad)


def test_gains_dict_round_trip():
    g = DpGains(kp=(1, 2, 3))
    assert DpGains.from_dict(g.to_dict()) == g
    with pytest.raises(ValueError):
        DpGains.from_dict({"kq": [1, 2, 3]})


def test_pose_error_examples():
    assert np.array_equal(pose_error(Pose(1, 2, 0.3), Pose(1, 2, 0.3)), np.zeros(3))
    assert np.allclose(pose_error(Pose(1, 0, 0), Pose(0, 0, 0)), [1, 0, 0])
    e = pose_error(Pose(0, 0, 3.0), Pose(0, 0, -3.0))
    assert e[2] == pytest.approx(-(2 * math.pi - 6.0))


def test_quiescent_output_zero(params):
    x = np.zeros(6)
    tau, _ = control(x, rest_reference(), ControllerState(), DpGains(), params, 0.1)
    assert np.array_equal(tau, np.zeros(3))


def test_proportional_example(params):
    x = np.array([1.0, 0, 0, 0, 0, 0])
    tau, _ = control(x, rest_reference(), ControllerState(), DpGains(), params, 0.1)
    assert np.allclose(tau, [-100.0, 0.0, 0.0])


def test_integral_clamps_after_long_error(params):
    x = np.array([1.0, 0, 0, 0, 0, 0])
    state = ControllerState()
    for k in range(1000):  # 100 s at 10 Hz
        _, state = control(x, rest_reference(), state, DpGains(), params, 0.1, k * 0.1)
    assert state.integral_term[0] == pytest.approx(150.0)
    assert state.last_time == pytest.approx(99.9)


def test_integral_used_before_update(params):
    x = np.array([1.0, 0, 0, 0, 0, 0])
    tau0, s1 = control(x, rest_reference(), ControllerState(), DpGains(), params, 0.1)
    tau1, _ = control(x, rest_reference(), s1, DpGains(), params, 0.1)
    assert tau0[0] == pytest.approx(-100.0)
    assert tau1[0] == pytest.approx(-100.0 - 10.0 * 0.1)


def test_dt_must_be_positive(params):
    with pytest.raises(ValueError):
        control(np.zeros(6), rest_reference(), ControllerState(), DpGains(), params, 0.0)


@settings(max_examples=100)
@given(st.lists(st.tuples(small, small, small), min_size=1, max_size=60),
       st.floats(0.01, 1.0))
def test_integral_never_leaves_box(errors, dt):
    p, g = ModelParams(), DpGains()
    state = ControllerState()
    for e in errors:
        x = np.array([e[0] * 100, e[1] * 100, e[2], 0, 0, 0])
        _, state = control(x, rest_reference(), state, g, p, dt)
        assert np.all(np.abs(state.integral_term) <= np.array(g.antiwindup_limit) + 1e-12)


@settings(max_examples=100)
@given(small, small, small, st.floats(-math.pi, math.pi))
def test_feedback_equivariant_under_world_rotation(en, ee, psi, theta):
    p = ModelParams()
    x = np.array([en, ee, psi, 0, 0, 0])
    tau_a, _ = control(x, rest_reference(), ControllerState(), DpGains(kp=(100, 100, 200)), p, 0.1)
    R = rotation_matrix(theta)[:2, :2]
    rotated = np.concatenate([R @ [en, ee], [psi + theta, 0, 0, 0]])
    ref = rest_reference((0.0, 0.0, theta))
    tau_b, _ = control(rotated, ref, ControllerState(), DpGains(kp=(100, 100, 200)), p, 0.1)
    assert np.allclose(tau_a, tau_b, atol=1e-9)


@settings(max_examples=100)
@given(small, small, small, small, small, small)
def test_perfect_tracking_gives_feedforward(n, e, psi, u, v, r):
    p = ModelParams()
    acc = np.array([0.01 * u, 0.02 * v, 0.001 * r])
    nu = np.array([u, v, 0.1 * r])
    ref = Reference(np.array([n, e, psi]), nu, acc)
    x = VesselState(Pose(n, e, psi), BodyVelocity(*nu))
    tau, _ = control(x, ref, ControllerState(), DpGains(), p, 0.1)
    assert np.allclose(tau, tracking_feedforward(nu, acc, p), rtol=1e-12, atol=1e-9)


def test_derivative_term_uses_velocity_difference(params):
    x = np.array([0, 0, 0, 0.2, 0, 0])
    tau, _ = control(x, rest_reference(), ControllerState(), DpGains(), params, 0.1)
    assert tau[0] == pytest.approx(-1000.0 * 0.2)
