"""Linear time-domain simulation and log-decrement damping estimation."""

from __future__ import annotations

import numpy as np
import pytest

from gridstrength.network import GfmAttachment, attach_gfm, load_network, reduce_network
from gridstrength.dynamics import direct_full_model, load_device
from gridstrength.simulate import (
    Disturbance,
    estimate_damping,
    simulate,
    traces_to_csv,
)


@pytest.fixture(scope="module")
def stable_model(fig3_path, device_path):
    spec = load_network(fig3_path)
    dev = load_device(device_path)
    reduced = attach_gfm(reduce_network(spec), GfmAttachment(gamma=0.128, z_local=0.16))
    return direct_full_model(dev, reduced)


@pytest.fixture(scope="module")
def unstable_model(fig3_path, device_path):
    spec = load_network(fig3_path)
    dev = load_device(device_path)
    return direct_full_model(dev, reduce_network(spec))


STEP = Disturbance(
    kind="setpoint_step", farm_id="f1", channel="i_d", magnitude=0.05, t_apply=0.1
)


def test_zero_disturbance_all_zero(stable_model):
    dist = Disturbance(
        kind="setpoint_step", farm_id="f1", channel="i_d", magnitude=0.0
    )
    result = simulate(stable_model, dist, duration=1.0)
    assert np.array_equal(result.traces, np.zeros_like(result.traces))


def test_disturbance_magnitude_cap():
    with pytest.raises(ValueError, match="magnitude"):
        Disturbance(kind="setpoint_step", farm_id="f1", channel="i_d", magnitude=0.5)
    Disturbance(
        kind="setpoint_step", farm_id="f1", channel="i_d",
        magnitude=0.5, allow_large=True,
    )


def test_halving_dt_matches_at_shared_samples(stable_model):
    coarse = simulate(stable_model, STEP, duration=1.0, dt=1e-3)
    fine = simulate(stable_model, STEP, duration=1.0, dt=5e-4)
    scale = np.abs(coarse.traces).max()
    assert np.max(np.abs(coarse.traces - fine.traces[:, ::2])) < 1e-9 * scale


def test_matches_dense_ode_oracle(stable_model):
    from scipy.integrate import solve_ivp

    result = simulate(stable_model, STEP, duration=1.0, dt=1e-3)
    a = stable_model.a
    # oracle: integrate the forced linear system from the step instant
    labels = list(stable_model.state_labels)
    row = labels.index("f1.i_d")
    tau = -1.0 / a[row, row]
    u = np.zeros(a.shape[0])
    u[row] = STEP.magnitude / tau
    sol = solve_ivp(
        lambda t, x: a @ x + u,
        (0.0, 0.9),
        np.zeros(a.shape[0]),
        t_eval=np.arange(0.0, 0.9001, 1e-3),
        rtol=1e-11,
        atol=1e-13,
    )
    oracle = stable_model.output @ sol.y
    k0 = int(round(STEP.t_apply / 1e-3))
    scale = np.abs(oracle).max()
    assert np.max(np.abs(result.traces[:, k0 : k0 + oracle.shape[1]] - oracle)) < 1e-7 * scale


def test_overflow_guard_truncates(unstable_model):
    result = simulate(unstable_model, STEP, duration=10.0, dt=1e-3)
    assert result.truncated
    assert np.all(np.isfinite(result.traces))
    assert np.abs(result.traces).max() <= 2e6


def test_superposition_in_disturbance_magnitude(stable_model):
    def run(mag):
        dist = Disturbance(
            kind="setpoint_step", farm_id="f1", channel="i_d",
            magnitude=mag, t_apply=0.1,
        )
        return simulate(stable_model, dist, duration=1.0).traces

    combined = run(0.05)
    parts = run(0.02) + run(0.03)
    assert np.max(np.abs(combined - parts)) < 1e-10


def test_estimate_damping_recovers_known_ratio():
    # synthetic single-mode result: zeta = 0.1, f = 2 Hz
    zeta, f = 0.1, 2.0
    wn = 2 * np.pi * f / np.sqrt(1 - zeta**2)
    t = np.arange(0.0, 5.0, 1e-3)
    trace = np.exp(-zeta * wn * t) * np.cos(2 * np.pi * f * t)
    from gridstrength.simulate import SimulationResult

    result = SimulationResult(
        time=t,
        traces=trace[None, :],
        farm_ids=("f1",),
        dt=1e-3,
        duration=5.0,
        disturbance=STEP,
        truncated=False,
        metadata={},
    )
    est = estimate_damping(result, "f1")
    assert est.zeta == pytest.approx(zeta, rel=0.05)
    assert est.frequency_hz == pytest.approx(f, rel=0.02)


def test_estimate_damping_requires_oscillation(stable_model):
    flat = simulate(
        stable_model,
        Disturbance(kind="setpoint_step", farm_id="f1", channel="i_d", magnitude=0.0),
        duration=1.0,
    )
    with pytest.raises(ValueError, match="insufficient oscillation"):
        estimate_damping(flat, "f1")


def test_csv_roundtrip(stable_model):
    result = simulate(stable_model, STEP, duration=0.5, dt=1e-3)
    text = traces_to_csv(result)
    lines = text.strip().split("\n")
    assert lines[0] == "t_s,farm_f1_dP_pu,farm_f2_dP_pu,farm_f3_dP_pu,farm_f4_dP_pu"
    assert len(lines) == 1 + len(result.time)
    parsed = np.array(
        [[float(v) for v in line.split(",")] for line in lines[1:]]
    )
    assert np.array_equal(parsed[:, 0], result.time)
    assert np.array_equal(parsed[:, 1:], result.traces.T)
