import csv
import math

import numpy as np
import pytest

from lureobs.design import ObserverGains, ReducedGains, box_samples
from lureobs.model import LureSystem, decompose
from lureobs.setvalued import GuidedSignParams
from lureobs.simulate import (PreconditionError, SignMode, SimConfig,
                              SimulationDiverged, Trajectory,
                              chattering_index, convergence_time, integrate,
                              observer_correction, simulate_bounded_h,
                              simulate_full, simulate_reduced,
                              simulate_scalar_sliding)

X0 = np.array([3.0, 2.0, 1.0])
XH0 = np.array([15.0, 27.0, 16.0])


def _quiet(sys_):
    """Same plant without the unknown-signal channel."""
    return LureSystem(sys_.A, sys_.B, sys_.C, sys_.F, sys_.f1,
                      lambda x, u: np.zeros((3, 1)), sys_.Fop,
                      lambda t, x, u: np.zeros(1), sys_.u)


# ------------------------------------------------------------ config

def test_config_validation():
    for kw in [dict(h_step=0), dict(t_end=0), dict(scheme="rk45"),
               dict(selection="first"), dict(tol_zero=-1),
               dict(coordinates="polar")]:
        args = dict(t_end=1.0) | kw
        with pytest.raises(ValueError):
            SimConfig(**args)
    assert SimConfig(1.0, 0.25).grid().tolist() == [0, 0.25, 0.5, 0.75, 1.0]


@pytest.mark.parametrize("text", ["exact", "sigmoid:1e-3", "sigmoid:0.5:sqrt",
                                  "guided:0.5:0:1:3"])
def test_sign_mode_round_trip(text):
    m = SignMode.parse(text)
    assert SignMode.parse(m.label()) == m


@pytest.mark.parametrize("text", ["", "exact:1", "sigmoid", "sigmoid:0",
                                  "sigmoid:x", "guided:0:0:1:3",
                                  "guided:1:2", "tanh:1"])
def test_sign_mode_rejects(text):
    with pytest.raises(ValueError):
        SignMode.parse(text)


def test_integrate_blowup_guard():
    with pytest.raises(SimulationDiverged) as err:
        integrate(lambda t, y: 50 * y, [1.0], SimConfig(1.0, 1e-2))
    assert 0 < err.value.index < 100
    assert np.all(np.abs(err.value.states) <= 1e9)


def test_state_coordinates_diverge_on_unstable_plant(ex2):
    spec, g, _ = ex2
    with pytest.raises(SimulationDiverged):
        simulate_bounded_h(spec.system, g.observer, spec.bounds,
                           SimConfig(5.0, 1e-3), X0, XH0)


# ------------------------------------------------------------ synchrony

@pytest.mark.parametrize("coords,T", [("state", 2.0), ("error", 10.0)])
def test_synchrony(ex2, coords, T):
    spec, g, samples = ex2
    sys0 = _quiet(spec.system)
    cfg = SimConfig(T, 1e-3, coordinates=coords)
    for traj in (simulate_bounded_h(sys0, g.observer, spec.bounds, cfg, X0, X0),
                 simulate_full(sys0, g.observer, spec.bounds, cfg, X0, X0,
                               samples)):
        assert np.all(traj.e_norm == 0.0)
        assert np.all(traj.V == 0.0) and np.all(traj.W == 0.0)
        np.testing.assert_array_equal(traj.omega, traj.omega_hat)


def test_observer_never_reads_theta(ex2):
    spec, g, _ = ex2
    sys_ = spec.system
    calls = []

    def theta(t, x, u):
        calls.append(t)
        return sys_.theta(t, x, u)

    spy = LureSystem(sys_.A, sys_.B, sys_.C, sys_.F, sys_.f1, sys_.f2,
                     sys_.Fop, theta, sys_.u)
    calls.clear()
    observer_correction(spy, g.observer, SignMode(), 0.3, XH0, [3.0])
    assert calls == []


# ------------------------------------------------------------ observers

def test_bounded_h_converges(ex2):
    spec, g, _ = ex2
    cfg = SimConfig(10.0, 1e-3, coordinates="error")
    tr = simulate_bounded_h(spec.system, g.observer, spec.bounds, cfg, X0, XH0)
    assert tr.info["first_crossing_time"] is not None
    assert tr.info["first_crossing_time"] < 3.0
    assert tr.e_norm[-1] < 0.02
    assert np.all(tr.V >= 0) and np.all(tr.W >= 0)
    n = len(tr)
    for s in (tr.x, tr.x_hat, tr.e_norm, tr.ey_norm, tr.V, tr.W, tr.omega,
              tr.omega_hat):
        assert len(s) == n


def test_bounded_h_beta_precondition(ex2):
    spec, g, _ = ex2
    o = g.observer
    g9 = ObserverGains(o.P, o.L, o.K, 9.0, o.epsilon)
    cfg = SimConfig(0.1, 1e-3, coordinates="error")
    with pytest.raises(PreconditionError):
        simulate_bounded_h(spec.system, g9, spec.bounds, cfg, X0, XH0)
    with pytest.warns(RuntimeWarning, match="L3"):
        simulate_bounded_h(spec.system, g9, spec.bounds, cfg, X0, XH0,
                           strict=False)


def test_full_beta_below_L3(ex2):
    spec, g, samples = ex2
    o = g.observer
    low = ObserverGains(o.P, o.L, o.K, 2.0, o.epsilon)
    with pytest.raises(PreconditionError):
        simulate_full(spec.system, low, spec.bounds, SimConfig(1.0), X0, XH0,
                      samples)


def test_full_converges_with_O_h_band(ex2):
    # the h-scaled injection is up to beta*|h| = 30; one Euler step of that
    # sets the width of the residual chattering band
    spec, g, samples = ex2
    bands = []
    for h in (1e-3, 5e-4):
        cfg = SimConfig(15.0, h, coordinates="error")
        tr = simulate_full(spec.system, g.observer, spec.bounds, cfg, X0, XH0,
                           samples)
        hit = np.flatnonzero(tr.e_norm < 1e-2)
        assert hit.size and tr.times[hit[0]] < 20.0
        bands.append(tr.e_norm[tr.times >= 10].max())
    assert bands[0] <= 1.5 * 30 * 1e-3
    assert 1.6 < bands[0] / bands[1] < 2.5


def test_theta_free_f2_still_converges(ex2):
    spec, g, _ = ex2
    s = spec.system
    sys_ = LureSystem(s.A, s.B, s.C, s.F, s.f1, s.f2, s.Fop,
                      lambda t, x, u: np.zeros(1), s.u)
    tr = simulate_bounded_h(sys_, g.observer, spec.bounds,
                            SimConfig(8.0, 1e-3, coordinates="error"), X0, XH0)
    assert tr.info["first_crossing_time"] is not None
    assert tr.e_norm[-1] < 0.05


def test_lyapunov_guard_excess_is_second_order(ex2):
    # V_{k+1} <= V_k (1 + 10 h rate) fails on the sliding surface only by a
    # term of order h^2 coming from the one-step overshoot of e_y
    spec, g, _ = ex2
    excess = []
    for h in (1e-3, 5e-4):
        tr = simulate_bounded_h(spec.system, g.observer, spec.bounds,
                                SimConfig(6.0, h, coordinates="error"), X0, XH0)
        V = tr.V
        excess.append(float(np.max(V[1:] - V[:-1] * (1 + 10 * h * 0.1))))
        first = int(np.flatnonzero(tr.ey_norm <= 1e-2)[0])
        assert np.all(V[1:first] <= V[:first - 1] * (1 + 10 * h * 0.1))
    assert excess[0] <= 1000 * 1e-3 ** 2
    assert 3.0 < excess[0] / excess[1] < 5.0


def test_euler_rk4_agree_to_first_order(ex2):
    # [0, 0.02] precedes the first relay switch of the plant, so it is smooth
    spec, g, _ = ex2

    def end(scheme, h):
        cfg = SimConfig(0.02, h, scheme=scheme, coordinates="error")
        return simulate_bounded_h(spec.system, g.observer, spec.bounds, cfg,
                                  X0, XH0).e[-1]

    d = [np.linalg.norm(end("euler", h) - end("rk4", h))
         for h in (2e-3, 1e-3, 5e-4)]
    for a, b in zip(d, d[1:]):
        assert 1.8 < a / b < 2.2


def test_guided_correction_matches_exact_outside_ball(ex2, rng):
    spec, g, _ = ex2
    p = GuidedSignParams(0.5, 0.0, 1.0, 3.0)
    guided = SignMode("guided", guided=p)
    for _ in range(200):
        t = rng.uniform(0, 10)
        xh = rng.normal(scale=5, size=3)
        y = xh[:1] - rng.choice([-1, 1]) * (p.delta(t) + rng.exponential())
        a = observer_correction(spec.system, g.observer, guided, t, xh, y)
        b = observer_correction(spec.system, g.observer, SignMode(), t, xh, y)
        assert np.array_equal(a, b)


def test_guided_mode_is_continuous_and_calm(ex2):
    # delta(0) = 1 >= |e_y(0)| = 0.5; slow guide keeps h*beta/delta small
    spec, g, _ = ex2
    xh0 = X0 + np.array([0.5, 0.5, -0.5])
    runs = {}
    for mode in ("exact", "guided:0.05:0:1:3"):
        cfg = SimConfig(10.0, 1e-3, coordinates="error",
                        sign_mode=SignMode.parse(mode))
        runs[mode] = simulate_bounded_h(spec.system, g.observer, spec.bounds,
                                        cfg, X0, xh0)
    ex = chattering_index(runs["exact"], "correction_1", 0.5)
    gd = chattering_index(runs["guided:0.05:0:1:3"], "correction_1", 0.5)
    assert gd["switch_count_per_unit_time"] < ex["switch_count_per_unit_time"]
    assert gd["mean_amplitude"] < ex["mean_amplitude"]
    c = runs["guided:0.05:0:1:3"].extras["correction"][:, 0]
    assert np.max(np.abs(np.diff(c))) < np.max(np.abs(np.diff(
        runs["exact"].extras["correction"][:, 0])))


# ------------------------------------------------------------ reduced order

def _reduced_parts(reduced):
    spec, g, samples = reduced
    return decompose(spec.system, g.q), g.reduced, spec.bounds, samples


def test_reduced_envelope_and_monotone(reduced):
    dec, rg, b, samples = _reduced_parts(reduced)
    h = 1e-3
    tr = simulate_reduced(dec, rg, b, SimConfig(30.0, h), [1.0, -1.0], [2.0],
                          samples)
    ez = tr.extras["ez_norm"]
    q = np.linalg.eigvalsh(rg.Q)
    rate = rg.epsilon / (2 * q[-1])
    env = math.sqrt(q[-1] / q[0]) * ez[0] * np.exp(-rate * tr.times)
    assert np.all(ez <= env * (1 + 1e-6))
    # Q-norm non-increasing up to the one-step overshoot when the plant
    # slides on the relay surface: |B_r| * 2b * h
    floor = 2 * np.linalg.norm(dec.B2 + rg.K @ dec.B1) * 2 * 2.0 * h
    qn = np.sqrt(tr.V)
    assert np.all(qn[1:] <= qn[:-1] + floor)
    assert tr.e_norm[-1] <= 1e-3


def test_reduced_synchrony(reduced):
    dec, rg, b, samples = _reduced_parts(reduced)
    x0 = np.array([1.0, -1.0])
    z0 = x0[1:] + rg.K @ x0[:1]
    tr = simulate_reduced(dec, rg, b, SimConfig(5.0), x0, z0, samples)
    assert np.all(tr.extras["ez_norm"] == 0.0)


def test_reduced_refuses_violated_annihilation(reduced):
    dec, rg, b, _ = _reduced_parts(reduced)
    s = dec.system
    bad = LureSystem(s.A, s.B, s.C, s.F, s.f1,
                     lambda x, u: np.array([[0.0], [1.0]]), s.Fop, s.theta, s.u)
    with pytest.raises(PreconditionError, match="annihilation"):
        simulate_reduced(decompose(bad, 1), rg, b, SimConfig(1.0),
                         [1.0, -1.0], [2.0], box_samples(2, 1, n=20))
    eps4 = ReducedGains(rg.Q, rg.P21, rg.P22, 4.0)
    with pytest.raises(PreconditionError):
        simulate_reduced(dec, eps4, b, SimConfig(1.0), [1.0, -1.0], [2.0])


# ------------------------------------------------------------ metrics

def _traj(values, t=None):
    values = np.asarray(values, float)
    t = np.arange(values.size, dtype=float) if t is None else t
    return Trajectory(times=t, x=values.reshape(-1, 1))


def test_chattering_constant_signal():
    ci = chattering_index(_traj(np.ones(100)), "x_1", 0.5)
    assert ci["switch_count"] == 0 and ci["switch_count_per_unit_time"] == 0


def test_chattering_alternating_signal():
    v = np.tile([1.0, -1.0], 50)
    ci = chattering_index(_traj(v, np.linspace(0, 1, 100)), "x_1", 0.5)
    assert ci["switch_count"] == 49
    assert ci["mean_amplitude"] == 1.0


def test_chattering_rejects_empty_window():
    with pytest.raises(ValueError):
        chattering_index(_traj(np.ones(10)), "x_1", 0.0)
    with pytest.raises(KeyError):
        chattering_index(_traj(np.ones(10)), "nope", 0.5)


def test_convergence_time():
    assert convergence_time(_traj(np.zeros(10), np.arange(10) + 2.0), "x_1",
                            1e-4) == 2.0
    assert convergence_time(_traj(np.exp(np.arange(10))), "x_1", 1e-4) is None
    assert convergence_time(_traj([1, 0.5, 1e-5, 0.3, 1e-5, 1e-6]), "x_1",
                            1e-4) == 4.0
    with pytest.raises(ValueError):
        convergence_time(_traj([1.0]), "x_1", 0.0)


def test_example1_exact_chatters_guided_does_not():
    runs = {}
    for mode in ("exact", "guided:0.5:0:1:3"):
        cfg = SimConfig(5.0, 1e-3, sign_mode=SignMode.parse(mode))
        runs[mode] = simulate_scalar_sliding(lambda x: 3 * np.sin(x), 4.0, 0.1,
                                             cfg)
    ex = chattering_index(runs["exact"], "x_1", 0.5)
    assert ex["switch_count_per_unit_time"] > 100
    assert ex["max_amplitude"] <= 7e-3
    gd = chattering_index(runs["guided:0.5:0:1:3"], "x_1", 0.5)
    assert gd["switch_count"] <= 2
    assert convergence_time(runs["guided:0.5:0:1:3"], "x_1", 1e-4) < 5.0


# ------------------------------------------------------------ export

def test_csv_schema_and_precision(ex2, tmp_path):
    spec, g, _ = ex2
    tr = simulate_bounded_h(spec.system, g.observer, spec.bounds,
                            SimConfig(0.05, 1e-3, coordinates="error"), X0, XH0)
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:14] == ["t", "x_1", "x_2", "x_3", "xhat_1", "xhat_2",
                            "xhat_3", "e_norm", "ey_norm", "V", "W", "omega",
                            "omega_hat", "correction_1"]
    assert len(rows) == len(tr) + 1
    back = np.array(rows[1:], dtype=float)
    np.testing.assert_array_equal(back[:, 1:4], tr.x)
    np.testing.assert_array_equal(back[:, 9], tr.V)


def test_determinism(ex2):
    spec, g, _ = ex2
    cfg = SimConfig(2.0, 1e-3, coordinates="error")
    a = simulate_bounded_h(spec.system, g.observer, spec.bounds, cfg, X0, XH0)
    b = simulate_bounded_h(spec.system, g.observer, spec.bounds, cfg, X0, XH0)
    for (na, va), (nb, vb) in zip(a.columns(), b.columns()):
        assert na == nb and np.array_equal(va, vb)


def test_sigmoid_plateau_is_discrete_period_two_orbit():
    # Euler on x' = 3 sin x - 4 x/(|x|+eps) settles on x -> -x, which needs
    # 2x = h (4x/(x+eps) - 3 sin x); solved independently with brentq
    from scipy.optimize import brentq
    h, eps = 1e-3, 1e-3
    x_star = brentq(lambda x: 2 - h * (4 / (x + eps) - 3 * np.sin(x) / x),
                    1e-9, 1.0)
    cfg = SimConfig(5.0, h, sign_mode=SignMode.parse("sigmoid:1e-3:abs"))
    tr = simulate_scalar_sliding(lambda x: 3 * np.sin(x), 4.0, 0.1, cfg)
    tail = np.abs(tr.x[-100:, 0])
    np.testing.assert_allclose(tail, x_star, rtol=1e-9)
    assert np.all(np.sign(tr.x[-100:-1, 0]) != np.sign(tr.x[-99:, 0]))
