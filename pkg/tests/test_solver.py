import numpy as np
import pytest

from mvreg.datagen import sample_field_on_lattice
from mvreg.lattice import build_uniform_lattice, dirichlet_energy
from mvreg.solver import (
    DIVERGENCE_WINDOW,
    ETA_MAX,
    AdamState,
    FieldPair,
    SolverConfig,
    adam_step,
    clip_gradient,
    cyclic_lr,
    field_gradient,
    field_objective,
    load_fields_csv,
    save_fields_csv,
    save_trajectory_csv,
    solve_fields,
    stationarity_residual,
)


def _lattice(size=16):
    return build_uniform_lattice(0.0, 1.0, size)


def test_field_pair_basics():
    fp = FieldPair([0.0, 1.0], [0.0, np.log(2.0)])
    assert np.allclose(fp.lam, [1.0, 2.0])
    cp = fp.copy()
    cp.mu[0] = 9.0
    assert fp.mu[0] == 0.0
    with pytest.raises(ValueError):
        FieldPair(np.zeros(3), np.zeros(4))


def test_config_validation_and_presets():
    with pytest.raises(ValueError):
        SolverConfig(rho=-0.1, gamma=0.5)
    with pytest.raises(ValueError):
        SolverConfig(rho=0.5, gamma=1.5)
    with pytest.raises(ValueError):
        SolverConfig(rho=0.5, gamma=0.5, min_lr=0.0)
    assert SolverConfig.paper_preset(0.5, 0.5).epochs == 100_000
    desk = SolverConfig.desk_preset(0.5, 0.5)
    assert desk.epochs == 20_000
    assert desk.with_seed(7).seed == 7
    # endpoints are legal inputs
    SolverConfig(rho=0.0, gamma=1.0)
    SolverConfig(rho=1.0, gamma=0.0)


def test_objective_hand_values():
    # constant fields switch the smoothness penalty off entirely
    lat = _lattice(16)
    y = np.full(16, -0.75)
    for rho, gamma in [(1.0, 0.3), (0.4, 0.0), (0.7, 1.0), (1e-9, 0.5)]:
        # perfect fit, unit precision: only the -eta/2 term survives
        s = field_objective(FieldPair(y, np.ones(16)), y, lat, rho, gamma)
        assert s == pytest.approx(-rho / 2.0, rel=1e-13, abs=1e-16)
        # perfect fit, precision C: value is -(rho/2) log C
        for C in (4.0, 0.25):
            s = field_objective(FieldPair(y, np.full(16, np.log(C))), y, lat, rho, gamma)
            assert s == pytest.approx(-0.5 * rho * np.log(C), rel=1e-13)
        # constant residual r0 at unit precision: value is rho r0^2 / 2
        s = field_objective(FieldPair(y + 0.3, np.zeros(16)), y, lat, rho, gamma)
        assert s == pytest.approx(0.5 * rho * 0.09, rel=1e-13)


def test_objective_matches_lattice_operator_composition():
    # independent recomposition from the lattice layer's own operators
    lat = build_uniform_lattice(0.0, 2.0, 33)
    rng = np.random.default_rng(4)
    for _ in range(5):
        mu = rng.normal(size=33)
        eta = rng.normal(scale=0.7, size=33)
        y = rng.normal(size=33)
        rho, gamma = rng.uniform(0.0, 1.0, 2)
        lam = np.exp(eta)
        expect = rho * 0.5 * float(lat.weights @ (lam * (mu - y) ** 2 - eta))
        expect += (1.0 - rho) * (
            gamma * dirichlet_energy(mu, lat)
            + (1.0 - gamma) * dirichlet_energy(lam, lat)
        )
        got = field_objective(FieldPair(mu, eta), y, lat, rho, gamma)
        assert got == pytest.approx(expect, rel=1e-13)


def test_objective_rejects_nan_with_site_index():
    lat = _lattice(8)
    mu = np.zeros(8)
    mu[3] = np.nan
    with pytest.raises(ValueError, match="NaN in mu at site 3"):
        field_objective(FieldPair(mu, np.zeros(8)), np.zeros(8), lat, 0.5, 0.5)


def _fd_gradient(fun, z, eps=1e-6):
    g = np.empty_like(z)
    for k in range(z.size):
        zp, zm = z.copy(), z.copy()
        step = eps * max(1.0, abs(z[k]))
        zp[k] += step
        zm[k] -= step
        g[k] = (fun(zp) - fun(zm)) / (2.0 * step)
    return g


def test_gradient_matches_finite_differences():
    # 20 random instances on 16 sites, full-vector relative error < 1e-6
    lat = _lattice(16)
    rng = np.random.default_rng(2)
    for _ in range(20):
        mu = rng.normal(size=16)
        eta = rng.normal(scale=0.8, size=16)
        y = rng.normal(scale=1.5, size=16)
        rho, gamma = rng.uniform(0.0, 1.0, 2)

        def fun(z):
            return field_objective(FieldPair(z[:16], z[16:]), y, lat, rho, gamma)

        gmu, geta = field_gradient(FieldPair(mu, eta), y, lat, rho, gamma)
        g = np.concatenate([gmu, geta])
        g_fd = _fd_gradient(fun, np.concatenate([mu, eta]))
        rel = np.linalg.norm(g - g_fd) / max(1.0, np.linalg.norm(g_fd))
        assert rel < 1e-6


def test_gradient_translation_invariance():
    # shifting data and mean together changes nothing
    lat = _lattice(24)
    rng = np.random.default_rng(8)
    mu = rng.normal(size=24)
    eta = rng.normal(scale=0.5, size=24)
    y = rng.normal(size=24)
    g0 = field_gradient(FieldPair(mu, eta), y, lat, 0.6, 0.4)
    g1 = field_gradient(FieldPair(mu + 5.0, eta), y + 5.0, lat, 0.6, 0.4)
    np.testing.assert_allclose(g1[0], g0[0], atol=1e-12)
    np.testing.assert_allclose(g1[1], g0[1], atol=1e-12)


def test_gradient_closed_form_when_penalty_inactive():
    # gamma=1 removes the precision penalty; for any eta the eta-gradient is
    # then exactly rho p (lam r^2 - 1) / 2
    lat = _lattice(12)
    rng = np.random.default_rng(3)
    mu = rng.normal(size=12)
    eta = rng.normal(size=12)
    y = rng.normal(size=12)
    _, geta = field_gradient(FieldPair(mu, eta), y, lat, 0.7, 1.0)
    lam = np.exp(eta)
    expect = 0.7 * lat.weights * 0.5 * (lam * (mu - y) ** 2 - 1.0)
    np.testing.assert_allclose(geta, expect, rtol=1e-13)


def test_cyclic_lr_schedule():
    lo, hi, cyc = 5e-4, 1e-2, 5000
    assert cyclic_lr(0, lo, hi, cyc) == lo
    assert cyclic_lr(2500, lo, hi, cyc) == hi
    assert cyclic_lr(5000, lo, hi, cyc) == lo
    # amplitude halves every cycle
    assert cyclic_lr(7500, lo, hi, cyc) == pytest.approx(lo + 0.5 * (hi - lo))
    assert cyclic_lr(12500, lo, hi, cyc) == pytest.approx(lo + 0.25 * (hi - lo))
    # triangular symmetry within a cycle
    for t in (100, 1200, 2499):
        assert cyclic_lr(t, lo, hi, cyc) == pytest.approx(cyclic_lr(5000 - t, lo, hi, cyc))
    ramp = [cyclic_lr(t, lo, hi, cyc) for t in range(0, 2501, 250)]
    assert all(a < b for a, b in zip(ramp, ramp[1:]))


def test_clip_gradient_single_and_joint():
    g = np.array([3.0, 4.0])
    out, flag = clip_gradient(g, 10.0)
    assert not flag and np.array_equal(out, g)
    out, flag = clip_gradient(g, 1.0)
    assert flag
    assert np.linalg.norm(out) == pytest.approx(1.0, rel=1e-12)
    assert np.allclose(out, g / 5.0)
    # joint clipping over a pair of arrays uses the global norm
    pair, flag = clip_gradient([np.array([3.0]), np.array([4.0])], 1.0)
    assert flag
    total = np.sqrt(sum(float(a @ a) for a in pair))
    assert total == pytest.approx(1.0, rel=1e-12)


def test_adam_step_hand_values():
    st = AdamState.zeros(3)
    g = np.array([1.0, -2.0, 0.5])
    st1, d1 = adam_step(st, g, lr=0.01)
    # first bias-corrected step moves by -lr * sign(g) up to eps
    np.testing.assert_allclose(d1, -0.01 * np.sign(g), rtol=1e-7)
    assert st1.t == 1
    np.testing.assert_allclose(st1.m, 0.1 * g, rtol=1e-15)
    np.testing.assert_allclose(st1.v, 0.001 * g * g, rtol=1e-15)
    # second step against the recurrence written out longhand
    g2 = np.array([0.5, 0.5, -1.0])
    st2, d2 = adam_step(st1, g2, lr=0.01)
    m2 = 0.9 * st1.m + 0.1 * g2
    v2 = 0.999 * st1.v + 0.001 * g2 * g2
    expect = -0.01 * (m2 / (1 - 0.9**2)) / (np.sqrt(v2 / (1 - 0.999**2)) + 1e-8)
    np.testing.assert_allclose(d2, expect, rtol=1e-14)


def _sine_problem(size=512, seed=1):
    lat = build_uniform_lattice(0.0, 1.0, size)
    ds = sample_field_on_lattice("sine", lat, seed=seed)
    return lat, ds.y


def test_solve_interior_runs_clean():
    lat, y = _sine_problem(size=128)
    cfg = SolverConfig.desk_preset(0.5, 0.5, epochs=3000, seed=0)
    res = solve_fields(cfg, y, lat)
    assert res.converged and res.flag is None
    assert res.epochs_run == 3000
    assert res.clamp_events == 0
    assert res.objective.shape == res.lr.shape == res.clip_events.shape == (3000,)
    assert res.objective[-1] < res.objective[0]
    expect_lr = [cyclic_lr(t, cfg.min_lr, cfg.max_lr, cfg.cycle_len) for t in range(3000)]
    np.testing.assert_array_equal(res.lr, expect_lr)
    # reported final objective is the objective of the returned fields
    direct = field_objective(res.fields, y, lat, 0.5, 0.5)
    assert res.final_objective == pytest.approx(direct, rel=1e-13)


def test_solve_is_deterministic():
    lat, y = _sine_problem(size=96)
    cfg = SolverConfig.desk_preset(0.3, 0.7, epochs=800, seed=5)
    a = solve_fields(cfg, y, lat)
    b = solve_fields(cfg, y, lat)
    assert np.array_equal(a.fields.mu, b.fields.mu)
    assert np.array_equal(a.fields.eta, b.fields.eta)
    assert np.array_equal(a.objective, b.objective)
    c = solve_fields(cfg.with_seed(6), y, lat)
    assert not np.array_equal(a.fields.mu, c.fields.mu)


def test_solve_accepts_explicit_init():
    lat, y = _sine_problem(size=64)
    cfg = SolverConfig.desk_preset(0.5, 0.5, epochs=50, seed=0)
    init = FieldPair(np.zeros(64), np.zeros(64))
    a = solve_fields(cfg, y, lat, init=init)
    b = solve_fields(cfg, y, lat)
    assert not np.array_equal(a.fields.mu, b.fields.mu)
    assert np.array_equal(init.mu, np.zeros(64))  # caller's arrays untouched
    with pytest.raises(ValueError):
        solve_fields(cfg, y, lat, init=FieldPair(np.zeros(63), np.zeros(63)))


def _assert_strictly_falling_tail(res):
    tail = res.objective[-(DIVERGENCE_WINDOW + 1):]
    assert np.all(np.diff(tail) < 0)


def test_mean_only_smoothing_is_flagged_unbounded():
    # gamma=0 leaves the precision unpenalized: the objective runs away
    lat, y = _sine_problem()
    res = solve_fields(SolverConfig.desk_preset(0.5, 0.0, epochs=8000, seed=0), y, lat)
    assert res.flag == "unbounded" and not res.converged
    assert res.epochs_run < 8000
    _assert_strictly_falling_tail(res)


def test_precision_only_smoothing_is_flagged_unbounded():
    # gamma=1 leaves the mean free to interpolate: same runaway, other route
    lat, y = _sine_problem()
    res = solve_fields(SolverConfig.desk_preset(0.5, 1.0, epochs=8000, seed=0), y, lat)
    assert res.flag == "unbounded" and not res.converged
    _assert_strictly_falling_tail(res)


def test_pure_likelihood_saturates_the_clamp():
    # rho=1 with the detector off: the best fit rams eta into the bound
    lat, y = _sine_problem()
    cfg = SolverConfig.desk_preset(1.0, 0.5, epochs=10_000, seed=0, flag_divergence=False)
    res = solve_fields(cfg, y, lat)
    assert res.clamp_events > 0
    assert res.fields.eta.max() == ETA_MAX


def test_near_zero_rho_smooths_both_fields():
    # rho ~ 0 is pure smoothing: both fields flatten, energies go to zero
    lat, y = _sine_problem(size=256)
    res = solve_fields(SolverConfig.desk_preset(1e-9, 0.5, seed=0), y, lat)
    assert res.converged
    assert dirichlet_energy(res.fields.mu, lat) < 1e-6
    assert dirichlet_energy(np.exp(res.fields.eta), lat) < 1e-6


def test_stationarity_residual_hand_case():
    lat = _lattice(10)
    y = np.full(10, 1.3)
    C = 2.5
    fields = FieldPair(y.copy(), np.full(10, np.log(C)))
    res_mu, res_lam = stationarity_residual(fields, y, lat, 0.6, 0.3)
    np.testing.assert_array_equal(res_mu, np.zeros(10))
    np.testing.assert_allclose(res_lam, -0.5 * 0.6 * lat.weights / C, rtol=1e-13)


def test_fields_csv_roundtrip(tmp_path):
    lat, y = _sine_problem(size=64)
    res = solve_fields(SolverConfig.desk_preset(0.5, 0.5, epochs=200, seed=0), y, lat)
    path = tmp_path / "fields.csv"
    save_fields_csv(path, lat, res.fields)
    lat2, fields2 = load_fields_csv(path)
    assert (lat2.lo, lat2.hi, lat2.size) == (lat.lo, lat.hi, lat.size)
    assert np.array_equal(fields2.mu, res.fields.mu)
    assert np.array_equal(fields2.eta, res.fields.eta)


def test_trajectory_csv(tmp_path):
    lat, y = _sine_problem(size=64)
    res = solve_fields(SolverConfig.desk_preset(0.5, 0.5, epochs=100, seed=0), y, lat)
    path = tmp_path / "traj.csv"
    save_trajectory_csv(path, res)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,objective,lr,clip_events"
    assert len(lines) == 101
    first = lines[1].split(",")
    assert int(first[0]) == 0
    assert float(first[1]) == res.objective[0]
