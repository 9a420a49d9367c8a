import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from otfs_aircomp.aircomp_naive import (POLICIES, PowerPolicy, SystemParams, analytic_mse,
                                        arrange_frame, device_ratios, draw_symbols,
                                        estimate_and_measure, full_power_policy,
                                        optimal_power_given_eta, precode, precoding_coefficients,
                                        single_device_policy, sort_devices, interval_candidates,
                                        theorem1_solve)
from otfs_aircomp.channel_model import MultipathChannel, PathTap, ensemble_from_gains, sample_ensemble
from otfs_aircomp.grid_transforms import dd_io_relation

from conftest import crandn


def random_instance(rng, U_max=5, R_max=3):
    U, R = int(rng.integers(1, U_max + 1)), int(rng.integers(1, R_max + 1))
    ens = sample_ensemble(rng, U, R, 4, 1, 8, shared_geometry=False)
    params = SystemParams.from_snr_db(8, 8, U, float(rng.choice([0, 10, 20])))
    return ens, params


def test_arrange_identity_and_shift():
    data = np.arange(16.0).reshape(4, 4)
    np.testing.assert_array_equal(arrange_frame(data, PathTap(1, 0, 0)), data)
    imp = np.zeros((4, 4))
    imp[1, 0] = 1
    x = arrange_frame(imp, PathTap(1, 1, 0))
    assert x[0, 0] == 1 and np.count_nonzero(x) == 1
    y = dd_io_relation(x[None], [MultipathChannel((PathTap(1, 1, 0),))])
    assert abs(y[1, 0]) == 1 and np.count_nonzero(y) == 1


def test_arrange_composition_up_to_phase(rng):
    M, N = 6, 8
    data = crandn(rng, M, N)
    tap = PathTap(1.0, 2, -3)
    y = dd_io_relation(arrange_frame(data, tap)[None], [MultipathChannel((tap,))])
    np.testing.assert_allclose(np.abs(y), np.abs(data), atol=1e-12)


def test_precode_scaling():
    frame = np.ones((4, 4))
    ch = MultipathChannel.from_arrays([0.8], [0], [0])
    np.testing.assert_allclose(precode(frame, ch, 4.0), 2 * frame)
    np.testing.assert_array_equal(precode(frame, ch, 0.0), np.zeros((4, 4)))
    with pytest.raises(ZeroDivisionError):
        precode(frame, MultipathChannel.from_arrays([0], [0], [0]), 1.0)
    with pytest.raises(ValueError):
        precoding_coefficients(ch, -1.0, 4, 4)


def test_precoding_magnitude(rng):
    ch = MultipathChannel.from_arrays(crandn(rng, 3), [1, 2, 4], [2, -1, 0])
    np.testing.assert_allclose(np.abs(precoding_coefficients(ch, 2.5, 8, 8)), np.sqrt(2.5), atol=1e-14)


def test_principal_term_real_positive(rng):
    # impulse at every logical position: the principal path returns sqrt(p)|h1| there
    M, N, p = 6, 4, 1.7
    for tap in [PathTap(0.3 - 0.9j, 2, 1), PathTap(-1.1j, 0, -1), PathTap(0.5, 5, 3)]:
        ch = MultipathChannel((tap,))
        for l in range(M):
            for k in range(N):
                d = np.zeros((M, N))
                d[l, k] = 1
                y = dd_io_relation(precode(arrange_frame(d, tap), ch, p)[None], [ch])
                np.testing.assert_allclose(y[l, k], np.sqrt(p) * abs(tap.gain), atol=1e-12)
                y[l, k] = 0
                np.testing.assert_allclose(y, 0, atol=1e-12)


def test_analytic_mse_worked_example():
    ens = ensemble_from_gains([[1.0], [1.0, 0.5]])
    params = SystemParams(4, 4, 2, 1.0, 0.1)
    b = analytic_mse(PowerPolicy([1, 1], 1.0), ens, params)
    assert b.signal_misalignment == 0
    np.testing.assert_allclose([b.interference, b.noise, b.total], [0.25, 0.1, 0.35], atol=1e-15)


def test_analytic_mse_perfect_alignment():
    ens = ensemble_from_gains([[2.0], [0.5]])
    eta = 3.0
    p = eta / np.array([4.0, 0.25])
    assert analytic_mse(PowerPolicy(p, eta), ens, SystemParams(4, 4, 2, 100.0, 0.0)).total == 0
    with pytest.raises(ValueError):
        analytic_mse(PowerPolicy([1, 1], 0.0), ens, SystemParams(4, 4, 2, 1.0, 0.0))


def test_optimal_power_given_eta():
    ens = ensemble_from_gains([[1.0]])
    np.testing.assert_allclose(optimal_power_given_eta(4.0, ens, SystemParams(4, 4, 1, 10.0, 1.0)), [4.0])
    ens = ensemble_from_gains([[1.0, 0.3], [0.2j]])
    params = SystemParams(4, 4, 2, 2.0, 0.1)
    np.testing.assert_array_equal(optimal_power_given_eta(0.0, ens, params), [0, 0])
    np.testing.assert_array_equal(optimal_power_given_eta(1e12, ens, params), [2, 2])


def test_optimal_power_matches_1d_grid(rng):
    for _ in range(20):
        ens, params = random_instance(rng)
        eta = float(rng.uniform(0.1, 5))
        p_star = optimal_power_given_eta(eta, ens, params)
        grid = np.linspace(0, params.P, 20001)
        for u, ch in enumerate(ens):
            h1, S = abs(ch.principal.gain), np.sum(np.abs(ch.gains) ** 2)
            f = (np.sqrt(grid) * h1 / np.sqrt(eta) - 1) ** 2 + grid * (S - h1 ** 2) / eta
            f_star = (np.sqrt(p_star[u]) * h1 / np.sqrt(eta) - 1) ** 2 + p_star[u] * (S - h1 ** 2) / eta
            assert f_star <= f.min() + 1e-12


def test_sort_devices():
    ens = ensemble_from_gains([[1.0], [1.0], [1.0]])
    np.testing.assert_array_equal(sort_devices(ens), [0, 1, 2])
    # ratios q = S/|h1| of 3, 1, 2
    ens = ensemble_from_gains([[1.0, np.sqrt(2)], [1.0], [1.0, 1.0]])
    np.testing.assert_allclose(device_ratios(ens), [3, 1, 2])
    np.testing.assert_array_equal(sort_devices(ens), [1, 2, 0])
    with pytest.raises(ZeroDivisionError):
        device_ratios(ensemble_from_gains([[0.0, 1.0]]))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sorted_ratios_nondecreasing(seed):
    ens, _ = random_instance(np.random.default_rng(seed))
    assert np.all(np.diff(device_ratios(ens)[sort_devices(ens)]) >= 0)


def test_theorem1_trivial_cases():
    pol = theorem1_solve(ensemble_from_gains([[1.0]]), SystemParams(4, 4, 1, 4.0, 0.0))
    assert pol.eta == 4.0 and pol.powers.tolist() == [4.0]
    assert analytic_mse(pol, ensemble_from_gains([[1.0]]), SystemParams(4, 4, 1, 4.0, 0.0)).total == 0


def test_theorem1_worked_instance():
    ens = ensemble_from_gains([[1.0]])
    params = SystemParams(4, 4, 1, 1.0, 1.0)
    pol = theorem1_solve(ens, params)
    assert abs(pol.eta - 4) < 1e-12
    assert abs(pol.powers[0] - 1) < 1e-12
    assert abs(analytic_mse(pol, ens, params).total - 0.5) < 1e-12


def test_theorem1_interval_structure(rng):
    for _ in range(200):
        ens, params = random_instance(rng)
        pol = theorem1_solve(ens, params)
        c = interval_candidates(ens, params)
        u = pol.info["u_star"]
        lo, hi = pol.info["interval"]
        assert lo - 1e-12 * lo <= pol.eta <= hi
        ranked = np.argsort(c.order)
        assert np.all(pol.powers[ranked < u] == params.P)
        near_boundary = np.isclose(pol.eta, hi)
        if not near_boundary:
            assert np.all(pol.powers[ranked >= u] < params.P)
        assert np.all((pol.powers >= 0) & (pol.powers <= params.P))


def test_theorem1_coordinate_optimality(rng):
    for _ in range(100):
        ens, params = random_instance(rng)
        pol = theorem1_solve(ens, params)
        base = analytic_mse(pol, ens, params).total
        for u in range(ens.U):
            for f in (0.9, 1.1):
                p = pol.powers.copy()
                p[u] = np.clip(p[u] * f, 0, params.P)
                assert analytic_mse(PowerPolicy(p, pol.eta), ens, params).total >= base - 1e-12


def test_theorem1_beats_eta_scan(rng):
    for _ in range(50):
        ens, params = random_instance(rng)
        best = analytic_mse(theorem1_solve(ens, params), ens, params).total
        for eta in np.logspace(-3, 3, 2000):
            p = optimal_power_given_eta(eta, ens, params)
            assert analytic_mse(PowerPolicy(p, eta), ens, params).total >= best - 1e-12


def test_interference_floor_limit():
    rng = np.random.default_rng(4)
    multi = sample_ensemble(rng, 4, 3, 5, 1, 8)
    single = sample_ensemble(rng, 4, 1, 5, 1, 8)
    params = SystemParams(8, 8, 4, 1.0, 1e-12)
    assert analytic_mse(theorem1_solve(multi, params), multi, params).total > 1e-3
    assert analytic_mse(theorem1_solve(single, params), single, params).total < 1e-9


def test_scale_covariance(rng):
    for _ in range(20):
        ens, params = random_instance(rng)
        c = float(rng.uniform(0.3, 3.0))
        scaled = SystemParams(params.M, params.N, params.U, params.P, params.sigma2 * c ** 2)
        a = theorem1_solve(ens, params)
        b = theorem1_solve(ens.scaled(c), scaled)
        np.testing.assert_allclose(b.eta, c ** 2 * a.eta, rtol=1e-10)
        np.testing.assert_allclose(b.powers, a.powers, rtol=1e-10, atol=1e-14)


def test_policy_ordering(rng):
    for _ in range(200):
        ens, params = random_instance(rng)
        best = analytic_mse(theorem1_solve(ens, params), ens, params).total
        for name in ("full-power", "single-device"):
            assert best <= analytic_mse(POLICIES[name](ens, params), ens, params).total


def test_baseline_policies():
    ens = ensemble_from_gains([[1.0, 1.5], [2.0]])
    params = SystemParams(4, 4, 2, 1.0, 0.5)
    full = full_power_policy(ens, params)
    np.testing.assert_array_equal(full.powers, [1, 1])
    np.testing.assert_allclose(full.eta, ((3.25 + 4 + 0.5) / 3) ** 2)
    single = single_device_policy(ens, params)
    np.testing.assert_array_equal(single.powers, [0, 1])
    np.testing.assert_allclose(single.eta, ((4 + 0.5) / 2) ** 2)


def test_symbols():
    rng = np.random.default_rng(0)
    q = draw_symbols(rng, (1000,), "qpsk")
    np.testing.assert_allclose(np.abs(q), 1.0)
    g = draw_symbols(rng, (200000,), "gaussian")
    np.testing.assert_allclose(np.mean(np.abs(g) ** 2), 1.0, rtol=0.01)
    with pytest.raises(ValueError):
        draw_symbols(rng, (3,), "bpsk")


def test_empirical_noiseless_zero():
    ens = ensemble_from_gains([[1.0], [1.0]], delays=[0], dopplers=[0])
    res = estimate_and_measure(ens, PowerPolicy([1, 1], 1.0), SystemParams(4, 4, 2, 1.0, 0.0),
                               np.random.default_rng(0), 50)
    assert res.mse < 1e-20
    assert res.normalized == res.mse / 4


def test_empirical_worked_example():
    ens = ensemble_from_gains([[1.0], [1.0, 0.5]], )
    params = SystemParams(8, 8, 2, 1.0, 0.1)
    res = estimate_and_measure(ens, PowerPolicy([1, 1], 1.0), params, np.random.default_rng(1), 10000)
    assert abs(res.mse - 0.35) <= 3 * res.std_error


def test_empirical_matches_analytic_random(rng):
    for _ in range(5):
        U = int(rng.integers(1, 5))
        ens = sample_ensemble(rng, U, 3, 5, 2, 8, shared_geometry=False)
        params = SystemParams.from_snr_db(8, 8, U, 10.0)
        pol = theorem1_solve(ens, params)
        res = estimate_and_measure(ens, pol, params, rng, 4000, "qpsk")
        assert abs(res.mse - analytic_mse(pol, ens, params).total) <= 3 * res.std_error


def test_empirical_determinism():
    ens = sample_ensemble(np.random.default_rng(2), 3, 2, 4, 1, 8)
    params = SystemParams.from_snr_db(8, 8, 3, 5.0)
    pol = theorem1_solve(ens, params)
    a = estimate_and_measure(ens, pol, params, np.random.default_rng(9), 300)
    b = estimate_and_measure(ens, pol, params, np.random.default_rng(9), 300)
    assert a == b


def test_system_params_validation():
    with pytest.raises(ValueError):
        SystemParams(0, 4, 1, 1.0, 1.0)
    with pytest.raises(ValueError):
        SystemParams(4, 4, 1, 0.0, 1.0)
    with pytest.raises(ValueError):
        PowerPolicy([-1.0], 1.0)
    np.testing.assert_allclose(SystemParams.from_snr_db(4, 4, 1, 10.0).sigma2, 0.1)
