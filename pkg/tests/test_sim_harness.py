import numpy as np
import pytest

from otfs_aircomp.aircomp_naive import SystemParams
from otfs_aircomp.channel_model import ensemble_from_gains, sample_ensemble
from otfs_aircomp.sim_harness import (CSV_HEADER, ConfigError, ExperimentConfig, csv_text,
                                      load_config, oracle_theorem1, oracle_zeta, read_config_text,
                                      run_experiment, run_sweep, sweep_paths)
from otfs_aircomp.zp_sic import estimate_row_clean

SMALL = dict(M=16, N=8, U=4, R=3, l_max=5, k_max=2, trials=6, frames=4)


def small(**kw):
    return ExperimentConfig(**{**SMALL, **kw})


def test_defaults():
    c = ExperimentConfig()
    assert (c.M, c.N, c.U, c.R, c.l_max, c.k_max) == (32, 16, 20, 4, 10, 5)
    assert c.snr_db == (0, 5, 10, 15, 20, 25, 30)
    assert c.trials == 1000 and c.frames == 10
    assert c.schemes == ("naive-otfs", "zp-sic")


@pytest.mark.parametrize("field,value", [
    ("trials", 0), ("scheme", "ofdm"), ("policy", "random"), ("k_max", 4), ("l_max", 16),
    ("R", 7), ("snr_db", ()), ("frames", -1), ("sweep", "both"), ("M", 0),
])
def test_invalid_config_names_field(field, value):
    with pytest.raises(ConfigError) as err:
        small(**{field: value})
    assert err.value.field == field


def test_path_list_checked_for_path_sweeps():
    small(paths=(1, 9))
    with pytest.raises(ConfigError) as err:
        small(paths=(1, 9), sweep="paths")
    assert err.value.field == "paths"
    with pytest.raises(ConfigError):
        sweep_paths(small(paths=(1, 9)))


def test_zp_needs_shared_geometry():
    with pytest.raises(ConfigError) as err:
        small(shared_geometry=False)
    assert err.value.field == "shared_geometry"
    small(shared_geometry=False, scheme="naive-otfs")


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("# comment\nscheme = zp-sic\nM=16\nN=8\nU=3\nl_max=5\nk_max=2\n"
                    "snr_db = 0, 10,20\npaths=1 2 3\nshared_geometry=yes\n")
    c = load_config(path, {"trials": "7", "seed": "9"})
    assert c.scheme == "zp-sic" and c.snr_db == (0.0, 10.0, 20.0) and c.paths == (1, 2, 3)
    assert c.trials == 7 and c.master_seed == 9 and c.shared_geometry
    with pytest.raises(ConfigError) as err:
        read_config_text("colour=blue\n")
    assert err.value.field == "colour"
    with pytest.raises(ConfigError) as err:
        read_config_text("M=sixteen\n")
    assert err.value.field == "M"
    with pytest.raises(ConfigError) as err:
        load_config(tmp_path / "missing.cfg")
    assert err.value.field == "config"


def test_sweep_shape_and_csv():
    reports = run_sweep(small(snr_db=(0.0, 20.0)))
    assert [(r.scheme, r.snr_db) for r in reports] == [
        ("naive-otfs", 0.0), ("zp-sic", 0.0), ("naive-otfs", 20.0), ("zp-sic", 20.0)]
    text = csv_text(reports)
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 5
    fields = lines[1].split(",")
    assert float(fields[4]) == reports[0].analytic_mse
    assert fields[4] == format(reports[0].analytic_mse, ".17g")
    for r in reports:
        assert r.std_error >= 0 and r.empirical_mse >= 0 and r.trials == 6


def test_determinism_byte_identical(tmp_path):
    cfg = small(trials=1, snr_db=(10.0,))
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    run_sweep(cfg.replace(out=str(a)))
    run_sweep(cfg.replace(out=str(b)))
    assert a.read_bytes() == b.read_bytes()
    assert a.with_suffix(".png").exists() and a.with_suffix(".json").exists()


def test_parallel_equals_serial():
    cfg = small(trials=8, snr_db=(0.0, 10.0))
    serial = csv_text(run_sweep(cfg))
    assert csv_text(run_sweep(cfg, workers=3)) == serial


def test_chunking_does_not_change_results():
    from otfs_aircomp.sim_harness import _sweep
    cfg = small(trials=5, snr_db=(10.0,))
    assert csv_text(_sweep(cfg, "snr", chunk=1)) == csv_text(_sweep(cfg, "snr", chunk=5))


def test_seed_changes_results():
    a = csv_text(run_sweep(small(snr_db=(10.0,))))
    b = csv_text(run_sweep(small(snr_db=(10.0,), master_seed=1)))
    assert a != b


def test_single_path_schemes_agree():
    reports = run_sweep(small(R=1, snr_db=(0.0, 10.0, 20.0), trials=10))
    for naive, zp in zip(reports[::2], reports[1::2]):
        assert abs(naive.analytic_mse - zp.analytic_mse) <= 1e-9


def test_sweep_paths_points():
    reports = sweep_paths(small(paths=(1, 2, 3), scheme="naive-otfs"))
    assert [r.R for r in reports] == [1, 2, 3]
    assert all(r.snr_db == 10.0 for r in reports)
    assert run_experiment(small(paths=(1, 2), sweep="paths", scheme="naive-otfs"))[1].R == 2


def test_common_channels_share_draws():
    cfg = small(snr_db=(0.0, 30.0), common_channels=True, scheme="naive-otfs", frames=0)
    lo, hi = run_sweep(cfg)
    # the same ensembles at higher SNR can only do better
    assert np.all(hi.analytic_samples <= lo.analytic_samples)
    assert np.isnan(lo.empirical_mse)


def test_gate_passes_on_consistent_model():
    for r in run_sweep(small(trials=10, frames=20, snr_db=(5.0, 25.0))):
        assert r.gate()


def test_oracle_theorem1_worked_and_degenerate():
    res = oracle_theorem1(ensemble_from_gains([[1.0]]), SystemParams(4, 4, 1, 1.0, 1.0))
    assert abs(res.grid_value - 0.5) <= max(res.resolution, 1e-9)
    assert abs(res.closed_form - 0.5) < 1e-12 and res.agrees()
    res = oracle_theorem1(ensemble_from_gains([[1.0]]), SystemParams(4, 4, 1, 1.0, 0.0))
    assert res.grid_value == 0.0 and res.closed_form == 0.0


def test_oracle_theorem1_random(rng):
    for _ in range(10):
        U = int(rng.integers(1, 6))
        ens = sample_ensemble(rng, U, int(rng.integers(1, 4)), 3, 0, shared_geometry=False)
        assert oracle_theorem1(ens, SystemParams.from_snr_db(8, 8, U, 10.0)).agrees()


def test_oracle_zeta():
    params = SystemParams(4, 4, 1, 1.0, 1.0)
    prev = estimate_row_clean(None, ensemble_from_gains([[1.0]]), params)
    assert oracle_zeta(prev, [0.0], params) == (0.0, 0.0)
    prev.eta = 1.0
    z_grid, z_star = oracle_zeta(prev, [0.5], params)
    assert abs(z_star - 0.25) < 1e-15 and abs(z_grid - 0.25) <= 1e-4
