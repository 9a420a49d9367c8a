"""Experiment driver: configuration, seeded Monte Carlo sweeps, brute-force oracles, CSV output.

Seeding: trial ``t`` of sweep point ``i`` uses ``SeedSequence([master_seed, i, t])``,
split into one stream for the channel draw and one per scheme for the simulated
frames.  Work may be chunked across processes; per-trial results are gathered
back in trial order before any averaging, so serial and parallel runs agree
bit for bit.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aircomp_naive import (POLICIES, SystemParams, analytic_mse, frame_errors,
                            optimal_power_given_eta, device_ratios)
from .channel_model import ChannelEnsemble, sample_ensemble
from .zp_sic import RowEstimate, ZpLayout, eg2, sic_design, sic_plan, zp_frame_errors

SCHEMES = ("naive-otfs", "zp-sic")
CSV_HEADER = ("scheme", "policy", "snr_db", "R", "analytic_mse", "empirical_mse",
              "std_error", "trials", "seed")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_list(text):
    if isinstance(text, str):
        return tuple(float(v) for v in text.replace(",", " ").split())
    return tuple(float(v) for v in np.atleast_1d(text))


def _int_list(text):
    if isinstance(text, str):
        return tuple(int(v) for v in text.replace(",", " ").split())
    return tuple(int(v) for v in np.atleast_1d(text))


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: str = "both"
    policy: str = "theorem1"
    M: int = 32
    N: int = 16
    U: int = 20
    R: int = 4
    l_max: int = 10
    k_max: int = 5
    snr_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    paths: tuple = (1, 2, 3, 4, 5, 6)
    path_snr_db: float = 10.0
    sweep: str = "snr"
    trials: int = 1000
    frames: int = 10
    master_seed: int = 0
    P: float = 1.0
    shared_geometry: bool = True
    common_channels: bool = False
    symbols: str = "gaussian"
    out: str | None = None

    def __post_init__(self):
        self.validate()

    @property
    def schemes(self) -> tuple:
        return SCHEMES if self.scheme == "both" else (self.scheme,)

    def validate(self):
        if self.scheme not in SCHEMES + ("both",):
            raise ConfigError("scheme", f"unknown scheme {self.scheme!r}")
        if self.policy not in POLICIES:
            raise ConfigError("policy", f"unknown policy {self.policy!r}")
        if self.sweep not in ("snr", "paths"):
            raise ConfigError("sweep", f"unknown sweep {self.sweep!r}")
        if self.symbols not in ("gaussian", "qpsk"):
            raise ConfigError("symbols", f"unknown symbol kind {self.symbols!r}")
        for name in ("M", "N", "U"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")
        if self.trials < 1:
            raise ConfigError("trials", "must be >= 1")
        if self.frames < 0:
            raise ConfigError("frames", "must be >= 0")
        if not self.snr_db:
            raise ConfigError("snr_db", "at least one SNR point is needed")
        if not self.paths:
            raise ConfigError("paths", "at least one path count is needed")
        if self.P <= 0:
            raise ConfigError("P", "must be positive")
        if self.k_max < 0 or 2 * self.k_max >= self.N:
            raise ConfigError("k_max", f"needs 0 <= k_max < N/2 = {self.N / 2}")
        if not 0 <= self.l_max < self.M:
            raise ConfigError("l_max", f"needs 0 <= l_max < M = {self.M}")
        checked = [("R", self.R)] + ([("paths", R) for R in self.paths] if self.sweep == "paths" else [])
        for name, R in checked:
            if not 1 <= R <= self.l_max + 1:
                raise ConfigError(name, f"path count {R} needs 1 <= R <= l_max + 1 = {self.l_max + 1}")
        if "zp-sic" in self.schemes and not self.shared_geometry:
            raise ConfigError("shared_geometry", "zp-sic requires shared geometry")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_PARSERS = {
    "scheme": str, "policy": str, "sweep": str, "symbols": str, "out": str,
    "M": int, "N": int, "U": int, "R": int, "l_max": int, "k_max": int,
    "trials": int, "frames": int, "master_seed": int,
    "P": float, "path_snr_db": float,
    "snr_db": _float_list, "paths": _int_list,
    "shared_geometry": _parse_bool, "common_channels": _parse_bool,
}
_ALIASES = {"seed": "master_seed", "output": "out", "snr": "snr_db"}


def parse_assignments(items) -> dict:
    """``key=value`` strings (or pairs) to typed config fields."""
    values = {}
    for item in items:
        if isinstance(item, str):
            if "=" not in item:
                raise ConfigError(item.strip() or "?", "expected key=value")
            key, raw = item.split("=", 1)
        else:
            key, raw = item
        key = _ALIASES.get(key.strip(), key.strip())
        if key not in _PARSERS:
            raise ConfigError(key, "unknown field")
        try:
            values[key] = _PARSERS[key](raw.strip() if isinstance(raw, str) else raw)
        except ValueError as exc:
            raise ConfigError(key, f"cannot parse {raw!r} ({exc})") from None
    return values


def read_config_text(text: str) -> dict:
    lines = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    return parse_assignments(lines)


def load_config(path=None, overrides: dict | None = None, **kw) -> ExperimentConfig:
    """Flat ``key=value`` file (``#`` comments) with overrides applied on top."""
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
        values.update(read_config_text(text))
    if overrides:
        values.update(parse_assignments(overrides.items()))
    values.update(kw)
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from None


@dataclass
class MseReport:
    scheme: str
    policy: str
    snr_db: float
    R: int
    analytic_mse: float
    empirical_mse: float
    std_error: float
    trials: int
    seed: int
    analytic_se: float = 0.0
    gate_se: float = 0.0
    frames: int = 0
    analytic_samples: np.ndarray = field(default=None, repr=False, compare=False)
    empirical_samples: np.ndarray = field(default=None, repr=False, compare=False)

    def row(self) -> list:
        return [self.scheme, self.policy, _fmt(self.snr_db), str(self.R), _fmt(self.analytic_mse),
                _fmt(self.empirical_mse), _fmt(self.std_error), str(self.trials), str(self.seed)]

    def gate(self, n_se: float = 4.0) -> bool:
        """Empirical MSE within ``n_se`` standard errors of the analytic value."""
        if self.frames == 0:
            return True
        return abs(self.empirical_mse - self.analytic_mse) <= n_se * self.gate_se


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# per-trial work

def _trial_streams(config: ExperimentConfig, point: int, t: int):
    ss = np.random.SeedSequence([config.master_seed, point, t])
    channel_ss, frames_ss = ss.spawn(2)
    if config.common_channels:
        channel_ss = np.random.SeedSequence([config.master_seed, 0, t]).spawn(2)[0]
    return np.random.default_rng(channel_ss), [np.random.default_rng(s) for s in frames_ss.spawn(2)]


def draw_trial_ensemble(config: ExperimentConfig, point: int, t: int, R: int | None = None):
    rng, _ = _trial_streams(config, point, t)
    return sample_ensemble(rng, config.U, config.R if R is None else R, config.l_max,
                           config.k_max, config.N, shared_geometry=config.shared_geometry)


def evaluate_trial(config: ExperimentConfig, point: int, t: int, R: int, snr_db: float) -> dict:
    """``scheme -> (analytic, empirical, frame_residual_sq_sum)`` for one channel draw."""
    rng, frame_rngs = _trial_streams(config, point, t)
    ensemble = sample_ensemble(rng, config.U, R, config.l_max, config.k_max, config.N,
                               shared_geometry=config.shared_geometry)
    params = SystemParams.from_snr_db(config.M, config.N, config.U, snr_db, config.P)
    out = {}
    for scheme in config.schemes:
        frng = frame_rngs[SCHEMES.index(scheme)]
        if scheme == "naive-otfs":
            policy = POLICIES[config.policy](ensemble, params)
            an = analytic_mse(policy, ensemble, params).total
            errs = (frame_errors(ensemble, policy, params, frng, config.frames, config.symbols)
                    if config.frames else np.empty(0))
        else:
            plan = sic_plan(ZpLayout.for_ensemble(ensemble, config.M, config.N), ensemble.delays)
            design = sic_design(plan, ensemble, params, policy=config.policy)
            an = design.analytic_mse
            errs = (zp_frame_errors(design, frng, config.frames, config.symbols).mean(axis=1)
                    if config.frames else np.empty(0))
        emp = float(errs.mean()) if errs.size else math.nan
        out[scheme] = (float(an), emp, float(np.sum((errs - an) ** 2)))
    return out


def _run_chunk(args):
    config, point, R, snr_db, trials = args
    return [evaluate_trial(config, point, t, R, snr_db) for t in trials]


def _points(config: ExperimentConfig, sweep: str):
    if sweep == "snr":
        return [(config.R, float(s)) for s in config.snr_db]
    return [(int(R), float(config.path_snr_db)) for R in config.paths]


def _aggregate(config, scheme, R, snr_db, results) -> MseReport:
    an = np.array([r[scheme][0] for r in results])
    emp = np.array([r[scheme][1] for r in results])
    ss = np.array([r[scheme][2] for r in results])
    T = len(results)
    frames = config.frames
    if frames:
        emp_mean = float(np.mean(emp))
        emp_se = float(np.std(emp, ddof=1) / np.sqrt(T)) if T > 1 else 0.0
        n = T * frames
        gate_se = float(np.sqrt(np.sum(ss) / max(n - 1, 1) / n))
    else:
        emp_mean, emp_se, gate_se = math.nan, math.nan, 0.0
    an_se = float(np.std(an, ddof=1) / np.sqrt(T)) if T > 1 else 0.0
    return MseReport(scheme, config.policy, snr_db, R, float(np.mean(an)), emp_mean, emp_se, T,
                     config.master_seed, an_se, gate_se, frames, an, emp)


def _sweep(config: ExperimentConfig, sweep: str, workers: int = 1, chunk: int | None = None):
    points = _points(config, sweep)
    n = config.trials
    if chunk is None:
        chunk = max(1, math.ceil(n / max(1, 4 * workers)))
    tasks = [(config, i, R, snr, range(s, min(s + chunk, n)))
             for i, (R, snr) in enumerate(points) for s in range(0, n, chunk)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_chunk, tasks))
    else:
        chunks = [_run_chunk(t) for t in tasks]
    per_point: dict = {i: [] for i in range(len(points))}
    for task, res in zip(tasks, chunks):
        per_point[task[1]].extend(res)
    reports = []
    for i, (R, snr) in enumerate(points):
        for scheme in config.schemes:
            reports.append(_aggregate(config, scheme, R, snr, per_point[i]))
    if config.out:
        write_outputs(reports, config, sweep)
    return reports


def run_sweep(config: ExperimentConfig, workers: int = 1) -> list:
    """SNR sweep at ``config.R``; writes the CSV (and companions) when ``config.out`` is set."""
    return _sweep(config.replace(sweep="snr"), "snr", workers)


def sweep_paths(config: ExperimentConfig, workers: int = 1) -> list:
    """Path-count sweep over ``config.paths`` at ``config.path_snr_db``."""
    return _sweep(config.replace(sweep="paths"), "paths", workers)


def run_experiment(config: ExperimentConfig, workers: int = 1) -> list:
    return _sweep(config, config.sweep, workers)


# ---------------------------------------------------------------------------
# output

def csv_text(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in reports:
        writer.writerow(r.row())
    return buf.getvalue()


def write_csv(reports, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(reports))
    return path


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_outputs(reports, config: ExperimentConfig, sweep: str, plot: bool = True) -> dict:
    """CSV plus a JSON metadata sidecar and a PNG figure next to it."""
    csv_path = write_csv(reports, config.out)
    meta_path = csv_path.with_suffix(".json")
    meta = {"sweep": sweep, "config": config.to_dict(), "csv_header": list(CSV_HEADER)}
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=list) + "\n")
    paths = {"csv": csv_path, "meta": meta_path}
    if plot:
        from .plotting import plot_reports
        paths["png"] = plot_reports(reports, csv_path.with_suffix(".png"),
                                    x="snr_db" if sweep == "snr" else "R")
    return paths


# ---------------------------------------------------------------------------
# brute-force oracles

@dataclass
class OracleResult:
    grid_value: float
    closed_form: float
    resolution: float
    grid_point: tuple = ()

    def agrees(self, rel: float = 1e-3) -> bool:
        """Closed form no worse than the grid, and not below it beyond resolution."""
        scale = max(abs(self.grid_value), 1e-300)
        return (self.closed_form <= self.grid_value + rel * scale
                and self.closed_form >= self.grid_value - self.resolution - 1e-12 * scale)


def _inner_power_search(eta, a, c, P, grid, refinements):
    """min over s = sqrt(p) in [0, sqrt(P)] of ``(s a / sqrt(eta) - 1)^2 + s^2 c / eta`` per (eta, device)."""
    eta = eta[:, None, None]
    a = a[None, :, None]
    c = c[None, :, None]
    lo = np.zeros(eta.shape[:1] + a.shape[1:2] + (1,))
    hi = np.full_like(lo, np.sqrt(P))
    t = np.linspace(0.0, 1.0, grid)[None, None, :]
    for _ in range(refinements + 1):
        s = lo + (hi - lo) * t
        f = (s * a / np.sqrt(eta) - 1.0) ** 2 + s ** 2 * c / eta
        i = np.argmin(f, axis=-1)[..., None]
        step = (hi - lo) / (grid - 1)
        best = np.take_along_axis(f, i, axis=-1)
        s_best = np.take_along_axis(s, i, axis=-1)
        lo = np.maximum(0.0, s_best - 2 * step)
        hi = np.minimum(np.sqrt(P), s_best + 2 * step)
    nb = np.take_along_axis(f, np.clip(np.concatenate([i - 1, i + 1], axis=-1), 0, grid - 1), axis=-1)
    res = np.max(nb, axis=-1) - best[..., 0]
    return best[..., 0], res


def oracle_theorem1(ensemble: ChannelEnsemble, params: SystemParams, grid: int = 400,
                    refinements: int = 3) -> OracleResult:
    """Grid search of the naive MSE over log-spaced ``eta`` and per-device ``sqrt(p)``.

    For a fixed ``eta`` the MSE separates over devices, so each device gets its
    own 1-D power grid.  The ``eta`` grid spans every interval boundary
    ``P q_u^2`` (which are included as grid points), grows until the minimum
    is interior and is then refined around the best point.
    """
    from .aircomp_naive import theorem1_solve
    h1 = np.array([abs(ch.principal.gain) for ch in ensemble])
    total = np.array([np.sum(np.abs(ch.gains) ** 2) for ch in ensemble])
    a, c = h1, total - h1 ** 2
    bounds = params.P * device_ratios(ensemble) ** 2

    def F(eta):
        inner, res = _inner_power_search(eta, a, c, params.P, grid, refinements)
        return inner.sum(axis=1) + params.sigma2 / eta, res.sum(axis=1)

    lo, hi = np.log10(bounds.min()) - 1, np.log10(bounds.max()) + 1
    while True:
        etas = np.unique(np.concatenate([np.logspace(lo, hi, grid), bounds]))
        f, _ = F(etas)
        i = int(np.argmin(f))
        if 0 < i < len(etas) - 1:
            break
        if i == 0:
            lo -= 2
        else:
            hi += 2
    best_eta, best = etas[i], f[i]
    for _ in range(refinements):
        l_lo, l_hi = np.log10(etas[max(i - 2, 0)]), np.log10(etas[min(i + 2, len(etas) - 1)])
        etas = np.unique(np.concatenate([np.logspace(l_lo, l_hi, grid), [best_eta]]))
        f, res_in = F(etas)
        i = int(np.argmin(f))
        best_eta, best = etas[i], f[i]
    f, res_in = F(etas)
    nb = max(f[max(i - 1, 0)], f[min(i + 1, len(etas) - 1)]) - f[i]
    resolution = float(nb + res_in[i])
    policy = theorem1_solve(ensemble, params)
    closed = analytic_mse(policy, ensemble, params).total
    p_best = optimal_power_given_eta(best_eta, ensemble, params)
    return OracleResult(float(best), float(closed), resolution, (float(best_eta), p_best))


def oracle_zeta(prev: RowEstimate, cross_gains, params: SystemParams, step: float = 1e-4,
                noise_var: float | None = None):
    """1-D grid argmin of ``E|G(zeta)|^2`` over real ``zeta >= 0``; returns ``(argmin, zeta_star)``.

    The grid starts at ``[0, 1]`` and doubles until the minimum is interior.
    """
    from .zp_sic import zeta_star
    g = np.asarray(cross_gains, dtype=float)
    c = prev.gains * np.sqrt(prev.powers) / np.sqrt(prev.eta)
    nv = prev.residual if noise_var is None else noise_var
    zmax = 1.0
    while True:
        z = np.arange(0.0, zmax + step / 2, step)
        vals = (np.sum((np.sqrt(prev.powers)[None] * g[None] - z[:, None] * c[None]) ** 2, axis=1)
                + params.sigma2 + z ** 2 * nv / prev.eta)
        i = int(np.argmin(vals))
        if i < len(z) - 1:
            break
        zmax *= 2
    zs, _ = zeta_star(prev, g, params, noise_var)
    return float(z[i]), float(zs)


def oracle_sic_row(prev: RowEstimate, cross_gain: float, gain: float, params: SystemParams,
                    grid: int = 81, refinements: int = 12):
    """3-D grid search over ``(sqrt(p), eta, zeta)`` of a one-device, one-interferer row.

    Minimizes ``(sqrt(p) g / sqrt(eta) - 1)^2 + E|G(zeta)|^2 / eta``; returns
    ``(grid_min, (p, eta, zeta))`` after zooming ``refinements`` times.
    """
    prev_c = float(prev.gains[0] * np.sqrt(prev.powers[0]) / np.sqrt(prev.eta))

    def eval_grid(s, le, z):
        S, E, Z = np.meshgrid(s, 10.0 ** le, z, indexing="ij")
        G = (np.sqrt(prev.powers[0]) * cross_gain - Z * prev_c) ** 2 + params.sigma2 \
            + Z ** 2 * prev.residual / prev.eta
        return (S * gain / np.sqrt(E) - 1.0) ** 2 + G / E

    s_lo, s_hi = 0.0, np.sqrt(params.P)
    e_lo, e_hi = -4.0, 4.0
    z_lo, z_hi = 0.0, 1.0
    while True:
        s, le, z = (np.linspace(s_lo, s_hi, grid), np.linspace(e_lo, e_hi, grid),
                    np.linspace(z_lo, z_hi, grid))
        f = eval_grid(s, le, z)
        i, j, k = np.unravel_index(np.argmin(f), f.shape)
        if j in (0, grid - 1):
            e_lo, e_hi = e_lo - 2, e_hi + 2
        elif k == grid - 1:
            z_hi *= 2
        else:
            break
    for _ in range(refinements):
        # keep a generous window: the objective has curved valleys
        ds, de, dz = s[1] - s[0], le[1] - le[0], z[1] - z[0]
        s_lo, s_hi = max(0.0, s[i] - 8 * ds), min(np.sqrt(params.P), s[i] + 8 * ds)
        e_lo, e_hi = le[j] - 8 * de, le[j] + 8 * de
        z_lo, z_hi = max(0.0, z[k] - 8 * dz), z[k] + 8 * dz
        s, le, z = (np.linspace(s_lo, s_hi, grid), np.linspace(e_lo, e_hi, grid),
                    np.linspace(z_lo, z_hi, grid))
        f = eval_grid(s, le, z)
        i, j, k = np.unravel_index(np.argmin(f), f.shape)
    return float(f[i, j, k]), (float(s[i] ** 2), float(10.0 ** le[j]), float(z[k]))


def row_objective_at(prev: RowEstimate, cross_gain: float, gain: float, params: SystemParams,
                     p: float, eta: float, zeta: float) -> float:
    """The single-interferer row objective at an arbitrary point (for oracle checks)."""
    G = eg2(zeta, prev, np.array([cross_gain]), params)
    return float((np.sqrt(p) * gain / np.sqrt(eta) - 1.0) ** 2 + G / eta)

