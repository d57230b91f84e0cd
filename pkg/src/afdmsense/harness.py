"""Monte-Carlo trials, sweeps over scenario grids and summary metrics."""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .afdm import idaft
from .baseline import RssMeasurement, rss_nakagami_range
from .channel import generate_paths, random_pilot, synthesize_received
from .crb import CrbInputs, crb
from .estimator import EstimatorOptions, Priors, estimate, los_radial_velocity
from .scenario import ScenarioConfig
from .sensing import calibrate_noise, linearized_model
from .special import make_rng

GRID_AXES = ("snr_db", "velocity_kmh", "shape_m", "num_paths", "est_num_paths")
# fields left out of the trial seed, so compared grid points share geometry draws
# (angles, taps, noise streams); the gains still follow each point's own m and L
_NON_WORLD = {"snr_db", "velocity_kmh", "shape_m", "num_paths", "est_num_paths", "trials", "name", "eps1", "eps2",
              "max_iter_ec", "max_iter_em", "d0_init", "d0_bounds", "damping", "relinearize",
              "nu_tol", "drop_mode", "exclude_nonconverged"}
_PILOT_STREAM = 0x50494C54
_DROP_STREAM = 0x44524F50
NU_FLOOR = 1e-6


# ---------------------------------------------------------------- config

def _bundled_config(name: str) -> Path | None:
    ref = resources.files("afdmsense") / "configs" / f"{name}.yaml"
    return Path(str(ref)) if ref.is_file() else None


def read_config(path) -> dict:
    """Read a flat YAML mapping; bare names resolve to bundled presets."""
    p = Path(path)
    if not p.exists():
        bundled = _bundled_config(str(path))
        if bundled is None:
            raise FileNotFoundError(f"config not found: {path}")
        p = bundled
    with open(p, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{p}: expected a mapping of ScenarioConfig fields")
    return data


def expand_grid(data: dict, **overrides) -> list[ScenarioConfig]:
    """Cartesian product over list-valued axes in ``GRID_AXES``.

    Combinations with est_num_paths > num_paths are skipped.
    """
    data = {**data, **{k: v for k, v in overrides.items() if v is not None}}
    known = set(ScenarioConfig.field_names())
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {unknown}")
    axes = {k: data[k] for k in GRID_AXES if isinstance(data.get(k), (list, tuple))}
    for k, v in axes.items():
        if len(v) == 0:
            raise ValueError(f"grid axis {k!r} is empty")
    base = {k: v for k, v in data.items() if k not in axes}
    grid = []
    for combo in itertools.product(*axes.values()):
        kw = {**base, **dict(zip(axes, combo))}
        est = kw.get("est_num_paths")
        if est is not None and est > kw.get("num_paths", 3):
            continue
        grid.append(ScenarioConfig(**kw))
    if not grid:
        raise ValueError("scenario grid is empty")
    return grid


def load_config(path, **overrides) -> list[ScenarioConfig]:
    return expand_grid(read_config(path), **overrides)


def scenario_id(scn: ScenarioConfig, index: int) -> str:
    return scn.name or f"s{index:03d}"


# ---------------------------------------------------------------- seeding

def world_key(scn: ScenarioConfig) -> tuple[int, ...]:
    """Stable spawn key from the fields that define the simulated world."""
    d = {k: v for k, v in scn.to_dict().items() if k not in _NON_WORLD}
    digest = hashlib.sha256(json.dumps(d, sort_keys=True).encode()).digest()
    return tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))


def trial_rng(scn: ScenarioConfig, trial_idx: int) -> np.random.Generator:
    return make_rng(scn.seed, *world_key(scn), trial_idx)


def scenario_pilot(scn: ScenarioConfig) -> np.ndarray:
    """Affine-domain pilot shared by every trial of a scenario."""
    return random_pilot(scn.n_sub, make_rng(scn.seed, _PILOT_STREAM, scn.n_sub))


# ---------------------------------------------------------------- trials

CSV_FIELDS = ("scenario_id", "trial_index", "d0_true", "d0_hat", "d0_hat_baseline", "nu1_true",
              "nu1_hat", "vlos_true", "vlos_hat", "converged", "em_iters", "ec_iters_total",
              "fixed_point_residual", "clamp_count")
DIAG_FIELDS = ("scenario_id", "trial_index", "lambda_additivity_error", "baseline_clamped",
               "nu_regularized", "ec_all_converged", "error")


@dataclass(frozen=True)
class TrialRecord:
    scenario_id: str
    trial_index: int
    d0_true: float
    d0_hat: float
    d0_hat_baseline: float
    nu1_true: float
    nu1_hat: float
    vlos_true: float
    vlos_hat: float
    converged: bool
    em_iters: int
    ec_iters_total: int
    fixed_point_residual: float
    clamp_count: int
    lambda_additivity_error: float = field(default=0.0, compare=False)
    baseline_clamped: bool = field(default=False, compare=False)
    nu_regularized: bool = field(default=False, compare=False)
    ec_all_converged: bool = field(default=True, compare=False)
    error: str = field(default="", compare=False)


def estimator_options(scn: ScenarioConfig) -> EstimatorOptions:
    return EstimatorOptions(eps1=scn.eps1, eps2=scn.eps2, max_iter_ec=scn.max_iter_ec,
                            max_iter_em=scn.max_iter_em, d0_init=scn.d0_init,
                            d0_bounds=scn.d0_bounds, damping=scn.damping,
                            relinearize=scn.relinearize, nu_tol=scn.nu_tol)


def kept_paths(scn: ScenarioConfig, trial_idx: int) -> np.ndarray:
    """Indices of the paths handed to the estimator (LoS always kept)."""
    n_drop = scn.num_paths - scn.n_est
    idx = np.arange(scn.num_paths)
    if n_drop == 0:
        return idx
    if scn.drop_mode == "largest":
        # NLoS taps are sorted, so the largest delays sit at the end
        return idx[:scn.n_est]
    rng = make_rng(scn.seed, *world_key(scn), trial_idx, _DROP_STREAM)
    dropped = rng.choice(idx[1:], size=n_drop, replace=False)
    return np.setdiff1d(idx, dropped)


def run_trial(scn: ScenarioConfig, trial_idx: int, sid: str = "s000",
              pilot=None) -> TrialRecord:
    cfg = scn.afdm
    pilot = scenario_pilot(scn) if pilot is None else pilot
    s = idaft(pilot, cfg)
    rng = trial_rng(scn, trial_idx)
    ps = generate_paths(scn, rng)
    noise_var = calibrate_noise(scn.snr_db, ps, s, cfg)
    obs = synthesize_received(ps, pilot, noise_var, cfg, rng)

    rss = rss_nakagami_range(RssMeasurement.from_observation(obs.y_af, noise_var), scn.shape_m,
                             scn.fading_exps[0], scn.g0, scn.d0_bounds)
    nu1 = float(ps.dopplers[0])
    common = dict(scenario_id=sid, trial_index=int(trial_idx), d0_true=scn.d0_true,
                  d0_hat_baseline=rss.d0, nu1_true=nu1,
                  vlos_true=float(scn.velocity * np.cos(ps.angles[0])),
                  baseline_clamped=rss.clamped)
    keep = kept_paths(scn, trial_idx)
    try:
        model = linearized_model(s, ps.taps[keep], cfg)
        priors = Priors(scn.shape_m, ps.fading_exps[keep], scn.g0, ps.rel_distances[keep])
        est = estimate(obs.y_af, model, priors, noise_var, estimator_options(scn), cfg)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return TrialRecord(d0_hat=math.nan, nu1_hat=math.nan, vlos_hat=math.nan,
                           converged=False, em_iters=0, ec_iters_total=0,
                           fixed_point_residual=math.nan, clamp_count=0,
                           error=f"{type(exc).__name__}: {exc}", **common)
    return TrialRecord(d0_hat=est.d0, nu1_hat=float(est.nu[0]),
                       vlos_hat=los_radial_velocity(est.nu[0], cfg), converged=est.converged,
                       em_iters=est.em_iters, ec_iters_total=est.ec_iters_total,
                       fixed_point_residual=est.fixed_point_residual,
                       clamp_count=est.clamp_count,
                       lambda_additivity_error=est.lambda_additivity_error,
                       nu_regularized=est.nu_regularized,
                       ec_all_converged=est.ec_all_converged, **common)


# ---------------------------------------------------------------- crb overlay

def scenario_crb(scn: ScenarioConfig, draws: int = 100, pilot=None) -> dict:
    """CRB averaged over path-geometry draws (Rayleigh scenarios only).

    Draw j uses the channel of trial j. Returns root-mean CRB for d0 and the
    root-mean normalized CRB for nu1 over draws with |nu1| > NU_FLOOR.
    """
    if scn.shape_m != 1:
        raise ValueError("the CRB is only available for shape_m = 1")
    cfg = scn.afdm
    pilot = scenario_pilot(scn) if pilot is None else pilot
    s = idaft(pilot, cfg)
    crb_d0, crb_nu = [], []
    for j in range(draws):
        ps = generate_paths(scn, trial_rng(scn, j))
        noise_var = calibrate_noise(scn.snr_db, ps, s, cfg)
        res = crb(CrbInputs(psi=np.r_[scn.d0_true, ps.dopplers], taps=ps.taps, g0=scn.g0,
                            rel_distances=ps.rel_distances, fading_exps=ps.fading_exps,
                            noise_var=noise_var, pilot_time=s, cfg=cfg))
        crb_d0.append(res.crb_d0)
        if abs(ps.dopplers[0]) > NU_FLOOR:
            crb_nu.append(res.crb_nu1 / ps.dopplers[0] ** 2)
    return {"rcrb_d0": math.sqrt(math.fsum(crb_d0) / len(crb_d0)),
            "nrcrb_nu1": math.sqrt(math.fsum(crb_nu) / len(crb_nu)) if crb_nu else math.nan}


# ---------------------------------------------------------------- summaries

SUMMARY_FIELDS = ("scenario_id", "snr_db", "velocity_kmh", "shape_m", "num_paths",
                  "est_num_paths", "rmse_d0", "rmse_d0_baseline", "nrmse_nu1", "rmse_nu1",
                  "rcrb_d0", "nrcrb_nu1", "trials", "converged", "failed")


@dataclass(frozen=True)
class SweepSummary:
    scenario_id: str
    snr_db: float
    velocity_kmh: float
    shape_m: float
    num_paths: int
    est_num_paths: int
    rmse_d0: float
    rmse_d0_baseline: float
    nrmse_nu1: float
    rmse_nu1: float
    rcrb_d0: float
    nrcrb_nu1: float
    trials: int
    converged: int
    failed: int


def _rms(values) -> float:
    values = list(values)
    if not values:
        return math.nan
    return math.sqrt(math.fsum(v * v for v in values) / len(values))


def summarize(records, scn: ScenarioConfig | None = None, rcrb: dict | None = None,
              exclude_nonconverged: bool | None = None) -> SweepSummary:
    records = list(records)
    if not records:
        raise ValueError("summarize needs at least one record")
    if exclude_nonconverged is None:
        exclude_nonconverged = scn.exclude_nonconverged if scn is not None else False
    ok = [r for r in records if not r.error and (r.converged or not exclude_nonconverged)]
    rcrb = rcrb or {}
    scn = scn or ScenarioConfig()
    return SweepSummary(
        scenario_id=records[0].scenario_id, snr_db=scn.snr_db, velocity_kmh=scn.velocity_kmh,
        shape_m=scn.shape_m, num_paths=scn.num_paths, est_num_paths=scn.n_est,
        rmse_d0=_rms(r.d0_hat - r.d0_true for r in ok),
        rmse_d0_baseline=_rms(r.d0_hat_baseline - r.d0_true for r in records),
        nrmse_nu1=_rms((r.nu1_hat - r.nu1_true) / r.nu1_true for r in ok
                       if abs(r.nu1_true) > NU_FLOOR),
        rmse_nu1=_rms(r.nu1_hat - r.nu1_true for r in ok),
        rcrb_d0=rcrb.get("rcrb_d0", math.nan), nrcrb_nu1=rcrb.get("nrcrb_nu1", math.nan),
        trials=len(records), converged=sum(bool(r.converged) for r in records),
        failed=sum(bool(r.error) for r in records))


# ---------------------------------------------------------------- sweeps

@dataclass
class SweepResult:
    scenarios: list
    records: list
    summaries: list
    scenario_ids: list = field(default_factory=list)

    def records_for(self, sid: str) -> list:
        return [r for r in self.records if r.scenario_id == sid]

    def summary_for(self, sid: str) -> SweepSummary:
        return next(s for s in self.summaries if s.scenario_id == sid)


def _run_chunk(args):
    scn, sid, trial_ids = args
    pilot = scenario_pilot(scn)
    return [run_trial(scn, i, sid, pilot) for i in trial_ids]


def _chunks(grid, ids, chunk):
    for scn, sid in zip(grid, ids):
        for start in range(0, scn.trials, chunk):
            yield scn, sid, list(range(start, min(start + chunk, scn.trials)))


def run_sweep(grid, jobs: int = 1, crb_draws: int = 100, chunk: int = 10,
              progress=None) -> SweepResult:
    """Run every trial of every scenario; results do not depend on ``jobs``."""
    grid = list(grid)
    if not grid:
        raise ValueError("scenario grid is empty")
    ids = [scenario_id(s, i) for i, s in enumerate(grid)]
    if len(set(ids)) != len(ids):
        raise ValueError("scenario names must be unique")
    work = list(_chunks(grid, ids, chunk))
    records = []
    if jobs <= 1:
        for item in work:
            records.extend(_run_chunk(item))
            if progress:
                progress(len(item[2]))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for out in pool.map(_run_chunk, work):
                records.extend(out)
                if progress:
                    progress(len(out))
    order = {sid: k for k, sid in enumerate(ids)}
    records.sort(key=lambda r: (order[r.scenario_id], r.trial_index))
    summaries = []
    for scn, sid in zip(grid, ids):
        rcrb = scenario_crb(scn, crb_draws) if scn.shape_m == 1 and crb_draws > 0 else None
        summaries.append(summarize([r for r in records if r.scenario_id == sid], scn, rcrb))
    return SweepResult(scenarios=grid, records=records, summaries=summaries, scenario_ids=ids)


def with_overrides(scn: ScenarioConfig, **kw) -> ScenarioConfig:
    return replace(scn, **{k: v for k, v in kw.items() if v is not None})


def record_fields() -> list[str]:
    return [f.name for f in fields(TrialRecord)]
