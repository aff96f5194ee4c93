"""Run orchestration: synthetic data generation, calibration, prediction
and plain simulation, with JSON run configs and reproducibility manifests.

Every command resolves a RunConfig (JSON file merged with CLI overrides),
seeds an independent RNG per chain from a root seed, and writes a
manifest.json containing the resolved config, its hash and the library
versions, so a run can be replayed bit-for-bit.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields as dc_fields
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import (
    DataError,
    load_behavior_tables,
    load_observations,
    read_samples,
    write_observations,
    write_samples,
    write_trajectory,
)
from .mcmc import SamplerConfig, sample
from .mixing import BehaviorTables, MixingConfig
from .model import default_initial_state, equilibrium_check, integrate
from .observe import (
    INCIDENCE,
    SEROPREVALENCE,
    Observation,
    Prior,
    PriorSet,
    default_priors,
    make_log_posterior,
    predicted_observables,
)
from .solver import SolverConfig, SolverError
from .strata import GENDER_NAMES, LIFELONG, ModelParams, N_AGES, ParamSpace
from .vaccinate import VaccinationPolicy, posterior_predictive


class ConfigError(RuntimeError):
    """A run config is malformed or inconsistent."""


class NumericsError(RuntimeError):
    """A run failed numerically (stiff ODE, impossible initialization)."""


#: documented synthetic-study ground truth
SYNTH_TRUTH = {
    "trans_prob_m": 0.9, "trans_prob_f": 0.9,
    "incubation_m": 0.95, "incubation_f": 0.85,
    "treat_duration_m": 0.15, "treat_duration_f": 0.3,
    "asympt_duration_m": 3.2, "asympt_duration_f": 3.4,
    "seroconv_prob_m": 0.5, "seroconv_prob_f": 0.6,
    "incidence_var": 5.0, "sero_shape": 2.0,
    "age_mixing": 0.5, "act_mixing": 0.5,
}


@dataclass
class RunConfig:
    variant: str = "combined"
    seed: int = 1
    out: str = "run_output"
    data: str | None = None
    population: float = 10_000.0
    horizon: float = 120.0
    chains: int = 1
    engine: str = "numba"
    lagged_incidence: bool | None = None
    behaviour_tables: str | None = None
    solver: dict = field(default_factory=dict)
    sampler: dict = field(default_factory=dict)
    mixing: dict = field(default_factory=dict)
    priors: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    synth: dict = field(default_factory=dict)
    vaccination: dict = field(default_factory=dict)
    calibration: str | None = None
    init: dict | None = None
    max_init_tries: int = 100

    @classmethod
    def load(cls, path: str | Path | None = None, **overrides) -> "RunConfig":
        raw: dict = {}
        if path is not None:
            try:
                raw = json.loads(Path(path).read_text())
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config {path} is not valid JSON: {exc}") \
                    from exc
            if not isinstance(raw, dict):
                raise ConfigError(f"config {path} must be a JSON object")
        known = {f.name for f in dc_fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        raw.update({k: v for k, v in overrides.items() if v is not None})
        try:
            config = cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        config.validate()
        return config

    def validate(self) -> None:
        if self.variant not in ("hpv6", "hpv11", "combined"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.engine not in ("numba", "numpy"):
            raise ConfigError(f"unknown engine {self.engine!r}")
        if self.chains < 1:
            raise ConfigError("chains must be >= 1")
        if self.population <= 0 or self.horizon <= 0:
            raise ConfigError("population and horizon must be positive")
        try:
            self.solver_config()
            self.sampler_config()
            self.mixing_template()
            self.vaccination_policy()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.solver)

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(**self.sampler)

    def mixing_template(self) -> MixingConfig:
        extra = {k: v for k, v in self.mixing.items()}
        return MixingConfig(age_mixing=0.5, act_mixing=0.5, **extra)

    def vaccination_policy(self) -> VaccinationPolicy:
        kwargs = {k: v for k, v in self.vaccination.items()
                  if k not in ("max_draws",)}
        if "gender" in kwargs and isinstance(kwargs["gender"], str):
            kwargs["gender"] = GENDER_NAMES.index(kwargs["gender"])
        return VaccinationPolicy(**kwargs)

    def tables(self) -> BehaviorTables:
        if self.behaviour_tables:
            return load_behavior_tables(self.behaviour_tables)
        return load_behavior_tables()

    def param_space(self) -> ParamSpace:
        values = dict(SYNTH_TRUTH)
        values.update({k: (LIFELONG if v is None else float(v))
                       for k, v in self.params.items()
                       if k in ("immunity_m", "immunity_f")})
        try:
            base = ModelParams(**{**values,
                                  **{k: v for k, v in self.params.items()
                                     if k not in ("immunity_m", "immunity_f")}})
        except ValueError as exc:
            raise ConfigError(f"bad params: {exc}") from exc
        free = list(ParamSpace.DEFAULT_FREE)
        if base.immunity_m != LIFELONG or base.immunity_f != LIFELONG:
            free = free[:10] + ["immunity_m", "immunity_f"] + free[10:]
        return ParamSpace(base, tuple(free))

    def prior_set(self, space: ParamSpace) -> PriorSet:
        priors = default_priors(self.variant)
        for name, spec in self.priors.items():
            try:
                priors[name] = Prior(spec["family"], tuple(spec["args"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"bad prior for {name!r}: {exc}") from exc
        return PriorSet(priors, space.names)

    def resolved(self) -> dict:
        return asdict(self)

    def manifest(self, command: str) -> dict:
        blob = json.dumps(self.resolved(), sort_keys=True)
        return {
            "command": command,
            "config": self.resolved(),
            "config_sha256": hashlib.sha256(blob.encode()).hexdigest(),
            "seed": self.seed,
            "versions": {
                "hpvcal": __version__,
                "numpy": np.__version__,
                "python": sys.version.split()[0],
            },
        }


def _write_manifest(out_dir: Path, config: RunConfig, command: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(
        json.dumps(config.manifest(command), indent=2, sort_keys=True) + "\n")


def _truth_params(config: RunConfig) -> ModelParams:
    values = dict(SYNTH_TRUTH)
    values.update(config.synth.get("truth", {}))
    values.update(config.params)
    values = {k: (LIFELONG if v is None else v) for k, v in values.items()}
    try:
        return ModelParams(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad truth parameters: {exc}") from exc


def _save_grid(config: RunConfig) -> np.ndarray:
    return np.arange(0.0, config.horizon + 1e-9, 1.0)


def synth_generate(config: RunConfig) -> Path:
    """Generate noisy observations from a known ground truth.

    Integrates the truth over [0, horizon], then draws Gaussian incidence
    (lagged form: state one year before each epoch) and Beta seroprevalence
    at every epoch, gender and age band.  Writes observations.csv,
    truth.json and manifest.json; identical seeds give identical files.
    """
    out_dir = Path(config.out)
    truth = _truth_params(config)
    tables = config.tables()
    mix = config.mixing_template()
    mix = MixingConfig(age_mixing=truth.age_mixing,
                       act_mixing=truth.act_mixing,
                       age_pref_strength=mix.age_pref_strength,
                       balance_exponent=mix.balance_exponent)
    interval = float(config.synth.get("obs_interval", 10.0))
    if interval <= 0:
        raise ConfigError("synth.obs_interval must be positive")
    epochs = np.arange(interval, config.horizon + 1e-9, interval)
    if epochs.size == 0:
        raise ConfigError("horizon too short for any observation epoch")

    initial = default_initial_state(config.population, tables)
    try:
        traj = integrate(initial, truth, 0.0, config.horizon,
                         config.solver_config(), _save_grid(config), tables,
                         mix, engine=config.engine)
    except SolverError as exc:
        raise NumericsError(str(exc)) from exc

    inc, sero = predicted_observables(traj, truth, lagged_incidence=True)
    times = np.asarray(traj.times)
    rng = np.random.default_rng(config.seed)
    observations: list[Observation] = []
    sd = math.sqrt(truth.incidence_var)
    for t in epochs:
        idx = int(np.argmin(np.abs(times - t)))
        for gender in range(2):
            for age in range(N_AGES):
                mu = inc[idx, gender, age]
                observations.append(Observation(
                    time=float(t), gender=gender, age=age + 1,
                    kind=INCIDENCE, value=float(rng.normal(mu, sd))))
        for gender in range(2):
            for age in range(N_AGES):
                y_hat = min(max(sero[idx, gender, age], 1e-8), 1.0 - 1e-8)
                a = truth.sero_shape
                b = a * (1.0 / y_hat - 1.0)
                observations.append(Observation(
                    time=float(t), gender=gender, age=age + 1,
                    kind=SEROPREVALENCE, value=float(rng.beta(a, b))))

    out_dir.mkdir(parents=True, exist_ok=True)
    write_observations(out_dir / "observations.csv", observations)
    truth_dict = {k: (None if v == LIFELONG else v)
                  for k, v in asdict(truth).items()}
    (out_dir / "truth.json").write_text(
        json.dumps(truth_dict, indent=2, sort_keys=True) + "\n")
    _write_manifest(out_dir, config, "synth")
    return out_dir


def _load_run_observations(config: RunConfig) -> list[Observation]:
    source = config.data if config.data else config.variant
    observations = load_observations(source)
    save_grid = _save_grid(config)
    for obs in observations:
        if obs.time > config.horizon + 1e-9:
            raise ConfigError(
                f"observation at t={obs.time} lies beyond horizon "
                f"{config.horizon}")
        if np.min(np.abs(save_grid - obs.time)) > 1e-9:
            raise ConfigError(
                f"observation time {obs.time} is not on the yearly save grid")
    return observations


def _resolve_lagged(config: RunConfig,
                    observations: list[Observation]) -> bool:
    if config.lagged_incidence is not None:
        return bool(config.lagged_incidence)
    times = {obs.time for obs in observations}
    return len(times) > 1  # multi-epoch data: the synthetic convention


def calibrate(config: RunConfig) -> Path:
    """Run adaptive-MCMC calibration and write samples, terminal states,
    diagnostics and a posterior-fit summary."""
    out_dir = Path(config.out)
    observations = _load_run_observations(config)
    tables = config.tables()
    space = config.param_space()
    priors = config.prior_set(space)
    lagged = _resolve_lagged(config, observations)
    initial = default_initial_state(config.population, tables)
    sampler_config = config.sampler_config()

    log_post = make_log_posterior(
        space, priors, observations, initial, 0.0, config.horizon,
        _save_grid(config), tables, config.solver_config(),
        config.mixing_template(), lagged_incidence=lagged,
        engine=config.engine)

    seeds = np.random.SeedSequence(config.seed).spawn(config.chains)
    chain_dirs = []
    for c, seed_seq in enumerate(seeds):
        rng = np.random.default_rng(seed_seq)
        theta0 = _initial_point(config, space, priors, log_post, rng)
        run = sample(log_post, theta0, sampler_config, rng)
        chain_dir = out_dir if config.chains == 1 else out_dir / f"chain_{c:02d}"
        chain_dir.mkdir(parents=True, exist_ok=True)
        _write_chain_outputs(chain_dir, config, space, observations, run,
                             log_post.n_solver_failures)
        chain_dirs.append(chain_dir)
    _write_manifest(out_dir, config, "calibrate")
    return out_dir


def _initial_point(config: RunConfig, space: ParamSpace, priors: PriorSet,
                   log_post, rng: np.random.Generator) -> np.ndarray:
    if config.init:
        unknown = set(config.init) - set(space.names)
        if unknown:
            raise ConfigError(f"init names not free parameters: "
                              f"{sorted(unknown)}")
        vec = space.to_vector(space.base)
        for k, v in config.init.items():
            vec[space.names.index(k)] = float(v)
        lp, _ = log_post(vec)
        if not np.isfinite(lp):
            raise NumericsError(
                "configured init point has non-finite posterior; re-draw "
                "the initial state from the priors")
        return vec
    for _ in range(config.max_init_tries):
        vec = priors.sample(rng)
        lp, _ = log_post(vec)
        if np.isfinite(lp):
            return vec
    raise NumericsError(
        f"no finite-posterior initialization found in "
        f"{config.max_init_tries} prior draws; loosen priors or check data")


def _write_chain_outputs(chain_dir: Path, config: RunConfig,
                         space: ParamSpace, observations, run,
                         n_solver_failures: int) -> None:
    write_samples(chain_dir / "samples.csv", space.names, run.samples,
                  run.log_posts, run.iterations)
    terminal = np.stack([p for p in run.payloads])
    np.savez_compressed(chain_dir / "states.npz",
                        terminal_states=terminal,
                        iterations=run.iterations)
    diag = run.diagnostics()
    diag["n_solver_failures"] = n_solver_failures
    diag["sampler"] = asdict(config.sampler_config())
    (chain_dir / "diagnostics.json").write_text(
        json.dumps(diag, indent=2) + "\n")
    _write_fit_summary(chain_dir / "calibration_fit.csv", config, space,
                       observations, run.samples, terminal)


def _write_fit_summary(path: Path, config: RunConfig, space: ParamSpace,
                       observations, samples: np.ndarray,
                       terminal: np.ndarray) -> None:
    """Posterior observables at the final epoch against the data: 36 rows,
    gender x age band x observable kind."""
    agg = terminal.sum(axis=2)  # (n, 2, 9, 5)
    total = agg.sum(axis=-1)
    onset_m = 1.0 / samples[:, space.names.index("incubation_m")]
    onset_f = 1.0 / samples[:, space.names.index("incubation_f")]
    onset = np.stack([onset_m, onset_f], axis=1)  # (n, 2)
    inc = 1000.0 * onset[:, :, None] * agg[..., 1] / total
    sero = agg[..., 3] / total

    latest: dict[tuple[int, int, str], Observation] = {}
    for obs in observations:
        key = (obs.gender, obs.age, obs.kind)
        if key not in latest or obs.time > latest[key].time:
            latest[key] = obs

    lines = [",".join(("gender", "age_group", "kind", "observed", "ci_low",
                       "ci_high", "posterior_mean", "q2.5", "q97.5"))]
    for gender in range(2):
        for age in range(1, N_AGES + 1):
            for kind, arr in ((INCIDENCE, inc), (SEROPREVALENCE, sero)):
                draws = arr[:, gender, age - 1]
                obs = latest.get((gender, age, kind))
                lines.append(",".join((
                    GENDER_NAMES[gender], str(age), kind,
                    "" if obs is None else repr(float(obs.value)),
                    "" if obs is None or obs.ci_low is None
                    else repr(float(obs.ci_low)),
                    "" if obs is None or obs.ci_high is None
                    else repr(float(obs.ci_high)),
                    repr(float(draws.mean())),
                    repr(float(np.quantile(draws, 0.025))),
                    repr(float(np.quantile(draws, 0.975))),
                )))
    path.write_text("\n".join(lines) + "\n")


def predict(config: RunConfig) -> Path:
    """Posterior-predictive vaccination projection from a calibration run."""
    out_dir = Path(config.out)
    calib_dir = Path(config.calibration) if config.calibration else out_dir
    samples_path = calib_dir / "samples.csv"
    if not samples_path.exists():
        raise ConfigError(f"no samples.csv under {calib_dir}; run calibrate "
                          f"first or set the calibration field")
    names, samples, _, _ = read_samples(samples_path)
    space = config.param_space()
    if tuple(names) != space.names:
        raise DataError(
            f"{samples_path}: parameter columns {names} do not match the "
            f"configured space {space.names}")

    states_path = calib_dir / "states.npz"
    if states_path.exists():
        terminal = np.load(states_path)["terminal_states"]
    else:
        terminal = _reintegrate_terminals(config, space, samples)

    policy = config.vaccination_policy()
    max_draws = config.vaccination.get("max_draws")
    result = posterior_predictive(
        samples, terminal, space, policy, t_start=config.horizon,
        tables=config.tables(), solver_config=config.solver_config(),
        mix_template=config.mixing_template(), max_draws=max_draws)

    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [",".join(("time", "gender", "age_group", "observable", "mean",
                       "q2.5", "q97.5"))]
    for which, label in ((result.incidence, INCIDENCE),
                         (result.seroprevalence, SEROPREVALENCE)):
        mean = which.mean(axis=0)
        lo = np.quantile(which, 0.025, axis=0)
        hi = np.quantile(which, 0.975, axis=0)
        for k, t in enumerate(result.times):
            for gender in range(2):
                for age in range(N_AGES):
                    lines.append(",".join((
                        repr(float(t)), GENDER_NAMES[gender], str(age + 1),
                        label, repr(float(mean[k, gender, age])),
                        repr(float(lo[k, gender, age])),
                        repr(float(hi[k, gender, age])))))
    (out_dir / "predictive.csv").write_text("\n".join(lines) + "\n")
    _write_manifest(out_dir, config, "predict")
    return out_dir


def _reintegrate_terminals(config: RunConfig, space: ParamSpace,
                           samples: np.ndarray) -> np.ndarray:
    tables = config.tables()
    initial = default_initial_state(config.population, tables)
    mix = config.mixing_template()
    terminal = np.empty((samples.shape[0],) + initial.shape)
    for i, row in enumerate(samples):
        params = space.from_vector(row)
        traj = integrate(
            initial, params, 0.0, config.horizon, config.solver_config(),
            np.array([0.0, config.horizon]), tables,
            MixingConfig(age_mixing=params.age_mixing,
                         act_mixing=params.act_mixing,
                         age_pref_strength=mix.age_pref_strength,
                         balance_exponent=mix.balance_exponent),
            engine=config.engine)
        terminal[i] = traj.final_state
    return terminal


def simulate(config: RunConfig) -> Path:
    """One forward run of the deterministic model; writes trajectory.csv."""
    out_dir = Path(config.out)
    params = _truth_params(config)
    tables = config.tables()
    mix = config.mixing_template()
    mix = MixingConfig(age_mixing=params.age_mixing,
                       act_mixing=params.act_mixing,
                       age_pref_strength=mix.age_pref_strength,
                       balance_exponent=mix.balance_exponent)
    initial = default_initial_state(config.population, tables)
    try:
        traj = integrate(initial, params, 0.0, config.horizon,
                         config.solver_config(), _save_grid(config), tables,
                         mix, engine=config.engine)
    except SolverError as exc:
        raise NumericsError(str(exc)) from exc
    out_dir.mkdir(parents=True, exist_ok=True)
    write_trajectory(out_dir / "trajectory.csv", traj.times, traj.states)
    ok, residual = equilibrium_check(traj, params, tables, mix)
    (out_dir / "equilibrium.json").write_text(json.dumps(
        {"at_equilibrium": bool(ok), "residual_per_capita": residual},
        indent=2) + "\n")
    _write_manifest(out_dir, config, "simulate")
    return out_dir
