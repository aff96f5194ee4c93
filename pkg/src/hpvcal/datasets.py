"""Bundled calibration data and file formats.

Bundled files (src/hpvcal/data/):

    observations_hpv6.csv, observations_hpv11.csv, observations_combined.csv
        Australian calibration targets: age-specific seroprevalence from a
        national serosurvey (Newall et al. 2008) and treated genital-warts
        incidence per 1000 person-years from a national GP consultation
        survey (Pirotta et al. 2009).  Incidence is not HPV-typed, so the
        same incidence rows appear in every variant file.
    behaviour_tables.json
        Relative partner-acquisition rates by age band and activity group,
        activity-group population shares and the population-mean rate, from
        the ASHR sexual-behaviour survey.

Observation CSV columns: time, gender, age_group, kind, value, ci_low,
ci_high.  gender is "male"/"female", kind "incidence"/"seroprevalence",
seroprevalence values are proportions in [0, 1], confidence bounds may be
empty.  Floats serialize via repr, so files round-trip byte-identically.
"""

from __future__ import annotations

import csv
import json
from importlib import resources
from pathlib import Path

import numpy as np

from .mixing import BehaviorTables
from .observe import INCIDENCE, SEROPREVALENCE, Observation
from .strata import COMPARTMENTS, GENDER_NAMES, N_ACTIVITY, N_AGES, N_GENDERS

OBSERVATION_HEADER = ("time", "gender", "age_group", "kind", "value",
                      "ci_low", "ci_high")
TRAJECTORY_HEADER = ("time", "gender", "activity", "age") + COMPARTMENTS

#: observation time assigned to the bundled (endemic equilibrium) data
EQUILIBRIUM_TIME = 120.0


class DataError(RuntimeError):
    """A data file failed to parse or failed validation."""


def data_path(name: str) -> Path:
    return Path(resources.files("hpvcal.data") / name)


def load_behavior_tables(path: str | Path | None = None) -> BehaviorTables:
    """Behaviour tables from JSON; the bundled ASHR tables by default."""
    path = Path(path) if path else data_path("behaviour_tables.json")
    try:
        raw = json.loads(Path(path).read_text())
        return BehaviorTables(
            age_rates=np.asarray(raw["age_rates"], float),
            act_rates=np.asarray(raw["act_rates"], float),
            act_shares=np.asarray(raw["act_shares"], float),
            mean_rate=float(raw["mean_rate"]),
        )
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"cannot load behaviour tables from {path}: {exc}") \
            from exc


def load_observations(source: str | Path) -> list[Observation]:
    """Observations from a CSV path or a bundled variant name
    ("hpv6", "hpv11", "combined")."""
    if isinstance(source, str) and source in ("hpv6", "hpv11", "combined"):
        path = data_path(f"observations_{source}.csv")
    else:
        path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read observations from {path}: {exc}") \
            from exc
    return parse_observations(text, str(path))


def parse_observations(text: str, origin: str = "<string>") -> list[Observation]:
    rows = list(csv.reader(text.splitlines()))
    if not rows or tuple(rows[0]) != OBSERVATION_HEADER:
        raise DataError(
            f"{origin}: expected header {','.join(OBSERVATION_HEADER)}")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(OBSERVATION_HEADER):
            raise DataError(f"{origin}:{lineno}: expected "
                            f"{len(OBSERVATION_HEADER)} columns, got {len(row)}")
        try:
            gender = GENDER_NAMES.index(row[1])
        except ValueError:
            raise DataError(f"{origin}:{lineno}: unknown gender {row[1]!r}") \
                from None
        try:
            obs = Observation(
                time=float(row[0]),
                gender=gender,
                age=int(row[2]),
                kind=row[3],
                value=float(row[4]),
                ci_low=float(row[5]) if row[5] != "" else None,
                ci_high=float(row[6]) if row[6] != "" else None,
            )
        except ValueError as exc:
            raise DataError(f"{origin}:{lineno}: {exc}") from None
        out.append(obs)
    if not out:
        raise DataError(f"{origin}: no observations found")
    return out


def write_observations(path: str | Path, observations: list[Observation]) -> None:
    lines = [",".join(OBSERVATION_HEADER)]
    for obs in observations:
        lines.append(",".join((
            repr(float(obs.time)),
            GENDER_NAMES[obs.gender],
            str(obs.age),
            obs.kind,
            repr(float(obs.value)),
            "" if obs.ci_low is None else repr(float(obs.ci_low)),
            "" if obs.ci_high is None else repr(float(obs.ci_high)),
        )))
    Path(path).write_text("\n".join(lines) + "\n")


def validate_real_observations(observations: list[Observation]) -> None:
    """Integrity checks for bundled survey data (synthetic draws are
    exempt: a Gaussian error model legitimately yields negative incidence)."""
    for obs in observations:
        if obs.kind == INCIDENCE and obs.value < 0:
            raise DataError("bundled incidence values must be non-negative")
        if obs.ci_low is None or obs.ci_high is None:
            raise DataError("bundled data must carry confidence bounds")
        if not obs.ci_low <= obs.value <= obs.ci_high:
            raise DataError("bundled value outside its confidence bounds")


def write_trajectory(path: str | Path, times: np.ndarray,
                     states: np.ndarray) -> None:
    """Trajectory CSV: one row per (time, gender, activity, age) with the
    compartment counts (vaccinated layouts add the five *_v columns)."""
    states = np.asarray(states, float)
    n_comp = states.shape[-1]
    header = TRAJECTORY_HEADER if n_comp == len(COMPARTMENTS) else (
        TRAJECTORY_HEADER + tuple(c + "_v" for c in COMPARTMENTS))
    lines = [",".join(header)]
    for k, t in enumerate(times):
        for g in range(N_GENDERS):
            for s in range(N_ACTIVITY):
                for a in range(N_AGES):
                    cells = [repr(float(t)), GENDER_NAMES[g], str(s + 1),
                             str(a + 1)]
                    cells += [repr(float(v)) for v in states[k, g, s, a]]
                    lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trajectory(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    rows = list(csv.reader(Path(path).read_text().splitlines()))
    if not rows or tuple(rows[0])[:4] != TRAJECTORY_HEADER[:4]:
        raise DataError(f"{path}: not a trajectory file")
    n_comp = len(rows[0]) - 4
    per_time = N_GENDERS * N_ACTIVITY * N_AGES
    body = rows[1:]
    if len(body) % per_time:
        raise DataError(f"{path}: row count not a multiple of {per_time}")
    n_times = len(body) // per_time
    times = np.empty(n_times)
    states = np.empty((n_times, N_GENDERS, N_ACTIVITY, N_AGES, n_comp))
    try:
        for i, row in enumerate(body):
            k, rem = divmod(i, per_time)
            g, rem = divmod(rem, N_ACTIVITY * N_AGES)
            s, a = divmod(rem, N_AGES)
            times[k] = float(row[0])
            expected = (GENDER_NAMES[g], str(s + 1), str(a + 1))
            if tuple(row[1:4]) != expected:
                raise DataError(f"{path}: row {i + 2} out of order")
            states[k, g, s, a] = [float(v) for v in row[4:]]
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    return times, states


def write_samples(path: str | Path, names: tuple[str, ...],
                  samples: np.ndarray, log_posts: np.ndarray,
                  iterations: np.ndarray) -> None:
    """Samples CSV: parameter columns + log_posterior + iteration."""
    lines = [",".join(names + ("log_posterior", "iteration"))]
    for row, lp, it in zip(np.asarray(samples, float), log_posts, iterations):
        cells = [repr(float(v)) for v in row]
        cells.append(repr(float(lp)))
        cells.append(str(int(it)))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def read_samples(path: str | Path
                 ) -> tuple[tuple[str, ...], np.ndarray, np.ndarray, np.ndarray]:
    rows = list(csv.reader(Path(path).read_text().splitlines()))
    if not rows or rows[0][-2:] != ["log_posterior", "iteration"]:
        raise DataError(f"{path}: not a samples file")
    names = tuple(rows[0][:-2])
    try:
        body = np.array([[float(v) for v in row] for row in rows[1:]])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    if body.size == 0:
        raise DataError(f"{path}: no samples")
    return (names, body[:, :len(names)], body[:, len(names)],
            body[:, len(names) + 1].astype(int))
