"""Seeded Monte Carlo harness for the level and power of the test battery.

Scenarios are m-indexed series: spherical draws pushed through the linear
map ``I + m * v`` (elliptical populations), or sign-flip skew constructions
with slant ``m * v`` (skew-normal and skew-t populations, bivariate).  All
four m-values of a series reuse the same base draws per replication, so
power columns differ only through the applied map.

Replication r of scenario group g draws from ``default_rng(SeedSequence([
seed, g, r]))``: streams are independent, and results are bit-identical for
any degree of parallelism because aggregation only sums integer rejection
counts.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import engine
from .radial import RadialModel, parse_model, spherical_sample
from .scores import parse_score
from .signrank import decompose

DEFAULT_SHAPE_STEP = (0.0, 0.14)
DEFAULT_SKEW_NORMAL_SLANT = (0.15, 0.0)
DEFAULT_SKEW_T_SLANT = (0.25, 0.0)

TABLE_TESTS = (
    "john",
    "gaussian",
    "vdw",
    "tnu:6",
    "wilcoxon",
    "tnu:1",
    "tnu:0.5",
    "tnu:0.2",
    "sign",
    "spearman",
)
TABLE3_POPULATIONS = ("gaussian", "tnu:6", "tnu:1", "tnu:0.2", "skewnormal", "skewt:2")
TABLE4_POPULATIONS = ("gaussian", "tnu:0.2")


@dataclass(frozen=True)
class Scenario:
    """One sampling configuration: population, perturbation index, sizes."""

    population: str
    m: int
    n: int
    k: int = 2
    shape_step_vech1: tuple[float, ...] | None = None
    slant: tuple[float, ...] | None = None
    estimate_center: bool = False

    def __post_init__(self) -> None:
        if self.m not in (0, 1, 2, 3):
            raise ValueError(f"perturbation index m must be in 0..3, got {self.m}")
        if self.n < 2:
            raise ValueError("scenario sample size must be at least 2")
        if self.is_skew:
            if self.k != 2:
                raise ValueError("skew populations are defined for k = 2 only")
            if self.slant is not None and len(self.slant) != self.k:
                raise ValueError("slant vector length must equal the dimension")
        else:
            parse_model(self.population, self.k)
            step = self.shape_step_vech1
            if step is not None and len(step) != self.k * (self.k + 1) // 2 - 1:
                raise ValueError("shape step must be a vech1 stack for dimension k")

    @property
    def is_skew(self) -> bool:
        return self.population.startswith("skew")

    @property
    def label(self) -> str:
        return f"{self.population} m={self.m}"

    def shape_step(self) -> np.ndarray:
        """The symmetric perturbation matrix v (elliptical scenarios)."""
        from .linalg import unvech1

        step = self.shape_step_vech1
        if step is None:
            if self.k != 2:
                raise ValueError("a shape step must be given explicitly for k != 2")
            step = DEFAULT_SHAPE_STEP
        return unvech1(np.asarray(step, dtype=float))

    def slant_vector(self) -> np.ndarray:
        if self.slant is not None:
            return np.asarray(self.slant, dtype=float)
        if self.population == "skewnormal":
            return np.asarray(DEFAULT_SKEW_NORMAL_SLANT)
        return np.asarray(DEFAULT_SKEW_T_SLANT)


def skew_df(population: str) -> float:
    if population == "skewnormal":
        return math.inf
    if population.startswith("skewt:"):
        df = float(population.split(":", 1)[1])
        if df <= 1:
            raise ValueError("skew-t populations need df > 1 for the centering to exist")
        return df
    raise ValueError(f"not a skew population: {population!r}")


def skew_centering_factor(df: float) -> float:
    """E[|V|] for the latent standard variable; the exact centering constant."""
    if math.isinf(df):
        return math.sqrt(2.0 / math.pi)
    from scipy.special import gammaln

    return math.sqrt(df / math.pi) * math.exp(gammaln((df - 1.0) / 2.0) - gammaln(df / 2.0))


def elliptical_series_sample(
    model: RadialModel, scenario: Scenario, rng: np.random.Generator, m_values
) -> dict[int, np.ndarray]:
    """Spherical base draws pushed through I + m v, one array per m."""
    base = spherical_sample(model, scenario.n, rng)
    step = scenario.shape_step()
    eye = np.eye(scenario.k)
    return {m: base @ (eye + m * step) for m in m_values}


def skew_series_sample(
    scenario: Scenario, rng: np.random.Generator, m_values
) -> dict[int, np.ndarray]:
    """Sign-flip skew draws; base normals (and t divisors) shared across m."""
    n, k = scenario.n, scenario.k
    df = skew_df(scenario.population)
    slant = scenario.slant_vector()
    normals = rng.standard_normal((n, k + 1))
    if math.isinf(df):
        scale = None
    else:
        chisq = rng.chisquare(df, n)
        chisq[chisq == 0.0] = np.finfo(float).tiny
        scale = np.sqrt(df / chisq)
    out = {}
    for m in m_values:
        mv = m * slant
        delta = mv / math.sqrt(1.0 + mv @ mv)
        cov = np.eye(k + 1)
        cov[0, 1:] = delta
        cov[1:, 0] = delta
        latent = normals @ np.linalg.cholesky(cov).T
        if scale is not None:
            latent = latent * scale[:, None]
        signs = np.where(latent[:, 0] >= 0.0, 1.0, -1.0)
        center = skew_centering_factor(df) * delta
        out[m] = signs[:, None] * latent[:, 1:] - center
    return out


def generate_scenario_sample(scenario: Scenario, seed) -> np.ndarray:
    """One sample for a single scenario (its m-series sibling draws shared)."""
    rng = np.random.default_rng(seed)
    if scenario.is_skew:
        return skew_series_sample(scenario, rng, (scenario.m,))[scenario.m]
    model = parse_model(scenario.population, scenario.k)
    return elliptical_series_sample(model, scenario, rng, (scenario.m,))[scenario.m]


# ---------------------------------------------------------------------------
# Test battery
# ---------------------------------------------------------------------------

def _build_battery(tests, n: int, k: int):
    """Compile test selection strings into decomposition -> p-value callables."""
    battery = []
    for name in tests:
        if name == "john":
            battery.append((name, lambda d: engine.john_statistic(d).p_value))
        elif name == "gaussian":
            battery.append((name, lambda d: engine.gaussian_adjusted_statistic(d).p_value))
        elif name == "adjsign":
            battery.append((name, lambda d: engine.adjusted_sign_statistic(d).p_value))
        elif name.startswith("parametric:"):
            model = parse_model(name.split(":", 1)[1], k)
            battery.append(
                (name, lambda d, m=model: engine.parametric_radial_statistic(d, m).p_value)
            )
        else:
            score = parse_score(name, k)
            table = engine.score_table(score, n)
            ek2 = score.second_moment()

            def rank_p(d, table=table, ek2=ek2, k=k):
                q = engine.rank_statistic_value(table, ek2, d.ranks, d.signs)
                return engine.p_value(max(q, 0.0), k)

            battery.append((name, rank_p))
    return battery


# ---------------------------------------------------------------------------
# Study driver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StudyResult:
    """Rejection frequencies of a (scenario x test) grid."""

    scenarios: tuple[Scenario, ...]
    tests: tuple[str, ...]
    frequencies: np.ndarray
    replications: int
    alpha: float
    seed: int

    def __post_init__(self) -> None:
        freq = np.asarray(self.frequencies, dtype=float)
        if freq.shape != (len(self.scenarios), len(self.tests)):
            raise ValueError("frequency grid shape mismatch")
        freq = freq.copy()
        freq.flags.writeable = False
        object.__setattr__(self, "frequencies", freq)

    def frequency(self, population: str, m: int, test: str) -> float:
        for i, s in enumerate(self.scenarios):
            if s.population == population and s.m == m:
                return float(self.frequencies[i, self.tests.index(test)])
        raise KeyError(f"no scenario {population!r} with m={m} in this result")

    def half_width(self, frequency: float, z: float = 1.96) -> float:
        return z * math.sqrt(frequency * (1.0 - frequency) / self.replications)

    def to_json_dict(self) -> dict:
        return {
            "replications": self.replications,
            "alpha": self.alpha,
            "seed": self.seed,
            "tests": list(self.tests),
            "cells": [
                {
                    "population": s.population,
                    "m": s.m,
                    "n": s.n,
                    "k": s.k,
                    "estimate_center": s.estimate_center,
                    "frequencies": {
                        t: float(self.frequencies[i, j]) for j, t in enumerate(self.tests)
                    },
                }
                for i, s in enumerate(self.scenarios)
            ],
        }

    def to_csv(self) -> str:
        lines = ["population,m,n,k,test,frequency,half_width"]
        for i, s in enumerate(self.scenarios):
            for j, t in enumerate(self.tests):
                f = float(self.frequencies[i, j])
                lines.append(
                    f"{s.population},{s.m},{s.n},{s.k},{t},{f:.6f},{self.half_width(f):.6f}"
                )
        return "\n".join(lines) + "\n"


def _group_key(s: Scenario):
    return (s.population, s.n, s.k, s.shape_step_vech1, s.slant, s.estimate_center)


def _run_group(args):
    """Worker: rejection counts for one scenario group over a replication range."""
    (scenarios, tests, rep_range, seed, alpha, group_index) = args
    first = scenarios[0]
    m_values = tuple(s.m for s in scenarios)
    battery = _build_battery(tests, first.n, first.k)
    model = None if first.is_skew else parse_model(first.population, first.k)
    theta = None if first.estimate_center else np.zeros(first.k)
    counts = np.zeros((len(scenarios), len(battery)), dtype=np.int64)
    for r in rep_range:
        rng = np.random.default_rng(np.random.SeedSequence([seed, group_index, r]))
        if first.is_skew:
            series = skew_series_sample(first, rng, m_values)
        else:
            series = elliptical_series_sample(model, first, rng, m_values)
        for i, s in enumerate(scenarios):
            d = decompose(series[s.m], theta)
            for j, (_, test) in enumerate(battery):
                if test(d) < alpha:
                    counts[i, j] += 1
    return counts


def run_study(
    scenarios,
    tests,
    replications: int,
    *,
    alpha: float = 0.05,
    seed: int = 0,
    parallelism: int = 1,
) -> StudyResult:
    """Rejection frequencies over seeded replications.

    Scenarios differing only in m are grouped so their base draws are shared;
    the result is independent of ``parallelism``.
    """
    if replications < 100:
        raise ValueError("at least 100 replications are required")
    scenarios = tuple(scenarios)
    tests = tuple(tests)
    groups: dict = {}
    for s in scenarios:
        groups.setdefault(_group_key(s), []).append(s)
    group_list = [tuple(v) for v in groups.values()]

    counts = {id(g): np.zeros((len(g), len(tests)), dtype=np.int64) for g in group_list}
    jobs = []
    workers = max(1, int(parallelism))
    chunk = max(50, replications // (4 * workers) + 1)
    for gi, group in enumerate(group_list):
        for start in range(0, replications, chunk):
            rep_range = range(start, min(start + chunk, replications))
            jobs.append((group, tests, rep_range, seed, alpha, gi))

    if workers == 1:
        results = map(_run_group, jobs)
        for job, res in zip(jobs, results):
            counts[id(job[0])] += res
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for job, res in zip(jobs, pool.map(_run_group, jobs, chunksize=1)):
                counts[id(job[0])] += res

    freq = np.zeros((len(scenarios), len(tests)))
    for group in group_list:
        block = counts[id(group)] / replications
        for row, s in enumerate(group):
            freq[scenarios.index(s)] = block[row]
    return StudyResult(
        scenarios=scenarios,
        tests=tests,
        frequencies=freq,
        replications=replications,
        alpha=alpha,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Table rendering
# ---------------------------------------------------------------------------

def _are_annotation(population: str, test: str, k: int) -> str:
    """Efficiency column of the study tables: value, 'ND' or '?'.

    'ND' marks comparisons involving an invalid test (John's away from the
    Gaussian, anything under infinite fourth moments); '?' marks cells with
    no tabulated value (skew populations, non-rank rows).
    """
    from . import efficiency
    from .radial import GaussianRadial, InfiniteMomentError

    if population.startswith("skew"):
        return "?"
    model = parse_model(population, k)
    try:
        model.kurtosis()
    except InfiniteMomentError:
        return "ND"
    if test == "john":
        return "1.000" if isinstance(model, GaussianRadial) else "ND"
    if test == "gaussian":
        return "1.000"
    if test == "adjsign" or test.startswith("parametric:"):
        return "?"
    return f"{efficiency.are(parse_score(test, k), model):.3f}"


def emit_table(result: StudyResult, layout: str = "generic") -> str:
    """Aligned-text table: rows are tests, columns m, blocks populations."""
    present = {s.population: sorted(x.m for x in result.scenarios if x.population == s.population)
               for s in result.scenarios}
    if layout == "table3":
        populations, tests = TABLE3_POPULATIONS, TABLE_TESTS
        wanted = {pop: [0, 1, 2, 3] for pop in populations}
    elif layout == "table4":
        populations, tests = TABLE4_POPULATIONS, TABLE_TESTS
        wanted = {pop: [0, 1, 2, 3] for pop in populations}
    elif layout == "generic":
        populations = tuple(dict.fromkeys(s.population for s in result.scenarios))
        tests = result.tests
        wanted = present
    else:
        raise ValueError(f"unknown layout {layout!r}")

    missing = [
        f"{pop} m={m}"
        for pop in populations
        for m in wanted.get(pop, [])
        if m not in present.get(pop, [])
    ] + [t for t in tests if t not in result.tests]
    if not result.scenarios:
        missing = ["everything (empty result)"]
    if missing:
        raise ValueError("result is missing required cells: " + ", ".join(missing))

    k = result.scenarios[0].k
    width = 10
    lines = []
    for pop in populations:
        m_values = wanted[pop]
        lines.append(f"-- population {pop} "
                     f"(n={next(s.n for s in result.scenarios if s.population == pop)}, "
                     f"N={result.replications}, alpha={result.alpha:g})")
        lines.append("test".ljust(12)
                     + "".join(f"m={m}".rjust(width) for m in m_values)
                     + "ARE".rjust(width))
        for t in tests:
            row = t.ljust(12)
            for m in m_values:
                row += f"{result.frequency(pop, m, t):.4f}".rjust(width)
            row += _are_annotation(pop, t, k).rjust(width)
            lines.append(row)
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Study configuration files
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StudyConfig:
    """Parsed study configuration (see the bundled *.cfg examples)."""

    populations: tuple[str, ...]
    m_values: tuple[int, ...]
    tests: tuple[str, ...]
    n: int
    replications: int
    k: int = 2
    alpha: float = 0.05
    seed: int = 1
    parallelism: int = 1
    estimate_center: bool = False
    shape_step: tuple[float, ...] = DEFAULT_SHAPE_STEP
    layout: str = "generic"

    def scenarios(self) -> tuple[Scenario, ...]:
        out = []
        for pop in self.populations:
            for m in self.m_values:
                out.append(
                    Scenario(
                        population=pop,
                        m=m,
                        n=self.n,
                        k=self.k,
                        shape_step_vech1=None if pop.startswith("skew") else self.shape_step,
                        estimate_center=self.estimate_center,
                    )
                )
        return tuple(out)

    def full_scale(self) -> "StudyConfig":
        return replace(self, n=500, replications=2500)


class StudyConfigError(ValueError):
    """Malformed study configuration file."""


def parse_study_config(text: str) -> StudyConfig:
    """Parse the plain key = value study format; '#' starts a comment."""
    fields: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise StudyConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            _parse_config_field(fields, key, value)
        except StudyConfigError:
            raise
        except Exception as exc:
            raise StudyConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    for required in ("populations", "tests", "n", "replications"):
        if required not in fields:
            raise StudyConfigError(f"missing required key {required!r}")
    fields.setdefault("m_values", (0, 1, 2, 3))
    return StudyConfig(**fields)


def _parse_config_field(fields: dict, key: str, value: str) -> None:
    if key == "populations":
        fields["populations"] = tuple(v.strip() for v in value.split(",") if v.strip())
    elif key == "tests":
        fields["tests"] = tuple(v.strip() for v in value.split(",") if v.strip())
    elif key == "m":
        fields["m_values"] = tuple(int(v) for v in value.split(","))
    elif key in ("n", "replications", "k", "seed", "parallelism"):
        fields[key] = int(value)
    elif key == "alpha":
        fields[key] = float(value)
    elif key == "theta":
        if value not in ("specified", "estimate"):
            raise StudyConfigError("theta must be 'specified' or 'estimate'")
        fields["estimate_center"] = value == "estimate"
    elif key == "shape_step":
        fields["shape_step"] = tuple(float(v) for v in value.split(","))
    elif key == "layout":
        if value not in ("generic", "table3", "table4"):
            raise StudyConfigError("layout must be generic, table3 or table4")
        fields["layout"] = value
    else:
        raise StudyConfigError(f"unknown key {key!r}")


def write_study_outputs(result: StudyResult, layout: str, prefix: str) -> list[str]:
    """Write text, CSV and JSON renderings; returns the paths written."""
    paths = []
    text_path = f"{prefix}.txt"
    with open(text_path, "w") as fh:
        fh.write(emit_table(result, layout))
    paths.append(text_path)
    csv_path = f"{prefix}.csv"
    with open(csv_path, "w") as fh:
        fh.write(result.to_csv())
    paths.append(csv_path)
    json_path = f"{prefix}.json"
    with open(json_path, "w") as fh:
        json.dump(result.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(json_path)
    return paths
