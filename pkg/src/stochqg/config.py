"""TOML configuration: one file describes a whole experiment.

Recognized tables and keys (unknown names are rejected so typos fail fast):

[physical]     nu, beta, f0, g, h1, h2, rho0, rho1, rho2, L, tau0
[grid]         n; optional dealias_fraction
[noise]        sigma, gamma, k, base_seed; optional spectrum_file (CSV "j1,j2,q")
[forcing]      optional mode ("sinusoid" | "zero"), tau0 override
[run]          dt, T; optional formulation, output_every, member, refine,
               cfl_safety, overflow_guard, audit_energy
[initial]      optional kind ("random" | "zero" | "snapshot"), amplitude,
               jmin, jmax, seed, path (QG2S snapshot with two fields)
[functionals]  optional family ("modes" | "nodes"), count
[comparison]   optional perturbation, perturbation_seed, window
[ensemble]     optional members, workers, v_threshold
[radius]       optional paths, horizon, dtau
[conditions]   optional deterministic_limit, family, target_epsilon, samples,
               radius_paths, radius_factor, horizon, dtau

Only the tables a subcommand needs are required; extras are allowed but still
schema-checked.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dynamics import ForcingSpec, TrajectoryConfig
from .errors import ConfigurationError
from .noise import NoiseSpec, spectrum_from_csv
from .spectral import Grid, field_from_coeffs, random_band_limited, read_snapshot, zero_field
from .twolayer import DerivedParams, LayerState, derive_params, params_from_mapping


def load_toml(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"config file not found: {p}")
    try:
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config file {p} is not valid TOML: {exc}") from exc


_SCHEMAS = {
    "physical": {"nu", "beta", "f0", "g", "h1", "h2", "rho0", "rho1", "rho2", "L", "tau0"},
    "grid": {"n", "dealias_fraction"},
    "noise": {"sigma", "gamma", "k", "base_seed", "spectrum_file"},
    "forcing": {"mode", "tau0"},
    "run": {
        "dt",
        "T",
        "formulation",
        "output_every",
        "member",
        "refine",
        "cfl_safety",
        "overflow_guard",
        "audit_energy",
    },
    "initial": {"kind", "amplitude", "jmin", "jmax", "seed", "path"},
    "functionals": {"family", "count"},
    "comparison": {"perturbation", "perturbation_seed", "window"},
    "ensemble": {"members", "workers", "v_threshold"},
    "radius": {"paths", "horizon", "dtau"},
    "conditions": {
        "deterministic_limit",
        "family",
        "target_epsilon",
        "samples",
        "radius_paths",
        "radius_factor",
        "horizon",
        "dtau",
    },
}


def validate_document(doc: dict) -> None:
    for name, table in doc.items():
        if name not in _SCHEMAS:
            raise ConfigurationError(f"unknown config table [{name}]")
        if not isinstance(table, dict):
            raise ConfigurationError(f"[{name}] must be a table")
        unknown = sorted(set(table) - _SCHEMAS[name])
        if unknown:
            raise ConfigurationError(f"unknown keys in [{name}]: {', '.join(unknown)}")


def _table(doc: dict, name: str, required: bool = True) -> dict:
    if name not in doc:
        if required:
            raise ConfigurationError(f"config needs a [{name}] table")
        return {}
    return doc[name]


def _get(table: dict, name: str, key: str, default=None, required: bool = False):
    if key in table:
        return table[key]
    if required:
        raise ConfigurationError(f"[{name}] needs key {key!r}")
    return default


@dataclass
class ExperimentSetup:
    """Everything a subcommand shares: parameters, grid, noise, forcing."""

    doc: dict
    dp: DerivedParams
    grid: Grid
    noise: NoiseSpec
    forcing: ForcingSpec


def build_setup(doc: dict, config_dir: Path | None = None) -> ExperimentSetup:
    validate_document(doc)
    dp = derive_params(params_from_mapping(_table(doc, "physical")))

    g = _table(doc, "grid")
    n = int(_get(g, "grid", "n", required=True))
    frac = float(_get(g, "grid", "dealias_fraction", 2.0 / 3.0))
    grid = Grid(n, dp.raw.L, dealias_fraction=frac)

    nz = _table(doc, "noise")
    explicit = None
    spectrum_file = _get(nz, "noise", "spectrum_file")
    if spectrum_file is not None:
        sp = Path(spectrum_file)
        if not sp.is_absolute() and config_dir is not None:
            sp = config_dir / sp
        explicit = spectrum_from_csv(sp)
    noise = NoiseSpec(
        sigma=float(_get(nz, "noise", "sigma", required=True)),
        gamma=float(_get(nz, "noise", "gamma", 3.0)),
        k=float(_get(nz, "noise", "k", required=True)),
        base_seed=int(_get(nz, "noise", "base_seed", 0)),
        explicit=explicit,
    )

    fc = _table(doc, "forcing", required=False)
    mode = _get(fc, "forcing", "mode", "sinusoid")
    if mode == "custom":
        raise ConfigurationError("custom forcing is API-only; configs use sinusoid or zero")
    tau0 = _get(fc, "forcing", "tau0")
    forcing = ForcingSpec(mode=mode, tau0=None if tau0 is None else float(tau0))

    return ExperimentSetup(doc=doc, dp=dp, grid=grid, noise=noise, forcing=forcing)


def build_trajectory_config(setup: ExperimentSetup) -> TrajectoryConfig:
    run = _table(setup.doc, "run")
    return TrajectoryConfig(
        grid=setup.grid,
        dp=setup.dp,
        noise=setup.noise,
        forcing=setup.forcing,
        dt=float(_get(run, "run", "dt", required=True)),
        T=float(_get(run, "run", "T", required=True)),
        formulation=_get(run, "run", "formulation", "transformed"),
        output_every=int(_get(run, "run", "output_every", 1)),
        member=int(_get(run, "run", "member", 0)),
        refine=int(_get(run, "run", "refine", 1)),
        cfl_safety=float(_get(run, "run", "cfl_safety", 0.5)),
        overflow_guard=float(_get(run, "run", "overflow_guard", 1e30)),
        audit_energy=bool(_get(run, "run", "audit_energy", False)),
    )


def build_initial_state(setup: ExperimentSetup, config_dir: Path | None = None) -> LayerState:
    init = _table(setup.doc, "initial", required=False)
    kind = _get(init, "initial", "kind", "zero")
    grid = setup.grid
    if kind == "zero":
        return LayerState(zero_field(grid), zero_field(grid))
    if kind == "random":
        amp = float(_get(init, "initial", "amplitude", 1.0))
        jmin = int(_get(init, "initial", "jmin", 1))
        jmax = _get(init, "initial", "jmax")
        seed = int(_get(init, "initial", "seed", 2026))
        q1 = random_band_limited(
            grid, 2 * seed, amplitude=amp, jmin=jmin, jmax=None if jmax is None else int(jmax)
        )
        q2 = random_band_limited(
            grid, 2 * seed + 1, amplitude=amp, jmin=jmin, jmax=None if jmax is None else int(jmax)
        )
        return LayerState(q1, q2)
    if kind == "snapshot":
        path = _get(init, "initial", "path", required=True)
        sp = Path(path)
        if not sp.is_absolute() and config_dir is not None:
            sp = config_dir / sp
        fields = read_snapshot(sp)
        if len(fields) != 2:
            raise ConfigurationError(
                f"initial snapshot must hold exactly 2 fields, found {len(fields)}"
            )
        if fields[0].shape != (grid.n, grid.n):
            raise ConfigurationError(
                f"initial snapshot is {fields[0].shape[0]}^2 but the grid is {grid.n}^2"
            )
        from .twolayer import state_from_arrays

        return state_from_arrays(grid, fields[0], fields[1])
    raise ConfigurationError(f"unknown initial kind {kind!r}")


def build_functional_set(setup: ExperimentSetup):
    table = _table(setup.doc, "functionals", required=False)
    if not table:
        return None
    from .determining import build_modes_set, build_nodes_set

    family = _get(table, "functionals", "family", "modes")
    count = int(_get(table, "functionals", "count", required=True))
    if family == "modes":
        return build_modes_set(setup.grid, count)
    if family == "nodes":
        return build_nodes_set(setup.grid.length, count)
    raise ConfigurationError(f"unknown functional family {family!r}")
