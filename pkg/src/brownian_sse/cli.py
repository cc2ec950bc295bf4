"""Command-line drivers: single runs and the two damping experiments.

Every output file is a CSV whose first line is ``# `` followed by the JSON
run manifest (resolved configuration, seed and versions), then a header
row. Re-running with ``--config manifest.json`` reproduces the files.

Exit codes: 0 success, 2 configuration error, 3 simulation error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numba
import numpy as np
import scipy

from . import __version__
from .ensemble import EnsembleConfig, run_ensemble, steady_statistics
from .errors import BrownianSSEError, UnsupportedVariantError
from .fock import (
    FockSpace,
    coherent_state,
    fock_state,
    harmonic_hamiltonian,
    kerr_hamiltonian,
    pure_to_density,
    quadratures,
)
from .master_eq import MeModel, evolve, make_rhs, stationary_state
from .observables import ThermalSpec, boltzmann_distribution, thermal_geometric
from .sse import SseParams

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIMULATION = 3

ME_MODELS = ("lbme", "sbme", "pbme")
SSE_MODELS = {"sse": "brownian", "sse-printed": "brownian-printed", "joint-measurement": "joint"}
HAMILTONIANS = ("harmonic", "kerr")
FIG2_GAMMAS = (0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2, 6.4)
OBSERVABLES = ("mean_n", "mean_n2", "mean_x", "mean_p", "var_x", "var_p", "cov_xp")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment description; defaults are the harmonic damping run.

    ``burn_in`` of ``None`` resolves to ten relaxation times ``20 / gamma``
    (capped below ``t_final``). ``k`` is only read by the joint-measurement
    model and defaults to ``gamma * n_t / 2``.
    """

    model: str = "lbme"
    hamiltonian: str = "harmonic"
    omega: float = 2 * math.pi
    gamma: float = 4.0
    n_t: float = 1.0
    dt: float = 1e-4
    t_final: float = 10.0
    burn_in: Optional[float] = None
    dim: int = 30
    n_traj: int = 2000
    seed: int = 0
    initial: str = "fock:0"
    record_stride: float = 0.01
    output_path: str = "out"
    k: Optional[float] = None
    refine_tol: float = 0.1
    workers: int = 1

    def resolved(self) -> "ExperimentConfig":
        cfg = self
        if cfg.burn_in is None:
            b = 20.0 / cfg.gamma if cfg.gamma > 0 else 0.0
            cfg = replace(cfg, burn_in=min(b, 0.5 * cfg.t_final))
        if cfg.k is None and cfg.model == "joint-measurement":
            cfg = replace(cfg, k=cfg.gamma * cfg.n_t / 2)
        return cfg

    def validate(self) -> "ExperimentConfig":
        """Check every field and the selected model's preconditions."""
        cfg = self.resolved()
        if cfg.model not in ME_MODELS and cfg.model not in SSE_MODELS:
            raise ConfigError(f"model: unknown {cfg.model!r}; choose from "
                              f"{', '.join(ME_MODELS + tuple(SSE_MODELS))}")
        if cfg.hamiltonian not in HAMILTONIANS:
            raise ConfigError(f"hamiltonian: unknown {cfg.hamiltonian!r}; choose harmonic or kerr")
        for name in ("omega", "dt", "t_final", "record_stride"):
            v = getattr(cfg, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name}: must be a positive number, got {v!r}")
        for name in ("gamma", "n_t"):
            v = getattr(cfg, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name}: must be a non-negative number, got {v!r}")
        if cfg.dim < 2:
            raise ConfigError(f"dim: must be at least 2, got {cfg.dim}")
        if cfg.n_traj < 1:
            raise ConfigError(f"n_traj: must be at least 1, got {cfg.n_traj}")
        if not 0 <= cfg.seed < 2**64:
            raise ConfigError(f"seed: must lie in [0, 2**64), got {cfg.seed}")
        if not 0 <= cfg.burn_in < cfg.t_final:
            raise ConfigError(f"burn_in: must lie in [0, t_final), got {cfg.burn_in}")
        if cfg.dt > cfg.record_stride or abs(cfg.record_stride / cfg.dt - round(cfg.record_stride / cfg.dt)) > 1e-6:
            raise ConfigError("record_stride: must be a multiple of dt")
        if cfg.workers < 1:
            raise ConfigError("workers: must be at least 1")
        try:
            cfg.initial_state()
            if cfg.model in ME_MODELS:
                cfg.me_model()
            else:
                cfg.sse_params()
        except ConfigError:
            raise
        except UnsupportedVariantError as e:
            raise ConfigError(f"model: {e}") from e
        except (ValueError, IndexError, BrownianSSEError) as e:
            raise ConfigError(str(e)) from e
        return cfg

    @property
    def space(self) -> FockSpace:
        return FockSpace(self.dim)

    def hamiltonian_operator(self):
        build = harmonic_hamiltonian if self.hamiltonian == "harmonic" else kerr_hamiltonian
        return build(self.space, self.omega)

    def initial_state(self):
        kind, _, arg = self.initial.partition(":")
        try:
            if kind == "fock":
                return fock_state(self.space, int(arg or 0))
            if kind == "coherent":
                re, _, im = arg.partition(",")
                return coherent_state(self.space, complex(float(re), float(im or 0)))
        except ValueError as e:
            raise ConfigError(f"initial: cannot parse {self.initial!r} ({e})") from e
        raise ConfigError(f"initial: expected fock:n or coherent:re,im, got {self.initial!r}")

    def me_model(self) -> MeModel:
        return MeModel(self.model, self.hamiltonian_operator(), gamma=self.gamma, n_t=self.n_t)

    def sse_params(self) -> SseParams:
        model = SSE_MODELS[self.model]
        h = self.hamiltonian_operator()
        if model == "joint":
            return SseParams.joint_measurement(self.k, h, self.dt, refine_tol=self.refine_tol)
        return SseParams.brownian(self.gamma, self.n_t, h, self.dt, model=model,
                                  refine_tol=self.refine_tol)

    def ensemble_config(self) -> EnsembleConfig:
        return EnsembleConfig(self.sse_params(), self.initial_state(), self.n_traj, self.t_final,
                              self.burn_in, self.record_stride, self.seed, workers=self.workers)


FIELD_NAMES = {f.name for f in fields(ExperimentConfig)}
# command-line spelling -> config field
FLAG_FIELDS = {
    "model": "model", "hamiltonian": "hamiltonian", "omega": "omega", "gamma": "gamma",
    "ntherm": "n_t", "dim": "dim", "dt": "dt", "t_final": "t_final", "burn_in": "burn_in",
    "trajectories": "n_traj", "seed": "seed", "initial": "initial", "out": "output_path",
    "record_stride": "record_stride", "k": "k", "refine_tol": "refine_tol", "workers": "workers",
}


def load_config_file(path: str) -> dict:
    """Flat JSON object, or a manifest whose ``config`` entry is one."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"config: cannot read {path}: {e}") from e
    if isinstance(data, dict) and isinstance(data.get("config"), dict):
        data = data["config"]
    if not isinstance(data, dict):
        raise ConfigError("config: expected a JSON object")
    unknown = set(data) - FIELD_NAMES
    if unknown:
        raise ConfigError(f"config: unknown keys {sorted(unknown)}")
    return data


def build_config(args: argparse.Namespace, base: Optional[dict] = None) -> ExperimentConfig:
    values = dict(base or {})
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for flag, name in FLAG_FIELDS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[name] = v
    try:
        for name in ("dim", "n_traj", "seed", "workers"):
            if name in values:
                if float(values[name]) != int(values[name]):
                    raise ValueError(f"{name} must be an integer")
                values[name] = int(values[name])
        cfg = ExperimentConfig(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"config: {e}") from e
    return cfg.validate()


# ---------------------------------------------------------------------------
# output


def manifest(command: str, cfg: ExperimentConfig, **extra) -> dict:
    m = {
        "command": command,
        "config": asdict(cfg),
        "versions": {
            "brownian_sse": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "numba": numba.__version__,
        },
    }
    m.update(extra)
    return m


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_table(path: Path, header, rows, meta: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_manifest(out: Path, meta: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")


# ---------------------------------------------------------------------------
# experiment runners


def run_master_equation(cfg: ExperimentConfig):
    """RK4 evolution; returns (header, rows) of the time series."""
    model = cfg.me_model()
    rho0 = pure_to_density(cfg.initial_state())
    d = cfg.dim
    levels = np.arange(d)
    x, p = (q.matrix for q in quadratures(cfg.space))
    rows = []

    def observe(t, rho):
        pops = np.diag(rho).real
        mx = np.einsum("ij,ji->", x, rho).real
        mp = np.einsum("ij,ji->", p, rho).real
        xx = np.einsum("ij,jk,ki->", x, x, rho).real
        pp = np.einsum("ij,jk,ki->", p, p, rho).real
        xp = np.einsum("ij,jk,ki->", x, p, rho)
        herm = 0.5 * (rho + rho.conj().T)
        rows.append((t, pops @ levels, pops @ levels**2, mx, mp, xx - mx**2, pp - mp**2,
                     xp.real - mx * mp, np.linalg.eigvalsh(herm)[0]))

    stride = int(round(cfg.record_stride / cfg.dt))
    evolve(rho0, make_rhs(model), cfg.dt, cfg.t_final, observe, record_every=stride)
    return ("t",) + OBSERVABLES + ("min_eigenvalue",), rows


def timeseries_rows(result):
    header = ["t"]
    for k in OBSERVABLES:
        header += [k, f"{k}_std_err"]
    cols = [result.time_grid]
    for k in OBSERVABLES:
        cols += [result.mean_observables[k], result.std_errors[k]]
    return header, list(zip(*cols))


def thermal_populations(cfg: ExperimentConfig) -> np.ndarray:
    if cfg.n_t == 0:
        p = np.zeros(cfg.dim)
        p[0] = 1.0
        return p
    if cfg.hamiltonian == "harmonic":
        return thermal_geometric(cfg.n_t, cfg.dim).populations
    return boltzmann_distribution(ThermalSpec.kerr(cfg.n_t, cfg.omega), cfg.dim)


def run_stochastic(cfg: ExperimentConfig, out: Path, meta: dict, prefix: str = ""):
    result = run_ensemble(cfg.ensemble_config())
    header, rows = timeseries_rows(result)
    write_table(out / f"{prefix}timeseries.csv", header, rows, meta)
    stats = steady_statistics(result)
    se = stats.std_errors
    steady_rows = [
        ("mean_n", stats.mean_n, se["mean_n"]),
        ("mean_n2", stats.mean_n2, se["mean_n2"]),
        ("var_mean_x", stats.variances_of_means[0], se["variances_of_means"][0]),
        ("var_mean_p", stats.variances_of_means[1], se["variances_of_means"][1]),
    ]
    write_table(out / f"{prefix}steady.csv", ("quantity", "value", "std_err"),
                steady_rows, meta)
    thermal = thermal_populations(cfg)
    write_table(out / f"{prefix}populations.csv", ("n", "p_sse", "std_err", "p_thermal"),
                [(n, stats.populations[n], se["populations"][n], thermal[n])
                 for n in range(cfg.dim)], meta)
    return result, stats


def cmd_run(cfg: ExperimentConfig) -> str:
    out = Path(cfg.output_path)
    meta = manifest("run", cfg)
    write_manifest(out, meta)
    if cfg.model in ME_MODELS:
        header, rows = run_master_equation(cfg)
        write_table(out / "timeseries.csv", header, rows, meta)
        return f"final mean_n = {rows[-1][1]:.6f}"
    _, stats = run_stochastic(cfg, out, meta)
    return f"steady mean_n = {stats.mean_n:.4f} +/- {stats.std_errors['mean_n']:.4f}"


def cmd_fig1(cfg: ExperimentConfig) -> str:
    """LBME, PBME and SSE mean phonon number for the harmonic oscillator."""
    out = Path(cfg.output_path)
    meta = manifest("fig1", cfg)
    write_manifest(out, meta)
    lines = []
    for model in ("lbme", "pbme"):
        mcfg = replace(cfg, model=model)
        header, rows = run_master_equation(mcfg)
        write_table(out / f"fig1_{model}.csv", ("t", "mean_n"),
                    [(r[0], r[1]) for r in rows], meta)
        lines.append(f"{model} final mean_n = {rows[-1][1]:.6f}")
    scfg = replace(cfg, model="sse")
    result = run_ensemble(scfg.ensemble_config())
    write_table(out / "fig1_sse.csv", ("t", "mean_n", "std_err"),
                zip(result.time_grid, result.mean_observables["mean_n"],
                    result.std_errors["mean_n"]), meta)
    stats = steady_statistics(result)
    lines.append(f"sse steady mean_n = {stats.mean_n:.4f} +/- {stats.std_errors['mean_n']:.4f}")
    return "\n".join(lines)


def fig2_dt(gamma: float, dt: float) -> float:
    """Step for the sweep: ``dt`` capped at ``1.6e-3 / gamma`` periods."""
    return min(dt, 1.6e-3 / gamma)


def cmd_fig2(cfg: ExperimentConfig, gammas) -> str:
    """Kerr-oscillator steady ``<n^2>`` and populations against ``gamma``."""
    out = Path(cfg.output_path)
    meta = manifest("fig2", cfg, gammas=list(gammas))
    write_manifest(out, meta)
    thermal = boltzmann_distribution(ThermalSpec.kerr(cfg.n_t, cfg.omega), cfg.dim)
    levels = np.arange(cfg.dim)
    n2_thermal = float(thermal @ levels**2)
    sweep, lines = [], []
    for g in gammas:
        gcfg = replace(cfg, model="sse", gamma=g, dt=fig2_dt(g, cfg.dt)).validate()
        lbme = stationary_state(replace(gcfg, model="lbme").me_model())
        p_lbme = lbme.rho.populations
        result = run_ensemble(gcfg.ensemble_config())
        stats = steady_statistics(result)
        sweep.append((g, stats.mean_n2, stats.std_errors["mean_n2"], float(p_lbme @ levels**2),
                      n2_thermal))
        se = stats.std_errors["populations"]
        write_table(out / f"fig2_populations_gamma_{g:g}.csv",
                    ("n", "p_sse", "std_err", "p_thermal", "p_lbme"),
                    [(n, stats.populations[n], se[n], thermal[n], p_lbme[n]) for n in levels],
                    meta)
        lines.append(f"gamma={g:g}: mean_n2 = {stats.mean_n2:.4f} +/- {stats.std_errors['mean_n2']:.4f}")
    write_table(out / "fig2_sweep.csv",
                ("gamma", "mean_n2_sse", "std_err", "mean_n2_lbme", "mean_n2_thermal"), sweep, meta)
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# argument parsing

FIG2_DEFAULTS = dict(hamiltonian="kerr", dim=40, dt=1e-3, t_final=120.0, burn_in=20.0,
                     n_traj=1000, record_stride=0.1, output_path="fig2")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file of config values (flags override it)")
    p.add_argument("--model", help="lbme, sbme, pbme, sse, sse-printed or joint-measurement")
    p.add_argument("--hamiltonian", help="harmonic or kerr")
    p.add_argument("--omega", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--ntherm", type=float, help="thermal occupation n_T")
    p.add_argument("--dim", type=int, help="Fock-space dimension")
    p.add_argument("--dt", type=float, help="time step in periods")
    p.add_argument("--t-final", dest="t_final", type=float)
    p.add_argument("--burn-in", dest="burn_in", type=float)
    p.add_argument("--trajectories", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--initial", help="fock:n or coherent:re,im")
    p.add_argument("--out", help="output directory")
    p.add_argument("--record-stride", dest="record_stride", type=float)
    p.add_argument("--k", type=float, help="measurement strength (joint-measurement only)")
    p.add_argument("--refine-tol", dest="refine_tol", type=float)
    p.add_argument("--workers", type=int)


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors (exit 2) and must not print twice
    def error(self, message):
        raise _ArgumentError(message)


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="brownian-sse",
        description="Quantum Brownian motion: master equations and stochastic trajectories.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in [
        ("run", "run one experiment and write its tables"),
        ("fig1", "harmonic oscillator: LBME, PBME and SSE mean phonon number"),
        ("fig2", "Kerr oscillator: steady <n^2> and populations across damping rates"),
        ("validate-config", "resolve and check a configuration, print it as JSON"),
    ]:
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        if name == "fig2":
            p.add_argument("--gammas", help="comma-separated damping rates")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except _ArgumentError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "fig2":
            gammas = FIG2_GAMMAS
            if args.gammas:
                try:
                    gammas = tuple(float(g) for g in args.gammas.split(","))
                except ValueError as e:
                    raise ConfigError(f"gammas: {e}") from e
            if not gammas or min(gammas) <= 0:
                raise ConfigError("gammas: need at least one positive damping rate")
            cfg = build_config(args, base=dict(FIG2_DEFAULTS, model="sse", gamma=gammas[0]))
        else:
            base = {"model": "sse"} if args.command == "fig1" else None
            cfg = build_config(args, base=base)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "validate-config":
            print(json.dumps(asdict(cfg), indent=2, sort_keys=True))
            return EXIT_OK
        if args.command == "run":
            msg = cmd_run(cfg)
        elif args.command == "fig1":
            msg = cmd_fig1(cfg)
        else:
            msg = cmd_fig2(cfg, gammas)
    except BrownianSSEError as e:
        print(f"simulation error: {e}", file=sys.stderr)
        return EXIT_SIMULATION
    print(msg)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
