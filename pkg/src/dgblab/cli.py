"""Configuration parsing, experiment orchestration, and stable result emission.

Configs are flat ``key = value`` lines with dotted namespaces and ``#``
comments; unknown keys are rejected.  Every run writes a ``manifest.json``
with the config echo and summary scalars, plus experiment-specific CSV/JSON
artifacts with 17-significant-digit floats, so reruns with the same config
and seed are byte-identical.

Exit codes: 0 success, 2 validation failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .control import (
    ControlProblem,
    decay_rate_predict,
    linear_control_gramian,
    nonlinear_control_global,
    observability_constant,
)
from .damping import DampingProfile, make_profile_bump, make_profile_global
from .dynamics import build_closed_loop, decay_fit, simulate_damped
from .errors import (
    BlowUpError,
    ConfigError,
    DegenerateGramianError,
    IllPosedHorizonError,
    ObservabilityFailureError,
    ProfileError,
    UncontrollableTruncationError,
)
from .spectral import SpectralField, constant_field, cosine_field, random_field
from .symbols import (
    ModelParams,
    build_symbols,
    gap_check,
    modulation_check,
    multiplicity_scan,
    resonance_check,
)

EXPERIMENTS = (
    "simulate",
    "stabilize",
    "control-linear",
    "control-nonlinear",
    "observability",
    "lemmas",
)

_NUMERICAL_ERRORS = (
    BlowUpError,
    DegenerateGramianError,
    IllPosedHorizonError,
    UncontrollableTruncationError,
    ObservabilityFailureError,
    ProfileError,
    np.linalg.LinAlgError,
)

# key -> (type, default); defaults of None mean "derived later"
_KEYS = {
    "experiment": (str, None),
    "seed": (int, 0),
    "out": (str, None),
    "params.alpha": (float, 1.0),
    "params.beta": (float, 1.0),
    "params.m": (float, 1.0),
    "params.r": (float, 0.5),
    "params.mu": (float, 0.0),
    "params.delta": (float, 1.0),
    "profile.kind": (str, "global"),
    "profile.a": (float, float(np.pi / 2)),
    "profile.b": (float, float(3 * np.pi / 2)),
    "profile.modes": (int, 64),
    "grid.n": (int, 128),
    "time.dt": (float, 1e-3),
    "time.t_final": (float, 1.0),
    "init.kind": (str, "cosine"),
    "init.mode": (int, 1),
    "init.amplitude": (float, 0.1),
    "init.mean": (float, 0.0),
    "init.decay": (float, 1.5),
    "record.every": (int, 10),
    "fit.t0": (float, None),
    "fit.t1": (float, None),
    "control.amplitude": (float, 1.0),
    "control.decay": (float, 1.5),
    "control.dt": (float, 1e-2),
    "control.u0_mode": (int, 1),
    "control.u0_amplitude": (float, 0.05),
    "control.u1_mode": (int, 2),
    "control.u1_amplitude": (float, 0.05),
    "lemmas.n_max": (int, 64),
    "lemmas.a_threshold": (int, 8),
    "lemmas.floor": (int, 8),
    "lemmas.tol": (float, 0.0),
}


@dataclass
class RunConfig:
    experiment: str
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment '{self.experiment}'")
        try:
            self.params = ModelParams(
                alpha=self["params.alpha"],
                beta=self["params.beta"],
                m=self["params.m"],
                r=self["params.r"],
                mu=self["params.mu"],
                delta=self["params.delta"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self["grid.n"] < 4:
            raise ConfigError("grid.n must be at least 4")
        if self["time.dt"] <= 0:
            raise ConfigError("time.dt must be positive")
        if self["time.t_final"] <= 0:
            raise ConfigError("time.t_final must be positive")
        if self["profile.kind"] not in ("global", "bump"):
            raise ConfigError("profile.kind must be 'global' or 'bump'")
        if self["init.kind"] not in ("cosine", "random"):
            raise ConfigError("init.kind must be 'cosine' or 'random'")
        if self["record.every"] < 1:
            raise ConfigError("record.every must be at least 1")

    def __getitem__(self, key: str):
        if key in self.raw:
            return self.raw[key]
        return _KEYS[key][1]

    def echo(self) -> dict:
        out = {"experiment": self.experiment}
        for key in sorted(self.raw):
            out[key] = self.raw[key]
        return out


def _parse_value(key: str, text: str):
    if key not in _KEYS:
        raise ConfigError(f"unknown key '{key}'")
    typ = _KEYS[key][0]
    try:
        if typ is int:
            return int(text)
        if typ is float:
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"key '{key}': cannot parse '{text}' as {typ.__name__}") from exc


def parse_config(text: str, experiment: str | None = None, overrides=()) -> RunConfig:
    """Parse a flat key-value document into a validated RunConfig.

    `overrides` are extra ``key=value`` strings applied after the document.
    The experiment may come from the document or the caller; when both are
    present they must agree.
    """
    raw: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got '{line}'")
        key, value = (part.strip() for part in line.split("=", 1))
        raw[key] = _parse_value(key, value)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        key, value = (part.strip() for part in item.split("=", 1))
        raw[key] = _parse_value(key, value)

    doc_experiment = raw.pop("experiment", None)
    if experiment is None:
        experiment = doc_experiment
    elif doc_experiment is not None and doc_experiment != experiment:
        raise ConfigError(
            f"config names experiment '{doc_experiment}' but '{experiment}' was requested"
        )
    if experiment is None:
        raise ConfigError("no experiment given (config key or subcommand)")
    return RunConfig(experiment=experiment, raw=raw)


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def _short_hash(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:12]


def _write_manifest(out_dir: Path, cfg: RunConfig, summary: dict, wall: float):
    echo = cfg.echo()
    manifest = {
        "version": __version__,
        "experiment": cfg.experiment,
        "run_id": _short_hash(echo),
        "config": echo,
        "summary": summary,
        "wall_time_s": wall,
    }
    tmp = out_dir / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, out_dir / "manifest.json")


def _build_profile(cfg: RunConfig) -> DampingProfile:
    if cfg["profile.kind"] == "global":
        return make_profile_global(cfg.params.delta)
    return make_profile_bump(
        cfg["profile.a"], cfg["profile.b"], cfg["profile.modes"], cfg.params.delta
    )


def _build_initial(cfg: RunConfig, rng: np.random.Generator) -> SpectralField:
    n = cfg["grid.n"]
    if cfg["init.kind"] == "cosine":
        u = cosine_field(n, cfg["init.mode"], cfg["init.amplitude"])
    else:
        u = random_field(n, rng, amplitude=cfg["init.amplitude"], decay=cfg["init.decay"])
    return u + constant_field(n, cfg["init.mean"])


def _write_profile_artifacts(out_dir: Path, profile: DampingProfile, n: int):
    (out_dir / "profile.json").write_text(
        json.dumps(profile.to_json_dict(), indent=2, sort_keys=True) + "\n"
    )
    ks = np.arange(1, 2 * n + 1)
    d = profile.d_symbol(ks)
    weight = (1.0 + ks.astype(float) ** 2) ** (0.5 * profile.delta)
    write_csv(
        out_dir / "dsymbol.csv",
        ["k", "d", "bracket_pow_delta", "ratio"],
        [(int(k), dv, w, dv / w) for k, dv, w in zip(ks, d, weight)],
    )


def _write_trajectory(out_dir: Path, record):
    resid = record.energy_residuals
    if resid is None:
        resid = np.full(record.times.size, np.nan)
    rows = zip(record.times, record.l2norms, record.means, resid)
    write_csv(out_dir / "trajectory.csv", ["t", "l2norm", "mean", "energy_residual"], rows)


def _spectral_dump(field_):
    return {
        "n_modes": field_.n_modes,
        "coeffs": [[float(c.real), float(c.imag)] for c in field_.coeffs],
    }


def _write_snapshots(out_dir: Path, record):
    data = {
        "initial": {"t": float(record.times[0]), "state": _spectral_dump(record.states[0])},
        "final": {"t": float(record.times[-1]), "state": _spectral_dump(record.states[-1])},
    }
    (out_dir / "snapshots.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _write_control(out_dir: Path, solution):
    rows = []
    for t, f in zip(solution.times, solution.fields):
        for k, c in zip(f.wavenumbers, f.coeffs):
            rows.append((t, int(k), c.real, c.imag))
    write_csv(out_dir / "control.csv", ["t", "k", "re", "im"], rows)


def _damped_run(cfg: RunConfig, out_dir: Path):
    rng = np.random.default_rng(cfg["seed"])
    profile = _build_profile(cfg)
    u0 = _build_initial(cfg, rng)
    record = simulate_damped(
        cfg.params,
        profile,
        u0,
        cfg["time.t_final"],
        cfg["time.dt"],
        record_every=cfg["record.every"],
    )
    _write_profile_artifacts(out_dir, profile, cfg["grid.n"])
    _write_trajectory(out_dir, record)
    _write_snapshots(out_dir, record)
    resid = record.energy_residuals
    max_resid = float(np.nanmax(np.abs(resid))) if resid is not None else float("nan")
    summary = {
        "profile_hash": _short_hash(profile.to_json_dict()),
        "final_norm": float(record.l2norms[-1]),
        "mean_drift": float(np.abs(record.means - record.means[0]).max()),
        "max_energy_residual": max_resid,
        "max_norm_increase": float(np.diff(record.l2norms).max(initial=-np.inf)),
    }
    return summary, record, profile


def _run_simulate(cfg: RunConfig, out_dir: Path) -> dict:
    summary, _, _ = _damped_run(cfg, out_dir)
    return summary


def _run_stabilize(cfg: RunConfig, out_dir: Path) -> dict:
    summary, record, profile = _damped_run(cfg, out_dir)
    t_final = cfg["time.t_final"]
    t0 = cfg["fit.t0"] if cfg["fit.t0"] is not None else t_final / 2.0
    t1 = cfg["fit.t1"] if cfg["fit.t1"] is not None else t_final
    fit = decay_fit(record, (t0, t1))
    table = build_symbols(cfg.params, cfg["grid.n"])
    loop = build_closed_loop(table, profile, cfg["grid.n"])
    summary.update(
        {
            "decay_rate": fit.rate,
            "prefactor": fit.prefactor,
            "r_squared": fit.r_squared,
            "spectral_abscissa": loop.spectral_abscissa,
            "rate_over_abscissa": fit.rate / (-loop.spectral_abscissa),
        }
    )
    return summary


def _run_control_linear(cfg: RunConfig, out_dir: Path) -> dict:
    rng = np.random.default_rng(cfg["seed"])
    profile = _build_profile(cfg)
    n = cfg["grid.n"]
    v0 = random_field(n, rng, amplitude=cfg["control.amplitude"], decay=cfg["control.decay"])
    v1 = random_field(n, rng, amplitude=cfg["control.amplitude"], decay=cfg["control.decay"])
    problem = ControlProblem(cfg.params, profile, n, cfg["time.t_final"], v0, v1)
    solution = linear_control_gramian(problem)
    _write_profile_artifacts(out_dir, profile, n)
    _write_control(out_dir, solution)
    return {
        "method": solution.method,
        "terminal_error": solution.terminal_error,
        "control_norm": solution.control_norm,
        "gramian_min_eig": solution.info["gramian_min_eig"],
        "gramian_cond": solution.info["gramian_cond"],
    }


def _run_control_nonlinear(cfg: RunConfig, out_dir: Path) -> dict:
    n = cfg["grid.n"]
    profile = make_profile_global(cfg.params.delta)
    u0 = cosine_field(n, cfg["control.u0_mode"], cfg["control.u0_amplitude"])
    u1 = cosine_field(n, cfg["control.u1_mode"], cfg["control.u1_amplitude"])
    problem = ControlProblem(cfg.params, profile, n, cfg["time.t_final"], u0, u1)
    solution = nonlinear_control_global(problem, dt=cfg["control.dt"])
    _write_profile_artifacts(out_dir, profile, n)
    _write_control(out_dir, solution)
    return {
        "method": solution.method,
        "terminal_error": solution.terminal_error,
        "control_norm": solution.control_norm,
    }


def _run_observability(cfg: RunConfig, out_dir: Path) -> dict:
    profile = _build_profile(cfg)
    n = cfg["grid.n"]
    table = build_symbols(cfg.params, n)
    report = observability_constant(table, profile, cfg["time.t_final"], n)
    rates = decay_rate_predict(table, profile, cfg["time.t_final"], n)
    _write_profile_artifacts(out_dir, profile, n)
    return {
        "c_obs": report.c_obs,
        "rho": report.rho,
        "gamma_gramian": rates.gamma_gramian,
        "gamma_abscissa": rates.gamma_abscissa,
    }


def _run_lemmas(cfg: RunConfig, out_dir: Path) -> dict:
    n = cfg["grid.n"]
    n_max = min(cfg["lemmas.n_max"], n)
    table = build_symbols(cfg.params, n)

    mult = multiplicity_scan(table, tol=cfg["lemmas.tol"])
    write_csv(
        out_dir / "lemma_multiplicity.csv",
        ["representative", "count", "eigenvalue", "members"],
        [
            (c.representative, c.count, c.eigenvalue, "|".join(str(m) for m in c.members))
            for c in mult.classes
        ],
    )

    gaps = gap_check(table)
    write_csv(
        out_dir / "lemma_gap.csv",
        ["k", "gap", "bound", "passed"],
        [(r.k, r.gap, r.bound, r.passed) for r in gaps.rows],
    )

    res_rows = []
    scan_sizes = [s for s in (8, 16, 32, 64, 128) if s <= n_max] or [n_max]
    for size in scan_sizes:
        rep = resonance_check(table, size, a_threshold=min(cfg["lemmas.a_threshold"], size))
        res_rows.append((rep.n_max, rep.a_threshold, rep.min_ratio) + rep.witness)
    write_csv(
        out_dir / "lemma_resonance.csv",
        ["n_max", "a_threshold", "min_ratio", "k1", "k2", "k3"],
        res_rows,
    )

    mod = modulation_check(table, n_max, floor=min(cfg["lemmas.floor"], n_max))
    write_csv(
        out_dir / "lemma_modulation.csv",
        ["n_max", "floor", "min_ratio", "k", "n"],
        [(mod.n_max, mod.floor, mod.min_ratio) + mod.witness],
    )

    final = resonance_check(table, n_max, a_threshold=min(cfg["lemmas.a_threshold"], n_max))
    return {
        "max_multiplicity": mult.max_multiplicity,
        "simple_beyond": mult.simple_beyond,
        "gap_threshold": -1 if gaps.threshold is None else gaps.threshold,
        "resonance_min_ratio": final.min_ratio,
        "resonance_witness_k1": final.witness[0],
        "resonance_witness_k2": final.witness[1],
        "resonance_witness_k3": final.witness[2],
        "modulation_min_ratio": mod.min_ratio,
        "modulation_witness_k": mod.witness[0],
        "modulation_witness_n": mod.witness[1],
    }


_RUNNERS = {
    "simulate": _run_simulate,
    "stabilize": _run_stabilize,
    "control-linear": _run_control_linear,
    "control-nonlinear": _run_control_nonlinear,
    "observability": _run_observability,
    "lemmas": _run_lemmas,
}


def run(cfg: RunConfig, out_dir=None) -> dict:
    """Execute one experiment; returns the manifest dict."""
    if out_dir is None:
        out_dir = cfg["out"] or f"runs/{cfg.experiment}"
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    summary = _RUNNERS[cfg.experiment](cfg, out_dir)
    wall = time.perf_counter() - started
    _write_manifest(out_dir, cfg, summary, wall)
    return {"experiment": cfg.experiment, "summary": summary, "out": str(out_dir)}


def _single_run(experiment, args) -> int:
    text = Path(args.config).read_text() if args.config else ""
    overrides = list(args.override or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    cfg = parse_config(text, experiment=experiment, overrides=overrides)
    result = run(cfg, out_dir=args.out)
    print(json.dumps(result["summary"], indent=2, sort_keys=True))
    return 0


def _sweep(args) -> int:
    base = Path(args.out or "runs/sweep")
    jobs = []
    for path in args.configs:
        text = Path(path).read_text()
        cfg = parse_config(text)
        jobs.append((Path(path).stem, cfg))

    def work(item):
        name, cfg = item
        run(cfg, out_dir=base / name)
        return name

    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        for name in pool.map(work, jobs):
            print(f"done: {name}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="dgblab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, help="override the seed")
        sp.add_argument("--override", action="append", metavar="KEY=VALUE")
    sweep = sub.add_parser("sweep", help="run several configs concurrently")
    sweep.add_argument("--configs", nargs="+", required=True)
    sweep.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    sweep.add_argument("--out", help="base output directory")

    args = parser.parse_args(argv)
    try:
        if args.command == "sweep":
            return _sweep(args)
        return _single_run(args.command, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
