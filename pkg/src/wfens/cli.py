"""``wfens`` command line: run or validate JSON-configured experiments.

Every run writes CSV tables and ``manifest.json`` into the output directory.
Exit codes: 0 ok, 2 configuration error, 3 numerical failure,
4 statistically inconclusive.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import pydantic

from . import __version__, lzmodel, thermo
from .config import (
    EXPERIMENTS,
    MANIFEST_KEY,
    ConfigError,
    ExperimentConfig,
    build_ensemble,
    build_hamiltonian,
    build_protocol,
    grid_values,
    load_config,
    lz_params,
    validate_domain,
)
from .dynamics import reverse_protocol
from .ensembles import EnsembleSpec, draw_states, estimate_partition
from .errors import DomainError, InsufficientOverlapError, IntegrationError
from .rng import substream
from .statespace import expectations
from .workstats import (
    REVERSE_STREAM_BASE,
    SamplingAborted,
    crooks_canonical_check,
    jarzynski_estimate,
    microcanonical_fr_check,
    sample_work_distribution,
    work_histogram,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_INCONCLUSIVE = 0, 2, 3, 4


class Inconclusive(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{float(v):.17g}"


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


class Run:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out = Path(cfg.output)
        self.files: list[str] = []
        self.diagnostics: dict = {}

    def csv(self, name: str, header, rows) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        write_csv(self.out / name, header, rows)
        self.files.append(name)


def _log_z_ratio(H, beta, lam0, lam1, cfg) -> tuple[float, float]:
    """``ln Z(lam1) - ln Z(lam0)`` (closed form for N = 2, Monte Carlo otherwise) and its error."""
    if H.dim == 2:
        return thermo.canonical_analytic(H, beta, lam1)[0] - thermo.canonical_analytic(H, beta, lam0)[0], 0.0
    z0 = estimate_partition(H, beta, lam0, cfg.M, substream(cfg.seed, 1 << 29))
    z1 = estimate_partition(H, beta, lam1, cfg.M, substream(cfg.seed, (1 << 29) + 1))
    return math.log(z1.value / z0.value), math.hypot(z0.stderr / z0.value, z1.stderr / z1.value)


def _hist_rows(hist):
    return zip(hist.edges[:-1], hist.edges[1:], hist.centers, hist.counts,
               hist.probabilities, hist.densities, hist.stderr)


HIST_HEADER = ["left", "right", "center", "count", "probability", "density", "stderr"]


def _check_chains(r: Run, *sample_sets) -> None:
    msgs = [w for ws in sample_sets for rep in ws.reports for w in rep.warnings]
    if msgs:
        r.diagnostics["chain_warnings"] = msgs
        raise Inconclusive(msgs[0])


def _bins(cfg):
    return None if cfg.bins == "fd" else float(cfg.bins)


def run_sample_ensemble(r: Run) -> None:
    cfg = r.cfg
    H = build_hamiltonian(cfg)
    protocol = build_protocol(cfg, H)
    spec = build_ensemble(cfg, H, protocol)
    S = draw_states(spec, cfg.M, cfg.seed, cfg.workers)
    lam = spec.lam if spec.lam is not None else np.zeros(H.n_params)
    h = expectations(S.states, H.matrix(lam))
    N = H.dim
    streams = np.arange(cfg.M) // 4096
    header = ["index", "stream", "h"] + [f"x{i}" for i in range(N)] + [f"p{i}" for i in range(N)]
    r.csv("results.csv", header,
          ([i, streams[i], h[i], *S.states[i].real, *S.states[i].imag] for i in range(cfg.M)))
    r.diagnostics.update(method=S.method, max_rhat=S.max_rhat, warnings=S.warnings,
                         mean_h=float(h.mean()), stderr_h=float(h.std(ddof=1) / math.sqrt(cfg.M)))
    if S.warnings:
        raise Inconclusive("; ".join(S.warnings))


def run_work_dist(r: Run) -> None:
    cfg = r.cfg
    H = build_hamiltonian(cfg)
    protocol = build_protocol(cfg, H)
    spec = build_ensemble(cfg, H, protocol)
    ws = sample_work_distribution(spec, protocol, cfg.M, cfg.steps, cfg.seed, cfg.workers, min_samples=1)
    r.csv("results.csv", ["index", "stream", "w"], zip(range(len(ws)), ws.streams, ws.values))
    r.csv("histogram.csv", HIST_HEADER, _hist_rows(work_histogram(ws.values, width=_bins(cfg))))
    r.diagnostics.update(renormalized=ws.renormalized, mean_w=float(ws.values.mean()))
    _check_chains(r, ws)


def run_jarzynski(r: Run) -> None:
    cfg = r.cfg
    H = build_hamiltonian(cfg)
    protocol = build_protocol(cfg, H)
    spec = build_ensemble(cfg, H, protocol)
    ws = sample_work_distribution(spec, protocol, cfg.M, cfg.steps, cfg.seed, cfg.workers, min_samples=1)
    est = jarzynski_estimate(ws, spec.beta, min_samples=1)
    dlogz, dlogz_err = _log_z_ratio(H, spec.beta, protocol.start, protocol.end, cfg)
    pred = math.exp(dlogz)
    err = math.hypot(est.stderr, pred * dlogz_err)
    z = (est.estimate - pred) / err if err > 0 else (0.0 if est.estimate == pred else math.inf)
    r.csv("results.csv",
          ["M", "beta", "estimate", "stderr", "delta_F", "delta_F_stderr", "predicted", "z_score"],
          [[cfg.M, spec.beta, est.estimate, est.stderr, est.delta_f, est.delta_f_stderr, pred, z]])
    r.diagnostics.update(z_score=z)
    _check_chains(r, ws)


def run_crooks(r: Run) -> None:
    cfg = r.cfg
    H = build_hamiltonian(cfg)
    protocol = build_protocol(cfg, H)
    beta = cfg.ensemble.beta if cfg.ensemble is not None and cfg.ensemble.beta else cfg.beta
    fwd = sample_work_distribution(EnsembleSpec.canonical(H, beta, protocol.start), protocol,
                                   cfg.M, cfg.steps, cfg.seed, cfg.workers, min_samples=1)
    rev = sample_work_distribution(EnsembleSpec.canonical(H, beta, protocol.end), reverse_protocol(protocol),
                                   cfg.M, cfg.steps, cfg.seed, cfg.workers, stream_offset=REVERSE_STREAM_BASE,
                                   min_samples=1)
    try:
        rep = crooks_canonical_check(fwd, rev, beta, width=_bins(cfg), min_count=cfg.min_count)
    except InsufficientOverlapError as exc:
        raise Inconclusive(str(exc)) from None
    dlogz, _ = _log_z_ratio(H, beta, protocol.start, protocol.end, cfg)
    r.csv("results.csv", ["center", "log_ratio", "variance"], zip(rep.centers, rep.log_ratio, rep.variance))
    r.csv("summary.csv",
          ["beta", "slope", "slope_stderr", "intercept", "intercept_stderr", "predicted_intercept", "bins_used", "chi2"],
          [[beta, rep.slope, rep.slope_stderr, rep.intercept, rep.intercept_stderr, dlogz, rep.bins_used, rep.chi2]])
    r.diagnostics.update(slope_z=(rep.slope - beta) / rep.slope_stderr,
                         intercept_z=(rep.intercept - dlogz) / rep.intercept_stderr)
    _check_chains(r, fwd, rev)


def run_micro_fr(r: Run) -> None:
    cfg = r.cfg
    H = build_hamiltonian(cfg)
    protocol = build_protocol(cfg, H)
    rep = microcanonical_fr_check(cfg.energy, protocol, cfg.w_targets, cfg.M, cfg.steps, cfg.seed,
                                  width=cfg.fr_width, workers=cfg.workers)
    r.csv("results.csv",
          ["w", "forward_count", "reverse_count", "ratio", "ratio_stderr", "predicted", "predicted_stderr",
           "z_score", "excluded"],
          ([row.target, row.forward_count, row.reverse_count, row.ratio, row.ratio_stderr, row.predicted,
            row.predicted_stderr, row.z_score, int(row.excluded)] for row in rep.rows))
    r.diagnostics.update(excluded=[row.target for row in rep.rows if row.excluded])
    if not rep.usable():
        raise Inconclusive("every target bin was empty on at least one side")


def run_thermo_scan(r: Run) -> None:
    cfg = r.cfg
    H = build_hamiltonian(cfg)
    lams = grid_values(cfg.lambda_grid).reshape(-1, H.n_params)
    rows = []
    if cfg.scan == "canonical":
        betas = grid_values(cfg.beta_grid)
        for i, beta in enumerate(betas):
            for j, lam in enumerate(lams):
                tp = thermo.canonical_state_functions(
                    H, beta, lam, M=None if H.dim == 2 else cfg.M, seed=cfg.seed + i * lams.shape[0] + j)
                rows.append([beta, *lam, tp.E_mean, *tp.force, tp.entropy, tp.log_z])
        header = ["beta", *_lam_names(H), "E", *_force_names(H), "S", "lnZ"]
        if H.dim == 2 and betas.size >= 3 and lams.shape[0] >= 3 and H.n_params == 1:
            chk = thermo.heat_theorem_canonical_check(H, betas, lams[:, 0])
            r.diagnostics.update(heat_residual=chk.max_residual, heat_refined=chk.refined_residual,
                                 heat_status=chk.status)
    else:
        energies = grid_values(cfg.energy_grid)
        for j, lam in enumerate(lams):
            for i, E in enumerate(energies):
                tp = thermo.microcanonical_state_functions(
                    H, E, lam, M=None if H.dim == 2 else cfg.M, seed=cfg.seed + j * energies.size + i)
                rows.append([E, *lam, *tp.force, tp.entropy, tp.omega, tp.integrating_factor])
        header = ["E", *_lam_names(H), *_force_names(H), "S", "Omega", "integrating_factor"]
    r.csv("results.csv", header, rows)


def _lam_names(H):
    return ["lambda"] if H.n_params == 1 else [f"lambda{i}" for i in range(H.n_params)]


def _force_names(H):
    return ["F"] if H.n_params == 1 else [f"F{i}" for i in range(H.n_params)]


def run_fig1a(r: Run) -> None:
    cfg = r.cfg
    table = lzmodel.fig1a_experiment(cfg.beta, cfg.model.delta, grid_values(cfg.lambda_grid))
    r.csv("results.csv", ["lambda", "F_wf", "F_std"], table)


def run_fig1b(r: Run) -> None:
    cfg = r.cfg
    res = lzmodel.fig1b_experiment(lz_params(cfg), cfg.M, cfg.steps, cfg.seed, cfg.workers,
                                   bar_width=cfg.bar_width, bins=_bins(cfg))
    r.csv("results.csv", HIST_HEADER, _hist_rows(res.bars))
    r.csv("fig1b_wf_density.csv", HIST_HEADER, _hist_rows(res.density))
    r.csv("fig1b_tms_atoms.csv", ["W", "probability"], res.atoms.atoms)
    r.csv("fig1b_jarzynski.csv", ["ensemble", "estimate", "stderr", "predicted"],
          [["wave_function", res.jarzynski.estimate, res.jarzynski.stderr, res.predicted_wf],
           ["standard", res.tms_exp_average, 0.0, res.predicted_std]])


RUNNERS = {
    "sample-ensemble": run_sample_ensemble,
    "work-dist": run_work_dist,
    "jarzynski": run_jarzynski,
    "crooks": run_crooks,
    "micro-fr": run_micro_fr,
    "thermo-scan": run_thermo_scan,
    "fig1a": run_fig1a,
    "fig1b": run_fig1b,
}


def _versions() -> dict:
    return {"wfens": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "pydantic": pydantic.VERSION}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else str(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def run(cfg: ExperimentConfig) -> tuple[int, Run]:
    """Execute ``cfg``; returns (exit status, run record).  Raises ``ConfigError`` on domain errors."""
    validate_domain(cfg)
    r = Run(cfg)
    start = time.perf_counter()
    status = EXIT_OK
    try:
        RUNNERS[cfg.experiment](r)
    except Inconclusive as exc:
        status = EXIT_INCONCLUSIVE
        r.diagnostics["inconclusive"] = str(exc)
    except (IntegrationError, SamplingAborted, FloatingPointError, np.linalg.LinAlgError) as exc:
        status = EXIT_NUMERICAL
        r.diagnostics["failure"] = f"{type(exc).__name__}: {exc}"
        if isinstance(exc, SamplingAborted):
            r.diagnostics["partial"] = exc.diagnostics
    manifest = {
        MANIFEST_KEY: 1,
        "config": cfg.model_dump(mode="json"),
        "seed": cfg.seed,
        "workers": cfg.workers,
        "versions": _versions(),
        "wall_time_s": time.perf_counter() - start,
        "exit_status": status,
        "outputs": r.files,
        "diagnostics": r.diagnostics,
    }
    r.out.mkdir(parents=True, exist_ok=True)
    (r.out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True), encoding="utf-8")
    return status, r


def _overrides(args) -> dict:
    out = {}
    seed = args.seed if args.seed is not None else os.environ.get("WFENS_SEED")
    workers = args.workers if args.workers is not None else os.environ.get("WFENS_WORKERS")
    if seed is not None:
        out["seed"] = int(seed)
    if workers is not None:
        out["workers"] = int(workers)
    if args.out is not None:
        out["output"] = args.out
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wfens", description="Run or validate JSON-configured experiments.")
    parser.add_argument("--version", action="version", version=f"wfens {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    names = ["run", "validate", *EXPERIMENTS]
    for name in names:
        helps = {"run": "run the experiment named in the config",
                 "validate": "check a config without running it"}
        p = sub.add_parser(name, help=helps.get(name, f"run a {name} config"))
        p.add_argument("--config", required=True, help="JSON config (a run manifest is accepted too)")
        p.add_argument("--seed", type=int, default=None, help="master seed (env WFENS_SEED)")
        p.add_argument("--workers", type=int, default=None, help="worker threads (env WFENS_WORKERS)")
        p.add_argument("--out", default=None, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = _overrides(args)
    try:
        cfg = load_config(args.config, overrides)
        if args.command in EXPERIMENTS and cfg.experiment != args.command:
            raise ConfigError([("experiment", f"config is {cfg.experiment!r}, command is {args.command!r}")])
        if args.command == "validate":
            validate_domain(cfg)
            print("ok")
            return EXIT_OK
        status, r = run(cfg)
    except ConfigError as exc:
        for path, msg in exc.problems:
            print(f"config error: {path}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for name in r.files:
        print(r.out / name)
    if status != EXIT_OK:
        print(json.dumps(_jsonable(r.diagnostics)), file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
