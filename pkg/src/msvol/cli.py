"""Command-line entry point: ``msvol {simulate,moments,stationarity,validate}``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import msbns, mscogarch
from . import montecarlo as mc
from .config import ConfigError, RunConfig, load_config
from .mmgou import MomentConditionError
from .numerics import NumericalError, spectral_abscissa
from .streams import path_rng


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: str | None, name: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / name, "w", newline="\n") as fh:
        fh.write(text)


def _module(cfg: RunConfig):
    return mscogarch if cfg.model == "mscogarch" else msbns


# ---------------------------------------------------------------- commands


def cmd_simulate(cfg: RunConfig, out: str | None) -> int:
    spec = cfg.spec()
    model = _module(cfg)
    d = Path(out or ".")
    d.mkdir(parents=True, exist_ok=True)
    events = []
    for i in range(cfg.n_paths):
        bundle = model.simulate(spec, cfg.horizon, cfg.grid_dt, path_rng(cfg.seed, i))
        with open(d / f"path_{i + 1:04d}.csv", "w", newline="\n") as fh:
            bundle.to_csv(fh)
        events.append({"path": i + 1, "events": bundle.events.to_json()})
    _emit(dumps({"config": cfg.echo(), "paths": events}), str(d), "events.json")
    return 0


def _moments_mscogarch(cfg: RunConfig, spec) -> dict:
    out = {"kappa_xi": mscogarch.kappa_xi(spec)}
    out.update(_moment_tables(cfg, spec, mscogarch))
    try:
        lr = mscogarch.logreturn_moments(spec, cfg.r)
        out["logreturns"] = {"r": cfg.r, "mean": lr.mean, "second_moment": lr.second_moment, "cov_disjoint": lr.cov_disjoint}
    except (ValueError, MomentConditionError) as exc:
        out["logreturns"] = {"error": str(exc)}
    return out


def _moments_msbns(cfg: RunConfig, spec) -> dict:
    out = {"kappa_xi": msbns.kappa_xi(spec), "compensator": msbns.compensator(spec).to_json()}
    out.update(_moment_tables(cfg, spec, msbns))
    alt = {}
    for k in range(1, cfg.k_max + 1):
        try:
            alt[str(k)] = msbns.stationary_moment(spec, k, lower="1")[0]
        except MomentConditionError as exc:
            alt[str(k)] = str(exc)
    out["stationary_moments_levy_integral_from_1"] = alt
    try:
        lr = msbns.logreturn_moments(spec, cfg.r)
        out["logreturns"] = {"r": cfg.r, "mean": lr.mean, "second_moment": lr.second_moment, "cov_disjoint": lr.cov_disjoint}
    except (ValueError, MomentConditionError) as exc:
        out["logreturns"] = {"error": str(exc)}
    return out


def _moment_tables(cfg: RunConfig, spec, model) -> dict:
    out = {"pi": spec.pi}
    out["psi"] = {str(k): model.psi_matrix(spec, k) for k in range(1, cfg.k_max + 1)}
    out["spectral_abscissa_psi1"] = spectral_abscissa(model.psi_matrix(spec, 1))
    moments, reports = {}, {}
    for k in range(1, cfg.k_max + 1):
        try:
            moments[str(k)] = model.stationary_moment(spec, k)[0]
        except MomentConditionError as exc:
            moments[str(k)] = str(exc)
        reports[str(k)] = model.moment_conditions(spec, k).to_json()
    out["stationary_moments"] = moments
    out["conditions"] = reports
    try:
        v0 = float(spec.v0) if spec.v0 != "stationary" else model.stationary_moment(spec, 1)[0]
        out["mean_table"] = {
            "v0": v0,
            "rows": [
                {"j0": j + 1, "t": t, "mean": model.mean_and_autocov(spec, j, t, inputs={"v0_mean": v0}).mean}
                for j in range(spec.n_states)
                for t in cfg.times
            ],
        }
        out["stationary_autocov"] = {"lags": list(cfg.lags), "cov": model.stationary_autocov(spec, cfg.lags)}
    except MomentConditionError as exc:
        out["mean_table"] = {"error": str(exc)}
    return out


def cmd_moments(cfg: RunConfig, out: str | None) -> int:
    spec = cfg.spec()
    body = _moments_mscogarch(cfg, spec) if cfg.model == "mscogarch" else _moments_msbns(cfg, spec)
    body["config"] = cfg.echo()
    _emit(dumps(body), out, "moments.json")
    return 0


def cmd_stationarity(cfg: RunConfig, out: str | None) -> int:
    spec = cfg.spec()
    rng = path_rng(cfg.seed, 0)
    if cfg.model == "mscogarch":
        rep = mscogarch.stationarity_check(spec, cfg.mc_budget, rng).to_json()
    else:
        deg = msbns.degenerate_check(spec)
        if deg.degenerate:
            rep = {"verdict": "degenerate", "c": deg.c}
        else:
            rep = msbns.stationarity_check(spec, cfg.mc_budget, rng).to_json()
    rep["config"] = cfg.echo()
    _emit(dumps(rep), out, "stationarity.json")
    return 0


def build_validation(cfg: RunConfig) -> mc.ValidationReport:
    """Analytic-vs-MC rows for the configured model at the ``validate`` budgets."""
    val = cfg.validate
    n, horizon, workers, seed = int(val["n_paths"]), float(val["horizon"]), cfg.workers, cfg.seed
    model = _module(cfg)
    stat = cfg.spec(v0="stationary", j0=None)
    v0 = float(val["v0"]) if "v0" in val else model.stationary_moment(stat, 1)[0]
    fixed = cfg.spec(v0=v0, j0=int(val["j0"]) - 1)
    rows = list(mc.mean_rows(fixed, tuple(val["times"]), n, seed, workers))

    # stationary moments and occupation from the same ergodic paths
    sm_rows, sample = mc.stationary_moment_rows(stat, horizon, n, seed + 1, workers)
    rows += sm_rows
    occ = mc.run_ensemble(stat, mc.Functional("occupation", horizon=horizon), n, seed + 1, workers)
    rows += [(f"pi_{j + 1}", stat.pi[j], e) for j, e in enumerate(occ.estimates())]
    notes = {}
    if cfg.model == "msbns":
        notes["levy_integral_lower_bound"] = mc.lower_bound_arbitration(stat, sample)

    try:
        ret_rows, _ = mc.return_rows(stat, cfg.r, cfg.h, n, seed + 2, workers)
        rows += ret_rows
    except ValueError as exc:
        if cfg.model == "msbns":
            # non-martingale price: only the mean formula applies
            sample_r = mc.run_ensemble(stat, mc.Functional("returns", r=cfg.r, h=cfg.h), n, seed + 2, workers)
            rows.append(("E_pi[G^(r)]", msbns.return_mean(stat, cfg.r), sample_r.estimate("E[R]")))
        notes["returns"] = str(exc)

    if cfg.model == "msbns":
        eta = mc.run_ensemble(stat, mc.Functional("eta_tilde", times=(1.0, 10.0, 50.0)), n, seed + 3, workers)
        rows += [(e.name, 0.0, e) for e in eta.estimates()]

    budgets = {"n_paths": n, "horizon": horizon, "times": list(val["times"]), "r": cfg.r, "h": cfg.h}
    return mc.compare_report(rows, seed, budgets, burn_in=sample.burn_in, config=cfg.echo(), notes=notes)


def cmd_validate(cfg: RunConfig, out: str | None) -> int:
    report = build_validation(cfg)
    _emit(dumps(report.to_json()), out, "validation.json")
    return 0 if report.all_passed else 1


COMMANDS = {
    "simulate": cmd_simulate,
    "moments": cmd_moments,
    "stationarity": cmd_stationarity,
    "validate": cmd_validate,
}


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="msvol", description="Regime-switching COGARCH / BNS volatility toolkit")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="config file, or the name of a bundled config (figure1.json, figure2.json)")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--paths", type=int, dest="n_paths", help="number of paths")
    p.add_argument("--horizon", type=float, help="time horizon")
    p.add_argument("--grid-dt", type=float, dest="grid_dt", help="output grid spacing")
    p.add_argument("--workers", type=int, help="worker processes for ensembles")
    p.add_argument("--out", help="output directory (JSON goes to stdout when omitted)")
    return p


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in ("seed", "n_paths", "horizon", "grid_dt", "workers")}
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg, args.out)
    except ConfigError as exc:
        print(f"config error at {exc}", file=sys.stderr)
        return 2
    except (MomentConditionError, NumericalError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
