"""Batch runner: decompose, flow, calabi and theorem1 pipelines.

Each run writes one directory holding a copy of the configuration, the
results and a manifest of SHA-256 hashes.  Exit codes: 0 pass, 1 a checked
invariant failed, 2 configuration or input error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _run_dir(out: Path, command: str, cfg: ExperimentConfig) -> Path:
    d = Path(out) / f"{command}-{cfg.digest()[:12]}"
    d.mkdir(parents=True, exist_ok=True)
    (d / "config.json").write_text(cfg.to_json())
    return d


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n")


def _manifest(run: Path):
    files = sorted(p for p in run.rglob("*") if p.is_file() and p.name != "manifest.json")
    entries = {str(p.relative_to(run)): hashlib.sha256(p.read_bytes()).hexdigest() for p in files}
    _write_json(run / "manifest.json", entries)


def _chain(cfg: ExperimentConfig):
    from .genfun import factor_polar
    from .maps import PolarMap

    return factor_polar(PolarMap(cfg.profile()), cfg.m, K_target=cfg.K_target)


# --------------------------------------------------------------------------
# decompose


def cmd_decompose(cfg: ExperimentConfig, run: Path) -> int:
    from .genfun import CertificationError, PolarFactor, verify_untwisted_lipschitz

    try:
        chain = _chain(cfg)
    except CertificationError as exc:
        report = exc.report
        (run / "certificate.txt").write_text(report.to_text() if report else str(exc) + "\n")
        _write_json(run / "results.json", {"passed": False, "reason": str(exc), "m": cfg.m, "K": cfg.K_target})
        return EXIT_FAIL
    factor = chain.factor(1)
    report = verify_untwisted_lipschitz(factor, cfg.K_target)
    (run / "certificate.txt").write_text(report.to_text())
    _write_json(run / "results.json", {"passed": bool(report.passed), "m": cfg.m, "K": cfg.K_target,
                                        "max_ratio": report.max_ratio, "min_dXdx": report.min_dXdx,
                                        "polar": isinstance(factor, PolarFactor)})
    return EXIT_OK if report.passed else EXIT_FAIL


# --------------------------------------------------------------------------
# flow


def _flow_checks(cfg: ExperimentConfig, chain, b: int, run: Path):
    from .actionflow.space import ActionSpace, finite_difference_gradient, lipschitz_certificate

    space = ActionSpace(chain, b)
    rng = np.random.default_rng([cfg.seed, b])
    seeds = space.random_states(cfg.flow_seeds, cfg.flow_scale, rng)
    seeds = np.concatenate([np.zeros((1, space.N, 2)), seeds])
    checks = {}
    fd = finite_difference_gradient(space, seeds[1:])
    zt = space.zeta(seeds[1:])
    rel = np.linalg.norm((fd - zt).reshape(len(zt), -1), axis=1) / np.linalg.norm(zt.reshape(len(zt), -1), axis=1)
    checks["gradient_rel_error"] = float(rel.max())
    z = space.random_states(1000, cfg.flow_scale, rng)
    zp = z + space.random_states(1000, 0.1, rng)
    checks["lipschitz_ratio"] = lipschitz_certificate(chain, b, z, zp)
    checks["lipschitz_bound"] = float(space.lipschitz_bound)
    finals, mono, const = [], True, 0.0
    for j, z0 in enumerate(seeds):
        tr = space.flow(z0, cfg.flow_time)
        tr.to_csv(run / f"trajectory_b{b}_{j}.csv")
        h = space.action(tr.states)
        mono &= bool(np.all(np.diff(h) >= -1e-10 * max(1.0, np.abs(h).max())))
        if j == 0:
            const = float(np.abs(tr.states).max())
        finals.append(tr.final)
    checks["action_monotone"] = mono
    checks["singular_seed_drift"] = const
    # Gronwall: |z^t - z'^t| <= exp(L t) |z - z'| for consecutive seeds
    L = space.lipschitz_bound
    worst = 0.0
    for j in range(1, len(seeds) - 1):
        d0 = np.linalg.norm(seeds[j] - seeds[j + 1])
        d1 = np.linalg.norm(finals[j] - finals[j + 1])
        worst = max(worst, d1 / (np.exp(L * cfg.flow_time) * d0))
    checks["gronwall_ratio"] = float(worst)
    ok = (checks["gradient_rel_error"] < 1e-5 and checks["lipschitz_ratio"] <= checks["lipschitz_bound"]
          and mono and const == 0.0 and worst <= 1.0)
    checks["passed"] = bool(ok)
    return checks


def cmd_flow(cfg: ExperimentConfig, run: Path) -> int:
    from .actionflow.disk import CacheVersionError, DeltaDisk, read_cache_meta
    from .actionflow.space import ActionSpace, linking_form_L

    if cfg.disk_cache:
        try:
            meta = read_cache_meta(cfg.disk_cache)
        except (CacheVersionError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    chain = _chain(cfg)
    summary = {str(b): _flow_checks(cfg, chain, b, run) for b in cfg.b_values}
    ok = all(v["passed"] for v in summary.values())
    if cfg.disk_cache:
        try:
            disk = DeltaDisk.load(cfg.disk_cache, ActionSpace(chain, meta["b"]))
        except CacheVersionError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        inner = disk.states[:, 1:-1].reshape(-1, disk.space.N, 2)
        L = linking_form_L(disk.space.zeta(inner), strict=False)
        summary["disk"] = {"a": disk.a, "b": disk.b, "linking_of_field": sorted(set(np.unique(L).tolist()))}
        ok &= bool(np.all(L == disk.a))
    _write_json(run / "summary.json", summary)
    return EXIT_OK if ok else EXIT_FAIL


# --------------------------------------------------------------------------
# calabi


def _estimate(job):
    from .calabi import CalabiEstimate, QuadratureMeasure, calabi_action, calabi_ang, calabi_link
    from .maps import twist_isotopy

    name, cfg = job
    profile = cfg.profile()
    measure = QuadratureMeasure(radius=1.0, n=cfg.n_samples, seed=cfg.seed)
    iso = twist_isotopy(profile, shift=-cfg.lift_shift)
    if name == "ang":
        return calabi_ang(iso, measure)
    if name == "link":
        return calabi_link(iso, measure)
    res = calabi_action(profile, radius=1.0, shift=-cfg.lift_shift)
    return CalabiEstimate("action", res.cal_tilde, 1e-9, 0, cfg.seed, 0.0,
                          extra={"cal": res.cal, "rot": res.rot, "area": res.area})


def _pool_map(fn, jobs, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def cmd_calabi(cfg: ExperimentConfig, run: Path, workers: int = 1) -> int:
    from .calabi import concordance

    ests = _pool_map(_estimate, [(n, cfg) for n in ("ang", "link", "action")], workers)
    ok, rows = concordance(ests)
    spec_hash = hashlib.sha256(json.dumps({"kind": cfg.map_kind, "alpha": cfg.alpha, "beta": cfg.beta,
                                           "shift": cfg.lift_shift}, sort_keys=True).encode()).hexdigest()
    records = []
    for e in ests:
        rec = e.to_json()
        rec["map_spec_hash"] = spec_hash
        records.append(rec)
    _write_json(run / "results.json", {"estimates": records, "concordant": ok,
                                        "pairs": [list(r) for r in rows]})
    return EXIT_OK if ok else EXIT_FAIL


# --------------------------------------------------------------------------
# theorem1


def convergents(alpha: float, max_b: int):
    """Continued-fraction convergents a/b of alpha with b <= max_b."""
    out = []
    h0, h1, k0, k1 = 0, 1, 1, 0
    x = alpha
    for _ in range(64):
        q = int(np.floor(x))
        h0, h1 = h1, q * h1 + h0
        k0, k1 = k1, q * k1 + k0
        if k1 > max_b:
            break
        out.append((h1, k1))
        frac = x - q
        if frac < 1e-12:
            break
        x = 1.0 / frac
    return [(a, b) for a, b in out if b >= 1]


def _row(job):
    from .actionflow.disk import DeltaDisk, DiskSettings
    from .actionflow.heteroclinic import ConvergenceError
    from .actionflow.space import ActionSpace
    from .calabi import QuadratureMeasure, bound_experiment

    cfg, a, b, run = job
    chain = _chain(cfg)
    R = 1.0 + a / b - cfg.alpha
    disk, note = None, "b above disk_max_b"
    if b <= cfg.disk_max_b:
        try:
            disk = DeltaDisk.build(ActionSpace(chain, b), a, cfg.alpha, DiskSettings(n_psi_min=cfg.disk_psi))
            disk.save(Path(run) / f"disk_{a}_{b}.bin")
            note = "disk built"
        except ConvergenceError as exc:
            note = f"disk not built: {exc}"
    rep = bound_experiment(chain, b, a, QuadratureMeasure(radius=R, n=cfg.n_samples, seed=cfg.seed), disk=disk,
                           n_tau=cfg.tau_pairs, seed=cfg.seed)
    return rep, note


def theorem1_rows(cfg: ExperimentConfig, run: Path, workers: int = 1):
    rows, skipped, jobs = [], [], []
    for a, b in convergents(cfg.alpha, cfg.max_b):
        if not (b * cfg.alpha < a < b * cfg.beta):
            skipped.append({"a": a, "b": b, "reason": f"a/b = {a}/{b} is outside ({cfg.alpha:.6g}, {cfg.beta:.6g}); "
                                                        "no periodic circle of that rotation in the band"})
            continue
        jobs.append((cfg, a, b, str(run)))
    reports = _pool_map(_row, jobs, workers)
    target = np.pi**2 * cfg.alpha
    for rep, note in reports:
        rows.append({
            "a": rep.a, "b": rep.b, "A": rep.A, "C": rep.C, "link": float(rep.link.value),
            "link_error": float(rep.link.error), "deviation": float(abs(rep.link.value - target)),
            "display_lhs": rep.display_lhs, "display_signed": rep.display_signed,
            "display_bound": rep.display_bound, "display_slack": rep.display_bound - rep.display_lhs,
            "tau_mass": rep.tau_mass, "mass_bound": rep.mass_bound,
            "tau_integral": rep.tau_integral, "integral_bound": rep.integral_bound,
            "bounds_ok": rep.bounds_ok, "disk": note,
        })
    return rows, skipped


def monotone_in_bound(rows) -> bool:
    """Deviation from pi^2 alpha decreases along rows ordered by decreasing bound."""
    order = sorted(rows, key=lambda r: -r["display_bound"])
    dev = [r["deviation"] for r in order]
    return all(d1 > d2 for d1, d2 in zip(dev[:-1], dev[1:]))


def cmd_theorem1(cfg: ExperimentConfig, run: Path, workers: int = 1) -> int:
    rows, skipped = theorem1_rows(cfg, run, workers)
    mono = monotone_in_bound(rows)
    ok = bool(rows) and all(r["bounds_ok"] for r in rows) and mono
    with open(run / "table.csv", "w", newline="") as fh:
        if rows:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    _write_json(run / "results.json", {"target": np.pi**2 * cfg.alpha, "rows": rows, "skipped": skipped,
                                        "monotone": mono, "passed": ok})
    return EXIT_OK if ok else EXIT_FAIL


# --------------------------------------------------------------------------

COMMANDS = {"decompose": cmd_decompose, "flow": cmd_flow, "calabi": cmd_calabi, "theorem1": cmd_theorem1}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pseudorot", description="Pseudo-rotation experiments")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON configuration file (defaults used when omitted)")
    p.add_argument("--out", default="runs", help="parent directory for run outputs")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--workers", type=int, default=1, help="worker processes for independent jobs")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig().validate()
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed).validate()
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run = _run_dir(Path(args.out), args.command, cfg)
    fn = COMMANDS[args.command]
    code = fn(cfg, run, args.workers) if args.command in ("calabi", "theorem1") else fn(cfg, run)
    _manifest(run)
    print(f"{args.command}: {'pass' if code == EXIT_OK else 'fail'} -> {run}")
    return code


if __name__ == "__main__":
    sys.exit(main())
