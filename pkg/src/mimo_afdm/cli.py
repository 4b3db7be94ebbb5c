"""Command-line entry point: ``mimo-afdm <command> [--config ...] [--out ...]``.

Exit codes: 0 success, 1 runtime failure (including failed checks), 2 config error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
from pathlib import Path
import subprocess
import sys

import numpy as np

from . import __version__
from .config import ConfigError, diversity_settings, experiment_dict, experiments, load_config
from .daft import make_params
from .framing import (
    overhead_downlink,
    overhead_mimo_afdm,
    overhead_mimo_otfs,
    plan_afdma_downlink,
    plan_afdma_uplink,
    plan_to_table,
    validate_plan,
)
from .harness import diversity_slope, run_ber, run_nmse

log = logging.getLogger("mimo_afdm")


def _code_version() -> dict:
    """Package version plus the git commit when run from a checkout."""
    out = {"package": __version__}
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if rev.returncode == 0:
            out["git"] = rev.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return out


def _write_manifest(out: Path, command: str, config_path, raw, resolved, seed, files) -> Path:
    """Resolved config, code version, seed and result hashes.  No timestamps, so re-runs match."""
    body = {
        "command": command,
        "config_path": str(config_path) if config_path else None,
        "config": raw,
        "experiments": resolved,
        "seed": seed,
        "code_version": _code_version(),
        "outputs": {
            f.name: hashlib.sha256(f.read_bytes()).hexdigest() for f in sorted(files)
        },
    }
    name = (raw or {}).get("name", command)
    path = out / f"{name}_{command}_manifest.json"
    path.write_text(json.dumps(body, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _load(args) -> tuple[dict, list]:
    if not args.config:
        raise ConfigError(f"{args.command} needs --config")
    raw = load_config(args.config)
    return raw, experiments(raw, args.seed)


def cmd_ber(args) -> int:
    raw, exps = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for cfg in exps:
        res = run_ber(cfg, threads=args.threads)
        path = out / f"{cfg.name}.csv"
        path.write_text(res.csv())
        files.append(path)
        print(f"{cfg.name}: wrote {path} ({res.runtime:.1f} s)")
    _write_manifest(out, "ber", args.config, raw, [experiment_dict(c) for c in exps], args.seed, files)
    return 0


def cmd_diversity(args) -> int:
    raw, exps = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    rows = ["experiment,slope,target,tolerance,points,pass"]
    failed = False
    for cfg in exps:
        res = run_ber(cfg, threads=args.threads)
        path = out / f"{cfg.name}.csv"
        path.write_text(res.csv())
        files.append(path)
        opts = diversity_settings(raw, cfg.name)
        window = tuple(opts.get("window", (1e-5, 1e-2)))
        target = opts.get("target")
        tol = opts.get("tolerance", 0.7)
        try:
            rep = diversity_slope(zip(res.snr_db, res.ber), window, target)
        except ValueError as exc:
            print(f"{cfg.name}: {exc}")
            rows.append(f"{cfg.name},nan,{target},{tol},0,False")
            failed = True
            continue
        ok = target is None or rep.within(tol)
        failed |= not ok
        rows.append(f"{cfg.name},{rep.slope:.4f},{target},{tol},{len(rep.snr_db)},{ok}")
        print(f"{cfg.name}: slope {rep.slope:.3f}" + (f" (target {target} +/- {tol}: {'PASS' if ok else 'FAIL'})" if target is not None else ""))
    summary = out / f"{raw['name']}_diversity.csv"
    summary.write_text("\n".join(rows) + "\n")
    files.append(summary)
    _write_manifest(out, "diversity", args.config, raw, [experiment_dict(c) for c in exps], args.seed, files)
    return 1 if (failed and args.strict) else 0


def cmd_nmse(args) -> int:
    raw, exps = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for cfg in exps:
        pts = run_nmse(cfg, trials=args.trials)
        path = out / f"{cfg.name}_nmse.csv"
        lines = ["snr_db,nmse,trials,seed"] + [f"{p.snr_db:.6g},{p.nmse:.10g},{p.trials},{p.seed}" for p in pts]
        path.write_text("\n".join(lines) + "\n")
        files.append(path)
        print(f"{cfg.name}: wrote {path}")
    _write_manifest(out, "nmse", args.config, raw, [experiment_dict(c) for c in exps], args.seed, files)
    return 0


def _overhead_rows(N, l_max, alpha_max, k_nus, N_t):
    rows = []
    for k_nu in k_nus:
        p = make_params(N, l_max, alpha_max, k_nu)
        a = overhead_mimo_afdm(p, N_t)
        o = overhead_mimo_otfs(l_max, alpha_max, k_nu, N_t)
        rows.append((N, l_max, alpha_max, k_nu, N_t, p.L, a, o))
    return rows


def format_overhead(row) -> str:
    N, l_max, alpha_max, k_nu, N_t, L, a, o = row
    return (
        f"N={N} N_t={N_t} l_max={l_max} alpha_max={alpha_max} k_nu={k_nu} L={L}: "
        f"AFDM {a} ({100 * a / N:.2f}%), OTFS {o} ({100 * o / N:.2f}%)"
    )


def cmd_overhead(args) -> int:
    if args.config:
        raw = load_config(args.config)
        p = raw["params"]
        sec = raw.get("overhead", {})
        N, l_max, alpha_max = p["N"], p["l_max"], p["alpha_max"]
        k_nus = sec.get("k_nu", [p.get("k_nu", 0)])
        N_t = sec.get("N_t", raw.get("mimo", {}).get("N_t", 1))
    else:
        raw = None
        N, l_max, alpha_max, k_nus, N_t = args.N, args.l_max, args.alpha_max, args.k_nu, args.n_t
    try:
        rows = _overhead_rows(N, l_max, alpha_max, k_nus, N_t)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    for row in rows:
        print(format_overhead(row))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "overhead.csv"
        lines = ["N,l_max,alpha_max,k_nu,N_t,L,afdm_slots,afdm_pct,otfs_slots,otfs_pct"]
        for N_, l, a_, k, t, L, a, o in rows:
            lines.append(f"{N_},{l},{a_},{k},{t},{L},{a},{100 * a / N_:.4f},{o},{100 * o / N_:.4f}")
        path.write_text("\n".join(lines) + "\n")
        _write_manifest(out, "overhead", args.config, raw or {"name": "overhead"}, [list(r) for r in rows], None, [path])
    return 0


def cmd_afdma_plan(args) -> int:
    if not args.config:
        raise ConfigError("afdma-plan needs --config")
    raw = load_config(args.config)
    sec = raw.get("afdma")
    if sec is None:
        raise ConfigError("config has no afdma section")
    N = raw["params"]["N"]
    guard = sec.get("guard")
    plans = []
    try:
        if "downlink" in sec:
            users = [tuple(u) for u in sec["downlink"]]
            plans.append(plan_afdma_downlink(N, users, sec["L_max"], sec["N_BS"]))
            expected = overhead_downlink([L for L, _ in users], sec["L_max"], sec["N_BS"])
        if "uplink" in sec:
            plans.append(plan_afdma_uplink(N, [tuple(u) for u in sec["uplink"]], sec["N_BS"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not plans:
        raise ConfigError("afdma section lists neither downlink nor uplink users")
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    files = []
    bad = False
    for plan in plans:
        problems = validate_plan(plan, guard)
        status = "valid" if not problems else f"{len(problems)} violation(s)"
        extra = f", formula {expected}" if plan.direction == "downlink" else ""
        print(f"{plan.direction}: overhead {plan.overhead}{extra}; {status}")
        for msg in problems:
            print(f"  {msg}")
        bad |= bool(problems)
        if out:
            path = out / f"{raw['name']}_{plan.direction}.tsv"
            path.write_text(plan_to_table(plan))
            files.append(path)
    if out:
        _write_manifest(out, "afdma-plan", args.config, raw, [], None, files)
    return 1 if bad else 0


def cmd_factors(args) -> int:
    from .chanest import build_factor_table

    if args.config:
        p = load_config(args.config)["params"]
        N, l_max, alpha_max, k_nu, c2 = p["N"], p["l_max"], p["alpha_max"], p.get("k_nu", 0), p.get("c2")
    else:
        N, l_max, alpha_max, k_nu, c2 = args.N, args.l_max, args.alpha_max, args.k_nu[0], None
    try:
        params = make_params(N, l_max, alpha_max, k_nu, c2)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    table = build_factor_table(params)
    lines = [f"# N={N} L={params.L} entries={len(table)} (4L+1={4 * params.L + 1})", "offset,delay,case,raw,re,im"]
    delay_of = dict(zip(table.offsets.tolist(), table.delays.tolist()))
    for (d, case, raw), v in sorted(table.entries.items(), key=lambda kv: (kv[0][0], kv[0][1], str(kv[0][2]))):
        lines.append(f"{d},{delay_of[d]},{case},{'' if raw is None else raw},{v.real:.17g},{v.imag:.17g}")
    text = "\n".join(lines) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "factors.csv").write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_sanity(args) -> int:
    from .sanity import run_sanity

    results = run_sanity(corrupt_factor=args.corrupt_factor, quick=args.quick)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'} {r.module}/{r.name}: {r.detail}")
    failed = [r for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mimo-afdm", description="MIMO-AFDM simulation and EPA-DR channel estimation")
    ap.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="master seed override")
    common.add_argument("--threads", type=int, default=1, help="worker threads for Monte-Carlo batches")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, fn, helptext in [
        ("ber", cmd_ber, "BER curves, one CSV per experiment"),
        ("diversity", cmd_diversity, "BER curves plus diversity slopes"),
        ("nmse", cmd_nmse, "EPA-DR estimation NMSE against SNR"),
    ]:
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.set_defaults(func=fn, out_default="results")
        if name == "diversity":
            p.add_argument("--strict", action="store_true", help="exit 1 when a slope misses its target")
        if name == "nmse":
            p.add_argument("--trials", type=int, help="trials per SNR point (default: trials.max)")

    for name, fn, helptext in [
        ("overhead", cmd_overhead, "pilot/guard overhead of MIMO-AFDM and MIMO-OTFS"),
        ("factors", cmd_factors, "dump the transform factor table"),
    ]:
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--N", type=int, default=1024)
        p.add_argument("--l-max", type=int, default=2)
        p.add_argument("--alpha-max", type=int, default=2)
        p.add_argument("--k-nu", type=int, nargs="+", default=[1])
        p.add_argument("--n-t", type=int, default=2)
        p.set_defaults(func=fn, out_default=None)

    p = sub.add_parser("afdma-plan", parents=[common], help="AFDMA slot plans and validation")
    p.set_defaults(func=cmd_afdma_plan, out_default=None)
    p = sub.add_parser("sanity", parents=[common], help="fast invariant suite")
    p.add_argument("--quick", action="store_true", help="skip the N=1024 cases")
    p.add_argument("--corrupt-factor", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_sanity, out_default=None)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.out is None:
        args.out = args.out_default
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
