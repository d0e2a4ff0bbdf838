"""Command-line driver: ``appe run | sweep | bounds | verify``.

Exit codes: 0 ok, 1 verification failure, 2 configuration error, 3 protocol abort.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import estimation
from .adversary import AnnounceFlip, AttackSpec
from .config import SCHEMA_VERSION, load_config_dict, read_config
from .engine import ProtocolConfig, run_appe
from .errors import InvalidArgumentError
from .verify import SUITES, junit_xml, run_suites

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3
SWEEP_AXES = ("alpha", "L", "k", "theta", "seed")


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _load(args) -> tuple[dict, ProtocolConfig, AttackSpec, dict]:
    raw = read_config(args.config)
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    env = os.environ.get("APPE_SEED")
    if env is not None:
        try:
            raw["seed"] = int(env)
        except ValueError:
            raise InvalidArgumentError(f"APPE_SEED must be an integer, got {env!r}") from None
    cfg, attack, norm = load_config_dict(raw)
    return raw, cfg, attack, norm


def _out_dir(args, raw) -> Path:
    out = Path(args.out_dir or raw.get("out_dir") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def rounds_csv(tr, alice: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["round", "kind", "announcements", "result_bit"])
    for rec in tr.rounds(alice):
        w.writerow([rec.index, rec.kind, "".join(str(b) for b in rec.announcements), rec.result])
    return buf.getvalue()


def report_document(cfg: ProtocolConfig, norm: dict, rep) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "config": norm,
        "theta_bar": cfg.theta_bar,
        "report": rep.to_dict(),
        "aborted": rep.aborted,
    }


def cmd_run(args) -> int:
    raw, cfg, attack, norm = _load(args)
    rep, tr = run_appe(cfg, attack)
    out = _out_dir(args, raw)
    (out / "report.json").write_text(_dump_json(report_document(cfg, norm, rep)))
    tr_doc = {"schema_version": SCHEMA_VERSION, "transcript": tr.to_dict()}
    (out / "transcript.json").write_text(json.dumps(tr_doc, sort_keys=True, separators=(",", ":")) + "\n")
    (out / "rounds.csv").write_text(rounds_csv(tr, cfg.roles.alice))
    if rep.aborted:
        print(f"protocol aborted: {rep.abort_reason} ({rep.abort_detail})", file=sys.stderr)
        return EXIT_ABORT
    print(f"theta_hat={rep.theta_hat:.6f} delta_hat={rep.delta_hat:.6f} nu={rep.nu} k={rep.k}")
    return EXIT_OK


# -- sweep --------------------------------------------------------------------


def parse_axis(spec: str) -> tuple[str, list]:
    """``name=start:stop:step`` with an inclusive stop, or ``name=v1,v2,...``."""
    if "=" not in spec:
        raise InvalidArgumentError(f"sweep axis {spec!r} must look like name=start:stop:step")
    name, rng = spec.split("=", 1)
    if name not in SWEEP_AXES:
        raise InvalidArgumentError(f"unknown sweep axis {name!r}; known: {SWEEP_AXES}")
    integer = name in ("L", "k", "seed")
    cast = int if integer else float
    try:
        if ":" in rng:
            start, stop, step = (cast(x) for x in rng.split(":"))
            if step <= 0:
                raise InvalidArgumentError(f"sweep step must be positive in {spec!r}")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            values = [cast(start + t * step) for t in range(max(count, 0))]
            if not integer:
                values = [round(v, 12) for v in values]
        else:
            values = [cast(x) for x in rng.split(",") if x]
    except ValueError:
        raise InvalidArgumentError(f"cannot parse sweep axis {spec!r}") from None
    return name, values


def _apply_point(raw: dict, point: dict) -> dict:
    raw = json.loads(json.dumps(raw))
    if "L" in point and "k" not in point:
        raw["k"] = int(round(raw["k"] * point["L"] / raw["L"]))
    for name, value in point.items():
        if name == "alpha":
            attack = raw.setdefault("attack", {})
            strategies = [s for s in attack.get("strategies", []) if s.get("type") != "announce_flip"]
            attack["strategies"] = strategies + [{"type": "announce_flip", "alpha": value}]
            if not attack.get("dishonest"):
                raise InvalidArgumentError("sweeping alpha needs a non-empty attack.dishonest set")
        elif name == "theta":
            parts = set(raw["participants"])
            raw["thetas"] = [value if a in parts else 0.0 for a in range(1, raw["n"] + 1)]
        else:
            raw[name] = value
    return raw


def sweep_row(job) -> dict:
    raw, point, eta = job
    cfg, attack, _ = load_config_dict(_apply_point(raw, point))
    rep, _ = run_appe(cfg, attack)
    row = dict(point)
    row.setdefault("seed", cfg.seed)
    row["L"], row["k"] = cfg.L, cfg.k
    row.update(
        theta_bar=cfg.theta_bar,
        theta_hat=rep.theta_hat,
        beta_hat=rep.beta_hat,
        delta_hat=rep.delta_hat,
        bias_bound=None,
        empirical_bias=None if rep.theta_hat is None else rep.theta_hat - cfg.theta_bar,
        abort_reason=rep.abort_reason,
    )
    if rep.theta_hat is not None and 0 < cfg.k < cfg.L:
        row["bias_bound"] = estimation.bias_bound(eta, rep.theta_hat, rep.delta_hat, cfg.L, cfg.k)
    return row


def cmd_sweep(args) -> int:
    raw, _, _, _ = _load(args)
    axes = [parse_axis(s) for s in args.sweep or []]
    if not axes or any(not vals for _, vals in axes):
        raise InvalidArgumentError("sweep grid is empty")
    names = [n for n, _ in axes]
    if len(set(names)) != len(names):
        raise InvalidArgumentError("each sweep axis may appear once")
    jobs = []
    for combo in np.ndindex(*[len(v) for _, v in axes]):
        point = {name: vals[i] for (name, vals), i in zip(axes, combo)}
        jobs.append((raw, point, args.eta))
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            rows = list(pool.map(sweep_row, jobs))
    else:
        rows = [sweep_row(j) for j in jobs]
    lead = [n for n in names if n not in ("L", "k", "seed")]
    columns = lead + ["L", "k", "seed", "theta_bar", "theta_hat", "beta_hat", "delta_hat", "bias_bound", "empirical_bias", "abort_reason"]
    out = _out_dir(args, raw)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow(["" if row.get(c) is None else row.get(c) for c in columns])
    print(f"wrote {len(rows)} rows to {out / 'sweep.csv'}")
    return EXIT_OK


# -- bounds -------------------------------------------------------------------

BOUNDS = {
    "lemma": (("omega", "L", "k"), estimation.lemma_tail_bound),
    "bias": (("eta", "theta", "delta", "L", "k"), estimation.bias_bound),
    "alpha": (("theta", "eta"), estimation.alpha_from_eta),
    "f": (("eta", "theta"), estimation.f_poly),
    "perturbed": (("beta", "alpha"), estimation.perturbed_beta),
    "correct": (("beta_prime", "delta"), lambda b, d: estimation.correct_beta(b, d)[0]),
    "theta": (("beta",), estimation.theta_from_beta),
}


def _grid_values(spec: str) -> tuple[str, list]:
    name, rng = spec.split("=", 1) if "=" in spec else (spec, "")
    try:
        if ":" in rng:
            start, stop, step = (float(x) for x in rng.split(":"))
            if step <= 0:
                raise InvalidArgumentError("grid step must be positive")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            return name, [round(start + t * step, 12) for t in range(max(count, 0))]
        return name, [float(x) for x in rng.split(",") if x]
    except ValueError:
        raise InvalidArgumentError(f"cannot parse grid {spec!r}") from None


def cmd_bounds(args) -> int:
    inputs, fn = BOUNDS[args.kind]
    grid = dict(_grid_values(s) for s in args.grid or [])
    for s in args.set or []:
        name, vals = _grid_values(s)
        grid[name] = vals[:1]
    unknown = set(grid) - set(inputs)
    if unknown:
        raise InvalidArgumentError(f"{args.kind} takes {inputs}, not {sorted(unknown)}")
    missing = [i for i in inputs if i not in grid]
    if missing:
        raise InvalidArgumentError(f"missing values for {missing}")
    if any(not v for v in grid.values()):
        raise InvalidArgumentError("bounds grid is empty")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(inputs) + ["value"])
    for combo in np.ndindex(*[len(grid[i]) for i in inputs]):
        vals = [grid[i][c] for i, c in zip(inputs, combo)]
        call = [int(v) if i in ("L", "k") else v for i, v in zip(inputs, vals)]
        try:
            value = fn(*call)
        except InvalidArgumentError as exc:
            value = f"error: {exc}"
        w.writerow(call + [value])
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


# -- verify -------------------------------------------------------------------


def cmd_verify(args) -> int:
    selected = []
    if args.privacy:
        selected.append("privacy")
    if args.anonymity:
        selected.append("anonymity")
    if not selected:
        selected = list(SUITES) if args.suite == "all" else [args.suite]
    results = run_suites(selected, mutation=args.mutation)
    if args.junit:
        Path(args.junit).write_bytes(junit_xml(results))
    failed = [r for r in results if not r.passed]
    if failed:
        print("failing invariants: " + ", ".join(f"{r.suite}/{r.name}" for r in failed), file=sys.stderr)
        return EXIT_VERIFY
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="appe", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one protocol execution")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--out-dir")
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="run a parameter grid")
    sw.add_argument("--config", required=True)
    sw.add_argument("--seed", type=int)
    sw.add_argument("--out-dir")
    sw.add_argument("--sweep", action="append", metavar="AXIS=START:STOP:STEP")
    sw.add_argument("--eta", type=float, default=0.2, help="shift at which the bias bound is reported")
    sw.add_argument("--workers", type=int, default=1)
    sw.set_defaults(func=cmd_sweep)

    bd = sub.add_parser("bounds", help="evaluate closed forms over a grid")
    bd.add_argument("kind", choices=sorted(BOUNDS))
    bd.add_argument("--grid", action="append", metavar="NAME=START:STOP:STEP")
    bd.add_argument("--set", action="append", metavar="NAME=VALUE")
    bd.add_argument("--out")
    bd.set_defaults(func=cmd_bounds)

    vf = sub.add_parser("verify", help="run invariant suites")
    vf.add_argument("--suite", choices=("all",) + SUITES, default="all")
    vf.add_argument("--privacy", action="store_true")
    vf.add_argument("--anonymity", action="store_true")
    vf.add_argument("--mutation", choices=("alice-truthful",))
    vf.add_argument("--junit")
    vf.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except InvalidArgumentError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
