"""``qlease`` command-line front end.

Exit codes: 0 success, 1 failed check or experiment, 2 usage error or
malformed input.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .circuits import CncCircuit, from_bits, sample_unpredictable
from .field import FieldParams, Subspace, random_subspace
from .oracles import DEFAULT_NIZK
from .rng import ALGORITHM, make_rng
from .states import (BinaryMeasurement, PureState, SimulationCapError, dump_state,
                     gentle_measurement_bound_check, load_state, qft, qft_array, subspace_state)

log = logging.getLogger("qlease")

SCHEMA = "qlease.report/1"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

DEFAULTS = {"q": 2, "lambda": 6, "n": 5, "mode": "ideal", "trials": 100, "strategy": None,
            "budget": 1 << 10, "format": "json", "family": "point", "beta": 0.5,
            "experiment": "finite", "lambda_bits": 2, "attack": "extract"}


class InputError(Exception):
    pass


# --- configuration -------------------------------------------------------------

def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the JSON config file, then explicit flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            cfg.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
    for key in ("q", "lambda", "n", "mode", "trials", "strategy", "budget", "format", "family",
                "beta", "experiment", "lambda_bits", "attack"):
        val = getattr(args, key.replace("lambda", "lam") if key == "lambda" else key, None)
        if val is not None:
            cfg[key] = val
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = cfg.get("seed")
    if seed is None:
        seed = os.environ.get("QLEASE_SEED")
    try:
        cfg["seed"] = int(seed) if seed is not None else 0
    except ValueError as exc:
        raise InputError(f"seed must be an integer, got {seed!r}") from exc
    if isinstance(cfg.get("strategy"), str):
        cfg["strategy"] = [s for s in cfg["strategy"].split(",") if s]
    return cfg


def envelope(command: str, cfg: dict, payload, timestamp: bool = False) -> dict:
    return {"schema": SCHEMA, "tool": "qlease", "version": __version__, "command": command,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()) if timestamp else None,
            "rng": ALGORITHM, "config": cfg, "payload": payload}


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# --- selftest ------------------------------------------------------------------

SELFTEST_PARAMS = ((2, 4), (2, 8), (3, 4), (5, 3))


def _selftest_suites(params: FieldParams, cases: int, tol: float, rng, perturb: float) -> list[tuple[str, bool, float]]:
    worst = {"fourier_dual": 0.0, "projector_identity": 0.0, "gentle_measurement": 0.0, "dual_dimension": 0.0}
    for _ in range(cases):
        d = int(rng.integers(0, params.lam + 1))
        A = random_subspace(params, d, rng)
        dual = A.dual()
        worst["dual_dimension"] = max(worst["dual_dimension"], abs(A.dim + dual.dim - params.lam))
        ft = qft(subspace_state(A)).amplitudes
        worst["fourier_dual"] = max(worst["fourier_dual"],
                                    float(np.linalg.norm(ft - subspace_state(dual).amplitudes)) + perturb)
        psi = rng.normal(size=params.dim) + 1j * rng.normal(size=params.dim)
        psi /= np.linalg.norm(psi)
        v = psi * A.mask()
        v = qft_array(v, params) * dual.mask()
        v = qft_array(v, params, inverse=True)
        target = subspace_state(A).amplitudes
        expected = np.vdot(target, psi) * target
        worst["projector_identity"] = max(worst["projector_identity"], float(np.linalg.norm(v - expected)))
        eps = float(rng.uniform(0, 0.2))
        s = PureState.from_unnormalized(params, np.sqrt(1 - eps) * target
                                        + np.sqrt(eps) * _orthogonal_unit(target, rng))
        tdist, bound = gentle_measurement_bound_check(s, BinaryMeasurement.subspace_state(A), atol=np.inf)
        worst["gentle_measurement"] = max(worst["gentle_measurement"], tdist - bound)
    return [(name, val <= tol, val) for name, val in worst.items()]


def _orthogonal_unit(t: np.ndarray, rng) -> np.ndarray:
    w = rng.normal(size=t.shape) + 1j * rng.normal(size=t.shape)
    w -= np.vdot(t, w) * t
    return w / np.linalg.norm(w)


def cmd_selftest(args) -> int:
    cfg = resolve_config(args)
    rng = make_rng(cfg["seed"], 0x5E1F)
    tol = args.tolerance
    perturb = 0.0
    if args.force_failure:
        tol, perturb = 1e-15, 1e-12
    grid = [(args.q, args.lam)] if args.q is not None else list(SELFTEST_PARAMS)
    ok = True
    for q, lam in grid:
        params = FieldParams(q, lam if lam is not None else 4)
        for name, passed, val in _selftest_suites(params, args.cases, tol, rng, perturb):
            ok &= passed
            print(f"{'PASS' if passed else 'FAIL'} {name} q={params.q} lambda={params.lam} worst={val:.3e}")
    return EXIT_OK if ok else EXIT_FAIL


# --- lease lifecycle -----------------------------------------------------------

def _load_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def cmd_sample_circuit(args) -> int:
    cfg = resolve_config(args)
    c = sample_unpredictable(cfg["n"], None, make_rng(cfg["seed"], 0xC1C), cfg["family"]).circuit
    _emit(dumps(c.to_json()), args.out)
    return EXIT_OK


def cmd_lease(args) -> int:
    from .scheme import gen, lessor, setup
    cfg = resolve_config(args)
    if not args.circuit or not args.lease:
        raise InputError("lease needs --circuit and --lease")
    try:
        circuit = CncCircuit.from_json(_load_json(Path(args.circuit)))
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"malformed circuit file: {exc}") from exc
    rng = make_rng(cfg["seed"], 0x1EA5E)
    crs = setup(FieldParams(cfg["q"], cfg["lambda"]), cfg["mode"], rng)
    sk = gen(crs, rng)
    lease = lessor(crs, sk, circuit, rng)
    _write_lease(Path(args.lease), crs, lease, sk=sk, cfg=cfg)
    print(f"leased {circuit.tag.kind} circuit (n={circuit.n}) into {args.lease}")
    return EXIT_OK


def _write_lease(d: Path, crs, lease, sk=None, cfg=None) -> None:
    from .scheme import lease_to_json
    d.mkdir(parents=True, exist_ok=True)
    if sk is not None:
        crs_doc = {**crs.to_json(), "nizk": crs.nizk_crs.oracle.export_crs(crs.nizk_crs), "config": cfg}
        (d / "crs.json").write_text(dumps(crs_doc))
        (d / "sk.json").write_text(dumps(sk.to_json()))
    (d / "lease.json").write_text(dumps(lease_to_json(lease)))
    (d / "lease.qlsv").write_bytes(dump_state(lease.quantum))


def _read_lease(d: Path):
    from .scheme import CommonReferenceString, lease_from_json, register_relation
    try:
        crs_doc = _load_json(d / "crs.json")
        register_relation(DEFAULT_NIZK)
        nizk = DEFAULT_NIZK.import_crs(crs_doc["nizk"])
        crs = CommonReferenceString(nizk, FieldParams(int(crs_doc["q"]), int(crs_doc["lambda"])), crs_doc["mode"])
        quantum = load_state((d / "lease.qlsv").read_bytes())
        lease = lease_from_json(_load_json(d / "lease.json"), quantum)
    except InputError:
        raise
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise InputError(f"malformed lease directory {d}: {exc}") from exc
    return crs, lease


def cmd_run(args) -> int:
    from .scheme import run
    if not args.lease or args.input is None:
        raise InputError("run needs --lease and --input")
    crs, lease = _read_lease(Path(args.lease))
    try:
        x = from_bits(args.input) if set(args.input) <= {"0", "1"} else int(args.input, 0)
    except ValueError as exc:
        raise InputError(f"bad input {args.input!r}") from exc
    if len(args.input) != lease.c_obf.n and set(args.input) <= {"0", "1"}:
        raise InputError(f"input must have {lease.c_obf.n} bits")
    cfg = resolve_config(args)
    res = run(crs, lease, x, make_rng(cfg["seed"], 0x2C))
    _write_lease(Path(args.lease), crs, lease)
    print("⊥" if res.output is None else res.output)
    return EXIT_OK


def cmd_check(args) -> int:
    from .scheme import SecretKey, check
    if not args.lease:
        raise InputError("check needs --lease")
    d = Path(args.lease)
    crs, lease = _read_lease(d)
    try:
        sk = SecretKey(Subspace.from_json(_load_json(d / "sk.json")["A"], strict=True))
    except (KeyError, ValueError) as exc:
        raise InputError(f"malformed secret key: {exc}") from exc
    cfg = resolve_config(args)
    bit = check(sk, lease, make_rng(cfg["seed"], 0xC4EC))
    _write_lease(d, crs, lease)
    print(bit)
    return EXIT_OK


# --- experiments and attacks ---------------------------------------------------

def _write_report(cfg: dict, command: str, payload, rows: list[dict], args) -> None:
    if cfg["format"] == "csv":
        buf = io.StringIO()
        fields = sorted({k for r in rows for k in r})
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
        _emit(buf.getvalue(), args.out)
    else:
        _emit(dumps(envelope(command, cfg, payload, args.timestamp)), args.out)


def cmd_experiment(args) -> int:
    from .harness import (STRATEGIES, SchemeConfig, finite_term_experiment,
                          infinite_term_experiment, make_strategy)
    cfg = resolve_config(args)
    names = cfg["strategy"] or ["measure_reprepare_duplicate"]
    cfg["strategy"] = names
    for s in names:
        if s not in STRATEGIES or s == "custom":
            raise InputError(f"unknown strategy {s!r}")
    sc = SchemeConfig(cfg["q"], cfg["lambda"], cfg["n"], cfg["mode"], cfg["seed"], float(cfg["beta"]),
                      cfg["family"])
    runner = finite_term_experiment if cfg["experiment"] == "finite" else infinite_term_experiment
    reports = []
    for s in names:
        kwargs = {"budget": int(cfg["budget"])} if s == "budget_bruteforce_mauler" else {}
        reports.append(runner(make_strategy(s, **kwargs), sc, trials=int(cfg["trials"])))
    _write_report(cfg, "experiment", [r.to_json() for r in reports], [r.csv_row() for r in reports], args)
    return EXIT_OK


def cmd_attack(args) -> int:
    from .circuits import is_functionally_equal
    from .dequantum import (ExtractionError, attack_extract, implementation_of,
                            oracle_learner_baseline, sample_family)
    cfg = resolve_config(args)
    lb = int(cfg["lambda_bits"])
    if getattr(args, "n", None) is not None and getattr(args, "lambda_bits", None) is None:
        if args.n % 3:
            raise InputError("attack circuits have n = 3 * lambda_bits")
        lb = args.n // 3
    trials = int(cfg["trials"])
    rows, traces = [], []
    verdict_all = True
    for t in range(trials):
        rng = make_rng(cfg["seed"], t)
        c = sample_family(lb, None, rng)
        if cfg["attack"] == "learner":
            res = oracle_learner_baseline(c, c.layout, int(cfg["budget"]), rng)
            traces.append({"trial": t, "queries": res.queries, "success": res.success})
            rows.append({"trial": t, "success": int(res.success)})
            continue
        impl = implementation_of(c)
        try:
            ext = attack_extract(impl, c.layout)
        except ExtractionError as exc:
            traces.append({"trial": t, "error": str(exc)})
            verdict_all = False
            continue
        equal = ext.circuit == c and (c.n > 20 or is_functionally_equal(ext.circuit, c, c.n))
        no_direct_a = c.a not in impl.log.direct_inputs()
        verdict_all &= equal and no_direct_a
        traces.append({"trial": t, "queries_issued": impl.log.direct_inputs(),
                       "homomorphic_calls": impl.log.homomorphic_calls(),
                       "ciphertexts": {"ct1": "<redacted>", "ct2": "<redacted>"},
                       "lo_token": ext.trace["lo_token"], "extraction": "ok",
                       "equality_verdict": equal, "direct_query_at_a": not no_direct_a})
        rows.append({"trial": t, "equality_verdict": int(equal)})
    payload = {"attack": cfg["attack"], "n": 3 * lb, "trials": traces}
    if cfg["attack"] != "learner":
        payload["equality_verdict"] = verdict_all
    else:
        payload["successes"] = sum(r["success"] for r in rows)
    _write_report(cfg, "attack", payload, rows, args)
    return EXIT_OK if cfg["attack"] == "learner" or verdict_all else EXIT_FAIL


# --- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qlease", description="Simulated quantum software leasing.")
    p.add_argument("--version", action="version", version=f"qlease {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--q", type=int)
        sp.add_argument("--lambda", dest="lam", type=int)
        sp.add_argument("--n", type=int)
        sp.add_argument("--mode", choices=("ideal", "toy"))
        sp.add_argument("--seed", type=int)
        sp.add_argument("--config")
        sp.add_argument("--out")
        sp.add_argument("--format", choices=("json", "csv"))
        sp.add_argument("--timestamp", action="store_true", help="record wall-clock time in reports")
        return sp

    s = common(sub.add_parser("selftest", help="check the Fourier/projector/gentle-measurement identities"))
    s.add_argument("--tolerance", type=float, default=1e-9)
    s.add_argument("--cases", type=int, default=50)
    s.add_argument("--force-failure", action="store_true")
    s.set_defaults(func=cmd_selftest)

    s = common(sub.add_parser("sample-circuit", help="write a random searchable circuit file"))
    s.add_argument("--family", choices=("point", "wildcard", "affine", "plaintext_eq"))
    s.set_defaults(func=cmd_sample_circuit)

    s = common(sub.add_parser("lease", help="lease a circuit file"))
    s.add_argument("--circuit")
    s.add_argument("--lease")
    s.set_defaults(func=cmd_lease)

    s = common(sub.add_parser("run", help="run a lease on one input"))
    s.add_argument("--lease")
    s.add_argument("--input")
    s.set_defaults(func=cmd_run)

    s = common(sub.add_parser("check", help="check a returned lease"))
    s.add_argument("--lease")
    s.set_defaults(func=cmd_check)

    s = common(sub.add_parser("experiment", help="run a lessor-security experiment"))
    s.add_argument("--trials", type=int)
    s.add_argument("--strategy", help="comma-separated strategy names")
    s.add_argument("--budget", type=int)
    s.add_argument("--family", choices=("point", "wildcard", "affine", "plaintext_eq"))
    s.add_argument("--beta", type=float)
    s.add_argument("--experiment", choices=("finite", "infinite"))
    s.set_defaults(func=cmd_experiment)

    s = common(sub.add_parser("attack", help="de-quantumization attack demo"))
    s.add_argument("--trials", type=int)
    s.add_argument("--lambda-bits", dest="lambda_bits", type=int)
    s.add_argument("--budget", type=int)
    s.add_argument("--attack", choices=("extract", "learner"))
    s.set_defaults(func=cmd_attack)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "attack" and args.n is not None and args.lambda_bits is None:
        args.lambda_bits = max(1, args.n // 3)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"qlease: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SimulationCapError as exc:
        print(f"qlease: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"qlease: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
