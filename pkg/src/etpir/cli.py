"""Command-line entry point: ``etpir <subcommand> ...``, JSON on stdout.

Exit codes: 0 success, 1 a check failed, 2 usage or parameter error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import audit as audit_mod
from .codes import build_grs, build_noise_code
from .field import DEFAULT_Q
from .linalg import first_singular_rows
from .net import deploy, load_messages, retrieve, save_bundle
from .plan import HIGH_E, LOW_E, SchemeParams, build_index_map, capacity, derive_counts, rho_min
from .scheme import build_scheme

SCHEMA = audit_mod.SCHEMA


class UsageError(Exception):
    pass


def _emit(doc: dict, compact: bool = True) -> None:
    if compact:
        print(json.dumps(doc, separators=(",", ":")))
    else:
        print(json.dumps(doc, indent=2))


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("ETPIR_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"ETPIR_SEED={env!r} is not an integer") from exc
    return int(np.random.SeedSequence().entropy % 2**63)


def _params(args) -> SchemeParams:
    for name in ("K", "N", "T", "E"):
        if getattr(args, name) is None:
            raise UsageError(f"-{name} is required")
    try:
        return SchemeParams(args.K, args.N, args.T, args.E, args.q)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _head(params: SchemeParams) -> dict:
    K, N, T, E = params.as_tuple()
    return {"schema": SCHEMA, "params": {"K": K, "N": N, "T": T, "E": E, "q": params.q},
            "regime": params.regime}


# -------------------------------------------------------------- commands

def cmd_capacity(args) -> int:
    for name in ("K", "N", "T", "E"):
        if getattr(args, name) is None:
            raise UsageError(f"-{name} is required")
    try:
        cap = capacity(args.K, args.N, args.T, args.E)
        rho = rho_min(args.K, args.N, args.T, args.E)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _emit({"capacity": str(cap), "rho_min": str(rho)})
    return 0


def cmd_plan(args) -> int:
    params = _params(args)
    c = derive_counts(params)
    doc = _head(params)
    doc["counts"] = {"L": c.L, "L_ext": c.L_ext, "L_n": c.L_n, "D_n": c.D_n, "I_iota": list(c.I_iota),
                     "N_eff": c.N_eff, "noise_total": c.noise_total, "download": c.download,
                     "rate": str(c.rate), "rho": str(c.rho), "capacity": str(params.capacity()),
                     "rho_min": str(params.rho_min())}
    if c.regime == LOW_E:
        imap = build_index_map(c)
        doc["table"] = {str(n): [imap.label(n, r) for r in range(c.D_n)] for n in range(1, params.N + 1)}
    _emit(doc)
    return 0


def cmd_codes(args) -> int:
    params = _params(args)
    F = params.field
    doc = _head(params)
    if params.regime == LOW_E:
        code = build_noise_code(params.N, params.E, F)
        doc["C_S"] = code.C_S.tolist()
        doc["H_S"] = code.H_S.tolist()
        doc["C_S_mds"] = first_singular_rows(code.C_S) is None if params.E else True
    else:
        grs = build_grs(params.N, params.E, F)
        doc["G"] = grs.G.tolist()
        doc["lambdas"] = list(grs.lambdas)
        doc["phis"] = list(grs.phis)
        doc["G_mds"] = first_singular_rows(grs.G.T) is None
    _emit(doc)
    return 0


def cmd_build(args) -> int:
    params = _params(args)
    seed = _seed(args)
    scheme = build_scheme(params, np.random.default_rng(seed), retry=args.retry)
    doc = _head(params)
    doc["seed"] = seed
    doc["mode"] = scheme.mode
    if scheme.regime == LOW_E:
        b = scheme.bundle
        doc["case"] = b.case
        doc["resamples"] = b.resamples
        doc["layers"] = [{"layer": lp.layer, "block": lp.block, "construction": lp.construction,
                          "mds_checked": lp.mds_checked, "fingerprint": lp.G_tilde.fingerprint()}
                         for lp in b.G_pairs]
        doc["G_desired"] = b.G_desired.fingerprint()
        if args.out:
            doc["saved"] = str(save_bundle(args.out, b))
    else:
        doc["G"] = scheme.grs.G.tolist()
    _emit(doc)
    return 0


def cmd_retrieve(args) -> int:
    seed = _seed(args)
    rng = np.random.default_rng(seed)
    if args.messages:
        params, W = load_messages(args.messages)
    else:
        params = _params(args)
        L = derive_counts(params).L
        W = params.field.random(rng, (params.K, L))
    if not 1 <= args.k <= params.K:
        raise UsageError(f"-k must be in [1, {params.K}]")
    scheme = build_scheme(params, rng, retry=args.retry)
    with deploy(params, W, mode=args.mode, seed=seed, scheme=scheme) as dep:
        res = retrieve(dep, args.k, rng)
    doc = _head(params)
    doc.update(seed=seed, transport=args.mode, k=args.k, ok=res.ok, error=res.error, **res.summary)
    doc["correct"] = bool(res.ok and np.array_equal(np.asarray(res.message, dtype=object) % params.q,
                                                    np.asarray(W[args.k - 1], dtype=object) % params.q))
    doc["message"] = [int(v) for v in res.message] if res.ok else None
    _emit(doc)
    return 0 if doc["correct"] else 1


def cmd_audit(args) -> int:
    params = _params(args)
    seed = _seed(args)
    rng = np.random.default_rng(seed)
    report = audit_mod.audit(params, rng, trials=args.trials, retry=args.retry, exhaustive=args.exhaustive)
    doc = report.to_dict()
    doc["seed"] = seed
    _emit(doc)
    return 0 if report.passed else 1


def cmd_sweep(args) -> int:
    rows = []
    ok = True
    seed = _seed(args)
    for K in range(1, args.max_k + 1):
        for N in range(2, args.max_n + 1):
            for T in range(1, N):
                for E in range(0, N):
                    params = SchemeParams(K, N, T, E, args.q)
                    c = derive_counts(params)
                    cap = params.capacity()
                    row = {"K": K, "N": N, "T": T, "E": E, "regime": c.regime,
                           "capacity": str(cap), "achieved_rate": str(c.rate),
                           "rho_min": str(params.rho_min()), "rho": str(c.rho),
                           "optimal": c.rate == cap and c.rho == params.rho_min()}
                    if args.build:
                        rng = np.random.default_rng([seed, K, N, T, E])
                        scheme = build_scheme(params, rng)
                        W = params.field.random(rng, (K, c.L))
                        res = audit_mod.run_retrieval(scheme, scheme.pad(W), 1, rng)
                        row["download"] = res.download
                        row["retrieved"] = bool(res.decoded is not None and
                                                np.array_equal(np.asarray(res.decoded, dtype=object) % params.q,
                                                               np.asarray(W[0], dtype=object) % params.q))
                        row["optimal"] = row["optimal"] and row["retrieved"] and res.download == c.download
                    ok = ok and row["optimal"]
                    rows.append(row)
    _emit({"schema": SCHEMA, "seed": seed, "rows": rows, "all_optimal": ok})
    return 0 if ok else 1


# ---------------------------------------------------------------- parser

def _add_params(p: argparse.ArgumentParser) -> None:
    p.add_argument("-K", type=int, help="number of messages")
    p.add_argument("-N", type=int, help="number of servers")
    p.add_argument("-T", type=int, help="colluding servers")
    p.add_argument("-E", type=int, help="eavesdropped servers")
    p.add_argument("-q", type=int, default=DEFAULT_Q, help="prime field size")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="etpir", description="ETPIR protocol lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("capacity", help="capacity and minimum common randomness")
    _add_params(p)
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("plan", help="derived counts and the answer table")
    _add_params(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("codes", help="noise code or GRS code for the parameters")
    _add_params(p)
    p.set_defaults(func=cmd_codes)

    p = sub.add_parser("build", help="build the precoding and summarize it")
    _add_params(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--retry", action="store_true")
    p.add_argument("--out", type=Path, help="save the LowE bundle as JSON")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("retrieve", help="deploy N servers and retrieve one message")
    _add_params(p)
    p.add_argument("-k", type=int, default=1, help="desired message index")
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=("inproc", "tcp_loopback"), default="inproc")
    p.add_argument("--retry", action="store_true")
    p.add_argument("--messages", type=Path, help="directory with messages.bin/messages.json")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("audit", help="run every check and emit an AuditReport")
    _add_params(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--retry", action="store_true")
    p.add_argument("--exhaustive", action="store_true", help="exact enumeration (tiny q, HighE)")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("sweep", help="rate/capacity table over a parameter grid")
    p.add_argument("--max-n", type=int, default=5)
    p.add_argument("--max-k", type=int, default=3)
    p.add_argument("-q", type=int, default=DEFAULT_Q)
    p.add_argument("--seed", type=int)
    p.add_argument("--build", action="store_true", help="also build each scheme and retrieve once")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
