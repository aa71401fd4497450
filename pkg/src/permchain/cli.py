"""Command-line entry point: ``permchain <subcommand> ...``.

Every JSON output carries the tool version, a schema id, an echo of the
configuration (minus ``--workers``, which never changes results) and the
seeds used. Exit codes: 0 success, 1 validation failure or refused/non-exact
certificate, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import resources
from typing import Optional, Sequence


from . import __version__
from .annealed import coupling_batch, coupling_summary
from .core import (
    ChainError,
    Permutation,
    PermutedChain,
    StochasticMatrix,
    check_assumptions,
    load_matrix,
    load_permutation,
    power,
    save_matrix,
    save_permutation,
    stats,
)
from .expansion import CertificateRefused, alpha_exact, alpha_search, certify, EXACT_N_CAP
from .generators import (
    doubling_perm,
    inverse_perm,
    lazy_cycle,
    no_cutoff_graph,
    random_perm,
    random_regular_digraph,
)
from .mixing import StartMode, ensemble_experiment, mixing_time, tv_profile

log = logging.getLogger("permchain")

SCHEMA_VERSION = 1


class CliError(Exception):
    pass


def _envelope(command: str, config: dict, result: dict) -> dict:
    return {
        "tool": "permchain",
        "version": __version__,
        "schema": f"permchain/{command}/v{SCHEMA_VERSION}",
        "command": command,
        "config": config,
        "result": result,
    }


def load_schema(command: str, version: int = SCHEMA_VERSION) -> dict:
    """The JSON schema shipped for ``command`` output."""
    text = resources.files("permchain").joinpath("schemas", f"{command}.v{version}.json").read_text(encoding="utf-8")
    return json.loads(text)


def _dumps(obj: dict) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _write(text: str, path: Optional[str]) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _starts_arg(value: str):
    if value == "all":
        return "all"
    try:
        count = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("--starts takes 'all' or a positive integer") from None
    if count < 1:
        raise argparse.ArgumentTypeError("--starts count must be >= 1")
    return count


def _seed_arg(value: str) -> int:
    seed = int(value, 0)
    if not 0 <= seed < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return seed


def _start_mode(starts, seed: int) -> StartMode:
    return StartMode.exhaustive() if starts == "all" else StartMode.sampled(starts, seed)


def _load_matrix_arg(args) -> tuple[StochasticMatrix, dict]:
    if getattr(args, "matrix", None):
        return load_matrix(args.matrix), {"matrix": args.matrix}
    if getattr(args, "n", None):
        return lazy_cycle(args.n), {"matrix": f"lazy-cycle:{args.n}"}
    raise CliError("one of --matrix or --n is required")


def _load_perm_arg(value: str, n: int) -> Permutation:
    if value == "identity":
        return Permutation.identity(n)
    return load_permutation(value)


# ---------------------------------------------------------------------------
# subcommands


def cmd_analyze(args) -> int:
    p, cfg = _load_matrix_arg(args)
    st = stats(p)
    cfg["seed"] = None
    result = {"stats": st.to_dict(), "assumptions": check_assumptions(st).to_dict(), "nnz": p.nnz}
    _write(_dumps(_envelope("analyze", cfg, result)), args.out)
    return 0


def cmd_mix(args) -> int:
    p, cfg = _load_matrix_arg(args)
    chain = PermutedChain(p, _load_perm_arg(args.perm, p.n))
    mode = _start_mode(args.starts, args.seed)
    report = mixing_time(chain, args.eps, mode, args.t_cap, workers=args.workers)
    t_max = max([t for t in report.t_mix if t is not None], default=report.t_cap)
    profile = tv_profile(chain, args.start, t_max)
    cfg.update(
        {"perm": args.perm, "eps": args.eps, "t_cap": args.t_cap, "starts": args.starts, "seed": args.seed, "start": args.start}
    )
    doc = _dumps(_envelope("mix", cfg, {"report": report.to_dict(), "profile_start": args.start}))
    csv = profile.to_csv()
    if args.out:
        _write(doc, args.out + ".json")
        _write(csv, args.out + ".csv")
    else:
        _write(csv if args.format == "csv" else doc, None)
    return 0


def cmd_cutoff(args) -> int:
    p, cfg = _load_matrix_arg(args)
    mode = None if args.starts == "all" else StartMode.sampled(args.starts, 0)
    summary = ensemble_experiment(p, args.seeds, args.seed, args.eps, mode, args.t_cap, workers=args.workers)
    cfg.update({"seeds": args.seeds, "seed": args.seed, "eps": args.eps, "t_cap": args.t_cap, "starts": args.starts})
    _write(_dumps(_envelope("cutoff", cfg, summary.to_dict())), args.out)
    return 0


def cmd_simulate(args) -> int:
    p, cfg = _load_matrix_arg(args)
    out_t, logw, _ = coupling_batch(p, args.x0, args.t, args.runs, args.seed)
    rows = ["run,T,path_entropy"]
    for r, (T, lw) in enumerate(zip(out_t.tolist(), logw.tolist())):
        ent = repr(0.0 - lw / args.t) if args.t > 0 else ""
        rows.append(f"{r},{T if T >= 0 else 'survived'},{ent}")
    csv = "\n".join(rows) + "\n"
    summary = coupling_summary(out_t, args.t, p.n)
    if args.t > 0:
        ent = 0.0 - logw / args.t
        summary["path_entropy_mean"] = float(ent.mean())
    summary["entropy_rate"] = stats(p).entropy_rate
    cfg.update({"runs": args.runs, "t": args.t, "seed": args.seed, "x0": args.x0})
    doc = _dumps(_envelope("simulate", cfg, summary))
    if args.out:
        _write(csv, args.out + ".csv")
        _write(doc, args.out + ".json")
    else:
        _write(doc if args.format == "json" else csv, None)
    return 0


def cmd_expansion(args) -> int:
    p, cfg = _load_matrix_arg(args)
    perm = _load_perm_arg(args.perm, p.n)
    mode = args.mode or ("exact" if p.n <= EXACT_N_CAP else "sampled")
    cert = alpha_exact(p, perm) if mode == "exact" else alpha_search(p, perm, args.samples, args.seed)
    cfg.update({"perm": args.perm, "mode": mode, "samples": args.samples, "seed": args.seed})
    _write(_dumps(_envelope("expansion", cfg, cert.to_dict())), args.out)
    return 0 if cert.mode == "exact" else 1


def cmd_certify(args) -> int:
    p, cfg = _load_matrix_arg(args)
    perm = _load_perm_arg(args.perm, p.n)
    cfg.update({"perm": args.perm, "eps": args.eps, "samples": args.samples, "seed": args.seed})
    try:
        cert = certify(p, perm, args.eps, args.samples, args.seed)
    except CertificateRefused as exc:
        doc = _envelope("certify", cfg, {"refused": True, "hypothesis": exc.hypothesis, "reason": str(exc)})
        _write(_dumps(doc), args.out)
        print(f"error: certificate refused: {exc}", file=sys.stderr)
        return 1
    result = {"refused": False, **cert.to_dict()}
    _write(_dumps(_envelope("certify", cfg, result)), args.out)
    return 0 if cert.exact else 1


def cmd_generate(args) -> int:
    kind = args.kind
    need = {"n"} | ({"seed"} if kind in ("random-perm", "random-regular", "no-cutoff") else set())
    for name in need:
        if getattr(args, name) is None:
            raise CliError(f"generate {kind} requires --{name}")
    if kind in ("lazy-cycle", "uniform", "random-regular", "no-cutoff"):
        graph = None
        if kind == "lazy-cycle":
            m = lazy_cycle(args.n)
        elif kind == "uniform":
            m = StochasticMatrix.uniform(args.n)
        elif kind == "random-regular":
            graph, m = random_regular_digraph(args.n, args.d, args.seed)
        else:
            graph, m = no_cutoff_graph(args.n, args.seed)
        if args.k and args.k > 1:
            m = power(m, args.k)
        save_matrix(m, args.out if args.out else sys.stdout)
        if graph is not None and args.edges:
            _write(graph.to_edge_list(), args.edges)
        return 0
    if kind == "identity-perm":
        perm = Permutation.identity(args.n)
    elif kind == "doubling-perm":
        perm = doubling_perm(args.n, args.a)
    elif kind == "inverse-perm":
        perm = inverse_perm(args.n)
    else:
        perm = random_perm(args.n, args.seed)
    save_permutation(perm, args.out if args.out else sys.stdout)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="permchain", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"permchain {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, perm=False, seed=True):
        src = sp.add_mutually_exclusive_group()
        src.add_argument("--matrix", help="matrix file ('n nnz' header, then 'row col prob' lines)")
        src.add_argument("--n", type=int, help="use the lazy cycle on n states instead of --matrix")
        if perm:
            sp.add_argument("--perm", default="identity", help="permutation file, or 'identity'")
        if seed:
            sp.add_argument("--seed", type=_seed_arg, default=0, help="64-bit master seed")
        sp.add_argument("--out", help="output path (prefix for commands writing two files)")
        sp.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="worker threads; never changes output")

    sp = sub.add_parser("analyze", help="entropy rate and chain statistics")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("mix", help="TV profile and mixing times for one permutation")
    common(sp, perm=True)
    sp.add_argument("--eps", type=float, nargs="+", default=[0.25, 0.75])
    sp.add_argument("--t-cap", type=int, default=None)
    sp.add_argument("--starts", type=_starts_arg, default="all")
    sp.add_argument("--start", type=int, default=0, help="start state of the emitted profile")
    sp.add_argument("--format", choices=["json", "csv"], default="json", help="stdout artifact when --out is absent")
    sp.set_defaults(func=cmd_mix)

    sp = sub.add_parser("cutoff", help="random-permutation ensemble")
    common(sp)
    sp.add_argument("--seeds", type=int, default=5)
    sp.add_argument("--eps", type=float, nargs="+", default=[0.25, 0.75])
    sp.add_argument("--t-cap", type=int, default=None)
    sp.add_argument("--starts", type=_starts_arg, default=32)
    sp.set_defaults(func=cmd_cutoff)

    sp = sub.add_parser("simulate", help="annealed coupling runs")
    common(sp)
    sp.add_argument("--runs", type=int, default=1000)
    sp.add_argument("--t", type=int, default=50)
    sp.add_argument("--x0", type=int, default=0)
    sp.add_argument("--format", choices=["json", "csv"], default="json", help="stdout artifact when --out is absent")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("expansion", help="expansion coefficient certificate")
    common(sp, perm=True)
    sp.add_argument("--mode", choices=["exact", "sampled"], default=None)
    sp.add_argument("--samples", type=int, default=64)
    sp.set_defaults(func=cmd_expansion)

    sp = sub.add_parser("certify", help="full deterministic-permutation certificate")
    common(sp, perm=True)
    sp.add_argument("--eps", type=float, default=0.25)
    sp.add_argument("--samples", type=int, default=64)
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("generate", help="write example matrices and permutations")
    sp.add_argument(
        "kind",
        choices=[
            "lazy-cycle",
            "uniform",
            "random-regular",
            "no-cutoff",
            "identity-perm",
            "doubling-perm",
            "inverse-perm",
            "random-perm",
        ],
    )
    sp.add_argument("--n", type=int)
    sp.add_argument("--a", type=int, default=2, help="multiplier for doubling-perm")
    sp.add_argument("--d", type=int, default=2, help="degree for random-regular")
    sp.add_argument("--k", type=int, default=1, help="emit the k-th power of the matrix")
    sp.add_argument("--seed", type=_seed_arg, default=None)
    sp.add_argument("--out", help="output file (stdout if absent)")
    sp.add_argument("--edges", help="also write the graph edge list here")
    sp.set_defaults(func=cmd_generate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr, format="%(message)s")
    if getattr(args, "workers", 1) < 1:
        parser.error("--workers must be >= 1")
    try:
        return args.func(args)
    except (ChainError, CliError, ValueError, IndexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
