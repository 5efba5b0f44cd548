"""Command-line front end.

Every report is JSON (or CSV with a ``# config:`` comment line) and echoes the
configuration that produced it, including the seed. Exit codes: 0 success,
1 validation failure, 2 an undetermined verdict under ``--strict``, 64 usage
errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .complex import ComplexError, Truncation, WeightedComplex
from .defect import SingularSystemError, check_complex_property, defect_sequence, local_balancedness, tprime_sequence
from .generators import FAMILIES, ComplexGenerator
from .hodge import betti, harmonic_eigenform_check, hodge_decompose, spectrum, supersymmetry_gap
from .links import TruncationWarning, link_of
from .operators import chain_defects, random_cochain
from .recurrence import ClassificationPolicy, _jsonable, classify, link_exhaustion
from .walks import mc_return_probability, set_threads
from .wsc import dumps as wsc_dumps
from .wsc import read_wsc, write_wsc

EXIT_OK, EXIT_INVALID, EXIT_UNDETERMINED, EXIT_USAGE = 0, 1, 2, 64


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    family: str | None = None
    params: dict = field(default_factory=dict)
    levels: list[int] = field(default_factory=list)
    seed: int = 0
    tol: float = 1e-12
    threads: int = 1
    deterministic: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise ValueError("tolerances must be positive")

    def echo(self) -> dict:
        d = {"command": self.command, "family": self.family, "params": self.params, "levels": self.levels,
             "seed": self.seed, "tol": self.tol, "deterministic": self.deterministic, "version": __version__}
        d.update(self.extra)
        return _jsonable(d)


def _parse_params(items: list[str] | None) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise argparse.ArgumentTypeError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(_jsonable(payload), sort_keys=True, indent=1, allow_nan=False) + "\n"
    _write_text(text, out)


def _write_text(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _levels(args) -> list[int]:
    lo = args.min_level if args.min_level is not None else 1
    return list(range(lo, args.levels + 1))


def _source(args) -> tuple[WeightedComplex, Truncation | None]:
    if getattr(args, "input", None):
        return read_wsc(args.input), None
    if not args.family:
        raise ComplexError("give --family or an input file")
    gen = ComplexGenerator(args.family, _parse_params(args.param))
    trunc = gen.truncation(args.level)
    return trunc.complex, trunc


def _resolve(trunc: Truncation | None, text: str) -> tuple[int, ...]:
    if trunc is None:
        trunc = Truncation(WeightedComplex({}, {}), 0, "file")
    return trunc.simplex(text)


# subcommands -----------------------------------------------------------------


def cmd_gen(args, cfg: RunConfig) -> int:
    cx, _ = _source(args)
    if args.output in (None, "-"):
        sys.stdout.write(wsc_dumps(cx))
    else:
        write_wsc(cx, args.output)
    return EXIT_OK


def cmd_validate(args, cfg: RunConfig) -> int:
    try:
        cx = read_wsc(args.file)
    except (ComplexError, OSError) as exc:
        _emit({"config": cfg.echo(), "valid": False, "error": str(exc)}, args.output)
        return EXIT_INVALID
    defects = chain_defects(cx)
    ok = all(v == 0 for v in defects.values())
    _emit({"config": cfg.echo(), "valid": ok, "f_vector": cx.f_vector(), "include_empty": cx.include_empty,
           "chain_defects": defects}, args.output)
    return EXIT_OK if ok else EXIT_INVALID


def cmd_links(args, cfg: RunConfig) -> int:
    cx, trunc = _source(args)
    rho = _resolve(trunc, args.rho)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", TruncationWarning)
        link = link_of(rho, cx)
    bal, exact = local_balancedness(rho, cx)
    payload = {"config": cfg.echo(), "link": link.to_json(), "volume": link.volume(),
               "interior": link.interior.tolist(), "local_balancedness": bal, "balancedness_exact": exact,
               "warnings": [str(w.message) for w in caught]}
    _emit(payload, args.output)
    return EXIT_OK


def _policy(args) -> ClassificationPolicy:
    return ClassificationPolicy(eps=args.eps, window=args.window, capacity_threshold=args.capacity_threshold,
                                tol=args.tol)


def cmd_classify_link(args, cfg: RunConfig) -> int:
    gen = ComplexGenerator(args.family, _parse_params(args.param))
    exh = link_exhaustion(gen, args.rho, args.root)
    mc = None
    if args.mc_walks:
        lvl = exh.level(args.levels)
        mc = mc_return_probability(lvl.conductance, root=lvl.root, ground=lvl.ground, n_walks=args.mc_walks,
                                   max_steps=args.mc_max_steps, seed=cfg.seed)
    report = classify(exh, _levels(args), _policy(args), mc=mc)
    if args.csv:
        _write_text(f"# config: {json.dumps(cfg.echo(), sort_keys=True)}\n" + report.to_csv(), args.csv)
    _emit({"config": cfg.echo(), "report": report.to_json()}, args.output)
    return EXIT_UNDETERMINED if args.strict and report.verdict == "Undetermined" else EXIT_OK


def cmd_defect(args, cfg: RunConfig) -> int:
    gen = ComplexGenerator(args.family, _parse_params(args.param))
    levels = [0] if gen.finite else _levels(args)
    cls = classify(link_exhaustion(gen, args.rho, args.root), levels, _policy(args), monopole=False)
    report = defect_sequence(gen, args.rho, levels, v0=args.root, tol=args.tol, rel_tol=args.rel_tol,
                             burn_in=args.burn_in, classification=cls)
    _emit({"config": cfg.echo(), "report": report.to_json()}, args.output)
    return EXIT_UNDETERMINED if args.strict and cls.verdict == "Undetermined" else EXIT_OK


def cmd_property(args, cfg: RunConfig) -> int:
    gen = ComplexGenerator(args.family, _parse_params(args.param))
    levels = [0] if gen.finite else _levels(args)
    verdict = check_complex_property(gen, args.rho, levels, _policy(args))
    _emit({"config": cfg.echo(), "verdict": verdict.to_json()}, args.output)
    return EXIT_UNDETERMINED if args.strict and verdict.holds is None else EXIT_OK


def cmd_tprime(args, cfg: RunConfig) -> int:
    gen = ComplexGenerator(args.family, _parse_params(args.param))
    levels = [0] if gen.finite else _levels(args)
    try:
        report = tprime_sequence(gen, args.sigma, levels, rho=args.rho, mode=args.mode, tol=args.tol)
    except SingularSystemError as exc:
        sys.stderr.write(f"tprime: {exc}\n")
        return EXIT_INVALID
    header = f"# config: {json.dumps(cfg.echo(), sort_keys=True)}\n"
    header += f"# relative_growth: {report.relative_growth!r} bounded: {report.bounded}\n"
    _write_text(header + report.to_csv(), args.output)
    return EXIT_OK


def cmd_hodge(args, cfg: RunConfig) -> int:
    cx, _ = _source(args)
    lo = -1 if cx.include_empty else 0
    table = {str(k): betti(cx, k) for k in range(lo, cx.dim + 1)}
    rng = np.random.default_rng(cfg.seed)
    splits = {}
    for k in range(lo, cx.dim + 1):
        if cx.count(k) == 0:
            continue
        s = hodge_decompose(random_cochain(cx, k, rng))
        splits[str(k)] = {**s.norms(), "orthogonality": s.orthogonality, "reconstruction": s.reconstruction,
                          "harmonic_residual": s.harmonic_residual}
    eig = {}
    for k in range(0, cx.dim):
        worst = 0.0
        for r in cx.simplices(k):
            rep = harmonic_eigenform_check(cx, r)
            if rep.up_residual is not None:
                worst = max(worst, rep.up_residual)
        eig[str(k)] = worst
    pairing = {str(k): supersymmetry_gap(cx, k) for k in range(lo, cx.dim)}
    _emit({"config": cfg.echo(), "betti": table, "splits": splits, "eigenform_up_residual": eig,
           "spectral_pairing_gap": pairing}, args.output)
    return EXIT_OK


def cmd_spectrum(args, cfg: RunConfig) -> int:
    cx, _ = _source(args)
    sp_ = spectrum(cx, args.tag, args.degree, args.count, args.method)
    _emit({"config": cfg.echo(), "spectrum": sp_.to_json()}, args.output)
    return EXIT_OK


def cmd_walk(args, cfg: RunConfig) -> int:
    if args.lattice:
        est = mc_return_probability(lattice_dim=args.lattice, n_walks=args.walks, max_steps=args.max_steps,
                                    escape_radius=args.radius, seed=cfg.seed)
    else:
        if not args.family:
            raise ComplexError("walk needs --lattice or --family")
        gen = ComplexGenerator(args.family, _parse_params(args.param))
        exh = link_exhaustion(gen, args.rho, args.root)
        lvl = exh.level(args.level)
        est = mc_return_probability(lvl.conductance, root=lvl.root, ground=lvl.ground, n_walks=args.walks,
                                    max_steps=args.max_steps, escape_radius=args.radius, seed=cfg.seed)
    _emit({"config": cfg.echo(), "estimate": est.to_json()}, args.output)
    return EXIT_OK


# parser ----------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="seed for all randomness (default 0)")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: all available)")
    p.add_argument("--deterministic", action="store_true", help="single worker, ordered reductions")
    p.add_argument("--strict", action="store_true", help="exit 2 when a verdict is Undetermined")
    p.add_argument("--tol", type=float, default=1e-12, help="relative residual for linear solves")
    p.add_argument("-o", "--output", default=None, help="output path (default stdout)")


def _add_family(p: argparse.ArgumentParser, required: bool = False, level: bool = True) -> None:
    p.add_argument("--family", choices=sorted(FAMILIES), required=required)
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="family parameter, repeatable")
    if level:
        p.add_argument("--level", type=int, default=4, help="truncation level (default 4)")


def _add_levels(p: argparse.ArgumentParser) -> None:
    p.add_argument("--levels", type=int, default=10, help="largest truncation level (default 10)")
    p.add_argument("--min-level", type=int, default=None, help="first level (default 1)")
    p.add_argument("--rho", default="apex", help="base simplex: a name such as apex, or '0,3', or 'empty'")
    p.add_argument("--root", type=int, default=None, help="link vertex used as root / v0")
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--capacity-threshold", type=float, default=1e-2)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="linkhodge", description="Weighted simplicial complexes, link recurrence and the dd defect.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="write a generated truncation as wsc-v1")
    _add_family(p, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("validate", help="check a wsc-v1 file")
    p.add_argument("file")
    _add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("links", help="link graph of a simplex")
    p.add_argument("input", nargs="?", help="wsc-v1 file (instead of --family)")
    _add_family(p)
    p.add_argument("--rho", default="apex")
    _add_common(p)
    p.set_defaults(func=cmd_links)

    p = sub.add_parser("classify-link", help="recurrence verdict for the link of a simplex")
    _add_family(p, required=True, level=False)
    _add_levels(p)
    p.add_argument("--mc-walks", type=int, default=0, help="Monte Carlo walks on the top level (0 = skip)")
    p.add_argument("--mc-max-steps", type=int, default=10_000)
    p.add_argument("--csv", default=None, help="also write (level, R_n, cap_n, Q(u_n)) as CSV")
    _add_common(p)
    p.set_defaults(func=cmd_classify_link)

    p = sub.add_parser("defect", help="dd defect of the monopole witness across levels")
    _add_family(p, required=True, level=False)
    _add_levels(p)
    p.add_argument("--rel-tol", type=float, default=0.01)
    p.add_argument("--burn-in", type=int, default=0)
    _add_common(p)
    p.set_defaults(func=cmd_defect)

    p = sub.add_parser("property", help="decide dd = 0 at a simplex from its link")
    _add_family(p, required=True, level=False)
    _add_levels(p)
    _add_common(p)
    p.set_defaults(func=cmd_property)

    p = sub.add_parser("tprime", help="minimum-norm solutions of d omega = 1_sigma across levels (CSV)")
    _add_family(p, required=True, level=False)
    _add_levels(p)
    p.add_argument("--sigma", default="root_edge")
    p.add_argument("--mode", choices=["link", "all", "sigma"], default=None)
    _add_common(p)
    p.set_defaults(func=cmd_tprime)

    p = sub.add_parser("hodge", help="Betti numbers, Hodge splits and eigenform checks")
    p.add_argument("input", nargs="?")
    _add_family(p)
    _add_common(p)
    p.set_defaults(func=cmd_hodge)

    p = sub.add_parser("spectrum", help="Laplacian eigenvalues")
    p.add_argument("input", nargs="?")
    _add_family(p)
    p.add_argument("--tag", choices=["up", "down", "hodge"], default="hodge")
    p.add_argument("--degree", type=int, default=0)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--method", choices=["auto", "dense", "lanczos"], default="auto")
    _add_common(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("walk", help="Monte Carlo return probability")
    p.add_argument("--lattice", type=int, default=None, help="walk on Z^d")
    _add_family(p)
    p.add_argument("--rho", default="apex")
    p.add_argument("--root", type=int, default=None)
    p.add_argument("--walks", type=int, default=100_000)
    p.add_argument("--max-steps", type=int, default=10_000)
    p.add_argument("--radius", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_walk)
    return parser


_ECHO_SKIP = {"func", "output", "csv", "command", "threads", "deterministic", "seed", "tol", "param", "family",
              "input", "file", "strict"}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    threads = 1 if args.deterministic else (args.threads or os.cpu_count() or 1)
    set_threads(threads)
    try:
        params = _parse_params(getattr(args, "param", None))
    except argparse.ArgumentTypeError as exc:
        parser.error(str(exc))
    levels = []
    if hasattr(args, "levels"):
        levels = _levels(args)
    extra = {k: v for k, v in sorted(vars(args).items()) if k not in _ECHO_SKIP and k != "levels"}
    cfg = RunConfig(args.command, getattr(args, "family", None), params, levels, args.seed, args.tol, threads,
                    args.deterministic, extra)
    try:
        return args.func(args, cfg)
    except (ComplexError, KeyError, ValueError) as exc:
        sys.stderr.write(f"linkhodge {args.command}: {exc}\n")
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
