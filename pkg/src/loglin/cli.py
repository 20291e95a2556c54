"""Command-line front end.

    loglin mc3   --data czech.csv --mode decomposable --seed 7
    loglin gibbs --data czech.csv --formula "freq ~ a*c + b*c" --out samples.csv
    loglin exact --data czech.csv --model "[a,c,e][b,c][d,e][f]" --cov
    loglin replay manifest.json

Exit codes: 2 bad flags, 3 data errors, 4 invalid model, 5 model not
decomposable.  Every run writes a JSON manifest (to --manifest, else to
stderr) that `replay` can re-execute.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import hashlib
import io
import json
import os
import sys
import time
from importlib.metadata import PackageNotFoundError, version

import numpy as np

from .graph import (NotDecomposableError, find_chordless_cycle, interaction_graph,
                    is_graphical, maximal_cliques)
from .mc3 import InvalidModelError, SearchConfig, mc3_run
from .model import ModelError, Model, format_model, parse_model
from .posterior import find_post_cov, find_post_mean, gibbs_sampler
from .table import TableError, read_table

EXIT_USAGE, EXIT_DATA, EXIT_MODEL, EXIT_NOT_DECOMPOSABLE = 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def _fmt(x: float) -> str:
    return f"{x:.7g}"


def _resolve_seed(seed):
    if seed is not None:
        return seed
    env = os.environ.get("LOGLIN_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CliError(EXIT_USAGE, f"LOGLIN_SEED={env!r} is not an integer") from None
    return int(np.random.SeedSequence().entropy % (2**63))


def _load(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
        table = read_table(path)
    except (OSError, TableError, UnicodeDecodeError) as exc:
        raise CliError(EXIT_DATA, f"--data {path}: {exc}") from None
    return table, hashlib.sha256(raw).hexdigest()


def _model_from_args(args, table):
    text = args.formula if args.formula is not None else args.model
    flag = "--formula" if args.formula is not None else "--model"
    if text is None:
        raise CliError(EXIT_USAGE, "one of --formula or --model is required")
    try:
        return parse_model(text, table.names)
    except ModelError as exc:
        raise CliError(EXIT_MODEL, f"{flag}: {exc}") from None


def _positive(flag, value, allow_zero=False):
    if value < 0 or (value == 0 and not allow_zero):
        raise CliError(EXIT_USAGE, f"{flag} must be {'>= 0' if allow_zero else '> 0'}")


def _write_rows(out, header, rows, fmt):
    if fmt == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return
    widths = [max(len(str(h)), *(len(str(r[k])) for r in rows)) if rows else len(str(h))
              for k, h in enumerate(header)]
    out.write("  ".join(str(h).rjust(wd) for h, wd in zip(header, widths)) + "\n")
    for r in rows:
        out.write("  ".join(str(x).rjust(wd) for x, wd in zip(r, widths)) + "\n")


def cmd_mc3(args, out):
    _positive("--iterations", args.iterations)
    _positive("--replicates", args.replicates)
    _positive("--top", args.top)
    _positive("--alpha", args.alpha)
    if args.threads is not None:
        _positive("--threads", args.threads)
    table, digest = _load(args.data)
    init = None
    if args.init:
        try:
            init = parse_model(args.init, table.names)
        except ModelError as exc:
            raise CliError(EXIT_MODEL, f"--init: {exc}") from None
    config = SearchConfig(mode=args.mode, alpha=args.alpha, iterations=args.iterations,
                          replicates=args.replicates, seed=args.seed, init_model=init,
                          threads=args.threads,
                          score_neighbourhoods=not args.visited_only)
    try:
        records = mc3_run(config, table)
    except InvalidModelError as exc:
        raise CliError(EXIT_MODEL, f"--init: {exc}") from None
    top = records[:args.top]
    if args.format == "json":
        json.dump([r.to_dict() for r in top], out, indent=2)
        out.write("\n")
    else:
        rows = [(k + 1, r.model, _fmt(r.log_score), r.visit_count) for k, r in enumerate(top)]
        _write_rows(out, ("rank", "formula", "logPostProb", "visits"), rows, args.format)
    return digest


def cmd_gibbs(args, out):
    _positive("--samples", args.samples)
    _positive("--burnin", args.burnin, allow_zero=True)
    _positive("--alpha", args.alpha)
    if args.burnin >= args.samples:
        raise CliError(EXIT_USAGE, "--burnin must be smaller than --samples")
    table, digest = _load(args.data)
    gc = _model_from_args(args, table)
    samples = gibbs_sampler(gc, table, alpha=args.alpha, n_samples=args.samples, seed=args.seed)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(samples.to_csv())
    mean, var = samples.mean(args.burnin), samples.var(args.burnin)
    _report_moments(out, format_model(gc), samples.column_names, mean, var, None, args.format)
    return digest


def _not_decomposable_message(gc) -> str:
    g = interaction_graph(gc)
    cycle = find_chordless_cycle(g)
    if cycle:
        return (f"{format_model(gc)} is not decomposable: chordless cycle "
                + "-".join(cycle + cycle[:1]))
    cliques = "".join("[" + ",".join(sorted(c)) + "]" for c in maximal_cliques(g))
    return (f"{format_model(gc)} is not decomposable: generators differ from "
            f"the cliques {cliques} of its independence graph")


def cmd_exact(args, out):
    _positive("--alpha", args.alpha)
    table, digest = _load(args.data)
    gc = _model_from_args(args, table)
    if not is_graphical(gc) or find_chordless_cycle(interaction_graph(gc)):
        raise CliError(EXIT_NOT_DECOMPOSABLE, _not_decomposable_message(gc))
    try:
        mean = find_post_mean(gc, table, args.alpha)
        cov = find_post_cov(gc, table, args.alpha)
    except NotDecomposableError as exc:
        raise CliError(EXIT_NOT_DECOMPOSABLE, str(exc)) from None
    names = Model(gc, table.factors).names
    _report_moments(out, format_model(gc), names, mean, np.diag(cov),
                    cov if args.cov else None, args.format)
    return digest


def _report_moments(out, model, names, mean, var, cov, fmt):
    if fmt == "json":
        doc = {"model": model, "terms": list(names),
               "mean": [float(x) for x in mean], "variance": [float(x) for x in var]}
        if cov is not None:
            doc["covariance"] = [[float(x) for x in row] for row in cov]
        json.dump(doc, out, indent=2)
        out.write("\n")
        return
    rows = [(n, _fmt(m), _fmt(v)) for n, m, v in zip(names, mean, var)]
    _write_rows(out, ("term", "mean", "variance"), rows, fmt)
    if cov is not None:
        out.write("\n")
        _write_rows(out, ("term", *names),
                    [(n, *(_fmt(x) for x in row)) for n, row in zip(names, cov)], fmt)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="loglin",
        description="Bayesian log-linear analysis of contingency tables "
                    "(Poisson sampling, conjugate prior).")
    p.add_argument("--version", action="version", version=_tool_version())
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--data", required=True, help="CSV with factor columns and 'freq'")
        sp.add_argument("--alpha", type=float, default=1.0, help="prior weight (default 1)")
        sp.add_argument("--format", choices=("table", "csv", "json"), default="table")
        sp.add_argument("--manifest", help="write the run manifest here instead of stderr")
        if seed:
            sp.add_argument("--seed", type=int, default=None,
                            help="RNG seed (falls back to $LOGLIN_SEED, then fresh entropy)")

    m = sub.add_parser(
        "mc3", help="MC3 model search",
        description="MC3 search. 'logPostProb' is the log marginal likelihood up to "
                    "a constant shared by all models of the mode (uniform model prior).")
    common(m)
    m.add_argument("--mode", choices=("hierarchical", "graphical", "decomposable"),
                   default="decomposable")
    m.add_argument("--iterations", type=int, default=5000)
    m.add_argument("--replicates", type=int, default=1)
    m.add_argument("--threads", type=int, default=None,
                   help="max concurrent replicate chains (default: all CPUs)")
    m.add_argument("--init", help="initial model in bracket or formula notation")
    m.add_argument("--top", type=int, default=10)
    m.add_argument("--visited-only", action="store_true",
                   help="report only models the chain visited, not their scored neighbours")

    g = sub.add_parser("gibbs", help="blocked Gibbs sampler for the posterior of theta")
    common(g)
    g.add_argument("--formula")
    g.add_argument("--model")
    g.add_argument("--samples", type=int, default=15000)
    g.add_argument("--burnin", type=int, default=5000)
    g.add_argument("--out", help="write all samples to this CSV")

    e = sub.add_parser("exact", help="exact posterior moments of a decomposable model")
    common(e, seed=False)
    e.add_argument("--formula")
    e.add_argument("--model")
    e.add_argument("--cov", action="store_true", help="also print the full covariance")

    r = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    r.add_argument("manifest_file")
    return p


COMMANDS = {"mc3": cmd_mc3, "gibbs": cmd_gibbs, "exact": cmd_exact}


def _config_of(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("manifest",)}


def run(argv, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        with contextlib.redirect_stderr(err), contextlib.redirect_stdout(out):
            args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        expected_digest = None
        if args.command == "replay":
            with open(args.manifest_file, encoding="utf-8") as fh:
                manifest = json.load(fh)
            expected_digest = manifest["dataset_sha256"]
            args = argparse.Namespace(**manifest["config"], manifest=None)
        if "seed" in vars(args):
            args.seed = _resolve_seed(args.seed)
        start = time.perf_counter()
        buf = io.StringIO()
        digest = COMMANDS[args.command](args, buf)
        if expected_digest is not None and digest != expected_digest:
            raise CliError(EXIT_DATA, f"--data {args.data}: contents differ from the manifest")
        out.write(buf.getvalue())
    except CliError as exc:
        err.write(f"loglin: error: {exc}\n")
        return exc.code
    manifest = {
        "command": args.command,
        "config": _config_of(args),
        "seed": getattr(args, "seed", None),
        "dataset_sha256": digest,
        "tool_version": _tool_version(),
        "wall_seconds": round(time.perf_counter() - start, 6),
    }
    text = json.dumps(manifest, indent=2)
    if args.manifest:
        with open(args.manifest, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        err.write(text + "\n")
    return 0


def main(argv=None):
    sys.exit(run(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
