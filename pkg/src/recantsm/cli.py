"""Command-line entry point: ``recantsm simulate|analyze|optimize|validate``."""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

from .analysis import DegenerateArrayError, DegenerateHypothesisError, abep_union_bound, pairwise_apeps
from .config import ConfigError, ExperimentConfig, parse_config
from .montecarlo import BerCurve, ber_csv, simulate_ber
from .patterns import PatternDomainError, PatternFormatError

SUBCOMMANDS = ("simulate", "analyze", "optimize", "validate")
BOUND_COLUMNS = ("snr_db", "bound_kind", "abep")
RANKING_COLUMNS = ("rank", "subset", "labels", "abep")
VALIDATE_COLUMNS = ("snr_db", "sim_ber", "ci_lo", "ci_hi")
CHECK_COLUMNS = ("check", "result", "detail")

# bounds above this are too loose for the below-bound check to mean anything
BOUND_CHECK_CEILING = 0.1


@dataclass(frozen=True)
class CodebookRanking:
    entries: tuple[tuple[tuple[int, ...], float], ...]

    def __len__(self):
        return len(self.entries)

    @property
    def best(self):
        return self.entries[0]

    @property
    def worst(self):
        return self.entries[-1]


def rank_codebooks(cfg: ExperimentConfig, kind: str | None = None) -> CodebookRanking:
    """Union bound at the ranking SNR for every ``choose``-subset of the pool.

    Subsets with an indistinguishable pattern pair get an infinite bound.
    Ties are broken by lexicographic subset order.
    """
    pool = cfg.pattern_pool
    k = cfg.choose or pool.P
    kind = kind or cfg.ranking_kind
    rho = 10.0 ** (cfg.ranking_snr_db / 10.0)
    rows = []
    for subset in itertools.combinations(range(pool.P), k):
        sm = cfg.sm_config(codebook=pool.subset(subset))
        try:
            # the single-antenna exact and asymptotic kinds return 1/2 for
            # identical hypotheses instead of raising; this kind always raises
            probe = abep_union_bound(sm, "asymptotic_high_snr", rho, cfg.analysis)
            val = probe if kind == "asymptotic_high_snr" else abep_union_bound(sm, kind, rho, cfg.analysis)
        except DegenerateHypothesisError:
            val = math.inf
        rows.append((subset, val))
    rows.sort(key=lambda r: (r[1], r[0]))
    return CodebookRanking(tuple(rows))


# -- output helpers --------------------------------------------------------------


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.10e}"


def bounds_table(cfg: ExperimentConfig, snr_db=None, kinds=None) -> list[tuple[float, str, float]]:
    sm = cfg.sm_config()
    rows = []
    for kind in kinds or cfg.bound_kinds:
        for s in snr_db if snr_db is not None else cfg.snr_db:
            rows.append((s, kind, abep_union_bound(sm, kind, 10.0 ** (s / 10.0), cfg.analysis)))
    return rows


def bounds_csv(rows) -> str:
    return _csv(BOUND_COLUMNS, [(f"{s:g}", k, _fmt(v)) for s, k, v in rows])


def pairs_csv(cfg: ExperimentConfig) -> str:
    sm = cfg.sm_config()
    out = []
    for kind in cfg.bound_kinds:
        for s in cfg.snr_db:
            for p, m, q, n, h, v in pairwise_apeps(sm, kind, 10.0 ** (s / 10.0), cfg.analysis):
                out.append((f"{s:g}", kind, p, m, q, n, h, _fmt(v)))
    return _csv(("snr_db", "bound_kind", "p", "m", "q", "n", "hamming", "apep"), out)


def ranking_csv(cfg: ExperimentConfig, ranking: CodebookRanking) -> str:
    pool = cfg.pattern_pool
    rows = []
    for rank, (subset, val) in enumerate(ranking.entries, 1):
        labels = " ".join(pool[i].label or f"p{i}" for i in subset)
        rows.append((rank, " ".join(map(str, subset)), labels, _fmt(val)))
    return _csv(RANKING_COLUMNS, rows)


def validation(cfg: ExperimentConfig, curve: BerCurve, bounds) -> tuple[str, str, bool]:
    """Side-by-side table and tolerance checks of simulation against the bounds."""
    kinds = list(dict.fromkeys(k for _, k, _ in bounds))
    lookup = {(s, k): v for s, k, v in bounds}
    reference = "exact" if "exact" in kinds else kinds[0]
    table, checks = [], []
    below = True
    for i, s in enumerate(curve.snr_db):
        vals = [lookup[(float(s), k)] for k in kinds]
        ref = lookup[(float(s), reference)]
        ok = "" if ref > BOUND_CHECK_CEILING else ("pass" if curve.ci_lo[i] <= ref else "fail")
        below &= ok != "fail"
        table.append(
            (f"{s:g}", _fmt(curve.ber[i]), _fmt(curve.ci_lo[i]), _fmt(curve.ci_hi[i]), *map(_fmt, vals), ok)
        )
    checks.append(
        ("sim_below_bound", "pass" if below else "fail", f"{reference} bound vs Wilson lower limit where bound <= 0.1")
    )
    # non-increasing within two Wilson intervals
    mono = True
    for i in range(1, len(curve.snr_db)):
        if curve.snr_db[i] > curve.snr_db[i - 1]:
            slack = 2 * ((curve.ci_hi[i] - curve.ci_lo[i]) + (curve.ci_hi[i - 1] - curve.ci_lo[i - 1]))
            mono &= bool(curve.ber[i] <= curve.ber[i - 1] + slack)
    checks.append(("ber_non_increasing", "pass" if mono else "fail", "within two Wilson intervals"))
    passed = below and mono
    header = (*VALIDATE_COLUMNS, *kinds, f"below_{reference}")
    return _csv(header, table), _csv(CHECK_COLUMNS, checks), passed


# -- driver ----------------------------------------------------------------------


def _threads(arg: int | None) -> int | None:
    if arg is not None:
        return arg
    env = os.environ.get("RECANT_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"RECANT_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError("RECANT_THREADS must be >= 1")
        return n
    return None


def _progress(quiet: bool):
    if quiet:
        return None
    start = time.monotonic()

    def report(block, trials, errors):
        counts = " ".join(f"{int(t)}/{int(e)}" for t, e in zip(trials, errors))
        print(f"  {time.monotonic() - start:7.1f}s  block {block}  trials/errors per SNR: {counts}", file=sys.stderr)

    return report


def run(subcommand: str, cfg: ExperimentConfig, out_dir: Path, pairs: bool = False, quiet: bool = True) -> int:
    """Run one subcommand and write its CSV files; returns the exit status."""
    out_dir = Path(out_dir)
    if subcommand == "simulate":
        curve = simulate_ber(cfg.sm_config(), progress=_progress(quiet))
        write_atomic(out_dir / "ber.csv", ber_csv(curve))
        return 0
    if subcommand == "analyze":
        write_atomic(out_dir / "bounds.csv", bounds_csv(bounds_table(cfg)))
        if pairs:
            write_atomic(out_dir / "pairs.csv", pairs_csv(cfg))
        return 0
    if subcommand == "optimize":
        if cfg.choose == 0:
            raise ConfigError("optimize needs [optimize] choose > 0")
        write_atomic(out_dir / "ranking.csv", ranking_csv(cfg, rank_codebooks(cfg)))
        return 0
    if subcommand == "validate":
        curve = simulate_ber(cfg.sm_config(), progress=_progress(quiet))
        # flush the simulation first so it survives an analysis failure
        write_atomic(out_dir / "ber.csv", ber_csv(curve))
        bounds = bounds_table(cfg)
        write_atomic(out_dir / "bounds.csv", bounds_csv(bounds))
        table, checks, passed = validation(cfg, curve, bounds)
        write_atomic(out_dir / "validate.csv", table)
        write_atomic(out_dir / "checks.csv", checks)
        if not quiet:
            sys.stderr.write(checks)
        return 0 if passed else 1
    raise ValueError(f"unknown subcommand {subcommand!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="recantsm", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True, metavar="{" + ",".join(SUBCOMMANDS) + "}")
    for name, help_ in (
        ("simulate", "Monte Carlo BER sweep -> ber.csv"),
        ("analyze", "analytical ABEP union bounds -> bounds.csv"),
        ("optimize", "rank pattern subsets by their union bound -> ranking.csv"),
        ("validate", "simulation next to every bound kind, with pass/fail checks"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, type=Path, help="INI experiment file")
        p.add_argument("--out", required=True, type=Path, help="output directory")
        p.add_argument("--seed", type=int, help="override [experiment] seed")
        p.add_argument("--threads", type=int, help="worker threads (default: $RECANT_THREADS or config)")
        p.add_argument("-q", "--quiet", action="store_true", help="no progress on stderr")
        if name == "analyze":
            p.add_argument("--pairs", action="store_true", help="also dump per-pair APEPs to pairs.csv")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        overrides = {}
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            overrides["seed"] = args.seed
        threads = _threads(args.threads)
        if threads is not None:
            if threads < 1:
                raise ConfigError("--threads must be >= 1")
            overrides["threads"] = threads
        if overrides:
            cfg = cfg.with_(**overrides)
        return run(args.command, cfg, args.out, pairs=getattr(args, "pairs", False), quiet=args.quiet)
    except ConfigError as exc:
        print(f"recantsm: config error: {exc}", file=sys.stderr)
        return 2
    except (
        ValueError,
        NotImplementedError,
        DegenerateHypothesisError,
        DegenerateArrayError,
        PatternDomainError,
        PatternFormatError,
        OSError,
    ) as exc:
        print(f"recantsm: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
