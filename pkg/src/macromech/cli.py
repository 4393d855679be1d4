"""Command-line entry point: ``macromech run <config>``."""

from __future__ import annotations

import argparse
import json
import logging
import math
from pathlib import Path
import sys
import time

from . import __version__
from .config import load_config
from .errors import ConfigError, InvariantViolation, NumericalError
from .experiments import run_experiment

__all__ = ["main", "format_cell", "write_csv"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INVARIANT = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("macromech")


def format_cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    return f"{float(v):.17g}"


def write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_cell(v) for v in row) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if hasattr(obj, "item"):
        return _jsonable(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="macromech", description=__doc__)
    p.add_argument("--version", action="version", version=f"macromech {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment configuration")
    run.add_argument("config", type=Path)
    run.add_argument("--out", type=Path, default=Path("."), help="output directory")
    run.add_argument("--seed", type=int, default=None, help="override the configured seed")
    run.add_argument("--debug-invariants", action="store_true", help="assert I <= <b^dag b> on every row")
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("-v", "--verbose", action="store_true")
    return p


def run(args) -> int:
    start = time.perf_counter()
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    cfg = load_config(args.config, seed=args.seed)
    result = run_experiment(cfg, debug=args.debug_invariants, threads=args.threads)
    args.out.mkdir(parents=True, exist_ok=True)
    csv_path = args.out / f"{cfg.name}.csv"
    write_csv(csv_path, result.header, result.rows)
    files = [csv_path.name]
    if result.wigner_rows is not None:
        w_path = args.out / f"{cfg.name}.wigner.csv"
        write_csv(w_path, result.wigner_header, result.wigner_rows)
        files.append(w_path.name)
    manifest = {
        "name": cfg.name,
        "kind": cfg.kind,
        "config": cfg.as_dict(),
        "seed": cfg.seed,
        "version": __version__,
        "debug_invariants": args.debug_invariants,
        "threads": args.threads,
        "files": files,
        "wall_time_s": time.perf_counter() - start,
        "results": result.manifest,
    }
    m_path = args.out / f"{cfg.name}.manifest.json"
    m_path.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    log.info("wrote %s", ", ".join(files + [m_path.name]))
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (NumericalError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
