"""Command-line front end.

    ehcrn region    --manifest manifests/coop_full_energy.toml --out out/
    ehcrn crossover --manifest manifests/crossover_vs_k.toml
    ehcrn validate  --manifest manifests/validate_single.toml --jobs 4
    ehcrn hybrid    --manifest manifests/hybrid_vs_baselines.toml --set hybrid.slots=50000
    ehcrn sweep     --manifest manifests/sweep_lambda_es.toml

Exit codes: 0 success, 1 a manifest check failed, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .experiments import COMMAND_KINDS, ManifestError, load_manifest, run_manifest
from .model import SpecError

EXIT_OK, EXIT_BREACH, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("ehcrn")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ehcrn", description="Energy-harvesting cognitive radio experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMAND_KINDS:
        c = sub.add_parser(name)
        c.add_argument("--manifest", required=True, type=Path, help="TOML experiment manifest")
        c.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
        c.add_argument("--set", dest="overrides", action="append", default=[], metavar="K=V",
                       help="override a manifest key by dotted path; repeatable")
        c.add_argument("--jobs", type=int, default=1, help="worker processes (default: 1)")
        c.add_argument("--seed", type=int, default=None, help="override the manifest seed")
        c.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        text = args.manifest.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read manifest: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        doc = load_manifest(text, args.overrides, args.seed)
        result = run_manifest(args.command, doc, args.jobs)
    except (ManifestError, SpecError) as exc:
        for line in getattr(exc, "problems", [str(exc)]):
            print(f"error: {line}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        args.out.mkdir(parents=True, exist_ok=True)
        for name, content in sorted(result.files.items()):
            (args.out / name).write_text(content, encoding="utf-8", newline="\n")
            log.info("wrote %s", args.out / name)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_USAGE

    for c in result.checks:
        log.info("%s %s", "PASS" if c.passed else "FAIL", c.name)
        if not c.passed:
            print(f"breach: {c.name} {c.detail}", file=sys.stderr)
    return EXIT_OK if result.passed else EXIT_BREACH


if __name__ == "__main__":
    sys.exit(main())
