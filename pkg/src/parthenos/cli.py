"""``parthenos`` command-line front end.

Exit status: 0 on success, 1 when a transformation is rejected or a scenario
misses its expectations, 2 for usage, I/O, syntax, lock and injection errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .dialect import SourceSyntaxError
from .evaluation import ScenarioError, load_scenario, run_scenario
from .extraction import ExtractionError, extract_model, read_sources
from .graph import KnowledgeBaseError, parse_kb, serialize_kb
from .injection import InjectionError, InjectionModel, apply_models, write_sources
from .transformation import RepoLockedError, RequestError, TransformationRequest, apply_transformation, repo_lock
from .ui import generate_site

__all__ = ["build_parser", "main", "run_cli"]

EXIT_OK, EXIT_REJECTED, EXIT_ERROR = 0, 1, 2


class _Fail(Exception):
    def __init__(self, message: str, code: int = EXIT_ERROR):
        super().__init__(message)
        self.code = code


def _read_json(path: str) -> object:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise _Fail(f"{path}: invalid JSON: {exc}") from None


def _load_model(path: str):
    return parse_kb(Path(path).read_text(encoding="utf-8"))


def _emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def cmd_extract(args) -> int:
    text = serialize_kb(extract_model(args.repo))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_transform(args) -> int:
    data = _read_json(args.request)
    if not isinstance(data, dict):
        raise _Fail(f"{args.request}: expected a single request object")
    req = TransformationRequest.from_json(data)
    kb = _load_model(args.model)
    outcome = apply_transformation(kb, args.repo, req, kb_path=args.model)
    if args.json:
        _emit(json.dumps({
            "op": req.op,
            "status": outcome.status,
            "reason": outcome.reason,
            "written": list(outcome.written),
            "added": sorted(f.render() for f in outcome.delta.added),
            "removed": sorted(f.render() for f in outcome.delta.removed),
        }, indent=2))
    if not outcome.applied:
        raise _Fail(outcome.reason or "rejected", EXIT_REJECTED)
    if not args.json:
        _emit(f"applied {req.op}: {len(outcome.written)} source file(s) updated")
    return EXIT_OK


def cmd_inject(args) -> int:
    data = _read_json(args.model)
    if not isinstance(data, dict):
        raise _Fail(f"{args.model}: expected a single injection model object")
    try:
        model = InjectionModel.from_json(data)
    except ValueError as exc:
        raise _Fail(str(exc)) from None
    with repo_lock(args.repo):
        try:
            changed = apply_models(read_sources(args.repo), [model])
        except KeyError as exc:
            raise InjectionError(f"injection model lacks parameter {exc}") from None
        write_sources(args.repo, sorted(changed.items()))
    _emit("\n".join(sorted(changed)) or "no changes")
    return EXIT_OK


def cmd_generate_ui(args) -> int:
    kb = _load_model(args.model) if args.model else extract_model(args.repo)
    for path in generate_site(kb, args.out_dir):
        _emit(str(path))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .plotting import plot_scenario  # matplotlib is only needed here

    status = EXIT_OK
    reports = []
    for scenario_path in args.scenario:
        spec = load_scenario(scenario_path)
        try:
            table = run_scenario(spec)
        except ScenarioError as exc:
            print(f"parthenos: {exc}", file=sys.stderr)
            table, status = exc.table, EXIT_REJECTED
        reports.append(table)
        if args.out_dir:
            out = Path(args.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            stem = Path(scenario_path).stem
            (out / f"{stem}.txt").write_text(table.to_text(), encoding="utf-8")
            (out / f"{stem}.json").write_text(json.dumps(table.to_json(), indent=2) + "\n", encoding="utf-8")
            plot_scenario(table, out / f"{stem}.png")
        if not args.json:
            _emit(table.to_text())
    if args.json:
        _emit(json.dumps([t.to_json() for t in reports], indent=2))
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parthenos", description="Model-driven editing of .pss class repositories.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("extract", help="build the fact file of a repository")
    p.add_argument("--repo", required=True, help="repository of .pss files")
    p.add_argument("--out", help="fact file to write (default: stdout)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("transform", help="apply one transformation request to model and sources")
    p.add_argument("--repo", required=True)
    p.add_argument("--model", required=True, help="fact file, updated in place when the request applies")
    p.add_argument("--request", required=True, help="JSON request {op, params}")
    p.add_argument("--json", action="store_true", help="print the outcome as JSON")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("inject", help="apply a single injection model to the sources (debugging aid)")
    p.add_argument("--repo", required=True)
    p.add_argument("--model", required=True, help="JSON injection model {injection, target_file, params}")
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("generate-ui", help="write the static panel site")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", help="fact file to render")
    src.add_argument("--repo", help="extract this repository and render it")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_generate_ui)

    p = sub.add_parser("evaluate", help="run scenario specs and report precision, recall and F-measure")
    p.add_argument("--scenario", required=True, action="append", help="scenario JSON (repeatable)")
    p.add_argument("--out-dir", help="also write <name>.txt, <name>.json and <name>.png here")
    p.add_argument("--json", action="store_true", help="print JSON instead of tables")
    p.set_defaults(func=cmd_evaluate)
    return parser


def run_cli(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except _Fail as exc:
        print(f"parthenos: {exc}" if exc.code == EXIT_ERROR else str(exc), file=sys.stderr)
        return exc.code
    except SourceSyntaxError as exc:
        print(f"parthenos: syntax error: {exc}", file=sys.stderr)
    except (ExtractionError, KnowledgeBaseError, RequestError, RepoLockedError, InjectionError, OSError) as exc:
        print(f"parthenos: {exc}", file=sys.stderr)
    return EXIT_ERROR


def main() -> None:
    sys.exit(run_cli())
