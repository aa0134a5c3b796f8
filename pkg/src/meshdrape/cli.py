"""Command-line entry points: `drape transfer`, `drape eval`, `drape serve`.

Exit codes: 0 success, 1 module/runtime error with a message on stderr,
2 bad flags (argparse usage text).
"""

from __future__ import annotations

import argparse
import json
import sys

from .deform import CorrespondenceSet, load_correspondences
from .geometry import load_mesh, load_target, save_mesh
from .metrics import evaluate_transfer
from .pipeline import DrapeConfig, create_session, run


def _load_config(path, seed=None):
    if path is None:
        doc = {}
    else:
        with open(path) as fh:
            text = fh.read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError:
            import yaml
            doc = yaml.safe_load(text)
    if seed is not None:
        doc = dict(doc or {})
        doc["seed"] = seed
    return DrapeConfig.from_dict(doc)


def cmd_transfer(args) -> int:
    source = load_mesh(args.source)
    target = load_target(args.target)
    corr = (load_correspondences(args.corr) if args.corr
            else CorrespondenceSet.empty())
    config = _load_config(args.config, seed=args.seed)
    session = run(create_session(source, target, corr, config))
    mesh, report = session.extract_result()
    if args.out:
        save_mesh(mesh, args.out)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(report.to_json())
    print(f"transfer done: Q={report.q_transfer:.4f} "
          f"chamfer={report.chamfer:.3e} F_d={report.f_d:.3e} "
          f"F_a={report.f_a:.3e}")
    return 0


def cmd_eval(args) -> int:
    source = load_mesh(args.source)
    result = load_mesh(args.result)
    target = load_target(args.target)
    report = evaluate_transfer(source, result, target)
    text = report.to_json()
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text)
    print(text)
    print(f"Q = {report.q_transfer:.4f}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import build_app

    app = build_app(max_upload_mb=args.max_upload_mb,
                    checkpoint_dir=args.checkpoint_dir)
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    except SystemExit as exc:  # uvicorn raises on startup failure (port in use)
        return 1 if exc.code else 0
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drape",
        description="Transfer a source mesh's connectivity onto a target shape.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transfer", help="run one mesh transfer")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--corr")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--report")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("eval", help="score an existing transfer result")
    p.add_argument("--source", required=True)
    p.add_argument("--result", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the interactive session server")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--max-upload-mb", type=int, default=64)
    p.add_argument("--checkpoint-dir", default=None)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
