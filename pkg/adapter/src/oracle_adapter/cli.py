"""Command line: cac-adapter serve --model <path|builtin> --port <p> --mode hard|soft"""

import argparse
import sys

import uvicorn

from .model import BUILTIN_MODELS, ModelError, load_model
from .service import MODES, create_app


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cac-adapter",
        description="Serve a classifier behind the oracle wire protocol.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="load a model and serve it over HTTP")
    serve.add_argument(
        "--model",
        required=True,
        help=f"weight-file path or builtin name ({', '.join(BUILTIN_MODELS)})",
    )
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument(
        "--mode",
        choices=MODES,
        default="hard",
        help="hard answers carry only the label; soft may include probs",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        model = load_model(args.model)
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    app = create_app(model, mode=args.mode)
    print(
        f"serving {model.name} (d={model.input_dim}, K={model.num_classes}, "
        f"{args.mode} mode) on {args.host}:{args.port}"
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
