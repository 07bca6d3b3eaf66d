"""CLI: read a dataset, encode per scheme, write the engine datastore."""
from __future__ import annotations

import argparse
import json
import sys

from .backends import get_backend
from .datasets import read_dataset
from .examples import ExporterError
from .export import encode_and_export
from .schemes import ALL_KINDS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reanno-export",
        description="Encode a relation dataset into the engine datastore format.",
    )
    parser.add_argument("--input", required=True, help="dataset file")
    parser.add_argument("--format", choices=("tacred", "docred", "generic"),
                        default="generic")
    parser.add_argument("--scheme", choices=ALL_KINDS, required=True)
    parser.add_argument("--model", default="hash-32",
                        help="backend id: hash-<dim> or a masked-LM model id "
                             "(reference default bert-base-cased)")
    parser.add_argument("--max-tokens", type=int, default=None,
                        help="document truncation budget (docred layout)")
    parser.add_argument("--out", required=True, help="datastore output path")
    parser.add_argument("--metadata", default=None, help="metadata sidecar path")
    return parser


def main(argv=None) -> None:
    args = build_parser().parse_args(argv)
    try:
        dataset = read_dataset(args.input, args.format, max_tokens=args.max_tokens)
        backend = get_backend(args.model)
        summary = encode_and_export(dataset, args.scheme, backend, args.out,
                                    metadata_path=args.metadata)
    except ExporterError as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        sys.exit(1)
    print(json.dumps({"scheme": args.scheme, "model": args.model, **summary},
                     sort_keys=True))


if __name__ == "__main__":
    main()
