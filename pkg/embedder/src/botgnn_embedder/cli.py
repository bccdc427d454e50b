"""botgnn-embed: encode a texts.jsonl corpus into a .bre embedding file.

Exit codes mirror the main CLI: 0 success, 2 usage, 3 data error,
4 encoder failure.
"""

from __future__ import annotations

import argparse
import sys

from .corpus import CorpusError, embed_corpus
from .encoder import EncoderError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="botgnn-embed",
        description="Embed user descriptions or tweets with a pretrained "
                    "transformer into the .bre format.")
    parser.add_argument("--texts", required=True, help="texts.jsonl "
                        '({"id", "description", "tweets"} per line, dataset order)')
    parser.add_argument("--model", required=True,
                        help="Hugging Face model name or local checkpoint path")
    parser.add_argument("--out", required=True, help="output .bre path")
    parser.add_argument("--mode", choices=["description", "tweets"], required=True)
    parser.add_argument("--users", help="users.jsonl to verify id order against")
    parser.add_argument("--expected-count", type=int,
                        help="verify the corpus covers exactly this many users")
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--max-length", type=int,
                        help="token truncation limit (default: encoder maximum)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.batch_size < 1:
        parser.error("--batch-size must be >= 1")
    if args.max_length is not None and args.max_length < 1:
        parser.error("--max-length must be >= 1")
    try:
        manifest = embed_corpus(args.texts, args.model, args.out, args.mode,
                                users_path=args.users,
                                expected_count=args.expected_count,
                                batch_size=args.batch_size,
                                max_length=args.max_length)
    except CorpusError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except EncoderError as exc:
        print(f"encoder failure: {exc}", file=sys.stderr)
        return 4
    print(f"wrote {manifest['output']}: {manifest['users']} users x "
          f"{manifest['dim']} dims ({manifest['texts_truncated']} texts truncated)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
