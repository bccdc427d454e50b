"""Builds a tiny local roberta checkpoint so tests run fully offline."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

SRC = Path(__file__).resolve().parent.parent / "src"
if str(SRC) not in sys.path:
    try:
        import botgnn_embedder  # noqa: F401
    except ImportError:
        sys.path.insert(0, str(SRC))


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory) -> Path:
    import torch
    from tokenizers import Tokenizer
    from tokenizers.models import WordLevel
    from tokenizers.pre_tokenizers import Whitespace
    from transformers import PreTrainedTokenizerFast, RobertaConfig, RobertaModel

    out = tmp_path_factory.mktemp("tiny-roberta")
    config = RobertaConfig(vocab_size=64, hidden_size=16, num_hidden_layers=1,
                           num_attention_heads=2, intermediate_size=32,
                           max_position_embeddings=40, type_vocab_size=1)
    torch.manual_seed(0)
    model = RobertaModel(config)
    vocab = {tok: i for i, tok in enumerate(
        ["[UNK]", "[PAD]", "[CLS]", "[SEP]"] + [f"w{i}" for i in range(60)])}
    tok = Tokenizer(WordLevel(vocab, unk_token="[UNK]"))
    tok.pre_tokenizer = Whitespace()
    fast = PreTrainedTokenizerFast(tokenizer_object=tok, unk_token="[UNK]",
                                   pad_token="[PAD]", cls_token="[CLS]",
                                   sep_token="[SEP]", model_max_length=12)
    model.save_pretrained(out)
    fast.save_pretrained(out)
    return out


def write_jsonl(path, objs):
    import json

    with open(path, "w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(json.dumps(obj) + "\n")
