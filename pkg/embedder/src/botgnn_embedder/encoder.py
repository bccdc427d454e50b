"""Pretrained-transformer sentence encoder with mask-aware mean pooling."""

from __future__ import annotations

import numpy as np


class EncoderError(Exception):
    """Encoder could not be loaded or produced invalid output."""


class HfEncoder:
    """Wraps a Hugging Face model+tokenizer pair for batch inference.

    Pooling is the attention-masked mean over the final hidden layer, so
    padding tokens never leak into the sentence vector. Inference runs on
    CPU in eval mode with a single torch thread, which keeps repeated runs
    byte-identical.
    """

    def __init__(self, model_name_or_path: str, max_length: int | None = None):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:  # pragma: no cover
            raise EncoderError(f"transformers/torch unavailable: {exc}") from exc
        self._torch = torch
        torch.set_num_threads(1)
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_name_or_path)
            self.model = AutoModel.from_pretrained(model_name_or_path)
        except Exception as exc:
            raise EncoderError(f"cannot load encoder {model_name_or_path!r}: {exc}") from exc
        self.model.eval()
        self.hidden_size = int(self.model.config.hidden_size)
        model_limit = getattr(self.tokenizer, "model_max_length", None) or 512
        # tokenizers report a huge sentinel when unconfigured
        if model_limit > 100_000:
            model_limit = int(getattr(self.model.config, "max_position_embeddings", 512))
        self.max_length = min(max_length, model_limit) if max_length else model_limit
        self.truncated = 0  # texts clipped at max_length so far

    def encode(self, texts: list[str], batch_size: int = 16) -> np.ndarray:
        """(len(texts), hidden_size) float32 matrix of pooled vectors."""
        torch = self._torch
        out = np.zeros((len(texts), self.hidden_size), dtype=np.float32)
        for start in range(0, len(texts), batch_size):
            chunk = texts[start : start + batch_size]
            enc = self.tokenizer(chunk, padding=True, truncation=True,
                                 max_length=self.max_length, return_tensors="pt")
            lengths = self.tokenizer(chunk, truncation=False, padding=False)["input_ids"]
            self.truncated += sum(len(ids) > self.max_length for ids in lengths)
            with torch.no_grad():
                hidden = self.model(**enc).last_hidden_state
            mask = enc["attention_mask"].unsqueeze(-1).to(hidden.dtype)
            pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1)
            out[start : start + len(chunk)] = pooled.numpy().astype(np.float32)
        if not np.isfinite(out).all():
            raise EncoderError("encoder produced non-finite embeddings")
        return out
