"""Offline transformer embeddings for the bot-detection pipeline.

Encodes user descriptions or tweets with a pretrained model (mean pooling
over the final hidden layer) and writes `.bre` files the main package's
`prepare` step consumes directly.
"""

__version__ = "0.1.0"

from .corpus import embed_corpus, read_texts, write_bre  # noqa: F401
from .encoder import HfEncoder  # noqa: F401
