"""Few-shot deductive coding of open-ended survey responses with text embeddings."""

__version__ = "0.1.0"
