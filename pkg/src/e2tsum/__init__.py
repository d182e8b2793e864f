"""Attentive seq2seq summarization with the Entity2Topic module."""

__version__ = "0.1.0"
