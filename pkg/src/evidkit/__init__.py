"""Corpus analysis and plausibility evaluation for span-annotated medical coding evidence."""

__version__ = "0.1.0"
