"""Predicate-argument structure analysis for Japanese dependency corpora.

Kept import-light on purpose: the command-line entry point pins BLAS
thread counts through environment variables before numpy is loaded, so
nothing here may pull in numerical modules.
"""

__version__ = "0.1.0"
