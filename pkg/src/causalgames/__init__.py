"""Causal game semantics workbench.

Compiles a mini-ML with shared-memory concurrency into a session-typed
process metalanguage and interprets both into concurrent games played on
event structures.
"""

__version__ = "0.1.0"
