"""Sensemaking engine for raw passive sensing data.

Cooperating LLM agents plan, fetch (through sandboxed generated code), and
iteratively interpret multi-stream sensing records, then present the answer
per caller instructions. Ships with a RAG baseline and an evaluation
harness for accuracy/consistency comparisons.
"""

__version__ = "0.1.0"
