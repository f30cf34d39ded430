"""Retrieval-timing decision engine for retrieval-augmented generation.

Four binary value heads read a frozen language model's hidden state and judge
whether an instruction needs external retrieval; a fixed-priority gate folds
their verdicts into one decision. The package also covers the surrounding
plumbing: dataset forging, benchmark construction, prompt assembly, scoring,
an HTTP decision service, and a CLI.
"""

__version__ = "0.1.0"
