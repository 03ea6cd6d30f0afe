"""Retrieval-augmented task answering with a reward-aligned retriever.

A BM25 candidate pool feeds a learned policy that picks a prompt
template and composes a support set; a black-box reasoner answers; the
task outcome (or a human rating) becomes the reward that trains the
policy with deep Q-learning.
"""

from . import corpus, prompting, reasoner, reward, rl, service, tinynn

__all__ = [
    "corpus",
    "prompting",
    "reasoner",
    "reward",
    "rl",
    "service",
    "tinynn",
]

__version__ = "0.1.0"
