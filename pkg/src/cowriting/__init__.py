"""Analytics pipeline for human-AI co-writing traces.

Converts keystroke-level session logs into coded behavioral events,
epistemic network models, and statistical group comparisons.
"""

__version__ = "0.1.0"
