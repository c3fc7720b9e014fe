"""Physics problem-solving harness: strategies, judging, and analysis."""

__version__ = "0.1.0"
