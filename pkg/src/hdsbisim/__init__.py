"""Minimal finite bisimulations of hybrid automata by behaviour-based
partition refinement over sampled guard points."""

__version__ = "0.1.0"
