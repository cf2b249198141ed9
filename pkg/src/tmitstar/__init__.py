"""Integrated task and motion planning with SAT-based task plans and multimodal batch sampling."""

__version__ = "0.1.0"
