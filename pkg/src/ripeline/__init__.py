"""Tomato detection and maturity grading on plain numpy.

Stages: CIELAB conversion and SLIC superpixels, region growing over the
superpixel graph, a small CNN that validates candidate regions, and a
single-headed attention RNN that assigns one of five maturity classes.
"""

__version__ = "0.1.0"
