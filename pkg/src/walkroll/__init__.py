"""Design, analysis and simulation tools for a two-legged walking and rolling robot."""

__version__ = "0.1.0"
