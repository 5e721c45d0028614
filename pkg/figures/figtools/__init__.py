"""Figure scripts for study bundles produced by the uqbench harness.

Thin consumers of the documented CSV schemas: all numbers are read from the
bundle, and the only computation done here is rebuilding the two reference
curves (the exact class-probability oracle and the flat-prior posterior
standard deviation) from the bundle manifest.
"""

from .render import FIGURE_FAMILIES, FigureSpec, NoDataError, SchemaError, render

__version__ = "0.1.0"
