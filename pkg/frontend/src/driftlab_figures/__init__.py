"""Figure rendering for driftlab run output.

Consumes only the emitted file formats: the metrics CSV
(``step,seed,layer,metric,value``), its JSON sidecar (for the config-echo
hash), the sweep points CSV (``s,a``), and the fit JSON. Never imports the
training package.
"""

from .spec import KINDS, FigureSpec, SchemaError
from .render import build_figure, render

__all__ = ["FigureSpec", "KINDS", "SchemaError", "build_figure", "render"]
