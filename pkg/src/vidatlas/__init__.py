"""vidatlas: layered 2D neural atlas decomposition and editing of short videos."""

__version__ = "0.1.0"
