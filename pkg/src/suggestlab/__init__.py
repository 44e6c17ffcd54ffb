"""suggestlab: desk-scale template-suggestion classifier workbench."""

__version__ = "0.1.0"
