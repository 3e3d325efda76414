"""Multiple-instance learning on small-molecule conformer ensembles."""

__version__ = "0.1.0"
