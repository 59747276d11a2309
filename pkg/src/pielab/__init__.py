"""pielab: pruning, Pruning Identified Exemplars and their analysis at desk scale."""

__version__ = "0.1.0"
