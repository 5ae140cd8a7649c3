"""radnet: shallow neural-network emulation of column radiative transfer.

Pipeline: synthetic scenes -> stratified sampling against a built-in
reference radiation scheme -> 8-category single-hidden-layer models ->
batched inference, evaluation, and coupled-drift experiments.
"""

__version__ = "0.1.0"
