"""Near-field THz MIMO channel estimation.

Subpackages: ``array_channel`` (steering vectors and wideband channels),
``pilot`` (codebooks and the pilot model), ``classical`` (LS, LMMSE, OMP),
``dstice`` (LSTM parametric estimator), ``complexity`` (flop counts) and
``harness`` (datasets, sweeps and the CLI).
"""

__version__ = "0.1.0"
