"""Median-of-means tournament learning for finite function classes.

Library layout:

* ``core``: hypotheses, classes, samples, and the exact population oracle
* ``tournament``: the two-stage home-and-away procedure and its tuning
* ``complexity``: localized complexity estimators, fixed points, kappa, L_T
* ``verification``: essential subsets, the deterministic midpoint theorem
  oracle, and block-condition diagnostics
* ``datagen``: seeded scenario generators, including the heavy-tailed and
  adversarial instances
* ``experiments``: trial grids, baselines, CSV/manifest emission
* ``presets``: the calibrated study configurations used by the
  acceptance suite and the scripts
"""

__version__ = "0.1.0"
