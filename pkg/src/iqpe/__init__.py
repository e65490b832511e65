"""Quantum parameter estimation with an indefinite time direction.

Subpackages by layer: ``statekit`` (dense complex linear algebra),
``qfi`` (Fisher-information engine and bounds), ``scenarios`` (Kerr phase,
birefringence, modal-sphere rotation, LG fields), ``protocol`` (the
switched rotation measurement and its estimator), ``emulator`` (detector
pipeline), and ``cli`` (reproducible runs).
"""

__version__ = "0.1.0"
