"""Hybrid CNN + selective state-space network for EEG seizure detection.

Everything is built from first principles on numpy: a taped autodiff core
(:mod:`.ndcore`), the selective-scan state-space block (:mod:`.mamba`), the
full hybrid classifier (:mod:`.model`), EDF and annotation parsing
(:mod:`.edf`, :mod:`.annotations`, :mod:`.channels`), dataset windowing and
splitting (:mod:`.windows`, :mod:`.datasets`), and an Adam training and
evaluation harness (:mod:`.optim`, :mod:`.training`, :mod:`.metrics`).
"""

__version__ = "0.1.0"
