"""Sub-seed derivation.

Every random stream in a run descends from one integer master seed:

    derive_seed(master, label) = SeedSequence([master, crc32(label)]).generate_state(1)[0]

Labels used across the package:

``"x_true"``      hidden demand draw of a scenario (suffixed with the retry number)
``"layout"``      network topology and attributes
``"exponents"``   simulator per-segment speed-density exponents
``"gt"``          replications used to manufacture ground truth
``"sim"``         replications used during calibration (shared by all algorithms)
``"x0"``          common random initial point
``"metamodel"``   multistart / diversification draws of the metamodel loop
``"spsa"``        SPSA perturbation sequence
"""
import zlib

import numpy as np


def derive_seed(master: int, label: str) -> int:
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(label.encode())])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def rng_for(master: int, label: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, label))
