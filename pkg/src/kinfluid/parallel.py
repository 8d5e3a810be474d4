"""Process-wide parallelism settings.

``KINFLUID_THREADS`` caps the worker count handed to the FFT backend.  The
determinism flag pins it to one worker; every other reduction in the package
(``np.bincount`` deposits, cell sums) is already sequential.
"""

import os

_deterministic = False


def set_deterministic(flag: bool = True) -> None:
    global _deterministic
    _deterministic = bool(flag)


def is_deterministic() -> bool:
    return _deterministic


def fft_workers() -> int:
    if _deterministic:
        return 1
    try:
        return max(1, int(os.environ.get("KINFLUID_THREADS", "1")))
    except ValueError:
        return 1
