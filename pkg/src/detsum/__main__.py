"""``python3 -m detsum``.  Thread count goes into the BLAS environment before
numpy is imported, which is the only point where it takes effect."""

import os
import sys

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _threads(argv):
    for i, a in enumerate(argv):
        if a == "--threads" and i + 1 < len(argv):
            return argv[i + 1]
        if a.startswith("--threads="):
            return a.split("=", 1)[1]
    return None


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    n = _threads(argv)
    for var in _THREAD_VARS:
        # an explicit flag wins; otherwise single-threaded unless the caller's
        # environment already says otherwise
        if n is not None:
            os.environ[var] = n
        else:
            os.environ.setdefault(var, "1")
    from .cli import main as cli_main

    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
