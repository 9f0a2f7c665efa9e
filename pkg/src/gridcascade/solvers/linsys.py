"""Linear solves against singular symmetric systems with pinned entries.

Susceptance-style matrices are singular (each connected block contributes a
zero eigenvalue), so callers pin one reference row/column per block instead
of inverting.  Pinning replaces row and column ``i`` by the identity row, which
forces ``x[i] = 0`` and makes the system regular without ever forming an
explicit inverse.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import scipy.linalg


class SingularSystemError(RuntimeError):
    """Raised when a pinned system is still singular or inconsistent."""


# ---------------------------------------------------------------------------
# pinning
# ---------------------------------------------------------------------------

def _pin(a: np.ndarray, pinned: Sequence[int]) -> np.ndarray:
    a2 = np.array(a, dtype=float, copy=True)
    idx = list(pinned)
    a2[idx, :] = 0.0
    a2[:, idx] = 0.0
    a2[idx, idx] = 1.0
    return a2


def solve_linear_system(
    a: np.ndarray,
    b: np.ndarray,
    pinned: Sequence[int],
    check: bool = True,
) -> np.ndarray:
    """Solve ``a @ x = b`` with ``x[pinned] = 0``.

    ``b`` may be a vector or a matrix of stacked right-hand sides.  When
    ``check`` is set, the residual of the *original* system is verified,
    which catches right-hand sides that are inconsistent with the matrix
    (an unbalanced injection vector, typically).
    """
    a2 = _pin(a, pinned)
    b2 = np.array(b, dtype=float, copy=True)
    b2[list(pinned)] = 0.0
    try:
        x = np.linalg.solve(a2, b2)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(
            f"system singular after pinning rows {list(pinned)}"
        ) from exc
    if check:
        resid = np.max(np.abs(a @ x - b)) if b.size else 0.0
        bound = 1e-8 * (1.0 + (np.max(np.abs(b)) if b.size else 0.0))
        if resid > bound:
            raise SingularSystemError(
                f"pinned solve residual {resid:.3e} exceeds {bound:.3e}; "
                "right-hand side inconsistent with matrix"
            )
    return x


def factor_pinned(
    a: np.ndarray, pinned: Sequence[int]
) -> Callable[[np.ndarray], np.ndarray]:
    """Return a reusable solver for many right-hand sides.

    The LU factorisation of the pinned matrix is computed once; the returned
    callable zeroes the pinned rows of each right-hand side and solves.  No
    residual check is performed, so callers own consistency.
    """
    lu, piv = scipy.linalg.lu_factor(_pin(a, pinned))
    idx = list(pinned)

    def solve(b: np.ndarray) -> np.ndarray:
        b2 = np.array(b, dtype=float, copy=True)
        b2[idx] = 0.0
        return scipy.linalg.lu_solve((lu, piv), b2)

    return solve
