"""Restricted cubic spline basis for the age covariate.

Truncated-power representation normalized by (t_k - t_1)^2 (Harrell's
convention). With k knots the basis has k - 1 columns: the identity (linear)
term plus k - 2 nonlinear terms. The spanned function space is linear outside
[t_1, t_k] and C2-continuous everywhere. Other normalizations rescale the
coefficients but give the same fitted curves.
"""

import numpy as np


def validate_knots(knots) -> np.ndarray:
    knots = np.asarray(knots, dtype=float)
    if knots.ndim != 1 or knots.size < 3:
        raise ValueError("need at least 3 knots")
    if not np.all(np.diff(knots) > 0):
        raise ValueError(f"knots must be strictly increasing, got {knots.tolist()}")
    return knots


def age_term_df(knots) -> int:
    """Degrees of freedom of the spline term: k - 1."""
    return validate_knots(knots).size - 1


def rcs_matrix(x, knots) -> np.ndarray:
    """Basis matrix of shape (len(x), k - 1) for the given knot vector."""
    knots = validate_knots(knots)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k = knots.size
    scale = (knots[-1] - knots[0]) ** 2
    cols = [x]
    tk, tk1 = knots[-1], knots[-2]
    for j in range(k - 2):
        tj = knots[j]
        term = (
            np.maximum(x - tj, 0.0) ** 3
            - np.maximum(x - tk1, 0.0) ** 3 * (tk - tj) / (tk - tk1)
            + np.maximum(x - tk, 0.0) ** 3 * (tk1 - tj) / (tk - tk1)
        )
        cols.append(term / scale)
    return np.column_stack(cols)


def rcs_basis(x: float, knots) -> np.ndarray:
    """Basis vector of length k - 1 at a single point."""
    return rcs_matrix([x], knots)[0]
