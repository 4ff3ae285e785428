"""Dense two-phase simplex for small linear programs.

Solves min c.z subject to A z <= b, z >= 0 with Bland's anti-cycling rule.
Problem sizes here are tiny (a handful of variables, tens of constraints),
so exact vertex arithmetic and reproducible tie-breaking matter more than
speed. The solution report carries primal/dual vectors and a
complementary-slackness residual so callers can certify optimality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LPResult", "solve_lp", "InfeasibleError", "UnboundedError"]

_TOL = 1e-11


class InfeasibleError(RuntimeError):
    pass


class UnboundedError(RuntimeError):
    pass


@dataclass(frozen=True)
class LPResult:
    z: np.ndarray          # primal solution
    objective: float
    duals: np.ndarray      # one multiplier per constraint (>= 0)
    certificate_residual: float


def _pivot(tab: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    for r in range(tab.shape[0]):
        if r != row and tab[r, col] != 0.0:
            tab[r] -= tab[r, col] * tab[row]
    basis[row] = col


def _simplex(tab: np.ndarray, basis: np.ndarray, ncols: int, max_iter: int) -> None:
    """Run the simplex loop on a tableau whose last row is the objective
    (reduced costs) and last column the RHS. Bland's rule: entering
    variable = lowest-index negative reduced cost; leaving = lowest-index
    tightest ratio."""
    m = tab.shape[0] - 1
    for _ in range(max_iter):
        red = tab[-1, :ncols]
        enter = -1
        for j in range(ncols):
            if red[j] < -_TOL:
                enter = j
                break
        if enter < 0:
            return
        leave, best = -1, np.inf
        for i in range(m):
            a = tab[i, enter]
            if a > _TOL:
                ratio = tab[i, -1] / a
                if ratio < best - _TOL or (abs(ratio - best) <= _TOL and
                                           (leave < 0 or basis[i] < basis[leave])):
                    best, leave = ratio, i
        if leave < 0:
            raise UnboundedError("objective unbounded below")
        _pivot(tab, basis, leave, enter)
    raise RuntimeError("simplex iteration cap exceeded")


def solve_lp(c: np.ndarray, A: np.ndarray, b: np.ndarray,
             max_iter: int = 20_000) -> LPResult:
    """min c.z  s.t.  A z <= b, z >= 0 (two-phase dense simplex)."""
    c = np.asarray(c, dtype=np.float64)
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    b = np.asarray(b, dtype=np.float64)
    m, n = A.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError("inconsistent LP dimensions")

    # Standard form with slacks: [A | I] x = b. Rows with negative b are
    # negated, then phase 1 drives artificial variables out of the basis.
    T = np.hstack([A, np.eye(m), b[:, None]])
    neg = b < 0
    T[neg] *= -1.0
    nart = int(neg.sum())
    ncols = n + m
    art_cols = []
    if nart:
        art = np.zeros((m, nart))
        for k, i in enumerate(np.flatnonzero(neg)):
            art[i, k] = 1.0
            art_cols.append(ncols + k)
        T = np.hstack([T[:, :ncols], art, T[:, -1:]])
    total = ncols + nart
    basis = np.empty(m, dtype=np.int64)
    k = 0
    for i in range(m):
        if neg[i]:
            basis[i] = ncols + k
            k += 1
        else:
            basis[i] = n + i

    if nart:
        obj = np.zeros(total + 1)
        obj[ncols:total] = 1.0
        tab = np.vstack([T, obj])
        for i in range(m):
            if basis[i] >= ncols:
                tab[-1] -= tab[i]
        _simplex(tab, basis, total, max_iter)
        if tab[-1, -1] < -1e-7:
            raise InfeasibleError("phase 1 failed to zero the artificials")
        # Pivot any artificial still (degenerately) in the basis out.
        for i in range(m):
            if basis[i] >= ncols:
                for j in range(ncols):
                    if abs(tab[i, j]) > _TOL:
                        _pivot(tab, basis, i, j)
                        break
        tab = np.hstack([tab[:-1, :ncols], tab[:-1, -1:]])
    else:
        tab = T

    obj = np.zeros(ncols + 1)
    obj[:n] = c
    tab = np.vstack([tab, obj])
    for i in range(m):
        if obj[basis[i]] != 0.0:
            tab[-1] -= obj[basis[i]] * tab[i]
    _simplex(tab, basis, ncols, max_iter)

    z = np.zeros(ncols)
    for i in range(m):
        z[basis[i]] = tab[i, -1]
    primal = z[:n]
    # The duals are the reduced costs of the slack columns in the final row.
    duals = tab[-1, n:ncols].copy()
    objective = float(c @ primal)

    # Certificate: for min c.z, A z <= b, z >= 0 the multipliers y >= 0
    # must satisfy c + A^T y >= 0, y.(b - Az) = 0, z.(c + A^T y) = 0 and
    # close the duality gap c.z = -b.y.
    slack = b - A @ primal
    reduced = c + A.T @ duals
    residual = max(
        float(np.maximum(-slack, 0.0).max(initial=0.0)),          # primal feas
        float(np.maximum(-primal, 0.0).max(initial=0.0)),
        float(np.maximum(-duals, 0.0).max(initial=0.0)),          # dual feas
        float(np.maximum(-reduced, 0.0).max(initial=0.0)),
        float(np.max(np.abs(duals * slack), initial=0.0)),        # compl. slack
        float(np.max(np.abs(primal * reduced), initial=0.0)),
        abs(objective + float(b @ duals)),                        # duality gap
    )
    return LPResult(z=primal, objective=objective, duals=duals,
                    certificate_residual=residual)
