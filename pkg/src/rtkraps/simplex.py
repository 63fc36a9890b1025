"""Dense bounded-variable primal simplex for the tiny selection LPs.

The per-epoch (tau, mu) block problems have at most a handful of constraint
rows and a few dozen variables; generic LP front-ends spend more time on
input validation than on the solve.  This solver is specialized to

    min c'x   s.t.  A x = b,   lower <= x <= upper

with a caller-provided starting feasible basis.  Bland's rule throughout:
deterministic and cycle-free.  Jitted with the same backend switch as the
propagation kernels (RTKRAPS_BACKEND=numpy forces plain python).
"""

import numpy as np

from .kernels import NUMBA_ENABLED

if NUMBA_ENABLED:
    from numba import njit as _njit

    def _jit(f):
        return _njit(cache=True)(f)
else:
    def _jit(f):
        return f

# nonbasic status codes
_AT_LOWER = -1
_AT_UPPER = 1
_BASIC = 0

_HUGE = 1e300


@_jit
def _simplex_core(c, A, b, lower, upper, basis, status, tol, max_iter):
    """Bounded-variable primal simplex from a feasible basis.

    Mutates basis/status in place.  Returns (x, obj, ok); ok=False on
    iteration-cap or numerical failure (caller falls back).
    """
    n, N = A.shape
    x = np.empty(N)
    for it in range(max_iter):
        # nonbasic values at their bounds
        for j in range(N):
            if status[j] == _AT_LOWER:
                x[j] = lower[j]
            elif status[j] == _AT_UPPER:
                x[j] = upper[j]
        # basic values from the equalities
        AB = np.empty((n, n))
        for k in range(n):
            for i in range(n):
                AB[i, k] = A[i, basis[k]]
        rhs = b.copy()
        for j in range(N):
            if status[j] != _BASIC and x[j] != 0.0:
                for i in range(n):
                    rhs[i] -= A[i, j] * x[j]
        xb = np.linalg.solve(AB, rhs)
        for k in range(n):
            x[basis[k]] = xb[k]

        # reduced costs via the dual vector
        cb = np.empty(n)
        for k in range(n):
            cb[k] = c[basis[k]]
        y = np.linalg.solve(AB.T, cb)

        enter = -1
        enter_dir = 0.0
        for j in range(N):
            if status[j] == _BASIC or lower[j] == upper[j]:
                continue
            rc = c[j]
            for i in range(n):
                rc -= y[i] * A[i, j]
            if status[j] == _AT_LOWER and rc < -tol:
                enter = j
                enter_dir = 1.0
                break  # Bland: first improving index
            if status[j] == _AT_UPPER and rc > tol:
                enter = j
                enter_dir = -1.0
                break
        if enter < 0:
            obj = 0.0
            for j in range(N):
                obj += c[j] * x[j]
            return x, obj, True

        # basic direction for a unit increase of the entering variable
        col = np.empty(n)
        for i in range(n):
            col[i] = A[i, enter]
        d = np.linalg.solve(AB, col)  # x_B changes by -d * t * enter_dir

        t_max = upper[enter] - lower[enter]  # bound-flip distance (may be inf)
        leave = -1  # -1 means bound flip of the entering variable
        for k in range(n):
            delta = -d[k] * enter_dir  # change of this basic var per unit step
            jb = basis[k]
            if delta > tol:
                room = (upper[jb] - x[jb]) / delta
            elif delta < -tol:
                room = (lower[jb] - x[jb]) / delta
            else:
                continue
            if room < 0.0:
                room = 0.0  # degenerate: basic var already at its bound
            tie = 1e-9 * (1.0 + abs(t_max))
            if room < t_max - tie:
                t_max = room
                leave = k
            elif room <= t_max + tie and leave >= 0 and jb < basis[leave]:
                leave = k  # Bland tie-break on variable index
        if t_max >= _HUGE:
            return x, 0.0, False  # unbounded: impossible by construction

        if leave < 0:
            # entering variable flips to its opposite bound
            status[enter] = _AT_UPPER if enter_dir > 0 else _AT_LOWER
        else:
            jb = basis[leave]
            delta = -d[leave] * enter_dir
            status[jb] = _AT_UPPER if delta > 0 else _AT_LOWER
            basis[leave] = enter
            status[enter] = _BASIC
    return x, 0.0, False


def solve_selection_lp(c_tau, G, rhs, mu_upper, gamma, lexicographic=True,
                       tol=1e-10, max_iter=2000):
    """Exact optimum of  min c'tau + gamma 1'mu  s.t.  G tau + mu >= rhs,
    0 <= tau <= 1, 0 <= mu <= mu_upper.

    Always primal feasible at (tau=1, mu=0); the surplus columns form the
    starting basis.  With lexicographic=True, a warm-started second phase
    minimizes dyadically weighted tau over the optimal face, pinning the
    lexicographically smallest optimal tau.

    Returns (tau, mu, objective); raises ArithmeticError if the simplex
    fails (callers may fall back to a generic LP).
    """
    c_tau = np.asarray(c_tau, dtype=float)
    G = np.atleast_2d(np.asarray(G, dtype=float))
    rhs = np.asarray(rhs, dtype=float)
    mu_upper = np.asarray(mu_upper, dtype=float)
    n, m = G.shape
    N = m + 2 * n
    A = np.zeros((n, N))
    A[:, :m] = G
    A[:, m:m + n] = np.eye(n)
    A[:, m + n:] = -np.eye(n)
    b = rhs.astype(float).copy()
    c = np.concatenate([c_tau, np.full(n, float(gamma)), np.zeros(n)])
    lower = np.zeros(N)
    upper = np.concatenate([np.ones(m), mu_upper, np.full(n, np.inf)])

    basis = np.arange(m + n, N, dtype=np.int64)
    status = np.full(N, _AT_LOWER, dtype=np.int64)
    status[:m] = _AT_UPPER
    status[basis] = _BASIC

    x, obj, ok = _simplex_core(c, A, b, lower, upper, basis, status,
                               tol, max_iter)
    if not ok:
        raise ArithmeticError("selection simplex failed")

    if lexicographic and m > 0:
        # append the equality  c'x + slack = obj + eps  and minimize
        # dyadic weights over tau from the (extended) optimal basis
        eps = 1e-9 * max(1.0, abs(obj))
        A2 = np.zeros((n + 1, N + 1))
        A2[:n, :N] = A
        A2[n, :N] = c
        A2[n, N] = 1.0
        b2 = np.concatenate([b, [obj + eps]])
        lower2 = np.concatenate([lower, [0.0]])
        upper2 = np.concatenate([upper, [np.inf]])
        c2 = np.zeros(N + 1)
        c2[:m] = np.power(0.5, np.arange(m))
        basis2 = np.concatenate([basis, [N]]).astype(np.int64)
        status2 = np.concatenate([status, [_BASIC]]).astype(np.int64)
        x2, _, ok2 = _simplex_core(c2, A2, b2, lower2, upper2, basis2,
                                   status2, tol, max_iter)
        if ok2:
            x = x2[:N]

    tau = np.clip(x[:m], 0.0, 1.0)
    mu = np.clip(x[m:m + n], 0.0, mu_upper)
    return tau, mu, float(c_tau @ tau + gamma * np.sum(mu))
