"""Box-constrained complex least squares via a primal active-set method.

    minimise ||target - R s||^2   s.t.  re_lo <= Re(s) <= re_hi,  im_lo <= Im(s) <= im_hi

The complex problem is embedded in R^{2n} as x = [Re s; Im s].  Problems
here are tiny and dense, so each active-set step just re-solves the free
sub-problem with ``lstsq``; that also copes with rank-deficient matrices
(e.g. fewer receive antennas than waveguides).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_ITER = 10_000


class BoxQpError(RuntimeError):
    """Iteration cap exceeded; carries the best iterate and its KKT residual."""

    def __init__(self, msg, best, residual):
        super().__init__(msg)
        self.best = best
        self.residual = residual


@dataclass(frozen=True)
class BoxQpProblem:
    r_mat: np.ndarray
    target: np.ndarray
    box: tuple[float, float, float, float]     # re_lo, re_hi, im_lo, im_hi

    def __post_init__(self):
        lo_r, hi_r, lo_i, hi_i = self.box
        if not all(np.isfinite(self.box)) or lo_r > hi_r or lo_i > hi_i:
            raise ValueError(f"malformed box {self.box}")
        r = np.atleast_2d(self.r_mat)
        if r.shape[0] != np.shape(self.target)[0]:
            raise ValueError(f"r_mat rows {r.shape[0]} != target length {np.shape(self.target)[0]}")

    @property
    def dim(self) -> int:
        return np.atleast_2d(self.r_mat).shape[1]

    def objective(self, s) -> float:
        r = self.target - np.atleast_2d(self.r_mat) @ np.asarray(s)
        return float(np.vdot(r, r).real)

    def real_form(self):
        """(A, b, lower, upper) of the real embedding."""
        R = np.atleast_2d(np.asarray(self.r_mat, dtype=complex))
        n = R.shape[1]
        A = np.block([[R.real, -R.imag], [R.imag, R.real]])
        t = np.asarray(self.target, dtype=complex)
        b = np.concatenate([t.real, t.imag])
        lo_r, hi_r, lo_i, hi_i = self.box
        lower = np.concatenate([np.full(n, lo_r), np.full(n, lo_i)])
        upper = np.concatenate([np.full(n, hi_r), np.full(n, hi_i)])
        return A, b, lower, upper


def kkt_residual(A, b, x, lower, upper) -> float:
    g = A.T @ (A @ x - b)
    return float(np.max(np.abs(x - np.clip(x - g, lower, upper)), initial=0.0))


def lower_bound(A, b, x, lower, upper) -> float:
    """Certified lower bound on the optimum from convexity at any feasible ``x``.

    f(x*) >= f(x) + min_{v in box} grad(x).(v - x), with f = ||b - A x||^2.
    """
    r = A @ x - b
    g = 2.0 * (A.T @ r)
    gap = np.minimum(g * (lower - x), g * (upper - x)).sum()
    return float(r @ r + gap)


def solve_real(A, b, lower, upper, x0=None, max_iter=MAX_ITER):
    """Active-set solve of the real problem; returns (x, iterations)."""
    n = A.shape[1]
    fixed = lower == upper
    if x0 is None:
        x0 = np.linalg.lstsq(A, b, rcond=None)[0] if n else np.zeros(0)
    x = np.clip(x0, lower, upper)
    at_lo = (x <= lower) & ~fixed
    at_hi = (x >= upper) & ~fixed
    active = fixed | at_lo | at_hi
    scale = np.linalg.norm(A) * max(1.0, float(np.max(np.abs(np.concatenate([lower, upper])), initial=0.0))) \
        + np.linalg.norm(b)
    tol = 1e-13 * max(scale, 1e-300)

    released = -1
    for it in range(1, max_iter + 1):
        free = ~active
        if free.any():
            idx = np.flatnonzero(free)
            rhs = b - A[:, active] @ x[active]
            p = np.linalg.lstsq(A[:, free], rhs, rcond=None)[0] - x[free]
            lo_f, hi_f, x_f = lower[free], upper[free], x[free]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(p < 0, (lo_f - x_f) / p, np.where(p > 0, (hi_f - x_f) / p, np.inf))
            alpha = min(1.0, float(ratio.min(initial=np.inf)))
            if alpha < 1.0:
                blocked = np.flatnonzero(ratio <= alpha)
                if alpha <= 0.0 and released in idx[blocked]:
                    # rank-deficient sub-problem stepped straight back out
                    return _coordinate_descent(A, b, x, lower, upper, tol, max_iter - it), max_iter
                x[free] = x_f + alpha * p
                for pos in blocked:
                    i = idx[pos]
                    if p[pos] < 0:
                        x[i], at_lo[i] = lower[i], True
                    else:
                        x[i], at_hi[i] = upper[i], True
                    active[i] = True
                continue
            x[free] = x_f + p
        g = A.T @ (A @ x - b)
        viol = np.where(at_lo, -g, 0.0) + np.where(at_hi, g, 0.0)
        j = int(np.argmax(viol)) if n else 0
        if n == 0 or viol[j] <= tol:
            return x, it
        active[j] = at_lo[j] = at_hi[j] = False
        released = j
    raise BoxQpError(f"active-set solver did not converge in {max_iter} iterations",
                     x, kkt_residual(A, b, x, lower, upper))


def _coordinate_descent(A, b, x, lower, upper, tol, max_sweeps):
    """Exact cyclic coordinate minimisation; slow but safe on singular problems."""
    x = x.copy()
    r = A @ x - b
    col_sq = np.einsum("ij,ij->j", A, A)
    for _ in range(max(max_sweeps, 1)):
        for i in range(len(x)):
            if col_sq[i] == 0.0 or lower[i] == upper[i]:
                continue
            new = np.clip(x[i] - (A[:, i] @ r) / col_sq[i], lower[i], upper[i])
            r += A[:, i] * (new - x[i])
            x[i] = new
        if kkt_residual(A, b, x, lower, upper) <= tol:
            return x
    raise BoxQpError("coordinate-descent fallback did not converge", x, kkt_residual(A, b, x, lower, upper))


def solve_box_qp(prob: BoxQpProblem) -> np.ndarray:
    """Continuous minimiser of a BoxQpProblem (complex vector)."""
    A, b, lower, upper = prob.real_form()
    x, _ = solve_real(A, b, lower, upper)
    n = prob.dim
    return x[:n] + 1j * x[n:]


def solve_with_bound(prob: BoxQpProblem):
    """Minimiser together with a certified lower bound on the optimal value."""
    A, b, lower, upper = prob.real_form()
    x, _ = solve_real(A, b, lower, upper)
    n = prob.dim
    return x[:n] + 1j * x[n:], max(0.0, lower_bound(A, b, x, lower, upper))
