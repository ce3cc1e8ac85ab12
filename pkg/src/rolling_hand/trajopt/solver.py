"""Augmented-Lagrangian solver for small dense NLPs.

    min f(z)  s.t.  c(z) = 0,  g(z) >= 0

Inner problems minimise the Powell-Hestenes-Rockafellar function

    L(z) = f - lam.c + rho/2 |c|^2 + 1/(2 rho) sum(max(0, nu - rho g)^2 - nu^2)

with a regularised Newton model: cost curvature from the caller, the
constraint curvature weighted by the first-order multipliers (optional
callback), plus rho J^T J for the equalities and the active inequalities.
The model is shifted until it is positive definite, and steps are accepted
by Armijo backtracking. Multipliers follow the first-order update; rho
grows by ``rho_growth`` whenever feasibility stalls.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve


@dataclass
class SolverOptions:
    tol: float = 1e-6
    max_outer: int = 50
    max_inner: int = 500
    rho0: float = 100.0
    rho_growth: float = 10.0
    rho_max: float = 1e12
    time_limit: float = 60.0
    armijo: float = 1e-4


@dataclass
class SolveReport:
    converged: bool
    message: str
    outer_iterations: int
    inner_iterations: int
    cost: float
    max_eq_violation: float
    max_ineq_violation: float
    wall_time: float
    merit_history: list[list[float]] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "converged": self.converged,
            "message": self.message,
            "outer_iterations": self.outer_iterations,
            "inner_iterations": self.inner_iterations,
            "cost": self.cost,
            "max_eq_violation": self.max_eq_violation,
            "max_ineq_violation": self.max_ineq_violation,
            "wall_time": self.wall_time,
        }


class AugmentedLagrangian:
    def __init__(self, evaluate: Callable, options: SolverOptions | None = None, curvature: Callable | None = None):
        """``curvature(z, ev, w_eq, w_ineq)`` returns sum w_i Hess(c_i) + sum v_j Hess(g_j)."""
        self.evaluate = evaluate
        self.opt = options or SolverOptions()
        self.curvature = curvature

    def _merit(self, ev, lam, nu, rho):
        c, g = ev.eq, ev.ineq
        shifted = np.maximum(0.0, nu - rho * g)
        return ev.cost - lam @ c + 0.5 * rho * c @ c + (shifted @ shifted - nu @ nu) / (2 * rho)

    def _grad(self, ev, lam, nu, rho):
        shifted = np.maximum(0.0, nu - rho * ev.ineq)
        return ev.grad - ev.Jc.T @ (lam - rho * ev.eq) - ev.Jg.T @ shifted

    def _hess(self, z, ev, lam, nu, rho):
        shifted = np.maximum(0.0, nu - rho * ev.ineq)
        active = shifted > 0
        H = ev.hess + rho * ev.Jc.T @ ev.Jc
        if np.any(active):
            Ja = ev.Jg[active]
            H = H + rho * Ja.T @ Ja
        if self.curvature is not None:
            H = H - self.curvature(z, ev, lam - rho * ev.eq, shifted)
        return H

    @staticmethod
    def _newton_step(H, g, shift):
        """Solve (H + shift * D) p = -g, raising the shift until the matrix is positive definite."""
        D = np.maximum(np.abs(np.diag(H)), 1e-8)
        while shift < 1e12:
            try:
                factor = cho_factor(H + shift * np.diag(D))
                return cho_solve(factor, -g), shift
            except LinAlgError:
                shift = max(10 * shift, 1e-8)
        raise LinAlgError("could not regularise the Newton model")

    def _initial_multipliers(self, ev):
        """Least-squares multipliers at the start; keeps a feasible guess in place."""
        active = ev.ineq <= 1e-8
        A = np.vstack([ev.Jc, ev.Jg[active]]).T
        y = np.linalg.lstsq(A, ev.grad, rcond=None)[0]
        lam = y[: len(ev.eq)]
        nu = np.zeros(len(ev.ineq))
        nu[active] = np.maximum(y[len(ev.eq) :], 0.0)
        return lam, nu

    def solve(self, z0: np.ndarray) -> tuple[np.ndarray, SolveReport]:
        opt = self.opt
        t0 = time.perf_counter()
        z = np.array(z0, dtype=float)
        if not np.all(np.isfinite(z)):
            raise ValueError("initial guess must be finite")
        ev = self.evaluate(z)
        lam, nu = self._initial_multipliers(ev)
        rho = opt.rho0
        inner_total = 0
        history: list[list[float]] = []
        best = None
        prev_viol = np.inf
        omega = 1e-2
        message = "outer iteration limit reached"
        converged = False
        outer = 0

        def violations(e):
            # callers that scale their rows can report violations in natural units
            if getattr(e, "violation", None) is not None:
                return e.violation
            ceq = float(np.max(np.abs(e.eq), initial=0.0))
            cin = float(max(0.0, -np.min(e.ineq, initial=0.0)))
            return ceq, cin

        for outer in range(1, opt.max_outer + 1):
            merits = [self._merit(ev, lam, nu, rho)]
            damping = 0.0
            stall = 0
            for _ in range(opt.max_inner):
                if time.perf_counter() - t0 > opt.time_limit:
                    break
                gL = self._grad(ev, lam, nu, rho)
                if np.max(np.abs(gL)) <= omega:
                    break
                H = self._hess(z, ev, lam, nu, rho)
                f0 = merits[-1]
                accepted = converged_inner = False
                while damping < 1e12:
                    try:
                        step, damping = self._newton_step(H, gL, damping)
                    except LinAlgError:
                        break
                    slope = gL @ step
                    if slope >= 0:
                        damping = max(10 * damping, 1e-8)
                        continue
                    if -slope <= 1e-12 * max(1.0, abs(f0)):
                        # Newton decrement negligible: the inner problem is solved
                        converged_inner = True
                        break
                    alpha = 1.0
                    while alpha > 1e-3:
                        z_new = z + alpha * step
                        ev_new = self.evaluate(z_new)
                        f_new = self._merit(ev_new, lam, nu, rho)
                        if np.isfinite(f_new) and f_new <= f0 + opt.armijo * alpha * slope:
                            accepted = True
                            break
                        alpha *= 0.5
                    if accepted:
                        break
                    damping = max(10 * damping, 1e-8)
                if converged_inner:
                    break
                inner_total += 1
                if not accepted:
                    break
                z, ev = z_new, ev_new
                merits.append(f_new)
                if alpha == 1.0:
                    damping = damping / 10 if damping > 1e-10 else 0.0
                if abs(f0 - f_new) <= 1e-10 * max(1.0, abs(f0)):
                    stall += 1
                    if stall >= 3:
                        break
                else:
                    stall = 0
            history.append(merits)

            ceq, cin = violations(ev)
            viol = max(ceq, cin)
            if best is None or viol < best[1] - 1e-15 or (viol <= opt.tol and ev.cost < best[2]):
                best = (z.copy(), viol, ev.cost)
            if viol <= opt.tol:
                converged = True
                message = "converged"
                break
            if time.perf_counter() - t0 > opt.time_limit:
                message = "time limit reached"
                break
            lam = lam - rho * ev.eq
            nu = np.maximum(0.0, nu - rho * ev.ineq)
            if viol > 0.25 * prev_viol:
                if rho >= opt.rho_max:
                    message = "penalty limit reached without feasibility"
                    break
                rho = min(rho * opt.rho_growth, opt.rho_max)
            prev_viol = viol
            omega = max(omega * 0.1, 1e-9)
            ev = self.evaluate(z)

        z_best = best[0] if not converged else z
        ev = self.evaluate(z_best)
        ceq, cin = violations(ev)
        report = SolveReport(
            converged=converged,
            message=message,
            outer_iterations=outer,
            inner_iterations=inner_total,
            cost=float(ev.cost),
            max_eq_violation=ceq,
            max_ineq_violation=cin,
            wall_time=time.perf_counter() - t0,
            merit_history=history,
        )
        return z_best, report
