"""PSD-constrained convex state estimation.

Three programs on one accelerated projected-gradient core: constrained least
squares, trace minimization inside a residual ball, and trace-one maximum
likelihood inside a residual ball.  The residual-ball constraints are handled
by a squared-hinge penalty whose weight doubles until the ball is met.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateEstimateError, InfeasibleError
from .linalg import HermitianMatrix, hermitianize, hunvec, hvec, project_simplex
from .povm import MeasurementVector, Povm


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of the projected-gradient core."""

    max_iterations: int = 50_000
    relative_tolerance: float = 1e-9
    shrink: float = 0.5
    growth: float = 1.1
    restart: bool = True

    def __post_init__(self):
        if self.relative_tolerance <= 0:
            raise ValueError("relative_tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class EstimateReport:
    """Solver output: trace-normalized estimate plus the raw optimizer iterate."""

    estimate: HermitianMatrix
    raw: HermitianMatrix
    objective: float
    residual_norm: float
    iterations: int
    converged: bool
    objective_history: np.ndarray | None = None


_CONSECUTIVE_OK = 10


def _operator_norm_sq(s: np.ndarray, iters: int = 40) -> float:
    """Squared spectral norm of S by power iteration on S^T S (deterministic start)."""
    n = s.shape[1]
    v = np.full(n, 1.0 / math.sqrt(n))
    lam = 1.0
    for _ in range(iters):
        w = s.T @ (s @ v)
        lam = np.linalg.norm(w)
        if lam <= 0:
            return 1.0
        v = w / lam
    return float(lam) * 1.05


def _fista(value_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
           value: Callable[[np.ndarray], float],
           project: Callable[[np.ndarray], np.ndarray],
           x0: np.ndarray,
           step0: float,
           cfg: SolverConfig,
           keep_history: bool = False) -> tuple[np.ndarray, float, int, bool, np.ndarray | None]:
    """Monotone FISTA with backtracking line search and gradient restart.

    The reported objective sequence is non-increasing: a candidate that does
    not improve on the incumbent is rejected (the incumbent is kept) and the
    momentum sequence restarts.  Convergence is declared after
    ``_CONSECUTIVE_OK`` consecutive iterations whose relative objective
    change falls below the configured tolerance.
    """
    x = project(x0)
    y = x.copy()
    theta = 1.0
    f_x = value(x)
    t = step0
    streak = 0
    history = [f_x] if keep_history else None
    it = 0
    converged = False
    for it in range(1, cfg.max_iterations + 1):
        f_y, g_y = value_grad(y)
        shrunk = False
        while True:
            z = project(y - t * g_y)
            dz = z - y
            f_z = value(z)
            bound = f_y + g_y @ dz + (dz @ dz) / (2 * t) + 1e-18 * max(1.0, abs(f_y))
            if f_z <= bound or t < 1e-20:
                break
            t *= cfg.shrink
            shrunk = True
        if not shrunk:
            t *= cfg.growth
        accepted = f_z <= f_x
        theta_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta * theta))
        if accepted:
            x_next, f_next = z, f_z
            y = z + ((theta - 1.0) / theta_next) * (z - x)
            if cfg.restart and (y - z) @ (z - x) > 0:
                y = z.copy()
                theta_next = 1.0
        else:
            x_next, f_next = x, f_x
            y = x.copy()
            theta_next = 1.0
        rel = abs(f_x - f_next) / max(abs(f_x), abs(f_next), 1e-300)
        streak = streak + 1 if rel < cfg.relative_tolerance else 0
        x, f_x, theta = x_next, f_next, theta_next
        if history is not None:
            history.append(f_x)
        if streak >= _CONSECUTIVE_OK:
            converged = True
            break
    hist = np.array(history) if history is not None else None
    return x, f_x, it, converged, hist


def _project_psd_coeffs(d: int):
    def proj(x: np.ndarray) -> np.ndarray:
        m = hunvec(x, d)
        w, v = np.linalg.eigh(m)
        if w[0] >= 0.0:
            return x
        w = np.maximum(w, 0.0)
        return hvec((v * w) @ v.conj().T)

    return proj


def _lm_residual_polish(stack: np.ndarray, s: np.ndarray, fv: np.ndarray,
                        x: np.ndarray, d: int, iters: int = 150) -> np.ndarray | None:
    """Refine the data fit on a low-rank spectral factor of the iterate.

    Projected gradient crawls when the optimum sits on a degenerate face of
    the PSD cone (small probe families have recovery constants of order
    10^3, so certifying 1e-5 infidelity needs residuals near 1e-9).  This
    stage factors the iterate as X = V V^dagger at its numerical rank and
    drives ||M[V V^dagger] - f|| down by Levenberg-Marquardt, which is
    immune to the cone geometry.  Returns coefficients of the refined
    matrix, or None when the iterate is essentially zero.
    """
    xm = hunvec(x, d)
    w, vecs = np.linalg.eigh(xm)
    lmax = float(w[-1])
    if lmax <= 1e-12:
        return None
    r_hat = min(d, int((w > 1e-3 * lmax).sum()) + 1)
    idx = np.argsort(w)[::-1][:r_hat]
    v = vecs[:, idx] * np.sqrt(np.maximum(w[idx], 0.0))

    def residual(vv: np.ndarray) -> np.ndarray:
        return s @ hvec(vv @ vv.conj().T) - fv

    r = residual(v)
    obj = 0.5 * float(r @ r)
    mu = 1e-3
    m = fv.size
    for _ in range(iters):
        ev = np.einsum("mij,jr->mir", stack, v)
        j = 2.0 * np.concatenate([ev.real.reshape(m, -1), ev.imag.reshape(m, -1)], axis=1)
        g = j.T @ r
        a = j.T @ j
        accepted = False
        for _ in range(30):
            try:
                delta = np.linalg.solve(a + mu * np.eye(a.shape[0]), -g)
            except np.linalg.LinAlgError:
                mu *= 4.0
                continue
            half = delta.size // 2
            dv = delta[:half].reshape(v.shape) + 1j * delta[half:].reshape(v.shape)
            v_new = v + dv
            r_new = residual(v_new)
            obj_new = 0.5 * float(r_new @ r_new)
            if obj_new < obj:
                accepted = True
                mu = max(mu * 0.3, 1e-12)
                break
            mu *= 4.0
        if not accepted:
            break
        v, r, obj = v_new, r_new, obj_new
        if obj < 1e-28:
            break
    return hvec(v @ v.conj().T)


def _project_density_coeffs(d: int):
    def proj(x: np.ndarray) -> np.ndarray:
        m = hunvec(x, d)
        w, v = np.linalg.eigh(m)
        w = project_simplex(w)
        return hvec((v * w) @ v.conj().T)

    return proj


def _fisher_polish_nll(stack: np.ndarray, s: np.ndarray, fv: np.ndarray,
                       x: np.ndarray, d: int, iters: int = 120) -> np.ndarray | None:
    """Damped Fisher scoring for the log-likelihood on a trace-normalized factor.

    Likelihood surfaces near flat directions leave first-order methods with
    large state error at tiny objective error; scoring with the Fisher
    information metric removes that.  Returns coefficients of the refined
    density matrix, or None when the iterate is essentially zero.
    """
    xm = hunvec(x, d)
    w, vecs = np.linalg.eigh(xm)
    lmax = float(w[-1])
    if lmax <= 1e-12:
        return None
    active = fv > 0
    fa = fv[active]
    r_hat = min(d, int((w > 1e-6 * lmax).sum()))
    idx = np.argsort(w)[::-1][:r_hat]
    v = vecs[:, idx] * np.sqrt(np.maximum(w[idx], 1e-15))
    m = fv.size

    def nll_of(vv: np.ndarray) -> tuple[float, np.ndarray]:
        tau = float(np.sum((vv.conj() * vv).real))
        rho = (vv @ vv.conj().T) / tau
        p = np.maximum(np.einsum("mij,ji->m", stack, rho).real, _LOG_CLAMP)
        return -float(fa @ np.log(p[active])), p

    obj, p = nll_of(v)
    mu = 1e-2
    for _ in range(iters):
        tau = float(np.sum((v.conj() * v).real))
        ev = np.einsum("mij,jr->mir", stack, v)
        ev = ev - p[:, None, None] * v[None, :, :]
        jac = (2.0 / tau) * np.concatenate(
            [ev.real.reshape(m, -1), ev.imag.reshape(m, -1)], axis=1
        )
        weights = np.where(active, fv / (p * p), 0.0)
        grad = -jac.T @ np.where(active, fv / p, 0.0)
        fisher = (jac * weights[:, None]).T @ jac
        accepted = False
        for _ in range(25):
            try:
                delta = np.linalg.solve(fisher + mu * np.eye(fisher.shape[0]), -grad)
            except np.linalg.LinAlgError:
                mu *= 4.0
                continue
            half = delta.size // 2
            dv = delta[:half].reshape(v.shape) + 1j * delta[half:].reshape(v.shape)
            v_new = v + dv
            obj_new, p_new = nll_of(v_new)
            if obj_new < obj:
                accepted = True
                mu = max(mu * 0.3, 1e-10)
                break
            mu *= 4.0
        if not accepted:
            break
        rel = (obj - obj_new) / max(abs(obj), 1e-300)
        v, obj, p = v_new, obj_new, p_new
        if rel < 1e-14:
            break
    rho = (v @ v.conj().T) / float(np.sum((v.conj() * v).real))
    return hvec(rho)


_CHUNK = 500


def _solve(value_grad, value, project, x0, step0, cfg: SolverConfig,
           stack: np.ndarray, s: np.ndarray, fv: np.ndarray, d: int,
           keep_history: bool, polish: bool = True) -> tuple[np.ndarray, float, int, bool, np.ndarray | None]:
    """Accelerated projected gradient interleaved with the low-rank data-fit polish.

    A polish candidate is projected back onto the feasible set and adopted
    only when it lowers the program objective, so the reported objective
    sequence stays non-increasing and the result remains a solution of the
    convex program, never merely of the factored surrogate.
    """
    x = project(np.asarray(x0, dtype=float))
    f_x = value(x)
    total = 0
    converged = False
    history = [f_x] if keep_history else None
    while total < cfg.max_iterations:
        budget = min(_CHUNK, cfg.max_iterations - total)
        chunk_cfg = SolverConfig(max_iterations=budget,
                                 relative_tolerance=cfg.relative_tolerance,
                                 shrink=cfg.shrink, growth=cfg.growth,
                                 restart=cfg.restart)
        x, f_x, used, chunk_conv, hist = _fista(value_grad, value, project, x,
                                                step0, chunk_cfg, keep_history)
        total += used
        if history is not None and hist is not None:
            history.extend(hist[1:])
        improved = False
        if polish:
            xp = _lm_residual_polish(stack, s, fv, x, d)
            if xp is not None:
                xp = project(xp)
                f_p = value(xp)
                if f_p < f_x:
                    # keep alternating only while the polish still pays off
                    improved = f_p < 0.5 * f_x
                    x, f_x = xp, f_p
                    if history is not None:
                        history.append(f_x)
        if chunk_conv and not improved:
            converged = True
            break
    hist_arr = np.array(history) if history is not None else None
    return x, f_x, total, converged, hist_arr


def _check_lengths(povm: Povm, f: MeasurementVector):
    if len(f) != len(povm):
        raise ValueError(
            f"measurement vector has {len(f)} entries but the POVM has {len(povm)} elements"
        )


def _finish(x: np.ndarray, d: int, objective: float, residual: float,
            iterations: int, converged: bool, history,
            normalize: bool = True) -> EstimateReport:
    raw = HermitianMatrix(hermitianize(hunvec(x, d)))
    tr = float(np.trace(raw.mat).real)
    if tr <= 1e-12:
        raise DegenerateEstimateError(
            f"optimizer returned a matrix with trace {tr:.3e}; no state can be formed"
        )
    estimate = HermitianMatrix(raw.mat / tr) if normalize else raw
    return EstimateReport(estimate, raw, objective, residual, iterations, converged, history)


def estimate_ls(povm: Povm, f: MeasurementVector,
                cfg: SolverConfig = SolverConfig(),
                keep_history: bool = False) -> EstimateReport:
    """Constrained least squares: minimize ||M[X] - f||_2 over X >= 0."""
    _check_lengths(povm, f)
    d = povm.dim
    s = povm.coefficient_matrix
    fv = f.values

    def value(x: np.ndarray) -> float:
        r = s @ x - fv
        return 0.5 * float(r @ r)

    def value_grad(x: np.ndarray) -> tuple[float, np.ndarray]:
        r = s @ x - fv
        return 0.5 * float(r @ r), s.T @ r

    lip = _operator_norm_sq(s)
    x, f_x, iters, conv, hist = _solve(
        value_grad, value, _project_psd_coeffs(d), np.zeros(d * d), 1.0 / lip, cfg,
        povm.stack, s, fv, d, keep_history,
    )
    residual = math.sqrt(2.0 * max(f_x, 0.0))
    return _finish(x, d, residual, residual, iters, conv, hist)


def _penalized(povm: Povm, f: MeasurementVector, eps: float, cfg: SolverConfig,
               base_value: Callable, base_grad: Callable,
               project, x0: np.ndarray, step0: float,
               keep_history: bool) -> tuple[np.ndarray, float, int, bool, np.ndarray | None, float]:
    """Solve min base(x) s.t. ||Sx - f|| <= eps via a squared-hinge penalty.

    The penalty weight doubles until the ball constraint is met.  At each
    weight the penalized value of the inner iterate lower-bounds the true
    optimum, so a running feasible incumbent (from the data-fit polish) can
    be returned as soon as its base value matches that bound; this is what
    terminates the loop on degenerate instances where the plain iterate
    approaches feasibility only as the weight diverges.
    """
    s = povm.coefficient_matrix
    fv = f.values
    d = povm.dim
    lam = 1.0
    slack = 1e-9
    x = x0
    total_iters = 0
    lam_max = 1e16
    # later rounds are warm-started; give each a bounded slice of the budget
    round_budget = max(200, min(cfg.max_iterations, 600))
    round_cfg = SolverConfig(max_iterations=round_budget,
                             relative_tolerance=cfg.relative_tolerance,
                             shrink=cfg.shrink, growth=cfg.growth, restart=cfg.restart)
    incumbent = None
    incumbent_base = np.inf
    best_fit = None
    best_fit_resid = np.inf
    while True:
        def value(xx: np.ndarray) -> float:
            r = s @ xx - fv
            gap = max(np.linalg.norm(r) - eps, 0.0)
            return base_value(xx, r) + lam * gap * gap

        def value_grad(xx: np.ndarray) -> tuple[float, np.ndarray]:
            r = s @ xx - fv
            nrm = np.linalg.norm(r)
            gap = max(nrm - eps, 0.0)
            val = base_value(xx, r) + lam * gap * gap
            grad = base_grad(xx, r)
            if gap > 0.0 and nrm > 0.0:
                grad = grad + (2.0 * lam * gap / nrm) * (s.T @ r)
            return val, grad

        x, f_x, iters, conv, hist = _solve(value_grad, value, project, x, step0,
                                           round_cfg, povm.stack, s, fv, d, keep_history,
                                           polish=False)
        total_iters += iters
        resid = float(np.linalg.norm(s @ x - fv))
        if resid <= eps + slack:
            return x, f_x, total_iters, conv, hist, resid
        # refine the raw data fit, chaining from the best fit found so far
        xc = _lm_residual_polish(povm.stack, s, fv,
                                 best_fit if best_fit is not None else x, d, iters=400)
        if xc is not None:
            rc_raw = float(np.linalg.norm(s @ xc - fv))
            if rc_raw < best_fit_resid:
                best_fit, best_fit_resid = xc, rc_raw
            xcp = project(xc)
            rc = s @ xcp - fv
            if float(np.linalg.norm(rc)) <= eps + slack:
                bc = base_value(xcp, rc)
                if bc < incumbent_base:
                    incumbent, incumbent_base = xcp, bc
        if incumbent is not None and (conv or lam >= 64.0):
            # the (near-)converged iterate's base value lower-bounds the optimum
            base_x = base_value(x, s @ x - fv)
            if incumbent_base <= base_x + 1e-5 * max(1.0, abs(incumbent_base)):
                resid_inc = float(np.linalg.norm(s @ incumbent - fv))
                return incumbent, incumbent_base, total_iters, True, hist, resid_inc
        lam *= 2.0
        if lam > lam_max:
            raise InfeasibleError(
                f"residual {resid:.3e} cannot be brought inside the ball of radius {eps:.3e}"
            )


def estimate_trace_min(povm: Povm, f: MeasurementVector, eps: float,
                       cfg: SolverConfig = SolverConfig(),
                       keep_history: bool = False) -> EstimateReport:
    """Trace minimization: minimize Tr(X) s.t. ||M[X] - f||_2 <= eps, X >= 0."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    _check_lengths(povm, f)
    d = povm.dim
    diag_grad = np.zeros(d * d)
    diag_grad[:d] = 1.0

    def base_value(x: np.ndarray, r: np.ndarray) -> float:
        return float(x[:d].sum())

    def base_grad(x: np.ndarray, r: np.ndarray) -> np.ndarray:
        return diag_grad.copy()

    lip = _operator_norm_sq(povm.coefficient_matrix)
    x, _, iters, conv, hist, resid = _penalized(
        povm, f, eps, cfg, base_value, base_grad,
        _project_psd_coeffs(d), np.zeros(d * d), 1.0 / lip, keep_history,
    )
    objective = float(x[:d].sum())
    return _finish(x, d, objective, resid, iters, conv and resid <= eps + 1e-9, hist)


_LOG_CLAMP = 1e-12


def estimate_mle(povm: Povm, f: MeasurementVector, eps: float,
                 cfg: SolverConfig = SolverConfig(),
                 keep_history: bool = False) -> EstimateReport:
    """Trace-one maximum likelihood inside a residual ball.

    Minimizes -sum_mu f_mu log Tr(E_mu rho) over density matrices, with model
    probabilities clamped below at 1e-12 inside the log and the same
    penalty scheme enforcing ||M[rho] - f||_2 <= eps.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    _check_lengths(povm, f)
    d = povm.dim
    s = povm.coefficient_matrix
    fv = np.maximum(f.values, 0.0)
    active = fv > 0

    def base_value(x: np.ndarray, r: np.ndarray) -> float:
        p = np.maximum(r + fv, _LOG_CLAMP)
        return -float(fv[active] @ np.log(p[active]))

    def base_grad(x: np.ndarray, r: np.ndarray) -> np.ndarray:
        p = np.maximum(r + fv, _LOG_CLAMP)
        w = np.where(active, fv / p, 0.0)
        return -(s.T @ w)

    lip = _operator_norm_sq(s) * max(1.0, 1.0 / max(fv.max(), _LOG_CLAMP))
    x0 = hvec(np.eye(d, dtype=np.complex128) / d)
    project = _project_density_coeffs(d)
    x, f_x, iters, conv, hist, resid = _penalized(
        povm, f, eps, cfg, base_value, base_grad, project, x0, 1.0 / lip, keep_history,
    )

    def nll_at(xx: np.ndarray) -> float:
        p = np.maximum(s @ xx, _LOG_CLAMP)
        return -float(fv[active] @ np.log(p[active]))

    # likelihood refinement: keep only if it improves the program, feasibility included
    xp = _fisher_polish_nll(povm.stack, s, fv, x, d)
    if xp is not None:
        xp = project(xp)
        resid_p = float(np.linalg.norm(s @ xp - fv))
        if resid_p <= eps + 1e-9 and nll_at(xp) < nll_at(x):
            x, resid = xp, resid_p
            conv = True  # scoring stalls only at a stationary likelihood point
    objective = nll_at(x)
    return _finish(x, d, objective, resid, iters, conv and resid <= eps + 1e-9, hist,
                   normalize=True)


def default_epsilon(b: int, d: int, n_shots: int) -> float:
    """Residual-ball radius sqrt(b (1 - 1/d) / N) from multinomial variance at I/d."""
    if b < 1 or d < 1 or n_shots < 1:
        raise ValueError("b, d, and N must all be at least 1")
    return math.sqrt(b * (1.0 - 1.0 / d) / n_shots)
