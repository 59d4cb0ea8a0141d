"""Finite-volume m-Laplacian and the scalar singular problem

    -Delta_m u = K(x) u^-p  in the domain,   u = 0 on the Dirichlet boundary.

The discrete operator is a monotone (M-function) map, so sub- and
supersolutions bracket the discrete solution exactly as in the continuous
comparison principle.  The solve is a damped Newton method on the interior
unknowns with a flux regularisation that is switched off in stages, backed by
a shifted monotone iteration that descends from the supersolution.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import LinAlgError, solve_banded, solveh_banded

from .mesh import Mesh
from .regime import EPS_CLS, StructuralViolation

log = logging.getLogger(__name__)


class DegenerateMeshError(ValueError):
    pass


class BarrierFailure(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual=math.nan, component=None):
        self.residual = residual
        self.component = component
        super().__init__(message)


# ---------------------------------------------------------------------------
# Operator
# ---------------------------------------------------------------------------

def _flux(D: np.ndarray, m: float, sigma: float = 0.0):
    """Regularised flux (D^2 + sigma^2)^((m-2)/2) D and its derivative in D."""
    if m == 2.0:
        return D.copy(), np.ones_like(D)
    mag2 = D * D + sigma * sigma
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        F = np.where(mag2 > 0, mag2 ** (0.5 * (m - 2)) * D, 0.0)
        dF = mag2 ** (0.5 * (m - 4)) * ((m - 1) * D * D + sigma * sigma)
    if m > 2:
        dF = np.where(mag2 > 0, dF, 0.0)
    else:
        # |D|^(m-2) is unbounded at D = 0 when m < 2
        dF = np.where(np.isfinite(dF), dF, 1e300)
    return F, dF


def _gradients(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    h = mesh.h
    if np.any(h <= 0):
        raise DegenerateMeshError("mesh has a zero-length cell")
    return np.diff(u) / h


def _divergence(mesh: Mesh, face_values: np.ndarray) -> np.ndarray:
    wf = mesh.face_weight * face_values
    div = np.zeros(mesh.n + 1)
    div[:-1] += wf
    div[1:] -= wf
    return div


def apply_m_laplacian(mesh: Mesh, u: np.ndarray, m: float, sigma: float = 0.0) -> np.ndarray:
    """Discrete Delta_m u at every node; Dirichlet rows are NaN.

    Face fluxes |Du|^(m-2) Du use one-sided difference quotients; node values
    are the flux balance over the dual cell divided by its measure.  On the
    ball the faces carry rho^(N-1) and the axis node sees only its outer face
    (mirror ghost node).
    """
    u = np.asarray(u, dtype=float)
    F, _ = _flux(_gradients(mesh, u), m, sigma)
    out = np.full(mesh.n + 1, np.nan)
    free = mesh.free
    out[free] = _divergence(mesh, F)[free] / mesh.cell_measure[free]
    return out


def _operator_jacobian(mesh: Mesh, u: np.ndarray, m: float, sigma: float):
    """Row-scaled (by cell measure) residual of -Delta_m and its SPD tridiagonal
    Jacobian on the free nodes, as (rhs, diag, offdiag)."""
    D = _gradients(mesh, u)
    F, dF = _flux(D, m, sigma)
    free = mesh.free
    neg_div = -_divergence(mesh, F)[free]
    a = mesh.face_weight * dF / mesh.h  # one coefficient per face
    left = np.concatenate([[0.0], a])[free]   # face i-1/2 of node i
    right = a[free]                           # face i+1/2 of node i
    diag = left + right
    off = -right[:-1]
    return neg_div, diag, off


def _tridiag_solve(diag, off, rhs):
    ab = np.vstack([np.concatenate([[0.0], off]), diag])
    try:
        return solveh_banded(ab, rhs, check_finite=False)
    except LinAlgError:
        full = np.vstack([np.concatenate([[0.0], off]), diag, np.concatenate([off, [0.0]])])
        return solve_banded((1, 1), full, rhs)


# ---------------------------------------------------------------------------
# Problem description
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SingularWeight:
    """K(x) ~ scale * delta^-q_exp * log(A/delta)^-log_exp, or a nodal table.

    ``q_exp`` and ``log_exp`` always describe the boundary behaviour (they
    select the barrier family); ``tabulated`` overrides the values.
    """

    q_exp: float = 0.0
    log_exp: Optional[float] = None
    scale: float = 1.0
    tabulated: Optional[np.ndarray] = None
    log_offset: Optional[float] = None

    def __post_init__(self):
        if self.tabulated is None:
            if self.log_exp is not None and self.q_exp != 1.0:
                raise ValueError("a logarithmic weight needs q_exp = 1")
            if not self.scale > 0:
                raise ValueError("weight scale must be positive")

    def values(self, mesh: Mesh) -> np.ndarray:
        """Nodal weight; Dirichlet entries are NaN."""
        out = np.full(mesh.n + 1, np.nan)
        free = mesh.free
        if self.tabulated is not None:
            tab = np.asarray(self.tabulated, dtype=float)
            if tab.shape != (mesh.n + 1,):
                raise ValueError(f"tabulated weight has shape {tab.shape}, mesh needs {(mesh.n + 1,)}")
            out[free] = tab[free]
            return out
        d = mesh.delta[free]
        k = self.scale * d ** (-self.q_exp)
        if self.log_exp is not None:
            A = self.log_offset or log_offset(mesh)
            k = k * np.log(A / d) ** (-self.log_exp)
        out[free] = k
        return out


def log_offset(mesh: Mesh) -> float:
    """A = e (1 + diam) keeps log(A/delta) >= 1 on the whole domain."""
    return math.e * (1.0 + mesh.domain.diameter)


@dataclass(frozen=True, eq=False)
class ScalarProblem:
    mesh: Mesh
    weight: SingularWeight
    p: float
    m: float

    def __post_init__(self):
        if not self.m > 1:
            raise ValueError("m must be > 1")
        if self.p < 0:
            raise ValueError("p must be >= 0")

    def violations(self) -> list[str]:
        m = self.m
        if self.weight.q_exp + self.p * (1 - 1 / m) < 2 - 1 / m:
            return []
        return ["scalar structural"]

    def regime(self) -> int:
        """-1, 0, +1 as p + q_exp is below, at, or above 1."""
        x = self.p + self.weight.q_exp
        if x < 1 - EPS_CLS:
            return -1
        return 1 if x > 1 + EPS_CLS else 0

    def residual(self, u: np.ndarray, sigma: float = 0.0) -> np.ndarray:
        """-Delta_m u - K u^-p at free nodes (NaN elsewhere)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return -apply_m_laplacian(self.mesh, u, self.m, sigma) - self.weight.values(self.mesh) * u ** (-self.p)


@dataclass(frozen=True)
class NewtonSettings:
    sigma_schedule: tuple = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 0.0)
    backtrack: float = 0.5
    tol_residual: float = 1e-9
    tol_step: float = 1e-11
    max_iter: int = 200
    positivity_fraction: float = 0.5
    max_fallback_iter: int = 20000
    fallback_tol: float = 1e-12

    def __post_init__(self):
        if not (self.tol_residual > 0 and self.tol_step > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "NewtonSettings":
        d = dict(d)
        if "sigma_schedule" in d:
            d["sigma_schedule"] = tuple(d["sigma_schedule"])
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "sigma_schedule": list(self.sigma_schedule),
            "backtrack": self.backtrack,
            "tol_residual": self.tol_residual,
            "tol_step": self.tol_step,
            "max_iter": self.max_iter,
            "positivity_fraction": self.positivity_fraction,
            "max_fallback_iter": self.max_fallback_iter,
            "fallback_tol": self.fallback_tol,
        }


# ---------------------------------------------------------------------------
# Barriers
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Barriers:
    sub: np.ndarray
    sup: np.ndarray
    profile: np.ndarray
    c_sub: float
    c_sup: float
    power: float
    log_power: Optional[float] = None

    def __iter__(self):
        return iter((self.sub, self.sup))


def barrier_profile(prob: ScalarProblem) -> tuple[np.ndarray, float, Optional[float]]:
    """Shape of the sub/supersolutions selected by the sign of p + q - 1."""
    mesh, m, p, q = prob.mesh, prob.m, prob.p, prob.weight.q_exp
    phi = mesh.phi
    regime = prob.regime()
    if regime < 0:
        return phi.copy(), 1.0, None
    if regime == 0:
        beta = 1.0 / (m + p - 1)
        prof = np.zeros_like(phi)
        pos = phi > 0
        prof[pos] = phi[pos] * np.log(log_offset(mesh) / phi[pos]) ** beta
        return prof, 1.0, beta
    alpha = (m - q) / (m + p - 1)
    return phi ** alpha, alpha, None


def _sub_ok(prob, w, K) -> bool:
    free = prob.mesh.free
    lhs = -apply_m_laplacian(prob.mesh, w, prob.m)[free]
    rhs = K * w[free] ** (-prob.p)
    return bool(np.all(lhs <= rhs))


def _sup_ok(prob, w, K) -> bool:
    free = prob.mesh.free
    lhs = -apply_m_laplacian(prob.mesh, w, prob.m)[free]
    rhs = K * w[free] ** (-prob.p)
    return bool(np.all(lhs >= rhs))


def build_barriers(prob: ScalarProblem, c_max: float = 2.0 ** 20) -> Barriers:
    """Discrete sub/supersolution pair ``profile/c_sub <= profile * c_sup``.

    Both constants start at 2 and are doubled until the discrete inequalities
    hold at every free node.

    Raises
    ------
    BarrierFailure
        If a constant would exceed ``c_max``.
    """
    K = prob.weight.values(prob.mesh)[prob.mesh.free]
    if np.any(~np.isfinite(K)) or np.any(K < 0):
        raise BarrierFailure("weight must be finite and nonnegative at free nodes")
    prof, power, log_power = barrier_profile(prob)

    c_sub = 2.0
    while not _sub_ok(prob, prof / c_sub, K):
        c_sub *= 2.0
        if c_sub > c_max:
            raise BarrierFailure(f"no subsolution with c <= {c_max:g}")
    sup_prof = prof
    c_sup = _doubling(lambda c: _sup_ok(prob, sup_prof * c, K), c_max)
    if c_sup is None and prob.regime() < 0 and prob.p > 0:
        # c*phi is only a supersolution up to a mesh-dependent constant when
        # p + q < 1; the frozen solve -Delta_m z = K phi^-p gives z ~ delta
        # with a supersolution constant that stays bounded under refinement.
        free = prob.mesh.free
        sup_prof = solve_frozen(prob.mesh, K * prob.mesh.phi[free] ** (-prob.p), prob.m)
        c_sup = _doubling(lambda c: _sup_ok(prob, sup_prof * c, K), c_max)
    if c_sup is None:
        raise BarrierFailure(f"no supersolution with c <= {c_max:g}")
    return Barriers(prof / c_sub, sup_prof * c_sup, prof, c_sub, c_sup, power, log_power)


def _doubling(ok, c_max):
    c = 2.0
    while not ok(c):
        c *= 2.0
        if c > c_max:
            return None
    return c


# ---------------------------------------------------------------------------
# Nonlinear solves
# ---------------------------------------------------------------------------

@dataclass
class _NewtonResult:
    u: np.ndarray
    converged: bool
    iterations: int
    residual: float


def _newton(mesh: Mesh, m: float, u0: np.ndarray,
            reaction: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
            floor: np.ndarray, sigma: float, tol_abs: float,
            settings: NewtonSettings) -> _NewtonResult:
    """Damped Newton for -Delta_m,sigma u + c(u) = 0 on the free nodes.

    ``reaction`` returns c(u_free) and its (diagonal) derivative.  Steps are
    shortened until the iterate stays above ``floor`` and the measure-weighted
    residual norm decreases (Armijo).
    """
    free = mesh.free
    V = mesh.cell_measure[free]
    u = np.array(u0, dtype=float)

    def evaluate(w):
        neg_div, diag, off = _operator_jacobian(mesh, w, m, sigma)
        c, dc = reaction(w[free])
        G = neg_div / V + c
        return G, diag + V * dc, off

    G, diag, off = evaluate(u)
    res = float(np.max(np.abs(G)))
    merit = float(np.linalg.norm(V * G))
    ok_streak = 0
    for it in range(1, settings.max_iter + 1):
        if not np.isfinite(merit):
            return _NewtonResult(u, False, it - 1, res)
        try:
            du = _tridiag_solve(diag, off, -V * G)
        except (LinAlgError, ValueError):
            return _NewtonResult(u, False, it - 1, res)
        if not np.all(np.isfinite(du)):
            return _NewtonResult(u, False, it - 1, res)

        lam = 1.0
        accepted = False
        while lam > 1e-12:
            trial = u.copy()
            trial[free] = u[free] + lam * du
            if np.all(trial[free] > floor):
                Gt, diag_t, off_t = evaluate(trial)
                merit_t = float(np.linalg.norm(V * Gt))
                if np.isfinite(merit_t) and (merit_t <= (1 - 1e-4 * lam) * merit or merit_t == 0.0):
                    accepted = True
                    break
            lam *= settings.backtrack
        if not accepted:
            converged = res <= tol_abs
            return _NewtonResult(u, converged, it - 1, res)

        step = lam * float(np.max(np.abs(du)))
        u, G, diag, off, merit = trial, Gt, diag_t, off_t, merit_t
        res = float(np.max(np.abs(G)))
        if res <= tol_abs:
            ok_streak += 1
            if step <= settings.tol_step * float(np.max(np.abs(u))) or ok_streak >= 3:
                return _NewtonResult(u, True, it, res)
        else:
            ok_streak = 0
    return _NewtonResult(u, res <= tol_abs, settings.max_iter, res)


def _continuation(mesh, m, u0, reaction, floor, tol_abs, settings, schedule):
    """Run Newton over a decreasing flux-regularisation schedule.

    Schedule entries are relative to the largest initial difference quotient,
    so the regularisation is scale free.  Only the last stage must converge.
    """
    if m == 2.0:
        schedule = (0.0,)
    grad_scale = float(np.max(np.abs(_gradients(mesh, u0)))) or 1.0
    u = u0
    total = 0
    result = None
    for k, sig in enumerate(schedule):
        last = k == len(schedule) - 1
        tol = tol_abs if last else max(tol_abs, 1e-6 * _reaction_scale(reaction, u, mesh))
        result = _newton(mesh, m, u, reaction, floor, sig * grad_scale, tol, settings)
        total += result.iterations
        if np.all(np.isfinite(result.u)):
            u = result.u
    result.iterations = total
    return result


def _reaction_scale(reaction, u, mesh):
    c, _ = reaction(u[mesh.free])
    return float(np.max(np.abs(c))) or 1.0


@dataclass
class ScalarReport:
    residual: float
    relative_residual: float
    iterations: int
    sandwich_ok: Optional[bool]
    converged: bool
    method: str
    c_sub: float
    c_sup: float
    fallback_iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "residual": self.residual,
            "relative_residual": self.relative_residual,
            "iters": self.iterations,
            "sandwich_ok": self.sandwich_ok,
            "converged": self.converged,
            "method": self.method,
            "c_sub": self.c_sub,
            "c_sup": self.c_sup,
            "fallback_iters": self.fallback_iterations,
        }


def _singular_reaction(K: np.ndarray, p: float):
    if p == 0.0:
        zero = np.zeros_like(K)
        return lambda uf: (-K, zero)

    def reaction(uf):
        up = uf ** (-p)
        return -K * up, p * K * up / uf

    return reaction


def solve_scalar(prob: ScalarProblem, settings: Optional[NewtonSettings] = None,
                 initial: Optional[np.ndarray] = None,
                 barriers: Optional[Barriers] = None) -> tuple[np.ndarray, ScalarReport]:
    """Solve -Delta_m u = K u^-p with zero Dirichlet data.

    Parameters
    ----------
    prob : ScalarProblem
    settings : NewtonSettings, optional
    initial : ndarray, optional
        Warm start.  It is clipped into the barrier sandwich and Newton runs
        without regularisation first; the default start is the supersolution.
    barriers : Barriers, optional
        Reuse a previously built pair.

    Returns
    -------
    u : ndarray
        Nodal solution, zero at Dirichlet nodes.
    report : ScalarReport

    Raises
    ------
    StructuralViolation, BarrierFailure, ConvergenceError
    """
    settings = settings or NewtonSettings()
    violations = prob.violations()
    if violations:
        raise StructuralViolation(violations)
    mesh = prob.mesh
    free = mesh.free
    K = prob.weight.values(mesh)[free]
    if prob.p == 0.0 and np.any(K < 0):
        return _solve_unconstrained(prob, K, settings, initial)
    try:
        bar = barriers or build_barriers(prob)
    except BarrierFailure:
        if prob.p != 0.0:
            raise
        return _solve_unconstrained(prob, K, settings, initial)
    reaction = _singular_reaction(K, prob.p)
    floor = settings.positivity_fraction * bar.sub[free]
    scale = float(np.max(K * bar.sub[free] ** (-prob.p)))
    tol_abs = settings.tol_residual * scale

    result = None
    if initial is not None:
        u0 = np.clip(np.asarray(initial, dtype=float), bar.sub, bar.sup)
        result = _continuation(mesh, prob.m, u0, reaction, floor, tol_abs, settings, (0.0,))
    if result is None or not result.converged:
        result = _continuation(mesh, prob.m, bar.sup.copy(), reaction, floor, tol_abs,
                               settings, settings.sigma_schedule)
    method = "newton"
    fallback_iters = 0
    u = result.u
    if not result.converged:
        log.info("Newton stalled (residual %.3e); switching to monotone iteration", result.residual)
        u, history = monotone_iteration(prob, bar, settings)
        fallback_iters = len(history)
        method = "monotone"
    u[mesh.dirichlet] = 0.0

    res = prob.residual(u)[free]
    res_inf = float(np.max(np.abs(res)))
    converged = res_inf <= tol_abs
    slack = 1e-10 * float(np.max(bar.sup))
    sandwich = bool(np.all(bar.sub - slack <= u) and np.all(u <= bar.sup + slack))
    report = ScalarReport(res_inf, res_inf / scale, result.iterations, sandwich, converged,
                          method, bar.c_sub, bar.c_sup, fallback_iters)
    if not converged:
        raise ConvergenceError(f"scalar solve did not converge (residual {res_inf:.3e})", res_inf)
    return u, report


def _solve_unconstrained(prob, K, settings, initial):
    """-Delta_m u = f with a sign-changing f: no barriers, no positivity."""
    mesh = prob.mesh
    free = mesh.free
    reaction = _singular_reaction(K, 0.0)
    floor = np.full(len(free), -np.inf)
    scale = float(np.max(np.abs(K)))
    tol_abs = settings.tol_residual * scale
    u0 = np.zeros(mesh.n + 1) if initial is None else np.array(initial, dtype=float)
    result = _continuation(mesh, prob.m, u0, reaction, floor, tol_abs, settings,
                           settings.sigma_schedule)
    u = result.u
    u[mesh.dirichlet] = 0.0
    res_inf = float(np.max(np.abs(prob.residual(u)[free])))
    converged = res_inf <= tol_abs
    report = ScalarReport(res_inf, res_inf / scale, result.iterations, None, converged,
                          "newton", math.nan, math.nan)
    if not converged:
        raise ConvergenceError(f"scalar solve did not converge (residual {res_inf:.3e})", res_inf)
    return u, report


def monotone_iteration(prob: ScalarProblem, bar: Barriers,
                       settings: Optional[NewtonSettings] = None,
                       max_iter: Optional[int] = None) -> tuple[np.ndarray, list[np.ndarray]]:
    """Order-preserving iteration descending from the supersolution.

    Each step solves ``-Delta_m w + L w = K u_k^-p + L u_k`` with the nodal
    shift ``L = p K sub^(-p-1)``, which makes the right-hand side increasing
    in u on [sub, sup]; hence sup >= u_1 >= u_2 >= ... >= sub.
    Returns the last iterate and the list of all iterates.
    """
    settings = settings or NewtonSettings()
    max_iter = settings.max_fallback_iter if max_iter is None else max_iter
    mesh, p = prob.mesh, prob.p
    free = mesh.free
    K = prob.weight.values(mesh)[free]
    shift = p * K * bar.sub[free] ** (-p - 1)
    floor = np.zeros(len(free))
    u = bar.sup.copy()
    history = []
    for _ in range(max_iter):
        g = K * u[free] ** (-p) + shift * u[free]
        tol_abs = 1e-13 * float(np.max(np.abs(g)))

        def reaction(wf, g=g):
            return shift * wf - g, shift

        res = _continuation(mesh, prob.m, u, reaction, floor, tol_abs, settings, (0.0,))
        if not res.converged:
            res = _continuation(mesh, prob.m, u, reaction, floor, tol_abs, settings,
                                settings.sigma_schedule)
        # The shifted map is order preserving; clip roundoff-level increases.
        new = np.minimum(res.u, u)
        new[mesh.dirichlet] = 0.0
        history.append(new)
        change = float(np.max(np.abs(new - u))) / float(np.max(np.abs(u)))
        u = new
        if change <= settings.fallback_tol:
            break
    return u, history


def comparison_check(u_sub: np.ndarray, u_super: np.ndarray, prob: ScalarProblem,
                     rtol: float = 1e-8) -> Optional[bool]:
    """Whether u_sub <= u_super nodewise, given they are a discrete
    sub/supersolution pair for ``prob``.

    Returns None when the pair does not satisfy the sub/supersolution
    inequalities (within ``rtol``), since the comparison principle then says
    nothing.
    """
    mesh = prob.mesh
    free = mesh.free
    K = prob.weight.values(mesh)[free]
    with np.errstate(divide="ignore", invalid="ignore"):
        lhs_a = -apply_m_laplacian(mesh, u_sub, prob.m)[free]
        rhs_a = K * u_sub[free] ** (-prob.p)
        lhs_b = -apply_m_laplacian(mesh, u_super, prob.m)[free]
        rhs_b = K * u_super[free] ** (-prob.p)
    if np.any(u_sub[free] <= 0) or np.any(u_super[free] <= 0):
        return None
    tol_a = rtol * (np.abs(lhs_a) + np.abs(rhs_a))
    tol_b = rtol * (np.abs(lhs_b) + np.abs(rhs_b))
    if np.any(lhs_a > rhs_a + tol_a) or np.any(lhs_b < rhs_b - tol_b):
        return None
    slack = rtol * float(np.max(np.abs(u_super)))
    return bool(np.all(u_sub <= u_super + slack))


def solve_frozen(mesh: Mesh, f: np.ndarray, m: float,
                 settings: Optional[NewtonSettings] = None) -> np.ndarray:
    """Solve -Delta_m u = f for a fixed positive nodal right-hand side."""
    f = np.asarray(f, dtype=float)
    tab = np.zeros(mesh.n + 1)
    tab[mesh.free] = f if len(f) == len(mesh.free) else f[mesh.free]
    prob = ScalarProblem(mesh, SingularWeight(tabulated=tab), 0.0, m)
    u, _ = _solve_unconstrained(prob, tab[mesh.free], settings or NewtonSettings(), None)
    return u


def manufactured_pair(mesh: Mesh, m: float, a: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact solution w = sin(pi x)^k, k = (m-a)/(m-1), and theta = -Delta_m w.

    With S = sin(pi x), C = cos(pi x) the flux is (k pi)^(m-1) |C|^(m-2) C S^(1-a),
    so theta = pi (k pi)^(m-1) |C|^(m-2) S^-a ((m-1) S^2 - (1-a) C^2).
    Interval meshes only; theta is NaN at the Dirichlet nodes.
    """
    if mesh.is_ball:
        raise ValueError("manufactured pair is defined on the interval")
    if m < 2:
        raise ValueError("manufactured pair needs m >= 2 (the flux is singular at x = 1/2 otherwise)")
    x = mesh.nodes
    k = (m - a) / (m - 1)
    S = np.sin(math.pi * x)
    C = np.cos(math.pi * x)
    w = np.zeros_like(x)
    free = mesh.free
    w[free] = S[free] ** k
    theta = np.full_like(x, np.nan)
    Sf, Cf = S[free], C[free]
    theta[free] = (math.pi * (k * math.pi) ** (m - 1) * np.abs(Cf) ** (m - 2) * Sf ** (-a)
                   * ((m - 1) * Sf ** 2 - (1 - a) * Cf ** 2))
    return w, theta
