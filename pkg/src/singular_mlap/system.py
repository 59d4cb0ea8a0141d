"""Fixed-point solver for the coupled system

    -Delta_m u = u^-p v^-q,   -Delta_m v = u^r v^-s,   u = v = 0 on the boundary.

One application of the map T solves two decoupled scalar problems: u with
the weight v^-q frozen and v with the weight u^r frozen, both taken from the
previous pair.  T is order reversing in v for the first component and order
preserving in u for the second, which makes a band of law-shaped envelopes
invariant once its four constants are large enough; the constants are fitted
by probing the four band corners.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .mesh import Mesh
from .regime import DecayLaw, ExponentTuple, RegimePrediction, classify
from .scalar import (ConvergenceError, NewtonSettings, ScalarProblem, SingularWeight,
                     apply_m_laplacian, solve_scalar)

log = logging.getLogger(__name__)

BAND_RTOL = 1e-8
HISTORY_COLUMNS = ("iter", "du", "dv", "residual_u", "residual_v")


@dataclass
class SystemSettings:
    newton: NewtonSettings = field(default_factory=NewtonSettings)
    tol_fp: float = 1e-7
    max_outer: int = 200
    band_limit: float = 2.0 ** 10
    epsilon: Optional[float] = None
    warm_start: bool = True

    def __post_init__(self):
        if not self.tol_fp > 0 or self.max_outer < 1:
            raise ValueError("tol_fp must be positive and max_outer >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "SystemSettings":
        d = dict(d)
        newton = NewtonSettings.from_dict(d.pop("newton", {}))
        return cls(newton=newton, **d)

    def to_dict(self) -> dict:
        return {"newton": self.newton.to_dict(), "tol_fp": self.tol_fp,
                "max_outer": self.max_outer, "band_limit": self.band_limit,
                "epsilon": self.epsilon, "warm_start": self.warm_start}


@dataclass
class SystemState:
    u: np.ndarray
    v: np.ndarray
    iter: int = 0
    history: list = field(default_factory=list)

    def copy(self) -> "SystemState":
        return SystemState(self.u.copy(), self.v.copy(), self.iter, list(self.history))


class SystemConvergenceError(ConvergenceError):
    def __init__(self, message, state=None, report=None):
        super().__init__(message)
        self.state = state
        self.report = report


# ---------------------------------------------------------------------------
# Invariant band
# ---------------------------------------------------------------------------

def slack_epsilon(e: ExponentTuple) -> float:
    """Exponent slack for log-corrected envelopes.

    Half of the largest eps with s(1-1/m) - r(1-eps) < 2 - 1/m, capped at 1/4
    so the upper envelope stays a genuine power of delta.
    """
    m = e.m
    eps_max = 1.0 - (e.s * (1 - 1 / m) - (2 - 1 / m)) / e.r
    return float(min(0.25, 0.5 * eps_max))


def _envelopes(mesh: Mesh, law: DecayLaw, eps: float):
    """Lower and upper envelope shapes for one component, built on phi."""
    phi = mesh.phi
    if law.log_power is None:
        shape = phi ** law.power
        return shape, shape.copy()
    return phi.copy(), phi ** (1.0 - eps)


@dataclass(eq=False)
class InvariantBand:
    """c1 U_lo <= u <= c2 U_hi and m1 V_lo <= v <= m2 V_hi with unit-free shapes."""

    u_shape_lower: np.ndarray
    u_shape_upper: np.ndarray
    v_shape_lower: np.ndarray
    v_shape_upper: np.ndarray
    c1: float = 0.5
    c2: float = 2.0
    m1: float = 0.5
    m2: float = 2.0
    fitted: bool = False
    refits: int = 0

    @property
    def u_lower(self):
        return self.c1 * self.u_shape_lower

    @property
    def u_upper(self):
        return self.c2 * self.u_shape_upper

    @property
    def v_lower(self):
        return self.m1 * self.v_shape_lower

    @property
    def v_upper(self):
        return self.m2 * self.v_shape_upper

    def midpoint(self) -> tuple[np.ndarray, np.ndarray]:
        return np.sqrt(self.u_lower * self.u_upper), np.sqrt(self.v_lower * self.v_upper)

    def contains(self, mesh: Mesh, u: np.ndarray, v: np.ndarray, rtol: float = BAND_RTOL) -> bool:
        f = mesh.free
        return bool(np.all(u[f] >= self.u_lower[f] * (1 - rtol))
                    and np.all(u[f] <= self.u_upper[f] * (1 + rtol))
                    and np.all(v[f] >= self.v_lower[f] * (1 - rtol))
                    and np.all(v[f] <= self.v_upper[f] * (1 + rtol)))

    def to_dict(self) -> dict:
        return {"c1": self.c1, "c2": self.c2, "m1": self.m1, "m2": self.m2,
                "fitted": self.fitted, "refits": self.refits}


def initial_band(e: ExponentTuple, mesh: Mesh, pred: Optional[RegimePrediction] = None,
                 eps: Optional[float] = None) -> InvariantBand:
    pred = pred or classify(e)
    if not pred.covered:
        raise ValueError("no invariant band outside the covered regimes")
    eps = slack_epsilon(e) if eps is None else eps
    ul, uh = _envelopes(mesh, pred.u_law, eps)
    vl, vh = _envelopes(mesh, pred.v_law, eps)
    return InvariantBand(ul, uh, vl, vh)


# ---------------------------------------------------------------------------
# The map T
# ---------------------------------------------------------------------------

def _effective_power(law: DecayLaw) -> float:
    return law.power


def u_problem(e: ExponentTuple, mesh: Mesh, v: np.ndarray, v_power: float) -> ScalarProblem:
    """-Delta_m w = w^-p * v^-q with v frozen."""
    w = np.zeros(mesh.n + 1)
    f = mesh.free
    w[f] = v[f] ** (-e.q)
    return ScalarProblem(mesh, SingularWeight(q_exp=e.q * v_power, tabulated=w), e.p, e.m)


def v_problem(e: ExponentTuple, mesh: Mesh, u: np.ndarray, u_power: float) -> ScalarProblem:
    """-Delta_m w = w^-s * u^r with u frozen (a vanishing weight: negative q_exp)."""
    w = np.zeros(mesh.n + 1)
    f = mesh.free
    w[f] = u[f] ** e.r
    return ScalarProblem(mesh, SingularWeight(q_exp=-e.r * u_power, tabulated=w), e.s, e.m)


def _solve_component(prob, settings, initial, component):
    try:
        return solve_scalar(prob, settings.newton, initial=initial if settings.warm_start else None)
    except ConvergenceError as exc:
        exc.component = component
        raise
    except Exception as exc:
        raise type(exc)(f"{component}: {exc}") from exc


def apply_T(state: SystemState, e: ExponentTuple, mesh: Mesh,
            settings: Optional[SystemSettings] = None,
            pred: Optional[RegimePrediction] = None) -> SystemState:
    """One fixed-point step (u, v) -> (Tu, Tv), both from the previous pair.

    The history row records relative sup-norm changes and the relative
    residuals of the new pair in the full system.
    """
    settings = settings or SystemSettings()
    pred = pred or classify(e)
    au, av = _effective_power(pred.u_law), _effective_power(pred.v_law)
    tu, _ = _solve_component(u_problem(e, mesh, state.v, av), settings, state.u, "u")
    tv, _ = _solve_component(v_problem(e, mesh, state.u, au), settings, state.v, "v")
    du = _rel_change(tu, state.u)
    dv = _rel_change(tv, state.v)
    ru, rv = system_residuals(e, mesh, tu, tv)
    row = {"iter": state.iter + 1, "du": du, "dv": dv, "residual_u": ru, "residual_v": rv}
    return SystemState(tu, tv, state.iter + 1, state.history + [row])


def _rel_change(new, old) -> float:
    return float(np.max(np.abs(new - old)) / np.max(np.abs(old)))


def system_residuals(e: ExponentTuple, mesh: Mesh, u: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    """Largest nodewise relative residual |-Delta_m w - f| / f of each equation."""
    f = mesh.free
    fu = u[f] ** (-e.p) * v[f] ** (-e.q)
    fv = u[f] ** e.r * v[f] ** (-e.s)
    ru = -apply_m_laplacian(mesh, u, e.m)[f] - fu
    rv = -apply_m_laplacian(mesh, v, e.m)[f] - fv
    return float(np.max(np.abs(ru) / fu)), float(np.max(np.abs(rv) / fv))


# ---------------------------------------------------------------------------
# Band fitting
# ---------------------------------------------------------------------------

def fit_band(e: ExponentTuple, mesh: Mesh, band: InvariantBand,
             settings: Optional[SystemSettings] = None,
             pred: Optional[RegimePrediction] = None) -> InvariantBand:
    """Widen the band constants by factors of two until T maps the band into itself.

    T is monotone componentwise, so it suffices that the four corner images
    Tu(v_lower), Tu(v_upper), Tv(u_upper), Tv(u_lower) land inside.  Each
    constant may move by at most ``band_limit`` from its initial value; if
    that is not enough the band is returned with ``fitted`` False.
    """
    settings = settings or SystemSettings()
    pred = pred or classify(e)
    au, av = _effective_power(pred.u_law), _effective_power(pred.v_law)
    f = mesh.free
    c1, c2, m1, m2 = band.c1, band.c2, band.m1, band.m2
    limit = settings.band_limit
    refits = 0
    while True:
        b = InvariantBand(band.u_shape_lower, band.u_shape_upper, band.v_shape_lower,
                          band.v_shape_upper, c1, c2, m1, m2)
        hi_u, _ = solve_scalar(u_problem(e, mesh, b.v_lower, av), settings.newton)
        lo_u, _ = solve_scalar(u_problem(e, mesh, b.v_upper, av), settings.newton)
        hi_v, _ = solve_scalar(v_problem(e, mesh, b.u_upper, au), settings.newton)
        lo_v, _ = solve_scalar(v_problem(e, mesh, b.u_lower, au), settings.newton)
        ok = True
        tol = 1 + BAND_RTOL
        if np.any(hi_u[f] > b.u_upper[f] * (1 - BAND_RTOL)):
            c2 *= 2.0
            ok = False
        if np.any(lo_u[f] < b.u_lower[f] * tol):
            c1 /= 2.0
            ok = False
        if np.any(hi_v[f] > b.v_upper[f] * (1 - BAND_RTOL)):
            m2 *= 2.0
            ok = False
        if np.any(lo_v[f] < b.v_lower[f] * tol):
            m1 /= 2.0
            ok = False
        if ok:
            b.fitted, b.refits = True, refits
            return b
        refits += 1
        if max(c2 / band.c2, band.c1 / c1, m2 / band.m2, band.m1 / m1) > limit:
            log.warning("band constants exceeded the refit limit")
            b.fitted, b.refits = False, refits
            return b


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

@dataclass
class SystemReport:
    case_id: str
    converged: bool
    iterations: int
    residual_u: float
    residual_v: float
    in_band: bool
    band: dict
    contraction_ratios: list
    history: list

    def to_dict(self) -> dict:
        return {
            "case": self.case_id,
            "converged": self.converged,
            "iterations": self.iterations,
            "residual_u": self.residual_u,
            "residual_v": self.residual_v,
            "in_band": self.in_band,
            "band": self.band,
            "contraction_ratios": self.contraction_ratios,
            "history": self.history,
        }


def contraction_ratios(history: list) -> list[float]:
    """Ratios of successive max(du, dv); entries below roundoff are dropped."""
    d = [max(h["du"], h["dv"]) for h in history]
    return [b / a for a, b in zip(d, d[1:]) if a > 1e-14]


def _prepare(e, mesh, settings, band):
    pred = classify(e)
    if not pred.covered:
        raise ValueError(f"exponents {e.to_dict()} are not in a covered regime")
    if band is None:
        band = initial_band(e, mesh, pred, settings.epsilon)
    if not band.fitted:
        band = fit_band(e, mesh, band, settings, pred)
    return pred, band


def solve_system(e: ExponentTuple, mesh: Mesh, settings: Optional[SystemSettings] = None,
                 initial: Optional[tuple[np.ndarray, np.ndarray]] = None,
                 band: Optional[InvariantBand] = None,
                 raise_on_failure: bool = True) -> tuple[SystemState, SystemReport]:
    """Iterate T from the geometric mean of the band envelopes.

    Stops when both relative sup-norm changes drop below ``tol_fp`` or after
    ``max_outer`` applications.  Leaving the band is reported, not raised.

    Raises
    ------
    StructuralViolation
        For inadmissible exponents.
    ValueError
        For exponents outside the covered regimes.
    SystemConvergenceError
        When ``max_outer`` is reached (unless ``raise_on_failure`` is False).
    """
    settings = settings or SystemSettings()
    pred, band = _prepare(e, mesh, settings, band)
    if initial is None:
        u0, v0 = band.midpoint()
    else:
        u0, v0 = (np.asarray(a, dtype=float).copy() for a in initial)
    state = SystemState(u0, v0)
    in_band = band.contains(mesh, u0, v0)
    converged = False
    while state.iter < settings.max_outer:
        state = apply_T(state, e, mesh, settings, pred)
        in_band &= band.contains(mesh, state.u, state.v)
        row = state.history[-1]
        if max(row["du"], row["dv"]) < settings.tol_fp:
            converged = True
            break
    ru, rv = system_residuals(e, mesh, state.u, state.v)
    report = SystemReport(pred.case_id, converged, state.iter, ru, rv, bool(in_band),
                          band.to_dict(), contraction_ratios(state.history), state.history)
    if not converged and raise_on_failure:
        raise SystemConvergenceError(
            f"fixed-point iteration did not converge in {settings.max_outer} steps", state, report)
    return state, report


# ---------------------------------------------------------------------------
# Uniqueness probe
# ---------------------------------------------------------------------------

@dataclass
class UniquenessReport:
    distance: float
    iterations: int
    log_scaling: list
    scaling_ratios: list
    decreasing: bool
    predicted_factor: float
    converged: bool
    two_step_ratios: list = field(default_factory=list)
    scaling_factor: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "distance": self.distance,
            "iterations": self.iterations,
            "log_scaling": self.log_scaling,
            "scaling_ratios": self.scaling_ratios,
            "decreasing": self.decreasing,
            "predicted_factor": self.predicted_factor,
            "converged": self.converged,
            "two_step_ratios": self.two_step_ratios,
            "scaling_factor": self.scaling_factor,
        }


def log_scaling(mesh: Mesh, a: SystemState, b: SystemState) -> float:
    """log of the smallest M with u1 <= M u2, u2 <= M u1 and likewise for v."""
    f = mesh.free
    ru = a.u[f] / b.u[f]
    rv = a.v[f] / b.v[f]
    return float(max(np.max(np.abs(np.log(ru))), np.max(np.abs(np.log(rv)))))


def uniqueness_probe(e: ExponentTuple, mesh: Mesh, settings: Optional[SystemSettings] = None,
                     band: Optional[InvariantBand] = None, window: int = 10) -> UniquenessReport:
    """Run T from half the lower envelopes and from twice the upper envelopes.

    The two runs advance in lockstep; after each step the symmetric scaling
    log M_k between the pairs is recorded.  The probe reports the final
    relative sup distance and whether log M_k decreased over the last
    ``window`` steps (fewer if the runs converged sooner).
    """
    settings = settings or SystemSettings()
    pred, band = _prepare(e, mesh, settings, band)
    a = SystemState(0.5 * band.u_lower, 0.5 * band.v_lower)
    b = SystemState(2.0 * band.u_upper, 2.0 * band.v_upper)
    logs = [log_scaling(mesh, a, b)]
    done_a = done_b = False
    while max(a.iter, b.iter) < settings.max_outer and not (done_a and done_b):
        a = apply_T(a, e, mesh, settings, pred)
        b = apply_T(b, e, mesh, settings, pred)
        done_a = max(a.history[-1]["du"], a.history[-1]["dv"]) < settings.tol_fp
        done_b = max(b.history[-1]["du"], b.history[-1]["dv"]) < settings.tol_fp
        logs.append(log_scaling(mesh, a, b))
    distance = max(_rel_change(a.u, b.u), _rel_change(a.v, b.v))
    tail = logs[-(min(window, len(logs) - 1) + 1):]
    decreasing = bool(all(y < x for x, y in zip(tail, tail[1:])))
    ratios = [y / x for x, y in zip(logs, logs[1:]) if x > 0]
    two_step = [y / x for x, y in zip(logs, logs[2:]) if x > 0]
    return UniquenessReport(distance, a.iter, logs, ratios, decreasing,
                            e.coupling_factor, done_a and done_b, two_step,
                            scaling_factor(e))


def scaling_factor(e: ExponentTuple) -> float:
    """Two-step contraction of log M for the Jacobi map.

    Scaling v by M scales Tu by M^(q/(m-1+p)); scaling u scales Tv by
    M^(r/(m-1+s)).  For m = 2 this is qr/((1+p)(1+s)).
    """
    return e.q * e.r / ((e.m - 1 + e.p) * (e.m - 1 + e.s))


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def write_history_csv(path, history: list) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=HISTORY_COLUMNS)
        writer.writeheader()
        for row in history:
            writer.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k]
                             for k in HISTORY_COLUMNS})
