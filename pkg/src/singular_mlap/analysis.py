"""Quantitative checks on computed solutions: boundary decay exponents, log
corrections, gradient-energy thresholds and two-sided profile bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .mesh import Mesh
from .regime import DecayLaw, evaluate_law

MIN_POINTS = 8
LOG_THRESHOLD = 0.2
GROWTH_TOL = 0.05
CONTRACTION_MAX = 0.97


class InsufficientPoints(ValueError):
    pass


class NonpositiveValues(ValueError):
    pass


class LevelCountError(ValueError):
    pass


@dataclass(frozen=True)
class RateFit:
    power: float
    power_stderr: float
    log_power: Optional[float]
    window: tuple[float, float]
    points_used: int
    plain_power: float = math.nan
    log_power_estimate: float = math.nan
    log_power_stderr: float = math.nan

    def to_dict(self) -> dict:
        return {
            "power": self.power,
            "power_stderr": self.power_stderr,
            "log_power": self.log_power,
            "window": list(self.window),
            "points_used": self.points_used,
            "plain_power": self.plain_power,
            "log_power_estimate": self.log_power_estimate,
            "log_power_stderr": self.log_power_stderr,
        }


def _ols(X: np.ndarray, y: np.ndarray):
    """Least-squares coefficients and their standard errors."""
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    dof = max(len(y) - X.shape[1], 1)
    resid = y - X @ coef
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.pinv(X.T @ X)
    return coef, np.sqrt(np.maximum(np.diag(cov), 0.0))


def default_window(mesh: Mesh) -> tuple[float, float]:
    return 3.0 * mesh.h_min, 0.05


def _layer_samples(mesh: Mesh, u: np.ndarray, window):
    lo, hi = window
    idx = mesh.boundary_layer()
    d = mesh.delta[idx]
    vals = np.asarray(u, dtype=float)[idx]
    sel = (d >= lo) & (d <= hi)
    return d[sel], vals[sel]


def fit_boundary_exponent(mesh: Mesh, u: np.ndarray, window=None,
                          reference_power: Optional[float] = None) -> RateFit:
    """Fit u ~ C delta^power [log(1/delta)]^log_power in the boundary layer.

    The power is the least-squares slope of log u against log delta.  The
    log test regresses log(u / delta^ref) on log log(1/delta), where ref is
    ``reference_power`` (normally the predicted power, so the prediction is
    the null hypothesis).  Without a reference the test is the log log
    coefficient of a joint fit.  A coefficient above 0.2 with a standard
    error under a third of its value counts as a log correction; the power
    is then taken from the joint fit, which is not biased by the log factor.
    """
    window = tuple(window) if window is not None else default_window(mesh)
    if window[1] > 0.1 + 1e-15:
        raise ValueError("fit window must stay inside delta <= 0.1")
    d, vals = _layer_samples(mesh, u, window)
    if len(d) < MIN_POINTS:
        raise InsufficientPoints(f"only {len(d)} nodes in window {window}")
    if np.any(vals <= 0):
        raise NonpositiveValues("u must be positive inside the fit window")

    x = np.log(d)
    y = np.log(vals)
    ones = np.ones_like(x)
    ll = np.log(np.log(1.0 / d))
    (_, slope), (_, slope_err) = _ols(np.column_stack([ones, x]), y)
    (_, b, beta_joint), (_, b_err, beta_joint_err) = _ols(np.column_stack([ones, x, ll]), y)
    if reference_power is None:
        beta, beta_err = beta_joint, beta_joint_err
    else:
        (_, beta), (_, beta_err) = _ols(np.column_stack([ones, ll]), y - reference_power * x)

    if beta > LOG_THRESHOLD and beta_err < beta / 3:
        return RateFit(float(b), float(b_err), float(beta), window, len(d),
                       float(slope), float(beta), float(beta_err))
    return RateFit(float(slope), float(slope_err), None, window, len(d),
                   float(slope), float(beta), float(beta_err))


# ---------------------------------------------------------------------------
# Gradient energies
# ---------------------------------------------------------------------------

def gradient_energy(mesh: Mesh, u: np.ndarray, tau: float) -> float:
    """Midpoint-rule value of the integral of |grad u|^tau (radial measure on the ball)."""
    D = np.diff(u) / mesh.h
    return float(np.sum(np.abs(D) ** tau * mesh.face_weight * mesh.h))


def classify_growth(values: Sequence[float]) -> bool:
    """True when a refinement sequence looks convergent.

    The increments must not grow, and either the last relative increase is
    below 5% or every ratio of successive increments is at most 0.97
    (geometric contraction, so the remaining tail is finite).  Log-type
    growth has increment ratios of exactly one and counts as divergent.
    """
    v = np.asarray(values, dtype=float)
    if len(v) < 3:
        raise LevelCountError("need at least three refinement levels")
    if not np.all(np.isfinite(v)):
        return False
    inc = np.abs(np.diff(v))
    if inc[-1] > inc[-2]:
        return False
    rel = inc[-1] / abs(v[-1]) if v[-1] != 0 else math.inf
    if rel < GROWTH_TOL:
        return True
    ratios = inc[1:] / np.where(inc[:-1] > 0, inc[:-1], np.inf)
    return bool(np.all(ratios <= CONTRACTION_MAX))


@dataclass
class TauProbe:
    tau_grid: list[float]
    energy_by_level: list[list[float]]
    convergent: list[bool]
    tau_star_estimate: float
    bracket: tuple[float, float]

    def to_dict(self) -> dict:
        def enc(x):
            return None if math.isinf(x) else x

        return {
            "tau_grid": list(self.tau_grid),
            "energy_by_level": [list(r) for r in self.energy_by_level],
            "convergent": list(self.convergent),
            "tau_star_estimate": enc(self.tau_star_estimate),
            "bracket": [enc(self.bracket[0]), enc(self.bracket[1])],
        }


def sobolev_tau_probe(meshes: Sequence[Mesh], solutions: Sequence[np.ndarray],
                      tau_grid: Sequence[float]) -> TauProbe:
    """Estimate the critical exponent tau* beyond which the gradient energy diverges.

    ``meshes`` must be successive doublings.  tau* is the midpoint between the
    last convergent grid value and the first divergent one, or +inf when the
    whole grid converges.
    """
    if len(meshes) < 3 or len(meshes) != len(solutions):
        raise LevelCountError("need at least three refinement levels, one solution each")
    for a, b in zip(meshes, meshes[1:]):
        if b.n != 2 * a.n:
            raise LevelCountError("levels must double the cell count")
    taus = [float(t) for t in tau_grid]
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise ValueError("tau grid must be increasing")
    energies = [[gradient_energy(mh, u, t) for t in taus] for mh, u in zip(meshes, solutions)]
    conv = [classify_growth([row[j] for row in energies]) for j in range(len(taus))]
    first_div = next((j for j, c in enumerate(conv) if not c), None)
    if first_div is None:
        est, bracket = math.inf, (taus[-1], math.inf)
    elif first_div == 0:
        est, bracket = taus[0], (taus[0], taus[0])
    else:
        bracket = (taus[first_div - 1], taus[first_div])
        est = 0.5 * (bracket[0] + bracket[1])
    return TauProbe(taus, energies, conv, est, bracket)


def delta_integrability_check(a: float, meshes: Sequence[Mesh]) -> bool:
    """Whether the integral of delta^-a looks finite over the given refinements.

    Quadrature uses the dual-cell measures of the free nodes, skipping the
    Dirichlet nodes where delta vanishes.
    """
    if not a > 0:
        raise ValueError("exponent a must be positive")
    vals = []
    for mh in meshes:
        idx = np.setdiff1d(np.arange(mh.n + 1), mh.dirichlet)
        vals.append(float(np.sum(mh.delta[idx] ** (-a) * mh.cell_measure[idx])))
    return classify_growth(vals)


# ---------------------------------------------------------------------------
# Two-sided bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SandwichResult:
    c_low: float
    c_high: float
    passed: bool

    def __iter__(self):
        return iter((self.c_low, self.c_high, self.passed))

    def to_dict(self) -> dict:
        return {"c_low": self.c_low, "c_high": self.c_high, "pass": self.passed}


def sandwich_check(mesh: Mesh, u: np.ndarray, law: DecayLaw, max_ratio: float = 100.0) -> SandwichResult:
    """Bounds c_low <= u / profile <= c_high over the free nodes with delta <= 1/2."""
    idx = np.setdiff1d(np.arange(mesh.n + 1), mesh.dirichlet)
    d = mesh.delta[idx]
    keep = d <= 0.5
    ratio = np.asarray(u, dtype=float)[idx][keep] / evaluate_law(law, d[keep])
    c_low, c_high = float(ratio.min()), float(ratio.max())
    return SandwichResult(c_low, c_high, bool(c_low > 0 and c_high / c_low <= max_ratio))
