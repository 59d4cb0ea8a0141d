"""Exponent-regime classification for the coupled singular m-Laplacian system

    -Delta_m u = u^-p v^-q,   -Delta_m v = u^r v^-s,   u = v = 0 on the boundary.

Given (m, p, q, r, s) this module checks the structural hypotheses, picks
which of the eight existence regimes applies, and reports the predicted
boundary profiles, W^{1,tau} ranges and whether uniqueness is guaranteed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

EPS_CLS = 1e-9

CASES = ("I", "II", "III", "IV", "V", "VI", "VII", "VIII")
NOT_COVERED = "NotCovered"
UNIQUE_CASES = frozenset({"I", "III", "IV", "V", "VII"})

FIRST_STRUCTURAL = "first structural"
SECOND_STRUCTURAL = "second structural"
COUPLING = "coupling"


class StructuralViolation(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("structural conditions violated: " + ", ".join(self.violations))


@dataclass(frozen=True)
class ExponentTuple:
    m: float
    p: float
    q: float
    r: float
    s: float

    def __post_init__(self):
        if not self.m > 1:
            raise ValueError(f"m must be > 1, got {self.m}")
        for name in "pqrs":
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")

    def to_dict(self) -> dict:
        return {"m": self.m, "p": self.p, "q": self.q, "r": self.r, "s": self.s}

    @property
    def coupling_factor(self) -> float:
        """qr / ((1+p)(1+s))."""
        return self.q * self.r / ((1 + self.p) * (1 + self.s))


@dataclass(frozen=True)
class DecayLaw:
    """Boundary profile delta^power * log(1/delta)^log_power."""

    power: float
    log_power: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.power <= 1:
            raise ValueError(f"decay power must lie in (0, 1], got {self.power}")
        if self.log_power is not None and self.power != 1.0:
            raise ValueError("log corrections only attach to delta^1")

    def to_dict(self) -> dict:
        return {"power": self.power, "log_power": self.log_power}


@dataclass(frozen=True)
class TauRange:
    """Exponents tau with u in W_0^{1,tau}: [lower, upper) or [lower, upper].

    ``upper`` is ``math.inf`` for unbounded ranges.
    """

    lower: float
    upper: float = math.inf
    upper_inclusive: bool = False

    def __post_init__(self):
        if not self.upper > self.lower:
            raise ValueError("tau range must have upper > lower")

    def contains(self, tau: float) -> bool:
        if tau < self.lower:
            return False
        return tau <= self.upper if self.upper_inclusive else tau < self.upper

    def to_dict(self) -> dict:
        upper = None if math.isinf(self.upper) else self.upper
        return {"lower": self.lower, "upper": upper, "upper_inclusive": self.upper_inclusive}


@dataclass(frozen=True)
class RegimePrediction:
    case_id: str
    u_law: Optional[DecayLaw] = None
    v_law: Optional[DecayLaw] = None
    u_tau: Optional[TauRange] = None
    v_tau: Optional[TauRange] = None
    u_smooth_boundary: Optional[bool] = None
    v_smooth_boundary: Optional[bool] = None
    uniqueness: bool = False

    @property
    def covered(self) -> bool:
        return self.case_id != NOT_COVERED

    def law(self, which: str) -> DecayLaw:
        if which not in ("u", "v"):
            raise ValueError("which must be 'u' or 'v'")
        return self.u_law if which == "u" else self.v_law

    def to_dict(self) -> dict:
        def opt(x):
            return None if x is None else x.to_dict()

        return {
            "case": self.case_id,
            "u_law": opt(self.u_law),
            "v_law": opt(self.v_law),
            "u_tau": opt(self.u_tau),
            "v_tau": opt(self.v_tau),
            "u_smooth_boundary": self.u_smooth_boundary,
            "v_smooth_boundary": self.v_smooth_boundary,
            "uniqueness": self.uniqueness,
        }


def validate_structural(e: ExponentTuple) -> list[str]:
    """Names of the violated hypotheses; an empty list means the tuple is admissible."""
    m, p, q, r, s = e.m, e.p, e.q, e.r, e.s
    bound = 2 - 1 / m
    out = []
    if not p * (1 - 1 / m) + q < bound:
        out.append(FIRST_STRUCTURAL)
    if not s * (1 - 1 / m) - r < bound:
        out.append(SECOND_STRUCTURAL)
    if not e.coupling_factor < 1:
        out.append(COUPLING)
    return out


def _cmp(x: float, eps: float = EPS_CLS) -> int:
    """Three-way comparison of x against 1 with an equality band."""
    if x < 1 - eps:
        return -1
    if x > 1 + eps:
        return 1
    return 0


def case_quantities(e: ExponentTuple) -> dict[str, float]:
    """The four scalar combinations whose position relative to 1 selects the case."""
    m, p, q, r, s = e.m, e.p, e.q, e.r, e.s
    return {
        "s_minus_r": s - r,
        "p_plus_q": p + q,
        "p_plus_qv": p + q * (m + r) / (m + s - 1),
        "s_minus_ru": s - r * (m - q) / (m + p - 1),
    }


def case_label(e: ExponentTuple, eps: float = EPS_CLS) -> str:
    c = case_quantities(e)
    sr, pq = _cmp(c["s_minus_r"], eps), _cmp(c["p_plus_q"], eps)
    if sr > 0:
        a = _cmp(c["p_plus_qv"], eps)
        if a < 0:
            return "I"
        if a == 0:
            return "II"
    if pq <= 0 and sr <= 0:
        return {(-1, -1): "III", (0, -1): "IV", (-1, 0): "V", (0, 0): "VI"}[(pq, sr)]
    if pq > 0:
        b = _cmp(c["s_minus_ru"], eps)
        if b < 0:
            return "VII"
        if b == 0:
            return "VIII"
    return NOT_COVERED


def uniqueness_applies(e: ExponentTuple, eps: float = EPS_CLS) -> bool:
    c = case_quantities(e)
    sr, pq = _cmp(c["s_minus_r"], eps), _cmp(c["p_plus_q"], eps)
    if sr > 0 and _cmp(c["p_plus_qv"], eps) < 0:
        return True
    if pq < 0 and sr <= 0:
        return True
    if pq == 0 and sr < 0:
        return True
    return pq > 0 and _cmp(c["s_minus_ru"], eps) < 0


def classify(e: ExponentTuple, eps: float = EPS_CLS) -> RegimePrediction:
    """Map an admissible exponent tuple to its regime prediction.

    Raises
    ------
    StructuralViolation
        If :func:`validate_structural` reports anything.
    """
    violations = validate_structural(e)
    if violations:
        raise StructuralViolation(violations)
    case = case_label(e, eps)
    if case == NOT_COVERED:
        return RegimePrediction(NOT_COVERED)

    m, p, q, r, s = e.m, e.p, e.q, e.r, e.s
    linear = DecayLaw(1.0)
    full = TauRange(m)

    def u_log():
        return DecayLaw(1.0, 1 / (m + p - 1))

    def v_log():
        return DecayLaw(1.0, 1 / (m + s - 1))

    def v_pow():
        return DecayLaw((m + r) / (m + s - 1))

    def u_pow():
        return DecayLaw((m - q) / (m + p - 1))

    def v_pow_tau():
        return TauRange(m, (m + s - 1) / (s - r - 1), upper_inclusive=True)

    def u_pow_tau():
        return TauRange(m, (m + p - 1) / (p + q - 1))

    # (u_law, v_law, u_tau, v_tau, u_smooth, v_smooth); built lazily because
    # the power formulas leave (0, 1] outside their own case.
    table = {
        "I": lambda: (linear, v_pow(), full, v_pow_tau(), True, False),
        "II": lambda: (u_log(), v_pow(), full, v_pow_tau(), False, False),
        "III": lambda: (linear, linear, full, full, True, True),
        "IV": lambda: (u_log(), linear, full, full, False, True),
        "V": lambda: (linear, v_log(), full, full, True, False),
        "VI": lambda: (u_log(), v_log(), full, full, False, False),
        "VII": lambda: (u_pow(), linear, u_pow_tau(), full, False, True),
        "VIII": lambda: (u_pow(), v_log(), u_pow_tau(), full, False, False),
    }
    u_law, v_law, u_tau, v_tau, u_sm, v_sm = table[case]()
    return RegimePrediction(case, u_law, v_law, u_tau, v_tau, u_sm, v_sm,
                            uniqueness_applies(e, eps))


def predicted_profile(pred: RegimePrediction | DecayLaw, which: str, delta: float) -> float:
    """Evaluate delta^power * log(1/delta)^log_power for the chosen component."""
    law = pred if isinstance(pred, DecayLaw) else pred.law(which)
    if law is None:
        raise ValueError("no decay law for an uncovered regime")
    return float(evaluate_law(law, delta))


def evaluate_law(law: DecayLaw, delta):
    """Vectorised profile evaluation; every delta must lie in (0, 1/2]."""
    d = np.asarray(delta, dtype=float)
    if np.any(~((d > 0) & (d <= 0.5))):
        raise ValueError("delta must lie in (0, 1/2]")
    out = d ** law.power
    if law.log_power is not None:
        out = out * np.log(1.0 / d) ** law.log_power
    return out
