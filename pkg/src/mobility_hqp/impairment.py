"""Joint impairment severity and the reduced range of motion it implies."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

N_HUMAN_JOINTS = 8
WRIST_FACTOR = 0.15
DEFAULT_ZETA = 0.17


class InvalidBounds(ValueError):
    pass


class UnknownCondition(KeyError):
    pass


@dataclass(frozen=True)
class RomBounds:
    lower: np.ndarray
    upper: np.ndarray
    provenance: str = "healthy"  # healthy | impaired | refined-online

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise InvalidBounds("lower and upper bounds differ in length")
        if np.any(lo > hi):
            bad = [i + 1 for i in np.flatnonzero(lo > hi)]
            raise InvalidBounds(f"lower bound exceeds upper bound at joints {bad}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def contains(self, q, tol: float = 0.0) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return (q >= self.lower - tol) & (q <= self.upper + tol)


@dataclass(frozen=True)
class ImpairmentProfile:
    """Diagonal severity in [0, 1] per joint, slack ``zeta`` and optional bound overrides.

    ``overrides`` maps a 0-based joint index to an explicit impaired interval;
    those joints ignore the severity-based reduction when their RoM is built.
    """

    severity: np.ndarray
    zeta: float = DEFAULT_ZETA
    label: str = "custom"
    overrides: dict[int, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.severity, dtype=float).reshape(-1)
        if w.ndim != 1 or np.any(w < 0) or np.any(w > 1):
            raise ValueError(f"severities must lie in [0, 1], got {w}")
        if not self.zeta > 0:
            raise ValueError("zeta must be positive")
        for j, (lo, hi) in self.overrides.items():
            if not 0 <= j < w.shape[0]:
                raise ValueError(f"override for unknown joint index {j}")
            if lo > hi:
                raise InvalidBounds(f"override for joint {j + 1} has lower > upper")
        object.__setattr__(self, "severity", w)

    @property
    def W(self) -> np.ndarray:
        return np.diag(self.severity)

    @classmethod
    def healthy(cls, n: int = N_HUMAN_JOINTS, zeta: float = DEFAULT_ZETA) -> "ImpairmentProfile":
        return cls(np.zeros(n), zeta, "healthy")


def impaired_rom(
    profile: ImpairmentProfile,
    healthy: RomBounds,
    q_initial,
    q_measured,
    q_measured_max=None,
) -> RomBounds:
    """Reduced RoM from severity, initial posture and measured posture.

    ``q_measured`` feeds the lower-bound term and ``q_measured_max`` (defaults
    to ``q_measured``) the upper one, so callers can pass running extrema.
    """
    q_min, q_max = healthy.lower, healthy.upper
    if np.any(q_min > q_max):
        raise InvalidBounds("healthy lower bound exceeds upper bound")
    W = profile.severity
    zeta = profile.zeta
    q0 = np.asarray(q_initial, dtype=float)
    qm_lo = np.asarray(q_measured, dtype=float)
    qm_hi = qm_lo if q_measured_max is None else np.asarray(q_measured_max, dtype=float)

    clipped = False
    for arr in (q0, qm_lo, qm_hi):
        if np.any(arr < q_min) or np.any(arr > q_max):
            clipped = True
    if clipped:
        warnings.warn("posture outside healthy RoM clamped before RoM refinement", stacklevel=2)
        q0 = np.clip(q0, q_min, q_max)
        qm_lo = np.clip(qm_lo, q_min, q_max)
        qm_hi = np.clip(qm_hi, q_min, q_max)

    d_min = W * (np.minimum(q0 - zeta, qm_lo) - q_min)
    d_max = W * (q_max - np.maximum(q0 + zeta, qm_hi))
    # A joint sitting within zeta of a healthy limit would give a negative
    # reduction on that side; no reduction is applied there.
    d_min = np.maximum(d_min, 0.0)
    d_max = np.maximum(d_max, 0.0)
    lower = q_min + d_min
    upper = q_max - d_max

    for j, (lo, hi) in profile.overrides.items():
        lower[j] = min(lo, qm_lo[j])
        upper[j] = max(hi, qm_hi[j])

    bad = lower > upper
    if np.any(bad):
        log.warning("degenerate impaired RoM at joints %s; centring on initial posture",
                    [int(i) + 1 for i in np.flatnonzero(bad)])
        lower[bad] = np.maximum(q0[bad] - zeta, q_min[bad])
        upper[bad] = np.minimum(q0[bad] + zeta, q_max[bad])
    return RomBounds(lower, upper, "refined-online")


# 1-based joint numbering: q3 shoulder flexion, q5 elbow flexion,
# q7 wrist flexion, q8 wrist deviation.
_FULL_IMPAIRMENTS = {
    "EA": (5,),
    "SA": (3,),
    "WB": (7, 8),
}

# Printed impaired intervals (rad) for the partial multi-joint conditions.
PARTIAL_BOUNDS = {
    "MIE": {3: (-2.7, 1.8), 5: (-1.9, 0.02), 8: (-0.2, 0.2)},
    "MIS": {3: (-1.9, 1.3), 5: (-2.7, 0.02), 8: (-0.2, 0.2)},
}

# Severities used for the damping task of the partial conditions; chosen so
# the dominant joint is damped hardest. Not printed alongside the bounds.
PARTIAL_SEVERITY = {
    "MIE": {3: 0.1, 5: 0.8, 8: 0.5},
    "MIS": {3: 0.8, 5: 0.1, 8: 0.5},
}

CONDITIONS = ("healthy", "EA", "SA", "WB", "MIE", "MIS")


def severity_matrix_for_condition(
    label: str,
    zeta: float = DEFAULT_ZETA,
    wrist_factor: bool = True,
    custom: np.ndarray | None = None,
) -> ImpairmentProfile:
    """Build the preset profile for a named condition (or a custom diagonal)."""
    w = np.zeros(N_HUMAN_JOINTS)
    overrides: dict[int, tuple[float, float]] = {}
    key = label.upper() if label.lower() != "custom" and label.lower() != "healthy" else label.lower()
    if key == "custom":
        if custom is None:
            raise UnknownCondition("custom condition needs an explicit severity diagonal")
        w = np.asarray(custom, dtype=float).copy()
    elif key == "healthy":
        pass
    elif key in _FULL_IMPAIRMENTS:
        for j in _FULL_IMPAIRMENTS[key]:
            w[j - 1] = 1.0
    elif key in PARTIAL_BOUNDS:
        for j, s in PARTIAL_SEVERITY[key].items():
            w[j - 1] = s
        overrides = {j - 1: b for j, b in PARTIAL_BOUNDS[key].items()}
    else:
        raise UnknownCondition(f"unknown impairment condition {label!r}")

    if wrist_factor and key not in ("custom", "healthy"):
        w[-1] = min(1.0, w[-1] + WRIST_FACTOR)
    return ImpairmentProfile(w, zeta, key if key != "custom" else "custom", overrides)


class RomTracker:
    """Running extrema of the measured posture, refined every control tick."""

    def __init__(self, profile: ImpairmentProfile, healthy: RomBounds, q_initial):
        self.profile = profile
        self.healthy = healthy
        self.q_initial = np.asarray(q_initial, dtype=float).copy()
        self.q_low = self.q_initial.copy()
        self.q_high = self.q_initial.copy()

    def update(self, q_measured) -> RomBounds:
        q = np.asarray(q_measured, dtype=float)
        self.q_low = np.minimum(self.q_low, q)
        self.q_high = np.maximum(self.q_high, q)
        return impaired_rom(self.profile, self.healthy, self.q_initial, self.q_low, self.q_high)
