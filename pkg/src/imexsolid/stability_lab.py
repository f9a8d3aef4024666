"""Linear amplification analysis of the two semi-implicit BDF2 schemes.

The state vector is (V^n, V^{n-1}, U^n, U^{n-1}) for a single mode with
deviatoric stiffness ``lam`` (treated explicitly) and volumetric stiffness
``c`` (treated implicitly), per unit mass.  One step reads A1 Y^{n+1} = A0 Y^n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fem import Scheme

STABILITY_THRESHOLD = 1.0 + 1e-9
DT_BRACKET = (1e-8, 1e2)
C_MULTIPLES = (0.1, 0.5, 0.75, 1.0, 10.0, 100.0)


class UnconditionallyUnstable(ValueError):
    pass


@dataclass(frozen=True)
class AmplificationModel:
    lam: float
    c: float
    dt: float
    scheme: Scheme = Scheme.MSBDF2

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.scheme is Scheme.EULER:
            raise ValueError("amplification pairs exist for MSBDF2 and FEBDF2 only")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not self.c >= 0:
            raise ValueError("c must be non-negative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


def build_pair(lam: float, c: float, dt: float, scheme: Scheme) -> tuple[np.ndarray, np.ndarray]:
    A1 = np.array([
        [1.0, 0.0, 2.0 / 3.0 * dt * c, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [-2.0 / 3.0 * dt, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
    if Scheme(scheme) is Scheme.MSBDF2:
        row = [4.0 / 3.0, -1.0 / 3.0, -4.0 / 3.0 * dt * lam, 2.0 / 3.0 * dt * lam]
    else:
        row = [2.0 / 3.0 * (2.0 - dt * dt * lam), -1.0 / 3.0, -2.0 / 3.0 * dt * lam, 0.0]
    A0 = np.array([
        row,
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 4.0 / 3.0, -1.0 / 3.0],
        [0.0, 0.0, 1.0, 0.0],
    ])
    return A1, A0


def amplification_pair(model: AmplificationModel) -> tuple[np.ndarray, np.ndarray]:
    return build_pair(model.lam, model.c, model.dt, model.scheme)


def amplification_eigenvalues(A1, A0) -> np.ndarray:
    A1 = np.asarray(A1, dtype=float)
    if abs(np.linalg.det(A1)) < 1e-14 * max(1.0, np.abs(A1).max()) ** A1.shape[0]:
        raise np.linalg.LinAlgError("A1 is singular")
    return np.linalg.eigvals(np.linalg.solve(A1, A0))


def spectral_radius(A1, A0) -> float:
    return float(np.max(np.abs(amplification_eigenvalues(A1, A0))))


def rho(scheme, lam: float, c: float, dt: float) -> float:
    return spectral_radius(*build_pair(lam, c, dt, scheme))


def is_stable(scheme, lam, c, dt) -> bool:
    return rho(scheme, lam, c, dt) <= STABILITY_THRESHOLD


def max_stable_dt(scheme, lam: float, c: float, tol_dt: float = 1e-10, bracket=DT_BRACKET) -> float:
    """Largest step with spectral radius <= 1 + 1e-9, by bisection in log(dt).

    Returns ``inf`` when the whole bracket is stable.  The relative width
    of the final interval is below ``tol_dt``.
    """
    if not tol_dt > 0:
        raise ValueError("tol_dt must be positive")
    lo, hi = bracket
    if not is_stable(scheme, lam, c, lo):
        raise UnconditionallyUnstable(f"{Scheme(scheme).value} unstable already at dt = {lo:g}")
    if is_stable(scheme, lam, c, hi):
        return math.inf
    while hi / lo - 1.0 > tol_dt:
        mid = math.sqrt(lo * hi)
        if is_stable(scheme, lam, c, mid):
            lo = mid
        else:
            hi = mid
    return lo


def sweep(scheme, lams, cs, dts):
    """Rows (lam, c, dt, rho) over the Cartesian product of the grids."""
    return [(lam, c, dt, rho(scheme, lam, c, dt)) for lam in lams for c in cs for dt in dts]


def dt_max_table(scheme, lams, c_multiples=C_MULTIPLES):
    """Rows (lam, c, dt_max) with c given as multiples of lam."""
    rows = []
    for lam in lams:
        for m in c_multiples:
            try:
                d = max_stable_dt(scheme, lam, m * lam)
            except UnconditionallyUnstable:
                d = 0.0
            rows.append((lam, m * lam, d))
    return rows
