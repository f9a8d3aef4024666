"""Modified Neo-Hookean constitutive law with a pluggable volumetric energy.

All kinematic routines are batched: the trailing two axes hold the d x d
tensor and any leading axes (elements, quadrature points, ...) are carried
through.  Two-dimensional problems are treated in plane strain, i.e. the
deformation gradient is embedded in 3D with a unit out-of-plane stretch.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

INFINITE = math.inf


class VolModel(str, enum.Enum):
    QUADRATIC = "quadratic"
    LIU = "liu"


class MaterialError(ValueError):
    pass


def moduli_from_E_nu(E: float, nu: float, kappa_scale: float = 1.0) -> tuple[float, float]:
    """Shear and bulk moduli from Young's modulus and Poisson's ratio.

    Returns ``(mu, kappa)``; ``kappa`` is :data:`INFINITE` for ``nu == 0.5``.
    """
    if not (0.0 <= nu <= 0.5):
        raise MaterialError(f"Poisson ratio must lie in [0, 0.5], got {nu}")
    if E <= 0:
        raise MaterialError(f"Young's modulus must be positive, got {E}")
    mu = E / (2.0 * (1.0 + nu))
    if nu == 0.5:
        return mu, INFINITE
    kappa = kappa_scale * E / (3.0 * (1.0 - 2.0 * nu))
    return mu, kappa


@dataclass(frozen=True)
class MaterialParams:
    E: float
    nu: float
    rho0: float
    vol_model: VolModel = VolModel.QUADRATIC
    kappa_scale: float = 1.0
    mu: float = field(init=False)
    kappa: float = field(init=False)

    def __post_init__(self):
        if self.rho0 <= 0:
            raise MaterialError(f"density must be positive, got {self.rho0}")
        mu, kappa = moduli_from_E_nu(self.E, self.nu, self.kappa_scale)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "vol_model", VolModel(self.vol_model))

    @property
    def incompressible(self) -> bool:
        return math.isinf(self.kappa)

    @property
    def inv_kappa(self) -> float:
        return 0.0 if self.incompressible else 1.0 / self.kappa


@dataclass
class Kinematics:
    """Per-point kinematic bundle.

    ``FF`` is the contraction F:F of the 3D embedding (so it carries the +1
    out-of-plane term in 2D); ``Fbar_norm2`` is J^(-2/3) F:F.
    """

    F: np.ndarray
    J: np.ndarray
    H: np.ndarray
    FF: np.ndarray

    @property
    def Fbar_norm2(self) -> np.ndarray:
        return np.cbrt(self.J) ** -2 * self.FF


def cofactor(F: np.ndarray) -> np.ndarray:
    """Cofactor matrix J F^-T from explicit minors; defined for any F."""
    d = F.shape[-1]
    H = np.empty_like(F)
    if d == 2:
        H[..., 0, 0] = F[..., 1, 1]
        H[..., 0, 1] = -F[..., 1, 0]
        H[..., 1, 0] = -F[..., 0, 1]
        H[..., 1, 1] = F[..., 0, 0]
    elif d == 3:
        for i in range(3):
            i1, i2 = (i + 1) % 3, (i + 2) % 3
            for j in range(3):
                j1, j2 = (j + 1) % 3, (j + 2) % 3
                H[..., i, j] = F[..., i1, j1] * F[..., i2, j2] - F[..., i1, j2] * F[..., i2, j1]
    else:
        raise ValueError(f"unsupported dimension {d}")
    return H


def determinant(F: np.ndarray) -> np.ndarray:
    d = F.shape[-1]
    if d == 2:
        return F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    return (
        F[..., 0, 0] * (F[..., 1, 1] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 1])
        - F[..., 0, 1] * (F[..., 1, 0] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 0])
        + F[..., 0, 2] * (F[..., 1, 0] * F[..., 2, 1] - F[..., 1, 1] * F[..., 2, 0])
    )


def kinematics(gradU: np.ndarray) -> Kinematics:
    gradU = np.asarray(gradU, dtype=float)
    d = gradU.shape[-1]
    F = gradU + np.eye(d)
    J = determinant(F)
    H = cofactor(F)
    FF = np.einsum("...ij,...ij->...", F, F)
    if d == 2:
        FF = FF + 1.0
    return Kinematics(F=F, J=J, H=H, FF=FF)


def deviatoric_pk1(kin: Kinematics, mu: float) -> tuple[np.ndarray, np.ndarray]:
    """Deviatoric energy density and its in-plane PK1 stress.

    P_dev = mu J^(-2/3) (F - F:F/3 F^-T), with F^-T = H / J.
    """
    J = np.asarray(kin.J)
    if np.any(J <= 0):
        raise MaterialError("deviatoric stress requires J > 0")
    jm23 = np.cbrt(J) ** -2
    W = 0.5 * mu * (jm23 * kin.FF - 3.0)
    FinvT = kin.H / J[..., None, None]
    P = mu * jm23[..., None, None] * (kin.F - (kin.FF / 3.0)[..., None, None] * FinvT)
    return W, P


def volumetric_derivatives(J, kappa: float, model: VolModel | str):
    """``(W_vol, W_J, W_JJ)`` for the chosen volumetric energy.

    With ``kappa`` infinite the energy and its derivatives are infinite (or
    undefined); use :func:`scaled_volumetric_derivatives` instead.
    """
    w, wj, wjj = scaled_volumetric_derivatives(J, model)
    return kappa * w, kappa * wj, kappa * wjj


def scaled_volumetric_derivatives(J, model: VolModel | str):
    """Volumetric energy and derivatives divided by kappa (finite for all kappa)."""
    model = VolModel(model)
    J = np.asarray(J, dtype=float)
    if model is VolModel.QUADRATIC:
        return 0.5 * (J - 1.0) ** 2, J - 1.0, np.ones_like(J)
    if np.any(J <= 0):
        raise MaterialError("Liu volumetric energy requires J > 0")
    lnJ = np.log(J)
    return J * lnJ - J + 1.0, lnJ, 1.0 / J


def wave_speeds(params: MaterialParams, J: float = 1.0) -> tuple[float, float]:
    """Shear and bulk wave speeds ``(c_mu, c_kappa)`` at volume ratio ``J``."""
    if J <= 0:
        raise MaterialError("wave speeds need J > 0")
    c_mu = math.sqrt(params.mu / params.rho0)
    if params.incompressible:
        return c_mu, INFINITE
    _, _, wjj = volumetric_derivatives(J, params.kappa, params.vol_model)
    kappa_inst = J * float(wjj)
    return c_mu, math.sqrt((kappa_inst + 4.0 / 3.0 * params.mu) / params.rho0)
