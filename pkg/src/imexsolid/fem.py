"""Assembly of the velocity/pressure block system for one semi-implicit step.

Every scheme is written in the common form

    V^{n+1} = V_hist + gamma dt / rho0 * (forces),   U^{n+1} = U_hist + gamma dt V^{n+1}

with (gamma, V_hist, U_hist) = (2/3, (4V^n - V^{n-1})/3, (4U^n - U^{n-1})/3)
for the two BDF2 schemes and (1, V^n, U^n) for the semi-implicit Euler
start-up step.  The schemes differ only in the displacement at which the
deviatoric stress and the pressure cofactor are evaluated.

Velocity vectors are component-major (``dof = comp * n_nodes + node``).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from .elements import tensor_basis, volume_rule
from .material import (
    MaterialParams,
    deviatoric_pk1,
    kinematics,
    scaled_volumetric_derivatives,
)
from .mesh import DofMap, MixedMesh, Tag, element_geometry, facet_quadrature


class Scheme(str, enum.Enum):
    MSBDF2 = "MSBDF2"
    FEBDF2 = "FEBDF2"
    EULER = "SemiImplicitEuler"  # single start-up step


class InvertedElementError(RuntimeError):
    def __init__(self, element: int, J: float, field_name: str = "U"):
        self.element = element
        self.J = J
        self.field_name = field_name
        super().__init__(f"element {element} inverted (J = {J:.6g} at {field_name})")


@dataclass
class TimeState:
    U: np.ndarray
    U_prev: np.ndarray
    V: np.ndarray
    V_prev: np.ndarray
    p: np.ndarray
    t: float
    dt: float
    step: int = 0

    def copy(self) -> "TimeState":
        return TimeState(
            self.U.copy(), self.U_prev.copy(), self.V.copy(), self.V_prev.copy(),
            self.p.copy(), self.t, self.dt, self.step,
        )


@dataclass
class Loads:
    """External loading.

    ``body_force(X, t)`` returns the force per unit mass at points ``X`` of
    shape (..., dim).  ``tractions`` maps facet tags to a constant vector or a
    callable ``(X, t) -> vector``.
    """

    body_force: Callable | None = None
    tractions: Mapping[Tag, object] = field(default_factory=dict)


@dataclass
class BlockSystem:
    M_V: sp.csr_matrix
    M_Vp: sp.csr_matrix
    M_pV: sp.csr_matrix
    M_p: sp.csr_matrix
    M_V_lumped: np.ndarray
    R_V: np.ndarray | None = None
    R_p: np.ndarray | None = None
    gamma: float = 2.0 / 3.0
    U_hist: np.ndarray | None = None
    consistent_mass: bool = False


def lump_mass(M) -> np.ndarray:
    """Row-sum lumping; raises if any row sum is not strictly positive."""
    if sp.issparse(M):
        diag = np.asarray(M.sum(axis=1)).ravel()
    else:
        diag = np.asarray(M, dtype=float).sum(axis=1)
    if np.any(diag <= 0):
        bad = int(np.argmin(diag))
        raise ValueError(f"non-positive lumped mass at row {bad}: {diag[bad]:.3g}")
    return diag


def stencil(state: TimeState, scheme: Scheme):
    """``(gamma, V_hist, U_hist, U_bar)`` for ``scheme`` at ``state``."""
    scheme = Scheme(scheme)
    if scheme is Scheme.EULER:
        return 1.0, state.V.copy(), state.U.copy(), state.U.copy()
    V_hist = (4.0 * state.V - state.V_prev) / 3.0
    U_hist = (4.0 * state.U - state.U_prev) / 3.0
    if scheme is Scheme.MSBDF2:
        U_bar = 2.0 * state.U - state.U_prev
    else:
        U_bar = state.U + state.dt * state.V
    return 2.0 / 3.0, V_hist, U_hist, U_bar


class FEModel:
    """Precomputed geometry plus assembly routines for one mesh and material."""

    def __init__(
        self,
        mesh: MixedMesh,
        dofmap: DofMap,
        params: MaterialParams,
        paper_literal_blocks: bool = False,
        consistent_mass: bool = False,
        boundary_penalty: float = 4.0,
    ):
        self.mesh = mesh
        self.dofmap = dofmap
        self.params = params
        self.paper_literal_blocks = paper_literal_blocks
        self.consistent_mass = consistent_mass
        self.boundary_penalty = boundary_penalty
        self.dim = mesh.dim

        xi, _ = volume_rule(self.dim)
        self.N2, dN2 = tensor_basis(2, xi)
        self.N1, dN1 = tensor_basis(1, xi)
        self.points, self.JxW, inv_jac, _ = element_geometry(mesh)
        self.G2 = np.einsum("qam,eqmk->eqak", dN2, inv_jac)
        self.G1 = np.einsum("qam,eqmk->eqak", dN1, inv_jac)

        n, nv, npr = mesh.n_nodes, dofmap.n_velocity_dofs, dofmap.n_pressure_dofs
        self.n_nodes, self.nv, self.np_ = n, nv, npr
        self.vg = dofmap.velocity_gather  # (E, d, n2)
        self.pg = dofmap.pressure_gather  # (E, n1)
        self.free = dofmap.free_mask.astype(float)
        self._free_bool = dofmap.free_mask

        # scalar Q2 mass and Q1 mass (unit density)
        me = np.einsum("eq,qa,qb->eab", self.JxW, self.N2, self.N2)
        el = mesh.elements_q2
        self.mass_q2 = self._coo(me, el[:, :, None], el[:, None, :], (n, n))
        m1 = np.einsum("eq,qa,qb->eab", self.JxW, self.N1, self.N1)
        self.mass_q1 = self._coo(m1, self.pg[:, :, None], self.pg[:, None, :], (npr, npr))
        self.mass_vec = sp.block_diag([self.mass_q2] * self.dim, format="csr")
        self.lumped_unit = lump_mass(self.mass_vec)

        # coupling pattern: rows (E, d, n2, 1), cols (E, 1, 1, n1)
        self._cpl_rows = np.broadcast_to(self.vg[:, :, :, None], self.vg.shape + (self.pg.shape[1],))
        self._cpl_cols = np.broadcast_to(self.pg[:, None, None, :], self._cpl_rows.shape)
        self._row_free = self.free[self._cpl_rows]

        self._facet_cache: dict[Tag, object] = {}
        self._mv_cache: dict[float, sp.csr_matrix] = {}

    # -- helpers ---------------------------------------------------------
    @staticmethod
    def _coo(vals, rows, cols, shape):
        rows, cols = np.broadcast_arrays(rows, cols)
        vals = np.broadcast_to(vals, rows.shape)
        return sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()

    def _scatter_velocity(self, fe: np.ndarray) -> np.ndarray:
        """Sum element vectors (E, d, n2) into a global velocity vector."""
        return np.bincount(self.vg.ravel(), weights=fe.ravel(), minlength=self.nv)

    def _scatter_pressure(self, fe: np.ndarray) -> np.ndarray:
        return np.bincount(self.pg.ravel(), weights=fe.ravel(), minlength=self.np_)

    def facets(self, tag: Tag):
        tag = Tag(tag)
        if tag not in self._facet_cache:
            fl = self.mesh.facets_with(tag)
            self._facet_cache[tag] = facet_quadrature(self.mesh, fl) if fl else None
        return self._facet_cache[tag]

    def displacement_gradient(self, U: np.ndarray) -> np.ndarray:
        return np.einsum("eia,eqaj->eqij", U[self.vg], self.G2, optimize=True)

    def interpolate_velocity_space(self, U: np.ndarray) -> np.ndarray:
        """Values of a velocity-space field at quadrature points, (E, Q, d)."""
        return np.einsum("eia,qa->eqi", U[self.vg], self.N2)

    def interpolate_pressure_space(self, p: np.ndarray) -> np.ndarray:
        return np.einsum("ea,qa->eq", p[self.pg], self.N1)

    def checked_kinematics(self, U: np.ndarray, field_name: str = "U"):
        kin = kinematics(self.displacement_gradient(U))
        if np.any(kin.J <= 0):
            e, q = np.unravel_index(np.argmin(kin.J), kin.J.shape)
            raise InvertedElementError(int(e), float(kin.J[e, q]), field_name)
        return kin

    def element_min_jacobian(self, U: np.ndarray) -> np.ndarray:
        return kinematics(self.displacement_gradient(U)).J.min(axis=1)

    def velocity_mass(self, dt: float) -> sp.csr_matrix:
        """Consistent (rho0/dt) mass with identity rows/cols on constrained dofs."""
        if dt not in self._mv_cache:
            D = sp.diags(self.free)
            M = (self.params.rho0 / dt) * (D @ self.mass_vec @ D)
            M = M + sp.diags(1.0 - self.free)
            self._mv_cache = {dt: M.tocsr()}
        return self._mv_cache[dt]

    def lumped_velocity_mass(self, dt: float) -> np.ndarray:
        lm = (self.params.rho0 / dt) * self.lumped_unit
        lm[~self._free_bool] = 1.0
        return lm

    def pv_coefficient(self, gamma: float, dt: float) -> float:
        if self.paper_literal_blocks:
            return dt
        return gamma * dt

    # -- assembly --------------------------------------------------------
    def assemble(self, state: TimeState, scheme, loads: Loads | None = None, residuals: bool = True) -> BlockSystem:
        scheme = Scheme(scheme)
        prm = self.params
        dt = state.dt
        gamma, V_hist, U_hist, U_bar = stencil(state, scheme)

        kin_n = self.checked_kinematics(state.U, "U^n")
        kin_bar = kin_n if scheme is Scheme.EULER else self.checked_kinematics(U_bar, "extrapolated U")
        _, wj, wjj = scaled_volumetric_derivatives(kin_n.J, prm.vol_model)

        # M_Vp: gamma (grad phi_V, Hbar phi_p)
        GH = np.einsum("eqak,eqck->eqca", self.G2, kin_bar.H, optimize=True)
        vp = gamma * np.einsum("eqca,eq,qb->ecab", GH, self.JxW, self.N1, optimize=True)
        M_Vp = self._coo(vp * self._row_free, self._cpl_rows, self._cpl_cols, (self.nv, self.np_))

        # M_pV: -c (phi_p, W_JJ/kappa H^n : grad phi_V)
        cpv = self.pv_coefficient(gamma, dt)
        GHn = GH if scheme is Scheme.EULER else np.einsum("eqak,eqck->eqca", self.G2, kin_n.H, optimize=True)
        pv = -cpv * np.einsum("eqca,eq,qb->ecab", GHn, self.JxW * wjj, self.N1, optimize=True)
        M_pV = self._coo(pv * self._row_free, self._cpl_cols, self._cpl_rows, (self.np_, self.nv))

        M_p = (prm.inv_kappa * self.mass_q1).tocsr()
        lumped = self.lumped_velocity_mass(dt)
        blocks = BlockSystem(
            M_V=self.velocity_mass(dt),
            M_Vp=M_Vp,
            M_pV=M_pV,
            M_p=M_p,
            M_V_lumped=lumped,
            gamma=gamma,
            U_hist=U_hist,
            consistent_mass=self.consistent_mass,
        )
        if not residuals:
            return blocks

        # R_V
        if self.consistent_mass:
            R_V = blocks.M_V @ V_hist
        else:
            R_V = lumped * V_hist
        _, P_bar = deviatoric_pk1(kin_bar, prm.mu)
        f_int = np.einsum("eqck,eqak,eq->eca", P_bar, self.G2, self.JxW, optimize=True)
        f = -f_int
        loads = loads or Loads()
        t_new = state.t + dt
        if loads.body_force is not None:
            B = np.asarray(loads.body_force(self.points, t_new), dtype=float)
            B = np.broadcast_to(B, self.points.shape)
            f = f + prm.rho0 * np.einsum("eqc,qa,eq->eca", B, self.N2, self.JxW)
        R_V = R_V + gamma * self._scatter_velocity(f)
        for tag, traction in loads.tractions.items():
            fq = self.facets(tag)
            if fq is None:
                continue
            if callable(traction):
                T = np.asarray(traction(fq.points, t_new), dtype=float)
            else:
                T = np.asarray(traction, dtype=float)
            T = np.broadcast_to(T, fq.points.shape)
            fe = np.einsum("fqc,fqa,fq->fca", T, fq.values_q2, fq.weights)
            R_V = R_V + gamma * np.bincount(
                self.vg[fq.elements].ravel(), weights=fe.ravel(), minlength=self.nv
            )
        R_V = np.where(self._free_bool, R_V, 0.0)
        R_V[self.dofmap.constrained_dofs] = self.dofmap.constrained_values

        # R_p: (phi_p, W_J/kappa) [+ (phi_p, W_JJ/kappa H^n : grad(U_hist - U^n))]
        integrand = wj
        if not self.paper_literal_blocks and scheme is not Scheme.EULER:
            gdu = self.displacement_gradient(U_hist - state.U)
            integrand = integrand + wjj * np.einsum("eqij,eqij->eq", kin_n.H, gdu)
        R_p = self._scatter_pressure(np.einsum("eq,qb,eq->eb", integrand, self.N1, self.JxW))

        blocks.R_V = R_V
        blocks.R_p = R_p
        return blocks

    def assemble_blocks(self, state, scheme) -> BlockSystem:
        return self.assemble(state, scheme, residuals=False)

    def assemble_residuals(self, state, scheme, loads=None):
        b = self.assemble(state, scheme, loads)
        return b.R_V, b.R_p

    def schur_preconditioner(self, state: TimeState, scheme) -> sp.csr_matrix:
        """SPD pressure matrix spectrally close to the Schur complement.

        (1/kappa) pressure mass plus a weighted Laplacian
        c * (W_JJ/kappa) (H^n grad phi_i) . (H^n grad phi_j), with
        c = gamma * c_pV * dt / rho0, and a boundary mass term on
        non-clamped facets that stands in for the Dirichlet-like character
        the Schur complement has on free surfaces.
        """
        scheme = Scheme(scheme)
        gamma = 1.0 if scheme is Scheme.EULER else 2.0 / 3.0
        dt = state.dt
        c = gamma * self.pv_coefficient(gamma, dt) * dt / self.params.rho0
        kin_n = self.checked_kinematics(state.U, "U^n")
        _, _, wjj = scaled_volumetric_derivatives(kin_n.J, self.params.vol_model)
        HG = np.einsum("eqck,eqak->eqac", kin_n.H, self.G1, optimize=True)
        ke = c * np.einsum("eqac,eqbc,eq->eab", HG, HG, self.JxW * wjj, optimize=True)
        P = self._coo(ke, self.pg[:, :, None], self.pg[:, None, :], (self.np_, self.np_))
        P = P + self.params.inv_kappa * self.mass_q1
        if self.boundary_penalty > 0:
            P = P + c * self.boundary_penalty * self._free_surface_mass()
        return P.tocsr()

    def _free_surface_mass(self) -> sp.csr_matrix:
        if not hasattr(self, "_fs_mass"):
            mats = []
            for tag in (Tag.FREE, Tag.TRACTION):
                fq = self.facets(tag)
                if fq is None:
                    continue
                area = fq.weights.sum(axis=1)
                h = area if self.dim == 2 else np.sqrt(area)
                me = np.einsum("fq,fqa,fqb->fab", fq.weights / h[:, None], fq.values_q1, fq.values_q1)
                pg = self.pg[fq.elements]
                mats.append(self._coo(me, pg[:, :, None], pg[:, None, :], (self.np_, self.np_)))
            self._fs_mass = sum(mats) if mats else sp.csr_matrix((self.np_, self.np_))
        return self._fs_mass


def assemble_blocks(model: FEModel, state: TimeState, scheme) -> BlockSystem:
    return model.assemble_blocks(state, scheme)


def assemble_residuals(model: FEModel, state: TimeState, scheme, loads: Loads | None = None):
    return model.assemble_residuals(state, scheme, loads)


def assemble_schur_preconditioner(model: FEModel, state: TimeState, scheme=Scheme.FEBDF2):
    return model.schur_preconditioner(state, scheme)
