"""Krylov solvers and the Schur-complement pressure/velocity update."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import BlockSystem


class Stage(str, enum.Enum):
    SCHUR_PRESSURE = "SchurPressure"
    VELOCITY_UPDATE = "VelocityUpdate"


@dataclass
class SolveReport:
    iterations: int
    final_residual: float  # relative: ||b - A x|| / ||b||
    converged: bool
    stage: Stage | None = None
    message: str = ""


class SolverError(RuntimeError):
    def __init__(self, report: SolveReport):
        self.report = report
        super().__init__(
            f"{report.stage.value if report.stage else 'solve'} did not converge: "
            f"{report.iterations} iterations, residual {report.final_residual:.3e} {report.message}"
        )


def _as_apply(A) -> Callable[[np.ndarray], np.ndarray]:
    if A is None:
        return lambda x: x
    if callable(A) and not hasattr(A, "shape"):
        return A
    if isinstance(A, np.ndarray) and A.ndim == 1:
        return lambda x: A * x
    return lambda x: A @ x


def pcg(A, b, precond=None, tol: float = 1e-10, maxit: int = 1000, x0=None):
    """Preconditioned conjugate gradients.

    ``precond`` is a diagonal (1D array of the matrix diagonal, inverted
    here) or a callable applying the preconditioner inverse.
    """
    apply_A = _as_apply(A)
    if isinstance(precond, np.ndarray) and precond.ndim == 1:
        inv_diag = 1.0 / precond
        apply_M = lambda r: inv_diag * r  # noqa: E731
    else:
        apply_M = _as_apply(precond)
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return np.zeros_like(b), SolveReport(0, 0.0, True)
    r = b - apply_A(x)
    rel = np.linalg.norm(r) / bnorm
    if rel <= tol:
        return x, SolveReport(0, rel, True)
    z = apply_M(r)
    p = z.copy()
    rz = r @ z
    for k in range(1, maxit + 1):
        Ap = apply_A(p)
        pAp = p @ Ap
        if pAp <= 0:
            return x, SolveReport(k, rel, False, message="indefinite operator (p^T A p <= 0)")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rel = np.linalg.norm(r) / bnorm
        if rel <= tol:
            return x, SolveReport(k, rel, True)
        z = apply_M(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, SolveReport(maxit, rel, False, message="maximum iterations reached")


def gmres(A, b, precond=None, tol: float = 1e-10, restart: int = 50, maxit: int = 500, x0=None):
    """Restarted GMRES with right preconditioning.

    Convergence is declared on the true relative residual
    ||b - A x|| / ||b|| <= tol.  A cycle that fails to reduce the residual
    stops the iteration with ``converged = False``.  On a lucky breakdown the
    small Hessenberg problem is solved in the least-squares sense, which gives
    the consistent solution for singular systems with ``b`` in the range.
    """
    if restart < 1:
        raise ValueError("restart must be >= 1")
    apply_A = _as_apply(A)
    apply_M = _as_apply(precond)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), SolveReport(0, 0.0, True)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    total = 0
    r = b - apply_A(x)
    beta = np.linalg.norm(r)
    if beta / bnorm <= tol:
        return x, SolveReport(0, beta / bnorm, True)
    m = min(restart, n)
    while True:
        Q = np.zeros((m + 1, n))
        Z = np.zeros((m, n))
        Hs = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        Q[0] = r / beta
        g[0] = beta
        breakdown = False
        j = 0
        for j in range(m):
            Z[j] = apply_M(Q[j])
            w = apply_A(Z[j])
            for i in range(j + 1):
                Hs[i, j] = Q[i] @ w
                w -= Hs[i, j] * Q[i]
            # one reorthogonalisation pass keeps the basis clean for tight tol
            for i in range(j + 1):
                c = Q[i] @ w
                Hs[i, j] += c
                w -= c * Q[i]
            Hs[j + 1, j] = np.linalg.norm(w)
            total += 1
            if Hs[j + 1, j] <= 1e-14 * max(1.0, np.abs(Hs[: j + 1, j]).max()):
                breakdown = True
            else:
                Q[j + 1] = w / Hs[j + 1, j]
            for i in range(j):
                t = cs[i] * Hs[i, j] + sn[i] * Hs[i + 1, j]
                Hs[i + 1, j] = -sn[i] * Hs[i, j] + cs[i] * Hs[i + 1, j]
                Hs[i, j] = t
            rho = math.hypot(Hs[j, j], Hs[j + 1, j])
            if rho == 0.0:
                cs[j], sn[j] = 1.0, 0.0
            else:
                cs[j], sn[j] = Hs[j, j] / rho, Hs[j + 1, j] / rho
            Hs[j, j] = cs[j] * Hs[j, j] + sn[j] * Hs[j + 1, j]
            Hs[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            if breakdown or abs(g[j + 1]) / bnorm <= tol or total >= maxit:
                break
        k = j + 1
        R = Hs[:k, :k]
        if np.all(np.abs(np.diag(R)) > 1e-300) and np.linalg.cond(R) < 1e14:
            y = np.linalg.solve(R, g[:k])
        else:
            y = np.linalg.lstsq(R, g[:k], rcond=None)[0]
        x = x + y @ Z[:k]
        r = b - apply_A(x)
        beta_new = np.linalg.norm(r)
        rel = beta_new / bnorm
        if rel <= tol:
            msg = "breakdown: least-squares consistent solution" if breakdown else ""
            return x, SolveReport(total, rel, True, message=msg)
        if breakdown:
            return x, SolveReport(total, rel, False, message="breakdown with inconsistent system")
        if total >= maxit:
            return x, SolveReport(total, rel, False, message="maximum iterations reached")
        if beta_new >= beta * (1.0 - 1e-12):
            return x, SolveReport(total, rel, False, message="stagnation over a restart cycle")
        beta = beta_new


# -- preconditioners ------------------------------------------------------


def incomplete_cholesky(A: sp.spmatrix, max_shift_tries: int = 8) -> sp.csr_matrix:
    """Zero-fill incomplete Cholesky factor L (A ~ L L^T).

    A diagonal shift (Manteuffel) is added and the factorisation retried
    when a non-positive pivot appears.
    """
    A = sp.csr_matrix(A)
    A.sort_indices()
    lower = sp.tril(A, format="csr")
    lower.sort_indices()
    n = A.shape[0]
    indptr, indices, data0 = lower.indptr, lower.indices, lower.data
    diag = A.diagonal()
    shift = 0.0
    for _ in range(max_shift_tries):
        data = data0.copy()
        if shift:
            data[indptr[1:] - 1] += shift * diag
        ok = True
        rows: list[dict] = []
        for i in range(n):
            lo, hi = indptr[i], indptr[i + 1]
            cols = indices[lo:hi]
            row = {}
            for pos in range(lo, hi - 1):
                k = indices[pos]
                rk = rows[k]
                s = data[pos]
                for j, lij in row.items():
                    lkj = rk.get(j)
                    if lkj is not None:
                        s -= lij * lkj
                row[k] = s / rk[k]
            piv = data[hi - 1] - sum(v * v for v in row.values())
            if cols[-1] != i or piv <= 0:
                ok = False
                break
            row[i] = math.sqrt(piv)
            rows.append(row)
        if ok:
            out = np.empty_like(data)
            for i in range(n):
                lo, hi = indptr[i], indptr[i + 1]
                out[lo:hi] = [rows[i][c] for c in indices[lo:hi]]
            return sp.csr_matrix((out, indices.copy(), indptr.copy()), shape=A.shape)
        shift = 1e-3 if shift == 0.0 else 4 * shift
    raise ValueError("incomplete Cholesky failed even with diagonal shifts")


def make_preconditioner(P, kind="ic0") -> Callable[[np.ndarray], np.ndarray]:
    """Return ``r -> approx P^{-1} r``.

    ``kind`` is ``"ic0"``, ``"jacobi"``, ``"lu"`` (exact sparse LU of P), or a
    factory ``P -> callable`` for plugging in e.g. algebraic multigrid.
    """
    if callable(kind):
        return kind(P)
    if kind == "jacobi":
        inv = 1.0 / P.diagonal()
        return lambda r: inv * r
    if kind == "lu":
        return spla.splu(sp.csc_matrix(P)).solve
    if kind == "ic0":
        L = incomplete_cholesky(P)
        # triangular solves through SuperLU on the fixed factor (no fill, no pivoting)
        lu = spla.splu(sp.csc_matrix(L), permc_spec="NATURAL", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})

        def apply(r):
            return lu.solve(lu.solve(r), trans="T")

        return apply
    raise ValueError(f"unknown preconditioner {kind!r}")


# -- Schur complement -------------------------------------------------------


def _mass_solver(blocks: BlockSystem, tol: float = 1e-13):
    if not blocks.consistent_mass:
        inv = 1.0 / blocks.M_V_lumped
        return lambda r: inv * r
    diag = blocks.M_V.diagonal()

    def solve(r):
        x, rep = pcg(blocks.M_V, r, precond=diag, tol=tol, maxit=2000)
        if not rep.converged:
            rep.stage = Stage.VELOCITY_UPDATE
            raise SolverError(rep)
        return x

    return solve


def schur_apply(blocks: BlockSystem, q: np.ndarray, mass_solve=None) -> np.ndarray:
    """S q = M_p q - M_pV M_V^{-1} M_Vp q, without forming S."""
    mass_solve = mass_solve or _mass_solver(blocks)
    return blocks.M_p @ q - blocks.M_pV @ mass_solve(blocks.M_Vp @ q)


@dataclass
class SchurResult:
    p: np.ndarray
    V: np.ndarray
    pressure_report: SolveReport
    velocity_report: SolveReport


def schur_update(
    blocks: BlockSystem,
    precond=None,
    tol: float = 1e-10,
    restart: int = 50,
    maxit: int = 500,
    p0=None,
) -> SchurResult:
    """Pressure by GMRES on the Schur complement, then the velocity update."""
    mass_solve = _mass_solver(blocks)
    rhs = blocks.R_p - blocks.M_pV @ mass_solve(blocks.R_V)
    p, rep = gmres(
        lambda q: schur_apply(blocks, q, mass_solve), rhs, precond,
        tol=tol, restart=restart, maxit=maxit, x0=p0,
    )
    rep.stage = Stage.SCHUR_PRESSURE
    V = mass_solve(blocks.R_V - blocks.M_Vp @ p)
    vrep = SolveReport(0, 0.0, True, Stage.VELOCITY_UPDATE)
    return SchurResult(p, V, rep, vrep)
