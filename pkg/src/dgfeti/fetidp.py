"""Dual-primal substructuring operators and the preconditioned CG loop.

The Delta-Schur complement is never formed: every application runs local
(interior + dual) solves, one coarse primal solve, and a back-substitution.
Two coarse matrices are kept: the primal Schur complement of the full system
(eliminating interior and dual dofs, used inside the implicit Delta-Schur
inverse) and the primal Schur complement after eliminating interiors only
(used for the reduced right-hand side and the final back-substitution).

All operator state is read-only during iteration, so applications are safe to
share across concurrent contexts; the outer PCG iteration is sequential.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError


class SpdFactor:
    """Sparse factorization that rejects matrices with nonpositive pivots.

    Uses a symmetric-mode LU without partial pivoting, so for a symmetric
    matrix the pivot signs reproduce the inertia of a Cholesky attempt; a
    nonpositive pivot signals a non-SPD block (typically: penalty too small).
    """

    def __init__(self, A: sp.spmatrix, label: str):
        self.shape = A.shape
        if A.shape[0] == 0:
            self._lu = None
            return
        try:
            self._lu = spla.splu(
                A.tocsc(), diag_pivot_thresh=0.0, permc_spec="MMD_AT_PLUS_A",
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:
            raise ConfigurationError(f"{label}: singular factorization "
                                     f"(penalty parameter too small?)") from exc
        if np.any(self._lu.U.diagonal() <= 0.0):
            raise ConfigurationError(f"{label}: matrix is not positive definite "
                                     f"(penalty parameter too small?)")

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self._lu is None:
            return np.zeros_like(b)
        return self._lu.solve(b)


def _content_key(A: sp.csc_matrix) -> str:
    h = hashlib.sha1()
    h.update(np.asarray(A.shape, dtype=np.int64).tobytes())
    h.update(A.indptr.tobytes())
    h.update(A.indices.tobytes())
    h.update(A.data.tobytes())
    return h.hexdigest()


@dataclass
class LocalFactors:
    """Per-subdomain blocks and factorizations in (I, Pi, Delta) splitting."""

    sub_id: int
    I: np.ndarray
    Pi: np.ndarray
    Delta: np.ndarray
    A_II: sp.csr_matrix
    A_IP: sp.csr_matrix
    A_ID: sp.csr_matrix
    A_PP: sp.csr_matrix
    A_PD: sp.csr_matrix
    A_DD: sp.csr_matrix
    lu_II: SpdFactor
    lu_L: SpdFactor               # factorization of the (I u Delta) block
    X_II: np.ndarray = None       # A_II^{-1} A_IP, cached for back-substitution
    Z_L: np.ndarray = None        # L^{-1} [A_IP; A_DP]

    @property
    def nI(self):
        return self.I.shape[0]

    @property
    def nPi(self):
        return self.Pi.shape[0]

    @property
    def nD(self):
        return self.Delta.shape[0]


def factor_local(system, space, cache: dict | None = None) -> LocalFactors:
    """Split A' by (I, Pi, Delta) and factor the interior and (I u Delta)
    blocks; identical blocks across subdomains share one factorization."""
    A = system.A.tocsr()
    I, Pi, Delta = space.I, space.Pi, space.Delta

    def block(rows, cols):
        return A[rows][:, cols].tocsr()

    A_II = block(I, I)
    A_ID = block(I, Delta)
    A_L = sp.bmat([[A_II, A_ID], [A_ID.T, block(Delta, Delta)]], format="csc") \
        if Delta.size else A_II.tocsc()

    def factor(M, label):
        M = M.tocsc()
        if cache is None:
            return SpdFactor(M, label)
        key = _content_key(M)
        if key not in cache:
            cache[key] = SpdFactor(M, label)
        return cache[key]

    lu_II = factor(A_II, f"subdomain {space.sub_id}: interior block")
    lu_L = factor(A_L, f"subdomain {space.sub_id}: interior+dual block")
    return LocalFactors(
        sub_id=space.sub_id, I=I, Pi=Pi, Delta=Delta,
        A_II=A_II, A_IP=block(I, Pi), A_ID=A_ID,
        A_PP=block(Pi, Pi), A_PD=block(Pi, Delta), A_DD=block(Delta, Delta),
        lu_II=lu_II, lu_L=lu_L,
    )


@dataclass
class FetiOperators:
    """Everything needed to apply the dual operator and its preconditioner."""

    disc: object
    sset: object
    sub_ids: list
    local: dict                   # sub_id -> LocalFactors
    n_primal: int
    n_delta: int
    n_lm: int
    B: sp.csr_matrix
    D: np.ndarray
    coarse_full: tuple = None     # cho_factor of the (I u Delta)-eliminated primal Schur
    coarse_interior: tuple = None  # cho_factor of the I-eliminated primal Schur

    # -- vector plumbing ---------------------------------------------------

    def delta_slice(self, sid):
        off = self.sset.layout.offsets[sid]
        return slice(off, off + self.local[sid].nD)

    def primal_ids(self, sid):
        return self.sset.primal.local_to_global[sid]

    def split_load(self, sid):
        f = self.disc.systems[sid].load
        lf = self.local[sid]
        return f[lf.I], f[lf.Pi], f[lf.Delta]

    # -- coarse problems ---------------------------------------------------

    def assemble_coarse(self):
        """Dense subassembled primal Schur complements (both elimination sets)."""
        nP = self.n_primal
        C_int = np.zeros((nP, nP))
        C_full = np.zeros((nP, nP))
        for sid in self.sub_ids:
            lf = self.local[sid]
            if lf.nPi == 0:
                continue
            R = self.primal_ids(sid)
            App = lf.A_PP.toarray()
            A_IP = lf.A_IP.toarray()
            lf.X_II = lf.lu_II.solve(A_IP) if lf.nI else np.zeros((0, lf.nPi))
            C_int[np.ix_(R, R)] += App - A_IP.T @ lf.X_II
            stacked = np.vstack([A_IP, lf.A_PD.T.toarray()])
            lf.Z_L = lf.lu_L.solve(stacked)
            C_full[np.ix_(R, R)] += App - stacked.T @ lf.Z_L
        return C_int, C_full

    # -- solves ------------------------------------------------------------

    def solve_interior_primal(self, bI: dict, bP: np.ndarray):
        """Solve the (I, Pi) block system (interior solves + coarse solve)."""
        y = {}
        rhsP = bP.copy()
        for sid in self.sub_ids:
            lf = self.local[sid]
            y[sid] = lf.lu_II.solve(bI[sid])
            if lf.nPi:
                np.add.at(rhsP, self.primal_ids(sid), -(lf.A_IP.T @ y[sid]))
        zP = la.cho_solve(self.coarse_interior, rhsP) if self.n_primal else rhsP
        zI = {}
        for sid in self.sub_ids:
            lf = self.local[sid]
            zI[sid] = y[sid] - (lf.X_II @ zP[self.primal_ids(sid)] if lf.nPi else 0.0)
        return zI, zP

    def solve_full(self, bI: dict, bP: np.ndarray, bD: np.ndarray):
        """Solve the whole subassembled system for (u_I, u_Pi, u_Delta)."""
        w = {}
        rhsP = bP.copy()
        for sid in self.sub_ids:
            lf = self.local[sid]
            rhs = np.concatenate([bI[sid], bD[self.delta_slice(sid)]])
            w[sid] = lf.lu_L.solve(rhs)
            if lf.nPi:
                wI, wD = w[sid][:lf.nI], w[sid][lf.nI:]
                np.add.at(rhsP, self.primal_ids(sid),
                          -(lf.A_IP.T @ wI + lf.A_PD @ wD))
        uP = la.cho_solve(self.coarse_full, rhsP) if self.n_primal else rhsP
        uI, uD = {}, np.zeros(self.n_delta)
        for sid in self.sub_ids:
            lf = self.local[sid]
            v = w[sid]
            if lf.nPi:
                v = v - lf.Z_L @ uP[self.primal_ids(sid)]
            uI[sid] = v[:lf.nI]
            uD[self.delta_slice(sid)] = v[lf.nI:]
        return uI, uP, uD

    def _zero_interior(self):
        return {sid: np.zeros(self.local[sid].nI) for sid in self.sub_ids}

    def apply_Stilde_inverse(self, rD: np.ndarray) -> np.ndarray:
        """Delta component of the subassembled solve with data (0, 0, rD)."""
        _, _, uD = self.solve_full(self._zero_interior(),
                                   np.zeros(self.n_primal), rD)
        return uD

    def apply_F(self, lam: np.ndarray) -> np.ndarray:
        return self.B @ self.apply_Stilde_inverse(self.B.T @ lam)

    def apply_Sprime_delta(self, wD: np.ndarray) -> np.ndarray:
        """Local Gamma'-Schur complements restricted to the dual dofs."""
        out = np.zeros_like(wD)
        for sid in self.sub_ids:
            lf = self.local[sid]
            w = wD[self.delta_slice(sid)]
            z = lf.A_DD @ w
            if lf.nI:
                z -= lf.A_ID.T @ lf.lu_II.solve(lf.A_ID @ w)
            out[self.delta_slice(sid)] = z
        return out

    def apply_preconditioner(self, r: np.ndarray) -> np.ndarray:
        t = self.D * (self.B.T @ r)
        return self.B @ (self.D * self.apply_Sprime_delta(t))

    # -- right-hand side and recovery ---------------------------------------

    def compute_rhs(self):
        """Reduced dual load g and the multiplier right-hand side d."""
        fI, fD = {}, np.zeros(self.n_delta)
        fP = np.zeros(self.n_primal)
        for sid in self.sub_ids:
            a, b, c = self.split_load(sid)
            fI[sid] = a
            if b.size:
                np.add.at(fP, self.primal_ids(sid), b)
            fD[self.delta_slice(sid)] = c
        zI, zP = self.solve_interior_primal(fI, fP)
        g = fD.copy()
        for sid in self.sub_ids:
            lf = self.local[sid]
            gl = g[self.delta_slice(sid)]
            if lf.nI:
                gl -= lf.A_ID.T @ zI[sid]
            if lf.nPi:
                gl -= lf.A_PD.T @ zP[self.primal_ids(sid)]
        d = self.B @ self.apply_Stilde_inverse(g)
        return g, d

    def recover_solution(self, lam: np.ndarray, g: np.ndarray):
        """Back-solve the dual, primal and interior unknowns from lambda.

        Returns (global native vector, local full vectors, ghost mismatch).
        The global vector concatenates each subdomain's native dofs in id
        order; ghost dofs are checked against their donors and dropped.
        """
        uD = self.apply_Stilde_inverse(g - self.B.T @ lam)
        bI = {}
        bP = np.zeros(self.n_primal)
        for sid in self.sub_ids:
            a, b, _ = self.split_load(sid)
            lf = self.local[sid]
            w = uD[self.delta_slice(sid)]
            bI[sid] = a - lf.A_ID @ w
            if b.size:
                np.add.at(bP, self.primal_ids(sid), b - lf.A_PD @ w)
        uI, uP = self.solve_interior_primal(bI, bP)

        u_local = {}
        for sid in self.sub_ids:
            lf = self.local[sid]
            v = np.zeros(self.disc.spaces[sid].ndof)
            v[lf.I] = uI[sid]
            if lf.nPi:
                v[lf.Pi] = uP[self.primal_ids(sid)]
            v[lf.Delta] = uD[self.delta_slice(sid)]
            u_local[sid] = v

        scale = max(1.0, max((np.abs(v).max() if v.size else 0.0)
                             for v in u_local.values()))
        mism = 0.0
        offsets = self.disc.native_offsets
        u = np.zeros(self.disc.n_native_total)
        for sid in self.sub_ids:
            space = self.disc.spaces[sid]
            u[offsets[sid]:offsets[sid] + space.n_native] = u_local[sid][:space.n_native]
            for ifc in space.ifaces:
                other = ifc.other(sid)
                ghosts = u_local[sid][space.ghost_dofs[ifc.index]]
                donors = u_local[other][self.disc.spaces[other].native_trace[ifc.index]]
                if ghosts.size:
                    mism = max(mism, np.abs(ghosts - donors).max() / scale)
        return u, u_local, mism


def build_operators(disc, sset) -> FetiOperators:
    """Factor all local blocks and both coarse problems."""
    cache: dict = {}
    local = {sid: factor_local(disc.systems[sid], disc.spaces[sid], cache)
             for sid in sorted(disc.systems)}
    ops = FetiOperators(
        disc=disc, sset=sset, sub_ids=sorted(local), local=local,
        n_primal=sset.primal.n_primal, n_delta=sset.layout.n_delta,
        n_lm=sset.jump.n_rows, B=sset.jump.B, D=sset.scaling,
    )
    build_coarse(ops)
    return ops


def build_coarse(ops: FetiOperators) -> None:
    """Assemble and factor the two subassembled primal Schur complements."""
    C_int, C_full = ops.assemble_coarse()
    if ops.n_primal:
        try:
            ops.coarse_interior = la.cho_factor(C_int)
            ops.coarse_full = la.cho_factor(C_full)
        except la.LinAlgError as exc:
            raise ConfigurationError(
                f"coarse primal problem is not positive definite: {exc}"
            ) from exc
    ops._C_int = C_int
    ops._C_full = C_full


@dataclass
class PcgResult:
    lam: np.ndarray
    iterations: int
    converged: bool
    residual_history: np.ndarray
    cond_estimate: float
    ritz_values: np.ndarray


def lanczos_from_cg(alphas, betas) -> np.ndarray:
    """Ritz values of the Lanczos tridiagonal built from CG coefficients."""
    m = len(alphas)
    if m == 0:
        return np.array([1.0])
    diag = np.empty(m)
    diag[0] = 1.0 / alphas[0]
    for k in range(1, m):
        diag[k] = 1.0 / alphas[k] + betas[k - 1] / alphas[k - 1]
    off = np.array([np.sqrt(betas[k]) / alphas[k] for k in range(m - 1)])
    T = np.diag(diag)
    if m > 1:
        T += np.diag(off, 1) + np.diag(off, -1)
    return np.linalg.eigvalsh(T)


def pcg_solve(apply_op, apply_prec, d: np.ndarray, tol: float = 1e-6,
              max_it: int = 500) -> PcgResult:
    """Preconditioned conjugate gradients from a zero initial guess.

    Stops when the l2 residual norm drops below tol times the right-hand
    side norm; the condition estimate comes from the Lanczos tridiagonal
    assembled from the step and orthogonalization coefficients of the same
    run (no extra operator applications).
    """
    if tol <= 0.0:
        raise ConfigurationError(f"tolerance must be positive, got {tol}")
    if max_it < 1:
        raise ConfigurationError(f"max_it must be >= 1, got {max_it}")
    d = np.asarray(d, dtype=float)
    nd = np.linalg.norm(d)
    lam = np.zeros_like(d)
    if d.size == 0 or nd == 0.0:
        return PcgResult(lam=lam, iterations=0, converged=True,
                         residual_history=np.array([nd]), cond_estimate=1.0,
                         ritz_values=np.array([1.0]))
    r = d.copy()
    z = apply_prec(r)
    p = z.copy()
    rz = float(r @ z)
    residuals = [nd]
    alphas, betas = [], []
    converged = False
    for _ in range(max_it):
        q = apply_op(p)
        pq = float(p @ q)
        if pq <= 0.0 or rz <= 0.0:
            raise ConfigurationError("PCG lost positive definiteness")
        alpha = rz / pq
        alphas.append(alpha)
        lam += alpha * p
        r -= alpha * q
        res = np.linalg.norm(r)
        residuals.append(res)
        if res <= tol * nd:
            converged = True
            break
        z = apply_prec(r)
        rz_new = float(r @ z)
        betas.append(rz_new / rz)
        rz = rz_new
        p = z + betas[-1] * p
    ritz = lanczos_from_cg(alphas, betas[:len(alphas) - 1])
    return PcgResult(lam=lam, iterations=len(alphas), converged=converged,
                     residual_history=np.array(residuals),
                     cond_estimate=float(ritz[-1] / ritz[0]), ritz_values=ritz)


@dataclass
class SolveReport:
    """Outcome of one full FETI-DP solve."""

    iterations: int
    converged: bool
    cond_estimate: float
    final_rel_residual: float
    residual_history: np.ndarray
    ritz_values: np.ndarray
    lam: np.ndarray
    u: np.ndarray                 # native dofs, subdomain-major
    u_local: dict
    ghost_mismatch: float
    ghost_ok: bool
    timings: dict


def probe_operators(ops: FetiOperators, rng: np.random.Generator,
                    n_probes: int = 2, rtol: float = 1e-10) -> None:
    """Randomized symmetry / positivity probes of the implicit operators."""
    for _ in range(n_probes):
        if ops.n_lm:
            x = rng.standard_normal(ops.n_lm)
            y = rng.standard_normal(ops.n_lm)
            for name, op in (("F", ops.apply_F), ("M^-1", ops.apply_preconditioner)):
                ox, oy = op(x), op(y)
                scale = np.linalg.norm(ox) * np.linalg.norm(y) + 1e-300
                if abs(ox @ y - x @ oy) > rtol * scale:
                    raise ConfigurationError(f"operator {name} failed symmetry probe")
                if x @ ox <= 0.0:
                    raise ConfigurationError(f"operator {name} failed positivity probe")
        if ops.n_delta:
            w = rng.standard_normal(ops.n_delta)
            if w @ ops.apply_Stilde_inverse(w) <= 0.0:
                raise ConfigurationError("Delta-Schur inverse failed positivity probe")


def solve(disc, sset=None, tol: float = 1e-6, max_it: int = 500,
          probe_rng=None) -> SolveReport:
    """Set up the operators, run PCG on the multiplier system, recover u."""
    from .problem import build_spaces

    t0 = time.perf_counter()
    if sset is None:
        sset = build_spaces(disc)
    ops = build_operators(disc, sset)
    if probe_rng is not None:
        probe_operators(ops, probe_rng)
    g, d = ops.compute_rhs()
    t_setup = time.perf_counter() - t0

    t1 = time.perf_counter()
    pcg = pcg_solve(ops.apply_F, ops.apply_preconditioner, d, tol=tol, max_it=max_it)
    u, u_local, mism = ops.recover_solution(pcg.lam, g)
    t_solve = time.perf_counter() - t1

    nd = np.linalg.norm(d)
    final_rel = pcg.residual_history[-1] / nd if nd > 0 else 0.0
    return SolveReport(
        iterations=pcg.iterations, converged=pcg.converged,
        cond_estimate=pcg.cond_estimate, final_rel_residual=float(final_rel),
        residual_history=pcg.residual_history, ritz_values=pcg.ritz_values,
        lam=pcg.lam, u=u, u_local=u_local, ghost_mismatch=mism,
        ghost_ok=mism <= 10.0 * tol,
        timings={"setup": t_setup, "solve": t_solve},
    )


def dense_operator(apply, dim: int) -> np.ndarray:
    """Materialize a matrix-free operator column by column (tiny scales only)."""
    out = np.empty((dim, dim))
    e = np.zeros(dim)
    for k in range(dim):
        e[k] = 1.0
        out[:, k] = apply(e)
        e[k] = 0.0
    return out
