"""Conic problems over free variables and PSD blocks, and a solver for them.

Standard form::

    minimise    c_f . u + sum_b <C_b, X_b>
    subject to  A_f u + sum_b A_b(X_b) = b,   X_b PSD,  u free

PSD variables are addressed by their upper-triangle entries (row-major), so a
triplet ``(r, col(i,j), v)`` contributes ``v * X[i, j]`` to row ``r``.

The solver is an infeasible-start primal-dual interior-point method with
Nesterov-Todd scaling and a Mehrotra predictor-corrector step. Free variables
are removed in a presolve: rows touching only free variables are solved
exactly (null-space parametrisation), and the remaining free columns are
replaced by an orthonormal basis of their range, which keeps the reduced KKT
system well conditioned.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

log = logging.getLogger(__name__)

#: A converged iterate may carry a relative duality gap up to this multiple of ``tol``.
GAP_FACTOR = 100.0

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
INACCURATE = "inaccurate"
ITERATION_LIMIT = "iteration-limit"

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200


class ConicStructureError(ValueError):
    pass


@dataclass(frozen=True)
class ConicProblem:
    blocks: tuple[tuple[str, int], ...]
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    b: np.ndarray
    c: np.ndarray
    row_labels: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.blocks or self.blocks[0][0] != "free":
            raise ConicStructureError("first block must be the (possibly empty) free block")
        if any(kind != "psd" for kind, _ in self.blocks[1:]):
            raise ConicStructureError("only one free block followed by PSD blocks is supported")
        n = self.n_cols
        if len(self.c) != n:
            raise ConicStructureError("objective length does not match variable count")
        if len(self.rows) and (self.rows.max() >= len(self.b) or self.rows.min() < 0):
            raise ConicStructureError("row index out of range")
        if len(self.cols) and (self.cols.max() >= n or self.cols.min() < 0):
            raise ConicStructureError("column index out of range")

    @property
    def n_rows(self) -> int:
        return len(self.b)

    @property
    def n_free(self) -> int:
        return self.blocks[0][1]

    @property
    def psd_sizes(self) -> list[int]:
        return [n for _, n in self.blocks[1:]]

    @property
    def n_cols(self) -> int:
        return self.n_free + sum(n * (n + 1) // 2 for n in self.psd_sizes)

    def block_offsets(self) -> list[int]:
        offs = [self.n_free]
        for n in self.psd_sizes:
            offs.append(offs[-1] + n * (n + 1) // 2)
        return offs

    def column_owner(self) -> list[tuple[int, str]]:
        out: list[tuple[int, str]] = [(0, str(j)) for j in range(self.n_free)]
        for bi, n in enumerate(self.psd_sizes, start=1):
            for i in range(n):
                for j in range(i, n):
                    out.append((bi, f"{i},{j}"))
        return out

    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(self.n_rows, self.n_cols))

    def encode(self) -> bytes:
        """Canonical byte encoding (used for determinism checks)."""
        parts = [repr(self.blocks).encode()]
        for arr in (self.rows, self.cols, self.vals, self.b, self.c):
            parts.append(np.ascontiguousarray(arr).tobytes())
        return b"\x00".join(parts)

    def split(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Flat vector -> (free values, list of symmetric block matrices)."""
        u = np.asarray(x[: self.n_free], dtype=float)
        mats = []
        offs = self.block_offsets()
        for bi, n in enumerate(self.psd_sizes):
            iu = np.triu_indices(n)
            M = np.zeros((n, n))
            M[iu] = x[offs[bi]:offs[bi + 1]]
            M = M + np.triu(M, 1).T
            mats.append(M)
        return u, mats

    def flatten(self, u: np.ndarray, mats: list[np.ndarray]) -> np.ndarray:
        parts = [np.asarray(u, dtype=float)]
        for M in mats:
            parts.append(M[np.triu_indices(M.shape[0])])
        return np.concatenate(parts) if parts else np.zeros(0)

    def select_rows(self, keep: np.ndarray) -> "ConicProblem":
        """Sub-problem with only the rows in ``keep`` (renumbered in order)."""
        keep = np.asarray(keep, dtype=np.int64)
        pos = -np.ones(self.n_rows, dtype=np.int64)
        pos[keep] = np.arange(len(keep))
        sel = pos[self.rows] >= 0
        labels = tuple(self.row_labels[i] for i in keep) if self.row_labels else ()
        return ConicProblem(self.blocks, pos[self.rows[sel]], self.cols[sel], self.vals[sel],
                            self.b[keep], self.c, labels)

    def residual(self, x: np.ndarray) -> float:
        """Relative infinity-norm equality residual after scaling rows to unit norm.

        ``max_i |a_i.x - b_i| / |a_i|`` divided by ``1 + max_i |b_i| / |a_i|``.
        """
        A = self.matrix()
        norms = np.sqrt(np.asarray(A.multiply(A).sum(axis=1)).ravel())
        norms = np.where(norms > 0, norms, 1.0)
        r = (A @ x - self.b) / norms
        return float(np.max(np.abs(r), initial=0.0) / (1.0 + np.max(np.abs(self.b / norms), initial=0.0)))


@dataclass
class ConicSolution:
    status: str
    x: np.ndarray
    free: np.ndarray
    psd: list[np.ndarray]
    y: np.ndarray
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    objective: float = float("nan")
    certificate: np.ndarray | None = None
    message: str = ""
    history: list[dict] = field(default_factory=list)


def check_psd(matrix, tol: float = 1e-8) -> tuple[bool, float]:
    """``(is_psd, min_eigenvalue)`` for a symmetric matrix."""
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    if M.size == 0:
        return True, 0.0
    if not np.allclose(M, M.T, atol=1e-12, rtol=0.0):
        raise ValueError("matrix is not symmetric")
    lam = float(np.linalg.eigvalsh(M)[0])
    return lam >= -tol, lam


# ---------------------------------------------------------------------------
# internal representation


@dataclass
class _Block:
    n: int
    A: sp.csr_matrix          # m x n*n, symmetric split of the upper-triangle data
    C: np.ndarray             # n x n
    rows_of: list[np.ndarray]  # per constraint row: flat indices a*n+b of entries
    vals_of: list[np.ndarray]


def _sym_triplets(n: int, r: np.ndarray, ij: np.ndarray, v: np.ndarray):
    iu, ju = np.triu_indices(n)
    i, j = iu[ij], ju[ij]
    off = i != j
    rr = np.concatenate([r, r[off]])
    cc = np.concatenate([i * n + j, (j * n + i)[off]])
    vv = np.concatenate([np.where(off, v / 2.0, v), (v / 2.0)[off]])
    return rr, cc, vv


def _sym_from_upper(n: int, ij: np.ndarray, v: np.ndarray) -> np.ndarray:
    iu, ju = np.triu_indices(n)
    M = np.zeros((n, n))
    i, j = iu[ij], ju[ij]
    off = i != j
    np.add.at(M, (i, j), np.where(off, v / 2.0, v))
    np.add.at(M, (j[off], i[off]), v[off] / 2.0)
    return M


def _chol_lower(X: np.ndarray) -> np.ndarray:
    return np.linalg.cholesky(X)


def _max_step(L: np.ndarray, dX: np.ndarray) -> float:
    Li = sla.solve_triangular(L, np.eye(L.shape[0]), lower=True)
    lam = np.linalg.eigvalsh(Li @ dX @ Li.T)[0]
    return np.inf if lam >= 0 else -1.0 / lam


class _Schur:
    """Direct solver for the saddle-point system ``[[M, U], [U^T, 0]]``."""

    def __init__(self, M: np.ndarray, U: np.ndarray):
        m, r = M.shape[0], U.shape[1]
        K = np.zeros((m + r, m + r))
        K[:m, :m] = M
        K[:m, m:] = U
        K[m:, :m] = U.T
        self.K = K
        self.m = m
        self.lu = sla.lu_factor(K, check_finite=False)
        if not np.all(np.isfinite(self.lu[0])) or np.min(np.abs(np.diag(self.lu[0]))) == 0.0:
            raise np.linalg.LinAlgError("singular KKT system")

    def solve(self, h: np.ndarray, rf: np.ndarray, refine: int = 3):
        rhs = np.concatenate([h, rf])
        sol = sla.lu_solve(self.lu, rhs, check_finite=False)
        for _ in range(refine):
            res = rhs - self.K @ sol
            sol = sol + sla.lu_solve(self.lu, res, check_finite=False)
        return sol[: self.m], sol[self.m:]


def _independent_rows(problem: ConicProblem, tol: float):
    """Split rows into a maximal independent set and the rest.

    Returns ``(keep, None)`` or ``(None, certificate)`` when a dependent row
    has a right-hand side inconsistent with the rows it depends on.
    """
    A = problem.matrix().toarray()
    m = A.shape[0]
    norms = np.linalg.norm(A, axis=1)
    scale = np.where(norms > 0, norms, 1.0)
    As = A / scale[:, None]
    bs = problem.b / scale
    _, R, piv = sla.qr(As.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > 1e-10 * max(diag[0] if diag.size else 0.0, 1e-300)))
    keep = np.sort(piv[:rank])
    drop = np.sort(piv[rank:])
    if not drop.size:
        return keep, None
    W = np.linalg.lstsq(As[keep].T, As[drop].T, rcond=None)[0]  # rank x ndrop
    resid = bs[drop] - W.T @ bs[keep]
    bad = np.flatnonzero(np.abs(resid) > 1e3 * tol * (1 + np.max(np.abs(bs), initial=0.0)))
    if bad.size:
        j = bad[np.argmax(np.abs(resid[bad]))]
        y = np.zeros(m)
        y[drop[j]] = 1.0
        y[keep] = -W[:, j]
        y = y / scale * np.sign(resid[j])
        return None, y
    return keep, None


def solve(problem: ConicProblem, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
          verbose: bool = False) -> ConicSolution:
    """Solve a :class:`ConicProblem`; deterministic for identical input."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if problem.n_rows:
        keep, cert = _independent_rows(problem, tol)
        if cert is not None:
            return _infeasible(problem, cert, 0, "linearly dependent rows with inconsistent right-hand sides")
        if keep.size < problem.n_rows:
            sub = problem.select_rows(keep)
            sol = _solve_full_rank(sub, tol, max_iter, verbose)
            if sol.status in (INFEASIBLE,):
                y = np.zeros(problem.n_rows)
                y[keep] = sol.certificate
                return _infeasible(problem, y, sol.iterations, sol.message, sol.history)
            if sol.status == UNBOUNDED:
                return _unbounded(problem, sol.iterations, sol.message, sol.history)
            y = np.zeros(problem.n_rows)
            y[keep] = sol.y
            u, Xs = sub.split(sol.x)
            return _finish(problem, u, Xs, y, sol.iterations, None, sol.status, tol,
                           sol.message, sol.history)
    return _solve_full_rank(problem, tol, max_iter, verbose)


def _solve_full_rank(problem: ConicProblem, tol: float, max_iter: int,
                     verbose: bool) -> ConicSolution:
    m = problem.n_rows
    nf = problem.n_free
    sizes = problem.psd_sizes
    offs = problem.block_offsets()
    rows, cols, vals = problem.rows, problem.cols, problem.vals

    # -- row equilibration ------------------------------------------------
    A_full = problem.matrix()
    rnorm = np.sqrt(np.asarray(A_full.multiply(A_full).sum(axis=1)).ravel())
    dr = np.where(rnorm > 0, 1.0 / np.where(rnorm > 0, rnorm, 1.0), 1.0)
    vals_s = vals * dr[rows]
    b_s = problem.b * dr

    free_mask = cols < nf
    # rows with no PSD entries
    has_psd = np.zeros(m, dtype=bool)
    has_psd[rows[~free_mask]] = True
    empty_rows = np.flatnonzero(~has_psd & (np.bincount(rows[free_mask], minlength=m) == 0)) \
        if m else np.zeros(0, dtype=int)
    for r in empty_rows:
        if abs(problem.b[r]) > tol * (1 + np.max(np.abs(problem.b), initial=0.0)):
            cert = np.zeros(m)
            cert[r] = np.sign(problem.b[r])
            return _infeasible(problem, cert, 0, f"row {r} has no variables but nonzero right-hand side")
    E_rows = np.flatnonzero(~has_psd)
    R_rows = np.flatnonzero(has_psd)
    m2 = len(R_rows)

    Af = sp.csr_matrix((vals_s[free_mask], (rows[free_mask], cols[free_mask])), shape=(m, nf)).toarray() \
        if nf else np.zeros((m, 0))
    cf = problem.c[:nf].astype(float)

    # -- presolve free variables -------------------------------------------
    E = Af[E_rows]
    e = b_s[E_rows]
    if nf and len(E_rows):
        Ue, se, Vet = np.linalg.svd(E, full_matrices=True)
        rank_e = int(np.sum(se > 1e-10 * max(se[0], 1e-300))) if se.size else 0
        u0 = Vet[:rank_e].T @ ((Ue[:, :rank_e].T @ e) / se[:rank_e])
        res = e - E @ u0
        if np.max(np.abs(res), initial=0.0) > 1e-9 * (1 + np.max(np.abs(e), initial=0.0)):
            cert = np.zeros(m)
            cert[E_rows] = res / np.dot(res, e) * dr[E_rows]
            return _infeasible(problem, cert, 0, "contradictory equality rows on free variables")
        N = Vet[rank_e:].T
    else:
        u0 = np.zeros(nf)
        N = np.eye(nf)
    Af2 = Af[R_rows]
    B = Af2 @ N
    b2 = b_s[R_rows] - Af2 @ u0
    g = N.T @ cf
    if B.size:
        Ub, sb, Vbt = np.linalg.svd(B, full_matrices=False)
        rank_b = int(np.sum(sb > 1e-10 * max(sb[0], 1e-300))) if sb.size else 0
    else:
        Ub, sb, Vbt = np.zeros((m2, 0)), np.zeros(0), np.zeros((0, B.shape[1]))
        rank_b = 0
    Ur = Ub[:, :rank_b]
    sr = sb[:rank_b]
    Vr = Vbt[:rank_b].T
    a = Vr.T @ g
    g_perp = g - Vr @ a
    if np.linalg.norm(g_perp) > 1e-9 * (1 + np.linalg.norm(g)):
        return _unbounded(problem, 0, "objective decreases along a free direction that no constraint restricts")
    cz = a / sr if rank_b else np.zeros(0)

    # -- PSD blocks in reduced row numbering --------------------------------
    row_pos = -np.ones(m, dtype=np.int64)
    row_pos[R_rows] = np.arange(m2)
    blocks: list[_Block] = []
    for bi, n in enumerate(sizes):
        sel = (cols >= offs[bi]) & (cols < offs[bi + 1])
        r_b = row_pos[rows[sel]]
        ij = cols[sel] - offs[bi]
        rr, cc, vv = _sym_triplets(n, r_b, ij, vals_s[sel])
        A = sp.csr_matrix((vv, (rr, cc)), shape=(m2, n * n))
        csel = np.arange(offs[bi], offs[bi + 1])
        C = _sym_from_upper(n, np.arange(len(csel)), problem.c[csel].astype(float))
        rows_of, vals_of = [], []
        for r in range(m2):
            lo, hi = A.indptr[r], A.indptr[r + 1]
            rows_of.append(A.indices[lo:hi])
            vals_of.append(A.data[lo:hi])
        blocks.append(_Block(n, A, C, rows_of, vals_of))

    if m2 == 0:
        # everything fixed by the presolve; PSD blocks unconstrained (set to 0 / minimise <C,X>)
        for blk in blocks:
            if np.linalg.eigvalsh(blk.C)[0] < -tol:
                return _unbounded(problem, 0, "objective unbounded on an unconstrained PSD block")
        return _finish(problem, u0, [np.zeros((s, s)) for s in sizes], np.zeros(m), 0, dr, FEASIBLE, tol)

    # -- normalise data -------------------------------------------------------
    bscale = max(1.0, np.max(np.abs(b2), initial=0.0))
    cscale = max(1.0, np.max(np.abs(cz), initial=0.0),
                 max((np.max(np.abs(blk.C), initial=0.0) for blk in blocks), default=0.0))
    b2n = b2 / bscale
    czn = cz / cscale
    Cn = [blk.C / cscale for blk in blocks]

    def Aop(Xs):
        out = np.zeros(m2)
        for blk, X in zip(blocks, Xs):
            out += blk.A @ X.ravel()
        return out

    def ATop(y):
        return [(blk.A.T @ y).reshape(blk.n, blk.n) for blk in blocks]

    normb = 1.0 + np.linalg.norm(b2n)
    normc = 1.0 + np.sqrt(sum(np.sum(C * C) for C in Cn) + np.dot(czn, czn))

    ntot = sum(sizes)
    X = [np.eye(n) * max(1.0, np.sqrt(n)) for n in sizes]
    S = [np.eye(n) * max(1.0, np.sqrt(n)) for n in sizes]
    z = np.zeros(rank_b)
    y = np.zeros(m2)

    status = ITERATION_LIMIT
    message = ""
    history: list[dict] = []
    best = None
    stall = 0
    it = 0
    for it in range(1, max_iter + 1):
        rp = b2n - Ur @ z - Aop(X)
        rf = czn - Ur.T @ y
        ATy = ATop(y)
        Rd = [C - Sb - a_ for C, Sb, a_ in zip(Cn, S, ATy)]
        gap = sum(np.sum(Xb * Sb) for Xb, Sb in zip(X, S))
        mu = gap / ntot
        pobj = float(np.dot(czn, z) + sum(np.sum(C * Xb) for C, Xb in zip(Cn, X)))
        dobj = float(np.dot(b2n, y))
        pinf = np.linalg.norm(rp) / normb
        dinf = np.sqrt(sum(np.sum(R * R) for R in Rd) + np.dot(rf, rf)) / normc
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        history.append(dict(it=it, pinf=pinf, dinf=dinf, gap=relgap, mu=mu, pobj=pobj, dobj=dobj))
        if verbose:
            log.info("it %3d pinf %.2e dinf %.2e gap %.2e mu %.2e pobj %.6e dobj %.6e",
                     it, pinf, dinf, relgap, mu, pobj, dobj)
        # infeasibility / unboundedness: test the normalised candidate rays
        # (Farkas conditions on the reduced data) before judging progress
        if dobj > 0:
            yh = y / dobj
            viol = max(np.linalg.norm(Ur.T @ yh),
                       max(max(0.0, np.linalg.eigvalsh(a_)[0]) for a_ in ATop(yh)))
            if viol < max(tol, 1e-9) and dobj > 1.0 / max(tol, 1e-9):
                status = INFEASIBLE
                message = "dual iterates diverge along an improving ray"
                break
        if pobj < 0:
            ax = np.linalg.norm(Ur @ z + Aop(X)) / -pobj
            xneg = min(np.linalg.eigvalsh(Xb)[0] for Xb in X) if X else 0.0
            if ax < max(tol, 1e-9) and xneg >= 0 and -pobj > 1.0 / max(tol, 1e-9):
                status = UNBOUNDED
                message = "primal iterates diverge along a descent ray"
                break
        score = max(pinf, dinf, relgap)
        # an objective growing geometrically is a ray emerging, not a stall
        diverging = bool(history[:-1]) and (
            (dobj > 10.0 and dobj > 2.0 * history[-2]["dobj"])
            or (pobj < -10.0 and pobj < 2.0 * history[-2]["pobj"]))
        if best is None or score < best[0]:
            best = (score, [Xb.copy() for Xb in X], z.copy(), y.copy())
            stall = 0
        elif not diverging:
            stall += 1
        if pinf < tol and dinf < tol and relgap < tol:
            status = FEASIBLE
            break
        if stall >= 5 or mu < 1e-16:
            status = FEASIBLE if best[0] < tol else INACCURATE
            message = "progress stalled; returning best iterate"
            break

        # -- NT scaling ----------------------------------------------------
        try:
            Gs, Ws, lams = [], [], []
            for Xb, Sb in zip(X, S):
                Lx = _chol_lower(Xb)
                Ls = _chol_lower(Sb)
                Us, d, Vt = np.linalg.svd(Ls.T @ Lx)
                G = Lx @ Vt.T / np.sqrt(d)[None, :]
                Gs.append(G)
                Ws.append(G @ G.T)
                lams.append(d)
        except np.linalg.LinAlgError:
            status = INACCURATE
            message = "lost positive definiteness of iterates"
            break

        M = np.zeros((m2, m2))
        for blk, W in zip(blocks, Ws):
            _schur_add(M, blk, W)
        M = (M + M.T) / 2
        try:
            kkt = _Schur(M, Ur)
        except np.linalg.LinAlgError:
            status = INACCURATE
            message = "Schur complement factorisation failed"
            break

        def direction(Rc_list):
            # Rc in scaled space -> dX, dS, dy, dz
            H, GKG = [], []
            for G, W, lam, Rc, R in zip(Gs, Ws, lams, Rc_list, Rd):
                K = Rc / ((lam[:, None] + lam[None, :]) / 2.0)
                GKG.append(G @ K @ G.T)
                H.append(GKG[-1] - W @ R @ W)
            h = rp - Aop(H)
            dy, dz = kkt.solve(h, rf)
            ATdy = ATop(dy)
            dS = [R - a_ for R, a_ in zip(Rd, ATdy)]
            dX = [P_ - W @ dSb @ W for P_, W, dSb in zip(GKG, Ws, dS)]
            dX = [(D + D.T) / 2 for D in dX]
            dS = [(D + D.T) / 2 for D in dS]
            return dX, dS, dy, dz

        def steps(dX, dS):
            ap, ad = np.inf, np.inf
            for Xb, Sb, dXb, dSb in zip(X, S, dX, dS):
                ap = min(ap, _max_step(_chol_lower(Xb), dXb))
                ad = min(ad, _max_step(_chol_lower(Sb), dSb))
            return ap, ad

        Rc_aff = [-np.diag(lam ** 2) for lam in lams]
        dXa, dSa, dya, dza = direction(Rc_aff)
        ap, ad = steps(dXa, dSa)
        ap, ad = min(1.0, ap), min(1.0, ad)
        gap_aff = sum(np.sum((Xb + ap * dX_) * (Sb + ad * dS_)) for Xb, Sb, dX_, dS_ in zip(X, S, dXa, dSa))
        sigma = min(1.0, (gap_aff / gap) ** 3) if gap > 0 else 0.0

        Rc_cor = []
        for G, lam, dX_, dS_ in zip(Gs, lams, dXa, dSa):
            Gi = np.linalg.inv(G)
            dXt = Gi @ dX_ @ Gi.T
            dSt = G.T @ dS_ @ G
            P = dXt @ dSt
            Rc_cor.append(sigma * mu * np.eye(len(lam)) - np.diag(lam ** 2) - (P + P.T) / 2)
        dX, dS, dy, dz = direction(Rc_cor)
        ap, ad = steps(dX, dS)
        gamma = 0.9 + 0.09 * min(min(ap, 1.0), min(ad, 1.0))
        ap, ad = min(1.0, gamma * ap), min(1.0, gamma * ad)
        history[-1].update(ap=ap, ad=ad, sigma=sigma)
        X = [Xb + ap * d for Xb, d in zip(X, dX)]
        z = z + ap * dz
        S = [Sb + ad * d for Sb, d in zip(S, dS)]
        y = y + ad * dy
        if max(ap, ad) < 1e-10:
            status = INACCURATE
            message = "step length collapsed"
            break
    else:
        status = ITERATION_LIMIT
        message = f"no convergence in {max_iter} iterations"

    if status == INFEASIBLE:
        y_full = np.zeros(m)
        y_full[R_rows] = y
        if nf and len(E_rows):
            # presolved rows: multipliers cancelling the free columns of the ray
            y_full[E_rows] = np.linalg.lstsq(E.T, -(Af2.T @ y), rcond=None)[0]
        cert = y_full * dr
        cert = cert / max(np.dot(problem.b, cert), 1e-300)
        return _infeasible(problem, cert, it, message, history)
    if status == UNBOUNDED:
        return _unbounded(problem, it, message, history)
    if best is not None and (status != FEASIBLE or stall):
        _, X, z, y = best

    Xs = [Xb * bscale for Xb in X]
    w = Vr @ (z * bscale / sr) if rank_b else np.zeros(N.shape[1])
    u = u0 + N @ w
    y_full = np.zeros(m)
    y_full[R_rows] = y * cscale
    if nf and len(E_rows):
        # multipliers of the presolved rows from the free-column dual equations
        rhs_f = cf - Af2.T @ y_full[R_rows]
        y_full[E_rows] = np.linalg.lstsq(E.T, rhs_f, rcond=None)[0]
    y_full = y_full * dr
    return _finish(problem, u, Xs, y_full, it, dr, status, tol, message, history)


def _schur_add(M: np.ndarray, blk: _Block, W: np.ndarray) -> None:
    n = blk.n
    A = blk.A
    for r in range(M.shape[0]):
        idx = blk.rows_of[r]
        if not len(idx):
            continue
        a, b = np.divmod(idx, n)
        # W A_r W = sum_k v_k W[:, a_k] W[b_k, :]
        T = (W[:, a] * blk.vals_of[r][None, :]) @ W[b, :]
        M[:, r] += A @ T.ravel()


def _finish(problem, u, Xs, y, it, dr, status, tol, message="", history=None) -> ConicSolution:
    x = problem.flatten(u, Xs)
    pres = problem.residual(x)
    # dual residual in original data
    A = problem.matrix()
    aty = A.T @ y
    s_flat = problem.c - aty
    nf = problem.n_free
    dres_free = np.max(np.abs(s_flat[:nf]), initial=0.0)
    _, Smats = problem.split(np.concatenate([np.zeros(nf), s_flat[nf:]]))
    # upper-triangle coefficients count off-diagonals twice
    Smats = [(Sm + np.diag(np.diag(Sm))) / 2 for Sm in Smats]
    dres_psd = max((max(0.0, -np.linalg.eigvalsh(Sm)[0]) for Sm in Smats if Sm.size), default=0.0)
    dres = float(max(dres_free, dres_psd) / (1.0 + np.max(np.abs(problem.c), initial=0.0)))
    psd_ok = all(check_psd((Xm + Xm.T) / 2, tol * (1 + np.trace(Xm)))[0] for Xm in Xs)
    pobj = float(problem.c @ x)
    dobj = float(problem.b @ y)
    gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
    if status in (FEASIBLE, INACCURATE):
        # judge the returned iterate on unscaled data, whatever stopped the loop
        ok = pres <= tol and dres <= tol and psd_ok and gap <= GAP_FACTOR * tol
        if ok:
            status = FEASIBLE
        elif status == FEASIBLE:
            status = INACCURATE
            message = message or (f"unscaled residuals {pres:.2e}/{dres:.2e}, gap {gap:.2e} "
                                  "exceed tolerance")
    return ConicSolution(status=status, x=x, free=np.asarray(u), psd=Xs, y=y,
                         primal_residual=pres, dual_residual=dres, gap=gap, iterations=it,
                         objective=pobj, message=message, history=history or [])


def _infeasible(problem, cert, it, message, history=None) -> ConicSolution:
    nf = problem.n_free
    x = np.zeros(problem.n_cols)
    u, mats = problem.split(x)
    return ConicSolution(status=INFEASIBLE, x=x, free=u, psd=mats, y=np.zeros(problem.n_rows),
                         primal_residual=problem.residual(x), dual_residual=float("nan"),
                         gap=float("nan"), iterations=it, certificate=cert, message=message,
                         history=history or [])


def _unbounded(problem, it, message, history=None) -> ConicSolution:
    x = np.zeros(problem.n_cols)
    u, mats = problem.split(x)
    return ConicSolution(status=UNBOUNDED, x=x, free=u, psd=mats, y=np.zeros(problem.n_rows),
                         primal_residual=problem.residual(x), dual_residual=float("nan"),
                         gap=float("nan"), iterations=it, message=message, history=history or [])


def infeasibility_certificate_ok(problem: ConicProblem, y: np.ndarray, tol: float = 1e-6) -> bool:
    """Check a Farkas ray: ``b.y > 0``, ``A_f^T y = 0`` and ``-A_psd^*(y)`` PSD."""
    if y is None or np.dot(problem.b, y) <= 0:
        return False
    aty = problem.matrix().T @ y
    nf = problem.n_free
    scale = np.dot(problem.b, y)
    if np.max(np.abs(aty[:nf]), initial=0.0) > tol * scale:
        return False
    _, mats = problem.split(np.concatenate([np.zeros(nf), -aty[nf:]]))
    for Mm in mats:
        Mm = (Mm + np.diag(np.diag(Mm))) / 2
        if Mm.size and np.linalg.eigvalsh(Mm)[0] < -tol * scale:
            return False
    return True
