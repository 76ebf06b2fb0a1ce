"""Self-contained first-order conic solver.

Standard form:

    minimize    c^T x
    subject to  A x + s = b,   s in K,

with K a product of zero, nonnegative, second-order and PSD cones, ordered
exactly like that in the rows of A.  The algorithm is operator-splitting
ADMM with over-relaxation: the x-update solves the regularized normal
equations (sigma I + A^T R A) x = rhs through a cached dense Cholesky
factorization, the s-update is a Euclidean cone projection, and the scaled
dual variable y accumulates the constraint residual.  Ruiz equilibration
(uniform within each SOC/PSD block, so cone membership is preserved)
preconditions the data; the step-size matrix R is adapted from the ratio of
primal to dual residuals and triggers a refactorization when it moves far
enough.  Termination and infeasibility certificates are evaluated on the
original, unscaled data.

Complex Hermitian semidefinite constraints enter through the real embedding
H -> [[Re H, -Im H], [Im H, Re H]]; hermitian_embed / hermitian_extract and
the sparse coefficient map embed_matrix implement it.  The embedding doubles
traces and inner products, which builders account for explicitly.
"""

import time
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import SolverError

# ---------------------------------------------------------------------------
# symmetric / Hermitian vectorization


@lru_cache(maxsize=None)
def _triu_cache(n):
    return np.triu_indices(n, 1)


def svec_dim(n):
    return n * (n + 1) // 2


def svec(M):
    """Scaled vectorization of a symmetric matrix: [diag; sqrt(2) upper].

    Preserves inner products: svec(A) . svec(B) = Tr(A B).
    """
    M = np.asarray(M)
    n = M.shape[0]
    iu, ju = _triu_cache(n)
    return np.concatenate([np.diag(M), np.sqrt(2.0) * M[iu, ju]])


def smat(v):
    """Inverse of svec."""
    v = np.asarray(v, dtype=float)
    n = int((np.sqrt(8.0 * v.size + 1.0) - 1.0) / 2.0)
    if svec_dim(n) != v.size:
        raise ValueError(f"length {v.size} is not a triangular number layout")
    M = np.zeros((n, n))
    M[np.diag_indices(n)] = v[:n]
    iu, ju = _triu_cache(n)
    off = v[n:] / np.sqrt(2.0)
    M[iu, ju] = off
    M[ju, iu] = off
    return M


def hvec(H):
    """Real coordinates of a Hermitian matrix: [diag; sqrt2 Re up; sqrt2 Im up]."""
    H = np.asarray(H)
    n = H.shape[0]
    iu, ju = _triu_cache(n)
    up = H[iu, ju]
    return np.concatenate([np.real(np.diag(H)), np.sqrt(2.0) * np.real(up), np.sqrt(2.0) * np.imag(up)])


def hmat(v):
    """Inverse of hvec."""
    v = np.asarray(v, dtype=float)
    n = int(np.sqrt(v.size))
    if n * n != v.size:
        raise ValueError(f"length {v.size} is not a square count")
    H = np.zeros((n, n), dtype=complex)
    H[np.diag_indices(n)] = v[:n]
    iu, ju = _triu_cache(n)
    t = n * (n - 1) // 2
    re = v[n : n + t] / np.sqrt(2.0)
    im = v[n + t :] / np.sqrt(2.0)
    H[iu, ju] = re + 1j * im
    H[ju, iu] = re - 1j * im
    return H


def hermitian_embed(H):
    """Real 2n x 2n image [[X, -Y], [Y, X]] of H = X + jY; PSD iff H is."""
    X, Y = np.real(H), np.imag(H)
    return np.block([[X, -Y], [Y, X]])


def hermitian_extract(M):
    """Inverse of hermitian_embed up to Hermitian symmetrization."""
    n = M.shape[0] // 2
    X = 0.5 * (M[:n, :n] + M[n:, n:])
    Y = 0.5 * (M[n:, :n] - M[:n, n:])
    return 0.5 * (X + X.T) + 0.5j * (Y - Y.T)


@lru_cache(maxsize=None)
def embed_matrix(n):
    """Sparse map from hvec(H) (length n^2) to svec(embed(H)) (length n(2n+1)).

    Satisfies E^T E = 2 I, reflecting the doubling of inner products under
    the embedding.
    """
    m = 2 * n
    pos = np.zeros((m, m), dtype=int)
    pos[np.diag_indices(m)] = np.arange(m)
    iu, ju = _triu_cache(m)
    pos[iu, ju] = m + np.arange(iu.size)
    t = n * (n - 1) // 2

    rows, cols, vals = [], [], []
    # diagonal of H appears on both diagonal blocks
    for d in range(n):
        rows += [pos[d, d], pos[n + d, n + d]]
        cols += [d, d]
        vals += [1.0, 1.0]
    hu, hju = _triu_cache(n)
    for t_idx in range(t):
        i, j = int(hu[t_idx]), int(hju[t_idx])
        # sqrt2 Re H_ij drives X_ij in both diagonal blocks
        rows += [pos[i, j], pos[n + i, n + j]]
        cols += [n + t_idx, n + t_idx]
        vals += [1.0, 1.0]
        # sqrt2 Im H_ij drives -Y_ij (top-right) and +Y_ij (bottom-left upper part)
        rows += [pos[i, n + j], pos[j, n + i]]
        cols += [n + t + t_idx, n + t + t_idx]
        vals += [-1.0, 1.0]
    return sp.csr_matrix(
        (vals, (rows, cols)), shape=(svec_dim(m), n * n)
    )


# ---------------------------------------------------------------------------
# cones


@dataclass(frozen=True)
class Cones:
    """Cone block sizes in row order: zero, nonnegative, SOC dims, PSD sides."""

    zero: int = 0
    nonneg: int = 0
    soc: tuple = ()
    psd: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "soc", tuple(int(d) for d in self.soc))
        object.__setattr__(self, "psd", tuple(int(q) for q in self.psd))
        if self.zero < 0 or self.nonneg < 0:
            raise ValueError("cone dimensions must be nonnegative")
        if any(d < 1 for d in self.soc) or any(q < 1 for q in self.psd):
            raise ValueError("SOC dims and PSD sides must be positive")

    @property
    def dim(self):
        return (
            self.zero
            + self.nonneg
            + sum(self.soc)
            + sum(svec_dim(q) for q in self.psd)
        )


def project_soc(v):
    """Euclidean projection onto the second-order cone {(t, z): ||z|| <= t}."""
    v = np.asarray(v, dtype=float)
    t, z = v[0], v[1:]
    nz = np.linalg.norm(z)
    if nz <= t:
        return v.copy()
    if nz <= -t:
        return np.zeros_like(v)
    coef = 0.5 * (1.0 + t / nz)
    out = np.empty_like(v)
    out[0] = coef * nz
    out[1:] = coef * z
    return out


def project_psd(M, sym_tol=1e-9):
    """Euclidean projection of a symmetric matrix onto the PSD cone."""
    M = np.asarray(M, dtype=float)
    dev = np.max(np.abs(M - M.T)) if M.size else 0.0
    if dev > sym_tol * max(1.0, float(np.max(np.abs(M))) if M.size else 1.0):
        raise ValueError(f"input is not symmetric (max asymmetry {dev:.3e})")
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    wc = np.clip(w, 0.0, None)
    return (V * wc) @ V.T


class _ConeWork:
    """Precomputed index layout for fast repeated projections."""

    def __init__(self, cones):
        self.cones = cones
        off = cones.zero
        self.nonneg = slice(off, off + cones.nonneg)
        off += cones.nonneg
        self.soc = []
        for d in cones.soc:
            self.soc.append(slice(off, off + d))
            off += d
        self.psd = []
        for q in cones.psd:
            d = svec_dim(q)
            self.psd.append((slice(off, off + d), q))
            off += d
        self.dim = off

    def project(self, v, out=None):
        out = v.copy() if out is None else out
        out[: self.cones.zero] = 0.0
        np.clip(v[self.nonneg], 0.0, None, out=out[self.nonneg])
        for sl in self.soc:
            out[sl] = project_soc(v[sl])
        for sl, q in self.psd:
            M = smat(v[sl])
            w, V = np.linalg.eigh(M)
            np.clip(w, 0.0, None, out=w)
            out[sl] = svec((V * w) @ V.T)
        return out

    def project_dual(self, v):
        """Projection onto K^*: zero rows become free, the rest self-dual."""
        out = self.project(v)
        out[: self.cones.zero] = v[: self.cones.zero]
        return out

    def dist(self, v):
        return float(np.linalg.norm(v - self.project(v)))


# ---------------------------------------------------------------------------
# problem / solution containers


@dataclass
class ConicProblem:
    c: np.ndarray
    A: object  # scipy sparse or dense array, shape (m, n)
    b: np.ndarray
    cones: Cones

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.A = sp.csc_matrix(self.A).astype(float)
        m, n = self.A.shape
        if self.c.size != n or self.b.size != m:
            raise ValueError(f"shape mismatch: A is {m}x{n}, |c|={self.c.size}, |b|={self.b.size}")
        if self.cones.dim != m:
            raise ValueError(f"cone dims sum to {self.cones.dim}, A has {m} rows")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.b))):
            raise ValueError("c and b must be finite")
        if not np.all(np.isfinite(self.A.data)):
            raise ValueError("A must be finite")

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def m(self):
        return self.A.shape[0]

    def dual(self):
        """The dual written back in primal standard form (min b^T y).

        max -b^T y s.t. A^T y + c = 0, y in K^* becomes: variables y, zero
        cone rows A^T y = -c, self-dual cone rows -y_block + s = 0.  The
        optimal value of the returned problem is minus the dual optimum, so
        weak duality reads -(value of dual()) <= value of self.
        """
        m, n = self.m, self.n
        f = self.cones.zero
        eye_rest = sp.eye(m, format="csr")[f:]
        A_d = sp.vstack([self.A.T, -eye_rest], format="csc")
        b_d = np.concatenate([-self.c, np.zeros(m - f)])
        cones_d = Cones(zero=n, nonneg=self.cones.nonneg, soc=self.cones.soc, psd=self.cones.psd)
        return ConicProblem(c=self.b.copy(), A=A_d, b=b_d, cones=cones_d)

    def dump(self, path):
        """Write the problem as documented plain text.

        Line 1: 'quantbeam-conic 1'.  Line 2: 'n m'.  Line 3: 'zero nonneg'.
        Line 4: 'soc d1 d2 ...' (possibly bare).  Line 5: 'psd q1 q2 ...'.
        Then n entries of c, m entries of b, and m dense rows of A, all
        whitespace-separated decimal text.
        """
        with open(path, "w") as fh:
            fh.write("quantbeam-conic 1\n")
            fh.write(f"{self.n} {self.m}\n")
            fh.write(f"{self.cones.zero} {self.cones.nonneg}\n")
            fh.write(" ".join(["soc"] + [str(d) for d in self.cones.soc]) + "\n")
            fh.write(" ".join(["psd"] + [str(q) for q in self.cones.psd]) + "\n")
            np.savetxt(fh, self.c[None], fmt="%.17g")
            np.savetxt(fh, self.b[None], fmt="%.17g")
            np.savetxt(fh, self.A.toarray(), fmt="%.17g")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            header = fh.readline().split()
            if header[:1] != ["quantbeam-conic"]:
                raise ValueError("not a conic problem dump")
            n, m = (int(t) for t in fh.readline().split())
            zero, nonneg = (int(t) for t in fh.readline().split())
            soc = tuple(int(t) for t in fh.readline().split()[1:])
            psd = tuple(int(t) for t in fh.readline().split()[1:])
            nums = np.array(fh.read().split(), dtype=float)
        if nums.size != n + m + m * n:
            raise ValueError(f"dump holds {nums.size} numbers, expected {n + m + m * n}")
        c = nums[:n]
        b = nums[n : n + m]
        A = nums[n + m :].reshape(m, n)
        return cls(c=c, A=A, b=b, cones=Cones(zero=zero, nonneg=nonneg, soc=soc, psd=psd))


@dataclass
class ConicSolution:
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    status: str
    pobj: float
    dobj: float
    res_primal: float
    res_dual: float
    gap: float
    iterations: int
    solve_time: float
    rho: float = 0.1
    history: list = field(default_factory=list)


@dataclass
class ConicSettings:
    eps_abs: float = 1e-8
    eps_rel: float = 1e-8
    eps_infeas: float = 1e-9
    max_iters: int = 100000
    check_interval: int = 25
    rho: float = 0.1
    sigma: float = 1e-6
    alpha_relax: float = 1.6
    adaptive_rho: bool = True
    rho_min: float = 1e-6
    rho_max: float = 1e6
    equil_iters: int = 10
    record_history: bool = False


def _block_row_groups(cones):
    """Row index groups that must share one equilibration scale."""
    groups = []
    off = 0
    for _ in range(cones.zero):
        groups.append(np.array([off]))
        off += 1
    for _ in range(cones.nonneg):
        groups.append(np.array([off]))
        off += 1
    for d in cones.soc:
        groups.append(np.arange(off, off + d))
        off += d
    for q in cones.psd:
        d = svec_dim(q)
        groups.append(np.arange(off, off + d))
        off += d
    return groups


def _equilibrate(A, cones, iters):
    """Ruiz scaling with cone-block-uniform row factors.  Returns (d, e)."""
    m, n = A.shape
    d = np.ones(m)
    e = np.ones(n)
    groups = _block_row_groups(cones)
    As = A.copy()
    for _ in range(iters):
        Aa = abs(As)
        row_inf = np.asarray(Aa.max(axis=1).todense()).ravel()
        for g in groups:
            val = row_inf[g].max()
            row_inf[g] = val
        col_inf = np.asarray(Aa.max(axis=0).todense()).ravel()
        row_inf[row_inf == 0] = 1.0
        col_inf[col_inf == 0] = 1.0
        dr = 1.0 / np.sqrt(row_inf)
        dc = 1.0 / np.sqrt(col_inf)
        d *= dr
        e *= dc
        As = sp.diags(dr) @ As @ sp.diags(dc)
    return d, e


def solve(problem, settings=None, warm=None):
    """Run the splitting iteration; returns a ConicSolution.

    warm may be a ConicSolution or an (x, y, s) triple in original units.
    status 'optimal' guarantees primal/dual residuals and gap within the
    eps_abs/eps_rel mix on the original data.
    """
    st = settings or ConicSettings()
    t0 = time.perf_counter()
    A0 = problem.A.tocsr()
    b0, c0 = problem.b, problem.c
    m, n = A0.shape
    work = _ConeWork(problem.cones)

    d, e = _equilibrate(A0.tocsc(), problem.cones, st.equil_iters)
    As = sp.diags(d) @ A0 @ sp.diags(e)
    As_csr = As.tocsr()
    AsT = As.T.tocsr()
    bs = d * b0
    cs = e * c0

    # constraint stiffness: equality rows get a much larger step weight
    r_weight = np.ones(m)
    r_weight[: problem.cones.zero] = 1e3
    rho = st.rho
    # a warm solution carries its adapted penalty; restarting from the
    # default would throw that tuning away and re-converge slowly
    if isinstance(warm, ConicSolution) and np.isfinite(warm.rho):
        rho = float(np.clip(warm.rho, st.rho_min, st.rho_max))

    norm_b0 = np.linalg.norm(b0)
    norm_c0 = np.linalg.norm(c0)

    def factor(rho_val):
        R = rho_val * r_weight
        P = (AsT @ sp.diags(R) @ As_csr).toarray()
        P[np.diag_indices(n)] += st.sigma
        return scipy.linalg.cho_factor(P, lower=True, check_finite=False), R

    chol, R = factor(rho)

    x = np.zeros(n)
    y = np.zeros(m)
    s = np.zeros(m)
    if warm is not None:
        wx, wy, ws = (warm.x, warm.y, warm.s) if isinstance(warm, ConicSolution) else warm
        x = np.asarray(wx, dtype=float) / e
        y = np.asarray(wy, dtype=float) / d
        s = np.asarray(ws, dtype=float) * d

    x_chk = e * x
    y_chk = d * y
    history = []
    status = "max_iters"
    res_p = res_d = gap = np.inf
    pobj = dobj = np.nan
    it = 0

    for it in range(1, st.max_iters + 1):
        rhs = st.sigma * x - cs - AsT @ (y + R * (s - bs))
        x = scipy.linalg.cho_solve(chol, rhs, check_finite=False)
        z = As_csr @ x
        zbar = st.alpha_relax * z + (1.0 - st.alpha_relax) * (bs - s)
        w = bs - zbar - y / R
        s = work.project(w)
        y = y + R * (zbar + s - bs)

        if it % st.check_interval and it != st.max_iters:
            continue

        # all residual tests on original data
        xo = e * x
        so = s / d
        yo = d * y
        Ax = A0 @ xo
        ATy = A0.T @ yo
        res_p = float(np.linalg.norm(Ax + so - b0))
        res_d = float(np.linalg.norm(ATy + c0))
        pobj = float(c0 @ xo)
        dobj = float(-b0 @ yo)
        gap = abs(pobj - dobj)
        if st.record_history:
            history.append((it, res_p, res_d, gap, rho))

        ok_p = res_p <= st.eps_abs + st.eps_rel * norm_b0
        ok_d = res_d <= st.eps_abs + st.eps_rel * norm_c0
        ok_g = gap <= st.eps_abs + st.eps_rel * (abs(pobj) + abs(dobj))
        if ok_p and ok_d and ok_g:
            status = "optimal"
            break

        if it >= 100:
            dy = yo - y_chk
            ny = np.linalg.norm(dy)
            if ny > 1e-12:
                yhat = work.project_dual(dy / ny)
                nyh = np.linalg.norm(yhat)
                if nyh > 1e-3:
                    yhat = yhat / nyh
                    if (
                        b0 @ yhat < -st.eps_infeas
                        and np.linalg.norm(A0.T @ yhat) <= st.eps_infeas * max(1.0, norm_b0)
                    ):
                        status = "infeasible"
                        y = yhat / d
                        break
            dx = xo - x_chk
            nx = np.linalg.norm(dx)
            if nx > 1e-12:
                xhat = dx / nx
                if (
                    c0 @ xhat < -st.eps_infeas
                    and work.dist(-A0 @ xhat) <= st.eps_infeas * max(1.0, norm_c0)
                ):
                    status = "unbounded"
                    break
            x_chk, y_chk = xo, yo

        if st.adaptive_rho and it % (2 * st.check_interval) == 0:
            sc_p = max(np.linalg.norm(Ax), np.linalg.norm(so), norm_b0, 1e-10)
            sc_d = max(np.linalg.norm(ATy), norm_c0, 1e-10)
            ratio = np.sqrt((res_p / sc_p) / max(res_d / sc_d, 1e-16))
            new_rho = float(np.clip(rho * ratio, st.rho_min, st.rho_max))
            if new_rho > 5.0 * rho or new_rho < rho / 5.0:
                rho = new_rho
                chol, R = factor(rho)

    xo = e * x
    so = s / d
    yo = d * y
    if status == "max_iters":
        res_p = float(np.linalg.norm(A0 @ xo + so - b0))
        res_d = float(np.linalg.norm(A0.T @ yo + c0))
        pobj = float(c0 @ xo)
        dobj = float(-b0 @ yo)
        gap = abs(pobj - dobj)

    return ConicSolution(
        x=xo,
        y=yo,
        s=so,
        status=status,
        pobj=pobj,
        dobj=dobj,
        res_primal=res_p,
        res_dual=res_d,
        gap=gap,
        iterations=it,
        solve_time=time.perf_counter() - t0,
        rho=rho,
        history=history,
    )
