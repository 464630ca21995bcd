"""Sparse symmetric eigensolver, exact eigenvalue counting and constrained
Rayleigh-quotient minimization.

The eigensolver is a thick-restart Lanczos iteration with full (twice
repeated) reorthogonalization in the B inner product. For large operators it
runs on the shift-inverted pencil (A - sigma B)^{-1} B with sigma placed below
the spectrum; the placement is certified by the factorization itself, which
must be positive definite. Counting uses the inertia of a symmetric
factorization (Sylvester's law), never an iterative solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, DomainError

DEFAULT_TOL = 1e-8
DENSE_LIMIT = 3000


@dataclass
class SpectralResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    iterations: int
    seed: int
    mode: str
    shift: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def ground(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def ground_vector(self) -> np.ndarray:
        return self.eigenvectors[:, 0]


def as_matrix(op):
    """Accept a DiscreteOperator, a sparse matrix or a dense array."""
    mat = getattr(op, "matrix", op)
    if sp.issparse(mat):
        return mat.tocsr()
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DomainError("operator must be a square matrix")
    return mat


def _norm1(A) -> float:
    if sp.issparse(A):
        return float(abs(A).sum(axis=0).max())
    return float(np.abs(A).sum(axis=0).max())


def gershgorin_lower(A) -> float:
    if sp.issparse(A):
        Ac = A.tocsr()
        d = Ac.diagonal()
        off = np.asarray(abs(Ac).sum(axis=1)).ravel() - np.abs(d)
    else:
        d = np.diag(A)
        off = np.abs(A).sum(axis=1) - np.abs(d)
    return float(np.min(d - off))


# ------------------------------------------------------------------ factoring

def _splu_symmetric(M):
    return spla.splu(
        sp.csc_matrix(M),
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options={"SymmetricMode": True},
    )


def _symmetric_inertia_sparse(M):
    """(n_neg, n_zero, factor) from a diagonally pivoted LU, or None when the
    factorization left the diagonal (the sign count would be meaningless)."""
    try:
        lu = _splu_symmetric(M)
    except RuntimeError:
        return None
    if not np.array_equal(lu.perm_r, lu.perm_c):
        return None
    piv = lu.U.diagonal()
    if not np.all(np.isfinite(piv)):
        return None
    return int(np.sum(piv < 0)), int(np.sum(piv == 0)), lu


def _ldl_negative_count(M: np.ndarray):
    _, d, _ = sla.ldl(M, lower=True, hermitian=True)
    n = d.shape[0]
    neg = zero = 0
    i = 0
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0.0:
            blk = d[i:i + 2, i:i + 2]
            ev = np.linalg.eigvalsh(blk)
            neg += int(np.sum(ev < 0))
            zero += int(np.sum(ev == 0))
            i += 2
        else:
            neg += int(d[i, i] < 0)
            zero += int(d[i, i] == 0)
            i += 1
    return neg, zero


def _shifted(A, z, B=None):
    if B is None:
        if sp.issparse(A):
            return (A - z * sp.identity(A.shape[0], format="csr")).tocsc()
        return A - z * np.eye(A.shape[0])
    if sp.issparse(A) or sp.issparse(B):
        return (sp.csr_matrix(A) - z * sp.csr_matrix(B)).tocsc()
    return A - z * B


def counting_below(op, z: float, B=None, retries: int = 3) -> int:
    """Exact number of eigenvalues of the pencil (A, B) strictly below z."""
    A = as_matrix(op)
    if B is not None:
        B = as_matrix(B)
    n = A.shape[0]
    scale = max(1.0, _norm1(A))
    shift = z
    for attempt in range(retries + 1):
        M = _shifted(A, shift, B)
        if n <= DENSE_LIMIT:
            dense = M.toarray() if sp.issparse(M) else np.asarray(M)
            neg, zero = _ldl_negative_count(dense)
            if zero == 0:
                return neg
        else:
            res = _symmetric_inertia_sparse(M)
            if res is not None and res[1] == 0:
                return res[0]
        # singular or unstable at this shift: nudge slightly downwards
        shift = z - (10.0 ** attempt) * 1e-12 * scale
    raise ConvergenceError(f"symmetric factorization broke down near z={z}")


# ------------------------------------------------------------------- lanczos

class _Pencil:
    """Matrix-vector products and inner products for the pencil (A, B)."""

    def __init__(self, A, B=None):
        self.A = A
        self.B = B
        self.n = A.shape[0]

    def bmul(self, x):
        return x if self.B is None else self.B @ x

    def residual(self, lam, x):
        return self.A @ x - lam * self.bmul(x)


def _start_vector(n, seed):
    return np.random.default_rng(seed).standard_normal(n)


def _thick_restart(apply, bmul, v0, k, m, maxiter, check, locked=None, strict=True):
    """Largest k eigenpairs of an operator self-adjoint in <.,.>_B.

    check(theta, ritz_vectors, estimates) -> bool decides convergence.
    locked = (Y, BY) deflates already converged vectors. With strict=False
    the last Ritz pairs are returned instead of raising after maxiter.
    Returns (theta, X, iterations).
    """
    n = v0.shape[0]
    if locked is not None and locked[0].shape[1] > 0:
        Y, BY = locked
        base_apply = apply

        def apply(x):
            w = base_apply(x)
            for _ in range(2):
                w = w - Y @ (BY.T @ w)
            return w

        for _ in range(2):
            v0 = v0 - Y @ (BY.T @ v0)
    use_b = bmul is not None
    V = np.zeros((n, m + 1))
    BV = np.zeros((n, m + 1)) if use_b else V
    H = np.zeros((m + 1, m))
    bw = bmul(v0) if use_b else v0
    nrm = np.sqrt(max(v0 @ bw, 0.0))
    if nrm == 0.0:
        raise DomainError("start vector is zero in the B norm")
    V[:, 0] = v0 / nrm
    if use_b:
        BV[:, 0] = bw / nrm
    p = 0
    rng = np.random.default_rng(12345)
    total = 0
    theta = X = None
    for restart in range(maxiter):
        for j in range(p, m):
            w = apply(V[:, j])
            total += 1
            coeff = BV[:, : j + 1].T @ w
            w = w - V[:, : j + 1] @ coeff
            c2 = BV[:, : j + 1].T @ w
            w = w - V[:, : j + 1] @ c2
            coeff = coeff + c2
            H[: j + 1, j] = coeff
            bw = bmul(w) if use_b else w
            beta = np.sqrt(max(w @ bw, 0.0))
            scale = max(1e-300, np.abs(coeff).max())
            if beta <= 1e-12 * scale:
                # invariant subspace found; continue with a fresh direction
                w = apply(rng.standard_normal(n))
                for _ in range(2):
                    w = w - V[:, : j + 1] @ (BV[:, : j + 1].T @ w)
                bw = bmul(w) if use_b else w
                nb = np.sqrt(max(w @ bw, 0.0))
                H[j + 1, j] = 0.0
                V[:, j + 1] = w / nb
                if use_b:
                    BV[:, j + 1] = bw / nb
            else:
                H[j + 1, j] = beta
                V[:, j + 1] = w / beta
                if use_b:
                    BV[:, j + 1] = bw / beta
        Hm = 0.5 * (H[:m, :m] + H[:m, :m].T)
        vals, Y = np.linalg.eigh(Hm)
        order = np.argsort(vals)[::-1]
        vals, Y = vals[order], Y[:, order]
        est = np.abs(H[m, m - 1] * Y[m - 1, :])
        theta = vals[:k]
        X = V[:, :m] @ Y[:, :k]
        if check(theta, X, est[:k]):
            return theta, X, total
        keep = min(m - 1, max(k + (m - k) // 2, k + 1))
        Vk = V[:, :m] @ Y[:, :keep]
        bcoup = H[m, m - 1] * Y[m - 1, :keep]
        V[:, keep] = V[:, m]
        V[:, :keep] = Vk
        if use_b:
            BVk = BV[:, :m] @ Y[:, :keep]
            BV[:, keep] = BV[:, m]
            BV[:, :keep] = BVk
        H[:] = 0.0
        H[:keep, :keep] = np.diag(vals[:keep])
        H[keep, :keep] = bcoup
        p = keep
    if not strict:
        return theta, X, total
    raise ConvergenceError("Lanczos iteration did not converge", best_residual=float(est[:k].max()))


def _true_residuals(pencil, lam, X, normA):
    res = np.empty(len(lam))
    for i, l in enumerate(lam):
        x = X[:, i]
        nx = np.sqrt(max(x @ pencil.bmul(x), 1e-300))
        res[i] = np.linalg.norm(pencil.residual(l, x)) / (nx * normA)
    return res


def _b_normalize(pencil, X):
    for i in range(X.shape[1]):
        x = X[:, i]
        X[:, i] = x / np.sqrt(x @ pencil.bmul(x))
    return X


def _sign_fix(X):
    for i in range(X.shape[1]):
        j = int(np.argmax(np.abs(X[:, i])))
        if X[j, i] < 0:
            X[:, i] = -X[:, i]
    return X


def _factor_spd(A, sigma, B):
    """Factor A - sigma B and confirm it is positive definite."""
    M = _shifted(A, sigma, B)
    if not sp.issparse(M):
        try:
            c = sla.cho_factor(M)
        except np.linalg.LinAlgError:
            return None
        return lambda b: sla.cho_solve(c, b)
    res = _symmetric_inertia_sparse(M)
    if res is None:
        return None
    neg, zero, lu = res
    if neg or zero:
        return None
    return lu.solve


def _spd_shift(A, B, start):
    """Walk the shift downwards until A - sigma B is positive definite."""
    scale = max(1.0, _norm1(A))
    sigma = start
    step = max(1e-3 * scale, abs(start) * 0.5, 1.0)
    for _ in range(80):
        solve = _factor_spd(A, sigma, B)
        if solve is not None:
            return sigma, solve
        sigma -= step
        step *= 2.0
    raise ConvergenceError("could not place a shift below the spectrum")


def _krylov_dim(k, n):
    return int(min(n, max(2 * k + 12, 24)))


def _lowest_direct(pencil, k, tol, seed, maxiter, normA):
    A, n = pencil.A, pencil.n
    if pencil.B is None:
        apply = lambda x: -(A @ x)
        bmul = None
    else:
        Bsolve = spla.factorized(sp.csc_matrix(pencil.B)) if sp.issparse(pencil.B) else (
            lambda b, c=sla.cho_factor(pencil.B): sla.cho_solve(c, b))
        apply = lambda x: -Bsolve(A @ x)
        bmul = pencil.bmul
    m = _krylov_dim(k, n)
    if m >= n:
        return None

    def check(theta, X, est):
        if np.all(est <= 0.1 * tol * normA):
            return np.all(_true_residuals(pencil, -theta, X, normA) <= tol)
        return False

    theta, X, its = _thick_restart(apply, bmul, _start_vector(n, seed), k, m, maxiter, check)
    return -theta, X, its


def _si_operator(pencil, solve):
    B = pencil.B
    apply = (lambda x: solve(x)) if B is None else (lambda x: solve(B @ x))
    bmul = None if B is None else pencil.bmul
    return apply, bmul


def _rough_values(pencil, k, seed, sigma, solve, restarts=15):
    """Ritz estimates of the k lowest eigenvalues; (values, stagnated)."""
    apply, bmul = _si_operator(pencil, solve)
    m = _krylov_dim(k, pencil.n)
    prev = {}

    def check(theta, X, est):
        old = prev.get("theta")
        prev["theta"] = theta.copy()
        if old is None:
            return False
        prev["ok"] = bool(np.all(np.abs(theta - old) <= 1e-6 * np.abs(theta)))
        return prev["ok"]

    v0 = apply(_start_vector(pencil.n, seed))
    theta, _, _ = _thick_restart(apply, bmul, v0, k, m, restarts, check, strict=False)
    return sigma + 1.0 / theta, prev.get("ok", False)


def _place_shift(pencil, k, seed, normA, sigma, solve, stages=8):
    """Move an admissible shift up towards the bottom of the spectrum.

    Each candidate is accepted only if A - sigma B factors as positive
    definite, so the shift never crosses an eigenvalue.
    """
    A, B, n = pencil.A, pencil.B, pencil.n
    kk = min(k + 1, n - 1)
    for _ in range(stages):
        vals, settled = _rough_values(pencil, kk, seed, sigma, solve)
        lam1 = vals[0]
        spread = vals[-1] - vals[0] if kk > 1 else lam1 - sigma
        spread = max(spread, 1e-10 * (abs(lam1) + normA * 1e-6))
        cand = lam1 - 0.25 * spread
        found = None
        for _ in range(60):
            if cand <= sigma:
                break
            s = _factor_spd(A, cand, B)
            if s is not None:
                found = (cand, s)
                break
            cand = sigma + 0.5 * (cand - sigma)
        if found is None:
            break
        moved = found[0] - sigma
        sigma, solve = found
        if settled or moved <= 1e-3 * (lam1 - sigma + moved):
            break
    return sigma, solve


def _lowest_shift_invert(pencil, k, tol, seed, maxiter, normA, sigma, solve, locked=None):
    A, n = pencil.A, pencil.n
    apply, bmul = _si_operator(pencil, solve)
    m = _krylov_dim(k, n)
    normS = _norm1(_shifted(A, sigma, pencil.B))

    def check(theta, X, est):
        lam_est = est * normS / np.maximum(theta, 1e-300) ** 2 / max(normA, 1e-300)
        if np.all(lam_est <= tol):
            lam = sigma + 1.0 / theta
            return np.all(_true_residuals(pencil, lam, X, normA) <= tol)
        return False

    v0 = apply(_start_vector(n, seed))
    theta, X, its = _thick_restart(apply, bmul, v0, k, m, maxiter, check, locked=locked)
    return sigma + 1.0 / theta, X, its


def _lowest_verified(pencil, k, tol, seed, maxiter, normA, sigma, solve):
    """Shift-invert solve; for k > 1 the inertia below the k-th value is
    checked so that a missed copy of a repeated eigenvalue gets recovered by
    a deflated rerun."""
    vals, X, its = _lowest_shift_invert(pencil, k, tol, seed, maxiter, normA, sigma, solve)
    if k == 1:
        return vals, X, its
    for attempt in range(k):
        order = np.argsort(vals)
        vals, X = vals[order][:k], X[:, order][:, :k]
        z = vals[-1] - 1e-7 * (abs(vals[-1]) + (vals[-1] - vals[0]))
        below = int(np.sum(vals < z))
        true = counting_below(pencil.A, z, B=pencil.B)
        if true <= below:
            break
        Y = _b_normalize(pencil, X.copy())
        BY = Y if pencil.B is None else pencil.B @ Y
        more, Xm, itm = _lowest_shift_invert(pencil, true - below, tol, seed + attempt + 1, maxiter,
                                             normA, sigma, solve, locked=(Y, BY))
        its += itm
        vals = np.concatenate([vals, more])
        X = np.column_stack([X, Xm])
    order = np.argsort(vals)
    return vals[order][:k], X[:, order][:, :k], its


def _dense_solve(pencil, k):
    A = pencil.A.toarray() if sp.issparse(pencil.A) else pencil.A
    if pencil.B is None:
        vals, vecs = sla.eigh(A, subset_by_index=[0, k - 1])
    else:
        B = pencil.B.toarray() if sp.issparse(pencil.B) else pencil.B
        vals, vecs = sla.eigh(A, B, subset_by_index=[0, k - 1])
    return vals, vecs


def lowest_eigenpairs(op, k: int = 1, tol: float = DEFAULT_TOL, B=None, mode: str = "auto",
                      seed: int = 0, maxiter: int = 500, shift: float | None = None) -> SpectralResult:
    """k smallest eigenpairs of the symmetric pencil (A, B).

    mode: 'shift_invert' (default for large problems), 'direct' (plain
    Lanczos on A or B^{-1}A) or 'dense' (LAPACK, small problems / oracles).
    Residuals are ||A x - lam B x|| / (||A||_1 ||x||_B).
    """
    A = as_matrix(op)
    if B is not None:
        B = as_matrix(B)
    n = A.shape[0]
    if not 1 <= k < n:
        raise DomainError(f"need 1 <= k < n, got k={k}, n={n}")
    pencil = _Pencil(A, B)
    normA = max(_norm1(A), 1e-300)
    if mode == "auto":
        mode = "dense" if n <= 400 else "shift_invert"
    sigma = None
    if mode == "dense":
        vals, X = _dense_solve(pencil, k)
        its = 0
    elif mode == "direct":
        out = _lowest_direct(pencil, k, tol, seed, maxiter, normA)
        if out is None:
            vals, X = _dense_solve(pencil, k)
            its = 0
        else:
            vals, X, its = out
    elif mode == "shift_invert":
        if shift is not None:
            solve = _factor_spd(A, shift, B)
            if solve is None:
                raise DomainError(f"shift {shift} is not below the spectrum")
            sigma = shift
        else:
            start = gershgorin_lower(A) if B is None else -max(1.0, normA)
            start -= 1e-6 * normA
            sigma, solve = _spd_shift(A, B, start)
            sigma, solve = _place_shift(pencil, k, seed, normA, sigma, solve)
        vals, X, its = _lowest_verified(pencil, k, tol, seed, maxiter, normA, sigma, solve)
    else:
        raise DomainError(f"unknown eigensolver mode {mode!r}")
    order = np.argsort(vals)
    vals = np.asarray(vals)[order]
    X = _sign_fix(_b_normalize(pencil, np.array(X[:, order])))
    res = _true_residuals(pencil, vals, X, normA)
    if mode != "dense" and np.any(res > tol):
        raise ConvergenceError("eigenpairs above residual tolerance", best_residual=float(res.max()))
    return SpectralResult(vals, X, res, its, seed, mode, sigma)


def ground_state(op, B=None, tol: float = DEFAULT_TOL, seed: int = 0, mode: str = "auto"):
    r = lowest_eigenpairs(op, 1, tol=tol, B=B, seed=seed, mode=mode)
    return r.ground, r.ground_vector


# --------------------------------------------------------------- constraints

class ComplementProjector:
    """Orthogonal projector onto the complement of span(U).

    With B given, orthogonality is taken in <x, y>_B = x^T B y.
    """

    def __init__(self, vectors, B=None):
        U = np.asarray(vectors, dtype=float)
        if U.ndim == 1:
            U = U[:, None]
        self.U = U
        self.B = None if B is None else as_matrix(B)
        BU = U if self.B is None else self.B @ U
        self.constraint = BU
        self._gram = np.linalg.inv(U.T @ BU)

    @property
    def n(self):
        return self.U.shape[0]

    def __matmul__(self, x):
        return x - self.U @ (self._gram @ (self.constraint.T @ x))


def _apply_projector(P, x):
    return P @ x


def _check_projector(P, n, seed=0):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(n), rng.standard_normal(n)
    px = _apply_projector(P, x)
    if np.linalg.norm(_apply_projector(P, px) - px) > 1e-10 * max(1.0, np.linalg.norm(x)):
        raise DomainError("constraint projector is not idempotent")
    if isinstance(P, ComplementProjector):
        return
    if abs(px @ y - x @ _apply_projector(P, y)) > 1e-10 * np.linalg.norm(x) * np.linalg.norm(y):
        raise DomainError("constraint projector is not symmetric")


def constrained_ground(op, projector, tol: float = DEFAULT_TOL, B=None, seed: int = 0,
                       maxiter: int = 500):
    """Minimum of x^T A x / x^T B x over the range of the projector.

    A ComplementProjector uses a bordered shift-invert solve (exact constraint
    C^T x = 0); any other symmetric idempotent matrix falls back to direct
    Lanczos on P A P restricted to range(P).
    Returns (value, vector).
    """
    A = as_matrix(op)
    if B is not None:
        B = as_matrix(B)
    n = A.shape[0]
    if isinstance(projector, ComplementProjector):
        if (projector.B is None) != (B is None):
            raise DomainError("projector metric must match the pencil metric")
        _check_projector(projector, n, seed)
        return _constrained_bordered(A, B, projector.constraint, tol, seed, maxiter)
    if B is not None:
        raise DomainError("general projectors are supported only for B = identity")
    P = as_matrix(projector)
    _check_projector(P, n, seed)
    normA = max(_norm1(A), 1e-300)

    def apply(x):
        return -(P @ (A @ (P @ x)))

    v0 = P @ _start_vector(n, seed)
    m = _krylov_dim(1, n)
    pencil = _Pencil(A)
    if m >= n - 1:
        dense = P @ (A.toarray() if sp.issparse(A) else A) @ P
        dense = 0.5 * (dense + dense.T)
        rank_basis = sla.orth(P.toarray() if sp.issparse(P) else np.asarray(P))
        small = rank_basis.T @ dense @ rank_basis
        vals, vecs = np.linalg.eigh(small)
        x = rank_basis @ vecs[:, 0]
        return float(vals[0]), _sign_fix(x[:, None])[:, 0]

    def check(theta, X, est):
        return np.all(est <= 0.1 * tol * normA) and np.all(
            np.linalg.norm(P @ pencil.residual(-theta[0], X[:, 0])) / (normA * np.linalg.norm(X[:, 0])) <= tol)

    theta, X, _ = _thick_restart(apply, None, v0, 1, m, maxiter, check)
    x = X[:, 0] / np.linalg.norm(X[:, 0])
    return float(-theta[0]), _sign_fix(x[:, None])[:, 0]


def _constrained_bordered(A, B, C, tol, seed, maxiter):
    n = A.shape[0]
    pencil = _Pencil(A, B)
    normA = max(_norm1(A), 1e-300)
    start = gershgorin_lower(A) if B is None else -max(1.0, normA)
    sigma, solve = _spd_shift(A, B, start - 1e-6 * normA)
    # rough position of the unconstrained ground; the constrained minimum
    # lies above it, so a shift just below it stays admissible
    rough = lowest_eigenpairs(A, 1, tol=1e-6, B=B, seed=seed).ground
    target = rough - max(1e-3 * abs(rough), 1e-9 * normA, 1e-12)
    cand = _factor_spd(A, target, B)
    if cand is not None:
        sigma, solve = target, cand
    SC = np.column_stack([solve(C[:, i]) for i in range(C.shape[1])])
    schur = C.T @ SC

    def bordered(b):
        # solve (A - sigma B) x - C mu = b with C^T x = 0
        z = solve(b)
        mu = np.linalg.solve(schur, C.T @ z)
        return z - SC @ mu

    apply = (lambda x: bordered(x)) if B is None else (lambda x: bordered(B @ x))
    bmul = None if B is None else pencil.bmul
    m = _krylov_dim(1, n)
    normS = _norm1(_shifted(A, sigma, B))

    def proj_residual(lam, x):
        r = pencil.residual(lam, x)
        # remove the Lagrange-multiplier component along C
        coef = np.linalg.lstsq(C, r, rcond=None)[0]
        return r - C @ coef

    def check(theta, X, est):
        if np.all(est * normS / np.maximum(theta, 1e-300) ** 2 / normA <= tol):
            lam = sigma + 1.0 / theta[0]
            x = X[:, 0]
            nx = np.sqrt(x @ pencil.bmul(x))
            return np.linalg.norm(proj_residual(lam, x)) / (nx * normA) <= tol
        return False

    v0 = apply(_start_vector(n, seed))
    theta, X, _ = _thick_restart(apply, bmul, v0, 1, m, maxiter, check)
    x = X[:, 0]
    x = x / np.sqrt(x @ pencil.bmul(x))
    return float(sigma + 1.0 / theta[0]), _sign_fix(x[:, None])[:, 0]
