"""Matrix-free symmetric linear algebra.

Everything here sees a symmetric PSD operator only through matrix-vector
products: preconditioned conjugate gradients, a randomized low-rank
factorization and the preconditioner built from it, Tikhonov shifts, dense
ridge regression for last-layer refits, and full dense eigendecomposition for
small diagnostic problems.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConfigError, NumericalError


class SymmetricOperator:
    """Symmetric linear map of dimension ``dim`` defined by its MVM.

    ``matmat`` optionally applies the operator to a block of column vectors
    at once; when absent, blocked products fall back to a column loop.  The
    ``mvm_count`` telemetry counter is updated under a lock so concurrent
    probes stay consistent.
    """

    def __init__(self, dim, matvec, matmat=None, psd=False):
        self.dim = int(dim)
        self._matvec = matvec
        self._matmat = matmat
        self.psd = bool(psd)
        self._count = 0
        self._lock = threading.Lock()

    @property
    def mvm_count(self) -> int:
        return self._count

    def _bump(self, k: int):
        with self._lock:
            self._count += k

    def mvm(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ConfigError(f"vector has shape {v.shape}, expected ({self.dim},)")
        self._bump(1)
        return self._matvec(v)

    def mvm_block(self, V: np.ndarray) -> np.ndarray:
        """Apply to the columns of V, shape (dim, m) -> (dim, m)."""
        V = np.asarray(V, dtype=np.float64)
        if V.ndim != 2 or V.shape[0] != self.dim:
            raise ConfigError(f"block has shape {V.shape}, expected ({self.dim}, m)")
        self._bump(V.shape[1])
        if self._matmat is not None:
            return self._matmat(V)
        return np.stack([self._matvec(V[:, j]) for j in range(V.shape[1])], axis=1)


def operator_from_dense(M: np.ndarray, psd: bool = False) -> SymmetricOperator:
    """Wrap a dense symmetric matrix as an operator (mainly for tests)."""
    M = np.asarray(M, dtype=np.float64)
    return SymmetricOperator(M.shape[0], lambda v: M @ v, matmat=lambda V: M @ V, psd=psd)


def shifted(A: SymmetricOperator, mu: float) -> SymmetricOperator:
    """The operator v -> A v + mu v."""
    if mu < 0:
        raise ConfigError("shift must be >= 0")
    return SymmetricOperator(
        A.dim,
        lambda v: A.mvm(v) + mu * v,
        matmat=lambda V: A.mvm_block(V) + mu * V,
        psd=A.psd,
    )


@dataclass
class SolveStats:
    """Outcome of one iterative solve.

    ``final_residual`` is the relative two-norm residual ||b - A x|| / ||b||;
    ``mvms`` counts operator applications made by the solver itself.
    """

    iterations: int
    final_residual: float
    converged: bool
    mvms: int


def cg_solve(
    A: SymmetricOperator,
    b: np.ndarray,
    preconditioner=None,
    tol: float = 1e-8,
    maxiter: int = 1000,
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, SolveStats]:
    """Preconditioned conjugate gradients on a symmetric PSD system.

    Stops when the relative residual ||b - A x|| / ||b|| drops below ``tol``;
    on hitting ``maxiter`` the best iterate is returned with
    ``converged=False`` and the caller decides whether that is fatal.  The
    recurrence residual is cross-checked against a freshly computed one before
    convergence is declared.
    """
    if tol <= 0:
        raise ConfigError("tol must be > 0")
    b = np.asarray(b, dtype=np.float64)
    bnorm = np.linalg.norm(b)
    apply_p = preconditioner if preconditioner is not None else (lambda r: r)

    if bnorm == 0.0:
        x = np.zeros(A.dim) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
        return x, SolveStats(iterations=0, final_residual=0.0, converged=True, mvms=0)

    mvms = 0
    if x0 is None:
        x = np.zeros(A.dim)
        r = b.copy()
    else:
        x = np.asarray(x0, dtype=np.float64).copy()
        r = b - A.mvm(x)
        mvms += 1

    iterations = 0
    converged = False
    rel = np.linalg.norm(r) / bnorm
    if rel <= tol:
        return x, SolveStats(iterations=0, final_residual=rel, converged=True, mvms=mvms)

    z = apply_p(r)
    p = z.copy()
    rz = float(r @ z)

    while iterations < maxiter:
        Ap = A.mvm(p)
        mvms += 1
        iterations += 1
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            # numerically indefinite direction; cannot proceed
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rel = np.linalg.norm(r) / bnorm
        if rel <= tol:
            # guard against recurrence drift before declaring success
            r = b - A.mvm(x)
            mvms += 1
            rel = np.linalg.norm(r) / bnorm
            if rel <= tol:
                converged = True
                break
        z = apply_p(r)
        rz_new = float(r @ z)
        beta = rz_new / rz
        p = z + beta * p
        rz = rz_new

    return x, SolveStats(iterations=iterations, final_residual=rel, converged=converged, mvms=mvms)


# ---------------------------------------------------------------------------
# randomized low-rank factorization and preconditioner
# ---------------------------------------------------------------------------

def nystrom_approx(A: SymmetricOperator, rank: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Randomized low-rank factorization of a PSD operator.

    Sketches the range with a Gaussian test matrix, forms the factorization
    through a shifted Cholesky of the (rank x rank) core for numerical
    stability, and returns ``(U, eigs)`` with orthonormal columns and
    non-negative eigenvalues sorted descending.  The shift is proportional
    to the sketched trace and is subtracted back from the eigenvalues,
    flooring at zero.  Exact (to roundoff) whenever rank(A) <= rank.
    """
    if not 1 <= rank <= A.dim:
        raise ConfigError(f"rank must be in [1, {A.dim}]")
    rng = np.random.default_rng(seed)
    Omega = rng.standard_normal((A.dim, rank))
    Omega, _ = np.linalg.qr(Omega)
    Y = A.mvm_block(Omega)
    core = Omega.T @ Y
    core = 0.5 * (core + core.T)
    trace = float(np.trace(core))
    shift = np.finfo(np.float64).eps * max(trace, 1.0)
    chol = None
    for _ in range(8):
        try:
            Yshift = Y + shift * Omega
            chol = scipy.linalg.cholesky(core + shift * np.eye(rank), lower=True)
            break
        except scipy.linalg.LinAlgError:
            shift *= 100.0
    if chol is None:
        raise NumericalError("sketched core is not positive definite", stage="nystrom")
    B = scipy.linalg.solve_triangular(chol, Yshift.T, lower=True).T
    U, sigma, _ = np.linalg.svd(B, full_matrices=False)
    eigs = np.maximum(sigma**2 - shift, 0.0)
    return U, eigs


@dataclass
class NystromPreconditioner:
    """Low-rank preconditioner for CG on a shifted PSD system.

    Acts as the application of the inverse: the retained eigendirections are
    rescaled toward the regularization level ``nu`` while the orthogonal
    complement passes through unchanged.  Cost per application is O(p * rank).
    """

    U: np.ndarray
    eigs: np.ndarray
    nu: float
    lam_ell: float = field(default=None)

    def __post_init__(self):
        if self.lam_ell is None:
            self.lam_ell = float(self.eigs[-1])
        if self.nu < 0 or (self.nu == 0 and self.eigs[-1] <= 0):
            raise ConfigError("regularization nu must be positive when eigenvalues reach zero")

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return apply_nystrom_preconditioner(self, r)


def apply_nystrom_preconditioner(P: NystromPreconditioner, r: np.ndarray) -> np.ndarray:
    """Apply the inverse preconditioner to a residual vector."""
    Ur = P.U.T @ r
    coeff = (P.lam_ell + P.nu) / (P.eigs + P.nu)
    return P.U @ (coeff * Ur) + (r - P.U @ Ur)


def make_nystrom_preconditioner(
    A: SymmetricOperator, rank: int, seed: int, nu: float
) -> NystromPreconditioner:
    """Sketch A and build the corresponding preconditioner."""
    U, eigs = nystrom_approx(A, rank, seed)
    return NystromPreconditioner(U=U, eigs=eigs, nu=float(nu))


# ---------------------------------------------------------------------------
# dense helpers
# ---------------------------------------------------------------------------

def ridge_lstsq(Phi: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """Minimize ||Phi W - y||^2 + lam ||W||^2 by a stable dense factorization.

    ``y`` may be a vector or an (m, k) matrix; the result matches its shape
    convention.  With ``lam == 0`` the feature matrix must have full column
    rank, otherwise an error asks for a positive ``lam``.
    """
    Phi = np.asarray(Phi, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if lam < 0:
        raise ConfigError("lam must be >= 0")
    m, q = Phi.shape
    if lam == 0.0:
        W, _res, rank, _sv = scipy.linalg.lstsq(Phi, y)
        if rank < q:
            raise ConfigError(
                "feature matrix is rank-deficient; solve with lambda > 0 instead"
            )
        return W
    y2 = y[:, None] if y.ndim == 1 else y
    aug = np.vstack([Phi, np.sqrt(lam) * np.eye(q)])
    rhs = np.vstack([y2, np.zeros((q, y2.shape[1]))])
    W, _res, _rank, _sv = scipy.linalg.lstsq(aug, rhs)
    return W[:, 0] if y.ndim == 1 else W


def assemble_dense(A: SymmetricOperator, block: int = 256) -> np.ndarray:
    """Materialize the operator column-by-column through its MVMs."""
    M = np.empty((A.dim, A.dim))
    eye = np.eye(A.dim)
    for start in range(0, A.dim, block):
        stop = min(start + block, A.dim)
        M[:, start:stop] = A.mvm_block(eye[:, start:stop])
    return M


def dense_spectrum(A: SymmetricOperator, max_dim: int = 4000) -> np.ndarray:
    """Full eigenvalue spectrum, descending.  Diagnostic use only.

    Assembly costs ``dim`` MVMs, so the dimension is capped; past a few
    thousand parameters the conditioning story must be read from CG iteration
    counts instead.
    """
    if A.dim > max_dim:
        raise ConfigError(
            f"operator dimension {A.dim} exceeds the dense cap {max_dim}; "
            "use a smaller diagnostic network"
        )
    M = assemble_dense(A)
    M = 0.5 * (M + M.T)
    return np.linalg.eigvalsh(M)[::-1]
