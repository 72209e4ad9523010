"""Generalized trust-region subproblem solver for NLS localization.

Localization with unknown channel parameters reduces to

    minimize ||Z y - b||^2   subject to   y^T D y + 2 f^T y = 0,

a quadratic objective with a single quadratic equality constraint. Three
variants cover the unknown-parameter cases: v=1 estimates the reference power
(path-loss exponent known), v=2 estimates the exponent (reference power
known), v=3 estimates both. The stationarity system

    y(nu) = (Z^T Z + nu D)^{-1} (Z^T b - nu f)

is solved by bisection on the scalar multiplier nu over the interval where
Z^T Z + nu D stays positive definite; the constraint value is strictly
decreasing in nu on that interval, so a sign-changing bracket pins the root.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

QUALITY_OK = "ok"
QUALITY_UNCONSTRAINED = "unconstrained"

# Default tuning values: exponent midpoint of the 2..6 indoor range and a
# plausible reference power.
DEFAULT_N0 = 3.0
DEFAULT_P0_BAR = -40.0


class InsufficientNodesError(ValueError):
    """Raised when the requested variant needs more reference nodes; the caller
    should fall back to the lower-order estimator path."""


@dataclass(frozen=True)
class GtrsProblem:
    variant: int
    z: np.ndarray  # (N, 4) for v=1,2; (N, 5) for v=3
    b: np.ndarray
    d_diag: np.ndarray  # diagonal of the selector matrix, entries in {0,1}
    f: np.ndarray
    n0: float
    p0_bar: float
    path_loss_n: float  # exponent baked into the v=1 columns


@dataclass(frozen=True)
class GtrsSolution:
    y: np.ndarray
    position: tuple[float, float]
    p0_est: Optional[float]
    n_est: Optional[float]
    quality: str
    multiplier: float
    constraint_residual: float


def build_gtrs(
    variant: int,
    positions: Sequence[tuple[float, float]],
    rss: Sequence[float],
    path_loss_n: float,
    p0: float,
    n0: float = DEFAULT_N0,
    p0_bar: float = DEFAULT_P0_BAR,
) -> GtrsProblem:
    """Populate the variant's matrices from node positions and RSS values.

    v=1 needs >=3 nodes and a known exponent; v=2 needs >=3 nodes and a known
    reference power; v=3 needs >=4 nodes and only the tuning values.
    """
    a = np.asarray(positions, dtype=float)
    p = np.asarray(rss, dtype=float)
    n_nodes = a.shape[0]
    if variant in (1, 2) and n_nodes < 3:
        raise InsufficientNodesError(f"variant {variant} needs >= 3 nodes")
    if variant == 3 and n_nodes < 4:
        raise InsufficientNodesError("variant 3 needs >= 4 nodes")
    norms2 = np.sum(a * a, axis=1)

    if variant == 1:
        lam = 10.0 ** (p / (5.0 * path_loss_n))
        z = np.column_stack([lam, -2.0 * lam * a[:, 0], -2.0 * lam * a[:, 1],
                             -np.ones(n_nodes)])
        b = -lam * norms2
        d_diag = np.array([0.0, 1.0, 1.0, 0.0])
        f = np.array([-0.5, 0.0, 0.0, 0.0])
    elif variant == 2:
        q = 10.0 ** ((p0 - p) / (5.0 * n0))
        z = np.column_stack([np.ones(n_nodes), -2.0 * a[:, 0], -2.0 * a[:, 1],
                             q * np.log(q)])
        b = q - norms2
        d_diag = np.array([0.0, 1.0, 1.0, 0.0])
        f = np.array([-0.5, 0.0, 0.0, 0.0])
    elif variant == 3:
        g = 10.0 ** ((p0_bar - p) / (5.0 * n0))
        z = np.column_stack([np.ones(n_nodes), -2.0 * a[:, 0], -2.0 * a[:, 1],
                             -g, g * np.log(g)])
        b = -norms2
        d_diag = np.array([0.0, 1.0, 1.0, 0.0, 0.0])
        f = np.array([-0.5, 0.0, 0.0, 0.0, 0.0])
    else:
        raise ValueError(f"unknown variant {variant}")
    return GtrsProblem(variant, z, b, d_diag, f, n0, p0_bar, path_loss_n)


def _constraint(prob: GtrsProblem, y: np.ndarray) -> float:
    return float(y @ (prob.d_diag * y) + 2.0 * prob.f @ y)


def _constraint_tol(y: np.ndarray) -> float:
    return 1e-8 * (1.0 + float(y @ y))


def _decode(prob: GtrsProblem, y, quality, nu) -> GtrsSolution:
    position = (float(y[1]), float(y[2]))
    p0_est = n_est = None
    if prob.variant == 1:
        alpha = y[3]
        if alpha > 0:
            p0_est = 5.0 * prob.path_loss_n * math.log10(alpha)
    elif prob.variant == 2:
        n_est = prob.n0 * (1.0 + float(y[3]))
    elif prob.variant == 3:
        gamma = float(y[3])
        if gamma != 0.0:
            delta = float(y[4]) / gamma
            n_est = prob.n0 * (1.0 + delta)
            if gamma > 0 and n_est is not None:
                p0_est = prob.p0_bar + 5.0 * n_est * math.log10(gamma)
    return GtrsSolution(y, position, p0_est, n_est, quality, nu,
                        _constraint(prob, y))


def solve_gtrs(
    prob: GtrsProblem,
    max_iter: int = 200,
    max_expand: int = 10,
) -> GtrsSolution:
    """Bisection on the Lagrange multiplier.

    Terminates when |y^T D y + 2 f^T y| <= 1e-8 (1 + ||y||^2). If no
    sign-changing bracket is found after doubling the upper endpoint
    ``max_expand`` times, the unconstrained least-squares solution is returned
    flagged low-quality.
    """
    z, b, f = prob.z, prob.b, prob.f
    ztz = z.T @ z
    ztb = z.T @ b
    d_mat = np.diag(prob.d_diag)

    def y_of(nu: float) -> np.ndarray:
        lhs = ztz + nu * d_mat
        try:
            return np.linalg.solve(lhs, ztb - nu * f)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(lhs, ztb - nu * f, rcond=None)[0]

    y_ls = np.linalg.lstsq(z, b, rcond=None)[0]
    if abs(_constraint(prob, y_ls)) <= _constraint_tol(y_ls):
        return _decode(prob, y_ls, QUALITY_OK, 0.0)

    # Left endpoint: Z^T Z + nu D is positive definite for
    # nu > -1 / lambda_max(D; Z^T Z) (generalized eigenvalue).
    try:
        gen_eigs = scipy.linalg.eigh(d_mat, ztz, eigvals_only=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
        return _decode(prob, y_ls, QUALITY_UNCONSTRAINED, 0.0)
    lam_max = float(np.max(gen_eigs))
    if lam_max <= 0:
        return _decode(prob, y_ls, QUALITY_UNCONSTRAINED, 0.0)
    lower = -1.0 / lam_max
    left = lower + max(abs(lower) * 1e-9, 1e-12)
    right = max(1.0, abs(lower))

    y_left = y_of(left)
    phi_left = _constraint(prob, y_left)
    y_right = y_of(right)
    phi_right = _constraint(prob, y_right)
    expansions = 0
    while phi_left * phi_right > 0 and expansions < max_expand:
        right *= 2.0
        y_right = y_of(right)
        phi_right = _constraint(prob, y_right)
        expansions += 1
    if phi_left * phi_right > 0:
        return _decode(prob, y_ls, QUALITY_UNCONSTRAINED, 0.0)

    y = y_ls
    nu = 0.0
    for _ in range(max_iter):
        nu = 0.5 * (left + right)
        y = y_of(nu)
        phi = _constraint(prob, y)
        if abs(phi) <= _constraint_tol(y):
            return _decode(prob, y, QUALITY_OK, nu)
        # Constraint value decreases in nu on the feasible interval.
        if phi > 0:
            left = nu
        else:
            right = nu
    return _decode(prob, y, QUALITY_OK, nu)
