from __future__ import annotations
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from core.exceptions import ConfigError
from fem.assembly import solve_sparse
from fem.levelset import LevelSetField, p2_basis, p2_basis_grad
from fem.quadrature import triangle_rule
from fem.spaces import FeField
from utils.log import get_logger

logger = get_logger("transport")


@dataclass(frozen=True)
class TransportParams:
    dt: float
    theta: float = 0.5

    def __post_init__(self) -> None:
        errors = []
        if not 0.0 <= self.theta <= 1.0:
            errors.append("levelset.theta: must lie in [0, 1]")
        if self.dt <= 0:
            errors.append("time.dt: must be positive")
        if errors:
            raise ConfigError(errors)


def tau_sd(speed_sq: np.ndarray, dt: float, h: float) -> np.ndarray:
    """Streamline-diffusion weight ``2 (1/dt^2 + |v|^2/h^2)^(-1/2)``."""
    return 2.0 / np.sqrt(1.0 / dt ** 2 + np.asarray(speed_sq) / h ** 2)


def advect(
        phi_n: LevelSetField,
        v_old: FeField,
        v_new: FeField,
        params: TransportParams,
) -> LevelSetField:
    """One theta-scheme step of ``phi_t + v . grad(phi) = 0`` with SUPG test functions.

    ``v_old`` and ``v_new`` are P1 vector fields on the background mesh at
    ``t_n`` and ``t_{n+1}``. The streamline weight and both test
    enrichments use ``v_new``.
    """
    mesh = phi_n.mesh
    dt, theta, h = params.dt, params.theta, mesh.h_max
    rule = triangle_rule(4)
    cells = np.arange(mesh.n_triangles)[:, None]

    basis = np.broadcast_to(p2_basis(rule.points), (mesh.n_triangles,) + (rule.weights.size, 6))
    grads = p2_basis_grad(rule.points, mesh.grad_lambda[cells])
    v1 = v_new.evaluate(cells, rule.points)
    v0 = v_old.evaluate(cells, rule.points)
    speed_sq = np.einsum("mqd,mqd->mq", v1, v1)
    tau = tau_sd(speed_sq, dt, h)

    v1_grad = np.einsum("mqd,mqid->mqi", v1, grads)
    test = basis + tau[..., None] * v1_grad
    trial = basis / dt + theta * v1_grad
    w = mesh.areas[:, None] * rule.weights[None, :]
    local = np.einsum("mq,mqi,mqj->mij", w, test, trial)

    phi_q = phi_n.evaluate(cells, rule.points)
    grad_phi = phi_n.gradient(cells, rule.points)
    explicit = phi_q / dt - (1.0 - theta) * np.einsum("mqd,mqd->mq", v0, grad_phi)
    local_rhs = np.einsum("mq,mq,mqi->mi", w, explicit, test)

    dofs = mesh.p2_dofs()
    n = mesh.refined.n_vertices
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    matrix = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    rhs = np.zeros(n)
    np.add.at(rhs, dofs, local_rhs)

    cfl = float(np.sqrt(speed_sq.max(initial=0.0)) * dt / h)
    if cfl > 1.0:
        logger.warning("cfl_warning", cfl=cfl, dt=dt, h=h)
    coefficients = solve_sparse(matrix, rhs)
    logger.debug("advected", cfl=cfl, max_speed=float(np.sqrt(speed_sq.max(initial=0.0))))
    return phi_n.with_coefficients(coefficients)
