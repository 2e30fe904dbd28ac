"""Classical eigenvalue locations and the local comparison scale.

The j-th location gamma_j puts mass (j-1)/p to its right under the
noise-convolved density; the top location is pinned to the edge itself.
The cumulative mass is integrated in the variable u = sqrt(lambda_+ - E),
which removes the square-root singularity at the edge, and cached as a
monotone spline before the per-j root solves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .edge import EdgeData
from .freeconv import SolverConfig, density_curve
from .spectrum import ModelParams, Spectrum

__all__ = [
    "QuantileTable",
    "classical_locations",
    "eta_lower",
    "in_domain",
    "write_quantile_csv",
]

_GRID_POINTS = 2000


@dataclass(frozen=True)
class QuantileTable:
    """Descending classical locations gamma_1 > ... > gamma_{j_max}."""

    gamma: np.ndarray
    j_max: int
    quad_error: float


def _mass_spline(spec, params, lam_plus, u_max, cfg, n_pts):
    """Cumulative mass C(u) of the density below the edge, u = sqrt(lam - E)."""
    u = np.linspace(0.0, u_max, n_pts)
    E = lam_plus - u * u
    rho = np.zeros(n_pts)
    # the density vanishes for E <= 0; only query positive energies
    pos = E > 1e-300
    rho[pos] = density_curve(spec, params, E[pos], cfg)
    g = 2.0 * u * rho
    return u, PchipInterpolator(u, g).antiderivative()


def classical_locations(
    spec: Spectrum,
    params: ModelParams,
    j_max: int,
    edge: EdgeData,
    cfg: SolverConfig | None = None,
) -> QuantileTable:
    """Table of the top j_max classical locations for t > 0.

    gamma_1 is the edge exactly; deeper locations come from root solves on
    the cached cumulative-mass spline.  quad_error is a grid-halving
    estimate of the integration error, against which the table's defining
    identity can be re-checked.
    """
    if params.t <= 0:
        raise ValueError("classical locations need t > 0")
    if not (1 <= j_max <= params.p):
        raise ValueError(f"j_max must lie in [1, p], got {j_max}")
    cfg = cfg or SolverConfig()
    p = params.p
    lam = edge.lambda_plus
    targets = (np.arange(1, j_max + 1) - 1.0) / p

    # initial window from the square-root model, then extend until covered
    need = targets[-1]
    if need > 0:
        A = edge.sqrt_coeff if np.isfinite(edge.sqrt_coeff) and edge.sqrt_coeff > 0 else 1.0
        kappa_est = (3.0 * need / (2.0 * A)) ** (2.0 / 3.0)
        u_max = min(np.sqrt(2.0 * kappa_est), np.sqrt(lam))
        u_max = max(u_max, np.sqrt(lam) * 1e-3)
    else:
        u_max = np.sqrt(lam) * 0.1

    for _ in range(24):
        u, C = _mass_spline(spec, params, lam, u_max, cfg, _GRID_POINTS)
        if C(u_max) >= need or u_max >= np.sqrt(lam) * (1 - 1e-12):
            break
        u_max = min(u_max * 1.5, np.sqrt(lam))
    if C(u_max) < need:
        raise ValueError(
            f"window exhausted: mass {float(C(u_max)):.6g} < requested {need:.6g}"
        )

    gamma = np.empty(j_max)
    gamma[0] = lam
    u_roots = np.zeros(j_max)
    for idx in range(1, j_max):
        tau = targets[idx]
        roots = C.solve(tau, extrapolate=False)
        roots = roots[(roots >= 0) & (roots <= u_max)]
        if roots.size == 0:
            raise ValueError(f"no root for quantile {idx + 1}")
        u_roots[idx] = roots.min()
        gamma[idx] = lam - u_roots[idx] ** 2

    # grid-halving error estimate on the same density evaluations
    _, C2 = _mass_spline(spec, params, lam, u_max, cfg, _GRID_POINTS // 2)
    disc = max(
        (abs(float(C2(u_roots[idx])) - targets[idx]) for idx in range(1, j_max)),
        default=0.0,
    )
    quad_error = max(4.0 * disc, 1e-9)

    if np.any(np.diff(gamma) >= 0):
        raise ValueError("classical locations failed to decrease strictly")
    gamma.flags.writeable = False
    return QuantileTable(gamma=gamma, j_max=j_max, quad_error=quad_error)


def eta_lower(params: ModelParams, kappa: float) -> float:
    """Local scale eta_l: the root of n * eta * (t + sqrt(kappa + eta)) = 1."""
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    n, t = params.n, params.t

    def f(eta: float) -> float:
        return n * eta * (t + np.sqrt(kappa + eta)) - 1.0

    hi = 1.0
    while f(hi) < 0:
        hi *= 2.0
    return float(brentq(f, 0.0, hi, rtol=1e-12, xtol=1e-300))


def in_domain(
    params: ModelParams,
    edge: EdgeData,
    z: complex,
    vartheta: float,
    c_v: float | None = None,
) -> bool:
    """Membership in the spectral domain where the local laws are asserted.

    The domain has a main part reaching inside the spectrum and an
    outside flank with a weaker eta floor; both cap eta at 10.
    """
    if not (0 < vartheta < 1):
        raise ValueError("vartheta must lie in (0, 1)")
    E, eta = z.real, z.imag
    if eta <= 0:
        return False
    lam, t, n = edge.lambda_plus, params.t, params.n
    if c_v is None:
        c_v = 0.5 * lam
    kappa = abs(E - lam)
    floor = float(n) ** vartheta
    main = (
        lam - 0.75 * c_v <= E
        and (vartheta > 0 and E <= lam + t * t / vartheta)
        and n * eta * (t + np.sqrt(kappa + eta)) >= floor
        and eta <= 10.0
    )
    outside = (
        lam <= E <= lam + 0.75 * c_v
        and n * eta * np.sqrt(kappa + eta) >= floor
        and eta <= 10.0
    )
    return bool(main or outside)


def write_quantile_csv(path, table: QuantileTable, params: ModelParams, edge: EdgeData) -> None:
    lam = edge.lambda_plus
    with open(path, "w") as fh:
        fh.write("j,gamma_j,kappa_j,eta_l_j\n")
        for idx in range(table.j_max):
            kappa = lam - float(table.gamma[idx])
            fh.write(
                f"{idx + 1},{table.gamma[idx]:.17g},{kappa:.17g},"
                f"{eta_lower(params, kappa):.17g}\n"
            )
