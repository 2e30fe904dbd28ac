"""Additive-noise deformation of a signal spectrum.

Solves the self-consistent equation for the Stieltjes transform of the
noise-convolved singular value distribution at noise level t, via the
subordination point zeta: the scalar unknown solving

    F(z, zeta) = 1 + (t(1-c) - S)/(2 zeta) - c t m_v(zeta) = 0,
    S = sqrt(t^2 (1-c)^2 + 4 zeta z),

after which m, b = 1 + c t m, and the companion transform are rational in
m_v(zeta).  The inverse subordination map

    Phi(zeta) = zeta (1 - c t m_v(zeta))^2 + (1-c) t (1 - c t m_v(zeta))

satisfies Phi(zeta(z)) = z and supplies the solver residual.

The solver walks an eta-homotopy ladder from eta_start down to Im z,
warm-starting Newton at each level; a damped fixed-point sweep on m is
the recovery path when a Newton step cannot improve.  All entry points
accept arrays of evaluation points and solve them in lockstep.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .spectrum import ModelParams, Spectrum
from .stieltjes import m_v, m_v_derivative

__all__ = [
    "SolverConfig",
    "ConvolutionPoint",
    "SupportScan",
    "SolverError",
    "phi",
    "phi_derivative",
    "solve_point",
    "solve_many",
    "density",
    "density_curve",
    "density_diagnostics",
    "support_scan",
    "write_density_csv",
    "scan_to_json",
]

# Two-level extrapolation baseline for real-axis densities.
_DENSITY_ETAS = (1e-7, 5e-8)
_DENSITY_CLAMP = -1e-9
_SUPPORT_THRESHOLD = 1e-6


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-12
    max_iterations: int = 200
    eta_start: float = 10.0
    homotopy_factor: float = 0.7
    damping: float = 0.5

    def __post_init__(self) -> None:
        if not (0 < self.tolerance < 1e-3):
            raise ValueError("tolerance out of range")
        if self.max_iterations < 10:
            raise ValueError("max_iterations too small")
        if not self.eta_start > 0:
            raise ValueError("eta_start must be positive")
        if not (0 < self.homotopy_factor < 1):
            raise ValueError("homotopy_factor must lie in (0, 1)")
        if not (0 < self.damping <= 1):
            raise ValueError("damping must lie in (0, 1]")


@dataclass(frozen=True)
class ConvolutionPoint:
    """Solved transform data at one evaluation point z (Im z > 0)."""

    z: complex
    m: complex
    b: complex
    zeta: complex
    m_under: complex
    residual: float
    iterations: int

    def validate(self, params: ModelParams, tolerance: float = 1e-12) -> None:
        """Raise SolverError unless the Herglotz/branch invariants hold."""
        t = params.t
        checks = [
            ("Im m > 0", self.m.imag > 0),
            ("Im zm > 0", (self.z * self.m).imag > 0),
            ("Im zeta > 0", self.zeta.imag > 0),
            ("Re b > 0", self.b.real > 0),
            ("residual", self.residual <= tolerance),
        ]
        if t > 0:
            # coarse magnitude bound from the far-field decay of m
            checks.append(("|m| bound", abs(self.m) <= 10.0 / np.sqrt(t * abs(self.z))))
            recon = self.b**2 * self.z - self.b * t * (1.0 - params.c_n)
            checks.append(("zeta reconstruction", abs(self.zeta - recon) <= 1e-10 * max(1.0, abs(self.zeta))))
        bad = [name for name, ok in checks if not ok]
        if bad:
            raise SolverError(f"invariant violation at z={self.z}: {', '.join(bad)}")


@dataclass(frozen=True)
class SupportScan:
    intervals: tuple
    threshold: float
    step: float


class SolverError(RuntimeError):
    """Self-consistent solve failed; eta_level records where on the ladder."""

    def __init__(self, message: str, eta_level: float | None = None):
        super().__init__(message)
        self.eta_level = eta_level


# ---------------------------------------------------------------------------
# raw array kernels (no atom-collision guard; only used off the real axis)

_CHUNK = 2_000_000


def _raw_sums(d: np.ndarray, zeta: np.ndarray, with_derivative: bool = False):
    """mean 1/(d - zeta) and optionally mean (d - zeta)^-2, chunked over points."""
    k = zeta.shape[0]
    mv = np.empty(k, dtype=complex)
    mv1 = np.empty(k, dtype=complex) if with_derivative else None
    stride = max(1, _CHUNK // max(1, d.shape[0]))
    for lo in range(0, k, stride):
        hi = min(k, lo + stride)
        inv = 1.0 / (d[:, None] - zeta[None, lo:hi])
        mv[lo:hi] = inv.mean(axis=0)
        if with_derivative:
            mv1[lo:hi] = (inv * inv).mean(axis=0)
    return mv, mv1


def _phi_raw(d: np.ndarray, c: float, t: float, zeta: np.ndarray) -> np.ndarray:
    g = 1.0 - c * t * _raw_sums(d, zeta)[0]
    return zeta * g * g + (1.0 - c) * t * g


def _branch_sqrt(w: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Square root of w on the sheet continuous with the reference values."""
    s = np.sqrt(w)
    flip = np.abs(-s - ref) < np.abs(s - ref)
    return np.where(flip, -s, s)


def _F_eval(d, c, t, z_l, zeta, s_ref):
    """F, its sqrt factor on the tracked branch, and m_v at zeta."""
    mv = _raw_sums(d, zeta)[0]
    s = _branch_sqrt(t * t * (1.0 - c) ** 2 + 4.0 * zeta * z_l, s_ref)
    F = 1.0 + (t * (1.0 - c) - s) / (2.0 * zeta) - c * t * mv
    return F, s, mv


def _fp_map(d, c, t, z_l, m):
    b = 1.0 + c * t * m
    denom = d[:, None] / b[None, :] - b[None, :] * z_l[None, :] + t * (1.0 - c)
    return (1.0 / denom).mean(axis=0)


def _fp_iterate(d, c, t, z_l, m, alpha, n_steps, tol):
    """Damped fixed-point sweeps on m with per-point adaptive damping.

    Returns (m, steps_used, converged mask, last update size).
    """
    k = m.shape[0]
    alpha = np.full(k, alpha)
    delta_prev = np.full(k, np.inf)
    done = np.zeros(k, dtype=bool)
    steps = 0
    for _ in range(n_steps):
        f = _fp_map(d, c, t, z_l, m)
        delta = np.abs(f - m)
        target = tol * np.maximum(1.0, np.abs(m))
        done = delta <= target
        if done.all():
            m = np.where(done, m, (1.0 - alpha) * m + alpha * f)
            steps += 1
            break
        grow = delta > delta_prev
        alpha = np.where(grow, np.maximum(0.05, alpha * 0.5), np.minimum(1.0, alpha * 1.2))
        m = (1.0 - alpha) * m + alpha * f
        delta_prev = delta
        steps += 1
    return m, steps, done, delta_prev


def _zeta_from_m(c, t, z_l, m):
    b = 1.0 + c * t * m
    return b * b * z_l - b * t * (1.0 - c), 2.0 * z_l * b - t * (1.0 - c)


def _newton_level(d, c, t, z_l, zeta, s_ref, tol, max_iter):
    """Newton on F(z_l, .) = 0 for every point, with backtracking.

    Returns updated (zeta, s_ref, mv, iterations, unconverged mask).
    """
    F, s, mv = _F_eval(d, c, t, z_l, zeta, s_ref)
    absF = np.abs(F)
    used = 0
    stuck = np.zeros(zeta.shape[0], dtype=bool)
    for _ in range(max_iter):
        done = absF <= tol
        if bool(np.all(done | stuck)):
            break
        mv1 = _raw_sums(d, zeta, with_derivative=True)[1]
        Fz = (
            -z_l / (s * zeta)
            - (t * (1.0 - c) - s) / (2.0 * zeta * zeta)
            - c * t * mv1
        )
        step = np.where(done | stuck, 0.0, F / Fz)
        lam = np.ones(zeta.shape[0])
        cand = zeta - step
        Fc, sc, mvc = _F_eval(d, c, t, z_l, cand, s)
        absFc = np.abs(Fc)
        for _ in range(40):
            better = ((absFc < absF) & (cand.imag > 0)) | done | stuck
            if better.all():
                break
            lam = np.where(better, lam, lam * 0.5)
            cand = np.where(better, cand, zeta - lam * step)
            Fc2, sc2, mvc2 = _F_eval(d, c, t, z_l, cand, s)
            Fc = np.where(better, Fc, Fc2)
            sc = np.where(better, sc, sc2)
            mvc = np.where(better, mvc, mvc2)
            absFc = np.abs(Fc)
        improved = (absFc < absF) & (cand.imag > 0) & ~done & ~stuck
        zeta = np.where(improved, cand, zeta)
        F = np.where(improved, Fc, F)
        s = np.where(improved, sc, s)
        mv = np.where(improved, mvc, mv)
        absF = np.abs(F)
        stuck = stuck | (~improved & ~done)
        used += 1
    return zeta, s, mv, used, (absF > tol)


def _ladder(eta_start: float, factor: float, eta_floor: float) -> list:
    levels = []
    e = eta_start
    while e > eta_floor:
        levels.append(e)
        e *= factor
    levels.append(0.0)  # final level pins the exact targets
    return levels


def _solve_grid(spec, params, z, cfg, method):
    d = spec.values
    c, t = params.c_n, params.t
    z = np.asarray(z, dtype=complex).ravel()
    if z.shape[0] == 0:
        raise ValueError("no evaluation points")
    if np.any(~np.isfinite(z)) or np.any(z.imag <= 0):
        raise ValueError("evaluation points must be finite with Im z > 0")

    if t == 0.0:
        mv = m_v(spec, z)
        mv = np.atleast_1d(np.asarray(mv, dtype=complex))
        m_under = c * mv - (1.0 - c) / z
        ones = np.ones_like(mv)
        return mv, ones, z.copy(), m_under, np.zeros(z.shape[0]), np.zeros(z.shape[0], dtype=int)

    eta_t = z.imag
    levels = _ladder(cfg.eta_start, cfg.homotopy_factor, eta_t.min())
    E = z.real

    iters = np.zeros(z.shape[0], dtype=int)
    fp_tol = 0.01 * cfg.tolerance

    # initial state at the top of the ladder
    z_l = E + 1j * np.maximum(eta_t, levels[0])
    m = -1.0 / z_l
    if method in ("hybrid", "fixed_point"):
        m, used, _, _ = _fp_iterate(d, c, t, z_l, m, cfg.damping, 30, fp_tol)
        iters += used
    zeta, s_ref = _zeta_from_m(c, t, z_l, m)
    if np.any((1.0 + c * t * m).real <= 0):
        raise SolverError("initialization lost the Re b > 0 branch", levels[0])

    for eta_level in levels:
        z_l = E + 1j * np.maximum(eta_t, eta_level)
        if method == "fixed_point":
            for _ in range(3):
                m, used, done, _ = _fp_iterate(
                    d, c, t, z_l, m, cfg.damping, cfg.max_iterations, fp_tol
                )
                iters += used
                if done.all():
                    break
            continue

        budget = cfg.max_iterations
        for attempt in range(4):
            zeta, s_ref, mv, used, bad = _newton_level(
                d, c, t, z_l, zeta, s_ref, cfg.tolerance * 0.1, budget
            )
            iters += used
            budget -= used
            if not bad.any() or method == "newton" or budget <= 0:
                break
            # recovery: damped fixed-point on the stalled points only
            m_bad = mv / (1.0 - c * t * mv)
            m_new, used_fp, _, _ = _fp_iterate(
                d, c, t, z_l[bad], m_bad[bad], cfg.damping, 50, fp_tol
            )
            iters += used_fp
            zeta_bad, s_bad = _zeta_from_m(c, t, z_l[bad], m_new)
            zeta = zeta.copy()
            s_ref = s_ref.copy()
            zeta[bad] = zeta_bad
            s_ref[bad] = s_bad

    if method == "fixed_point":
        # the update criterion does not bound the map residual directly,
        # so polish until the residual contract itself is met
        for _ in range(12):
            zeta, s_ref = _zeta_from_m(c, t, z, m)
            residual = np.abs(_phi_raw(d, c, t, zeta) - z)
            if np.all(residual <= 0.9 * cfg.tolerance):
                break
            m, used, _, _ = _fp_iterate(
                d, c, t, z, m, cfg.damping, cfg.max_iterations, fp_tol * 0.01
            )
            iters += used
        b = 1.0 + c * t * m
    else:
        residual = np.abs(_phi_raw(d, c, t, zeta) - z)
        if np.any(residual > cfg.tolerance):
            zeta, s_ref, mv, used, _ = _newton_level(
                d, c, t, z, zeta, s_ref, 1e-15, 30
            )
            iters += used
            residual = np.abs(_phi_raw(d, c, t, zeta) - z)
        mv = _raw_sums(d, zeta)[0]
        m = mv / (1.0 - c * t * mv)
        b = 1.0 + c * t * m

    m_under = c * m - (1.0 - c) / z
    if np.any(residual > cfg.tolerance):
        worst = float(residual.max())
        raise SolverError(f"residual {worst:.3e} exceeds tolerance after ladder", 0.0)
    return m, b, zeta, m_under, residual, iters


# ---------------------------------------------------------------------------
# public surface


def phi(spec: Spectrum, params: ModelParams, zeta):
    """Inverse subordination map Phi(zeta); reduces to the identity at t = 0."""
    c, t = params.c_n, params.t
    if t == 0.0:
        z = np.asarray(zeta, dtype=complex)
        return complex(z) if z.ndim == 0 else z.copy()
    g = 1.0 - c * t * m_v(spec, zeta)
    return zeta * g * g + (1.0 - c) * t * g


def phi_derivative(spec: Spectrum, params: ModelParams, zeta, order: int = 1):
    """First or second zeta-derivative of the inverse subordination map."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    c, t = params.c_n, params.t
    if t == 0.0:
        shape = np.asarray(zeta, dtype=complex)
        out = np.ones_like(shape) if order == 1 else np.zeros_like(shape)
        return complex(out) if shape.ndim == 0 else out
    g = 1.0 - c * t * m_v(spec, zeta)
    g1 = -c * t * m_v_derivative(spec, zeta, 1)
    if order == 1:
        return g * g + 2.0 * zeta * g * g1 + (1.0 - c) * t * g1
    g2 = -c * t * m_v_derivative(spec, zeta, 2)
    return 4.0 * g * g1 + 2.0 * zeta * g1 * g1 + 2.0 * zeta * g * g2 + (1.0 - c) * t * g2


def solve_point(
    spec: Spectrum,
    params: ModelParams,
    z: complex,
    cfg: SolverConfig | None = None,
    method: str = "hybrid",
) -> ConvolutionPoint:
    """Solve the self-consistent equation at one point with Im z > 0.

    method selects the route: "hybrid" (default) is homotopy plus Newton
    with fixed-point recovery, "newton" disables the recovery sweeps, and
    "fixed_point" never forms a Newton step, which makes it a genuinely
    independent cross-check of the other two.
    """
    return solve_many(spec, params, [z], cfg, method)[0]


def solve_many(
    spec: Spectrum,
    params: ModelParams,
    z,
    cfg: SolverConfig | None = None,
    method: str = "hybrid",
) -> list:
    if method not in ("hybrid", "newton", "fixed_point"):
        raise ValueError(f"unknown method {method!r}")
    cfg = cfg or SolverConfig()
    m, b, zeta, m_under, residual, iters = _solve_grid(spec, params, z, cfg, method)
    z = np.asarray(z, dtype=complex).ravel()
    points = []
    for j in range(z.shape[0]):
        pt = ConvolutionPoint(
            z=complex(z[j]),
            m=complex(m[j]),
            b=complex(b[j]),
            zeta=complex(zeta[j]),
            m_under=complex(m_under[j]),
            residual=float(residual[j]),
            iterations=int(iters[j]),
        )
        pt.validate(params, cfg.tolerance)
        points.append(pt)
    return points


def _density_raw(spec, params, E, cfg):
    """Extrapolated density values plus solver diagnostics on an E-array."""
    E = np.asarray(E, dtype=float).ravel()
    if params.t == 0.0 and np.any(E <= 0):
        raise ValueError("density at t = 0 needs E > 0")
    eta_hi, eta_lo = _DENSITY_ETAS
    m_hi = _solve_grid(spec, params, E + 1j * eta_hi, cfg, "hybrid")
    m_lo = _solve_grid(spec, params, E + 1j * eta_lo, cfg, "hybrid")
    rho = (2.0 * m_lo[0].imag - m_hi[0].imag) / np.pi
    if np.any(rho < _DENSITY_CLAMP):
        raise SolverError(
            f"density extrapolation produced {float(rho.min()):.3e} < clamp", eta_lo
        )
    rho = np.maximum(rho, 0.0)
    diag = {
        "eta_used": np.full(E.shape[0], eta_lo),
        "residual": np.maximum(m_hi[4], m_lo[4]),
        "iterations": m_hi[5] + m_lo[5],
    }
    return rho, diag


def density(spec: Spectrum, params: ModelParams, E: float, cfg: SolverConfig | None = None) -> float:
    """Spectral density at real energy E via small-eta extrapolation."""
    cfg = cfg or SolverConfig()
    return float(_density_raw(spec, params, [E], cfg)[0][0])


def density_curve(spec: Spectrum, params: ModelParams, E, cfg: SolverConfig | None = None) -> np.ndarray:
    cfg = cfg or SolverConfig()
    return _density_raw(spec, params, E, cfg)[0]


def density_diagnostics(spec: Spectrum, params: ModelParams, E, cfg: SolverConfig | None = None):
    """(rho, diagnostics) for CSV export; diagnostics carry the final-eta solve data."""
    cfg = cfg or SolverConfig()
    return _density_raw(spec, params, E, cfg)


def support_scan(
    spec: Spectrum,
    params: ModelParams,
    lo: float,
    hi: float,
    step: float,
    cfg: SolverConfig | None = None,
) -> SupportScan:
    """Locate density-support intervals in [lo, hi] on a uniform grid.

    Grid cells where the density crosses the fixed threshold are refined
    by bisection to a resolution of step/100.  Intervals truncated by the
    scan window keep the window endpoint.
    """
    if params.t <= 0:
        raise ValueError("support scan needs t > 0")
    if not (hi > lo and step > 0 and step <= (hi - lo)):
        raise ValueError("bad scan window")
    cfg = cfg or SolverConfig()
    E = np.arange(lo, hi + step * 0.5, step)
    rho = density_curve(spec, params, E, cfg)
    above = rho > _SUPPORT_THRESHOLD

    def refine(a: float, b: float) -> float:
        # density - threshold changes sign across [a, b]
        fa = density(spec, params, a, cfg) - _SUPPORT_THRESHOLD
        while b - a > step / 100.0:
            mid = 0.5 * (a + b)
            fm = density(spec, params, mid, cfg) - _SUPPORT_THRESHOLD
            if (fa < 0) == (fm < 0):
                a, fa = mid, fm
            else:
                b = mid
        return 0.5 * (a + b)

    intervals = []
    k = 0
    n_pts = E.shape[0]
    while k < n_pts:
        if not above[k]:
            k += 1
            continue
        start = E[k] if k == 0 else refine(E[k - 1], E[k])
        while k + 1 < n_pts and above[k + 1]:
            k += 1
        end = E[k] if k == n_pts - 1 else refine(E[k], E[k + 1])
        intervals.append((float(start), float(end)))
        k += 1
    return SupportScan(intervals=tuple(intervals), threshold=_SUPPORT_THRESHOLD, step=step)


def write_density_csv(path, spec: Spectrum, params: ModelParams, E, cfg: SolverConfig | None = None) -> None:
    rho, diag = density_diagnostics(spec, params, E, cfg)
    E = np.asarray(E, dtype=float).ravel()
    with open(path, "w") as fh:
        fh.write("E,rho,eta_used,residual,iterations\n")
        for j in range(E.shape[0]):
            fh.write(
                f"{E[j]:.17g},{rho[j]:.17g},{diag['eta_used'][j]:.17g},"
                f"{diag['residual'][j]:.17g},{int(diag['iterations'][j])}\n"
            )


def scan_to_json(scan: SupportScan) -> str:
    return json.dumps({"intervals": [[a, b] for a, b in scan.intervals]})
