"""Monte-Carlo side: noise sampling, trial records, and quadratic forms.

Sampling is counter-based: a trial's matrix is a pure function of
(seed, i, j), with entry (i, j) consuming exactly the (i*n + j)-th
uniform of a Philox stream keyed by the seed.  Gaussian entries go
through the inverse normal CDF rather than rejection sampling precisely
to keep that bijection.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .freeconv import ConvolutionPoint
from .spectrum import ModelParams, Spectrum

__all__ = [
    "NOISE_KINDS",
    "TrialRecord",
    "derive_seed",
    "sample_noise",
    "noise_entry",
    "assemble_Wt",
    "singular_values_sq",
    "run_trial",
    "empirical_stieltjes",
    "pi_apply",
    "pi_quadratic_form",
    "pi_split_norm",
    "resolvent_quadratic_form",
    "write_trial",
    "read_trial",
]

NOISE_KINDS = ("gaussian", "rademacher", "trinary")

_M64 = (1 << 64) - 1


@dataclass(frozen=True)
class TrialRecord:
    """One simulated draw: eigenvalues of the noisy sample covariance.

    Vectors are populated only when an experiment asks for them:
    left_vectors is p x p, right_vectors n x p (economy factorization).
    """

    seed: int
    kind: str
    singular_values_sq: np.ndarray
    left_vectors: np.ndarray | None = None
    right_vectors: np.ndarray | None = None


def _splitmix(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _M64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _M64
    return x ^ (x >> 31)


def derive_seed(base_seed: int, stream: int, index: int) -> int:
    """Collision-resistant per-trial seed from (base, stream, trial index)."""
    h = _splitmix(base_seed & _M64)
    h = _splitmix(h ^ _splitmix(stream & _M64))
    h = _splitmix(h ^ _splitmix(index & _M64))
    return h


def _uniforms(seed: int, count: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(key=seed))
    u = gen.random(count)
    # an exact 0 would map to -inf under the inverse CDF
    return np.maximum(u, 1e-300)


def _map_uniforms(u: np.ndarray, kind: str, n: int) -> np.ndarray:
    root = 1.0 / np.sqrt(n)
    if kind == "gaussian":
        return ndtri(u) * root
    if kind == "rademacher":
        return np.where(u < 0.5, -root, root)
    if kind == "trinary":
        amp = np.sqrt(3.0) * root
        return np.where(u < 1.0 / 6.0, -amp, np.where(u >= 5.0 / 6.0, amp, 0.0))
    raise ValueError(f"unknown noise kind {kind!r}; choose from {NOISE_KINDS}")


def sample_noise(params: ModelParams, kind: str, seed: int) -> np.ndarray:
    """p x n noise matrix with iid entries of variance 1/n and zero odd moments."""
    p, n = params.p, params.n
    u = _uniforms(seed, p * n).reshape(p, n)
    return _map_uniforms(u, kind, n)


def noise_entry(params: ModelParams, kind: str, seed: int, i: int, j: int) -> float:
    """Entry (i, j) regenerated in isolation from the counter position i*n + j."""
    pos = i * params.n + j
    bg = np.random.Philox(key=seed)
    # advance() moves whole 128-bit counter blocks, 4 doubles apiece
    bg.advance(pos // 4)
    u = np.random.Generator(bg).random(pos % 4 + 1)[-1:]
    u = np.maximum(u, 1e-300)
    return float(_map_uniforms(u, kind, params.n)[0])


def assemble_Wt(spec: Spectrum, params: ModelParams, X: np.ndarray) -> np.ndarray:
    """Signal-plus-noise matrix: rectangular diagonal sqrt(d_i) plus sqrt(t) X."""
    if spec.p != params.p:
        raise ValueError("spectrum size does not match params.p")
    if X.shape != (params.p, params.n):
        raise ValueError(f"noise shape {X.shape} != {(params.p, params.n)}")
    W = np.zeros((params.p, params.n))
    W[np.arange(params.p), np.arange(params.p)] = np.sqrt(spec.values)
    return W + np.sqrt(params.t) * X


def singular_values_sq(Y: np.ndarray) -> np.ndarray:
    """Eigenvalues of Y Y^T, descending, via singular values (never the Gram matrix)."""
    s = np.linalg.svd(Y, compute_uv=False)
    return s * s


def run_trial(
    spec: Spectrum,
    params: ModelParams,
    kind: str,
    seed: int,
    want_vectors: bool = False,
) -> TrialRecord:
    X = sample_noise(params, kind, seed)
    Y = assemble_Wt(spec, params, X)
    if want_vectors:
        U, s, Vt = np.linalg.svd(Y, full_matrices=False)
        return TrialRecord(
            seed=seed,
            kind=kind,
            singular_values_sq=s * s,
            left_vectors=U,
            right_vectors=Vt.T,
        )
    return TrialRecord(seed=seed, kind=kind, singular_values_sq=singular_values_sq(Y))


def empirical_stieltjes(record: TrialRecord, z: complex) -> complex:
    """(1/p) sum_k 1/(lambda_k - z) from the trial's eigenvalues."""
    lam = record.singular_values_sq
    return complex(np.mean(1.0 / (lam - z)))


# ---------------------------------------------------------------------------
# deterministic equivalent


def _pi_blocks(spec: Spectrum, params: ModelParams, point: ConvolutionPoint):
    z = point.z
    B = point.b
    B_under = 1.0 + params.t * point.m_under
    den = z * B * B_under - spec.values  # per signal index
    den0 = z * B * B_under  # pure-noise indices
    return z, B, B_under, den, den0


def pi_apply(spec: Spectrum, params: ModelParams, point: ConvolutionPoint, vec: np.ndarray) -> np.ndarray:
    """Apply the deterministic equivalent matrix to a (p+n)-vector.

    The matrix is a direct sum of 2x2 blocks coupling signal index i with
    noise index p+i, plus scalars on the remaining pure-noise indices, so
    the product costs O(p + n).
    """
    p, n = params.p, params.n
    if vec.shape != (p + n,):
        raise ValueError(f"vector must have length p+n={p + n}")
    z, B, B_under, den, den0 = _pi_blocks(spec, params, point)
    rz = 1.0 / np.sqrt(np.asarray(z, dtype=complex))
    sd = np.sqrt(spec.values)
    u1 = vec[:p]
    u2 = vec[p:]
    out = np.empty(p + n, dtype=complex)
    out[:p] = -(B * u1 + rz * sd * u2[:p]) / den
    out[p : 2 * p] = -(rz * sd * u1 + B_under * u2[:p]) / den
    out[2 * p :] = -B_under * u2[p:] / den0
    return out


def pi_quadratic_form(
    spec: Spectrum,
    params: ModelParams,
    point: ConvolutionPoint,
    u: np.ndarray,
    v: np.ndarray,
) -> complex:
    """Bilinear form u^T Pi(z) v for unit vectors (transpose, not conjugate)."""
    for w in (u, v):
        if abs(np.linalg.norm(w) - 1.0) > 1e-8:
            raise ValueError("quadratic-form vectors must be unit norm")
    return complex(u @ pi_apply(spec, params, point, v))


def pi_split_norm(spec: Spectrum, params: ModelParams, point: ConvolutionPoint, u: np.ndarray) -> float:
    """||Pi (u1, 0)|| + ||Pi (0, u2)||, the norm weight in anisotropic bounds."""
    p, n = params.p, params.n
    top = np.concatenate([u[:p], np.zeros(n)])
    bot = np.concatenate([np.zeros(p), u[p:]])
    return float(
        np.linalg.norm(pi_apply(spec, params, point, top))
        + np.linalg.norm(pi_apply(spec, params, point, bot))
    )


def resolvent_quadratic_form(record: TrialRecord, z: complex, u: np.ndarray, v: np.ndarray) -> complex:
    """u^T G(z) v for the linearized resolvent, from the trial's factorization.

    Uses the block identities tying G to the sample-covariance resolvent;
    the pure-noise kernel of the lower block enters through the projector
    complement, so no dense inverse is ever formed.
    """
    if record.left_vectors is None or record.right_vectors is None:
        raise ValueError("trial record lacks singular vectors; rerun with want_vectors")
    U = record.left_vectors
    V = record.right_vectors
    lam = record.singular_values_sq
    p = U.shape[0]
    n = V.shape[0]
    if u.shape != (p + n,) or v.shape != (p + n,):
        raise ValueError(f"vectors must have length p+n={p + n}")
    zc = complex(z)
    if zc.imag == 0:
        raise ValueError("resolvent evaluation needs Im z != 0")
    rz = 1.0 / np.sqrt(np.asarray(zc, dtype=complex))
    s = np.sqrt(lam)
    a1, a2 = U.T @ u[:p], V.T @ u[p:]
    b1, b2 = U.T @ v[:p], V.T @ v[p:]
    core = (a1 * b1 + a2 * b2 + rz * s * (a1 * b2 + a2 * b1)) / (lam - zc)
    qf = complex(core.sum())
    qf -= (u[p:] @ v[p:] - a2 @ b2) / zc
    return qf


# ---------------------------------------------------------------------------
# persistence


def write_trial(path_csv: str, record: TrialRecord, params: ModelParams) -> None:
    """Eigenvalue CSV plus a JSON sidecar naming the generating draw."""
    with open(path_csv, "w") as fh:
        fh.write("lambda\n")
        for lam in record.singular_values_sq:
            fh.write(f"{lam:.17g}\n")
    sidecar = {
        "seed": record.seed,
        "p": params.p,
        "n": params.n,
        "t": params.t,
        "kind": record.kind,
    }
    with open(path_csv + ".json", "w") as fh:
        json.dump(sidecar, fh)
        fh.write("\n")


def read_trial(path_csv: str):
    """(TrialRecord, ModelParams) back from a CSV/sidecar pair."""
    with open(path_csv) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if lines[0] != "lambda":
        raise ValueError("malformed trial CSV header")
    values = np.array([float(x) for x in lines[1:]])
    with open(path_csv + ".json") as fh:
        side = json.load(fh)
    params = ModelParams(p=int(side["p"]), n=int(side["n"]), t=float(side["t"]))
    record = TrialRecord(
        seed=int(side["seed"]), kind=str(side["kind"]), singular_values_sq=values
    )
    return record, params
