"""Ornstein–Uhlenbeck systems (Q, B) and their structural invariants.

The operator is A u = tr(Q ∇²u) + <BX, ∇u>, so Q = I is the Laplacian
(not ½Δ).  Built-in examples use the normalisations of the classical models:
heat, Ornstein–Uhlenbeck, Kolmogorov, Kramers, Smoluchowski–Kramers,
Kolmogorov with friction and degenerate Ornstein–Uhlenbeck.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .errors import InvalidSystemError, NotHypoellipticError
from .numerics import Spectrum, gramian, rank_tol, spectrum

__all__ = [
    "OUSystem",
    "StructureReport",
    "validate",
    "builtin",
    "BUILTIN_NAMES",
    "load_system",
    "closed_form_volume",
    "controllability_matrix",
    "kalman_check",
    "hypo_certificate",
    "filtration",
    "spectral_abscissa",
    "structure_report",
    "require_hypoelliptic",
]

SYM_TOL = 1e-12
PSD_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class OUSystem:
    """An immutable pair (Q, B) defining A u = tr(Q∇²u) + <BX, ∇u>."""

    name: str
    Q: np.ndarray
    B: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.Q.shape[0]

    @property
    def trace_B(self) -> float:
        return float(np.trace(self.B))

    @property
    def key(self) -> bytes:
        """Bytes identifying (Q, B); used for memo tables."""
        return self.Q.tobytes() + b"|" + self.B.tobytes()

    def __eq__(self, other):
        if not isinstance(other, OUSystem):
            return NotImplemented
        return self.Q.shape == other.Q.shape and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def to_dict(self) -> dict:
        return {"name": self.name, "dim": self.dim, "Q": self.Q.tolist(), "B": self.B.tolist()}


def validate(raw, allow_low_dim: bool = False) -> OUSystem:
    """Build an OUSystem from a mapping {"name", "dim", "Q", "B"}.

    Raises InvalidSystemError listing every violation found.  ``allow_low_dim``
    admits N = 1 (used for the one-dimensional heat equation).
    """
    if isinstance(raw, OUSystem):
        raw = raw.to_dict() | {"params": raw.params}
    violations = []
    name = str(raw.get("name", "custom"))
    try:
        Q = np.array(raw["Q"], dtype=float)
        B = np.array(raw["B"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidSystemError([f"Q and B must be numeric matrices ({exc})"]) from None
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        violations.append(f"Q must be square, got shape {Q.shape}")
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        violations.append(f"B must be square, got shape {B.shape}")
    if violations:
        raise InvalidSystemError(violations)
    if Q.shape != B.shape:
        violations.append(f"Q {Q.shape} and B {B.shape} have different sizes")
    n = Q.shape[0]
    if "dim" in raw and raw["dim"] is not None and int(raw["dim"]) != n:
        violations.append(f"declared dim {raw['dim']} does not match matrix size {n}")
    if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(B))):
        violations.append("Q and B must have finite entries")
    elif Q.shape == B.shape:
        scale = max(np.abs(Q).max(initial=0.0), 1.0)
        if np.abs(Q - Q.T).max(initial=0.0) > SYM_TOL * scale:
            violations.append("Q is not symmetric")
        else:
            lam_min = np.linalg.eigvalsh(0.5 * (Q + Q.T)).min(initial=0.0)
            if lam_min < -PSD_TOL * scale:
                violations.append(f"Q is not positive semidefinite (eigenvalue {lam_min:.3g})")
    if n < 2 and not allow_low_dim:
        violations.append(f"dimension must be at least 2, got {n}")
    if violations:
        raise InvalidSystemError(violations)
    Q = 0.5 * (Q + Q.T)
    Q.setflags(write=False)
    B.setflags(write=False)
    return OUSystem(name, Q, B, dict(raw.get("params", {})))


# ---------------------------------------------------------------------------
# built-in examples

BUILTIN_NAMES = (
    "heat",
    "ou",
    "kolmogorov",
    "kramers",
    "smoluchowski",
    "friction-kolmogorov",
    "degenerate-ou",
)


def _two_block(n, B):
    Q = np.zeros((2 * n, 2 * n))
    Q[:n, :n] = np.eye(n)
    return Q, B


def builtin(name: str, n: int = 1, dim: Optional[int] = None) -> OUSystem:
    """One of the seven reference systems.

    ``dim`` sets N for "heat" (default 2, N = 1 allowed) and "ou" (default 2);
    ``n`` sets the block size for the 2n-dimensional Kolmogorov-type families.
    """
    I = np.eye(n)
    Z = np.zeros((n, n))
    if name == "heat":
        N = 2 if dim is None else int(dim)
        Q, B, params = np.eye(N), np.zeros((N, N)), {"N": N}
    elif name == "ou":
        N = 2 if dim is None else int(dim)
        Q, B, params = np.eye(N), -np.eye(N), {"N": N}
    elif name == "kolmogorov":
        Q, B = _two_block(n, np.block([[Z, Z], [I, Z]]))
        params = {"n": n}
    elif name == "kramers":
        Q, B, params = np.diag([1.0, 0.0]), np.array([[0.0, -1.0], [1.0, 0.0]]), {}
    elif name == "smoluchowski":
        Q, B, params = np.diag([1.0, 0.0]), np.array([[-2.0, -2.0], [1.0, 0.0]]), {}
    elif name == "friction-kolmogorov":
        Q, B = _two_block(n, np.block([[I, Z], [I, Z]]))
        params = {"n": n}
    elif name == "degenerate-ou":
        Q, B = _two_block(n, np.block([[-I, Z], [I, Z]]))
        params = {"n": n}
    else:
        raise KeyError(f"unknown system {name!r}; choose from {', '.join(BUILTIN_NAMES)}")
    if dim is not None and name not in ("heat", "ou") and Q.shape[0] != dim:
        raise InvalidSystemError([f"{name} has dimension {Q.shape[0]}, not {dim}"])
    return validate({"name": name, "Q": Q, "B": B, "params": params}, allow_low_dim=(name == "heat"))


def load_system(spec, n: int = 1, dim: Optional[int] = None) -> OUSystem:
    """A built-in name, a path to a JSON system file, or a mapping."""
    if isinstance(spec, OUSystem):
        return spec
    if isinstance(spec, dict):
        return validate(spec)
    if spec in BUILTIN_NAMES:
        return builtin(spec, n=n, dim=dim)
    path = Path(spec)
    if path.exists():
        with open(path) as fh:
            return validate(json.load(fh))
    raise KeyError(f"unknown system {spec!r}: not a built-in name or an existing file")


def _log_omega(N):
    return 0.5 * N * math.log(math.pi) - gammaln(0.5 * N + 1.0)


def closed_form_volume(sys: OUSystem, t):
    """Reference formula for V(t) of a built-in system, vectorized over t.

    The two friction rows carry the exponent n/2: the bracket is det of one
    2×2 block of tK(t), and the half power is what gives V ~ t^{2n} at 0.
    """
    t = np.asarray(t, dtype=float)
    name = sys.name
    p = sys.params
    N = sys.dim
    om = math.exp(_log_omega(N))
    if name == "heat":
        return om * t ** (N / 2)
    if name == "ou":
        return om * 2.0 ** (-N / 2) * (-np.expm1(-2 * t)) ** (N / 2)
    if name == "kolmogorov":
        n = p["n"]
        return om * 12.0 ** (-n / 2) * t ** (2 * n)
    if name == "kramers":
        return math.pi * (t ** 2 / 4 + (np.cos(2 * t) - 1) / 8) ** 0.5
    if name == "smoluchowski":
        return math.pi / (4 * math.sqrt(2)) * (
            np.exp(-4 * t) + 1 - 2 * np.exp(-2 * t) * (2 - np.cos(2 * t))) ** 0.5
    if name == "friction-kolmogorov":
        n = p["n"]
        br = 2 * np.exp(t) - t / 2 - 1 + t / 2 * np.exp(2 * t) - np.exp(2 * t)
        return om * br ** (n / 2)
    if name == "degenerate-ou":
        n = p["n"]
        br = 2 * np.exp(-t) + t / 2 - 1 - t / 2 * np.exp(-2 * t) - np.exp(-2 * t)
        return om * br ** (n / 2)
    raise KeyError(f"no closed form registered for {name!r}")


# ---------------------------------------------------------------------------
# structure


@dataclass
class StructureReport:
    name: str
    dim: int
    hypoelliptic: bool
    kalman_rank: int
    filtration: list
    D0_structural: Optional[int]
    trace_B: float
    trace_ok: bool
    L0: float
    spectrum: Spectrum
    min_eig_tK1: float

    def to_dict(self) -> dict:
        ev = self.spectrum.eigenvalues
        return {
            "name": self.name,
            "dim": self.dim,
            "hypoelliptic": self.hypoelliptic,
            "kalman_rank": self.kalman_rank,
            "filtration": list(self.filtration),
            "D0_structural": self.D0_structural,
            "trace_B": self.trace_B,
            "trace_ok": self.trace_ok,
            "L0": self.L0,
            "spectrum": [[float(z.real), float(z.imag)] for z in ev],
            "min_eig_tK1": self.min_eig_tK1,
        }


def controllability_matrix(sys: OUSystem, k: Optional[int] = None) -> np.ndarray:
    """[Q, BQ, ..., B^k Q] (k defaults to N - 1)."""
    N = sys.dim
    k = N - 1 if k is None else k
    blocks = [sys.Q]
    for _ in range(k):
        blocks.append(sys.B @ blocks[-1])
    return np.hstack(blocks)


def kalman_check(sys: OUSystem, tol: float = 1e-10):
    """(rank == N, rank) of the controllability matrix."""
    r = rank_tol(controllability_matrix(sys), tol)
    return r == sys.dim, r


def hypo_certificate(sys: OUSystem, t0: float = 1.0) -> float:
    """Smallest eigenvalue of t0·K(t0); positive iff the system is hypoelliptic."""
    if t0 <= 0:
        raise ValueError("t0 must be positive")
    G = gramian(sys.Q, sys.B, t0)
    return float(np.linalg.eigvalsh(G).min())


def certificate_positive(sys: OUSystem, t0: float = 1.0) -> bool:
    G = gramian(sys.Q, sys.B, t0)
    ev = np.linalg.eigvalsh(G)
    return bool(ev.min() > 1e-12 * max(np.abs(ev).max(), 1e-300))


def filtration(sys: OUSystem, tol: float = 1e-10):
    """Rank increments p_j of [Q, BQ, ..., B^j Q] and D_0 = Σ(2j+1)p_j."""
    N = sys.dim
    ranks = []
    for j in range(N):
        ranks.append(rank_tol(controllability_matrix(sys, j), tol))
        if ranks[-1] == N:
            break
    if ranks[-1] != N:
        raise NotHypoellipticError(
            f"controllability ranks {ranks} never reach N = {N}: the system is not hypoelliptic")
    p = [ranks[0]] + [b - a for a, b in zip(ranks, ranks[1:])]
    D0 = sum((2 * j + 1) * pj for j, pj in enumerate(p))
    return p, D0


def spectral_abscissa(sys: OUSystem) -> float:
    """max Re λ over the eigenvalues of B."""
    return spectrum(sys.B).abscissa


def require_hypoelliptic(sys: OUSystem):
    ok, r = kalman_check(sys)
    if not ok:
        raise NotHypoellipticError(
            f"system {sys.name!r} is not hypoelliptic (Kalman rank {r} < {sys.dim})")


def structure_report(sys: OUSystem) -> StructureReport:
    ok, r = kalman_check(sys)
    if ok:
        p, D0 = filtration(sys)
    else:
        p, D0 = [], None
    tr = sys.trace_B
    spec = spectrum(sys.B)
    return StructureReport(
        name=sys.name,
        dim=sys.dim,
        hypoelliptic=ok,
        kalman_rank=r,
        filtration=p,
        D0_structural=D0,
        trace_B=tr,
        trace_ok=tr >= -1e-12,
        L0=spec.abscissa,
        spectrum=spec,
        min_eig_tK1=hypo_certificate(sys, 1.0),
    )
