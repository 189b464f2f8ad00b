"""Lattice model definition: quasiperiodic chain with exponentially decaying hopping.

The chain has N sites indexed m = 1..N.  Hopping between sites m and l is
t * exp(-u|m-l|) with t fixed by the convention that the nearest-neighbour
amplitude t1 = t*exp(-u) is the energy unit (t1 = 1, hence t = e^u).  The
on-site potential is the incommensurate cosine
w_m = V * cos(2*pi*zeta*m + phi) with zeta the reciprocal golden ratio by
default.  Keeping only the nearest-neighbour term ("aa" kind) reduces the
chain to the standard Aubry-Andre model.

The exponential-hopping chain supports an energy-dependent mobility edge at
E_c = V_c*cosh(u) - t; the AA reduction localizes all states at V = 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError

# reciprocal golden ratio: 1/zeta = (sqrt(5)+1)/2
GOLDEN_MEAN = (math.sqrt(5.0) - 1.0) / 2.0

MODEL_KINDS = ("exp-hopping", "aa")


@dataclass(frozen=True)
class ModelParams:
    """Full physical specification of one lattice instance.

    Energies are in units of t1 (nearest-neighbour hopping), which is
    normalized to 1 by fixing t = e^u.
    """

    u: float = 1.0
    V: float = 1.0
    N: int = 33
    phi: float = 0.0
    zeta: float = GOLDEN_MEAN
    model_kind: str = "exp-hopping"
    # None: full-range hopping; float eps: drop amplitudes below eps
    hopping_cutoff: float | None = None

    def __post_init__(self):
        for name in ("u", "V", "phi", "zeta"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and math.isfinite(val)):
                raise ValidationError(f"{name} must be a finite number, got {val!r}")
        if self.u <= 0:
            raise ValidationError(f"u must be > 0, got {self.u}")
        if self.V < 0:
            raise ValidationError(f"V must be >= 0, got {self.V}")
        if not isinstance(self.N, (int, np.integer)) or isinstance(self.N, bool):
            raise ValidationError(f"N must be an integer, got {self.N!r}")
        if self.N < 2:
            raise ValidationError(f"N must be >= 2, got {self.N}")
        if not (0.0 <= self.phi <= 2.0 * math.pi):
            raise ValidationError(f"phi must lie in [0, 2*pi], got {self.phi}")
        if self.zeta <= 0:
            raise ValidationError(f"zeta must be > 0, got {self.zeta}")
        if self.model_kind not in MODEL_KINDS:
            raise ValidationError(
                f"model_kind must be one of {MODEL_KINDS}, got {self.model_kind!r}")
        if self.hopping_cutoff is not None:
            eps = self.hopping_cutoff
            if not (isinstance(eps, (int, float)) and math.isfinite(eps) and 0 < eps < 1):
                raise ValidationError(
                    f"hopping_cutoff must be in (0, 1) or None, got {eps!r}")

    @property
    def t(self) -> float:
        """Bare hopping amplitude, fixed by t1 = t*e^-u = 1."""
        return math.exp(self.u)

    @property
    def t1(self) -> float:
        """Nearest-neighbour amplitude; the energy unit."""
        return 1.0

    def replace(self, **kw) -> "ModelParams":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        return {
            "u": self.u,
            "V": self.V,
            "N": self.N,
            "phi": self.phi,
            "zeta": self.zeta,
            "model_kind": self.model_kind,
            "hopping_cutoff": self.hopping_cutoff,
        }


def hopping_matrix(params: ModelParams) -> np.ndarray:
    """Hopping part of the Hamiltonian (real symmetric, zero diagonal).

    exp-hopping: J[m,l] = e^{u(1-|m-l|)} for all m != l (so |m-l| = 1 gives 1);
    aa: unit nearest-neighbour hopping only.  The optional cutoff zeroes
    amplitudes below eps; it is a performance knob, not a model change.
    """
    n = params.N
    if params.model_kind == "aa":
        J = np.zeros((n, n))
        idx = np.arange(n - 1)
        J[idx, idx + 1] = 1.0
        J[idx + 1, idx] = 1.0
        return J
    m = np.arange(1, n + 1)
    dist = np.abs(m[:, None] - m[None, :])
    J = np.exp(params.u * (1.0 - dist))
    np.fill_diagonal(J, 0.0)
    if params.hopping_cutoff is not None:
        J[J < params.hopping_cutoff] = 0.0
    return J


def onsite_potential(params: ModelParams, phi: float | None = None) -> np.ndarray:
    """Quasiperiodic diagonal w_m = V*cos(2*pi*zeta*m + phi), m = 1..N.

    `phi` overrides params.phi; any finite value is accepted here so that
    phase ramps may sweep beyond [0, 2*pi] (the potential is 2*pi-periodic).
    """
    if phi is None:
        phi = params.phi
    if not math.isfinite(phi):
        raise ValidationError(f"phi must be finite, got {phi!r}")
    m = np.arange(1, params.N + 1)
    return params.V * np.cos(2.0 * np.pi * params.zeta * m + phi)


def build_hamiltonian(params: ModelParams, phi: float | None = None) -> np.ndarray:
    """Dense real symmetric Hamiltonian under open boundary conditions."""
    H = hopping_matrix(params)
    np.fill_diagonal(H, onsite_potential(params, phi))
    return H


def mobility_edge_energy(v_c: float, u: float) -> float:
    """Critical energy of the mobility edge: E_c = V_c*cosh(u) - e^u.

    Valid for the exp-hopping chain; linear and strictly increasing in V_c.
    """
    if not (isinstance(u, (int, float)) and math.isfinite(u) and u > 0):
        raise ValidationError(f"u must be a finite number > 0, got {u!r}")
    if not (isinstance(v_c, (int, float)) and math.isfinite(v_c)):
        raise ValidationError(f"V_c must be finite, got {v_c!r}")
    return v_c * math.cosh(u) - math.exp(u)
