"""Static spectral diagnostics: diagonalization, IPR, mobility-edge checks,
cluster/gap structure, edge-mode detection and localization thresholds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ClusterStructureError,
    EigensolverError,
    TransitionNotFoundError,
    ValidationError,
)
from .model import ModelParams, build_hamiltonian, mobility_edge_energy

# classifier defaults: delocalized if IPR < alpha/N, localized if IPR > beta
DEFAULT_THRESHOLDS = (3.0, 0.1)

CLUSTER_NAMES = ("lower", "middle", "upper")


def boundary_site_count(n: int) -> int:
    """Number of sites counted as 'boundary' on each end: ceil(N/10)."""
    return int(math.ceil(n / 10))


def ipr(state: np.ndarray) -> float:
    """Inverse participation ratio: sum|psi|^4 / (sum|psi|^2)^2.

    1/N for a uniform state, 1 for a single-site state; invariant under
    rescaling of the state.
    """
    p = np.abs(np.asarray(state)) ** 2
    total = p.sum()
    if total == 0.0 or not np.isfinite(total):
        raise ValidationError("state must have at least one nonzero amplitude")
    return float((p ** 2).sum() / total ** 2)


@dataclass
class SpectrumResult:
    """Full eigendecomposition with per-state diagnostics.

    energies are ascending; states[:, k] is the k-th orthonormal (real)
    eigenvector; boundary weights are the probability in the leftmost /
    rightmost ceil(N/10) sites.  cluster_labels is filled in by
    partition_clusters (None until then).
    """

    energies: np.ndarray
    states: np.ndarray
    ipr: np.ndarray
    boundary_weight_left: np.ndarray
    boundary_weight_right: np.ndarray
    cluster_labels: list | None = None

    @property
    def n(self) -> int:
        return self.energies.shape[0]


def diagonalize(H: np.ndarray) -> SpectrumResult:
    """Dense symmetric eigensolve with a deterministic sign convention.

    Every eigenvector is flipped so that its largest-magnitude component is
    positive (ties broken by lowest site index).  Non-convergence of the
    LAPACK driver surfaces as EigensolverError, never as silent NaNs.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValidationError(f"H must be a square matrix, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise ValidationError("H contains non-finite entries")
    if not np.array_equal(H, H.T):
        raise ValidationError("H must be exactly symmetric")
    try:
        energies, states = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(f"dense symmetric eigensolve failed: {exc}") from exc
    if not np.all(np.isfinite(energies)):
        raise EigensolverError("eigensolver returned non-finite eigenvalues")
    # sign convention: largest-|component| entry positive, first index on ties
    for k in range(states.shape[1]):
        col = states[:, k]
        if col[np.argmax(np.abs(col))] < 0:
            states[:, k] = -col
    p = states ** 2
    ne = boundary_site_count(H.shape[0])
    return SpectrumResult(
        energies=energies,
        states=states,
        ipr=(p ** 2).sum(axis=0) / p.sum(axis=0) ** 2,
        boundary_weight_left=p[:ne].sum(axis=0),
        boundary_weight_right=p[-ne:].sum(axis=0),
    )


def classify_localization(spectrum: SpectrumResult,
                          thresholds: tuple = DEFAULT_THRESHOLDS) -> np.ndarray:
    """Per-state label: delocalized (IPR < alpha/N), localized (IPR > beta),
    else indeterminate."""
    alpha, beta = thresholds
    n = spectrum.n
    labels = np.full(n, "indeterminate", dtype=object)
    labels[spectrum.ipr < alpha / n] = "delocalized"
    labels[spectrum.ipr > beta] = "localized"
    return labels


def localization_midpoint(n: int, thresholds: tuple = DEFAULT_THRESHOLDS) -> float:
    """Geometric midpoint of the indeterminate IPR band [alpha/N, beta]."""
    alpha, beta = thresholds
    return math.sqrt(alpha * beta / n)


def edge_mode_weights(spectrum: SpectrumResult):
    """Per-state (|psi_1|, |psi_N|, side label).

    A state is labelled 'left' ('right') when its leftmost (rightmost)
    ceil(N/10)-site weight exceeds 0.5, else 'none'.
    """
    amp_first = np.abs(spectrum.states[0, :])
    amp_last = np.abs(spectrum.states[-1, :])
    side = np.full(spectrum.n, "none", dtype=object)
    side[spectrum.boundary_weight_left > 0.5] = "left"
    side[spectrum.boundary_weight_right > 0.5] = "right"
    return amp_first, amp_last, side


@dataclass
class ClusterPartition:
    """Three-cluster structure of the sorted spectrum at one phase.

    gap_indices hold the full-spectrum index of the state just below each of
    the two dominant gaps; cluster_ranges are (start, stop) half-open index
    ranges partitioning 0..N-1; the bulk subchannels are the lowest
    non-edge-crossing levels of the upper (A) and middle (B) clusters.
    """

    gap_indices: tuple
    cluster_ranges: tuple
    bulk_subchannel_A: int
    bulk_subchannel_B: int
    labels: list


def partition_clusters(spectrum: SpectrumResult,
                       min_gap_factor: float = 3.0) -> ClusterPartition:
    """Split the spectrum into lower/middle/upper clusters at the two largest
    gaps, ignoring edge-crossing states (boundary weight > 0.5) when locating
    the gaps.

    Fails loudly when the two largest gaps are not at least `min_gap_factor`
    times the median level spacing.
    """
    n = spectrum.n
    e = spectrum.energies
    bw = np.maximum(spectrum.boundary_weight_left, spectrum.boundary_weight_right)
    bulk_idx = np.nonzero(bw <= 0.5)[0]
    if bulk_idx.size < 6:
        raise ClusterStructureError(
            f"only {bulk_idx.size} non-edge states; cannot partition")
    eb = e[bulk_idx]
    gaps = np.diff(eb)
    order = np.argsort(gaps)[::-1]
    med = np.median(gaps)
    if med <= 0 or gaps[order[1]] < min_gap_factor * med:
        raise ClusterStructureError(
            "no clear cluster structure: two largest gaps "
            f"({gaps[order[0]]:.3g}, {gaps[order[1]]:.3g}) are not >= "
            f"{min_gap_factor}x the median spacing {med:.3g}")
    g1, g2 = sorted(order[:2])
    # assign every state (edge modes included) by the gap-midpoint energies
    mid1 = 0.5 * (eb[g1] + eb[g1 + 1])
    mid2 = 0.5 * (eb[g2] + eb[g2 + 1])
    n_lower = int(np.searchsorted(e, mid1))
    n_below_upper = int(np.searchsorted(e, mid2))
    ranges = ((0, n_lower), (n_lower, n_below_upper), (n_below_upper, n))
    labels = []
    for i in range(n):
        if bw[i] > 0.5:
            labels.append("edge-crossing")
        elif i < n_lower:
            labels.append("lower")
        elif i < n_below_upper:
            labels.append("middle")
        else:
            labels.append("upper")
    def first_bulk(start, stop):
        for i in range(start, stop):
            if bw[i] <= 0.5:
                return i
        raise ClusterStructureError(f"cluster {start}:{stop} has no bulk state")
    part = ClusterPartition(
        gap_indices=(int(bulk_idx[g1]), int(bulk_idx[g2])),
        cluster_ranges=ranges,
        bulk_subchannel_A=first_bulk(*ranges[2]),
        bulk_subchannel_B=first_bulk(*ranges[1]),
        labels=labels,
    )
    spectrum.cluster_labels = labels
    return part


def find_gap_edge_states(spectrum: SpectrumResult, gap: str,
                         partition: ClusterPartition | None = None) -> list:
    """Boundary-localized states inside one of the two dominant bulk gaps.

    `gap` is 'upper' (between middle and upper clusters) or 'lower'.  Returns
    (index, side) pairs sorted by decreasing boundary weight; empty when the
    gap hosts no edge mode.
    """
    if gap not in ("upper", "lower"):
        raise ValidationError(f"gap must be 'upper' or 'lower', got {gap!r}")
    if partition is None:
        partition = partition_clusters(spectrum)
    bw = np.maximum(spectrum.boundary_weight_left, spectrum.boundary_weight_right)
    bulk_idx = np.nonzero(bw <= 0.5)[0]
    low = partition.gap_indices[1] if gap == "upper" else partition.gap_indices[0]
    pos = int(np.searchsorted(bulk_idx, low))
    e_lo = spectrum.energies[bulk_idx[pos]]
    e_hi = spectrum.energies[bulk_idx[pos + 1]]
    _, _, side = edge_mode_weights(spectrum)
    cands = [i for i in range(spectrum.n)
             if side[i] != "none" and e_lo < spectrum.energies[i] < e_hi]
    cands.sort(key=lambda i: -bw[i])
    return [(int(i), str(side[i])) for i in cands]


@dataclass
class ThresholdResult:
    """Localization threshold of one sorted level.

    offset_in_spacings is |E_level(V_c) - E_c(V_c)| over the local level
    spacing (None for the AA reduction, which has no mobility-edge line).
    """

    v_c: float
    level_index: int
    energy: float
    line_energy: float | None
    offset_in_spacings: float | None


def find_sublevel_threshold(level_index: int, params: ModelParams,
                            v_range: tuple,
                            tol: float = 1e-3,
                            thresholds: tuple = DEFAULT_THRESHOLDS) -> ThresholdResult:
    """Bisect on V for the level's IPR crossing the classifier midpoint.

    The crossing criterion is log-IPR passing the geometric midpoint of the
    indeterminate band.  Raises TransitionNotFoundError when the bracket does
    not straddle the transition.
    """
    v_lo, v_hi = float(v_range[0]), float(v_range[1])
    if not (0 <= v_lo < v_hi):
        raise ValidationError(f"need 0 <= v_lo < v_hi, got {v_range}")
    if not (0 <= level_index < params.N):
        raise ValidationError(f"level_index {level_index} outside 0..{params.N - 1}")
    target = math.log(localization_midpoint(params.N, thresholds))

    def logipr(v):
        spec = diagonalize(build_hamiltonian(params.replace(V=v)))
        return math.log(spec.ipr[level_index]), spec

    f_lo, _ = logipr(v_lo)
    f_hi, _ = logipr(v_hi)
    if (f_lo - target) * (f_hi - target) > 0:
        raise TransitionNotFoundError(
            f"no transition in range V in [{v_lo}, {v_hi}] for level "
            f"{level_index}: log-IPR {f_lo:.3f}..{f_hi:.3f} vs target {target:.3f}")
    while v_hi - v_lo > tol:
        v_mid = 0.5 * (v_lo + v_hi)
        f_mid, _ = logipr(v_mid)
        if (f_lo - target) * (f_mid - target) <= 0:
            v_hi = v_mid
        else:
            v_lo, f_lo = v_mid, f_mid
    v_c = 0.5 * (v_lo + v_hi)
    _, spec = logipr(v_c)
    energy = float(spec.energies[level_index])
    if params.model_kind == "aa":
        line = offset = None
    else:
        line = mobility_edge_energy(v_c, params.u)
        lo = max(level_index - 1, 0)
        hi = min(level_index + 1, params.N - 1)
        spacing = (spec.energies[hi] - spec.energies[lo]) / max(hi - lo, 1)
        offset = abs(energy - line) / spacing if spacing > 0 else math.inf
    return ThresholdResult(
        v_c=v_c,
        level_index=level_index,
        energy=energy,
        line_energy=line,
        offset_in_spacings=offset,
    )
