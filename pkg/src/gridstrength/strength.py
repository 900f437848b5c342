"""Grid-strength metrics and GFM capacity sizing.

The generalized short-circuit ratio (gSCR) of a multi-farm network is
the smallest eigenvalue of S_B^-1 B_r.  Attaching GFM converters with a
uniform capacity ratio gamma behind local reactance z_local shifts the
whole spectrum by gamma / z_local, which yields a closed-form sizing law
for the capacity ratio needed to reach a target gSCR.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .network import KronReducedNetwork, NetworkError

_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class ModalDecomposition:
    """Eigenvalues/eigenvectors of S_B^-1 B_r, ascending.

    Eigenvectors are columns, unit Euclidean norm, sign fixed so the
    first non-negligible entry is positive.  lambdas[0] is the gSCR.
    """

    lambdas: np.ndarray        # (n,), ascending, all > 0
    vectors: np.ndarray        # (n, n), column i pairs with lambdas[i]
    farm_ids: tuple[str, ...]

    @property
    def gscr(self) -> float:
        return float(self.lambdas[0])


@dataclass(frozen=True)
class SizingResult:
    """Outcome of sizing the GFM capacity ratio for a target gSCR."""

    gscr0: float
    target_gscr: float
    z_local: float
    gamma_required: float
    farm_ids: tuple[str, ...]
    gfm_capacity_mva: tuple[float, ...]
    already_satisfied: bool


@dataclass(frozen=True)
class UnitPlan:
    """Integer GFM unit counts per farm for a requested capacity ratio."""

    farm_ids: tuple[str, ...]
    counts: tuple[int, ...]
    unit_mva: float
    requested_gamma: float
    realized_gamma: tuple[float, ...]
    min_realized_gamma: float


def compute_modes(reduced: KronReducedNetwork) -> ModalDecomposition:
    """Modal decomposition of S_B^-1 B_r via the symmetric similarity transform.

    Eigenvalues are computed from S_B^-1/2 B_r S_B^-1/2 (symmetric PD),
    which guarantees a real positive spectrum by construction; the
    eigenvectors are mapped back and normalized.
    """
    b_r = reduced.b_r
    scale = float(np.max(np.abs(b_r)))
    if np.max(np.abs(b_r - b_r.T), initial=0.0) > 1e-12 * max(1.0, scale):
        raise NetworkError("reduced susceptance matrix asymmetric beyond tolerance")
    s_inv_sqrt = 1.0 / np.sqrt(reduced.s_b)
    sym = s_inv_sqrt[:, None] * b_r * s_inv_sqrt[None, :]
    sym = 0.5 * (sym + sym.T)
    lambdas, u = eigh(sym)
    if lambdas[0] <= 0:
        raise NetworkError(
            f"reduced network not positive definite (smallest eigenvalue {lambdas[0]:.3g})"
        )
    vectors = s_inv_sqrt[:, None] * u
    vectors /= np.linalg.norm(vectors, axis=0, keepdims=True)
    # deterministic sign: first entry above noise threshold is positive
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        nz = np.nonzero(np.abs(col) > 1e-12 * np.max(np.abs(col)))[0]
        if len(nz) and col[nz[0]] < 0:
            vectors[:, j] = -col
    mat = b_r / reduced.s_b[:, None]
    residual = np.linalg.norm(mat @ vectors - vectors * lambdas[None, :], axis=0)
    if np.any(residual > _RESIDUAL_TOL * max(1.0, scale)):
        raise NetworkError("modal decomposition residual above tolerance")
    return ModalDecomposition(lambdas=lambdas, vectors=vectors, farm_ids=reduced.farm_ids)


def gscr(reduced: KronReducedNetwork) -> float:
    """Smallest eigenvalue of S_B^-1 B_r (reduces to the classical SCR for n=1)."""
    return compute_modes(reduced).gscr


def predict_gscr(gscr0: float, gamma: float, z_local: float) -> float:
    """Closed-form gSCR after attaching GFM capacity ratio ``gamma``.

    gSCR = gSCR0 + gamma / z_local, valid for a uniform capacity ratio.
    """
    if not gscr0 > 0:
        raise ValueError("gscr0 must be positive")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if not z_local > 0:
        raise ValueError("z_local must be positive")
    return gscr0 + gamma / z_local


def size_gamma(gscr0: float, target_gscr: float, z_local: float) -> tuple[float, bool]:
    """Invert the sizing law: smallest uniform gamma reaching ``target_gscr``.

    Returns ``(gamma, already_satisfied)``; targets at or below gscr0
    need no reinforcement and yield gamma = 0 with the flag set.
    """
    if not z_local > 0:
        raise ValueError("z_local must be positive")
    if target_gscr <= gscr0:
        return 0.0, True
    return (target_gscr - gscr0) * z_local, False


def terminal_scr_to_gscr(scr_terminal: float, z_series: float) -> float:
    """Map a device-terminal SCR requirement to a transmission-level gSCR.

    Removes the series (transformer) reactance between the device
    terminal and the transmission bus: gscr = 1 / (1/scr - z_series).
    """
    if not scr_terminal > 0:
        raise ValueError("scr_terminal must be positive")
    if z_series < 0:
        raise ValueError("z_series must be non-negative")
    headroom = 1.0 / scr_terminal - z_series
    if headroom <= 0:
        raise ValueError(
            f"z_series={z_series} absorbs the whole impedance budget of "
            f"terminal SCR {scr_terminal} (needs z_series < {1.0 / scr_terminal})"
        )
    return 1.0 / headroom


def size_gfm(
    reduced: KronReducedNetwork,
    target_gscr: float,
    z_local: float,
    capacities_mva=None,
) -> SizingResult:
    """Size the uniform GFM capacity ratio for a reduced network.

    ``capacities_mva`` (farm order) lets the result report per-farm GFM
    capacity in MVA; omitted, those fields stay empty.
    """
    g0 = gscr(reduced)
    gamma, satisfied = size_gamma(g0, target_gscr, z_local)
    if capacities_mva is None:
        per_farm = tuple()
    else:
        per_farm = tuple(gamma * float(c) for c in capacities_mva)
    return SizingResult(
        gscr0=g0,
        target_gscr=target_gscr,
        z_local=z_local,
        gamma_required=gamma,
        farm_ids=reduced.farm_ids,
        gfm_capacity_mva=per_farm,
        already_satisfied=satisfied,
    )


def plan_gfm_units(
    capacities_mva,
    gamma: float,
    unit_mva: float,
    farm_ids: tuple[str, ...] | None = None,
) -> UnitPlan:
    """Round the required GFM capacity up to integer converter units per farm.

    Rounding up guarantees every realized per-farm ratio is at least the
    requested one; the minimum realized ratio is what the uniform-shift
    law can certify for the whole system.
    """
    if not unit_mva > 0:
        raise ValueError("unit_mva must be positive")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    caps = [float(c) for c in capacities_mva]
    if any(c <= 0 for c in caps):
        raise ValueError("farm capacities must be positive")
    if farm_ids is None:
        farm_ids = tuple(f"farm{i + 1}" for i in range(len(caps)))
    counts = []
    for c in caps:
        cnt = math.ceil(gamma * c / unit_mva - 1e-12) if gamma > 0 else 0
        while cnt * unit_mva / c < gamma:  # never round below the request
            cnt += 1
        counts.append(cnt)
    counts = tuple(counts)
    realized = tuple(cnt * unit_mva / c for cnt, c in zip(counts, caps))
    return UnitPlan(
        farm_ids=tuple(farm_ids),
        counts=counts,
        unit_mva=unit_mva,
        requested_gamma=gamma,
        realized_gamma=realized,
        min_realized_gamma=min(realized) if realized else 0.0,
    )
