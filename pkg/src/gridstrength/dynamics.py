"""Small-signal GFL device model, critical SCR, and multi-farm assembly.

Device model (4 states per converter/farm, per-unit on the device base):

    theta  PLL angle (rad)             dtheta/dt = w_b (kp v_q + ki zeta)
    zeta   PLL integrator (pu*s)       dzeta/dt  = v_q
    i_d    injected d-axis current     di_d/dt   = (p_set / v_d - i_d) / tau
    i_q    injected q-axis current     di_q/dt   = (-q_set / v_d - i_q) / tau

Currents track constant-power setpoints (p_set, q_set) through a
first-order lag; the terminal voltage comes from the quasi-static,
purely susceptive network; the PLL frame couples to the global frame
through e^{j theta}.  Every interaction with the network flows through a
single scalar reactance in the single-machine case, which is what makes
the multi-farm spectrum decouple exactly along the modes of S_B^-1 B_r.

Operating point convention: devices are linearized around rated terminal
conditions, v_d0 = v_infinite, v_q0 = 0, i_d0 = p_set/v_d0,
i_q0 = -q_set/v_d0; the stiff-source magnitude behind the grid reactance
is back-computed from the quasi-static phasor relation.  This pins the
per-unit operating point of every device regardless of grid strength and
makes the state matrix exactly affine in the grid reactance,
a(X) = P + X Q.  Consequence: the critical SCR is the static transfer
limit sqrt(p_set^2 + q_set^2) / v0^2, independent of the PLL gains,
which only shape the oscillatory modes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import yaml

from .network import (
    GfmAttachment,
    KronReducedNetwork,
    NetworkError,
    NetworkSpec,
    attach_gfm,
    reduce_network,
)
from .strength import ModalDecomposition, compute_modes, gscr as _gscr

STATE_CHANNELS = ("pll_angle", "pll_integrator", "i_d", "i_q")

#: verdict band: |max Re| below this (1/s) is 'marginal'
EPS_STAB = 1e-6

_EIG_CROSS_TOL = 1e-8     # |max Re| target for critical-SCR bisection (1/s)
_BRACKET_WIDTH_TOL = 1e-9


class OperatingPointError(ValueError):
    """No admissible quasi-static operating point at the requested SCR."""


class BracketError(ValueError):
    """Critical-SCR bracket does not contain a stability crossing."""


class ConsistencyError(RuntimeError):
    """Eigenvalue verdict disagrees with the gSCR-vs-CgSCR criterion."""


@dataclass(frozen=True)
class GflDeviceParams:
    """Parameters of the grid-following converter small-signal model.

    Gains are per-unit; pll_ki is scaled by the base angular frequency
    inside the model.  v_infinite sets the voltage scale of the
    quasi-static operating point (it equals both the terminal operating
    voltage and the stiff-source magnitude in the zero-transfer limit).
    """

    pll_kp: float
    pll_ki: float
    current_loop_tau: float   # seconds
    p_set: float              # pu on device base
    q_set: float              # pu on device base
    v_infinite: float = 1.0
    base_omega: float = 2.0 * math.pi * 50.0   # rad/s

    def __post_init__(self):
        if not self.pll_kp > 0 or not self.pll_ki > 0:
            raise ValueError("PLL gains must be positive")
        if not self.current_loop_tau > 0:
            raise ValueError("current_loop_tau must be positive")
        if not self.v_infinite > 0:
            raise ValueError("v_infinite must be positive")
        if not self.base_omega > 0:
            raise ValueError("base_omega must be positive")

    @property
    def static_limit_scr(self) -> float:
        """Closed-form critical SCR of the model (apparent loading over v^2)."""
        return math.hypot(self.p_set, self.q_set) / self.v_infinite**2


@dataclass(frozen=True)
class StateSpaceModel:
    """Assembled linear model dx/dt = a x with per-farm power output map.

    ``output`` maps state deviations to per-farm active-power deviation
    (pu on each device base).  ``equilibrium`` holds the operating-point
    state vector the model was linearized around.
    """

    a: np.ndarray                 # (4n, 4n), 1/s
    state_labels: tuple[str, ...]
    output: np.ndarray            # (n, 4n)
    farm_ids: tuple[str, ...]
    equilibrium: np.ndarray       # (4n,)
    theta0: tuple[float, ...]     # equilibrium PLL angle per device (rad)
    v_source: tuple[complex, ...]  # stiff-source phasor seen by each device

    def __post_init__(self):
        if self.a.shape[0] != self.a.shape[1] or self.a.shape[0] != len(self.state_labels):
            raise ValueError("state matrix shape inconsistent with labels")
        if len(set(self.state_labels)) != len(self.state_labels):
            raise ValueError("state labels must be unique")
        if not np.all(np.isfinite(self.a)):
            raise ValueError("state matrix contains non-finite entries")

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.a)


@dataclass(frozen=True)
class StabilityAssessment:
    """Joint verdict from grid strength and eigenvalue analysis."""

    gscr: float
    cgscr: float
    margin: float
    eigenvalues: np.ndarray       # complex, 1/s
    damping_ratios: np.ndarray    # -Re/|lambda| per mode
    verdict: str                  # stable | unstable | marginal
    farm_ids: tuple[str, ...]


def load_device(path) -> GflDeviceParams:
    """Read device parameters from a YAML file.

    Keys: pll_kp, pll_ki, current_loop_tau_s, p_set_pu, q_set_pu,
    base_freq_hz; optional v_infinite_pu (default 1.0).
    """
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise NetworkError(f"cannot read device file '{path}': {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise NetworkError(f"malformed device file: {exc}") from exc
    if not isinstance(doc, dict):
        raise NetworkError("device file must be a mapping")
    required = {"pll_kp", "pll_ki", "current_loop_tau_s", "p_set_pu", "q_set_pu", "base_freq_hz"}
    missing = required - set(doc)
    if missing:
        raise NetworkError(f"device file missing key(s): {sorted(missing)}")
    extra = set(doc) - required - {"v_infinite_pu"}
    if extra:
        raise NetworkError(f"device file has unknown key(s): {sorted(extra)}")
    try:
        return GflDeviceParams(
            pll_kp=float(doc["pll_kp"]),
            pll_ki=float(doc["pll_ki"]),
            current_loop_tau=float(doc["current_loop_tau_s"]),
            p_set=float(doc["p_set_pu"]),
            q_set=float(doc["q_set_pu"]),
            v_infinite=float(doc.get("v_infinite_pu", 1.0)),
            base_omega=2.0 * math.pi * float(doc["base_freq_hz"]),
        )
    except (TypeError, ValueError) as exc:
        raise NetworkError(f"invalid device parameter: {exc}") from exc


# ---------------------------------------------------------------------------
# model assembly
# ---------------------------------------------------------------------------

def _operating_point(dev: GflDeviceParams) -> tuple[float, complex]:
    """Terminal voltage magnitude and current phasor of the rated point."""
    v0 = dev.v_infinite
    i0 = complex(dev.p_set / v0, -dev.q_set / v0)
    return v0, i0


def _check_feasible(dev: GflDeviceParams, x_grid: float, context: str) -> complex:
    """Back out the stiff-source phasor; reject un-lockable operating points.

    The PLL locks on the branch with positive voltage stiffness, which
    requires Re(source phasor) > 0 in the PLL frame.
    """
    v0, i0 = _operating_point(dev)
    source = v0 - 1j * x_grid * i0   # V_inf e^{-j theta0}
    if source.real <= 0:
        raise OperatingPointError(
            f"operating point infeasible at this SCR ({context}: "
            f"grid reactance {x_grid:.6g} pu, reactive loading "
            f"{dev.q_set:.6g} pu collapses the PLL-locked equilibrium)"
        )
    return source


def _device_pq_blocks(dev: GflDeviceParams) -> tuple[np.ndarray, np.ndarray]:
    """Constant blocks of the affine state matrix a(X) = P + X Q."""
    wb = dev.base_omega
    kp, ki, tau = dev.pll_kp, dev.pll_ki, dev.current_loop_tau
    v0 = dev.v_infinite
    p, q = dev.p_set, dev.q_set
    P = np.array([
        [-wb * kp * v0, wb * ki, 0.0, 0.0],
        [-v0, 0.0, 0.0, 0.0],
        [0.0, 0.0, -1.0 / tau, 0.0],
        [0.0, 0.0, 0.0, -1.0 / tau],
    ])
    Q = np.array([
        [wb * kp * q / v0, 0.0, wb * kp, 0.0],
        [q / v0, 0.0, 1.0, 0.0],
        [p**2 / v0**3 / tau, 0.0, 0.0, p / v0**2 / tau],
        [-p * q / v0**3 / tau, 0.0, 0.0, -q / v0**2 / tau],
    ])
    return P, Q


def _labels(farm_ids) -> tuple[str, ...]:
    return tuple(f"{fid}.{ch}" for fid in farm_ids for ch in STATE_CHANNELS)


def _output_row(dev: GflDeviceParams, dv_dx: np.ndarray, dev_index: int, n: int) -> np.ndarray:
    """d(active power)/d(state) of one device given terminal-voltage partials.

    P_i = Re(v_i conj(i_i)); dv_dx holds complex d(v_i)/d(state) over the
    full 4n state vector.
    """
    v0, i0 = _operating_point(dev)
    row = np.real(np.conj(i0) * dv_dx)
    row[4 * dev_index + 2] += v0      # dP/d(i_d) direct term
    return row


def build_smib_model(dev: GflDeviceParams, scr: float) -> StateSpaceModel:
    """Linearized single-machine-infinite-bus model at a given SCR.

    The grid is a single reactance X = 1/scr on the device base; the
    state matrix is the exact analytic Jacobian P + X Q at the rated
    operating point.
    """
    if not scr > 0:
        raise ValueError("scr must be positive")
    x_grid = 1.0 / scr
    source = _check_feasible(dev, x_grid, "single-machine grid")
    P, Q = _device_pq_blocks(dev)
    a = P + x_grid * Q
    v0, i0 = _operating_point(dev)
    theta0 = -np.angle(source)  # source = V_inf e^{-j theta0}
    dv_dx = np.array([-1j * v0 - x_grid * i0, 0.0, 1j * x_grid, -x_grid])
    output = _output_row(dev, dv_dx, 0, 1)[None, :]
    return StateSpaceModel(
        a=a,
        state_labels=_labels(("device",)),
        output=output,
        farm_ids=("device",),
        # state angles are measured from the equilibrium PLL frame, so the
        # fixed point sits at theta = 0; theta0 records the offset to the
        # stiff source for reporting only
        equilibrium=np.array([0.0, 0.0, i0.real, i0.imag]),
        theta0=(float(theta0),),
        v_source=(complex(source),),
    )


def smib_rhs(dev: GflDeviceParams, scr: float, x: np.ndarray) -> np.ndarray:
    """Nonlinear SMIB right-hand side, for Jacobian validation by tests.

    State: [theta, zeta, i_d, i_q]; the single-machine case of
    :func:`full_model_rhs` with b_r = scr on a unit capacity base.
    """
    _check_feasible(dev, 1.0 / scr, "single-machine grid")
    reduced = KronReducedNetwork(
        b_r=np.array([[float(scr)]]), s_b=np.array([1.0]), farm_ids=("device",)
    )
    return full_model_rhs(dev, reduced, np.asarray(x, dtype=float))


def direct_full_model(dev: GflDeviceParams, reduced: KronReducedNetwork) -> StateSpaceModel:
    """Directly assembled 4n-state model of n homogeneous farms.

    Devices couple through the quasi-static susceptance network: in the
    global frame V = E + j M c with M = B_r^-1 S_B, c the injected
    current phasors, and E the stiff-source contribution.  E is chosen
    so every farm sits at its rated terminal point (the boundary
    condition a dispatcher would enforce); terminal voltages are
    eliminated algebraically and the Jacobian is analytic.  No modal
    transform is used anywhere.
    """
    n = len(reduced.farm_ids)
    v0, i0 = _operating_point(dev)
    m = np.linalg.solve(reduced.b_r, np.diag(reduced.s_b))
    # rated point: theta_i = 0, v_i = v0 for every farm
    c0 = np.full(n, i0)
    e_vec = v0 * np.ones(n) - 1j * (m @ c0)
    # defensive feasibility: each source must keep a PLL-lockable point
    for idx, e in enumerate(e_vec):
        if e.real <= 0:
            raise OperatingPointError(
                f"operating point infeasible at this SCR "
                f"(farm '{reduced.farm_ids[idx]}' source phasor collapsed)"
            )
    wb, kp, ki, tau = dev.base_omega, dev.pll_kp, dev.pll_ki, dev.current_loop_tau
    p, q = dev.p_set, dev.q_set
    size = 4 * n
    a = np.zeros((size, size))
    output = np.zeros((n, size))
    # complex partials of v_i w.r.t. every state, at the rated point
    for i in range(n):
        dv = np.zeros(size, dtype=complex)
        for k in range(n):
            mik = m[i, k]
            dv[4 * k + 0] += -mik * c0[k]           # d v_i / d theta_k (coupling)
            dv[4 * k + 2] += 1j * mik               # d v_i / d i_dk
            dv[4 * k + 3] += -mik                   # d v_i / d i_qk
        dv[4 * i + 0] += -1j * v0                   # own-frame rotation
        dvd = dv.real
        dvq = dv.imag
        a[4 * i + 0, :] = wb * kp * dvq
        a[4 * i + 0, 4 * i + 1] += wb * ki
        a[4 * i + 1, :] = dvq
        a[4 * i + 2, :] = (-p / v0**2) * dvd / tau
        a[4 * i + 2, 4 * i + 2] += -1.0 / tau
        a[4 * i + 3, :] = (q / v0**2) * dvd / tau
        a[4 * i + 3, 4 * i + 3] += -1.0 / tau
        output[i, :] = np.real(np.conj(i0) * dv)
        output[i, 4 * i + 2] += v0
    equilibrium = np.tile([0.0, 0.0, i0.real, i0.imag], n)
    return StateSpaceModel(
        a=a,
        state_labels=_labels(reduced.farm_ids),
        output=output,
        farm_ids=reduced.farm_ids,
        equilibrium=equilibrium,
        theta0=tuple(0.0 for _ in range(n)),
        v_source=tuple(complex(e) for e in e_vec),
    )


def full_model_rhs(
    dev: GflDeviceParams, reduced: KronReducedNetwork, x: np.ndarray
) -> np.ndarray:
    """Nonlinear right-hand side of the directly assembled multi-farm model.

    Used by tests to finite-difference-check the analytic Jacobian of
    :func:`direct_full_model` at its equilibrium.
    """
    n = len(reduced.farm_ids)
    v0, i0 = _operating_point(dev)
    m = np.linalg.solve(reduced.b_r, np.diag(reduced.s_b))
    e_vec = v0 * np.ones(n) - 1j * (m @ np.full(n, i0))
    theta = x[0::4]
    zeta = x[1::4]
    i_d = x[2::4]
    i_q = x[3::4]
    c = np.exp(1j * theta) * (i_d + 1j * i_q)
    v = np.exp(-1j * theta) * (e_vec + 1j * (m @ c))
    v_d, v_q = v.real, v.imag
    wb, kp, ki, tau = dev.base_omega, dev.pll_kp, dev.pll_ki, dev.current_loop_tau
    out = np.empty_like(x)
    out[0::4] = wb * (kp * v_q + ki * zeta)
    out[1::4] = v_q
    out[2::4] = (dev.p_set / v_d - i_d) / tau
    out[3::4] = (-dev.q_set / v_d - i_q) / tau
    return out


def modal_eigenvalues(dev: GflDeviceParams, modes: ModalDecomposition) -> np.ndarray:
    """Full-system spectrum predicted by modal decoupling.

    Returns the multiset union over network modes lambda_i of the SMIB
    spectra at scr = lambda_i (4n eigenvalues for n farms), relying on
    per-unit homogeneous device dynamics.
    """
    spectra = []
    for lam in modes.lambdas:
        try:
            model = build_smib_model(dev, float(lam))
        except OperatingPointError as exc:
            raise OperatingPointError(
                f"network mode lambda={lam:.6g}: {exc}"
            ) from exc
        spectra.append(np.linalg.eigvals(model.a))
    return np.concatenate(spectra)


# ---------------------------------------------------------------------------
# critical SCR
# ---------------------------------------------------------------------------

def _max_re(dev: GflDeviceParams, scr: float) -> float:
    return float(np.max(np.linalg.eigvals(build_smib_model(dev, scr).a).real))


def compute_cgscr(
    dev: GflDeviceParams,
    bracket: tuple[float, float] = (0.9, 6.0),
) -> tuple[float, bool]:
    """Critical SCR of a single device by bisection on the spectral abscissa.

    Requires instability at the weak end of the bracket and stability at
    the strong end.  Returns ``(cgscr, monotone)``; a non-monotone sign
    pattern across the bracket is reported with a warning and
    ``monotone=False`` rather than an error.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not 0 < lo < hi:
        raise ValueError("bracket must satisfy 0 < lo < hi")
    f_lo = _max_re(dev, lo)
    f_hi = _max_re(dev, hi)
    if not (f_lo > 0 and f_hi < 0):
        raise BracketError(
            f"device {'stable' if f_lo <= 0 else 'unstable'} over entire bracket; "
            f"CgSCR outside [{lo}, {hi}] "
            f"(max Re at lo={f_lo:.3g} 1/s, at hi={f_hi:.3g} 1/s)"
        )
    # sign-pattern probe at interior points
    probes = np.linspace(lo, hi, 9)
    signs = [math.copysign(1.0, _max_re(dev, s)) for s in probes]
    changes = sum(1 for a, b in zip(signs, signs[1:]) if a != b)
    monotone = changes <= 1
    if not monotone:
        warnings.warn(
            "non-monotone stability pattern across the bracket; "
            "returned crossing is the bisection limit from the given endpoints",
            RuntimeWarning,
            stacklevel=2,
        )
    while hi - lo > _BRACKET_WIDTH_TOL:
        mid = 0.5 * (lo + hi)
        f_mid = _max_re(dev, mid)
        if abs(f_mid) < _EIG_CROSS_TOL:
            return mid, monotone
        if f_mid > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), monotone


def assess(
    spec: NetworkSpec,
    dev: GflDeviceParams,
    att: GfmAttachment | None = None,
) -> StabilityAssessment:
    """Full stability assessment of a network of homogeneous GFL farms.

    Computes the gSCR of the (optionally GFM-augmented) network, the
    device CgSCR, the spectrum via modal decoupling, damping ratios and
    the verdict; the eigenvalue verdict must agree with the
    gSCR > CgSCR criterion, otherwise a ConsistencyError is raised.
    """
    reduced = reduce_network(spec)
    if att is not None:
        reduced = attach_gfm(reduced, att)
    modes = compute_modes(reduced)
    g = modes.gscr
    cg, _ = compute_cgscr(dev)
    eig = modal_eigenvalues(dev, modes)
    max_re = float(np.max(eig.real))
    if max_re < -EPS_STAB:
        verdict = "stable"
    elif max_re > EPS_STAB:
        verdict = "unstable"
    else:
        verdict = "marginal"
    margin = g - cg
    # eigenvalue slope vs scr is O(10..100)/s per unit margin; only check
    # agreement outside the band where the two definitions of "marginal"
    # can legitimately straddle each other.
    if abs(margin) > 1e-6 and verdict != "marginal":
        expected = "stable" if margin > 0 else "unstable"
        if verdict != expected:
            raise ConsistencyError(
                f"eigenvalue verdict '{verdict}' contradicts gSCR criterion "
                f"(gSCR={g:.9g}, CgSCR={cg:.9g})"
            )
    damping = -eig.real / np.abs(eig)
    return StabilityAssessment(
        gscr=g,
        cgscr=cg,
        margin=margin,
        eigenvalues=eig,
        damping_ratios=damping,
        verdict=verdict,
        farm_ids=reduced.farm_ids,
    )
