"""Network description, susceptance matrix assembly, Kron reduction.

The network model is purely susceptive (lossless, no shunts): wind-farm
and interior buses form a grounded Laplacian whose ground reference is
the set of infinite buses.  Interior buses carry no injection and are
eliminated by Kron reduction (Schur complement of the interior block).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

NODE_KINDS = ("wind_farm", "interior", "infinite_bus")

_SYMMETRY_ATOL = 1e-12
_COND_LIMIT = 1e12


class NetworkError(ValueError):
    """Invalid network description (schema, topology or value errors)."""


@dataclass(frozen=True)
class NetworkSpec:
    """Validated declarative network description.

    Node ordering contract: wind farms first in file order, then interior
    nodes in file order.  All matrices and vectors downstream follow this
    ordering.
    """

    s_global_mva: float
    farm_ids: tuple[str, ...]
    interior_ids: tuple[str, ...]
    infinite_ids: tuple[str, ...]
    farm_capacity_mva: tuple[float, ...]
    # merged branches as ((id_a, id_b), b_pu), undirected, a != b
    branches: tuple[tuple[tuple[str, str], float], ...]

    @property
    def n(self) -> int:
        return len(self.farm_ids)

    @property
    def m(self) -> int:
        return len(self.interior_ids)

    @property
    def k(self) -> int:
        return len(self.infinite_ids)

    def __post_init__(self):
        _validate_spec(self)


@dataclass(frozen=True)
class SusceptanceMatrices:
    """Grounded-Laplacian susceptance matrix of the retained buses.

    ``b_full[i, j] = -B_ij`` for i != j and the diagonal sums branch
    susceptances over *all* neighbours, including infinite buses, so the
    matrix is positive definite for any network connected to at least
    one infinite bus.
    """

    b_full: np.ndarray          # (n+m, n+m), symmetric PD
    node_ids: tuple[str, ...]   # wind farms first, then interior
    inf_links: np.ndarray       # (n+m,) susceptance to infinite buses per node
    n_farms: int

    def __post_init__(self):
        b = self.b_full
        if b.shape[0] != b.shape[1] or b.shape[0] != len(self.node_ids):
            raise NetworkError("susceptance matrix shape inconsistent with node list")
        if not np.all(np.isfinite(b)):
            raise NetworkError("susceptance matrix contains non-finite entries")
        if np.max(np.abs(b - b.T), initial=0.0) > _SYMMETRY_ATOL:
            raise NetworkError("susceptance matrix is not symmetric")


@dataclass(frozen=True)
class KronReducedNetwork:
    """Kron-reduced susceptance matrix with the per-farm capacity matrix.

    ``b_r`` is per-unit on the global base; ``s_b`` holds the diagonal of
    the capacity matrix (farm capacity over global base).
    """

    b_r: np.ndarray             # (n, n), symmetric PD
    s_b: np.ndarray             # (n,) positive diagonal entries
    farm_ids: tuple[str, ...]

    def __post_init__(self):
        if self.b_r.shape != (len(self.farm_ids),) * 2:
            raise NetworkError("reduced matrix shape inconsistent with farm list")
        if np.max(np.abs(self.b_r - self.b_r.T), initial=0.0) > _SYMMETRY_ATOL * max(
            1.0, float(np.max(np.abs(self.b_r)))
        ):
            raise NetworkError("reduced susceptance matrix is not symmetric")
        if np.any(self.s_b <= 0):
            raise NetworkError("capacity matrix entries must be positive")


@dataclass(frozen=True)
class GfmAttachment:
    """GFM converter attachment: capacity ratio and local reactance.

    gamma is the GFM-to-farm capacity ratio, uniform (scalar) or per farm
    (vector of length n).  z_local is the per-unit reactance between the
    converter internal voltage and the farm bus, on the converter's own
    capacity base.
    """

    gamma: float | np.ndarray
    z_local: float

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if np.any(g < 0):
            raise NetworkError("gamma must be non-negative")
        if not self.z_local > 0:
            raise NetworkError("z_local must be positive")

    @property
    def y_local(self) -> float:
        return 1.0 / self.z_local


def _validate_spec(spec: NetworkSpec) -> None:
    if spec.s_global_mva <= 0:
        raise NetworkError("s_global_mva must be positive")
    if spec.n < 1:
        raise NetworkError("network needs at least one wind_farm node")
    if spec.k < 1:
        raise NetworkError("no infinite bus in network")
    all_ids = spec.farm_ids + spec.interior_ids + spec.infinite_ids
    dupes = {i for i in all_ids if all_ids.count(i) > 1}
    if dupes:
        raise NetworkError(f"duplicate node id(s): {sorted(dupes)}")
    for fid, cap in zip(spec.farm_ids, spec.farm_capacity_mva):
        if cap <= 0:
            raise NetworkError(f"wind farm '{fid}' capacity must be positive")
    known = set(all_ids)
    for (a, b), bpu in spec.branches:
        if a == b:
            raise NetworkError(f"self-branch on node '{a}'")
        for t in (a, b):
            if t not in known:
                raise NetworkError(f"branch {a}-{b} references unknown node '{t}'")
        if bpu <= 0:
            raise NetworkError(f"branch {a}-{b} susceptance must be positive, got {bpu}")

    # every retained node must reach an infinite bus
    adj: dict[str, set[str]] = {i: set() for i in all_ids}
    for (a, b), _ in spec.branches:
        adj[a].add(b)
        adj[b].add(a)
    reached: set[str] = set()
    stack = list(spec.infinite_ids)
    while stack:
        node = stack.pop()
        if node in reached:
            continue
        reached.add(node)
        stack.extend(adj[node] - reached)
    isolated = [i for i in spec.farm_ids + spec.interior_ids if i not in reached]
    if isolated:
        raise NetworkError(f"node(s) not connected to any infinite bus: {isolated}")


_NODE_KEYS = {"id", "kind", "capacity_mva"}
_BRANCH_KEYS = {"from", "to", "b_pu"}


def parse_network(text: str) -> NetworkSpec:
    """Parse a YAML network document into a validated NetworkSpec.

    Schema: top-level keys ``s_global_mva``, ``nodes`` (list of
    ``{id, kind, capacity_mva}``) and ``branches`` (list of
    ``{from, to, b_pu}``).  Unknown keys are rejected; in particular
    resistance fields are an error, not silently dropped, since the
    model is purely susceptive.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise NetworkError(f"malformed network document: {exc}") from exc
    if not isinstance(doc, dict):
        raise NetworkError("network document must be a mapping")
    extra = set(doc) - {"s_global_mva", "nodes", "branches"}
    if extra:
        raise NetworkError(f"unknown top-level key(s): {sorted(extra)}")
    for key in ("s_global_mva", "nodes", "branches"):
        if key not in doc:
            raise NetworkError(f"missing required key '{key}'")

    s_global = _as_number(doc["s_global_mva"], "s_global_mva")

    farms: list[tuple[str, float]] = []
    interiors: list[str] = []
    infinites: list[str] = []
    if not isinstance(doc["nodes"], list):
        raise NetworkError("'nodes' must be a list")
    for idx, node in enumerate(doc["nodes"]):
        if not isinstance(node, dict):
            raise NetworkError(f"node #{idx} must be a mapping")
        extra = set(node) - _NODE_KEYS
        if extra:
            raise NetworkError(f"node #{idx}: unknown key(s) {sorted(extra)}")
        nid = node.get("id")
        kind = node.get("kind")
        if not isinstance(nid, str) or not nid:
            raise NetworkError(f"node #{idx}: 'id' must be a non-empty string")
        if kind not in NODE_KINDS:
            raise NetworkError(f"node '{nid}': kind must be one of {NODE_KINDS}")
        if kind == "wind_farm":
            if "capacity_mva" not in node:
                raise NetworkError(f"wind farm '{nid}' needs capacity_mva")
            farms.append((nid, _as_number(node["capacity_mva"], f"node '{nid}' capacity_mva")))
        else:
            if "capacity_mva" in node:
                raise NetworkError(f"node '{nid}': capacity_mva only valid on wind_farm nodes")
            (interiors if kind == "interior" else infinites).append(nid)

    if not isinstance(doc["branches"], list):
        raise NetworkError("'branches' must be a list")
    merged: dict[tuple[str, str], float] = {}
    for idx, br in enumerate(doc["branches"]):
        if not isinstance(br, dict):
            raise NetworkError(f"branch #{idx} must be a mapping")
        extra = set(br) - _BRANCH_KEYS
        if extra:
            raise NetworkError(
                f"branch #{idx}: unknown key(s) {sorted(extra)} "
                "(resistive/shunt data is not supported)"
            )
        for key in _BRANCH_KEYS:
            if key not in br:
                raise NetworkError(f"branch #{idx}: missing key '{key}'")
        a, b = br["from"], br["to"]
        if not isinstance(a, str) or not isinstance(b, str):
            raise NetworkError(f"branch #{idx}: 'from'/'to' must be strings")
        bpu = _as_number(br["b_pu"], f"branch {a}-{b} b_pu")
        key = (a, b) if a <= b else (b, a)
        # parallel branches sum (physical parallel lines)
        merged[key] = merged.get(key, 0.0) + bpu

    return NetworkSpec(
        s_global_mva=s_global,
        farm_ids=tuple(f for f, _ in farms),
        interior_ids=tuple(interiors),
        infinite_ids=tuple(infinites),
        farm_capacity_mva=tuple(c for _, c in farms),
        branches=tuple(sorted(merged.items())),
    )


def load_network(path) -> NetworkSpec:
    """Read and parse a network YAML file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise NetworkError(f"cannot read network file '{path}': {exc.strerror}") from exc
    return parse_network(text)


def _as_number(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise NetworkError(f"{what} must be a number, got {value!r}")
    val = float(value)
    if not np.isfinite(val):
        raise NetworkError(f"{what} must be finite")
    return val


def build_susceptance(spec: NetworkSpec) -> SusceptanceMatrices:
    """Assemble the grounded-Laplacian susceptance matrix of retained buses.

    Off-diagonals are -B_ij between retained buses; diagonals sum the
    susceptances of all incident branches, so links to infinite buses
    appear only on the diagonal (grounding terms).
    """
    node_ids = spec.farm_ids + spec.interior_ids
    index = {nid: i for i, nid in enumerate(node_ids)}
    infinite = set(spec.infinite_ids)
    size = len(node_ids)
    b_full = np.zeros((size, size))
    inf_links = np.zeros(size)
    for (a, b), bpu in spec.branches:
        if a in infinite and b in infinite:
            continue  # link between ideal sources carries no information
        if a in infinite or b in infinite:
            retained = b if a in infinite else a
            i = index[retained]
            b_full[i, i] += bpu
            inf_links[i] += bpu
        else:
            i, j = index[a], index[b]
            b_full[i, i] += bpu
            b_full[j, j] += bpu
            b_full[i, j] -= bpu
            b_full[j, i] -= bpu
    return SusceptanceMatrices(
        b_full=b_full, node_ids=node_ids, inf_links=inf_links, n_farms=spec.n
    )


def kron_reduce(mats: SusceptanceMatrices, spec: NetworkSpec) -> KronReducedNetwork:
    """Eliminate interior buses via the Schur complement of the interior block.

    Returns B_r = B1 - B2 B4^-1 B3 together with the capacity matrix
    diagonal S_Bii = S_i / S_global.  With no interior buses the farm
    block is returned unchanged (bit-exact).
    """
    n = mats.n_farms
    b = mats.b_full
    s_b = np.asarray(spec.farm_capacity_mva, dtype=float) / spec.s_global_mva
    if b.shape[0] == n:
        return KronReducedNetwork(b_r=b.copy(), s_b=s_b, farm_ids=spec.farm_ids)
    b1 = b[:n, :n]
    b2 = b[:n, n:]
    b4 = b[n:, n:]
    # conditioning measured against the full matrix scale, so an interior
    # bus hanging on a vanishing branch is caught even when b4 is 1x1
    scale = np.abs(b).max()
    sigma_min = np.linalg.svd(b4, compute_uv=False).min()
    cond = np.inf if sigma_min == 0.0 else scale / sigma_min
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise NetworkError(
            "interior block numerically singular "
            f"(condition estimate {cond:.3g}) for interior nodes {list(mats.node_ids[n:])}"
        )
    b_r = b1 - b2 @ np.linalg.solve(b4, b2.T)
    b_r = 0.5 * (b_r + b_r.T)  # remove roundoff asymmetry
    return KronReducedNetwork(b_r=b_r, s_b=s_b, farm_ids=spec.farm_ids)


def reduce_network(spec: NetworkSpec) -> KronReducedNetwork:
    """Convenience: build the susceptance matrix and Kron-reduce it."""
    return kron_reduce(build_susceptance(spec), spec)


def attach_gfm(reduced: KronReducedNetwork, att: GfmAttachment) -> KronReducedNetwork:
    """Add GFM converters as infinite-bus branches at each farm bus.

    A GFM converter of capacity gamma_i * S_i behind reactance z_local
    (own base) behaves as an ideal source behind that reactance, which on
    the global base adds S_Bii * gamma_i * y_local to the diagonal of the
    reduced susceptance matrix.  The capacity matrix is unchanged: the
    converter is a static branch, not a new dynamic node.
    """
    n = len(reduced.farm_ids)
    gamma = np.asarray(att.gamma, dtype=float)
    if gamma.ndim == 0:
        gamma = np.full(n, float(gamma))
    elif gamma.shape != (n,):
        raise NetworkError(
            f"gamma vector length {gamma.shape[0]} does not match {n} farms"
        )
    b_r = reduced.b_r + np.diag(reduced.s_b * gamma * att.y_local)
    return KronReducedNetwork(b_r=b_r, s_b=reduced.s_b.copy(), farm_ids=reduced.farm_ids)
