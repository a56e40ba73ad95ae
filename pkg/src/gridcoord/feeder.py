"""Linearized unbalanced distribution feeder model and nonlinear oracle.

The linear model works in squared voltage magnitudes Y (pu^2) per
bus-phase.  For an oriented radial feeder the voltage drop along each
line couples phases through the rotation approximation
``V_phi / V_psi ~ exp(j(theta_phi - theta_psi))`` with phase angles
(0, -120, +120) degrees for (a, b, c).  With 3x3 series impedance
Z = R + jX and gamma the rotation matrix, the real drop matrices are

    ZP = 2 * Re(gamma * conj(Z))        (per line, present phases only)
    ZQ = -2 * Im(gamma * conj(Z))

so that Y_up - Y_down = ZP @ P_flow + ZQ @ Q_flow for lossless flows.
ZIP loads are linearized in Y; their constant part moves to the right
hand side and their Y-proportional part forms the load-coupling matrix
K.  A backward/forward sweep on the full nonlinear equations (ZIP
evaluated at actual |V|) provides the validation oracle and the field
simulator plant.

Bus-phases are flattened in file order with phases a, b, c inside each
bus; missing phases are dropped (no zero padding).  All matrices are
indexed in this order.

Partition-block naming: superscripts follow the from/to convention, so
block "xy" maps x-side quantities into y-side rows (e.g. ``kuo`` has
observable rows and unobservable columns).  This is the only reading
under which the reduced observable-voltage equation is dimensionally
consistent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import numkit
from .errors import (InvalidPartition, NoConvergence, ParseError,
                     SingularMatrix, ValidationError)

PHASES = "abc"
_PHASE_ANGLE = {"a": 0.0, "b": -2.0 * math.pi / 3.0, "c": 2.0 * math.pi / 3.0}


@dataclass(frozen=True)
class Bus:
    bus_id: str
    phases: str


@dataclass(frozen=True)
class Line:
    from_bus: str
    to_bus: str
    z: np.ndarray  # complex 3x3 over abc slots, pu


@dataclass(frozen=True)
class ZipLoad:
    bus: str
    phase: str
    p_kw: float
    q_kvar: float
    a0: float
    a1: float
    a2: float


@dataclass(frozen=True)
class DerPlacement:
    bus: str
    phase: str
    inverter_id: str


@dataclass(frozen=True)
class OrientedLine:
    index: int          # position in the file order
    up: str
    down: str
    phases: str         # phases carried (= phases of the downstream bus)
    z: np.ndarray       # complex submatrix over `phases`


class FeederModel:
    """Validated radial multiphase feeder with flattened bus-phase indexing."""

    def __init__(self, s_base_kva, v_base_kv, substation_bus, y0_sub,
                 buses, lines, loads, ders, observable_ids):
        self.s_base_kva = float(s_base_kva)
        self.v_base_kv = float(v_base_kv)
        self.substation_bus = substation_bus
        self.y0_sub = dict(y0_sub)            # phase -> pu^2
        self.buses = list(buses)
        self.lines = list(lines)
        self.loads = list(loads)
        self.ders = list(ders)
        self.observable_ids = list(observable_ids)
        self._derive()

    # -- derivation ----------------------------------------------------------

    def _derive(self):
        bus_ids = [b.bus_id for b in self.buses]
        if len(set(bus_ids)) != len(bus_ids):
            raise ValidationError("duplicate bus ids")
        if self.substation_bus not in bus_ids:
            raise ValidationError(f"substation bus {self.substation_bus} not defined")
        self.bus_phases = {b.bus_id: "".join(p for p in PHASES if p in b.phases)
                           for b in self.buses}
        for b in self.buses:
            if not b.phases or any(p not in PHASES for p in b.phases):
                raise ValidationError(f"bus {b.bus_id}: bad phase set {b.phases!r}")
        sub = self.substation_bus
        for p in self.bus_phases[sub]:
            if p not in self.y0_sub:
                raise ValidationError(f"substation phase {p} missing from y0")

        if len(self.lines) != len(self.buses) - 1:
            raise ValidationError(
                f"{len(self.lines)} lines with {len(self.buses)} buses: not radial")
        adj: dict[str, list[tuple[str, int]]] = {b: [] for b in bus_ids}
        for idx, ln in enumerate(self.lines):
            if ln.from_bus not in adj or ln.to_bus not in adj:
                raise ValidationError(f"line {ln.from_bus}-{ln.to_bus}: unknown bus")
            adj[ln.from_bus].append((ln.to_bus, idx))
            adj[ln.to_bus].append((ln.from_bus, idx))

        parent: dict[str, tuple[str, int]] = {}
        order = [sub]
        seen = {sub}
        queue = [sub]
        while queue:
            cur = queue.pop(0)
            for nxt, idx in adj[cur]:
                if nxt in seen:
                    continue
                seen.add(nxt)
                parent[nxt] = (cur, idx)
                order.append(nxt)
                queue.append(nxt)
        if len(seen) != len(bus_ids):
            raise ValidationError("feeder graph is not connected")
        self.bus_order = order

        self.oriented: list[OrientedLine] = []
        for idx, ln in enumerate(self.lines):
            if ln.to_bus in parent and parent[ln.to_bus][1] == idx:
                up, down = ln.from_bus, ln.to_bus
            elif ln.from_bus in parent and parent[ln.from_bus][1] == idx:
                up, down = ln.to_bus, ln.from_bus
            else:
                raise ValidationError(
                    f"line {ln.from_bus}-{ln.to_bus} closes a cycle")
            down_ph = self.bus_phases[down]
            up_ph = self.bus_phases[up]
            if any(p not in up_ph for p in down_ph):
                raise ValidationError(
                    f"bus {down} carries phases {down_ph} not present upstream at {up}")
            sel = [PHASES.index(p) for p in down_ph]
            zsub = np.asarray(ln.z, dtype=complex)[np.ix_(sel, sel)]
            if not np.all(np.isfinite(zsub.view(float))):
                raise ValidationError(f"line {up}-{down}: non-finite impedance")
            self.oriented.append(OrientedLine(idx, up, down, down_ph, zsub))
        self.oriented.sort(key=lambda ol: ol.index)

        # flattened bus-phase index (file order, phases a,b,c, substation excluded)
        self.nodes: list[tuple[str, str]] = []
        for b in self.buses:
            if b.bus_id == sub:
                continue
            for p in self.bus_phases[b.bus_id]:
                self.nodes.append((b.bus_id, p))
        self.node_ids = [f"{b}.{p}" for b, p in self.nodes]
        self.node_index = {node: k for k, node in enumerate(self.nodes)}
        self.n_nodes = len(self.nodes)

        # line-phase flattening (file order, downstream phases a,b,c)
        self.linephases: list[tuple[int, str]] = []
        for ol in self.oriented:
            for p in ol.phases:
                self.linephases.append((ol.index, p))
        if len(self.linephases) != self.n_nodes:
            raise ValidationError("line phases do not cover the bus-phase set")

        # per-node load model (pu) and substation reference
        self.p0 = np.zeros(self.n_nodes)
        self.q0 = np.zeros(self.n_nodes)
        self.a0v = np.ones(self.n_nodes)
        self.a1v = np.zeros(self.n_nodes)
        self.a2v = np.zeros(self.n_nodes)
        claimed = set()
        for ld in self.loads:
            key = (ld.bus, ld.phase)
            if key not in self.node_index:
                raise ValidationError(f"load at unknown bus-phase {ld.bus}.{ld.phase}")
            if key in claimed:
                raise ValidationError(f"multiple loads at {ld.bus}.{ld.phase}")
            claimed.add(key)
            if abs(ld.a0 + ld.a1 + ld.a2 - 1.0) > 1e-9:
                raise ValidationError(
                    f"ZIP fractions at {ld.bus}.{ld.phase} sum to "
                    f"{ld.a0 + ld.a1 + ld.a2}, expected 1")
            k = self.node_index[key]
            self.p0[k] = ld.p_kw / self.s_base_kva
            self.q0[k] = ld.q_kvar / self.s_base_kva
            self.a0v[k], self.a1v[k], self.a2v[k] = ld.a0, ld.a1, ld.a2

        self.y0_node = np.array([self.y0_sub[p] for _, p in self.nodes])
        if np.any(self.y0_node <= 0):
            raise ValidationError("substation squared voltages must be positive")

        self.der_nodes = []
        self.der_inverter_ids = []
        for der in self.ders:
            key = (der.bus, der.phase)
            if key not in self.node_index:
                raise ValidationError(f"DER at unknown bus-phase {der.bus}.{der.phase}")
            self.der_nodes.append(self.node_index[key])
            self.der_inverter_ids.append(der.inverter_id)

        for nid in self.observable_ids:
            if nid not in self.node_ids:
                raise ValidationError(f"observable id {nid} is not a bus-phase")

    # -- convenience ----------------------------------------------------------

    def node_of(self, bus, phase) -> int:
        return self.node_index[(bus, phase)]

    def scale_loads(self, factor: float) -> "FeederModel":
        loads = [replace(ld, p_kw=ld.p_kw * factor, q_kvar=ld.q_kvar * factor)
                 for ld in self.loads]
        return FeederModel(self.s_base_kva, self.v_base_kv, self.substation_bus,
                           self.y0_sub, self.buses, self.lines, loads, self.ders,
                           self.observable_ids)


def load_feeder(document, load_scale: float = 1.0) -> FeederModel:
    """Parse and validate a feeder description (dict, JSON text, or path)."""
    if isinstance(document, (str, Path)):
        path = Path(document)
        try:
            if path.exists():
                text = path.read_text(encoding="utf-8")
            else:
                text = str(document)
            doc = json.loads(text)
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot parse feeder document: {exc}") from exc
    elif isinstance(document, dict):
        doc = document
    else:
        raise ParseError(f"unsupported feeder document type {type(document)!r}")

    try:
        base = doc["base"]
        subst = doc["substation"]
        buses = [Bus(str(b["id"]), str(b["phases"])) for b in doc["buses"]]
        lines = []
        for ln in doc["lines"]:
            z = np.zeros((3, 3), dtype=complex)
            raw = ln["z"]
            for i in range(3):
                for j in range(3):
                    re, im = raw[i][j]
                    z[i, j] = complex(re, im)
            lines.append(Line(str(ln["from"]), str(ln["to"]), z))
        loads = [ZipLoad(str(l["bus"]), str(l["phase"]),
                         float(l["p_kw"]) * load_scale,
                         float(l["q_kvar"]) * load_scale,
                         float(l["a0"]), float(l["a1"]), float(l["a2"]))
                 for l in doc.get("loads", [])]
        ders = [DerPlacement(str(d["bus"]), str(d["phase"]), str(d["inverter_id"]))
                for d in doc.get("ders", [])]
        sub_bus = str(subst["bus"])
        sub_phases = next(b.phases for b in buses if b.bus_id == sub_bus)
        y0_list = [float(v) for v in subst["y0"]]
        y0 = {p: y0_list[k] for k, p in enumerate(sub_phases)}
        observable = [str(x) for x in doc.get("observable", [])]
        return FeederModel(float(base["s_kva"]), float(base["v_kv"]), sub_bus, y0,
                           buses, lines, loads, ders, observable)
    except (KeyError, IndexError, TypeError, StopIteration) as exc:
        raise ParseError(f"feeder document missing or malformed field: {exc}") from exc


# ---------------------------------------------------------------------------
# sensitivity blocks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ObservablePartition:
    observable: np.ndarray      # node indices, model order
    unobservable: np.ndarray
    controllable: np.ndarray    # DER node indices

    @property
    def n_o(self):
        return len(self.observable)

    @property
    def n_u(self):
        return len(self.unobservable)


def make_partition(model: FeederModel, observable_ids=None) -> ObservablePartition:
    ids = model.observable_ids if observable_ids is None else list(observable_ids)
    idx = []
    for nid in ids:
        if nid not in model.node_ids:
            raise InvalidPartition(f"observable id {nid} is not a bus-phase")
        idx.append(model.node_ids.index(nid))
    obs = np.array(sorted(set(idx)), dtype=int)
    unobs = np.array([k for k in range(model.n_nodes) if k not in set(idx)], dtype=int)
    return ObservablePartition(obs, unobs, np.array(model.der_nodes, dtype=int))


@dataclass
class SensitivityBlocks:
    """Connectivity, equivalents, load coupling, and optional partition blocks.

    Block names use the from/to superscript convention described in the
    module docstring: ``kuo`` maps unobservable quantities to observable
    rows (shape n_o x n_u), ``kou`` the reverse, and similarly for the
    ``r*`` / ``x*`` blocks.
    """

    m0: np.ndarray
    m: np.ndarray
    req: np.ndarray
    xeq: np.ndarray
    k: np.ndarray
    y0: np.ndarray
    p_const: np.ndarray   # constant net-load part, pu
    q_const: np.ndarray
    p_coef: np.ndarray    # Y-proportional load coefficients, pu
    q_coef: np.ndarray
    partition: ObservablePartition | None = None
    koo: np.ndarray | None = None
    kou: np.ndarray | None = None
    kuo: np.ndarray | None = None
    kuu: np.ndarray | None = None
    roo: np.ndarray | None = None
    rou: np.ndarray | None = None
    ruo: np.ndarray | None = None
    ruu: np.ndarray | None = None
    xoo: np.ndarray | None = None
    xou: np.ndarray | None = None
    xuo: np.ndarray | None = None
    xuu: np.ndarray | None = None
    k1: np.ndarray | None = None
    c2: np.ndarray | None = None

    @property
    def kb(self):
        return self.k - np.eye(self.k.shape[0])


def build_connectivity(model: FeederModel):
    """Reduced incidence matrices (M0, M) over line-phases.

    M is node x line-phase with +1 on the upstream bus-phase and -1 on
    the downstream one; M0 is line-phase x substation-phase with +1
    where the line leaves the substation.  M is invertible for a valid
    radial feeder.
    """
    n = model.n_nodes
    sub_phases = model.bus_phases[model.substation_bus]
    M = np.zeros((n, n))
    M0 = np.zeros((n, len(sub_phases)))
    by_index = {ol.index: ol for ol in model.oriented}
    for col, (lidx, p) in enumerate(model.linephases):
        ol = by_index[lidx]
        M[model.node_of(ol.down, p), col] = -1.0
        if ol.up == model.substation_bus:
            M0[col, sub_phases.index(p)] = 1.0
        else:
            M[model.node_of(ol.up, p), col] = 1.0
    return M0, M


def _gamma(phases: str) -> np.ndarray:
    ang = np.array([_PHASE_ANGLE[p] for p in phases])
    return np.exp(1j * (ang[:, None] - ang[None, :]))


def build_equivalents(model: FeederModel, M0, M):
    """Equivalent drop matrices Req, Xeq = M^-T Z M^-1 on node indexing."""
    n = model.n_nodes
    ZP = np.zeros((n, n))
    ZQ = np.zeros((n, n))
    pos = 0
    for ol in model.oriented:
        k = len(ol.phases)
        g = _gamma(ol.phases)
        zp = 2.0 * np.real(g * np.conj(ol.z))
        zq = -2.0 * np.imag(g * np.conj(ol.z))
        ZP[pos:pos + k, pos:pos + k] = zp
        ZQ[pos:pos + k, pos:pos + k] = zq
        pos += k
    minv = numkit.solve_linear(M, np.eye(n))
    req = minv.T @ ZP @ minv
    xeq = minv.T @ ZQ @ minv
    return req, xeq


def build_K(model: FeederModel, req, xeq, y0_node=None):
    """Load-coupling matrix K = I + Req D(p_coef) + Xeq D(q_coef)."""
    y0 = model.y0_node if y0_node is None else np.asarray(y0_node, dtype=float)
    coef = model.a1v + model.a2v / (2.0 * np.sqrt(y0))
    p_coef = model.p0 * coef
    q_coef = model.q0 * coef
    K = np.eye(model.n_nodes) + req @ np.diag(p_coef) + xeq @ np.diag(q_coef)
    numkit.solve_linear(K, np.eye(model.n_nodes))  # raises SingularMatrix early
    return K


def build_blocks(model: FeederModel) -> SensitivityBlocks:
    """Assemble the full set of linear-model matrices for a feeder."""
    M0, M = build_connectivity(model)
    req, xeq = build_equivalents(model, M0, M)
    K = build_K(model, req, xeq)
    y0 = model.y0_node
    const = model.a0v + model.a2v * np.sqrt(y0) / 2.0
    coef = model.a1v + model.a2v / (2.0 * np.sqrt(y0))
    return SensitivityBlocks(
        m0=M0, m=M, req=req, xeq=xeq, k=K, y0=y0,
        p_const=model.p0 * const, q_const=model.q0 * const,
        p_coef=model.p0 * coef, q_coef=model.q0 * coef)


def lindist_voltages(blocks: SensitivityBlocks, p_g, q_g):
    """Solve K Y = Y0 + Req (P_G - P_load) + Xeq (Q_G - Q_load) for Y (pu^2)."""
    rhs = (blocks.y0 + blocks.req @ (np.asarray(p_g, float) - blocks.p_const)
           + blocks.xeq @ (np.asarray(q_g, float) - blocks.q_const))
    return numkit.solve_linear(blocks.k, rhs)


def voltage_from_Y(y, y0):
    """First-order magnitude estimate V = Y / (2 sqrt(Y0)) + sqrt(Y0) / 2."""
    y0 = np.asarray(y0, dtype=float)
    return np.asarray(y, dtype=float) / (2.0 * np.sqrt(y0)) + np.sqrt(y0) / 2.0


def net_injections(blocks: SensitivityBlocks, y, p_g, q_g):
    p_net = np.asarray(p_g, float) - blocks.p_const - blocks.p_coef * y
    q_net = np.asarray(q_g, float) - blocks.q_const - blocks.q_coef * y
    return p_net, q_net


def line_flows(blocks: SensitivityBlocks, y, p_g, q_g):
    """Lossless line-phase flows: M P_tl = net injections."""
    p_net, q_net = net_injections(blocks, y, p_g, q_g)
    p_tl = numkit.solve_linear(blocks.m, p_net)
    q_tl = numkit.solve_linear(blocks.m, q_net)
    return p_tl, q_tl


def substation_flow(blocks: SensitivityBlocks, y, p_g, q_g):
    """Net feeder injection seen at the substation (sum of nodal net injections)."""
    p_net, q_net = net_injections(blocks, y, p_g, q_g)
    return float(np.sum(p_net)), float(np.sum(q_net))


# ---------------------------------------------------------------------------
# nonlinear backward/forward sweep oracle
# ---------------------------------------------------------------------------

@dataclass
class BfmResult:
    v: np.ndarray           # complex voltage per node
    v_mag: np.ndarray
    s_sub: complex          # total complex power flowing into the feeder, pu
    s_sub_phase: dict       # per substation phase
    sweeps: int

    @property
    def q_export(self):
        """Reactive power exported to the grid (injection convention)."""
        return -self.s_sub.imag

    @property
    def p_export(self):
        return -self.s_sub.real


def bfm_oracle(model: FeederModel, p_g, q_g, tol: float = 1e-8,
               max_sweeps: int = 100) -> BfmResult:
    """Fixed-point backward/forward sweep on the nonlinear branch-flow model.

    ZIP loads are evaluated at the actual voltage magnitude each sweep;
    losses are fully represented.  Raises :class:`NoConvergence` when the
    maximum voltage update stays above ``tol`` after ``max_sweeps``.
    """
    p_g = np.asarray(p_g, dtype=float)
    q_g = np.asarray(q_g, dtype=float)
    sub = model.substation_bus
    sub_phases = model.bus_phases[sub]
    vs = {p: math.sqrt(model.y0_sub[p]) * np.exp(1j * _PHASE_ANGLE[p])
          for p in sub_phases}

    v = np.array([math.sqrt(model.y0_sub[p]) * np.exp(1j * _PHASE_ANGLE[p])
                  for _, p in model.nodes], dtype=complex)
    s0 = model.p0 + 1j * model.q0

    children: dict[str, list[OrientedLine]] = {b.bus_id: [] for b in model.buses}
    parent_line: dict[str, OrientedLine] = {}
    for ol in model.oriented:
        children[ol.up].append(ol)
        parent_line[ol.down] = ol
    order = model.bus_order  # BFS order; reversed it visits leaves first
    node_slice = {}
    for b in model.buses:
        if b.bus_id == sub:
            continue
        node_slice[b.bus_id] = np.array(
            [model.node_of(b.bus_id, p) for p in model.bus_phases[b.bus_id]], dtype=int)

    line_current: dict[int, np.ndarray] = {}
    for sweep in range(1, max_sweeps + 1):
        vmag = np.abs(v)
        zip_mult = model.a0v + model.a1v * vmag ** 2 + model.a2v * vmag
        s_net = (p_g + 1j * q_g) - s0 * zip_mult
        i_inj = np.conj(s_net / v)

        # backward: accumulate line currents from the leaves
        for bus in reversed(order):
            if bus == sub:
                continue
            nodes = node_slice[bus]
            cur = -i_inj[nodes].copy()
            ph = model.bus_phases[bus]
            for child in children[bus]:
                child_cur = line_current[child.index]
                for k, p in enumerate(child.phases):
                    cur[ph.index(p)] += child_cur[k]
            line_current[parent_line[bus].index] = cur

        # forward: propagate voltages from the substation
        max_dv = 0.0
        for ol in model.oriented:
            if ol.up == sub:
                v_up = np.array([vs[p] for p in ol.phases])
            else:
                up_nodes = node_slice[ol.up]
                up_ph = model.bus_phases[ol.up]
                v_up = np.array([v[up_nodes[up_ph.index(p)]] for p in ol.phases])
            v_new = v_up - ol.z @ line_current[ol.index]
            nodes = node_slice[ol.down]
            max_dv = max(max_dv, float(np.max(np.abs(v_new - v[nodes]))))
            v[nodes] = v_new
        if max_dv < tol:
            s_phase = {}
            for ol in model.oriented:
                if ol.up != sub:
                    continue
                for k, p in enumerate(ol.phases):
                    s_phase[p] = s_phase.get(p, 0.0) + vs[p] * np.conj(line_current[ol.index][k])
            total = complex(sum(s_phase.values()))
            return BfmResult(v.copy(), np.abs(v), total, s_phase, sweep)
    raise NoConvergence(f"backward/forward sweep above {tol} after {max_sweeps} sweeps")


# ---------------------------------------------------------------------------
# observable / unobservable partition
# ---------------------------------------------------------------------------

def partition_blocks(blocks: SensitivityBlocks,
                     partition: ObservablePartition) -> SensitivityBlocks:
    """Extract the 12 partition blocks plus ground-truth K1 and C2.

    The controllable (DER) set must be contained in the observable set.
    C2 is evaluated with the model's unobservable constant net loads
    (there is no generation on unobservable bus-phases).
    """
    if not set(partition.controllable).issubset(set(partition.observable)):
        raise InvalidPartition("controllable DER bus-phases must be observable")
    o = partition.observable
    u = partition.unobservable
    kb = blocks.kb
    pick = lambda mat, rows, cols: mat[np.ix_(rows, cols)]
    koo = pick(kb, o, o)
    kou = pick(kb, u, o)   # observable -> unobservable rows
    kuo = pick(kb, o, u)   # unobservable -> observable rows
    kuu = pick(kb, u, u)
    roo, rou = pick(blocks.req, o, o), pick(blocks.req, u, o)
    ruo, ruu = pick(blocks.req, o, u), pick(blocks.req, u, u)
    xoo, xou = pick(blocks.xeq, o, o), pick(blocks.xeq, u, o)
    xuo, xuu = pick(blocks.xeq, o, u), pick(blocks.xeq, u, u)

    n_u = len(u)
    if n_u:
        k1 = numkit.solve_linear((np.eye(n_u) + kuu).T, kuo.T).T
        p_u = -blocks.p_const[u]
        q_u = -blocks.q_const[u]
        c2 = (blocks.y0[o] - k1 @ blocks.y0[u]
              + (ruo - k1 @ ruu) @ p_u + (xuo - k1 @ xuu) @ q_u)
    else:
        k1 = np.zeros((len(o), 0))
        c2 = blocks.y0[o].copy()

    return replace(blocks, partition=partition,
                   koo=koo, kou=kou, kuo=kuo, kuu=kuu,
                   roo=roo, rou=rou, ruo=ruo, ruu=ruu,
                   xoo=xoo, xou=xou, xuo=xuo, xuu=xuu,
                   k1=k1, c2=c2)


def observable_matrices(blocks: SensitivityBlocks, k1=None, c2=None):
    """Affine map Y_o = AR @ P_o + AX @ Q_o + c for the reduced model."""
    if blocks.partition is None:
        raise InvalidPartition("blocks have not been partitioned")
    k1 = blocks.k1 if k1 is None else np.asarray(k1, dtype=float)
    c2 = blocks.c2 if c2 is None else np.asarray(c2, dtype=float)
    n_o = blocks.partition.n_o
    lhs = np.eye(n_o) + blocks.koo - k1 @ blocks.kou
    inv = numkit.solve_linear(lhs, np.eye(n_o))
    ar = inv @ (blocks.roo - k1 @ blocks.rou)
    ax = inv @ (blocks.xoo - k1 @ blocks.xou)
    return ar, ax, inv @ c2


def observable_voltages(blocks: SensitivityBlocks, p_o, q_o, k1=None, c2=None):
    """Reduced-model observable squared voltages for net injections (P_o, Q_o)."""
    ar, ax, c = observable_matrices(blocks, k1, c2)
    return ar @ np.asarray(p_o, float) + ax @ np.asarray(q_o, float) + c


def observable_net_injections(blocks: SensitivityBlocks, p_g, q_g):
    """Constant-part net injections restricted to the observable set."""
    if blocks.partition is None:
        raise InvalidPartition("blocks have not been partitioned")
    o = blocks.partition.observable
    p = np.asarray(p_g, float)[o] - blocks.p_const[o]
    q = np.asarray(q_g, float)[o] - blocks.q_const[o]
    return p, q
