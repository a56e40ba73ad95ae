"""Transmission-side engine: Newton AC power flow and reactive dispatch.

The dispatch minimizes weighted squared voltage deviations plus a
reactive-effort term over the interface reactive injections, each boxed
by the envelope its distribution feeder reported.  It runs successive
linearization: a reduced-Jacobian V-Q sensitivity builds a quadratic
model solved by projected gradient, then a full power flow re-anchors
the model.  A bisection backtrack keeps the true objective
non-increasing across outer iterations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import numkit
from .errors import NoConvergence, ParseError, SingularJacobian, ValidationError

SLACK, PV, PQ = "slack", "PV", "PQ"


@dataclass(frozen=True)
class TBus:
    bus_id: str
    btype: str
    p_mw: float = 0.0
    q_mvar: float = 0.0
    v_set: float = 1.0


@dataclass(frozen=True)
class TBranch:
    from_bus: str
    to_bus: str
    r: float
    x: float
    b: float = 0.0


@dataclass(frozen=True)
class TGen:
    bus: str
    p_mw: float
    v_pu: float


@dataclass(frozen=True)
class Interface:
    bus: str
    feeder_ref: str = ""
    multiplicity: int = 1


class TransmissionCase:
    """Small meshed AC network with DSO interface buses."""

    def __init__(self, buses, branches, gens, interfaces, s_base_mva=100.0):
        self.buses = list(buses)
        self.branches = list(branches)
        self.gens = list(gens)
        self.interfaces = list(interfaces)
        self.s_base_mva = float(s_base_mva)
        self._derive()

    def _derive(self):
        ids = [b.bus_id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate transmission bus ids")
        self.index = {bid: k for k, bid in enumerate(ids)}
        slacks = [b for b in self.buses if b.btype == SLACK]
        if len(slacks) != 1:
            raise ValidationError(f"need exactly one slack bus, found {len(slacks)}")
        self.slack = self.index[slacks[0].bus_id]
        gen_buses = {g.bus for g in self.gens}
        for b in self.buses:
            if b.btype not in (SLACK, PV, PQ):
                raise ValidationError(f"bus {b.bus_id}: unknown type {b.btype}")
            if b.btype == PV and b.bus_id not in gen_buses:
                raise ValidationError(f"PV bus {b.bus_id} has no generator")
        for br in self.branches:
            if br.from_bus not in self.index or br.to_bus not in self.index:
                raise ValidationError(f"branch {br.from_bus}-{br.to_bus}: unknown bus")
        for itf in self.interfaces:
            if itf.bus not in self.index:
                raise ValidationError(f"interface at unknown bus {itf.bus}")
            if self.buses[self.index[itf.bus]].btype != PQ:
                raise ValidationError(f"interface bus {itf.bus} must be PQ")
        # connectivity
        seen = {self.slack}
        frontier = [self.slack]
        adj = {k: set() for k in range(len(ids))}
        for br in self.branches:
            f, t = self.index[br.from_bus], self.index[br.to_bus]
            adj[f].add(t)
            adj[t].add(f)
        while frontier:
            cur = frontier.pop()
            for nxt in adj[cur]:
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        if len(seen) != len(ids):
            raise ValidationError("transmission graph is not connected")
        self.pv = np.array([k for k, b in enumerate(self.buses)
                            if b.btype == PV], dtype=int)
        self.pq = np.array([k for k, b in enumerate(self.buses)
                            if b.btype == PQ], dtype=int)
        self.pvpq = np.concatenate([self.pv, self.pq])
        self.pvpq.sort()

    def remove_branch(self, from_bus, to_bus) -> "TransmissionCase":
        """Outage case with one branch removed (connectivity re-validated)."""
        keep = []
        found = False
        for br in self.branches:
            match = {br.from_bus, br.to_bus} == {str(from_bus), str(to_bus)}
            if match and not found:
                found = True
                continue
            keep.append(br)
        if not found:
            raise ValidationError(f"no branch {from_bus}-{to_bus} to remove")
        return TransmissionCase(self.buses, keep, self.gens, self.interfaces,
                                self.s_base_mva)

    def ybus(self) -> np.ndarray:
        n = len(self.buses)
        Y = np.zeros((n, n), dtype=complex)
        for br in self.branches:
            f, t = self.index[br.from_bus], self.index[br.to_bus]
            y = 1.0 / complex(br.r, br.x)
            Y[f, f] += y + 0.5j * br.b
            Y[t, t] += y + 0.5j * br.b
            Y[f, t] -= y
            Y[t, f] -= y
        return Y


def load_transmission(document) -> TransmissionCase:
    """Parse a transmission case (dict, JSON text, or path)."""
    if isinstance(document, (str, Path)):
        path = Path(document)
        try:
            text = path.read_text(encoding="utf-8") if path.exists() else str(document)
            doc = json.loads(text)
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot parse transmission document: {exc}") from exc
    elif isinstance(document, dict):
        doc = document
    else:
        raise ParseError(f"unsupported transmission document type {type(document)!r}")
    try:
        buses = [TBus(str(b["id"]), str(b["type"]), float(b.get("p_mw", 0.0)),
                      float(b.get("q_mvar", 0.0)), float(b.get("v_set", 1.0)))
                 for b in doc["buses"]]
        branches = [TBranch(str(b["from"]), str(b["to"]), float(b["r"]),
                            float(b["x"]), float(b.get("b", 0.0)))
                    for b in doc["branches"]]
        gens = [TGen(str(g["bus"]), float(g["p_mw"]), float(g["v_pu"]))
                for g in doc.get("gens", [])]
        interfaces = [Interface(str(i["bus"]), str(i.get("feeder_ref", "")),
                                int(i.get("multiplicity", 1)))
                      for i in doc.get("interfaces", [])]
        return TransmissionCase(buses, branches, gens, interfaces,
                                float(doc.get("s_base_mva", 100.0)))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"transmission document missing field: {exc}") from exc


# ---------------------------------------------------------------------------
# Newton power flow
# ---------------------------------------------------------------------------

@dataclass
class PowerFlowResult:
    v_mag: np.ndarray
    v_ang: np.ndarray
    s_inj: np.ndarray          # complex bus injections, pu
    slack_p_mw: float
    iterations: int
    branch_flows: list         # (from, to, S_from pu, S_to pu)
    max_mismatch: float

    def v_complex(self):
        return self.v_mag * np.exp(1j * self.v_ang)


def _spec_injections(case: TransmissionCase, q_inject=None):
    n = len(case.buses)
    s = np.zeros(n, dtype=complex)
    for k, b in enumerate(case.buses):
        s[k] -= complex(b.p_mw, b.q_mvar) / case.s_base_mva
    for g in case.gens:
        s[case.index[g.bus]] += g.p_mw / case.s_base_mva
    if q_inject:
        for bus, mvar in q_inject.items():
            s[case.index[str(bus)]] += 1j * mvar / case.s_base_mva
    return s


def newton_powerflow(case: TransmissionCase, q_inject: dict | None = None,
                     tol: float = 1e-8, max_iter: int = 20) -> PowerFlowResult:
    """Full Newton-Raphson in polar form.

    ``q_inject`` adds reactive injections (MVAr) at interface buses on
    top of the case loads.  Converged when the largest P/Q mismatch
    falls below ``tol`` (pu).
    """
    Y = case.ybus()
    n = len(case.buses)
    vm = np.ones(n)
    va = np.zeros(n)
    for k, b in enumerate(case.buses):
        if b.btype == SLACK:
            vm[k] = b.v_set
    for g in case.gens:
        vm[case.index[g.bus]] = g.v_pu
    s_spec = _spec_injections(case, q_inject)
    pv, pq, pvpq = case.pv, case.pq, case.pvpq

    for it in range(1, max_iter + 1):
        v = vm * np.exp(1j * va)
        ibus = Y @ v
        s_calc = v * np.conj(ibus)
        dp = np.real(s_calc - s_spec)[pvpq]
        dq = np.imag(s_calc - s_spec)[pq]
        mism = np.concatenate([dp, dq])
        worst = float(np.max(np.abs(mism))) if mism.size else 0.0
        if worst < tol:
            flows = _branch_flows(case, v)
            slack_p = float(np.real(s_calc[case.slack]) * case.s_base_mva)
            return PowerFlowResult(vm.copy(), va.copy(), s_calc, slack_p, it - 1,
                                   flows, worst)
        dS_dVa = 1j * np.diag(v) @ np.conj(np.diag(ibus) - Y @ np.diag(v))
        vnorm = v / vm
        dS_dVm = (np.diag(v) @ np.conj(Y @ np.diag(vnorm))
                  + np.conj(np.diag(ibus)) @ np.diag(vnorm))
        J11 = np.real(dS_dVa)[np.ix_(pvpq, pvpq)]
        J12 = np.real(dS_dVm)[np.ix_(pvpq, pq)]
        J21 = np.imag(dS_dVa)[np.ix_(pq, pvpq)]
        J22 = np.imag(dS_dVm)[np.ix_(pq, pq)]
        J = np.block([[J11, J12], [J21, J22]])
        try:
            dx = numkit.solve_linear(J, -mism)
        except Exception as exc:
            raise SingularJacobian(f"Jacobian singular at iteration {it}") from exc
        va[pvpq] += dx[:len(pvpq)]
        vm[pq] += dx[len(pvpq):]
    raise NoConvergence(f"Newton power flow above {tol} after {max_iter} iterations")


def _branch_flows(case, v):
    flows = []
    for br in case.branches:
        f, t = case.index[br.from_bus], case.index[br.to_bus]
        y = 1.0 / complex(br.r, br.x)
        ish = 0.5j * br.b
        i_f = (v[f] - v[t]) * y + v[f] * ish
        i_t = (v[t] - v[f]) * y + v[t] * ish
        flows.append((br.from_bus, br.to_bus,
                      v[f] * np.conj(i_f), v[t] * np.conj(i_t)))
    return flows


def monitored_buses(case: TransmissionCase) -> list[int]:
    """Load and generator buses (the objective's monitored set)."""
    gen_idx = {case.index[g.bus] for g in case.gens}
    out = []
    for k, b in enumerate(case.buses):
        if k in gen_idx or b.btype == SLACK or abs(b.p_mw) > 0 or abs(b.q_mvar) > 0:
            out.append(k)
    return out


def vq_sensitivity(case: TransmissionCase, pf: PowerFlowResult,
                   interface_buses=None, monitored=None) -> np.ndarray:
    """Reduced-Jacobian d|V|/dQ at monitored buses w.r.t. interface injections.

    PV and slack voltages are held by their controls, so their rows are
    zero; sensitivities are per-unit volts per per-unit injected Q.
    """
    itf = [case.index[str(b)] for b in
           (interface_buses or [i.bus for i in case.interfaces])]
    mon = monitored if monitored is not None else monitored_buses(case)
    Y = case.ybus()
    v = pf.v_complex()
    ibus = Y @ v
    vm = pf.v_mag
    pv, pq, pvpq = case.pv, case.pq, case.pvpq
    dS_dVa = 1j * np.diag(v) @ np.conj(np.diag(ibus) - Y @ np.diag(v))
    vnorm = v / vm
    dS_dVm = (np.diag(v) @ np.conj(Y @ np.diag(vnorm))
              + np.conj(np.diag(ibus)) @ np.diag(vnorm))
    J = np.block([
        [np.real(dS_dVa)[np.ix_(pvpq, pvpq)], np.real(dS_dVm)[np.ix_(pvpq, pq)]],
        [np.imag(dS_dVa)[np.ix_(pq, pvpq)], np.imag(dS_dVm)[np.ix_(pq, pq)]],
    ])
    rhs = np.zeros((J.shape[0], len(itf)))
    pq_pos = {bus: i for i, bus in enumerate(pq)}
    for col, bus in enumerate(itf):
        if bus not in pq_pos:
            raise ValidationError(f"interface bus {case.buses[bus].bus_id} must be PQ")
        rhs[len(pvpq) + pq_pos[bus], col] = 1.0
    try:
        dx = numkit.solve_linear(J, rhs)
    except Exception as exc:
        raise SingularJacobian("reduced Jacobian singular") from exc
    dvm = np.zeros((len(case.buses), len(itf)))
    for i, bus in enumerate(pq):
        dvm[bus, :] = dx[len(pvpq) + i, :]
    return dvm[mon, :]


# ---------------------------------------------------------------------------
# TSO real-time dispatch
# ---------------------------------------------------------------------------

@dataclass
class TsoDispatch:
    q_req_mvar: dict            # interface bus id -> MVAr
    v_mag: np.ndarray
    objective: float
    outer_iterations: int
    pf_iterations: int
    trace: list = field(default_factory=list)


def _objective(case, vm, mon, q_pu, c_v, c_q, v_setpoint):
    dev = vm[mon] - v_setpoint
    return float(c_v * np.sum(dev ** 2) + c_q * np.sum(np.asarray(q_pu) ** 2))


def tso_dispatch(case: TransmissionCase, envelopes: dict, c_v: float = 1.0,
                 c_q: float = 0.01, v_setpoint: float = 1.0,
                 outer_tol: float = 1e-4, max_outer: int = 20) -> TsoDispatch:
    """Box-constrained reactive dispatch by successive linearization.

    ``envelopes`` maps interface bus id to (q_lo, q_hi) in MVAr.  Each
    outer iteration linearizes |V|(Q) with the reduced Jacobian, solves
    the quadratic model by projected gradient, then re-runs the power
    flow; a bisection backtrack enforces a non-increasing true objective.
    """
    itf_ids = [i.bus for i in case.interfaces]
    for bus in envelopes:
        if str(bus) not in itf_ids:
            raise ValidationError(f"envelope for unknown interface {bus}")
    lo = np.array([envelopes.get(b, (0.0, 0.0))[0] for b in itf_ids]) / case.s_base_mva
    hi = np.array([envelopes.get(b, (0.0, 0.0))[1] for b in itf_ids]) / case.s_base_mva
    if np.any(lo > hi):
        raise ValidationError("envelope lower bound above upper bound")
    mon = monitored_buses(case)

    q = np.clip(np.zeros(len(itf_ids)), lo, hi)
    pf = newton_powerflow(case, _q_dict(case, itf_ids, q))
    pf_iters = pf.iterations
    obj = _objective(case, pf.v_mag, mon, q, c_v, c_q, v_setpoint)
    trace = [obj]

    outer = 0
    for outer in range(1, max_outer + 1):
        sens = vq_sensitivity(case, pf, itf_ids, mon)
        v0 = pf.v_mag[mon]
        q_prev, obj_prev = q.copy(), obj

        x = q.copy()
        lip = 2.0 * (c_v * np.linalg.norm(sens, 2) ** 2 + c_q)
        step = 1.0 / max(lip, 1e-12)
        for _ in range(10_000):
            v_model = v0 + sens @ (x - q_prev)
            grad = 2.0 * c_v * (sens.T @ (v_model - v_setpoint)) + 2.0 * c_q * x
            x_new = np.clip(x - step * grad, lo, hi)
            if np.max(np.abs(x_new - x)) < 1e-8:
                x = x_new
                break
            x = x_new

        q = x
        pf = newton_powerflow(case, _q_dict(case, itf_ids, q))
        pf_iters += pf.iterations
        obj = _objective(case, pf.v_mag, mon, q, c_v, c_q, v_setpoint)
        backtracks = 0
        while obj > obj_prev + 1e-12 and backtracks < 12:
            q = 0.5 * (q + q_prev)
            pf = newton_powerflow(case, _q_dict(case, itf_ids, q))
            pf_iters += pf.iterations
            obj = _objective(case, pf.v_mag, mon, q, c_v, c_q, v_setpoint)
            backtracks += 1
        if obj > obj_prev + 1e-12:
            q, obj = q_prev, obj_prev
            pf = newton_powerflow(case, _q_dict(case, itf_ids, q))
            pf_iters += pf.iterations
            trace.append(obj)
            break
        trace.append(obj)
        if np.max(np.abs(q - q_prev)) < outer_tol:
            break

    q_mvar = {bus: float(qi * case.s_base_mva) for bus, qi in zip(itf_ids, q)}
    return TsoDispatch(q_mvar, pf.v_mag, obj, outer, pf_iters, trace)


def _q_dict(case, itf_ids, q_pu):
    return {bus: float(qi * case.s_base_mva) for bus, qi in zip(itf_ids, q_pu)}
