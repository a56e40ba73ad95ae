"""Hierarchical DSO dispatch stages over the reduced observable model.

Stage 1 maximizes total DER real power, stage 2a sweeps the aggregate
reactive range at fixed total power (the envelope offered to the TSO),
and stage 2b splits a requested substation reactive value across DERs
with sensitivity weights favoring units electrically closer to the
substation.  All stages share one MILP skeleton: per-DER capability
rows, droop-mode encodings with mode exclusivity, the observable
voltage map, and the substation reactive-flow expression.

Per-DER power variables are in device per-unit (fractions of the
inverter rating); stage objectives and reported quantities are in
kW/kvar; network coupling converts through the feeder power base.  The
substation reactive expression carries a constant offset for the
unobservable load contribution; standalone runs evaluate it from the
linear model at the flat voltage profile, while the coordination loop
recalibrates it from field measurements each iteration.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import feeder as feeder_mod
from . import inverter, milp
from .errors import DegenerateSensitivity, GridcoordError, InfeasibleStage

OPTIMIZED = "optimized"
PQ_FREE = "pq_free"
FORCED = "forced"

V_BOX = (0.80, 1.20)   # droop-input voltage variable box (Big-M range)


@dataclass
class ModePolicy:
    kind: str = OPTIMIZED          # optimized | pq_free | forced
    mode: str | None = None        # for forced
    setting_free: bool = True      # for forced: optimize the setting or pin default

    @classmethod
    def forced(cls, mode, setting_free=True):
        return cls(FORCED, mode, setting_free)


@dataclass
class DispatchContext:
    model: feeder_mod.FeederModel
    blocks: feeder_mod.SensitivityBlocks       # partitioned, k1/c2 current
    specs: list[inverter.InverterSpec]         # per DER placement
    curves: list[dict]                         # per DER: mode -> DroopCurve
    p_available_kw: np.ndarray
    v_limits: tuple = (0.95, 1.05)
    encoding: str = "sos1"
    policy: ModePolicy = field(default_factory=ModePolicy)
    q_sub_offset_kvar: float | None = None     # None: flat-voltage estimate

    def __post_init__(self):
        n_der = len(self.model.der_nodes)
        if len(self.specs) != n_der or len(self.curves) != n_der:
            raise ValueError("specs/curves must match the DER placements")
        for curve_set in self.curves:
            for mode in inverter.MODES:
                if mode not in curve_set:
                    raise ValueError(f"missing {mode} curve")
        self.p_available_kw = np.asarray(self.p_available_kw, dtype=float)
        for k, spec in enumerate(self.specs):
            if self.p_available_kw[k] > spec.p_max + 1e-9:
                raise ValueError("available power above inverter rating")
        if self.blocks.partition is None:
            raise ValueError("blocks must be partitioned")
        if self.q_sub_offset_kvar is None:
            self.q_sub_offset_kvar = flat_voltage_q_offset(self.model, self.blocks)

    @property
    def s_base(self):
        return self.model.s_base_kva


def make_context(scenario, encoding="sos1", policy: ModePolicy | None = None,
                 v_limits=(0.95, 1.05), blocks=None) -> DispatchContext:
    """Build a dispatch context from a bundled scenario."""
    model = scenario.feeder
    if blocks is None:
        blocks = feeder_mod.build_blocks(model)
        blocks = feeder_mod.partition_blocks(blocks, feeder_mod.make_partition(model))
    specs = [scenario.inverters[i] for i in model.der_inverter_ids]
    curves = [inverter.make_curve_set(spec, scenario.profile) for spec in specs]
    return DispatchContext(model, blocks, specs, curves,
                           scenario.p_available_kw.copy(),
                           v_limits=v_limits, encoding=encoding,
                           policy=policy or ModePolicy())


def flat_voltage_q_offset(model, blocks) -> float:
    """Unobservable reactive-load contribution at the flat voltage profile (kvar)."""
    if blocks.partition is None or blocks.partition.n_u == 0:
        return 0.0
    u = blocks.partition.unobservable
    q_u = -(blocks.q_const[u] + blocks.q_coef[u] * blocks.y0[u])
    return float(np.sum(q_u) * model.s_base_kva)


# ---------------------------------------------------------------------------
# model assembly
# ---------------------------------------------------------------------------

@dataclass
class StageHandles:
    p: list[int]
    q: list[int]
    v: list[int]
    settings: list[dict]           # per DER: mode -> setting var id
    encodings: list[dict]          # per DER: mode -> DroopEncoding
    y_o: list[int]
    q_sub: int
    qp: list[int] | None = None
    qm: list[int] | None = None


def build_stage_model(ctx: DispatchContext, stage: str = "stage1",
                      p_star_kw: float | None = None,
                      q_req_kvar: float | None = None,
                      weights=None):
    """Assemble the MILP for one stage; returns (model, handles).

    ``stage`` is one of stage1 / stage2a / stage2b.  Stage 2a gets the
    total-power row; stage 2b additionally pins the substation reactive
    flow and adds the absolute-value split variables.
    """
    m = ctx.model
    blocks = ctx.blocks
    part = blocks.partition
    obs = part.observable
    obs_pos = {node: k for k, node in enumerate(obs)}
    n_der = len(m.der_nodes)
    s_base = ctx.s_base
    mm = milp.MilpModel(name=f"{stage}-{ctx.encoding}")

    v_lo, v_hi = ctx.v_limits
    y_ids = [mm.add_variable(v_lo ** 2, v_hi ** 2, name=f"y_{m.node_ids[node]}")
             for node in obs]

    p_ids, q_ids, v_ids = [], [], []
    settings: list[dict] = []
    encodings: list[dict] = []
    for i, (node, spec) in enumerate(zip(m.der_nodes, ctx.specs)):
        sfx = f"d{i}"
        p_hi = min(spec.p_max, ctx.p_available_kw[i]) / spec.s_rated
        p_id = mm.add_variable(spec.p_min_pu, p_hi, name=f"p_{sfx}")
        q_id = mm.add_variable(spec.q_min_pu, spec.q_max_pu, name=f"q_{sfx}")
        # the voltage-link row pins V inside the image of the Y_o box, so the
        # variable box (and with it every droop Big-M) can be this tight
        y0n_ = blocks.y0[node]
        v_bounds = (v_lo ** 2 / (2 * np.sqrt(y0n_)) + np.sqrt(y0n_) / 2,
                    v_hi ** 2 / (2 * np.sqrt(y0n_)) + np.sqrt(y0n_) / 2)
        v_id = mm.add_variable(v_bounds[0], v_bounds[1], name=f"v_{sfx}")
        p_ids.append(p_id)
        q_ids.append(q_id)
        v_ids.append(v_id)

        # capability rows; boxes live on the variable bounds, and rows that
        # cannot bind anywhere inside the boxes are not emitted
        for row in inverter.capability_constraints(spec):
            if row.name.startswith("box"):
                continue
            ext_p = row.coef_p * (p_hi if (row.coef_p > 0) == (row.sense == milp.LE)
                                  else spec.p_min_pu)
            ext_q = row.coef_q * (spec.q_max_pu if (row.coef_q > 0) == (row.sense == milp.LE)
                                  else spec.q_min_pu)
            if row.sense == milp.LE and ext_p + ext_q <= row.rhs - 1e-12:
                continue
            if row.sense == milp.GE and ext_p + ext_q >= row.rhs + 1e-12:
                continue
            mm.add_constraint({p_id: row.coef_p, q_id: row.coef_q},
                              row.sense, row.rhs, name=f"cap_{row.name}_{sfx}")

        # terminal voltage link onto the observable map
        if node not in obs_pos:
            raise InfeasibleStage(f"DER node {m.node_ids[node]} is unobservable")
        y0n = blocks.y0[node]
        mm.add_constraint({v_ids[i]: 1.0,
                           y_ids[obs_pos[node]]: -1.0 / (2.0 * np.sqrt(y0n))},
                          milp.EQ, np.sqrt(y0n) / 2.0, name=f"vlink_{sfx}")

        settings.append({})
        encodings.append({})
        mode_io = {
            inverter.VOLT_VAR: (v_id, q_id),
            inverter.VOLT_WATT: (v_id, p_id),
            inverter.WATT_VAR: (p_id, q_id),
        }
        pol = ctx.policy
        if pol.kind == PQ_FREE:
            continue
        modes = inverter.MODES if pol.kind == OPTIMIZED else (pol.mode,)
        # the mode-selection SOS1 set is registered before the per-mode
        # segment sets so branching resolves the hierarchy top-down
        mode_vars = {}
        if ctx.encoding == "sos1" and pol.kind == OPTIMIZED:
            for mode in modes:
                mode_vars[mode] = mm.add_variable(0.0, 1.0, name=f"s_{mode}_{sfx}")
            mm.add_constraint(dict.fromkeys(mode_vars.values(), 1.0), milp.EQ, 1.0,
                              name=f"mode_excl_{sfx}")
            mm.add_sos1(list(mode_vars.values()))
        encs = []
        for mode in modes:
            curve = ctx.curves[i][mode]
            iid, oid = mode_io[mode]
            set_id = mm.add_variable(curve.setting_min, curve.setting_max,
                                     name=f"set_{mode}_{sfx}")
            if pol.kind == FORCED and not pol.setting_free:
                mm.fix_variable(set_id, curve.setting)
            settings[i][mode] = set_id
            standalone = pol.kind == FORCED
            if ctx.encoding == "sos1":
                enc = inverter.encode_sos1(curve, spec, mm, iid, oid,
                                           setting_id=set_id,
                                           mode_var=mode_vars.get(mode),
                                           add_exclusivity=standalone, tag=f"{sfx}_")
            else:
                enc = inverter.encode_bigM(curve, spec, mm, iid, oid,
                                           setting_id=set_id,
                                           add_exclusivity=standalone, tag=f"{sfx}_")
            encodings[i][mode] = enc
            encs.append(enc)
        if pol.kind == OPTIMIZED and ctx.encoding != "sos1":
            inverter.mode_exclusivity(mm, encs)

    # observable voltage map rows: Y_o = AR P_o + AX Q_o + c
    ar, ax, c_aff = feeder_mod.observable_matrices(blocks)
    base = ar @ (-blocks.p_const[obs]) + ax @ (-blocks.q_const[obs]) + c_aff
    for j in range(len(obs)):
        coeffs = {y_ids[j]: 1.0}
        for i, node in enumerate(m.der_nodes):
            col = obs_pos[node]
            scale = ctx.specs[i].s_rated / s_base
            coeffs[p_ids[i]] = coeffs.get(p_ids[i], 0.0) - ar[j, col] * scale
            coeffs[q_ids[i]] = coeffs.get(q_ids[i], 0.0) - ax[j, col] * scale
        mm.add_constraint(coeffs, milp.EQ, float(base[j]), name=f"ydef_{j}")

    # substation reactive flow (kvar, injection-positive)
    q_sub = mm.add_variable(-np.inf, np.inf, name="q_sub")
    coeffs = {q_sub: 1.0}
    for i in range(n_der):
        coeffs[q_ids[i]] = coeffs.get(q_ids[i], 0.0) - ctx.specs[i].s_rated
    for j, node in enumerate(obs):
        if blocks.q_coef[node]:
            coeffs[y_ids[j]] = coeffs.get(y_ids[j], 0.0) + s_base * blocks.q_coef[node]
    rhs = -s_base * float(np.sum(blocks.q_const[obs])) + ctx.q_sub_offset_kvar
    mm.add_constraint(coeffs, milp.EQ, rhs, name="qsub_def")

    handles = StageHandles(p_ids, q_ids, v_ids, settings, encodings, y_ids, q_sub)

    if stage in ("stage2a", "stage2b"):
        if p_star_kw is None:
            raise ValueError(f"{stage} needs p_star_kw")
        mm.add_constraint({p_ids[i]: ctx.specs[i].s_rated for i in range(n_der)},
                          milp.EQ, float(p_star_kw), name="pstar")
    if stage == "stage2b":
        if q_req_kvar is None:
            raise ValueError("stage2b needs q_req_kvar")
        mm.add_constraint({q_sub: 1.0}, milp.EQ, float(q_req_kvar), name="qreq")
        qp_ids, qm_ids = [], []
        for i in range(n_der):
            spec = ctx.specs[i]
            qp = mm.add_variable(0.0, max(spec.q_max_pu, 0.0), name=f"qp_d{i}")
            qm = mm.add_variable(0.0, max(-spec.q_min_pu, 0.0), name=f"qm_d{i}")
            mm.add_constraint({q_ids[i]: 1.0, qp: -1.0, qm: 1.0}, milp.EQ, 0.0,
                              name=f"qsplit_d{i}")
            qp_ids.append(qp)
            qm_ids.append(qm)
        handles.qp, handles.qm = qp_ids, qm_ids

    return mm, handles


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

@dataclass
class DerDispatch:
    der_index: int
    bus_phase: str
    inverter_id: str
    mode: str | None
    segment: int | None
    setting: float | None
    p_kw: float
    q_kvar: float
    v_pu: float


@dataclass
class DispatchResult:
    stage: str
    objective: float
    per_der: list[DerDispatch]
    p_star_kw: float
    q_sub_kvar: float
    y_o: np.ndarray
    envelope_kvar: tuple | None
    stats: dict

    def to_dict(self):
        return {
            "stage": self.stage,
            "objective": self.objective,
            "p_star_kw": self.p_star_kw,
            "q_sub_kvar": self.q_sub_kvar,
            "envelope_kvar": list(self.envelope_kvar) if self.envelope_kvar else None,
            "per_der": [{
                "der": d.der_index, "bus_phase": d.bus_phase,
                "inverter_id": d.inverter_id, "mode": d.mode,
                "segment": d.segment, "setting": d.setting,
                "p_kw": d.p_kw, "q_kvar": d.q_kvar, "v_pu": d.v_pu,
            } for d in self.per_der],
            "y_o": [float(v) for v in self.y_o],
            "stats": self.stats,
        }


def _solve_stage(mm, stage):
    t0 = time.perf_counter()
    sol = milp.solve_milp(mm)
    wall_ms = 1e3 * (time.perf_counter() - t0)
    if sol.status == milp.INFEASIBLE:
        raise InfeasibleStage(f"{stage}: no feasible mode/setting assignment")
    if sol.status not in (milp.OPTIMAL,):
        raise GridcoordError(f"{stage}: solver returned {sol.status}")
    stats = {"status": sol.status, "nodes": sol.node_count,
             "simplex_iterations": sol.simplex_iterations, "wall_ms": wall_ms}
    return sol, stats


def _extract(ctx, mm, handles, sol, stage, stats, envelope=None) -> DispatchResult:
    m = ctx.model
    per_der = []
    for i, node in enumerate(m.der_nodes):
        spec = ctx.specs[i]
        mode = None
        segment = None
        setting = None
        if ctx.policy.kind != PQ_FREE:
            for md, enc in handles.encodings[i].items():
                zvals = [sol.value(z) for z in enc.indicator_ids]
                if max(zvals) > 0.5:
                    mode = md
                    segment = int(np.argmax(zvals))
                    setting = sol.value(handles.settings[i][md])
                    break
        per_der.append(DerDispatch(
            i, m.node_ids[node], spec.inverter_id, mode, segment, setting,
            p_kw=sol.value(handles.p[i]) * spec.s_rated,
            q_kvar=sol.value(handles.q[i]) * spec.s_rated,
            v_pu=sol.value(handles.v[i])))
    y_o = np.array([sol.value(y) for y in handles.y_o])
    p_star = sum(d.p_kw for d in per_der)
    return DispatchResult(stage, sol.objective, per_der, p_star,
                          sol.value(handles.q_sub), y_o, envelope, stats)


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def stage1_max_power(ctx: DispatchContext):
    """Maximize total DER real power subject to network and controller rows."""
    mm, handles = build_stage_model(ctx, "stage1")
    mm.set_objective(milp.MAX, {handles.p[i]: ctx.specs[i].s_rated
                                for i in range(len(handles.p))})
    sol, stats = _solve_stage(mm, "stage1")
    result = _extract(ctx, mm, handles, sol, "stage1", stats)
    return result.p_star_kw, result


def stage2a_aggregate(ctx: DispatchContext, p_star_kw: float):
    """Aggregate reactive envelope [q_lo, q_hi] (kvar) at fixed total power.

    Objective follows the total DER reactive sum; the reported envelope
    endpoints are the substation reactive flows of the two extreme
    solutions, which is what the TSO interface consumes.
    """
    results = {}
    for sense, tag in ((milp.MIN, "stage2a_min"), (milp.MAX, "stage2a_max")):
        mm, handles = build_stage_model(ctx, "stage2a", p_star_kw=p_star_kw)
        mm.set_objective(sense, {handles.q[i]: ctx.specs[i].s_rated
                                 for i in range(len(handles.q))})
        sol, stats = _solve_stage(mm, tag)
        results[tag] = _extract(ctx, mm, handles, sol, tag, stats)
    q_lo = min(results["stage2a_min"].q_sub_kvar, results["stage2a_max"].q_sub_kvar)
    q_hi = max(results["stage2a_min"].q_sub_kvar, results["stage2a_max"].q_sub_kvar)
    for r in results.values():
        r.envelope_kvar = (q_lo, q_hi)
    return (q_lo, q_hi), results["stage2a_min"], results["stage2a_max"]


def sensitivity_weights(blocks: feeder_mod.SensitivityBlocks, der_nodes,
                        step: float = 1e-4) -> np.ndarray:
    """Disaggregation weights from substation-reactive sensitivities.

    Finite difference of the linearized substation reactive flow with
    respect to each DER's reactive injection; w_i = 1 - s_i / sum(s).
    """
    der_nodes = list(der_nodes)
    n = blocks.k.shape[0]
    zeros = np.zeros(n)

    def q_sub_of(q_g):
        y = feeder_mod.lindist_voltages(blocks, zeros, q_g)
        _, q_sub = feeder_mod.substation_flow(blocks, y, zeros, q_g)
        return q_sub

    base = q_sub_of(zeros)
    sens = np.empty(len(der_nodes))
    for k, node in enumerate(der_nodes):
        q_g = zeros.copy()
        q_g[node] = step
        sens[k] = (q_sub_of(q_g) - base) / step
    total = float(np.sum(sens))
    if total <= 0.0:
        raise DegenerateSensitivity(f"sensitivity sum {total} is non-positive")
    return 1.0 - sens / total


def stage2b_disaggregate(ctx: DispatchContext, p_star_kw: float,
                         q_req_kvar: float, weights=None) -> DispatchResult:
    """Split the requested substation reactive power across DERs.

    Minimizes the sensitivity-weighted sum of absolute DER reactive
    outputs; the absolute value uses the standard nonnegative split
    (weights are nonnegative, so no simultaneous positive parts at the
    optimum).
    """
    if weights is None:
        weights = sensitivity_weights(ctx.blocks, ctx.model.der_nodes)
    weights = np.asarray(weights, dtype=float)
    mm, handles = build_stage_model(ctx, "stage2b", p_star_kw=p_star_kw,
                                    q_req_kvar=q_req_kvar)
    obj = {}
    for i in range(len(handles.p)):
        s = ctx.specs[i].s_rated
        obj[handles.qp[i]] = weights[i] * s
        obj[handles.qm[i]] = weights[i] * s
    mm.set_objective(milp.MIN, obj)
    sol, stats = _solve_stage(mm, "stage2b")
    stats["weights"] = [float(w) for w in weights]
    return _extract(ctx, mm, handles, sol, "stage2b", stats)


# ---------------------------------------------------------------------------
# compliance checks
# ---------------------------------------------------------------------------

def droop_compliance_errors(ctx: DispatchContext, result: DispatchResult):
    """Distance of each dispatched setpoint from its selected droop segment.

    Returns per-DER (curve_error_pu, capability_ok).  For the droop
    input the volt-modes use the model terminal voltage and watt-var
    uses the dispatched active power.
    """
    out = []
    for d in result.per_der:
        spec = ctx.specs[d.der_index]
        p_pu = d.p_kw / spec.s_rated
        q_pu = d.q_kvar / spec.s_rated
        cap_ok = inverter.satisfies_capability(spec, p_pu, q_pu, tol=1e-6)
        if d.mode is None:
            out.append((0.0, cap_ok))
            continue
        curve = ctx.curves[d.der_index][d.mode].with_setting(d.setting)
        if d.mode == inverter.VOLT_VAR:
            err = abs(inverter.evaluate_droop(curve, d.v_pu) - q_pu)
        elif d.mode == inverter.VOLT_WATT:
            err = abs(inverter.evaluate_droop(curve, d.v_pu) - p_pu)
        else:
            err = abs(inverter.evaluate_droop(curve, p_pu) - q_pu)
        out.append((float(err), cap_ok))
    return out
