"""Linear / mixed-integer linear model container and embedded solver.

The solver is a dense bounded-variable primal simplex (phase 1 via
artificial columns, Dantzig pricing with a Bland anti-cycling fallback)
plus a best-first branch-and-bound that branches on the most fractional
binary or splits SOS1 sets at their weighted midpoint.  A brute-force
enumerator over binary assignments and SOS1 active-member choices
serves as the test oracle.

Scale notes: models in this package stay below roughly two thousand
rows, so the tableau is kept dense and no presolve is attempted beyond
skipping empty rows.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

try:  # in-place rank-1 tableau updates without temporaries
    from scipy.linalg.blas import dger as _dger
except ImportError:  # pragma: no cover
    _dger = None

from .errors import TooLarge, UnknownVariable


def _rank1_update(T, col, row):
    """T -= outer(col, row), in place when BLAS is available."""
    if _dger is not None and T.flags.c_contiguous:
        # operate on the F-contiguous transpose view so no copy is made
        _dger(-1.0, row, col, a=T.T, overwrite_a=1)
    else:
        T -= np.outer(col, row)

CONTINUOUS = "continuous"
BINARY = "binary"

LE, GE, EQ = "<=", ">=", "=="

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"
ITER_LIMIT = "IterLimit"

MIN, MAX = "min", "max"


@dataclass
class MilpOptions:
    feas_tol: float = 1e-7
    int_tol: float = 1e-6
    gap: float = 1e-6            # absolute optimality gap at termination
    node_limit: int = 10 ** 6
    iter_factor: int = 50        # simplex cap = iter_factor * (rows + cols)


@dataclass
class _Variable:
    name: str
    lo: float
    hi: float
    kind: str


@dataclass
class _Constraint:
    coeffs: list
    sense: str
    rhs: float
    name: str


class MilpModel:
    """Mutable builder for an LP/MILP instance.

    Variables and constraints are identified by the integer ids returned
    from the ``add_*`` methods.  Binary variables always carry [0, 1]
    bounds; SOS1 sets are ordered lists of variable ids (duplicates are
    dropped, keeping first occurrence).
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: list[_Variable] = []
        self.constraints: list[_Constraint] = []
        self.sos1_sets: list[list[int]] = []
        self.objective_sense = MIN
        self.objective: dict[int, float] = {}
        self.objective_const = 0.0

    def add_variable(self, lo=0.0, hi=np.inf, kind=CONTINUOUS, name=None) -> int:
        if kind == BINARY:
            lo, hi = 0.0, 1.0
        if lo > hi:
            raise ValueError(f"variable lower bound {lo} above upper bound {hi}")
        vid = len(self.variables)
        self.variables.append(_Variable(name or f"x{vid}", float(lo), float(hi), kind))
        return vid

    def add_constraint(self, coeffs, sense, rhs, name=None) -> int:
        if sense not in (LE, GE, EQ):
            raise ValueError(f"unknown sense {sense!r}")
        items = list(coeffs.items()) if isinstance(coeffs, dict) else list(coeffs)
        for vid, _ in items:
            self._check_var(vid)
        cid = len(self.constraints)
        self.constraints.append(_Constraint(items, sense, float(rhs), name or f"c{cid}"))
        return cid

    def add_sos1(self, var_ids) -> int:
        seen, members = set(), []
        for vid in var_ids:
            self._check_var(vid)
            if vid not in seen:
                seen.add(vid)
                members.append(vid)
        self.sos1_sets.append(members)
        return len(self.sos1_sets) - 1

    def set_objective(self, sense, coeffs, const=0.0):
        if sense not in (MIN, MAX):
            raise ValueError(f"unknown objective sense {sense!r}")
        items = coeffs.items() if isinstance(coeffs, dict) else coeffs
        obj = {}
        for vid, c in items:
            self._check_var(vid)
            obj[vid] = obj.get(vid, 0.0) + float(c)
        self.objective_sense = sense
        self.objective = obj
        self.objective_const = float(const)

    def fix_variable(self, vid, value):
        self._check_var(vid)
        v = self.variables[vid]
        v.lo = v.hi = float(value)

    def _check_var(self, vid):
        if not isinstance(vid, (int, np.integer)) or not 0 <= vid < len(self.variables):
            raise UnknownVariable(f"variable id {vid!r} not in model")

    @property
    def binary_ids(self):
        return [i for i, v in enumerate(self.variables) if v.kind == BINARY]

    def dump_lp(self) -> str:
        """Plain-text LP-format-style dump for debugging."""
        lines = [f"\\ model {self.name}",
                 "Minimize" if self.objective_sense == MIN else "Maximize"]
        terms = " ".join(f"{c:+g} {self.variables[v].name}"
                         for v, c in sorted(self.objective.items()))
        lines.append(f"  obj: {terms or '0'}")
        lines.append("Subject To")
        for con in self.constraints:
            terms = " ".join(f"{c:+g} {self.variables[v].name}" for v, c in con.coeffs)
            op = {LE: "<=", GE: ">=", EQ: "="}[con.sense]
            lines.append(f"  {con.name}: {terms} {op} {con.rhs:g}")
        lines.append("Bounds")
        for v in self.variables:
            lines.append(f"  {v.lo:g} <= {v.name} <= {v.hi:g}")
        bins = [self.variables[i].name for i in self.binary_ids]
        if bins:
            lines.append("Binary")
            lines.append("  " + " ".join(bins))
        if self.sos1_sets:
            lines.append("SOS")
            for k, members in enumerate(self.sos1_sets):
                body = " ".join(f"{self.variables[v].name}:{w + 1}"
                                for w, v in enumerate(members))
                lines.append(f"  s{k}: S1 :: {body}")
        lines.append("End")
        return "\n".join(lines)


@dataclass
class MilpSolution:
    status: str
    objective: float | None
    x: np.ndarray | None
    node_count: int = 0
    simplex_iterations: int = 0

    def value(self, vid: int) -> float:
        return float(self.x[vid])

    def binary_assignment(self, model: MilpModel) -> dict[int, int]:
        return {i: int(round(self.x[i])) for i in model.binary_ids}

    def sos_active(self, model: MilpModel, tol: float = 1e-6) -> list[int | None]:
        out = []
        for members in model.sos1_sets:
            active = [v for v in members if abs(self.x[v]) > tol]
            out.append(active[0] if active else None)
        return out


# ---------------------------------------------------------------------------
# dense bounded-variable primal simplex
# ---------------------------------------------------------------------------

_AT_LO, _AT_HI, _BASIC, _FREE = 0, 1, 2, 3
_PIV_TOL = 1e-9
_D_TOL = 1e-9


class _Arrays:
    """Standardized arrays: A x = b with bounded x (structurals then slacks)."""

    def __init__(self, model: MilpModel):
        n = len(model.variables)
        rows = [c for c in model.constraints if c.coeffs]
        m = len(rows)
        A = np.zeros((m, n + m))
        b = np.zeros(m)
        lo = np.empty(n + m)
        hi = np.empty(n + m)
        for j, v in enumerate(model.variables):
            lo[j], hi[j] = v.lo, v.hi
        for i, con in enumerate(rows):
            for vid, coef in con.coeffs:
                A[i, vid] += coef
            A[i, n + i] = 1.0
            b[i] = con.rhs
            if con.sense == LE:
                lo[n + i], hi[n + i] = 0.0, np.inf
            elif con.sense == GE:
                lo[n + i], hi[n + i] = -np.inf, 0.0
            else:
                lo[n + i], hi[n + i] = 0.0, 0.0
        self.trivially_infeasible = any(
            not {LE: 0.0 <= con.rhs + 1e-12,
                 GE: 0.0 >= con.rhs - 1e-12,
                 EQ: abs(con.rhs) <= 1e-12}[con.sense]
            for con in model.constraints if not con.coeffs)
        c = np.zeros(n + m)
        sign = 1.0 if model.objective_sense == MIN else -1.0
        for vid, coef in model.objective.items():
            c[vid] = sign * coef
        self.A, self.b, self.lo, self.hi, self.c = A, b, lo, hi, c
        self.n_struct, self.m = n, m
        self.obj_sign, self.obj_const = sign, model.objective_const


class _SimplexResult:
    __slots__ = ("status", "x", "objective", "iterations")

    def __init__(self, status, x, objective, iterations):
        self.status, self.x, self.objective, self.iterations = status, x, objective, iterations


class _Simplex:
    """One simplex run.  Columns: structurals, slacks, then artificials."""

    def __init__(self, A, b, lo, hi, c, iter_cap, feas_tol):
        self.m, self.n_tot = A.shape
        self.A, self.b = A, b
        self.c_user = c
        self.iter_cap = iter_cap
        self.feas_tol = feas_tol
        self.iters = 0

        m, n_tot = self.m, self.n_tot
        xval = np.zeros(n_tot)
        status = np.full(n_tot, _FREE, dtype=np.int8)
        lo_fin, hi_fin = np.isfinite(lo), np.isfinite(hi)
        status[lo_fin] = _AT_LO
        xval[lo_fin] = lo[lo_fin]
        only_hi = ~lo_fin & hi_fin
        status[only_hi] = _AT_HI
        xval[only_hi] = hi[only_hi]

        basis = np.arange(n_tot - m, n_tot)
        struct = np.arange(n_tot - m)
        resid = b - A[:, struct] @ xval[struct]
        status[basis] = _BASIC

        sl_lo, sl_hi = lo[basis], hi[basis]
        clamped = np.clip(resid, sl_lo, sl_hi)
        viol = np.where(np.abs(resid - clamped) > feas_tol)[0]
        n_art = len(viol)
        self.n_art = n_art
        self.art_rows = viol
        self.art_signs = np.ones(n_art)

        N = n_tot + n_art
        T = np.zeros((m, N))
        T[:, :n_tot] = A
        self.lo = np.concatenate([lo, np.zeros(n_art)])
        self.hi = np.concatenate([hi, np.full(n_art, np.inf)])
        self.xval = np.concatenate([xval, np.zeros(n_art)])
        self.status = np.concatenate([status, np.full(n_art, _BASIC, dtype=np.int8)])
        xB = resid.copy()

        for k, r in enumerate(viol):
            gap = resid[r] - clamped[r]
            sgn = 1.0 if gap > 0 else -1.0
            self.art_signs[k] = sgn
            col = n_tot + k
            T[r, col] = sgn
            s_id = basis[r]
            self.status[s_id] = _AT_HI if gap > 0 else _AT_LO
            self.xval[s_id] = clamped[r]
            basis[r] = col
            if sgn < 0:
                T[r, :] *= -1.0  # keep T = B^{-1}A with the -1 basis column
            xB[r] = abs(gap)

        self.T = T
        self.xB = xB
        self.basis = basis
        self.N = N
        self.fixed = self.hi - self.lo <= 0.0

    # -- helpers ---------------------------------------------------------------

    def _full_A(self):
        Afull = np.zeros((self.m, self.N))
        Afull[:, :self.n_tot] = self.A
        for k, r in enumerate(self.art_rows):
            Afull[r, self.n_tot + k] = self.art_signs[k]
        return Afull

    def _refresh(self, cost):
        Afull = self._full_A()
        B = Afull[:, self.basis]
        try:
            T = np.linalg.solve(B, Afull)
            nb = np.where(self.status != _BASIC)[0]
            xB = np.linalg.solve(B, self.b - Afull[:, nb] @ self.xval[nb])
        except np.linalg.LinAlgError:
            return cost - cost[self.basis] @ self.T  # keep the running tableau
        self.T, self.xB = T, xB
        return cost - cost[self.basis] @ self.T

    def solution_x(self):
        x = self.xval[:self.n_tot].copy()
        for i in range(self.m):
            if self.basis[i] < self.n_tot:
                x[self.basis[i]] = self.xB[i]
        return x

    # -- core loop ---------------------------------------------------------------

    def run_phase(self, cost, phase1):
        T, lo, hi = self.T, self.lo, self.hi
        status, xval, basis = self.status, self.xval, self.basis
        d = cost - cost[basis] @ T if np.any(cost[basis]) else cost.copy()
        devex = np.ones(self.N)   # reference weights, approximate steepest edge
        stall = 0
        bland = False
        since_refresh = 0
        while True:
            if self.iters >= self.iter_cap:
                return ITER_LIMIT
            at_lo = status == _AT_LO
            at_hi = status == _AT_HI
            free = status == _FREE
            viol = np.zeros(self.N)
            viol[at_lo] = -d[at_lo]
            viol[at_hi] = d[at_hi]
            viol[free] = np.abs(d[free])
            viol[self.fixed & (status != _BASIC)] = 0.0
            if bland:
                elig = np.where(viol > _D_TOL)[0]
                if elig.size == 0:
                    return OPTIMAL
                q = int(elig[0])
            else:
                score = np.where(viol > _D_TOL, viol * viol / devex, 0.0)
                q = int(np.argmax(score))
                if score[q] <= 0.0:
                    return OPTIMAL
            if status[q] == _AT_HI:
                sgn = -1.0
            elif status[q] == _AT_LO:
                sgn = 1.0
            else:
                sgn = 1.0 if d[q] < 0 else -1.0
            w = T[:, q] * sgn

            t_flip = hi[q] - lo[q]
            if not np.isfinite(t_flip):
                t_flip = np.inf
            t_best, r_best = t_flip, -1
            cand = np.where(np.abs(w) > _PIV_TOL)[0]
            if cand.size:
                wc = w[cand]
                tgt = np.where(wc > 0, lo[basis[cand]], hi[basis[cand]])
                with np.errstate(invalid="ignore"):
                    tt = (self.xB[cand] - tgt) / wc
                tt[~np.isfinite(tgt)] = np.inf
                tt = np.maximum(tt, 0.0)
                tmin = float(np.min(tt)) if tt.size else np.inf
                if tmin < t_best:
                    ties = np.where(tt <= tmin + 1e-12)[0]
                    if bland:
                        sel = ties[np.argmin(basis[cand[ties]])]
                    else:
                        sel = ties[np.argmax(np.abs(wc[ties]))]
                    t_best, r_best = float(tt[sel]), int(cand[sel])
            if not np.isfinite(t_best):
                # phase 1 objective is bounded below; treat as numerical stop
                return OPTIMAL if phase1 else UNBOUNDED
            self.iters += 1
            since_refresh += 1
            if t_best <= 1e-12:
                stall += 1
                if stall > max(64, self.m):
                    bland = True
            else:
                stall = 0
                bland = False

            if r_best < 0:
                self.xB -= (t_best * sgn) * T[:, q]
                status[q] = _AT_HI if status[q] == _AT_LO else _AT_LO
                xval[q] = hi[q] if status[q] == _AT_HI else lo[q]
                continue

            leave = basis[r_best]
            enter_val = xval[q] + sgn * t_best
            self.xB -= (t_best * sgn) * T[:, q]
            if w[r_best] > 0:
                status[leave], xval[leave] = _AT_LO, lo[leave]
            else:
                status[leave], xval[leave] = _AT_HI, hi[leave]
            basis[r_best] = q
            status[q] = _BASIC
            piv = T[r_best, q]
            Trow = T[r_best] / piv
            colv = T[:, q].copy()
            colv[r_best] = 0.0
            T[r_best] = Trow
            _rank1_update(T, colv, Trow)
            d = d - d[q] * Trow
            self.xB[r_best] = enter_val
            # Devex reference update from the (normalized) pivot row
            wq = devex[q]
            np.maximum(devex, (Trow * Trow) * wq, out=devex)
            devex[leave] = max(wq / (piv * piv), 1.0)
            devex[q] = 1.0
            if np.max(devex) > 1e8:
                devex[:] = 1.0
            if since_refresh >= 500:
                since_refresh = 0
                d = self._refresh(cost)
                T = self.T

    def solve(self):
        n_tot, n_art = self.n_tot, self.n_art
        if n_art:
            art_cost = np.zeros(self.N)
            art_cost[n_tot:] = 1.0
            st = self.run_phase(art_cost, phase1=True)
            if st == ITER_LIMIT:
                return _SimplexResult(ITER_LIMIT, None, None, self.iters)
            infeas = sum(self.xB[i] for i in range(self.m) if self.basis[i] >= n_tot)
            if infeas > 10 * self.feas_tol:
                return _SimplexResult(INFEASIBLE, None, None, self.iters)
            self.lo[n_tot:] = 0.0
            self.hi[n_tot:] = 0.0
            self.fixed[n_tot:] = True
            self.xval[n_tot:] = 0.0
        cost = np.concatenate([self.c_user, np.zeros(n_art)])
        st = self.run_phase(cost, phase1=False)
        if st in (ITER_LIMIT, UNBOUNDED):
            return _SimplexResult(st, None, None, self.iters)
        x = self.solution_x()
        np.clip(x, np.where(np.isfinite(self.lo[:n_tot]), self.lo[:n_tot], -np.inf),
                np.where(np.isfinite(self.hi[:n_tot]), self.hi[:n_tot], np.inf), out=x)
        return _SimplexResult(OPTIMAL, x, float(self.c_user @ x), self.iters)


def _bounded_simplex(A, b, lo, hi, c, iter_cap, feas_tol=1e-7):
    m = A.shape[0]
    if m == 0:
        unbounded = np.any((c > 0) & ~np.isfinite(lo)) or np.any((c < 0) & ~np.isfinite(hi))
        if unbounded:
            return _SimplexResult(UNBOUNDED, None, None, 0)
        x = np.zeros(len(c))
        pos, neg = c > 0, c < 0
        x[pos] = lo[pos]
        x[neg] = hi[neg]
        zero = ~pos & ~neg
        x[zero] = np.where(np.isfinite(lo[zero]), lo[zero],
                           np.where(np.isfinite(hi[zero]), hi[zero], 0.0))
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            return _SimplexResult(INFEASIBLE, None, None, 0)
        return _SimplexResult(OPTIMAL, x, float(c @ x), 0)
    return _Simplex(A, b, lo, hi, c, iter_cap, feas_tol).solve()


# ---------------------------------------------------------------------------
# public solves
# ---------------------------------------------------------------------------

def solve_lp(model: MilpModel, options: MilpOptions | None = None) -> MilpSolution:
    """Solve the LP relaxation (integrality dropped, bounds kept)."""
    if not model.variables:
        raise ValueError("model has no variables")
    opts = options or MilpOptions()
    arrs = _Arrays(model)
    if arrs.trivially_infeasible:
        return MilpSolution(INFEASIBLE, None, None)
    cap = opts.iter_factor * (arrs.m + arrs.n_struct)
    res = _bounded_simplex(arrs.A, arrs.b, arrs.lo, arrs.hi, arrs.c, cap, opts.feas_tol)
    if res.status != OPTIMAL:
        return MilpSolution(res.status, None, None, 0, res.iterations)
    obj = arrs.obj_sign * res.objective + arrs.obj_const
    return MilpSolution(OPTIMAL, obj, res.x[:arrs.n_struct], 0, res.iterations)


def _solve_with_bounds(arrs: _Arrays, lo, hi, cap, feas_tol):
    lo_full = arrs.lo.copy()
    hi_full = arrs.hi.copy()
    lo_full[:arrs.n_struct] = lo
    hi_full[:arrs.n_struct] = hi
    return _bounded_simplex(arrs.A, arrs.b, lo_full, hi_full, arrs.c, cap, feas_tol)


@dataclass(order=True)
class _Node:
    bound: float
    neg_nid: int     # ties on the bound prefer the newest node (plunge)
    lo: np.ndarray = field(compare=False)
    hi: np.ndarray = field(compare=False)


def solve_milp(model: MilpModel, options: MilpOptions | None = None) -> MilpSolution:
    """Best-first branch and bound over binaries and SOS1 sets.

    Deterministic for fixed inputs and options: nodes are keyed on the
    relaxation bound with ties resolved toward the most recently created
    node (equal-bound plateaus are plunged depth-first, so the first
    incumbent closes them), fractional ties break to the lowest variable
    id, and SOS splits follow the ordered member list.
    """
    if not model.variables:
        raise ValueError("model has no variables")
    opts = options or MilpOptions()
    arrs = _Arrays(model)
    if arrs.trivially_infeasible:
        return MilpSolution(INFEASIBLE, None, None)
    cap = opts.iter_factor * (arrs.m + arrs.n_struct)
    n = arrs.n_struct
    bin_ids = np.array(model.binary_ids, dtype=int)
    sos_sets = [np.array(s, dtype=int) for s in model.sos1_sets]

    total_iters = 0
    node_count = 0
    next_id = 1
    incumbent_obj = np.inf  # internal min sense
    incumbent_x = None
    saw_limit = False

    heap = [_Node(-np.inf, 0, arrs.lo[:n].copy(), arrs.hi[:n].copy())]

    while heap:
        if node_count >= opts.node_limit:
            saw_limit = True
            break
        node = heapq.heappop(heap)
        if node.bound >= incumbent_obj - opts.gap:
            continue
        res = _solve_with_bounds(arrs, node.lo, node.hi, cap, opts.feas_tol)
        node_count += 1
        total_iters += res.iterations
        if res.status == ITER_LIMIT:
            saw_limit = True
            continue
        if res.status == UNBOUNDED:
            return MilpSolution(UNBOUNDED, None, None, node_count, total_iters)
        if res.status != OPTIMAL:
            continue
        if res.objective >= incumbent_obj - opts.gap:
            continue
        x = res.x[:n]

        branch_var = -1
        if bin_ids.size:
            fracs = np.abs(x[bin_ids] - np.round(x[bin_ids]))
            j = int(np.argmax(fracs))
            if fracs[j] > opts.int_tol:
                branch_var = int(bin_ids[j])
        viol_sos = -1
        if branch_var < 0:
            for k, members in enumerate(sos_sets):
                if np.count_nonzero(np.abs(x[members]) > opts.int_tol) > 1:
                    viol_sos = k
                    break

        if branch_var < 0 and viol_sos < 0:
            incumbent_obj = res.objective
            incumbent_x = x.copy()
            continue

        # children are pushed preferred-last: equal bounds pop newest first,
        # so the plunge follows the relaxation's strongest hint
        children = []
        if branch_var >= 0:
            lo_d, hi_d = node.lo.copy(), node.hi.copy()
            hi_d[branch_var] = 0.0
            down = (lo_d, hi_d)
            lo_u, hi_u = node.lo.copy(), node.hi.copy()
            lo_u[branch_var] = 1.0
            up = (lo_u, hi_u)
            order = (down, up) if x[branch_var] >= 0.5 else (up, down)
            for lo_c, hi_c in order:
                children.append(_Node(res.objective, -next_id, lo_c, hi_c))
                next_id += 1
        else:
            members = sos_sets[viol_sos]
            weights = np.arange(1.0, len(members) + 1.0)
            absx = np.abs(x[members])
            wbar = float(weights @ absx / absx.sum())
            split = min(max(int(np.floor(wbar)), 1), len(members) - 1)
            top = int(np.argmax(absx))
            zero_sets = [members[split:], members[:split]]
            if top >= split:   # dominant member lives in the tail: keep it last
                zero_sets.reverse()
            for zero_ids in zero_sets:
                lo_c, hi_c = node.lo.copy(), node.hi.copy()
                lo_c[zero_ids] = 0.0
                hi_c[zero_ids] = 0.0
                children.append(_Node(res.objective, -next_id, lo_c, hi_c))
                next_id += 1
        for child in children:
            if child.bound < incumbent_obj - opts.gap:
                heapq.heappush(heap, child)

    if incumbent_x is None:
        status = ITER_LIMIT if saw_limit else INFEASIBLE
        return MilpSolution(status, None, None, node_count, total_iters)
    status = ITER_LIMIT if saw_limit else OPTIMAL
    obj = arrs.obj_sign * incumbent_obj + arrs.obj_const
    return MilpSolution(status, obj, incumbent_x, node_count, total_iters)


def brute_force(model: MilpModel, options: MilpOptions | None = None) -> MilpSolution:
    """Enumerate binary assignments x SOS1 active-member choices; solve each LP.

    Intended as a test oracle.  Raises :class:`TooLarge` above 2^20
    combinations.
    """
    if not model.variables:
        raise ValueError("model has no variables")
    opts = options or MilpOptions()
    arrs = _Arrays(model)
    if arrs.trivially_infeasible:
        return MilpSolution(INFEASIBLE, None, None)
    cap = opts.iter_factor * (arrs.m + arrs.n_struct)
    n = arrs.n_struct
    bin_ids = model.binary_ids
    sos_sets = model.sos1_sets
    combos = 2 ** len(bin_ids)
    for s in sos_sets:
        combos *= len(s) + 1
    if combos > 2 ** 20:
        raise TooLarge(f"{combos} combinations exceed the enumeration cap")

    lo0 = arrs.lo[:n].copy()
    hi0 = arrs.hi[:n].copy()
    best = {"obj": np.inf, "x": None}
    stats = {"iters": 0, "solves": 0}

    def enumerate_sos(k, lo, hi):
        if k == len(sos_sets):
            res = _solve_with_bounds(arrs, lo, hi, cap, opts.feas_tol)
            stats["solves"] += 1
            stats["iters"] += res.iterations
            if res.status == OPTIMAL and res.objective < best["obj"] - 1e-12:
                best["obj"] = res.objective
                best["x"] = res.x[:n].copy()
            return
        for choice in range(-1, len(sos_sets[k])):
            lo2, hi2 = lo.copy(), hi.copy()
            for idx, vid in enumerate(sos_sets[k]):
                if idx != choice:
                    lo2[vid] = 0.0
                    hi2[vid] = 0.0
            enumerate_sos(k + 1, lo2, hi2)

    for mask in range(2 ** len(bin_ids)):
        lo, hi = lo0.copy(), hi0.copy()
        for j, vid in enumerate(bin_ids):
            bit = float((mask >> j) & 1)
            lo[vid] = hi[vid] = bit
        enumerate_sos(0, lo, hi)

    if best["x"] is None:
        return MilpSolution(INFEASIBLE, None, None, stats["solves"], stats["iters"])
    obj = arrs.obj_sign * best["obj"] + arrs.obj_const
    return MilpSolution(OPTIMAL, obj, best["x"], stats["solves"], stats["iters"])
