"""Time-domain simulation of the homogeneous model.

The index-one structure is exploited directly: the reactive homogeneous
variables (u_c, u_l) are integrated with an embedded Dormand-Prince 5(4)
pair while u_r is re-solved from the constraints by warm-started Newton at
every stage.  Memristive circuits without resistors are integrated as the
quasilinear ODE G(u) u' = -H(u).  Event functions are the derivative
components psi', zeta' of every branch, located by bisection; impasse
points stop the trajectory with a flagged event.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .homomodel import (HomogeneousModel, LeadingCoefficientError,
                        UnsupportedOperation)

EVENT_KINDS = ("psi_c_prime_zero", "zeta_c_prime_zero",
               "psi_l_prime_zero", "zeta_l_prime_zero",
               "psi_m_prime_zero", "zeta_m_prime_zero",
               "psi_r_prime_zero", "zeta_r_prime_zero",
               "impasse", "equilibrium_hit")


class ConstraintSolveError(ArithmeticError):
    """Newton failed to solve the algebraic constraints for u_r."""


class ChartError(ValueError):
    pass


@dataclass
class SimulationConfig:
    t_end: float = 1.0
    initial_step: float = 1e-4
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    event_tol: float = 1e-10
    impasse_tol: float = 1e-8
    max_step: float = 0.05
    min_step: float = 1e-12
    max_steps: int = 500_000
    # balanced singularity crossings: a leading coefficient and its
    # right-hand side vanish together (0/0 with a finite limit slope).
    # Detection window and the micro time step used to hop across.
    crossing_tol: float = 1e-3
    crossing_hop: float = 1e-5

    def __post_init__(self):
        for name in ("newton_tol", "abs_tol", "rel_tol", "event_tol",
                     "impasse_tol", "max_step", "min_step"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class Event:
    time: float
    kind: str
    branch_id: int | None
    state: np.ndarray


@dataclass
class Trajectory:
    model: HomogeneousModel
    times: np.ndarray
    states: np.ndarray                 # (n_samples, m), circle lifts unwrapped
    events: list[Event]
    status: str                        # completed | impasse | newton_failure | step_limit
    diagnostic: str | None = None
    max_constraint_residual: float = 0.0

    def sample_count(self) -> int:
        return len(self.times)

    def state_at(self, k: int) -> np.ndarray:
        return self.states[k]

    def events_of_kind(self, kind: str) -> list[Event]:
        return [e for e in self.events if e.kind == kind]

    def branch_outputs(self) -> dict[str, np.ndarray]:
        """Per-sample classical outputs: currents, voltages, charges, fluxes.

        Currents of capacitors and voltages of inductors/memristors come from
        the model right-hand sides, so no division by a leading coefficient
        is involved.
        """
        model = self.model
        n = len(self.times)
        i = np.zeros((n, model.m))
        v = np.zeros((n, model.m))
        sigma = np.zeros((n, model.m_c + model.m_m))
        phi = np.zeros((n, model.m_l + model.m_m))
        for k in range(n):
            u = self.states[k]
            u_c, u_l = model.part(u, "c"), model.part(u, "l")
            u_m, u_r = model.part(u, "m"), model.part(u, "r")
            devs = model.devices
            sl = model.slices
            if model.m_m:
                xdot = model.quasilinear_rhs(u)
                um_dot = xdot[model.m_c + model.m_l:]
                i[k, sl["c"]] = devs["c"].dpsi(u_c) @ xdot[:model.m_c]
                v[k, sl["l"]] = devs["l"].dzeta(u_l) @ xdot[model.m_c:model.m_c + model.m_l]
                i[k, sl["m"]] = devs["m"].dpsi(u_m) @ um_dot
                v[k, sl["m"]] = devs["m"].dzeta(u_m) @ um_dot
            else:
                rc_num, rl_num = model.rhs_numerators(u)
                i[k, sl["c"]] = rc_num
                v[k, sl["l"]] = rl_num
            i[k, sl["l"]] = devs["l"].psi(u_l)
            i[k, sl["r"]] = devs["r"].psi(u_r)
            v[k, sl["c"]] = devs["c"].zeta(u_c)
            v[k, sl["r"]] = devs["r"].zeta(u_r)
            sigma[k, :model.m_c] = devs["c"].psi(u_c)
            sigma[k, model.m_c:] = devs["m"].psi(u_m)
            phi[k, :model.m_l] = devs["l"].zeta(u_l)
            phi[k, model.m_l:] = devs["m"].zeta(u_m)
        return {"i": i, "v": v, "sigma": sigma, "phi": phi}

    def kirchhoff_residuals(self) -> tuple[float, float]:
        """(max ||A i||_inf, max ||B v||_inf) across all samples."""
        out = self.branch_outputs()
        model = self.model
        res_i = res_v = 0.0
        for k in range(len(self.times)):
            if model.A.size:
                res_i = max(res_i, float(np.max(np.abs(model.A @ out["i"][k]))))
            if model.B.size:
                res_v = max(res_v, float(np.max(np.abs(model.B @ out["v"][k]))))
        return res_i, res_v


# --- constraint solving -------------------------------------------------------

def solve_constraints(model: HomogeneousModel, x: np.ndarray, guess_ur: np.ndarray,
                      cfg: SimulationConfig) -> np.ndarray:
    """Newton solve of the u_r constraints given differential coordinates x.

    With multiple constraint roots the warm start selects the branch by
    continuity (nearest root); root collisions are where the constraint
    Jacobian degenerates and are reported as impasse by the integrator.
    """
    if model.m_r == 0:
        return np.zeros(0)
    u_r = np.asarray(guess_ur, dtype=float).copy()
    u = _pack(model, x, u_r)
    for _ in range(cfg.newton_max_iter):
        res = model.constraint_residual(u)
        if np.max(np.abs(res)) <= cfg.newton_tol:
            return u_r
        jac = model.constraint_jacobian_ur(u_r)
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            raise ConstraintSolveError("singular constraint Jacobian at Newton iterate")
        if not np.all(np.isfinite(step)):
            raise ConstraintSolveError("non-finite Newton step")
        u_r = u_r + step
        u = _pack(model, x, u_r)
    res = model.constraint_residual(u)
    if np.max(np.abs(res)) <= 10 * cfg.newton_tol:
        return u_r
    raise ConstraintSolveError(
        f"Newton did not converge in {cfg.newton_max_iter} iterations "
        f"(residual {np.max(np.abs(res)):.3e}); the constraint set may be "
        "empty near the guess")


def consistent_init(model: HomogeneousModel, guess: np.ndarray,
                    cfg: SimulationConfig | None = None) -> np.ndarray:
    """Project a guess onto the constraint set by adjusting only u_r."""
    cfg = cfg or SimulationConfig()
    guess = np.asarray(guess, dtype=float)
    x = _differential_part(model, guess)
    u_r = solve_constraints(model, x, model.part(guess, "r"), cfg)
    return _pack(model, x, u_r)


def _differential_part(model: HomogeneousModel, u: np.ndarray) -> np.ndarray:
    return np.asarray(u, dtype=float)[:model.m_c + model.m_l + model.m_m]


def _pack(model: HomogeneousModel, x: np.ndarray, u_r: np.ndarray) -> np.ndarray:
    return np.concatenate([x, u_r])


# --- vector field --------------------------------------------------------------

class _Field:
    """Differential vector field with constraint re-solve and warm starting."""

    def __init__(self, model: HomogeneousModel, cfg: SimulationConfig):
        if model.m_m and model.m_r:
            raise UnsupportedOperation(
                "simulation supports RLC circuits and resistor-free memristive "
                "circuits")
        self.model = model
        self.cfg = cfg
        self.memristive = model.m_m > 0

    def __call__(self, x: np.ndarray, warm_ur: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        model = self.model
        if self.memristive:
            return model.quasilinear_rhs(x), warm_ur
        u_r = solve_constraints(model, x, warm_ur, self.cfg)
        u = _pack(model, x, u_r)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            uc_dot, ul_dot = model.state_rhs(u, leading_tol=0.0)
        xdot = np.concatenate([uc_dot, ul_dot])
        if not np.all(np.isfinite(xdot)):
            raise LeadingCoefficientError("state rhs is not finite")
        return xdot, u_r


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                   187 / 2100, 1 / 40])


def _dp_step(field: _Field, x: np.ndarray, warm_ur: np.ndarray, h: float):
    """One Dormand-Prince step: returns (x_new, err, u_r at endpoint)."""
    k = []
    ur = warm_ur
    for s in range(7):
        xs = x.copy()
        for j, a in enumerate(_DP_A[s]):
            if a:
                xs = xs + h * a * k[j]
        ks, ur = field(xs, ur)
        k.append(ks)
    x_new = x + h * sum(b * ki for b, ki in zip(_DP_B5, k))
    err = h * sum((b5 - b4) * ki for b5, b4, ki in zip(_DP_B5, _DP_B4, k))
    return x_new, err, ur


# --- event machinery -------------------------------------------------------------

def _monitors(model: HomogeneousModel) -> list[tuple[str, int, str, str]]:
    """(kind, branch id, role, map) per derivative component to watch."""
    out = []
    for role in ("c", "l", "m", "r"):
        ids = model.role_branch_ids(role)
        for pos, bid in enumerate(ids):
            out.append((f"psi_{role}_prime_zero", bid, role, "psi"))
            out.append((f"zeta_{role}_prime_zero", bid, role, "zeta"))
    return out


def _monitor_values(model: HomogeneousModel, u: np.ndarray) -> np.ndarray:
    values = []
    for role in ("c", "l", "m", "r"):
        u_role = model.part(u, role)
        dpsi = model.devices[role].diag_dpsi(u_role)
        dzeta = model.devices[role].diag_dzeta(u_role)
        for pos in range(model.dims[role]):
            values.append(dpsi[pos])
            values.append(dzeta[pos])
    return np.array(values)


def _locate_events(model, field, cfg, t0, t1, x0, x1, ur0, ur1, g0, g1):
    """Bisection on linearly interpolated states for each sign change."""
    monitors = _monitors(model)
    events = []
    for idx, (kind, bid, _, _) in enumerate(monitors):
        a, b = g0[idx], g1[idx]
        if a == 0.0 or not (a * b < 0.0 or (b == 0.0 and a != 0.0)):
            continue
        lo, hi = 0.0, 1.0
        glo = a

        def value_at(s: float) -> tuple[float, np.ndarray]:
            x = x0 + s * (x1 - x0)
            ur = ur0 + s * (ur1 - ur0)
            if model.m_r:
                try:
                    ur = solve_constraints(model, x, ur, cfg)
                except ConstraintSolveError:
                    pass     # fall back to the interpolated u_r
            u = _pack(model, x, ur)
            return _monitor_values(model, u)[idx], u

        u_event = None
        span = t1 - t0
        while (hi - lo) * span > cfg.event_tol:
            mid = 0.5 * (lo + hi)
            gmid, u_mid = value_at(mid)
            if glo * gmid <= 0.0:
                hi = mid
            else:
                lo, glo = mid, gmid
            u_event = u_mid
        s_event = 0.5 * (lo + hi)
        if u_event is None:
            u_event = value_at(s_event)[1]
        events.append(Event(time=t0 + s_event * span, kind=kind, branch_id=bid,
                            state=u_event))
    events.sort(key=lambda e: (e.time, e.branch_id))
    return events


# --- balanced singularity crossings ---------------------------------------------

def _leading_rows(model, u):
    """Scalar leading-coefficient components: (role, pos, coeff, num, dd)."""
    if model.m_m:
        return []
    rc_num, rl_num = model.rhs_numerators(u)
    u_c, u_l = model.part(u, "c"), model.part(u, "l")
    import homcirc.expr as expr_mod
    rows = []
    for role, nums, u_role, which in (("c", rc_num, u_c, "psi"),
                                      ("l", rl_num, u_l, "zeta")):
        dset = model.devices[role]
        coeffs = dset.diag_dpsi(u_role) if which == "psi" else dset.diag_dzeta(u_role)
        for pos in range(model.dims[role]):
            ch = dset.scalar_at(pos)
            if ch is None:
                continue
            dd_node = ch.psi_dd if which == "psi" else ch.zeta_dd
            dd = expr_mod.evaluate_at(dd_node, float(u_role[pos]))
            rows.append((role, pos, float(coeffs[pos]), float(nums[pos]), dd))
    return rows


def _detect_crossing(model, cfg, u):
    """Balanced near-crossing: coefficient and numerator both small while the
    coefficient is still shrinking.  Returns the best (role, pos) or None."""
    best = None
    scale = 1.0 + float(np.max(np.abs(u), initial=0.0))
    for role, pos, coeff, num, dd in _leading_rows(model, u):
        if abs(coeff) > cfg.crossing_tol or abs(num) > cfg.crossing_tol * scale:
            continue
        if coeff == 0.0:
            return role, pos
        udot = num / coeff
        approaching = coeff * dd * udot < 0.0
        if not approaching:
            continue
        score = abs(coeff) + abs(num)
        if best is None or score < best[0]:
            best = (score, role, pos)
    return None if best is None else (best[1], best[2])


class _CrossingGeometry:
    """Finite-difference probes of one leading row around a state."""

    def __init__(self, model, cfg, role, pos):
        self.model = model
        self.cfg = cfg
        self.role = role
        self.pos = pos
        self.global_i = model.slices[role].start + pos
        self.n_diff = model.m_c + model.m_l

    def values(self, x, warm_ur):
        model = self.model
        u_r = solve_constraints(model, x, warm_ur, self.cfg)
        u = _pack(model, x, u_r)
        for role, pos, coeff, num, dd in _leading_rows(model, u):
            if role == self.role and pos == self.pos:
                return coeff, num, dd, u_r, u
        raise LookupError("leading row disappeared")

    def other_rates(self, u):
        """u' of the other differential variables, leaving ours out."""
        model = self.model
        with np.errstate(divide="ignore", invalid="ignore"):
            uc_dot, ul_dot = model.state_rhs(u, leading_tol=0.0)
        xdot = np.concatenate([uc_dot, ul_dot])
        xdot[self.global_i] = 0.0
        if not np.all(np.isfinite(xdot)):
            raise LeadingCoefficientError("several leading coefficients vanish")
        return xdot


def _attempt_crossing_hop(model, cfg, t, x, warm_ur, incoming_sign):
    """Project onto the codim-2 crossing point and step across it.

    Returns (event, t_new, x_new, ur_new) when the point admits a finite
    limit slope, None otherwise (genuine impasse).
    """
    found = _detect_crossing(model, cfg, _pack(model, x, warm_ur))
    if found is None:
        return None
    role, pos = found
    geo = _CrossingGeometry(model, cfg, role, pos)
    gi = geo.global_i

    # second adjustment coordinate: strongest finite-difference influence on
    # the numerator among the other differential variables
    try:
        coeff0, num0, _, ur0, _ = geo.values(x, warm_ur)
    except (ConstraintSolveError, LookupError):
        return None
    h_fd = 1e-6
    best_j, best_slope = None, 0.0
    for j in range(geo.n_diff):
        if j == gi:
            continue
        xp = x.copy()
        xp[j] += h_fd
        try:
            _, num_p, _, _, _ = geo.values(xp, ur0)
        except ConstraintSolveError:
            continue
        slope = (num_p - num0) / h_fd
        if abs(slope) > abs(best_slope):
            best_j, best_slope = j, slope
    if best_j is None:
        return None

    # 2x2 Newton on (coeff(x_i), num(x)) over (x_i, x_j)
    xn = x.copy()
    ur = ur0
    for _ in range(40):
        try:
            coeff, num, dd, ur, u_full = geo.values(xn, ur)
        except (ConstraintSolveError, LookupError):
            return None
        scale = 1.0 + float(np.max(np.abs(xn), initial=0.0))
        if abs(coeff) <= 1e-12 and abs(num) <= 1e-12 * scale:
            break
        def probe(k, h):
            xq = xn.copy()
            xq[k] += h
            c_q, n_q, _, _, _ = geo.values(xq, ur)
            return (c_q - coeff) / h, (n_q - num) / h
        try:
            dc_di, dn_di = probe(gi, h_fd)
            dc_dj, dn_dj = probe(best_j, h_fd)
        except ConstraintSolveError:
            return None
        jac = np.array([[dc_di, dc_dj], [dn_di, dn_dj]])
        try:
            step = np.linalg.solve(jac, -np.array([coeff, num]))
        except np.linalg.LinAlgError:
            return None
        if np.max(np.abs(step)) > 0.1:   # projection should be local
            return None
        xn[gi] += step[0]
        xn[best_j] += step[1]
    else:
        return None

    # limit slope s from dd*s^2 - (d num/d x_i)*s - (sum_j d num/d x_j * x_j') = 0
    try:
        coeff, num, dd, ur, u_full = geo.values(xn, ur)
        xq = xn.copy()
        xq[gi] += h_fd
        _, num_i, _, _, _ = geo.values(xq, ur)
        b = (num_i - num) / h_fd
        rates = geo.other_rates(u_full)
        tau = 1e-7
        x_adv = xn + tau * rates
        _, num_adv, _, _, _ = geo.values(x_adv, ur)
        c_other = (num_adv - num) / tau
    except (ConstraintSolveError, LeadingCoefficientError, LookupError):
        return None
    if abs(dd) < 1e-10:
        return None
    disc = b * b + 4.0 * dd * c_other
    if disc < 0.0:
        return None   # no real crossing slope: fold / impasse
    roots = [(b + math.sqrt(disc)) / (2 * dd), (b - math.sqrt(disc)) / (2 * dd)]
    same_sign = [s for s in roots if s * incoming_sign > 0]
    if not same_sign:
        return None
    s = max(same_sign, key=abs) if len(same_sign) == 2 else same_sign[0]

    kind = "psi_c_prime_zero" if role == "c" else "zeta_l_prime_zero"
    bid = model.role_branch_ids(role)[pos]
    event = Event(time=t, kind=kind, branch_id=bid, state=u_full.copy())

    delta = cfg.crossing_hop
    x_new = xn + delta * geo.other_rates(u_full)
    x_new[gi] = xn[gi] + delta * s
    try:
        ur_new = solve_constraints(model, x_new, ur, cfg)
    except ConstraintSolveError:
        return None
    return event, t + delta, x_new, ur_new


def _dedup_events(events: list[Event], window: float) -> list[Event]:
    out: list[Event] = []
    last: dict[tuple, float] = {}
    for e in sorted(events, key=lambda e: (e.time, str(e.branch_id), e.kind)):
        key = (e.kind, e.branch_id)
        if key in last and e.time - last[key] <= window:
            continue
        last[key] = e.time
        out.append(e)
    return out


# --- the integrator ---------------------------------------------------------------

def integrate(model: HomogeneousModel, init: np.ndarray,
              cfg: SimulationConfig) -> Trajectory:
    """Adaptive integration from a consistent initial state."""
    field = _Field(model, cfg)
    x = _differential_part(model, init)
    u_r = model.part(init, "r").copy()
    if model.m_r:
        u_r = solve_constraints(model, x, u_r, cfg)
    t = 0.0
    times = [t]
    states = [_pack(model, x, u_r)]
    events: list[Event] = []
    status = "completed"
    diagnostic = None
    max_residual = _residual_norm(model, states[0])

    if cfg.t_end <= 0.0:
        return Trajectory(model, np.array(times), np.array(states), events,
                          "completed", None, max_residual)

    h = min(cfg.initial_step, cfg.max_step, cfg.t_end)
    g_prev = _monitor_values(model, states[0])
    hit_equilibrium = False
    steps = 0
    while t < cfg.t_end:
        steps += 1
        if steps > cfg.max_steps:
            status, diagnostic = "step_limit", f"exceeded {cfg.max_steps} steps"
            break
        h = min(h, cfg.t_end - t)
        try:
            x_new, err, ur_new = _dp_step(field, x, u_r, h)
            scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(x), np.abs(x_new))
            err_norm = float(np.sqrt(np.mean((err / scale) ** 2))) if len(x) else 0.0
            failed = not np.all(np.isfinite(x_new)) or not math.isfinite(err_norm)
        except (ConstraintSolveError, LeadingCoefficientError) as exc:
            failed, err_norm, exc_info = True, math.inf, exc
            x_new = ur_new = None

        if failed or err_norm > 1.0:
            bounded = (x_new is not None
                       and float(np.max(np.abs(x_new - x), initial=0.0))
                       <= 1e-2 * (1.0 + float(np.max(np.abs(x), initial=0.0))))
            if h <= 4 * cfg.min_step and not failed and bounded:
                # balanced singularity crossing: the increment stays bounded
                # while the error estimate diverges; step across
                pass
            else:
                h = max(h * (0.25 if failed else
                             max(0.2, 0.9 * err_norm ** -0.2)), cfg.min_step / 2)
                if h < cfg.min_step:
                    status, diagnostic, events_add = _terminal_classification(
                        model, field, cfg, t, x, u_r)
                    events.extend(events_add)
                    break
                continue

        # accepted
        t_new = t + h
        u_new = _pack(model, x_new, ur_new)
        g_new = _monitor_values(model, u_new)
        events.extend(_locate_events(model, field, cfg, t, t_new,
                                     x, x_new, u_r, ur_new, g_prev, g_new))
        times.append(t_new)
        states.append(u_new)
        max_residual = max(max_residual, _residual_norm(model, u_new))

        if not model.m_m and _detect_crossing(model, cfg, u_new) is not None:
            sign = _incoming_sign(model, cfg, u_new)
            hop = _attempt_crossing_hop(model, cfg, t_new, x_new, ur_new, sign)
            if hop is not None:
                event, t_hop, x_hop, ur_hop = hop
                events.append(event)
                u_hop = _pack(model, x_hop, ur_hop)
                times.append(t_hop)
                states.append(u_hop)
                max_residual = max(max_residual, _residual_norm(model, u_hop))
                t, x, u_r = t_hop, x_hop, ur_hop
                g_prev = _monitor_values(model, u_hop)
                h = min(cfg.initial_step, cfg.max_step)
                continue

        if _impasse_detected(model, u_new, cfg):
            events.append(Event(time=t_new, kind="impasse", branch_id=None,
                                state=u_new))
            status, diagnostic = "impasse", "constraint Jacobian fell below threshold"
            break
        if not hit_equilibrium and _at_equilibrium(field, x_new, ur_new):
            events.append(Event(time=t_new, kind="equilibrium_hit", branch_id=None,
                                state=u_new))
            hit_equilibrium = True

        t, x, u_r, g_prev = t_new, x_new, ur_new, g_new
        if not failed and err_norm > 0.0:
            h = min(cfg.max_step, h * min(5.0, max(0.2, 0.9 * err_norm ** -0.2)))
        elif err_norm == 0.0:
            h = min(cfg.max_step, h * 5.0)

    events = _dedup_events(events, window=100 * cfg.event_tol)
    return Trajectory(model, np.array(times), np.array(states), events,
                      status, diagnostic, max_residual)


def _incoming_sign(model, cfg, u) -> float:
    found = _detect_crossing(model, cfg, u)
    if found is None:
        return 1.0
    role, pos = found
    for r, p, coeff, num, _ in _leading_rows(model, u):
        if (r, p) == (role, pos):
            return math.copysign(1.0, num * coeff) if num * coeff != 0 else 1.0
    return 1.0


def _residual_norm(model, u) -> float:
    try:
        res = model.constraint_residual(u)
    except UnsupportedOperation:
        return 0.0
    return float(np.max(np.abs(res))) if res.size else 0.0


def _impasse_detected(model, u, cfg) -> bool:
    if model.m_m:
        G = model.derivative_matrix(u)
        det = float(np.linalg.det(G))
        return abs(det) < cfg.impasse_tol * max(1.0, _hadamard(G))
    if model.m_r == 0:
        return False
    jac = model.constraint_jacobian_ur(model.part(u, "r"))
    det = float(np.linalg.det(jac))
    return abs(det) < cfg.impasse_tol * max(1.0, _hadamard(jac))


def _hadamard(mat: np.ndarray) -> float:
    if mat.size == 0:
        return 1.0
    return float(np.prod(np.linalg.norm(mat, axis=1)))


def _at_equilibrium(field, x, u_r, tol: float = 1e-13) -> bool:
    try:
        xdot, _ = field(x, u_r)
    except (ConstraintSolveError, LeadingCoefficientError):
        return False
    bound = tol * (1.0 + float(np.max(np.abs(x), initial=0.0)))
    return bool(len(xdot) == 0 or np.max(np.abs(xdot)) <= bound)


def _terminal_classification(model, field, cfg, t, x, u_r):
    """Step size underflow: decide between impasse and Newton failure.

    Proximity of the constraint Jacobian to singularity dominates: a Newton
    breakdown right at a fold of the constraint set is an impasse, not a
    solver defect.
    """
    near_singular = False
    if model.m_r:
        jac = model.constraint_jacobian_ur(np.asarray(u_r, dtype=float))
        near_singular = (abs(float(np.linalg.det(jac)))
                         < 1e-3 * max(1.0, _hadamard(jac)))
        try:
            solve_constraints(model, x, u_r, cfg)
        except ConstraintSolveError as exc:
            if not near_singular:
                return "newton_failure", str(exc), []
    u = _pack(model, x, u_r)
    event = Event(time=t, kind="impasse", branch_id=None, state=u)
    return "impasse", "step size underflow at a singular point", [event]


# --- quasilinear charts ------------------------------------------------------------

class QuasilinearChart:
    """Reduction E(x) x' = F(x) in chosen homogeneous coordinates.

    ``coords`` are branch ids; the remaining m_r variables are solved from
    the constraints by Newton (implicit function theorem).  Valid wherever
    that complement Jacobian is nonsingular; impasse points show up as
    singular E with F outside its range.
    """

    def __init__(self, model: HomogeneousModel, u0: np.ndarray,
                 coords: list[int], cfg: SimulationConfig | None = None):
        if model.m_m:
            raise UnsupportedOperation("charts are built for RLC circuits")
        self.model = model
        self.cfg = cfg or SimulationConfig()
        if len(coords) != model.m_c + model.m_l:
            raise ChartError(f"chart needs {model.m_c + model.m_l} coordinates")
        all_idx = list(range(model.m))
        self.x_idx = [model.index_of(b) for b in coords]
        if len(set(self.x_idx)) != len(self.x_idx):
            raise ChartError("duplicate chart coordinates")
        self.y_idx = [i for i in all_idx if i not in self.x_idx]
        self.u0 = np.asarray(u0, dtype=float).copy()
        jac_y = model.full_constraint_jacobian(u0)[:, self.y_idx]
        if jac_y.size:
            sv = np.linalg.svd(jac_y, compute_uv=False)
            if sv[-1] <= 1e-10 * max(1.0, sv[0]):
                raise ChartError(
                    "remaining variables are not solvable from the constraints "
                    "in this chart (singular complement Jacobian)")

    def project(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u, dtype=float)[self.x_idx]

    def lift(self, x: np.ndarray, guess: np.ndarray | None = None) -> np.ndarray:
        """Full state with the complement solved from the constraints."""
        model = self.model
        u = (self.u0 if guess is None else np.asarray(guess, dtype=float)).copy()
        u[self.x_idx] = x
        for _ in range(self.cfg.newton_max_iter):
            res = model.constraint_residual(u)
            if res.size == 0 or np.max(np.abs(res)) <= self.cfg.newton_tol:
                return u
            jac_y = model.full_constraint_jacobian(u)[:, self.y_idx]
            try:
                step = np.linalg.solve(jac_y, -res)
            except np.linalg.LinAlgError:
                raise ConstraintSolveError("singular chart Jacobian")
            u[self.y_idx] += step
        raise ConstraintSolveError("chart Newton did not converge")

    def system(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(E, F) of the quasilinear reduction at a full state on the manifold."""
        model = self.model
        k = len(self.x_idx)
        jac_full = model.full_constraint_jacobian(u)
        dudx = np.zeros((model.m, k))
        for col, i in enumerate(self.x_idx):
            dudx[i, col] = 1.0
        if self.y_idx and jac_full.size:
            jac_y = jac_full[:, self.y_idx]
            jac_x = jac_full[:, self.x_idx]
            dydx = np.linalg.solve(jac_y, -jac_x)
            for row, i in enumerate(self.y_idx):
                dudx[i, :] = dydx[row, :]
        u_c, u_l = model.part(u, "c"), model.part(u, "l")
        Pc = model.devices["c"].dpsi(u_c)
        Ql = model.devices["l"].dzeta(u_l)
        E = np.vstack([Pc @ dudx[model.slices["c"], :],
                       Ql @ dudx[model.slices["l"], :]])
        rc_num, rl_num = model.rhs_numerators(u)
        F = np.concatenate([rc_num, rl_num])
        return E, F

    def rhs(self, x: np.ndarray, guess: np.ndarray | None = None) -> np.ndarray:
        u = self.lift(x, guess)
        E, F = self.system(u)
        return np.linalg.solve(E, F)


def quasilinear_chart(model: HomogeneousModel, u0: np.ndarray, coords: list[int],
                      cfg: SimulationConfig | None = None) -> QuasilinearChart:
    return QuasilinearChart(model, u0, coords, cfg)


def integrate_chart(chart: QuasilinearChart, u0: np.ndarray, t_end: float,
                    cfg: SimulationConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-tolerance RK integration inside one chart (no events)."""
    cfg = cfg or SimulationConfig()
    x = chart.project(u0)
    guess = np.asarray(u0, dtype=float).copy()

    def field(xv, warm):
        u = chart.lift(xv, warm)
        E, F = chart.system(u)
        return np.linalg.solve(E, F), u

    t = 0.0
    h = min(cfg.initial_step, t_end)
    times, xs = [0.0], [x.copy()]
    while t < t_end:
        h = min(h, t_end - t)
        x_new, err, guess = _dp_step_generic(field, x, guess, h)
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(x), np.abs(x_new))
        err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))
        if err_norm > 1.0:
            h = max(h * max(0.2, 0.9 * err_norm ** -0.2), cfg.min_step)
            if h <= cfg.min_step:
                raise ArithmeticError("chart integration step underflow")
            continue
        t += h
        x = x_new
        times.append(t)
        xs.append(x.copy())
        if err_norm > 0:
            h = min(cfg.max_step, h * min(5.0, max(0.2, 0.9 * err_norm ** -0.2)))
    return np.array(times), np.array(xs)


def _dp_step_generic(field, x, warm, h):
    k = []
    aux = warm
    for s in range(7):
        xs = x.copy()
        for j, a in enumerate(_DP_A[s]):
            if a:
                xs = xs + h * a * k[j]
        ks, aux = field(xs, aux)
        k.append(ks)
    x_new = x + h * sum(b * ki for b, ki in zip(_DP_B5, k))
    err = h * sum((b5 - b4) * ki for b5, b4, ki in zip(_DP_B5, _DP_B4, k))
    return x_new, err, aux


# --- impasse classification ----------------------------------------------------------

def impasse_monitor(model: HomogeneousModel, u: np.ndarray,
                    tol: float = 1e-8) -> str:
    """Classify a constraint-set point: regular, impasse-candidate, or
    singular-equilibrium-candidate."""
    u = np.asarray(u, dtype=float)
    if model.m_m:
        if model.m_r:
            raise UnsupportedOperation("memristive circuits with resistors")
        E = model.derivative_matrix(u)
        F = -model.nondiff(u)
        return _classify_pencil_point(E, F, tol)
    report = model.regularity_check(u)
    if report.regular:
        return "regular"
    coords = _auto_chart_coords(model, u)
    try:
        chart = QuasilinearChart(model, u, coords)
    except ChartError:
        return "singular-equilibrium-candidate"
    E, F = chart.system(u)
    return _classify_pencil_point(E, F, tol)


def _classify_pencil_point(E: np.ndarray, F: np.ndarray, tol: float) -> str:
    if E.size == 0:
        return "regular"
    U, s, _ = np.linalg.svd(E)
    if s[-1] > tol * max(1.0, s[0]):
        return "regular"
    w = U[:, -1]
    if abs(float(w @ F)) > tol * (1.0 + float(np.linalg.norm(F))):
        return "impasse-candidate"
    return "singular-equilibrium-candidate"


def _auto_chart_coords(model: HomogeneousModel, u: np.ndarray) -> list[int]:
    """Pick chart coordinates whose complement has solvable constraints:
    greedy column-pivoted selection on the full constraint Jacobian."""
    jac = model.full_constraint_jacobian(u)
    m = model.m
    if jac.size == 0:
        chosen: list[int] = []
    else:
        work = jac.copy()
        chosen = []
        for _ in range(model.m_r):
            norms = np.linalg.norm(work, axis=0)
            norms[chosen] = -1.0
            col = int(np.argmax(norms))
            chosen.append(col)
            v = work[:, col]
            nv = float(v @ v)
            if nv > 0:
                work = work - np.outer(v, (v @ work) / nv)
    ids = []
    branch_order = [model.graph.branches[j].branch_id
                    for role in ("c", "l", "m", "r")
                    for j in model.graph.block_indices(role)]
    for i in range(m):
        if i not in chosen:
            ids.append(branch_order[i])
    return ids
