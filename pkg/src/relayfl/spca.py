"""Transmit-power optimization by sequential parametric convex approximation.

The uplink energy problem (minimize sum of power/rate terms subject to the
TDMA deadline and power boxes) is non-convex.  Each SPCA pass rewrites it
with auxiliary variables so that the only non-convex rows are of the
quadratic-over-linear kind omega^2 / z >= t; those are replaced by their
first-order lower bound at the current iterate, which yields a smooth convex
subproblem solved here by a logarithmic-barrier Newton method.  Because the
surrogate underestimates omega^2 / z everywhere, every subproblem-feasible
point is feasible for the true problem, so the deadline guarantee and the
monotone objective trace come for free.

Subproblem variable layout (one shared scalar + per-device blocks):

    [E_t] + per single-hop device [P, t1, w, gam, rho]
          + per two-hop device    [P, Ps, t2, t3, w1, w2, gam1, gam2, psi, zeta]

Constraint rows carry one of four convexity tags: affine (surrogate and SNR
rows), quadratic (gam >= w^2), exponential-affine (2^gam - 1 <= rho) and
inverse-sum (the E_t budget row and the deadline row).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .channel import ChannelRealization
from .energy_time import PowerAllocation, achieved_rates, uplink_times
from .errors import ConfigError, DeadlineUnattainableError, InfeasibleError
from .link_rates import LinkParams
from .scheduler import Schedule

LN2 = math.log(2.0)

CONVEXITY_KINDS = ("affine", "quadratic", "inverse-sum", "exponential-affine")


@dataclass(frozen=True)
class SpcaOptions:
    """Tolerances for the outer SPCA loop and the inner barrier solver."""

    eps_rel: float = 1e-4          # outer relative-decrease stop
    max_outer: int = 50
    inner_tol: float = 1e-8        # inner duality-gap / KKT target
    barrier_mu: float = 8.0
    barrier_t0: float | None = None   # None: scale-matched automatic start
    newton_max_steps: int = 300    # per barrier stage
    seed_safety: tuple[float, ...] = (0.99, 0.999, 0.9999, 0.999999)


@dataclass
class SolverReport:
    """Outcome of one solver run (inner barrier or outer SPCA)."""

    iterations: int
    objective_trace: list[float]
    kkt_residual: float
    status: str  # converged | max_iters | infeasible


def omega_lower_bound(omega: float, z: float, omega_ref: float, z_ref: float) -> float:
    """First-order lower bound of omega^2 / z at the reference point.

    Omega(w, z) = (2 w_ref / z_ref) w - (w_ref / z_ref)^2 z.  Equality holds
    at (w_ref, z_ref); elsewhere the tangent underestimates the convex
    quadratic-over-linear function on z > 0.
    """
    if z_ref <= 0:
        raise ValueError("z_ref must be positive")
    ratio = omega_ref / z_ref
    return 2.0 * ratio * omega - ratio * ratio * z


# --------------------------------------------------------------------------
# Variable layout and program description
# --------------------------------------------------------------------------

class VariableLayout:
    """Index map from named per-device auxiliaries to the flat vector."""

    SINGLE_FIELDS = ("P", "t1", "w", "gam", "rho")
    TWO_FIELDS = ("P", "Ps", "t2", "t3", "w1", "w2", "gam1", "gam2", "psi", "zeta")

    def __init__(self, schedule: Schedule) -> None:
        self.schedule = schedule
        self.names: list[str] = ["E_t"]
        self.single: dict[int, dict[str, int]] = {}
        self.two: dict[int, dict[str, int]] = {}
        for n in schedule.single_hop:
            self.single[n] = {f: len(self.names) + i for i, f in enumerate(self.SINGLE_FIELDS)}
            self.names += [f"{f}[{n}]" for f in self.SINGLE_FIELDS]
        for n in schedule.two_hop:
            self.two[n] = {f: len(self.names) + i for i, f in enumerate(self.TWO_FIELDS)}
            self.names += [f"{f}[{n}]" for f in self.TWO_FIELDS]
        self.n_vars = len(self.names)
        self.idx_et = 0

        self.t_indices = np.array(
            [self.single[n]["t1"] for n in schedule.single_hop]
            + [self.two[n][f] for n in schedule.two_hop for f in ("t2", "t3")],
            dtype=int,
        )
        self.gamma_indices = np.array(
            [self.single[n]["gam"] for n in schedule.single_hop]
            + [self.two[n][f] for n in schedule.two_hop for f in ("gam1", "gam2")],
            dtype=int,
        )
        # One (w, z, t) triple per quadratic-over-linear surrogate row.
        self.omega_triples: list[tuple[int, int, int]] = []
        for n in schedule.single_hop:
            s = self.single[n]
            self.omega_triples.append((s["w"], s["P"], s["t1"]))
        for n in schedule.two_hop:
            d = self.two[n]
            self.omega_triples.append((d["w1"], d["P"], d["t2"]))
            self.omega_triples.append((d["w2"], d["Ps"], d["t3"]))

    def power_indices(self) -> list[int]:
        idx = [self.single[n]["P"] for n in self.schedule.single_hop]
        idx += [self.two[n]["P"] for n in self.schedule.two_hop]
        idx += [self.two[n]["Ps"] for n in self.schedule.two_hop]
        return idx

    def extract_allocation(self, x: np.ndarray) -> PowerAllocation:
        device = np.zeros(self.schedule.n_devices)
        for n in self.schedule.single_hop:
            device[n] = x[self.single[n]["P"]]
        relay: dict[int, float] = {}
        for n in self.schedule.two_hop:
            device[n] = x[self.two[n]["P"]]
            relay[n] = float(x[self.two[n]["Ps"]])
        return PowerAllocation(device_power=device, relay_power=relay)


@dataclass(frozen=True)
class SpcaIterate:
    """One accepted SPCA point: variable values plus the linearization refs."""

    layout: VariableLayout
    x: np.ndarray
    omega_ref: np.ndarray   # per surrogate row, in layout.omega_triples order
    z_ref: np.ndarray
    iteration: int = 0

    @classmethod
    def from_vector(cls, layout: VariableLayout, x: np.ndarray, iteration: int) -> "SpcaIterate":
        triples = layout.omega_triples
        w = np.array([abs(x[wi]) for wi, _, _ in triples])
        z = np.array([x[zi] for _, zi, _ in triples])
        return cls(layout=layout, x=x.copy(), omega_ref=w, z_ref=z, iteration=iteration)

    @property
    def energy_metric(self) -> float:
        return float(self.x[self.layout.idx_et])


@dataclass(frozen=True)
class ConstraintRow:
    """Description of one scalar inequality f(x) <= 0."""

    kind: str
    label: str
    var_indices: tuple[int, ...]


class ConvexSubproblem:
    """Compiled smooth convex program: minimize x[0] s.t. rows and boxes <= 0.

    ``rows`` lists the structural constraints in build order; ``box_rows`` the
    0 <= P <= P_max bounds.  Two evaluation forms coexist: the full variable
    space (used for seeding and for checking constraint values row by row)
    and a reduced space the barrier solver works in, where E_t and the
    SNR auxiliaries rho/psi/zeta have been minimized out analytically (each
    appears in so few rows that its partial optimum is closed-form).  The
    reduction leaves the central path and the duality-gap bookkeeping of the
    full program untouched.
    """

    def __init__(self, layout: VariableLayout, t_row_limit: float, p_max: float,
                 x0: np.ndarray) -> None:
        self.layout = layout
        self.n_vars = layout.n_vars
        self.t_row_limit = t_row_limit
        self.p_max = p_max
        self.x0 = x0
        self.rows: list[ConstraintRow] = []
        self.box_rows: list[ConstraintRow] = []
        # affine storage: up to 3 entries a row, padded with (index 0, coef 0)
        self._aff_idx: list[list[int]] = []
        self._aff_coef: list[list[float]] = []
        self._aff_b: list[float] = []
        self._aff_in_reduced: list[bool] = []
        self._quad: list[tuple[int, int]] = []          # (w, gam)
        self._exp: list[tuple[int, int]] = []           # (gam, rho-like)
        self._invsum: list[tuple[np.ndarray, int | None, float]] = []
        # one leg per rate bound: (gam index, [(power index, gain/sigma^2)])
        self._legs: list[tuple[int, list[tuple[int, float]]]] = []

    # -- construction ------------------------------------------------------

    def add_affine(self, label: str, terms: list[tuple[int, float]], b: float,
                   box: bool = False, in_reduced: bool = True) -> None:
        """Row sum(coef * x[idx]) - b <= 0."""
        idx = [i for i, _ in terms]
        row = ConstraintRow("affine", label, tuple(idx))
        (self.box_rows if box else self.rows).append(row)
        pad = 3 - len(terms)
        self._aff_idx.append(idx + [0] * pad)
        self._aff_coef.append([c for _, c in terms] + [0.0] * pad)
        self._aff_b.append(b)
        self._aff_in_reduced.append(in_reduced)

    def add_quadratic(self, label: str, w_idx: int, gam_idx: int) -> None:
        """Row x[w]^2 - x[gam] <= 0."""
        self.rows.append(ConstraintRow("quadratic", label, (w_idx, gam_idx)))
        self._quad.append((w_idx, gam_idx))

    def add_inverse_sum(self, label: str, over: np.ndarray, rhs_var: int | None,
                        rhs_const: float) -> None:
        """Row sum(1 / x[over]) - x[rhs_var] - rhs_const <= 0."""
        idx = tuple(over.tolist()) + ((rhs_var,) if rhs_var is not None else ())
        self.rows.append(ConstraintRow("inverse-sum", label, idx))
        self._invsum.append((over, rhs_var, rhs_const))

    def add_rate_leg(self, tag: str, gam_idx: int, rho_idx: int,
                     terms: list[tuple[int, float]]) -> None:
        """Rate lower-bound pair: 2^gam - 1 <= rho and rho <= sum(coef * P).

        The two rows appear individually in ``rows``; the solver treats them
        jointly as one leg so rho can be minimized out.
        """
        self.rows.append(ConstraintRow("exponential-affine", f"rate_exp{tag}",
                                       (gam_idx, rho_idx)))
        self._exp.append((gam_idx, rho_idx))
        self.add_affine(f"snr{tag}", [(rho_idx, 1.0)] + [(i, -c) for i, c in terms],
                        0.0, in_reduced=False)
        self._legs.append((gam_idx, terms))

    def compile(self) -> None:
        self.A_idx = np.asarray(self._aff_idx, dtype=int)
        self.A_coef = np.asarray(self._aff_coef, dtype=float)
        self.A_b = np.asarray(self._aff_b, dtype=float)
        self.quad_w = np.array([w for w, _ in self._quad], dtype=int)
        self.quad_g = np.array([g for _, g in self._quad], dtype=int)
        self.exp_g = np.array([g for g, _ in self._exp], dtype=int)
        self.exp_r = np.array([r for _, r in self._exp], dtype=int)
        self.n_log_terms = len(self._aff_b) + len(self._quad) + len(self._exp) \
            + len(self._invsum)
        # positivity domain of the full space: inverse-sum denominators
        self._positive = np.unique(np.concatenate([s for s, _, _ in self._invsum]))
        self._compile_reduced()

    def _compile_reduced(self) -> None:
        lay = self.layout
        eliminated = {lay.idx_et}
        for n in lay.schedule.single_hop:
            eliminated.add(lay.single[n]["rho"])
        for n in lay.schedule.two_hop:
            eliminated.add(lay.two[n]["psi"])
            eliminated.add(lay.two[n]["zeta"])
        kept = [i for i in range(self.n_vars) if i not in eliminated]
        self.red_of_full = np.full(self.n_vars, -1, dtype=int)
        self.red_of_full[kept] = np.arange(len(kept))
        self.full_of_red = np.asarray(kept, dtype=int)
        self.n_red = len(kept)
        nr = self.n_red

        mask = np.asarray(self._aff_in_reduced, dtype=bool)
        self.rA_idx = self.red_of_full[self.A_idx[mask]]
        self.rA_coef = self.A_coef[mask]
        self.rA_b = self.A_b[mask]
        # padded entries map index 0 (E_t, eliminated) to -1; coef is 0 there,
        # so point them at slot 0 harmlessly
        self.rA_idx = np.where(self.rA_idx < 0, 0, self.rA_idx)
        pairs = self.rA_idx[:, :, None] * nr + self.rA_idx[:, None, :]
        self._rA_pairs = pairs.reshape(len(self.rA_b), 9)
        outer = self.rA_coef[:, :, None] * self.rA_coef[:, None, :]
        self._rA_outer = outer.reshape(len(self.rA_b), 9)

        self.r_quad_w = self.red_of_full[self.quad_w]
        self.r_quad_g = self.red_of_full[self.quad_g]
        self.r_t_idx = self.red_of_full[lay.t_indices]
        self.r_gamma_idx = self.red_of_full[lay.gamma_indices]

        n_legs = len(self._legs)
        self.leg_gam = np.array([g for g, _ in self._legs], dtype=int)
        self.r_leg_gam = self.red_of_full[self.leg_gam]
        self.leg_p_idx = np.zeros((n_legs, 2), dtype=int)
        self.leg_p_coef = np.zeros((n_legs, 2))
        for i, (_, terms) in enumerate(self._legs):
            for j, (p_idx, coef) in enumerate(terms):
                self.leg_p_idx[i, j] = self.red_of_full[p_idx]
                self.leg_p_coef[i, j] = coef
        # scatter targets for the per-leg rank-one Hessian blocks
        trip = np.concatenate([self.leg_p_idx, self.r_leg_gam[:, None]], axis=1)
        self.leg_triple = trip                                        # (L, 3)
        self._leg_pairs = (trip[:, :, None] * nr + trip[:, None, :]).reshape(n_legs, 9)
        # device blocks in the reduced vector: 4 per single-hop device then 8
        # per two-hop device; only the deadline row couples across blocks
        slices = []
        pos = 0
        for _ in self.layout.schedule.single_hop:
            slices.append((pos, 4))
            pos += 4
        for _ in self.layout.schedule.two_hop:
            slices.append((pos, 8))
            pos += 8
        assert pos == nr
        self.block_slices = slices

    # -- full-space evaluation (seeding, tests) -----------------------------

    def constraint_values(self, x: np.ndarray) -> np.ndarray:
        """All row values f_i(x) (structural rows then boxes), in add order."""
        with np.errstate(over="ignore", divide="ignore"):
            aff = (self.A_coef * x[self.A_idx]).sum(axis=1) - self.A_b
            quad = x[self.quad_w] ** 2 - x[self.quad_g]
            expv = np.exp(LN2 * x[self.exp_g]) - x[self.exp_r] - 1.0
            inv = np.array([
                np.sum(1.0 / x[s]) - (x[j] if j is not None else 0.0) - c
                for s, j, c in self._invsum
            ])
        n_struct_aff = len(self.A_b) - len(self.box_rows)
        ia = iq = ie = iv = 0
        order = []
        for row in self.rows:
            if row.kind == "affine":
                order.append(aff[ia]); ia += 1
            elif row.kind == "quadratic":
                order.append(quad[iq]); iq += 1
            elif row.kind == "exponential-affine":
                order.append(expv[ie]); ie += 1
            else:
                order.append(inv[iv]); iv += 1
        assert ia == n_struct_aff
        order.extend(aff[n_struct_aff:])
        return np.asarray(order)

    def in_domain(self, x: np.ndarray) -> bool:
        return bool(np.all(x[self._positive] > 0.0))

    def max_violation(self, x: np.ndarray) -> float:
        if not self.in_domain(x):
            return math.inf
        return float(np.max(self.constraint_values(x)))

    # -- reduced-space evaluation (the solver path) --------------------------

    def reduce(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float)[self.full_of_red].copy()

    def expand(self, y: np.ndarray, t_b: float) -> np.ndarray:
        """Reconstruct the full vector: eliminated variables at their partial
        optima (E_t on the central path, rho/psi/zeta at the midpoint of
        their interval)."""
        x = np.zeros(self.n_vars)
        x[self.full_of_red] = y
        x[self.layout.idx_et] = float(np.sum(1.0 / y[self.r_t_idx])) + 1.0 / t_b
        e = np.exp(LN2 * y[self.r_leg_gam])
        hi = (self.leg_p_coef * y[self.leg_p_idx]).sum(axis=1)
        rho = 0.5 * ((e - 1.0) + hi)
        for i, (_, _terms) in enumerate(self._legs):
            rho_full_idx = self._exp[i][1]
            x[rho_full_idx] = rho[i]
        return x

    def _reduced_slacks(self, y: np.ndarray) -> tuple[np.ndarray, ...] | None:
        """(aff, quad, deadline, width) slack arrays, or None if out of domain."""
        t = y[self.r_t_idx]
        gam = y[self.r_gamma_idx]
        if np.any(t <= 0.0) or np.any(gam <= 0.0):
            return None
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            aff = self.rA_b - (self.rA_coef * y[self.rA_idx]).sum(axis=1)
            quad = y[self.r_quad_g] - y[self.r_quad_w] ** 2
            deadline = np.array([self.t_row_limit - np.sum(1.0 / gam)])
            e = np.exp(LN2 * y[self.r_leg_gam])
            width = (self.leg_p_coef * y[self.leg_p_idx]).sum(axis=1) - e + 1.0
        return aff, quad, deadline, width

    def reduced_feasible(self, y: np.ndarray) -> bool:
        slacks = self._reduced_slacks(y)
        if slacks is None:
            return False
        joined = np.concatenate(slacks)
        return bool(np.all(np.isfinite(joined)) and np.all(joined > 0.0))

    def reduced_value(self, y: np.ndarray, t_b: float) -> float:
        """Reduced barrier: t_b * sum(1/t) - sum log(slacks), with the leg
        slacks counted twice (each leg folded two log terms)."""
        t = y[self.r_t_idx]
        gam = y[self.r_gamma_idx]
        if np.any(t <= 0.0) or np.any(gam <= 0.0):
            return math.inf
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            aff = self.rA_b - (self.rA_coef * y[self.rA_idx]).sum(axis=1)
            quad = y[self.r_quad_g] - y[self.r_quad_w] ** 2
            dl = self.t_row_limit - np.sum(1.0 / gam)
            e = np.exp(LN2 * y[self.r_leg_gam])
            width = (self.leg_p_coef * y[self.leg_p_idx]).sum(axis=1) - e + 1.0
            if dl <= 0.0 or not np.isfinite(dl) \
                    or aff.min(initial=1.0) <= 0.0 or quad.min(initial=1.0) <= 0.0 \
                    or width.min(initial=1.0) <= 0.0 \
                    or not np.all(np.isfinite(width)):
                return math.inf
            obj = t_b * float(np.sum(1.0 / t))
            return obj - float(
                np.sum(np.log(aff)) + np.sum(np.log(quad)) + math.log(dl)
                + 2.0 * np.sum(np.log(width))
            )

    def reduced_grad_hess(self, y: np.ndarray, t_b: float) -> tuple[np.ndarray, np.ndarray]:
        nr = self.n_red
        g_idx: list[np.ndarray] = []
        g_val: list[np.ndarray] = []
        h_idx: list[np.ndarray] = []
        h_val: list[np.ndarray] = []

        # objective t_b * sum(1/t)
        t = y[self.r_t_idx]
        g_idx.append(self.r_t_idx)
        g_val.append(-t_b / t**2)
        h_idx.append(self.r_t_idx * nr + self.r_t_idx)
        h_val.append(2.0 * t_b / t**3)

        # affine rows (surrogates and boxes)
        aff = (self.rA_coef * y[self.rA_idx]).sum(axis=1) - self.rA_b
        u = 1.0 / (-aff)
        g_idx.append(self.rA_idx.ravel())
        g_val.append((self.rA_coef * u[:, None]).ravel())
        h_idx.append(self._rA_pairs.ravel())
        h_val.append((self._rA_outer * (u * u)[:, None]).ravel())

        # quadratic rows w^2 <= gam
        if self.r_quad_w.size:
            w = y[self.r_quad_w]
            f = w**2 - y[self.r_quad_g]
            u = 1.0 / (-f)
            gw = 2.0 * w
            u2 = u * u
            g_idx += [self.r_quad_w, self.r_quad_g]
            g_val += [gw * u, -u]
            h_idx += [self.r_quad_w * nr + self.r_quad_w,
                      self.r_quad_w * nr + self.r_quad_g,
                      self.r_quad_g * nr + self.r_quad_w,
                      self.r_quad_g * nr + self.r_quad_g]
            h_val += [u2 * gw * gw + u * 2.0, -u2 * gw, -u2 * gw, u2]

        # rate legs, weight 2: width = sum(c P) - 2^gam + 1 > 0
        e = np.exp(LN2 * y[self.r_leg_gam])
        width = (self.leg_p_coef * y[self.leg_p_idx]).sum(axis=1) - e + 1.0
        u = 2.0 / width
        dgam = -LN2 * e
        g_idx += [self.leg_p_idx.ravel(), self.r_leg_gam]
        g_val += [(-self.leg_p_coef * u[:, None]).ravel(), -dgam * u]
        grad3 = np.concatenate([self.leg_p_coef, dgam[:, None]], axis=1)  # (L, 3)
        outer9 = (grad3[:, :, None] * grad3[:, None, :]).reshape(-1, 9)
        h_idx += [self._leg_pairs.ravel(),
                  self.r_leg_gam * nr + self.r_leg_gam]
        h_val += [(outer9 * (2.0 / width**2)[:, None]).ravel(),
                  u * LN2 * LN2 * e]

        g = np.bincount(np.concatenate(g_idx), np.concatenate(g_val),
                        minlength=nr)
        H = np.bincount(np.concatenate(h_idx), np.concatenate(h_val),
                        minlength=nr * nr).reshape(nr, nr)

        # deadline row sum(1/gam) <= limit: its diagonal curvature joins the
        # per-device blocks, the dense rank-one part is returned separately
        gam = y[self.r_gamma_idx]
        f = np.sum(1.0 / gam) - self.t_row_limit
        u = 1.0 / (-f)
        gf = np.zeros(nr)
        gf[self.r_gamma_idx] = -1.0 / gam**2
        g += u * gf
        H[self.r_gamma_idx, self.r_gamma_idx] += u * 2.0 / gam**3

        return g, H, gf, u * u


def build_subproblem(
    schedule: Schedule,
    ch: ChannelRealization,
    link: LinkParams,
    uplink_deadline: float,
    iterate: SpcaIterate,
    p_max: float,
) -> ConvexSubproblem:
    """Assemble the convex subproblem at the iterate's linearization point."""
    if schedule.n_devices == 0:
        raise ConfigError("degenerate program: empty device set")
    if uplink_deadline <= 0:
        raise ConfigError("uplink deadline must be positive")

    lay = iterate.layout
    sigma2 = link.noise_power
    prog = ConvexSubproblem(
        layout=lay,
        t_row_limit=uplink_deadline * link.bandwidth / link.packet_bits,
        p_max=p_max,
        x0=iterate.x.copy(),
    )

    # shared budget rows
    prog.add_inverse_sum("energy_budget", lay.t_indices, lay.idx_et, 0.0)
    prog.add_inverse_sum("uplink_deadline", lay.gamma_indices, None, prog.t_row_limit)

    # surrogate rows t <= Omega(w, z), linearized at (omega_ref, z_ref)
    for r, (w_idx, z_idx, t_idx) in enumerate(lay.omega_triples):
        ratio = iterate.omega_ref[r] / iterate.z_ref[r]
        prog.add_affine(
            f"surrogate[{lay.names[t_idx]}]",
            [(t_idx, 1.0), (w_idx, -2.0 * ratio), (z_idx, ratio * ratio)],
            0.0,
        )

    for n in schedule.single_hop:
        s = lay.single[n]
        prog.add_quadratic(f"gamma_dominates_w2[{n}]", s["w"], s["gam"])
        prog.add_rate_leg(f"_direct[{n}]", s["gam"], s["rho"],
                          [(s["P"], ch.direct_gain(n) / sigma2)])

    for n in schedule.two_hop:
        d = lay.two[n]
        k = schedule.relay_of[n]
        prog.add_quadratic(f"gamma1_dominates_w2[{n}]", d["w1"], d["gam1"])
        prog.add_quadratic(f"gamma2_dominates_w2[{n}]", d["w2"], d["gam2"])
        prog.add_rate_leg(f"_hop1[{n}]", d["gam1"], d["psi"],
                          [(d["P"], ch.hop1_gain(n, k) / sigma2)])
        # energy combining: both transmit powers enter the hop-2 SNR bound
        prog.add_rate_leg(
            f"_hop2_combined[{n}]", d["gam2"], d["zeta"],
            [(d["Ps"], ch.backhaul_gain(k) / sigma2),
             (d["P"], ch.direct_gain(n) / sigma2)],
        )

    for idx in lay.power_indices():
        prog.add_affine(f"power_nonneg[{lay.names[idx]}]", [(idx, -1.0)], 0.0, box=True)
        prog.add_affine(f"power_cap[{lay.names[idx]}]", [(idx, 1.0)], p_max, box=True)

    prog.compile()
    return prog


# --------------------------------------------------------------------------
# Barrier solver
# --------------------------------------------------------------------------

def _block_sm_solve(prog: ConvexSubproblem, H: np.ndarray, rhs: np.ndarray,
                    gf: np.ndarray, c_dl: float) -> np.ndarray | None:
    """Solve (blockdiag(H) + c_dl * gf gf^T) d = rhs.

    H holds the per-device blocks (all couplings other than the deadline row
    vanish); a Cholesky per block plus one Sherman-Morrison correction gives
    the exact Newton direction in O(sum of block sizes cubed).
    """
    z = np.empty_like(rhs)
    q = np.empty_like(rhs)
    for start, size in prog.block_slices:
        sl = slice(start, start + size)
        blk = H[sl, sl]
        s = 1.0 / np.sqrt(np.maximum(np.abs(np.diagonal(blk)), 1e-12))
        blk_s = blk * s[:, None] * s[None, :]
        reg = 0.0
        while True:
            try:
                c = cho_factor(blk_s + reg * np.eye(size), lower=True,
                               check_finite=False)
                break
            except LinAlgError:
                reg = max(reg * 10.0, 1e-10)
                if reg > 1e6:
                    return None
        z[sl] = s * cho_solve(c, rhs[sl] * s, check_finite=False)
        q[sl] = s * cho_solve(c, gf[sl] * s, check_finite=False)
    denom = 1.0 + c_dl * float(gf @ q)
    return z - q * (c_dl * float(gf @ z) / denom)


def _newton_center(prog: ConvexSubproblem, y: np.ndarray, t_b: float,
                   max_steps: int) -> tuple[np.ndarray, int]:
    """Minimize the reduced barrier at fixed t_b from a strictly feasible start.

    Far from the minimizer: damped Newton with backtracking on the barrier
    value.  Inside the quadratic-convergence region the barrier value itself
    is dominated by t_b * objective and its differences drown in rounding, so
    full steps are accepted on a strict-feasibility check instead, which lets
    the gradient be polished to machine precision.
    """
    phi = prog.reduced_value(y, t_b)
    if not math.isfinite(phi):
        raise InfeasibleError("barrier start point is not strictly feasible")
    lam2_prev = math.inf
    for step in range(max_steps):
        g, H, gf, c_dl = prog.reduced_grad_hess(y, t_b)
        d = _block_sm_solve(prog, H, -g, gf, c_dl)
        if d is None:
            return y, step
        lam2 = float(-g @ d)
        if lam2 / 2.0 <= 1e-14 * (1.0 + abs(phi)):
            return y, step
        if lam2 <= 1e-3:
            # quadratic region: full step, validated by feasibility only
            cand = y + d
            if prog.reduced_feasible(cand) and lam2 < lam2_prev:
                y = cand
                phi = prog.reduced_value(y, t_b)
                lam2_prev = lam2
                continue
            return y, step
        lam2_prev = lam2
        t = 1.0
        for _ in range(60):
            cand = y + t * d
            phi_c = prog.reduced_value(cand, t_b)
            if phi_c <= phi - 0.1 * t * lam2:
                y, phi = cand, phi_c
                break
            t *= 0.5
        else:
            return y, step  # stalled: line search cannot improve further
    return y, max_steps


def solve_convex_subproblem(
    prog: ConvexSubproblem,
    tolerance: float = 1e-8,
    x0: np.ndarray | None = None,
    t0: float | None = None,
    barrier_mu: float = 8.0,
    newton_max_steps: int = 300,
) -> tuple[np.ndarray, SolverReport]:
    """Log-barrier solve of a compiled subproblem.

    Needs a strictly feasible start (the Slater point carried by the program
    or an explicit warm start).  Stops once the duality gap m/t_b is below
    ``tolerance`` relative to the objective scale; the returned report holds
    the per-stage objective values and the final KKT stationarity residual
    (scaled per log-variable, relative to the objective, with the barrier
    multipliers as duals).
    """
    x_start = np.array(prog.x0 if x0 is None else x0, dtype=float)
    y = prog.reduce(x_start)
    if not prog.reduced_feasible(y):
        return x_start, SolverReport(0, [], math.inf, "infeasible")

    m = prog.n_log_terms
    if t0 is None:
        # start where the gap certificate matches the objective scale
        obj0 = float(np.sum(1.0 / y[prog.r_t_idx]))
        t_b = max(1.0, m / max(abs(obj0), 1e-3))
    else:
        t_b = max(t0, 1e-2)
    trace: list[float] = []
    total_steps = 0
    status = "max_iters"
    for _stage in range(60):
        y, steps = _newton_center(prog, y, t_b, newton_max_steps)
        total_steps += steps
        obj = float(np.sum(1.0 / y[prog.r_t_idx])) + 1.0 / t_b
        trace.append(obj)
        # the 0.25 margin keeps successive SPCA objective values monotone
        # within a strictly smaller tolerance than the gap certificate
        gap = m / t_b
        if gap <= 0.25 * tolerance * max(1e-4, abs(obj)):
            status = "converged"
            break
        t_b *= barrier_mu

    g, _, _, _ = prog.reduced_grad_hess(y, t_b)
    kkt = float(np.max(np.abs(g) * np.abs(y)) / t_b / max(1.0, abs(trace[-1])))
    x = prog.expand(y, t_b)
    report = SolverReport(total_steps, trace, kkt, status)
    report.final_barrier_weight = t_b  # type: ignore[attr-defined]
    return x, report


# --------------------------------------------------------------------------
# Initialization and the outer loop
# --------------------------------------------------------------------------

def _true_rate_vectors(schedule: Schedule, ch: ChannelRealization,
                       link: LinkParams, powers: PowerAllocation) -> np.ndarray:
    """Rates of every scheduled transmission in omega-triple order."""
    rates = achieved_rates(schedule, ch, powers, link)
    out = [rates.direct[n] for n in schedule.single_hop]
    for n in schedule.two_hop:
        out += [rates.hop1[n], rates.hop2[n]]
    return np.asarray(out)


def _snr_vector(schedule: Schedule, ch: ChannelRealization, link: LinkParams,
                powers: PowerAllocation) -> np.ndarray:
    """SNR of every scheduled transmission in omega-triple order."""
    s2 = link.noise_power
    out = [powers.device_power[n] * ch.direct_gain(n) / s2 for n in schedule.single_hop]
    for n in schedule.two_hop:
        k = schedule.relay_of[n]
        out.append(powers.device_power[n] * ch.hop1_gain(n, k) / s2)
        out.append(
            (powers.relay_power[n] * ch.backhaul_gain(k)
             + powers.device_power[n] * ch.direct_gain(n)) / s2
        )
    return np.asarray(out)


def _iterate_from_powers(
    schedule: Schedule,
    ch: ChannelRealization,
    link: LinkParams,
    uplink_deadline: float,
    p_max: float,
    powers: PowerAllocation,
    safety: float,
) -> SpcaIterate | None:
    """Build a strictly interior iterate around given powers, or None.

    gamma sits a safety factor below the true rates, omega below sqrt(gamma),
    t below the surrogate value, E_t above the inverse sum; the SNR
    auxiliaries at the midpoint of their interval.  The candidate is verified
    against every constraint before being returned.
    """
    lay = VariableLayout(schedule)
    limit = uplink_deadline * link.bandwidth / link.packet_bits
    rates = _true_rate_vectors(schedule, ch, link, powers)
    if np.any(rates <= 0.0):
        return None
    gam = safety * rates
    if np.sum(1.0 / gam) >= safety * limit:
        return None
    snr = _snr_vector(schedule, ch, link, powers)
    rho = 0.5 * ((np.exp(LN2 * gam) - 1.0) + snr)
    w = np.sqrt(safety * gam)
    z = np.array([powers.device_power[n] for n in schedule.single_hop]
                 + [v for n in schedule.two_hop
                    for v in (powers.device_power[n], powers.relay_power[n])])
    t = safety * w**2 / z
    x = np.zeros(lay.n_vars)
    x[lay.idx_et] = np.sum(1.0 / t) / safety
    r = 0
    for n in schedule.single_hop:
        s = lay.single[n]
        x[s["P"]] = z[r]
        x[s["t1"]] = t[r]
        x[s["w"]] = w[r]
        x[s["gam"]] = gam[r]
        x[s["rho"]] = rho[r]
        r += 1
    for n in schedule.two_hop:
        d = lay.two[n]
        x[d["P"]], x[d["Ps"]] = z[r], z[r + 1]
        x[d["t2"]], x[d["t3"]] = t[r], t[r + 1]
        x[d["w1"]], x[d["w2"]] = w[r], w[r + 1]
        x[d["gam1"]], x[d["gam2"]] = gam[r], gam[r + 1]
        x[d["psi"]], x[d["zeta"]] = rho[r], rho[r + 1]
        r += 2
    it = SpcaIterate(layout=lay, x=x, omega_ref=w.copy(), z_ref=z.copy())
    prog = build_subproblem(schedule, ch, link, uplink_deadline, it, p_max)
    if prog.max_violation(x) < 0.0:
        return it
    return None


def initialize_feasible(
    schedule: Schedule,
    ch: ChannelRealization,
    link: LinkParams,
    uplink_deadline: float,
    p_max: float,
    options: SpcaOptions = SpcaOptions(),
) -> SpcaIterate | None:
    """Strictly interior Slater point, or None when the deadline is unattainable.

    Full power is the fastest the uplink can go; if that misses the deadline
    nothing else can satisfy it.  Otherwise all variables are seeded from the
    full-power rates, pulled inside every constraint by a safety factor
    (retried closer to the boundary for borderline instances).
    """
    if schedule.n_devices == 0:
        raise ConfigError("empty device set")

    full = PowerAllocation.full_power(schedule, p_max)
    t_full = uplink_times(schedule, achieved_rates(schedule, ch, full, link), link).total
    if not (t_full <= uplink_deadline):
        return None

    for safety in options.seed_safety:
        powers = PowerAllocation(
            device_power=np.full(schedule.n_devices, safety * p_max),
            relay_power={n: safety * p_max for n in schedule.two_hop},
        )
        it = _iterate_from_powers(schedule, ch, link, uplink_deadline, p_max,
                                  powers, safety)
        if it is not None:
            return it
    return None


def _equal_airtime_seed(
    schedule: Schedule,
    ch: ChannelRealization,
    link: LinkParams,
    uplink_deadline: float,
    p_max: float,
) -> SpcaIterate | None:
    """Warm seed with every transmission targeting the same airtime.

    Splitting the deadline evenly over all legs and inverting the rate
    formula lands close to the optimum for comparable gains, which cuts the
    number of outer linearizations roughly in half versus full power.  Only
    an accelerator: validity is verified, with full power as fallback.
    """
    n_legs = schedule.n_single_hop + 2 * schedule.n_two_hop
    # 1.05 margin keeps the seed strictly inside the deadline row
    r_req = 1.05 * n_legs * link.packet_bits / (link.bandwidth * uplink_deadline)
    snr_req = 2.0**r_req - 1.0
    s2 = link.noise_power
    cap = 0.99 * p_max
    floor = 1e-9 * p_max
    device = np.zeros(schedule.n_devices)
    relay: dict[int, float] = {}
    for n in schedule.single_hop:
        device[n] = min(max(snr_req * s2 / ch.direct_gain(n), floor), cap)
    for n in schedule.two_hop:
        k = schedule.relay_of[n]
        device[n] = min(max(snr_req * s2 / ch.hop1_gain(n, k), floor), cap)
        want = snr_req - device[n] * ch.direct_gain(n) / s2
        relay[n] = min(max(want * s2 / ch.backhaul_gain(k), floor), cap)
    powers = PowerAllocation(device_power=device, relay_power=relay)
    return _iterate_from_powers(schedule, ch, link, uplink_deadline, p_max,
                                powers, 0.99)


def spca_minimize(
    schedule: Schedule,
    ch: ChannelRealization,
    link: LinkParams,
    uplink_deadline: float,
    p_max: float,
    options: SpcaOptions = SpcaOptions(),
) -> tuple[PowerAllocation, SolverReport]:
    """Minimize uplink transmit energy subject to the TDMA deadline.

    Repeatedly linearizes the quadratic-over-linear rows at the previous
    solution and solves the resulting convex subproblem; every accepted point
    is feasible for the true problem, so achieved rates always respect the
    deadline.  Raises DeadlineUnattainableError when even full power misses it.
    """
    iterate = initialize_feasible(schedule, ch, link, uplink_deadline, p_max, options)
    if iterate is None:
        raise DeadlineUnattainableError(
            f"uplink deadline {uplink_deadline:.6g} s unattainable at P_max = {p_max:.6g} W"
        )
    warm = _equal_airtime_seed(schedule, ch, link, uplink_deadline, p_max)
    if warm is not None and warm.energy_metric < iterate.energy_metric:
        iterate = warm

    trace: list[float] = []
    kkt = math.inf
    status = "max_iters"
    rel_change = 1.0
    for i in range(options.max_outer):
        prog = build_subproblem(schedule, ch, link, uplink_deadline, iterate, p_max)
        # early linearization points only steer the next surrogate, so their
        # subproblems are solved to a gap matched to the current progress;
        # the barrier schedule restarts because the surrogate moved
        loose_tol = max(options.inner_tol, min(1e-3, 0.25 * rel_change))
        x, inner = solve_convex_subproblem(
            prog,
            tolerance=loose_tol,
            t0=options.barrier_t0,
            barrier_mu=options.barrier_mu,
            newton_max_steps=options.newton_max_steps,
        )
        if inner.status == "infeasible":
            # cannot happen from a valid iterate; surface as a hard error
            raise InfeasibleError("subproblem lost strict feasibility")
        obj = float(x[iterate.layout.idx_et])
        if trace and obj > trace[-1] and loose_tol > options.inner_tol:
            # loose solve bounced above the previous value: resume the same
            # barrier (same program, same central path) to full tolerance,
            # which certifies obj <= previous + 0.25 * inner_tol * scale
            x, inner = solve_convex_subproblem(
                prog,
                tolerance=options.inner_tol,
                x0=x,
                t0=getattr(inner, "final_barrier_weight", None),
                barrier_mu=options.barrier_mu,
                newton_max_steps=options.newton_max_steps,
            )
            obj = float(x[iterate.layout.idx_et])
        kkt = inner.kkt_residual
        if trace:
            rel_change = abs(obj - trace[-1]) / max(abs(trace[-1]), 1e-300)
        trace.append(obj)
        iterate = SpcaIterate.from_vector(iterate.layout, x, iteration=i + 1)
        if len(trace) >= 2 and rel_change <= options.eps_rel:
            if loose_tol > options.inner_tol:
                # polish the accepted point at full tolerance before reporting
                x, inner = solve_convex_subproblem(
                    prog,
                    tolerance=options.inner_tol,
                    x0=x,
                    t0=getattr(inner, "final_barrier_weight", None),
                    barrier_mu=options.barrier_mu,
                    newton_max_steps=options.newton_max_steps,
                )
                kkt = inner.kkt_residual
                obj = float(x[iterate.layout.idx_et])
                if obj <= trace[-1]:
                    trace[-1] = obj
                else:
                    trace.append(obj)
                iterate = SpcaIterate.from_vector(iterate.layout, x, iteration=i + 1)
            status = "converged"
            break

    report = SolverReport(len(trace), trace, kkt, status)
    return iterate.layout.extract_allocation(iterate.x), report


# --------------------------------------------------------------------------
# Brute-force oracle (test reference for tiny instances)
# --------------------------------------------------------------------------

def transmit_objective(schedule: Schedule, ch: ChannelRealization,
                       link: LinkParams, powers: PowerAllocation) -> float:
    """Scaled transmit energy sum(P / rate) at the true achieved rates.

    This equals the physical per-round radio energy times W/s.
    """
    rates = achieved_rates(schedule, ch, powers, link)
    total = 0.0
    for n in schedule.single_hop:
        total += powers.device_power[n] / rates.direct[n]
    for n in schedule.two_hop:
        total += powers.device_power[n] / rates.hop1[n]
        total += powers.relay_power[n] / rates.hop2[n]
    return float(total)


def _oracle_variables(schedule: Schedule) -> list[tuple[str, int]]:
    out: list[tuple[str, int]] = [("device", n) for n in schedule.single_hop]
    for n in schedule.two_hop:
        out.append(("device", n))
        out.append(("relay", n))
    return out


def brute_force_power_oracle(
    schedule: Schedule,
    ch: ChannelRealization,
    link: LinkParams,
    uplink_deadline: float,
    p_max: float,
    grid_points: int = 200,
    refine: int = 0,
) -> tuple[PowerAllocation, float]:
    """Exhaustive grid search over every power in (0, P_max].

    Evaluates the exact objective sum(P / rate) and the exact deadline
    constraint on the full grid and returns the feasible minimizer.  Only
    usable for at most 3 power variables.  ``refine`` > 0 re-grids around the
    incumbent (2 coarse cells each side) that many times; the default 0 is a
    single pass.  Raises InfeasibleError when no grid point meets the deadline.
    """
    variables = _oracle_variables(schedule)
    v = len(variables)
    if v == 0 or v > 3:
        raise ConfigError("oracle supports 1 to 3 power variables")

    s_over_w = link.packet_bits / link.bandwidth
    sigma2 = link.noise_power
    bounds = [(p_max / grid_points, p_max)] * v

    best_powers: np.ndarray | None = None
    best_obj = math.inf
    for _pass in range(refine + 1):
        axes = [np.linspace(lo, hi, grid_points) for lo, hi in bounds]
        shape = [grid_points] * v
        grids = []
        for a in range(v):
            view = [1] * v
            view[a] = grid_points
            grids.append(axes[a].reshape(view))

        time_total = np.zeros(shape)
        obj_total = np.zeros(shape)
        var_of = {("device", n): a for a, (kind, n) in enumerate(variables) if kind == "device"}
        var_of.update({("relay", n): a for a, (kind, n) in enumerate(variables) if kind == "relay"})
        for n in schedule.single_hop:
            p = grids[var_of[("device", n)]]
            r = np.log2(1.0 + p * ch.direct_gain(n) / sigma2)
            time_total = time_total + s_over_w / r
            obj_total = obj_total + p / r
        for n in schedule.two_hop:
            k = schedule.relay_of[n]
            p = grids[var_of[("device", n)]]
            ps = grids[var_of[("relay", n)]]
            r1 = np.log2(1.0 + p * ch.hop1_gain(n, k) / sigma2)
            r2 = np.log2(1.0 + (ps * ch.backhaul_gain(k) + p * ch.direct_gain(n)) / sigma2)
            time_total = time_total + s_over_w * (1.0 / r1 + 1.0 / r2)
            obj_total = obj_total + p / r1 + ps / r2

        feasible = time_total <= uplink_deadline
        if not np.any(feasible):
            if best_powers is None:
                raise InfeasibleError("no feasible grid point")
            break
        masked = np.where(feasible, obj_total, math.inf)
        flat = int(np.argmin(masked))
        idx = np.unravel_index(flat, shape)
        cand = np.array([axes[a][idx[a]] for a in range(v)])
        cand_obj = float(masked[idx])
        if cand_obj < best_obj:
            best_obj = cand_obj
            best_powers = cand
        # zoom for the next pass
        new_bounds = []
        for a in range(v):
            step = (bounds[a][1] - bounds[a][0]) / (grid_points - 1)
            lo = max(best_powers[a] - 2 * step, p_max * 1e-9)
            hi = min(best_powers[a] + 2 * step, p_max)
            new_bounds.append((lo, hi))
        bounds = new_bounds

    device = np.zeros(schedule.n_devices)
    relay: dict[int, float] = {}
    for a, (kind, n) in enumerate(variables):
        if kind == "device":
            device[n] = best_powers[a]
        else:
            relay[n] = float(best_powers[a])
    return PowerAllocation(device_power=device, relay_power=relay), best_obj
