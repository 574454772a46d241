"""Stationary problems on the unit cell and the ergodic constant.

Each regime of the kernel order gets its own frozen-coefficient stationary
operator F:

  * order < 1: first-order only, F(v) = -a l + H(y, p + Dv);
  * order = 1: fractional Laplacian of order 1, an upwinded drift from the
    kernel asymmetry, and the gradient coupling;
  * order > 1: the linear problem -a l + a (fractional Laplacian) v + H(y, p).

The discounted solution is computed by marching the parabolic flow of the
discounted operator to steady state.  Because F is invariant under adding
constants, the additive mode is the only delta-slow direction; it is pinned
to mean zero during the march and recovered exactly from the scalar relation
delta * M = -mean(F(profile)) afterwards.  The marching cost is therefore
independent of how small the discount is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .grid import GridFunction, backward_diff, forward_diff
from .hamiltonians import HamiltonianSpec
from .kernels import constant_kernel, periodized_weights
from .operators import apply_table, spectral_flap
from .parabolic import NumericalFailure, godunov_power_flux


def regime_of(sigma: float) -> str:
    if sigma < 1.0:
        return "below_one"
    if sigma == 1.0:
        return "equal_one"
    return "above_one"


@dataclass(frozen=True)
class CellParams:
    """Frozen slow variable, gradient, and nonlocal value for one cell solve."""

    x: float
    p: float
    l: float
    sigma: float
    a: Callable[[np.ndarray, np.ndarray], np.ndarray]
    ham: HamiltonianSpec
    drift_b: float = 0.0

    @property
    def regime(self) -> str:
        return regime_of(self.sigma)


@dataclass
class CellConfig:
    n: int = 256
    tol: float = 1e-9
    max_steps: int = 600_000
    cfl_safety: float = 0.9
    flux: str = "godunov"
    theta: Optional[float] = None
    gradient_pad: float = 4.0
    check_every: int = 250
    image_budget: int = 16


@dataclass(frozen=True)
class RegularityReport:
    osc: float
    lip: float
    holder: tuple          # ((gamma, quotient), ...)
    flap_sup: float


@dataclass
class CellSolution:
    psi: GridFunction              # corrector, normalized psi(0) = 0
    H_bar: float
    delta_trace: tuple             # ((delta, min -d psi^d, max -d psi^d), ...)
    spread: float
    regularity: RegularityReport
    residuals: tuple               # ((delta, residual, steps), ...)
    converged: bool
    psi_delta_sup: float           # sup |psi^delta| at the smallest discount
    delta_min: float


def _holder_quotients(psi: np.ndarray, gammas=(0.25, 0.5, 0.75, 0.9)) -> tuple:
    n = psi.size
    shifts = [2 ** j for j in range(0, int(math.log2(n)))]
    out = []
    for g in gammas:
        q = 0.0
        for s in shifts:
            d = min(s / n, 1.0 - s / n)
            if d <= 0.0:
                continue
            q = max(q, float(np.max(np.abs(np.roll(psi, -s) - psi))) / d ** g)
        out.append((g, q))
    return tuple(out)


class _StationaryOperator:
    """F(v) for one regime, plus the CFL budget of its monotone discretization."""

    def __init__(self, params: CellParams, cfg: CellConfig):
        n = cfg.n
        ys = np.arange(n) / n
        h = 1.0 / n
        self.n, self.h = n, h
        x = params.x
        a_vals = np.asarray(params.a(np.full(n, x), ys), dtype=float)
        if np.min(a_vals) <= 0.0:
            raise ValueError("coefficient a must be positive on the cell")
        a_max = float(np.max(a_vals))
        ham = params.ham
        regime = params.regime

        self.table = None
        if regime in ("equal_one", "above_one"):
            self.table = periodized_weights(constant_kernel(params.sigma), n,
                                            image_budget=cfg.image_budget)

        use_godunov = cfg.flux == "godunov" and ham.power_form is not None
        if cfg.flux == "godunov" and ham.power_form is None:
            raise ValueError("Godunov flux needs the power-form structure hint")

        p = params.p
        if regime == "above_one":
            hp = np.asarray(ham.eval(np.full(n, x), ys, np.full(n, p)), dtype=float)
            const = -a_vals * params.l + hp

            def F(v):
                return const - a_vals * apply_table(v, self.table)

            self.theta = 0.0
            self.F = F
            self.budget = a_max * self.table.tail_mass
            self.p_range = abs(p)
            return

        # gradient-coupled regimes: a-priori range for p + Dv from coercivity
        if ham.power_form is not None:
            b_grid = np.asarray(ham.power_form.b(np.full(n, x), ys), dtype=float)
            f_grid = np.asarray(ham.power_form.f(np.full(n, x), ys), dtype=float)
            b_min = float(np.min(b_grid))
            f_sup = float(np.max(np.abs(f_grid)))
            reach = ((a_max * abs(params.l) + 2.0 * f_sup + cfg.gradient_pad) / b_min
                     ) ** (1.0 / ham.m)
        else:
            reach = cfg.gradient_pad
        p_range = abs(p) + reach + 1.0
        self.p_range = p_range

        if use_godunov:
            m = ham.power_form.m
            theta = float(np.max(b_grid)) * m * p_range ** (m - 1.0)
            self._godunov_bm = (float(np.max(b_grid)), m, abs(p))

            def flux(v):
                ql = p + backward_diff(v, h)
                qr = p + forward_diff(v, h)
                return b_grid * godunov_power_flux(m, ql, qr) - f_grid
        else:
            theta = cfg.theta
            if theta is None:
                ps = np.linspace(-p_range, p_range, 201)
                d = 1e-5
                Y, P = np.meshgrid(ys, ps, indexing="ij")
                X = np.full_like(Y, x)
                slope = np.abs(ham.eval(X, Y, P + d) - ham.eval(X, Y, P - d)) / (2 * d)
                theta = float(np.max(slope))

            def flux(v):
                ql = p + backward_diff(v, h)
                qr = p + forward_diff(v, h)
                return ham.eval(np.full(n, x), ys, 0.5 * (ql + qr)) - 0.5 * theta * (qr - ql)

        self.theta = theta
        const = -a_vals * params.l

        if regime == "below_one":
            def F(v):
                return const + flux(v)

            self.F = F
            self._base_budget = 0.0
            self.budget = theta / h
        else:
            b_drift = params.drift_b

            def drift(v):
                if b_drift == 0.0:
                    return 0.0
                dv = backward_diff(v, h) if b_drift > 0.0 else forward_diff(v, h)
                return b_drift * dv

            def F(v):
                return (const + a_vals * (-apply_table(v, self.table) + drift(v))
                        + flux(v))

            self.F = F
            self._base_budget = (a_max * self.table.tail_mass
                                 + a_max * abs(b_drift) / h)
            self.budget = self._base_budget + theta / h

    def tighten(self, v: np.ndarray) -> None:
        """Shrink the CFL budget to the gradients actually reached.

        Only the Godunov path qualifies: there theta enters the step bound but
        not the flux values, so the discrete fixed point is unchanged.  A 50%
        margin over the observed range keeps the monotonicity certificate.
        """
        bm = getattr(self, "_godunov_bm", None)
        if bm is None:
            return
        b_max, m, p_abs = bm
        q_max = p_abs + float(np.max(np.abs(forward_diff(v, self.h))))
        seen = 1.5 * q_max + 0.1
        if seen < self.p_range:
            self.p_range = seen
            self.theta = b_max * m * seen ** (m - 1.0)
            self.budget = self._base_budget + self.theta / self.h


def _march(op: _StationaryOperator, phi: np.ndarray, delta: float,
           cfg: CellConfig) -> tuple:
    dt = cfg.cfl_safety / (op.budget + delta)
    phi = phi - np.mean(phi)
    res = np.inf
    steps = 0
    while steps < cfg.max_steps:
        r = delta * phi + op.F(phi)
        r -= np.mean(r)
        nr = float(np.max(np.abs(r)))
        if nr < cfg.tol:
            res = nr
            break
        phi = phi - dt * r
        steps += 1
        if steps % cfg.check_every == 0:
            if not np.all(np.isfinite(phi)):
                raise NumericalFailure(f"cell march produced non-finite state at step {steps}")
            phi -= np.mean(phi)
        res = nr
    return phi, res, steps, res < cfg.tol


def vanishing_discount_sweep(params: CellParams, deltas, cfg: Optional[CellConfig] = None
                             ) -> CellSolution:
    """Solve the discounted stationary problem along a decreasing discount list.

    The ergodic constant estimate is the midpoint of [min, max] of the scaled
    discounted solution at the smallest discount; the max - min spread is the
    reported error bar (the convergence to the constant is uniform).
    """
    cfg = cfg or CellConfig()
    deltas = sorted(set(float(d) for d in deltas), reverse=True)
    if not deltas or deltas[-1] <= 0.0:
        raise ValueError("discounts must be positive")
    op = _StationaryOperator(params, cfg)
    phi = np.zeros(cfg.n)
    if getattr(op, "_godunov_bm", None) is not None:
        # short pre-march at the conservative step, then shrink the CFL budget
        # to the gradients actually present before the real sweep
        pre_cfg = replace(cfg, max_steps=min(4000, cfg.max_steps))
        phi, _, _, _ = _march(op, phi, deltas[0], pre_cfg)
        op.tighten(phi)
    trace = []
    residuals = []
    all_ok = True
    minus_dpsi = None
    psi_delta_sup = 0.0
    for d in deltas:
        phi, res, steps, ok = _march(op, phi, d, cfg)
        all_ok = all_ok and ok
        op.tighten(phi)
        mean_F = float(np.mean(op.F(phi)))
        minus_dpsi = -d * phi + mean_F
        psi_delta_sup = float(np.max(np.abs(phi - mean_F / d)))
        trace.append((d, float(np.min(minus_dpsi)), float(np.max(minus_dpsi))))
        residuals.append((d, res, steps))
    lo, hi = trace[-1][1], trace[-1][2]
    psi_vals = phi - phi[0]
    psi = GridFunction(psi_vals)
    reg = RegularityReport(
        osc=float(np.max(psi_vals) - np.min(psi_vals)),
        lip=float(np.max(np.abs(forward_diff(psi_vals, op.h)))),
        holder=_holder_quotients(psi_vals),
        flap_sup=float(np.max(np.abs(spectral_flap(psi, 1.0).values))),
    )
    return CellSolution(psi=psi, H_bar=0.5 * (lo + hi), delta_trace=tuple(trace),
                        spread=hi - lo, regularity=reg, residuals=tuple(residuals),
                        converged=all_ok, psi_delta_sup=psi_delta_sup,
                        delta_min=deltas[-1])


def long_time_average(params: CellParams, T_max: float,
                      cfg: Optional[CellConfig] = None) -> tuple:
    """Ergodic constant from the undiscounted flow: -v(T)/T from v(0) = 0.

    Returns (estimate, error_bar, checkpoints); the error bar is the drift of
    the running estimate over the last decade of time.
    """
    cfg = cfg or CellConfig()
    op = _StationaryOperator(params, cfg)
    dt = cfg.cfl_safety / op.budget
    steps_total = int(math.ceil(T_max / dt))
    v = np.zeros(cfg.n)
    checkpoints = []
    next_check = T_max / 64.0
    t = 0.0
    for s in range(steps_total):
        v = v - dt * op.F(v)
        t += dt
        if t >= next_check or s == steps_total - 1:
            checkpoints.append((t, -float(np.mean(v)) / t))
            next_check = max(next_check * 1.25, t + dt)
            if not np.all(np.isfinite(v)):
                raise NumericalFailure(f"long-time march produced non-finite state at t={t:.3g}")
    est = checkpoints[-1][1]
    window = [e for (tt, e) in checkpoints if tt >= T_max / 10.0]
    err = max(abs(e - est) for e in window) if window else float("inf")
    return est, err, tuple(checkpoints)


def spectral_cell_above_one(sigma: float, f: GridFunction) -> GridFunction:
    """Solve (fractional Laplacian of order sigma) psi = f for zero-mean f.

    Solvability requires the compatibility condition mean(f) = 0 (constants
    span the kernel of the operator); violation raises.  The result is
    normalized by psi(0) = 0.
    """
    if not (1.0 < sigma < 2.0):
        raise ValueError("direct spectral cell solve applies to orders in (1, 2)")
    fm = abs(f.mean())
    if fm > 1e-12 * max(f.sup_norm(), 1e-300):
        raise ValueError(f"compatibility violated: mean(f) = {f.mean():.3e} != 0")
    freq = np.fft.rfftfreq(f.n, d=1.0 / f.n)
    mult = np.zeros_like(freq)
    mult[1:] = (2.0 * np.pi * freq[1:]) ** (-sigma)
    psi = np.fft.irfft(mult * np.fft.rfft(f.values), n=f.n)
    return GridFunction(psi - psi[0])


@dataclass(frozen=True)
class RegularityRatios:
    psi_delta: float   # delta |psi^delta|_inf / (1 + |l| + |p|^m)
    osc: float         # osc(psi) / (1 + |p| + |l|^(1/m))
    lip: float         # Lip(psi) / (1 + |l| + |p|^m)
    flap: float        # sup |order-1 fractional Laplacian of psi| / (1+|l|+|p|^m)^m


def regularity_audit(sol: CellSolution, params: CellParams) -> RegularityRatios:
    m = params.ham.m
    pl = 1.0 + abs(params.l) + abs(params.p) ** m
    return RegularityRatios(
        psi_delta=sol.delta_min * sol.psi_delta_sup / pl,
        osc=sol.regularity.osc / (1.0 + abs(params.p) + abs(params.l) ** (1.0 / m)),
        lip=sol.regularity.lip / pl,
        flap=sol.regularity.flap_sup / pl ** m,
    )


def regularity_sweep_audit(entries) -> dict:
    """Ratios across a (p, l) sweep with a growth flag per estimate.

    entries: iterable of (params, solution).  A ratio family is flagged when
    its last value exceeds 1.25x its first (growth would contradict the
    uniform-in-parameters character of the bounds).
    """
    ratios = [regularity_audit(sol, par) for par, sol in entries]
    out = {}
    for name in ("psi_delta", "osc", "lip", "flap"):
        series = [getattr(r, name) for r in ratios]
        out[name] = {
            "series": series,
            "growth_flagged": bool(series[-1] > 1.25 * series[0] + 1e-12),
        }
    return out
