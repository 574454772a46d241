"""Monotone explicit time stepping for the oscillating and effective problems.

The update is forward Euler on a monotone spatial operator: nonnegative
quadrature weights for the nonlocal part, Godunov or Lax-Friedrichs for the
gradient part, and a CFL step chosen so every off-diagonal dependence is
nondecreasing.  Monotonicity buys the discrete comparison principle, the
sup-norm bound, and stability; no attempt is made at higher order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .grid import GridFunction, backward_diff, forward_diff
from .hamiltonians import HamiltonianSpec
from .kernels import KernelSpec, QuadratureTable
from .operators import apply_table


class NumericalFailure(RuntimeError):
    """Blow-up, NaN, or an a-priori bound left during time stepping."""


def godunov_power_flux(m: float, ql: np.ndarray, qr: np.ndarray) -> np.ndarray:
    """Godunov flux for q -> |q|^m (convex, minimum at 0)."""
    return np.maximum(np.maximum(ql, 0.0), np.maximum(-qr, 0.0)) ** m


@dataclass
class SolverConfig:
    """Discretization knobs; dt is always derived from the CFL bound."""

    cfl_safety: float = 0.9
    flux: str = "godunov"            # "godunov" (power-form models) or "lax_friedrichs"
    theta: Optional[float] = None    # LF dissipation; sampled sup |dH/dp| when None
    gradient_range: Optional[float] = None
    snapshots: int = 10              # recorded times beyond t = 0
    record_times: Optional[np.ndarray] = None

    def resolved_record_times(self, T: float) -> np.ndarray:
        if self.record_times is not None:
            return np.asarray(self.record_times, dtype=float)
        return np.linspace(0.0, T, self.snapshots + 1)[1:]


@dataclass
class ParabolicProblem:
    """Either the oscillating problem (kind="oscillating") driven by (a, H)
    at scale eps = 1/k, or the homogenized problem (kind="effective") driven
    by an effective source with signature value(x, p, l)."""

    kind: str
    u0: GridFunction
    T: float
    kernel: KernelSpec
    table: QuadratureTable
    eps: Optional[float] = None
    a: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    ham: Optional[HamiltonianSpec] = None
    hbar_value: Optional[Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]] = None
    hbar_l_slope: float = 0.0        # sup |dHbar/dl|, nonlocal CFL budget
    hbar_power_coeff: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hbar_power_m: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("oscillating", "effective"):
            raise ValueError(f"unknown problem kind '{self.kind}'")
        if self.T <= 0.0:
            raise ValueError("horizon must be positive")
        if self.kind == "oscillating":
            if self.eps is None or self.a is None or self.ham is None:
                raise ValueError("oscillating problem needs eps, a, and a Hamiltonian")
            k = 1.0 / self.eps
            if abs(k - round(k)) > 1e-12:
                raise ValueError("eps must be the reciprocal of a positive integer")
            if self.u0.n < 16 * int(round(k)):
                raise ValueError("need n >= 16 / eps to resolve the fast variable")
        else:
            if self.hbar_value is None:
                raise ValueError("effective problem needs an effective source")


@dataclass
class Trajectory:
    times: np.ndarray
    snapshots: list
    sup_norm_track: np.ndarray
    residual_track: np.ndarray
    dt: float
    theta: float
    max_gradient_seen: float

    def final(self) -> GridFunction:
        return self.snapshots[-1]


def _lf_theta(ham: HamiltonianSpec, p_range: float, nx: int = 64, ny: int = 64) -> float:
    xs = np.arange(nx) / nx
    ys = np.arange(ny) / ny
    ps = np.linspace(-p_range, p_range, 201)
    X, Y, P = np.meshgrid(xs, ys, ps, indexing="ij")
    d = 1e-5
    slope = np.abs(ham.eval(X, Y, P + d) - ham.eval(X, Y, P - d)) / (2.0 * d)
    return float(np.max(slope))


def _gradient_range(problem: ParabolicProblem) -> float:
    u0 = problem.u0
    p0 = float(np.max(np.abs(forward_diff(u0.values, u0.h))))
    guess = max(2.0, 2.0 * p0)
    ham = problem.ham
    if ham is not None and ham.power_form is not None:
        # steady gradients obey b_min |p|^m <= osc-scale forcing
        xs = np.arange(256) / 256
        b_min = float(np.min(ham.power_form.b(xs[:, None], xs[None, :])))
        f_sup = float(np.max(np.abs(ham.power_form.f(xs[:, None], xs[None, :]))))
        guess = max(guess, ((2.0 * f_sup + 4.0) / b_min) ** (1.0 / ham.m) + p0)
    return guess


def solve(problem: ParabolicProblem, cfg: SolverConfig) -> Trajectory:
    """March the problem to its horizon, recording exact snapshot times.

    Raises NumericalFailure on NaN (with the step index) or if the gradient
    leaves the a-priori range backing the flux's monotonicity.
    """
    u0 = problem.u0
    n, h = u0.n, u0.h
    xs = u0.nodes()
    table = problem.table

    p_range = cfg.gradient_range if cfg.gradient_range is not None else _gradient_range(problem)

    if problem.kind == "oscillating":
        ys = np.mod(xs / problem.eps, 1.0)
        a_vals = np.asarray(problem.a(xs, ys), dtype=float)
        a_max = float(np.max(np.abs(a_vals)))
        ham = problem.ham
        use_godunov = cfg.flux == "godunov" and ham.power_form is not None
        if cfg.flux == "godunov" and ham.power_form is None:
            raise ValueError("Godunov flux needs the power-form structure hint")
        if use_godunov:
            b_vals = np.asarray(ham.power_form.b(xs, ys), dtype=float)
            f_vals = np.asarray(ham.power_form.f(xs, ys), dtype=float)
            m = ham.power_form.m
            theta = float(np.max(b_vals)) * m * p_range ** (m - 1.0)

            def rhs(u):
                pl = backward_diff(u, h)
                pr = forward_diff(u, h)
                return (-a_vals * apply_table(u, table)
                        + b_vals * godunov_power_flux(m, pl, pr) - f_vals)
        else:
            theta = cfg.theta if cfg.theta is not None else _lf_theta(ham, p_range)

            def rhs(u):
                pl = backward_diff(u, h)
                pr = forward_diff(u, h)
                return (-a_vals * apply_table(u, table)
                        + ham.eval(xs, ys, 0.5 * (pl + pr)) - 0.5 * theta * (pr - pl))

        nonlocal_budget = a_max * (table.tail_mass + table.antisym_cfl_mass())
    else:
        hbar = problem.hbar_value
        l_slope = problem.hbar_l_slope
        if problem.hbar_power_coeff is not None:
            coeff = np.asarray(problem.hbar_power_coeff(xs), dtype=float)
            m = problem.hbar_power_m
            theta = float(np.max(coeff)) * m * p_range ** (m - 1.0)

            def rhs(u):
                pl = backward_diff(u, h)
                pr = forward_diff(u, h)
                lvals = apply_table(u, table)
                base = hbar(xs, np.zeros(n), lvals)
                return base + coeff * godunov_power_flux(m, pl, pr)
        else:
            theta = cfg.theta
            if theta is None:
                ps = np.linspace(-p_range, p_range, 201)
                d = 1e-4
                slope = np.abs(np.asarray(hbar(np.zeros_like(ps), ps + d, np.zeros_like(ps)))
                               - np.asarray(hbar(np.zeros_like(ps), ps - d, np.zeros_like(ps)))) / (2 * d)
                theta = float(np.max(slope))

            def rhs(u):
                pl = backward_diff(u, h)
                pr = forward_diff(u, h)
                lvals = apply_table(u, table)
                return hbar(xs, 0.5 * (pl + pr), lvals) - 0.5 * theta * (pr - pl)

        nonlocal_budget = l_slope * (table.tail_mass + table.antisym_cfl_mass())

    dt = cfg.cfl_safety / (nonlocal_budget + theta / h + 1e-300)
    record = cfg.resolved_record_times(problem.T)

    u = u0.values.copy()
    t = 0.0
    times = [0.0]
    snapshots = [GridFunction(u)]
    residuals = [0.0]
    max_grad = float(np.max(np.abs(forward_diff(u, h))))
    step_index = 0
    r = np.zeros(n)
    for t_target in record:
        while t < t_target - 1e-14:
            step = min(dt, t_target - t)
            r = rhs(u)
            u = u - step * r
            t += step
            step_index += 1
            if not np.all(np.isfinite(u)):
                raise NumericalFailure(f"non-finite state at step {step_index}, t = {t:.6g}")
        g = float(np.max(np.abs(forward_diff(u, h))))
        max_grad = max(max_grad, g)
        if g > p_range * (1.0 + 1e-9):
            raise NumericalFailure(
                f"gradient {g:.3g} left the a-priori range {p_range:.3g}; "
                "enlarge gradient_range")
        times.append(t)
        snapshots.append(GridFunction(u))
        residuals.append(float(np.max(np.abs(r))))
    return Trajectory(times=np.array(times), snapshots=snapshots,
                      sup_norm_track=np.array([s.sup_norm() for s in snapshots]),
                      residual_track=np.array(residuals), dt=dt, theta=theta,
                      max_gradient_seen=max_grad)


def sampled_modulus(u0: GridFunction, r: float) -> float:
    """sup |u0(x) - u0(x')| over node pairs with torus distance <= r."""
    shifts = int(math.floor(r * u0.n + 1e-12))
    out = 0.0
    for s in range(1, shifts + 1):
        out = max(out, float(np.max(np.abs(np.roll(u0.values, -s) - u0.values))))
    return out


def _bump_constants() -> tuple:
    """L1 norms of the first two derivatives of the normalized standard bump."""
    s = np.linspace(-1.0 + 1e-9, 1.0 - 1e-9, 20001)
    rho = np.exp(-1.0 / (1.0 - s * s))
    Z = np.trapezoid(rho, s)
    rho /= Z
    d1 = np.gradient(rho, s)
    d2 = np.gradient(d1, s)
    return float(np.trapezoid(np.abs(d1), s)), float(np.trapezoid(np.abs(d2), s))

_R1, _R2 = _bump_constants()


@dataclass(frozen=True)
class BarrierEnvelope:
    """Time-affine envelopes u0_h -/+ (omega0 + C(h) t) around the solution."""

    u0_smoothed: GridFunction
    h_moll: float
    omega0: float
    C_of_h: float
    C1: float
    C2: float
    growth_C: float

    def lower(self, t: float) -> np.ndarray:
        return self.u0_smoothed.values - (self.omega0 + self.C_of_h * t)

    def upper(self, t: float) -> np.ndarray:
        return self.u0_smoothed.values + (self.omega0 + self.C_of_h * t)

    def alpha(self, m: float) -> float:
        return max(2.0, m)

    def C3(self) -> float:
        return self.growth_C * (self.C1 + self.C2)

    def initial_layer_bound(self, t: np.ndarray, u0: GridFunction, m: float) -> np.ndarray:
        """2 omega0(t^(1/(2 alpha))) + C3 sqrt(t), the optimized envelope gap."""
        alpha = self.alpha(m)
        t = np.asarray(t, dtype=float)
        return np.array([2.0 * sampled_modulus(u0, min(ti ** (1.0 / (2 * alpha)), 1.0))
                         + self.C3() * math.sqrt(ti) for ti in t])


def _kernel_moments(k: KernelSpec, h_cut: float = 1e-4) -> tuple:
    """(S1, S2, T1): first/second absolute moments inside the unit ball and
    total mass outside, for the full kernel density."""
    def kabs(z):
        return np.abs(np.asarray(k.kbar(z))) * z ** (-1.0 - k.sigma)

    edges = np.geomspace(h_cut, 1.0, 200)
    mids = 0.5 * (edges[1:] + edges[:-1])
    widths = np.diff(edges)
    S1 = float(2.0 * np.sum(widths * mids * kabs(mids)))
    S2 = float(2.0 * np.sum(widths * mids ** 2 * kabs(mids)))
    far = np.geomspace(1.0, 1e4, 400)
    fmids = 0.5 * (far[1:] + far[:-1])
    T1 = float(2.0 * np.sum(np.diff(far) * kabs(fmids)))
    return S1, S2, T1


def barrier_bounds(u0: GridFunction, h_moll: float, a_sup: float,
                   growth_C: float, m: float, kernel: KernelSpec) -> BarrierEnvelope:
    """Mollify u0 at radius h and assemble C(h) = C1 C h^-2 + C2 C h^-m.

    C1 collects the nonlocal budget of the mollified data (second/first kernel
    moments against the bump derivative bounds |Du0_h| <= |u0| R1/h,
    |D2 u0_h| <= |u0| R2/h^2); C2 the Hamiltonian growth against |Du0_h|^m.
    """
    if not (0.0 < h_moll <= 1.0):
        raise ValueError("mollification radius must lie in (0, 1]")
    n = u0.n
    xs = np.arange(n) / n
    d = xs.copy()
    d = np.minimum(d, 1.0 - d)  # torus distance to 0
    prof = np.where(d < h_moll, np.exp(-1.0 / np.maximum(1.0 - (d / h_moll) ** 2, 1e-300)), 0.0)
    if np.sum(prof) <= 0.0:
        prof = np.zeros(n)
        prof[0] = 1.0
    prof = prof / np.sum(prof)
    smoothed = np.real(np.fft.ifft(np.fft.fft(u0.values) * np.fft.fft(prof)))

    omega0 = sampled_modulus(u0, h_moll)
    u_sup = u0.sup_norm()
    S1, S2, T1 = _kernel_moments(kernel)
    C = max(growth_C, 1e-12)
    C1 = a_sup * u_sup * (0.5 * S2 * _R2 + S1 * _R1 + 2.0 * T1) / C + 1.0
    C2 = (_R1 * u_sup) ** m
    C_of_h = C1 * C * h_moll ** (-2.0) + C2 * C * h_moll ** (-m)
    return BarrierEnvelope(u0_smoothed=GridFunction(smoothed), h_moll=h_moll,
                           omega0=omega0, C_of_h=C_of_h, C1=C1, C2=C2, growth_C=C)


def initial_layer_modulus(traj: Trajectory, u0: GridFunction) -> np.ndarray:
    """Table t -> sup_x |u(x, t) - u0(x)| over the recorded snapshots."""
    gaps = [float(np.max(np.abs(s.values - u0.values))) for s in traj.snapshots]
    return np.column_stack([traj.times, gaps])


def sup_convolution_time(u: np.ndarray, times: np.ndarray, gamma: float) -> tuple:
    """Regularize in time: out[x, t] = max_s { u[x, s] - (t_s - t_t)^2 / gamma }.

    Returns (values, lip) where lip is the largest per-x discrete time slope;
    the maximizer construction guarantees out >= u and lip <= 4 |u|_inf / sqrt(gamma).
    """
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    u = np.asarray(u, dtype=float)
    times = np.asarray(times, dtype=float)
    if u.ndim != 2 or u.shape[1] != times.size:
        raise ValueError("need u of shape (nx, nt) matching times")
    penalty = (times[None, :] - times[:, None]) ** 2 / gamma  # [s, t]
    out = np.max(u[:, :, None] - penalty[None, :, :], axis=1)
    if times.size > 1:
        dts = np.diff(times)
        lip = float(np.max(np.abs(np.diff(out, axis=1)) / dts[None, :]))
    else:
        lip = 0.0
    return out, lip


def holder_exponent_alpha0(n: float, sigma: float, m: float) -> float:
    """Closed-form threshold exponent for the strip-comparison argument.

    sigma = 1 branch uses the resolved kappa = 2; sigma < 1 doubles the strict
    lower bound kappa > 2 sigma / (1 - sigma).
    """
    if n <= 0.0 or m <= 1.0 or not (0.0 < sigma <= 1.0):
        raise ValueError("need n > 0, m > 1 and sigma in (0, 1]")
    gradient_branch = 1.0 - 1.0 / (n * m)
    if sigma == 1.0:
        other = 1.5 - 0.5 * math.sqrt(1.0 + 2.0 / n)
    else:
        kappa = 2.0 * (2.0 * sigma / (1.0 - sigma))
        other = 0.5 * (2.0 + sigma - math.sqrt((2.0 - sigma) ** 2 + 8.0 / (n * (2.0 + kappa))))
    # strictly below 1 in exact arithmetic; keep it so at the float boundary
    return min(max(gradient_branch, other), float(np.nextafter(1.0, 0.0)))
