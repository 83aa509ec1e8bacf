"""Two-mode squeezing with loss and gain: closed moment dynamics and full-space checks.

The noisy squeezer is ``H = 2 g (x1 x2 - y1 y2) = g (a1 a2 + a1^dag a2^dag)`` with
``gamma_minus D[a_j] + gamma_plus D[a_j^dag]`` on both modes.  This Hamiltonian
couples ``x1`` to ``y2`` and ``y1`` to ``x2``, so the pair of joint quadratures
it squeezes is ``x1 + y2`` and ``y1 + x2``.  Written with a rotated mode 2,
``x2' = -y2``, ``y2' = x2``, that is the familiar ``x1 - x2'`` / ``y1 + y2'``.
Both variances obey::

    dV/dt = -(gamma_minus - gamma_plus + 2 g) V + (gamma_minus + gamma_plus)/2

The complementary pair ``x1 - y2``, ``y1 - x2`` is anti-squeezed at rate
``gamma_minus - gamma_plus - 2 g``; no steady state exists once
``2 g >= gamma_minus - gamma_plus``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .lindblad import (
    DensityMatrix,
    Dissipator,
    LindbladSpec,
    evolve,
    expectation,
    steady_state,
    vacuum,
)
from .operators import Operator, SpaceSignature, build_generator, fock_pair

# mode-2 rotation that maps (x1 - x2', y1 + y2') onto the pair squeezed by a1 a2 + h.c.
SQUEEZE_PHASE = -math.pi / 2


@dataclass(frozen=True)
class MomentState:
    """Variances of the two squeezed joint quadratures."""

    V_minus: float
    V_plus: float

    def __post_init__(self):
        if not (self.V_minus > 0 and self.V_plus > 0):
            raise ValueError(f"variances must be positive, got {self.V_minus}, {self.V_plus}")

    @property
    def duan_sum(self) -> float:
        return self.V_minus + self.V_plus


@dataclass(frozen=True)
class SqueezeParams:
    g: float
    gamma_minus: float
    gamma_plus: float

    def __post_init__(self):
        if self.gamma_minus < 0 or self.gamma_plus < 0:
            raise ValueError("rates must be nonnegative")

    @property
    def decay(self) -> float:
        return self.gamma_minus - self.gamma_plus + 2 * self.g

    @property
    def source(self) -> float:
        return 0.5 * (self.gamma_minus + self.gamma_plus)

    @property
    def stable(self) -> bool:
        """Whether the anti-squeezed quadratures relax too (marginal counts as unstable)."""
        margin = self.gamma_minus - self.gamma_plus - 2 * abs(self.g)
        return margin > 1e-12 * (self.gamma_minus + self.gamma_plus + 2 * abs(self.g))


def feedback_preset(kappa: float = 1.0) -> SqueezeParams:
    return SqueezeParams(kappa, 3 * kappa, kappa)


def moment_rhs(m: MomentState, g: float, gamma_minus: float, gamma_plus: float):
    p = SqueezeParams(g, gamma_minus, gamma_plus)
    return (-p.decay * m.V_minus + p.source, -p.decay * m.V_plus + p.source)


def stationary_variance(g: float, gamma_minus: float, gamma_plus: float) -> float:
    p = SqueezeParams(g, gamma_minus, gamma_plus)
    if p.decay <= 0:
        raise ValueError("squeezed quadratures do not relax for these parameters")
    return p.source / p.decay


def moment_exact(V0: float, p: SqueezeParams, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if p.decay == 0:
        return V0 + p.source * t
    vss = p.source / p.decay
    return vss + (V0 - vss) * np.exp(-p.decay * t)


def moment_evolve(m0: MomentState, params: SqueezeParams, t_final: float, dt: float,
                  rtol: float = 1e-10) -> list[tuple[float, MomentState]]:
    """RK4 for the two variance equations, checked against the exact exponential."""
    n = max(1, int(math.ceil(t_final / dt - 1e-9)))
    h = t_final / n
    state = np.array([m0.V_minus, m0.V_plus], dtype=float)
    k, s = params.decay, params.source
    f = lambda v: -k * v + s
    out = [(0.0, m0)]
    for i in range(1, n + 1):
        k1 = f(state)
        k2 = f(state + 0.5 * h * k1)
        k3 = f(state + 0.5 * h * k2)
        k4 = f(state + h * k3)
        state = state + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append((i * h, MomentState(float(state[0]), float(state[1]))))
    times = np.array([t for t, _ in out])
    for j, v0 in enumerate((m0.V_minus, m0.V_plus)):
        exact = moment_exact(v0, params, times)
        num = np.array([(m.V_minus, m.V_plus)[j] for _, m in out])
        err = float(np.max(np.abs(num - exact) / np.abs(exact)))
        if err > rtol:
            raise RuntimeError(f"moment integration deviates from exact solution by {err:.3g}; reduce dt")
    return out


# -- full two-mode model ---------------------------------------------------------

def joint_quadratures(space: SpaceSignature, labels=("1", "2"),
                      phase: float = SQUEEZE_PHASE) -> tuple[Operator, Operator]:
    """``(x1 - x2', y1 + y2')`` with mode 2 rotated by ``phase``.

    ``phase = 0`` gives ``x1 - x2`` and ``y1 + y2``; the default gives the pair
    squeezed by ``a1 a2 + a1^dag a2^dag``.
    """
    l1, l2 = labels
    x1, y1 = build_generator(space, l1, "x"), build_generator(space, l1, "y")
    x2, y2 = build_generator(space, l2, "x"), build_generator(space, l2, "y")
    c, s = math.cos(phase), math.sin(phase)
    x2r = c * x2 + s * y2
    y2r = c * y2 - s * x2
    return x1 - x2r, y1 + y2r


def joint_moments(rho: DensityMatrix, labels=("1", "2"), phase: float = SQUEEZE_PHASE):
    q1, q2 = joint_quadratures(rho.space, labels, phase)
    return (expectation(rho, q1 @ q1).real, expectation(rho, q2 @ q2).real)


def noisy_squeezing_spec(params: SqueezeParams, fock_dim: int) -> LindbladSpec:
    space = fock_pair(fock_dim)
    a1, a2 = build_generator(space, "1", "a"), build_generator(space, "2", "a")
    H = params.g * (a1 @ a2 + a1.dag() @ a2.dag())
    diss = []
    for l, a in (("1", a1), ("2", a2)):
        diss.append(Dissipator(params.gamma_minus, a, f"a_{l}"))
        diss.append(Dissipator(params.gamma_plus, a.dag(), f"adag_{l}"))
    return LindbladSpec(space, H, tuple(diss))


@dataclass
class CrossValidation:
    params: SqueezeParams
    fock_dim: int
    times: np.ndarray
    full: np.ndarray  # (n, 2) simulated variances
    closed: np.ndarray  # (n, 2) moment-equation variances
    truncation: float
    max_deviation: float
    ok: bool
    message: str = ""
    diagnostics: dict = field(default_factory=dict)


def cross_validate(params: SqueezeParams, fock_dim: int, t_final: float | None = None,
                   dt: float | None = None, samples: int = 51, tol: float = 1e-3,
                   trunc_tol: float = 1e-3) -> CrossValidation:
    """Evolve the full model from vacuum and compare with the moment equations."""
    if t_final is None:
        t_final = 5.0 / params.gamma_minus
    spec = noisy_squeezing_spec(params, fock_dim)
    q1, q2 = joint_quadratures(spec.space)
    if dt is None:
        dt = t_final / (samples - 1) / max(1, int(math.ceil(
            (params.gamma_minus + params.gamma_plus + 2 * abs(params.g)) * fock_dim
            * t_final / (samples - 1) / 0.5)))
    stride = max(1, int(round(t_final / (samples - 1) / dt)))
    traj = evolve(spec, vacuum(spec.space), t_final, dt,
                  observables={"Vm": q1 @ q1, "Vp": q2 @ q2}, stride=stride,
                  keep_states=False)
    full = np.column_stack([traj.observables["Vm"], traj.observables["Vp"]])
    closed = np.column_stack([moment_exact(0.5, params, traj.times)] * 2)
    dev = float(np.max(np.abs(full - closed)))
    trunc = traj.diagnostics["truncation_metric"]
    bound = max(tol, trunc)
    ok = dev <= bound and trunc <= trunc_tol
    msg = "ok" if ok else ("increase fock_dim" if trunc > trunc_tol else "deviation above tolerance")
    return CrossValidation(params, fock_dim, traj.times, full, closed, trunc, dev, ok, msg,
                           dict(traj.diagnostics))


def simulated_stationary_variance(params: SqueezeParams, fock_dim: int):
    """(V_minus, V_plus, truncation metric) of the full model's stationary state."""
    rho = steady_state(noisy_squeezing_spec(params, fock_dim))
    vm, vp = joint_moments(rho)
    return vm, vp, rho.top_level_population(), rho


def _scan_point(args):
    g, gm, gp, fock_dim = args
    p = SqueezeParams(g, gm, gp)
    row = {"g": g, "V_ss": stationary_variance(g, gm, gp) if p.decay > 0 else float("inf")}
    row["duan_sum"] = 2 * row["V_ss"]
    row["entangled"] = row["V_ss"] < 0.5
    if fock_dim:
        try:
            vm, vp, trunc, _ = simulated_stationary_variance(p, fock_dim)
            row.update(sim_V_minus=vm, sim_V_plus=vp, sim_duan_sum=vm + vp, truncation=trunc)
        except Exception as exc:  # report, do not abort the scan
            row.update(sim_V_minus=float("nan"), sim_V_plus=float("nan"),
                       sim_duan_sum=float("nan"), truncation=float("nan"), error=str(exc))
    return row


def threshold_scan(g_values, gamma_minus: float, gamma_plus: float, fock_dim: int | None = None,
                   workers: int | None = None) -> list[dict]:
    """Closed-form (and optionally simulated) stationary variances over a g grid.

    Rows come back in the order of ``g_values`` whatever the completion order.
    """
    args = [(float(g), gamma_minus, gamma_plus, fock_dim) for g in g_values]
    if workers is None:
        workers = int(os.environ.get("FEEDBACKSIM_THREADS", "1") or 1)
    if workers > 1 and fock_dim:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_scan_point, args))
    return [_scan_point(a) for a in args]


def crossing(xs, ys, level: float = 0.5) -> float | None:
    """Linear interpolation of the first crossing of ``level``."""
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    for i in range(len(xs) - 1):
        a, b = ys[i] - level, ys[i + 1] - level
        if not (np.isfinite(a) and np.isfinite(b)):
            continue
        if a == 0:
            return float(xs[i])
        if a * b < 0:
            return float(xs[i] + (xs[i + 1] - xs[i]) * a / (a - b))
    if len(ys) and ys[-1] == level:
        return float(xs[-1])
    return None
