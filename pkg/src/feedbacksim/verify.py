"""Self-checks run by ``feedbacksim verify``.

Each check returns a :class:`Check` with the measured error and its bound.
``gain_factor`` scales the gain used on the generator side of the oracle
comparison only, which gives a negative control: anything but 1 must fail.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .feedback import (
    FeedbackChannel,
    channel_generator,
    compose_feedback,
    cross_channels,
    oracle_generator,
    povm_outcome_moments,
    squeeze_feedback,
)
from .lindblad import LindbladSpec
from .operators import Operator, build_generator, embed, fock_pair, random_hermitian, single_space, zero
from .separability import BilinearDephasingProblem, bilinear_verdict
from .feedback import generator_distance


@dataclass
class Check:
    name: str
    error: float
    bound: float
    detail: str = ""

    @property
    def ok(self) -> bool:
        return bool(np.isfinite(self.error) and self.error <= self.bound)

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        extra = f" {self.detail}" if self.detail else ""
        return f"{status} {self.name} error={self.error:.3e} bound={self.bound:.1e}{extra}"


def random_channel(rng: np.random.Generator, dim: int, gain_range=3.0, rate_range=(0.05, 2.0)) -> FeedbackChannel:
    space = single_space(dim)
    X = Operator(space, random_hermitian(dim, rng))
    Y = Operator(space, random_hermitian(dim, rng))
    return FeedbackChannel(X, Y, float(rng.uniform(*rate_range)), float(rng.uniform(-gain_range, gain_range)))


def random_density(rng: np.random.Generator, dim: int) -> np.ndarray:
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = A @ A.conj().T
    return rho / np.trace(rho).real


def oracle_dt(ch: FeedbackChannel) -> float:
    """Step small enough for the extrapolated oracle to sit well below 1e-6."""
    nx = np.linalg.norm(ch.X.mat, 2)
    ny = np.linalg.norm(ch.Y.mat, 2)
    rate = ch.meas_rate * nx * nx + abs(ch.gain) * nx * ny + ch.gain ** 2 / (4 * ch.meas_rate) * ny * ny
    return 1e-3 / max(rate, 1e-12)


def check_forms(rng, n=20) -> Check:
    worst = 0.0
    for _ in range(n):
        ch = random_channel(rng, int(rng.integers(3, 7)))
        a = channel_generator(ch, "compact").superoperator()
        b = channel_generator(ch, "expanded").superoperator()
        worst = max(worst, np.linalg.norm(a - b) / np.linalg.norm(b))
    return Check("compact-vs-expanded", worst, 1e-12, f"channels={n}")


def check_oracle(rng, n=10, gain_factor=1.0) -> Check:
    worst = 0.0
    for _ in range(n):
        ch = random_channel(rng, 4)
        rho = random_density(rng, 4)
        est = oracle_generator(ch, rho, oracle_dt(ch))
        shown = FeedbackChannel(ch.X, ch.Y, ch.meas_rate, ch.gain * gain_factor)
        gen = channel_generator(shown).apply(rho)
        worst = max(worst, np.linalg.norm(est - gen, 2) / max(np.linalg.norm(gen, 2), 1e-300))
    return Check("kraus-oracle", worst, 1e-6, f"channels={n}")


def check_povm(rng, dt=1e-3) -> Check:
    ch = random_channel(rng, 4)
    xs, V = np.linalg.eigh(ch.X.mat)
    rho = np.outer(V[:, 0], V[:, 0].conj())
    _, var = povm_outcome_moments(ch, rho, dt)
    expect = 1 / (4 * ch.meas_rate * dt)
    return Check("povm-variance", abs(var - expect) / expect, 1e-6,
                 f"variance={var:.12g} expected_1/(4*g_m*dt)={expect:.12g}")


def check_cross_pair(gammas=(0.1, 1.0, 10.0)) -> Check:
    space = fock_pair(3, ("A", "B"))
    XA, XB = build_generator(space, "A", "x"), build_generator(space, "B", "x")
    worst = 0.0
    for g in gammas:
        spec = compose_feedback(LindbladSpec(space, zero(space)), cross_channels(XA, XB, g))
        target = LindbladSpec(space, -2 * g * (XA @ XB),
                              ((2 * g, XA, "X_A"), (2 * g, XB, "X_B")))
        worst = max(worst, generator_distance(spec, target))
    return Check("two-system-composition", worst, 1e-12, f"gammas={list(gammas)}")


def check_preset(kappa=1.0, dim=6) -> Check:
    spec = squeeze_feedback(kappa, dim)
    space = spec.space
    a1, a2 = build_generator(space, "1", "a"), build_generator(space, "2", "a")
    diss = []
    for a in (a1, a2):
        diss += [(3 * kappa, a, ""), (kappa, a.dag(), "")]
    target = LindbladSpec(space, kappa * (a1 @ a2 + a1.dag() @ a2.dag()), tuple(diss))
    return Check("squeeze-preset", generator_distance(spec, target), 1e-12, f"kappa={kappa} fock_dim={dim}")


def check_witnesses(rng, n=20) -> Check:
    worst = 0.0
    for _ in range(n):
        ga, gb = rng.uniform(0.1, 5, size=2)
        g = rng.uniform(-1, 1) * math.sqrt(ga * gb)
        space = fock_pair(3, ("A", "B"))
        XA = embed(space, "A", random_hermitian(3, rng))
        XB = embed(space, "B", random_hermitian(3, rng))
        p = BilinearDephasingProblem(g, ga, gb)
        w = bilinear_verdict(p).witness
        worst = max(worst, generator_distance(w.compose(XA, XB), p.spec(XA, XB)))
    return Check("separability-witness", worst, 1e-10, f"problems={n}")


def run_all(seed: int = 0, gain_factor: float = 1.0) -> list[Check]:
    rng = np.random.default_rng(seed)
    return [
        check_forms(rng),
        check_oracle(rng, gain_factor=gain_factor),
        check_povm(rng),
        check_cross_pair(),
        check_preset(),
        check_witnesses(rng),
    ]
