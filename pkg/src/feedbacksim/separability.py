"""When is a noisy bilinear interaction realizable by local feedback?

For ``H = g X_A X_B`` with dephasing ``gamma_A D[X_A] + gamma_B D[X_B]`` a pair of
cross-feedback lines reproduces the generator exactly iff ``g^2 <= gamma_A gamma_B``.
Necessity holds within the family of QND feedback models (the only local
models that conserve the eigenstates of X_A and X_B).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .feedback import FeedbackChannel, compose_feedback
from .lindblad import DensityMatrix, Dissipator, LindbladSpec, expectation
from .operators import Operator, zero
from .squeeze import SQUEEZE_PHASE, joint_moments, joint_quadratures


@dataclass(frozen=True)
class BilinearDephasingProblem:
    g: float
    gamma_A: float
    gamma_B: float

    def __post_init__(self):
        if self.gamma_A < 0 or self.gamma_B < 0:
            raise ValueError("dephasing rates must be nonnegative")

    def spec(self, XA: Operator, XB: Operator) -> LindbladSpec:
        """Target generator on operators already embedded in a joint space."""
        diss = (Dissipator(self.gamma_A, XA, "X_A"), Dissipator(self.gamma_B, XB, "X_B"))
        return LindbladSpec(XA.space, self.g * (XA @ XB), diss)


@dataclass(frozen=True)
class FeedbackWitness:
    meas_rate_A: float
    meas_rate_B: float
    gain_A_to_B: float
    gain_B_to_A: float

    def dephasing(self) -> tuple[float, float]:
        """Total dephasing each side receives: own measurement plus feedback noise."""
        def noise(gain, rate):
            return 0.0 if gain == 0 else gain * gain / (4 * rate)
        return (self.meas_rate_A + noise(self.gain_B_to_A, self.meas_rate_B),
                self.meas_rate_B + noise(self.gain_A_to_B, self.meas_rate_A))

    def coupling(self) -> float:
        return 0.5 * (self.gain_A_to_B + self.gain_B_to_A)

    def channels(self, XA: Operator, XB: Operator) -> list[FeedbackChannel]:
        return [
            FeedbackChannel(XA, XB, self.meas_rate_A, self.gain_A_to_B, "probe", "A->B", "X_A", "X_B"),
            FeedbackChannel(XB, XA, self.meas_rate_B, self.gain_B_to_A, "probe", "B->A", "X_B", "X_A"),
        ]

    def compose(self, XA: Operator, XB: Operator) -> LindbladSpec:
        return compose_feedback(LindbladSpec(XA.space, zero(XA.space)), self.channels(XA, XB))


@dataclass(frozen=True)
class BilinearVerdict:
    separable: bool
    witness: FeedbackWitness | None


def max_witness_coupling(gamma_A: float, gamma_B: float) -> float:
    return math.sqrt(gamma_A * gamma_B)


def bilinear_verdict(p: BilinearDephasingProblem) -> BilinearVerdict:
    """Separable iff ``g^2 <= gamma_A gamma_B`` (boundary counts as separable).

    The witness uses equal gains ``g`` on both lines, which makes the imaginary
    cross terms cancel, and the measurement rates that exhaust the dephasing
    budgets exactly::

        m_A = (gamma_A/2) (1 + sqrt(1 - g^2/(gamma_A gamma_B))),  m_B = m_A gamma_B/gamma_A

    At the boundary both rates are half the dephasing rates; a relative 1e-12
    slack keeps boundary inputs built from a square root on the separable side.
    """
    g, ga, gb = p.g, p.gamma_A, p.gamma_B
    if g == 0:
        return BilinearVerdict(True, FeedbackWitness(ga, gb, 0.0, 0.0))
    prod = ga * gb
    if g * g > prod * (1 + 1e-12):
        return BilinearVerdict(False, None)
    root = math.sqrt(max(0.0, 1.0 - g * g / prod))
    ma = 0.5 * ga * (1 + root)
    mb = 0.5 * gb * (1 + root)
    return BilinearVerdict(True, FeedbackWitness(ma, mb, g, g))


def multiterm_sufficient(terms: Sequence[BilinearDephasingProblem],
                         totals: tuple[float, float] | None = None) -> bool:
    """Sufficient test for a sum of bilinear terms with caller-allocated budgets.

    True certifies separability (every term has its own witness); False is
    inconclusive.  ``totals`` are the available dephasing rates on A and B when
    the terms draw on shared budgets.
    """
    if totals is not None:
        ta, tb = totals
        sa = sum(t.gamma_A for t in terms)
        sb = sum(t.gamma_B for t in terms)
        tol = 1e-12 * max(1.0, ta, tb)
        if sa > ta + tol or sb > tb + tol:
            raise ValueError(
                f"allocated dephasing ({sa:g}, {sb:g}) exceeds declared totals ({ta:g}, {tb:g})"
            )
    return all(bilinear_verdict(t).separable for t in terms)


# -- two-mode squeezing -----------------------------------------------------------

@dataclass(frozen=True)
class SqueezingProblem:
    g12: float
    gamma_minus: float
    gamma_plus: float

    def __post_init__(self):
        if not self.gamma_minus > self.gamma_plus:
            raise ValueError("need gamma_minus > gamma_plus for stationary solutions")
        if self.gamma_plus < 0:
            raise ValueError("rates must be nonnegative")


@dataclass(frozen=True)
class SqueezingVerdict:
    separable_constructible: bool
    V_ss: float
    entangled_steady: bool


def squeezing_verdict(p: SqueezingProblem) -> SqueezingVerdict:
    constructible = p.g12 <= p.gamma_plus
    # written around the threshold so that g12 == gamma_plus gives exactly 1/2
    total = p.gamma_minus + p.gamma_plus
    v = total / (2 * (total + 2 * (p.g12 - p.gamma_plus)))
    return SqueezingVerdict(constructible, v, v < 0.5)


def duan_witness(rho: DensityMatrix, labels=("1", "2"), phase: float = SQUEEZE_PHASE,
                 central: bool = True) -> float:
    """Sum of the two joint-quadrature variances; below 1 certifies entanglement.

    The default pair is the one squeezed by ``a1 a2 + a1^dag a2^dag``;
    ``phase=0`` gives the ``x1 - x2``, ``y1 + y2`` pair.  With ``central=False``
    raw second moments are used, which coincide for zero-mean states and can
    only be larger otherwise.
    """
    if len(rho.space.subsystems) != 2 or any(s.kind != "fock" for s in rho.space.subsystems):
        raise ValueError("duan_witness needs a two-mode Fock space")
    vm, vp = joint_moments(rho, labels, phase)
    if central:
        q1, q2 = joint_quadratures(rho.space, labels, phase)
        vm -= expectation(rho, q1).real ** 2
        vp -= expectation(rho, q2).real ** 2
    return vm + vp
