"""Effective generators produced by continuous measurement plus linear feedback.

A channel measures a Hermitian observable ``X`` at measurement rate ``g_m``
(outcome resolution ``1/dX^2 = 4 g_m dt``) and applies ``H_fb = gain * X_m * Y``
for the same interval.  Averaged over outcomes, to first order in ``dt``::

    g_m D[X] + gain^2/(4 g_m) D[Y] - i (gain/2) [Y, X rho + rho X]

which is the same superoperator as a single jump plus a Hamiltonian::

    D[c],  c = sqrt(g_m) X - i gain/(2 sqrt(g_m)) Y,   H_eff = (gain/4) {X, Y}

Passive channels reuse decoherence already present in the base generator, so
their ``g_m D[X]`` part is not added again.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .lindblad import Dissipator, LindbladSpec, superoperator_matrix, unvec, vec
from .operators import (
    Operator,
    SpaceError,
    SpaceSignature,
    anticommutator,
    build_generator,
    fock_pair,
    zero,
)

CP_TOL = 1e-10
GH_NODES = 40


class NonCPError(ValueError):
    """Composition would need a negative dissipation rate."""

    def __init__(self, min_eigenvalue: float):
        super().__init__(
            f"combined dissipator is not completely positive (Kossakowski eigenvalue {min_eigenvalue:.3g})"
        )
        self.min_eigenvalue = min_eigenvalue


class BudgetError(ValueError):
    """A passive channel draws more measurement rate than the base decoherence provides."""


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class FeedbackChannel:
    X: Operator
    Y: Operator
    meas_rate: float
    gain: float
    mode: str = "probe"
    name: str = ""
    x_name: str = ""
    y_name: str = ""

    def __post_init__(self):
        if self.X.space != self.Y.space:
            raise SpaceError("X and Y of a channel must share a space")
        for label, op in (("X", self.X), ("Y", self.Y)):
            if not op.is_hermitian(rtol=1e-10):
                raise ValueError(f"channel {label} must be Hermitian")
        if not math.isfinite(self.meas_rate) or self.meas_rate < 0:
            raise ValueError(f"measurement rate must be >= 0, got {self.meas_rate}")
        if self.gain != 0 and self.meas_rate <= 0:
            raise ValueError("feedback with nonzero gain needs a positive measurement rate")
        if self.mode not in ("probe", "passive"):
            raise ValueError(f"mode must be 'probe' or 'passive', got {self.mode!r}")

    @property
    def space(self) -> SpaceSignature:
        return self.X.space

    def with_mode(self, mode: str) -> "FeedbackChannel":
        return FeedbackChannel(self.X, self.Y, self.meas_rate, self.gain, mode, self.name,
                               self.x_name, self.y_name)


@dataclass(frozen=True, eq=False)
class CrossTerm:
    """The superoperator ``rho -> -i coeff [Y, X rho + rho X]``."""

    coeff: float
    X: Operator
    Y: Operator

    def apply(self, rho: np.ndarray) -> np.ndarray:
        X, Y = self.X.mat, self.Y.mat
        s = X @ rho + rho @ X
        return -1j * self.coeff * (Y @ s - s @ Y)

    def matrix(self) -> np.ndarray:
        d = self.X.dim
        eye = np.eye(d)
        X, Y = self.X.mat, self.Y.mat
        # Y X rho + Y rho X - X rho Y - rho X Y
        sup = (np.kron(eye, Y @ X) + np.kron(X.T, Y) - np.kron(Y.T, X) - np.kron((X @ Y).T, eye))
        return -1j * self.coeff * sup


@dataclass(frozen=True, eq=False)
class GeneratorDelta:
    """Additive change to a generator.

    Dissipator rates here are signed: a passive channel's compact form carries
    ``-g_m D[X]`` to cancel the dephasing it does not add.  ``sandwich_term`` is
    only present in the expanded form.
    """

    space: SpaceSignature
    hamiltonian_term: Operator
    dissipator_terms: tuple[tuple[float, Operator], ...] = ()
    sandwich_term: CrossTerm | None = None
    # Kossakowski data (operators, Hermitian matrix) of the dissipative part
    kossakowski: tuple[tuple[Operator, ...], np.ndarray] | None = field(default=None, repr=False)

    def apply(self, rho) -> np.ndarray:
        m = rho.mat if hasattr(rho, "mat") else np.asarray(rho, dtype=complex)
        H = self.hamiltonian_term.mat
        out = -1j * (H @ m - m @ H)
        for rate, c in self.dissipator_terms:
            C = c.mat
            CdC = C.conj().T @ C
            out = out + rate * (C @ m @ C.conj().T - 0.5 * (CdC @ m + m @ CdC))
        if self.sandwich_term is not None:
            out = out + self.sandwich_term.apply(m)
        return out

    def superoperator(self) -> np.ndarray:
        d = self.space.dim
        eye = np.eye(d)
        H = self.hamiltonian_term.mat
        L = -1j * (np.kron(eye, H) - np.kron(H.T, eye))
        for rate, c in self.dissipator_terms:
            C = c.mat
            CdC = C.conj().T @ C
            L = L + rate * (np.kron(C.conj(), C) - 0.5 * np.kron(eye, CdC) - 0.5 * np.kron(CdC.T, eye))
        if self.sandwich_term is not None:
            L = L + self.sandwich_term.matrix()
        return L


def _jump_vector(ch: FeedbackChannel) -> np.ndarray:
    g = ch.meas_rate
    return np.array([math.sqrt(g), -1j * ch.gain / (2 * math.sqrt(g))])


def channel_generator(ch: FeedbackChannel, form: str = "compact") -> GeneratorDelta:
    """Generator contributed by one channel, in compact or expanded form."""
    space = ch.space
    g, lam = ch.meas_rate, ch.gain
    if g == 0:
        # no signal and (by the channel invariant) no feedback
        return GeneratorDelta(space, zero(space), (), None, ((ch.X, ch.Y), np.zeros((2, 2))))
    h_eff = (lam / 4) * anticommutator(ch.X, ch.Y)
    v = _jump_vector(ch)
    K = np.outer(v, v.conj())
    if ch.mode == "passive":
        K[0, 0] -= g
    koss = ((ch.X, ch.Y), K)
    if form == "compact":
        c = v[0] * ch.X + v[1] * ch.Y
        terms = [(1.0, c)]
        if ch.mode == "passive":
            terms.append((-g, ch.X))
        return GeneratorDelta(space, h_eff, tuple(terms), None, koss)
    if form == "expanded":
        terms = [(lam * lam / (4 * g), ch.Y)]
        if ch.mode == "probe":
            terms.insert(0, (g, ch.X))
        return GeneratorDelta(space, zero(space), tuple(terms), CrossTerm(lam / 2, ch.X, ch.Y), koss)
    raise ValueError(f"unknown form {form!r}")


# -- Kossakowski bookkeeping -------------------------------------------------

def _independent_subset(ops: Sequence[Operator], rtol: float = 1e-10):
    """Greedy maximal linearly independent subset and expansion coefficients.

    Returns (selected indices, C) with ops[j] = sum_m C[m, j] ops[selected[m]].
    """
    vecs = np.column_stack([vec(o.mat) for o in ops])
    scale = max(float(np.max(np.abs(vecs))), 1e-300)
    selected: list[int] = []
    for j in range(vecs.shape[1]):
        trial = selected + [j]
        s = np.linalg.svd(vecs[:, trial], compute_uv=False)
        if s[-1] > rtol * scale * math.sqrt(vecs.shape[0]):
            selected = trial
    B = vecs[:, selected]
    C, *_ = np.linalg.lstsq(B, vecs, rcond=None)
    if np.max(np.abs(B @ C - vecs), initial=0.0) > 1e-9 * scale:
        raise RuntimeError("operator expansion failed")
    return selected, C


def kossakowski_min_eigenvalue(ops: Sequence[Operator], K: np.ndarray) -> float:
    """Smallest eigenvalue of the Kossakowski matrix in an orthonormal traceless basis."""
    _, _, mu, _ = _orthonormal_kossakowski(ops, K)
    return float(mu.min()) if len(mu) else 0.0


def _orthonormal_kossakowski(ops: Sequence[Operator], K: np.ndarray):
    space = ops[0].space
    d = space.dim
    alphas = np.array([np.trace(o.mat) / d for o in ops])
    G = [o.mat - a * np.eye(d) for o, a in zip(ops, alphas)]
    # Hamiltonian correction from removing identity components
    hcorr = np.zeros((d, d), dtype=complex)
    n = len(ops)
    for j in range(n):
        for k in range(n):
            if K[j, k] != 0:
                hcorr += 0.5j * K[j, k] * (np.conj(alphas[k]) * G[j] - alphas[j] * G[k].conj().T)
    V = np.column_stack([vec(g) for g in G]) if G else np.zeros((d * d, 0))
    if V.size == 0 or np.max(np.abs(V)) == 0:
        return hcorr, [], np.zeros(0), np.zeros((0, 0))
    U, s, _ = np.linalg.svd(V, full_matrices=False)
    r = int(np.sum(s > 1e-12 * s[0]))
    U = U[:, :r]
    C = U.conj().T @ V
    Kp = C @ K @ C.conj().T
    Kp = (Kp + Kp.conj().T) / 2
    mu, W = np.linalg.eigh(Kp)
    basis = [unvec(U[:, m], d) for m in range(r)]
    return hcorr, basis, mu, W


def reduce_dissipators(space: SpaceSignature, ops: Sequence[Operator], K: np.ndarray,
                       names: Sequence[str] | None = None, tol: float = CP_TOL):
    """Turn a Kossakowski description into (Hamiltonian correction, dissipators).

    If the operators are linearly independent and ``K`` is diagonal in them,
    the dissipators are reported on the original (named) operators.  Otherwise
    the jumps are eigenvectors in an orthonormal traceless operator basis.
    Raises :class:`NonCPError` on a negative eigenvalue beyond ``tol``.
    """
    K = np.asarray(K, dtype=complex)
    names = list(names) if names is not None else [""] * len(ops)
    if not ops:
        return zero(space), []
    scale = max(1.0, float(np.max(np.abs(K))))

    hcorr, basis, mu, W = _orthonormal_kossakowski(ops, K)
    kscale = max(1.0, float(np.max(np.abs(mu)))) if len(mu) else 1.0
    if len(mu) and mu.min() < -tol * kscale:
        raise NonCPError(float(mu.min()))

    selected, C = _independent_subset(ops)
    Kd = C @ K @ C.conj().T
    off = Kd - np.diag(np.diag(Kd))
    diagonal = np.max(np.abs(off), initial=0.0) <= 1e-12 * scale
    if diagonal and np.all(np.diag(Kd).real >= -1e-14 * scale):
        diss = []
        for m, j in enumerate(selected):
            rate = float(Kd[m, m].real)
            if abs(rate) <= 1e-14 * scale:
                continue
            diss.append(Dissipator(max(rate, 0.0), ops[j], names[j]))
        return zero(space), diss

    diss = []
    for n in range(len(mu)):
        if mu[n] <= tol * kscale:
            continue
        L = sum(W[m, n] * basis[m] for m in range(len(basis)))
        diss.append(Dissipator(float(mu[n]), Operator(space, L), ""))
    hcorr = (hcorr + hcorr.conj().T) / 2
    return Operator(space, hcorr), diss


# -- passive budget ----------------------------------------------------------

@dataclass
class BudgetReport:
    ok: bool
    required: float
    available: float
    method: str  # "dephasing", "unravelling" or "none"
    detail: str = ""
    source: int | None = None  # index of the base dissipator used for unravelling
    fraction: float = 0.0  # share of that dissipator's signal consumed

    def __bool__(self):
        return self.ok


def _quadrature_fit(X: Operator, c: Operator):
    """Find complex z, real b with X = (z c + conj(z) c^dag)/2 + b I, if possible."""
    d = X.dim
    A = np.column_stack([vec(c.mat) / 2, vec(c.mat.conj().T) / 2, vec(np.eye(d))])
    # unknowns: z, w (= conj z), b, solved over the complex field then checked
    sol, *_ = np.linalg.lstsq(A, vec(X.mat), rcond=None)
    z, w, b = sol
    resid = np.linalg.norm(A @ sol - vec(X.mat)) / max(np.linalg.norm(X.mat), 1e-300)
    if resid > 1e-9 or abs(w - np.conj(z)) > 1e-9 * max(1.0, abs(z)):
        return None
    return complex(z)


def certify_budget(base: LindbladSpec, ch: FeedbackChannel) -> BudgetReport:
    """Does ``base`` already supply the measurement signal a passive channel uses?

    First test: ``base - g_m D[X]`` is still completely positive (the base
    contains enough dephasing in ``X``).  Second test: some base jump ``c``
    with rate ``r`` has ``X`` as a homodyne quadrature, ``X = (z c + h.c.)/2``
    up to identity, and monitoring it yields measurement rate ``r/|z|^2 >= g_m``.
    """
    need = ch.meas_rate
    if need == 0:
        return BudgetReport(True, 0.0, 0.0, "none", "no measurement required")
    ops = [c for _, c in base.dissipators] + [ch.X]
    rates = [r for r, _ in base.dissipators]
    K = np.diag(rates + [-need]).astype(complex)
    if base.dissipators:
        mu = kossakowski_min_eigenvalue(ops, K)
        scale = max(1.0, max(rates))
        if mu >= -CP_TOL * scale:
            return BudgetReport(True, need, need, "dephasing",
                                f"base minus {need:g} D[X] stays completely positive")
    best = BudgetReport(False, need, 0.0, "none", "no base decoherence carries X")
    for idx, (r, c) in enumerate(base.dissipators):
        if r <= 0:
            continue
        z = _quadrature_fit(ch.X, c)
        if z is None or abs(z) == 0:
            continue
        avail = r / abs(z) ** 2
        if avail > best.available:
            ok = need <= avail * (1 + 1e-12)
            best = BudgetReport(ok, need, avail, "unravelling",
                                f"X is a quadrature of base jump #{idx} (rate {r:g})",
                                source=idx, fraction=need / avail)
    return best


def _check_passive_budgets(base: LindbladSpec, channels: Sequence[FeedbackChannel]):
    usage: dict[int, float] = {}
    dephasing = []
    for ch in channels:
        if ch.mode != "passive" or ch.meas_rate == 0:
            continue
        rep = certify_budget(base, ch)
        if not rep.ok:
            raise BudgetError(
                f"passive channel {ch.name or ''} needs measurement rate {rep.required:g}, "
                f"base supplies {rep.available:g} ({rep.detail})"
            )
        if rep.method == "unravelling":
            usage[rep.source] = usage.get(rep.source, 0.0) + rep.fraction
        else:
            dephasing.append(ch)
    for idx, frac in usage.items():
        if frac > 1 + 1e-12:
            raise BudgetError(f"passive channels use {frac:.3g} of base jump #{idx}'s signal")
    if len(dephasing) > 1:
        ops = [c for _, c in base.dissipators] + [ch.X for ch in dephasing]
        K = np.diag([r for r, _ in base.dissipators] + [-ch.meas_rate for ch in dephasing])
        mu = kossakowski_min_eigenvalue(ops, K.astype(complex))
        if mu < -CP_TOL * max(1.0, float(np.max(np.abs(K)))):
            raise BudgetError("passive channels jointly exceed the base dephasing budget")


# -- composition ---------------------------------------------------------------

def compose_feedback(base: LindbladSpec, channels: Sequence[FeedbackChannel]) -> LindbladSpec:
    """Base generator plus the effective generators of all channels.

    Cross terms between channels are combined in the Kossakowski matrix before
    the result is diagonalized, so pairs of feedback lines whose imaginary
    cross terms cancel produce plain dephasing.  Never clips a negative rate.
    """
    if not channels:
        return base
    for ch in channels:
        if ch.space != base.space:
            raise SpaceError("channel and base generator live on different spaces")
    _check_passive_budgets(base, channels)

    ops: list[Operator] = []
    names: list[str] = []
    blocks: list[np.ndarray] = []
    for d in base.dissipators:
        ops.append(d.jump)
        names.append(d.name)
        blocks.append(np.array([[d.rate]], dtype=complex))
    H = base.hamiltonian
    for ch in channels:
        delta = channel_generator(ch)
        H = H + delta.hamiltonian_term
        (X, Y), K = delta.kossakowski
        ops.extend([X, Y])
        names.extend([ch.x_name, ch.y_name])
        blocks.append(K)
    K = sla.block_diag(*blocks) if blocks else np.zeros((0, 0))
    hcorr, diss = reduce_dissipators(base.space, ops, K, names)
    return LindbladSpec(base.space, H + hcorr, tuple(diss))


def generator_distance(a: LindbladSpec, b: LindbladSpec) -> float:
    """Relative Frobenius distance of two generators' superoperators."""
    La, Lb = superoperator_matrix(a), superoperator_matrix(b)
    return float(np.linalg.norm(La - Lb) / max(np.linalg.norm(La), np.linalg.norm(Lb), 1e-300))


# -- the two-mode squeezing preset ----------------------------------------------

def squeeze_channels(space: SpaceSignature, kappa: float, labels=("1", "2")) -> list[FeedbackChannel]:
    """Four heterodyne-fed passive channels (x1->x2, x2->x1, y1->y2, y2->y1).

    Each quadrature of the emitted light carries half the signal, i.e. a
    measurement rate of kappa/2 out of the 2*kappa loss channel; the gains
    are +2*kappa on the x lines and -2*kappa on the y lines.
    """
    l1, l2 = labels
    x1, y1 = build_generator(space, l1, "x"), build_generator(space, l1, "y")
    x2, y2 = build_generator(space, l2, "x"), build_generator(space, l2, "y")
    g = kappa / 2
    return [
        FeedbackChannel(x1, x2, g, 2 * kappa, "passive", f"x{l1}->x{l2}", f"x_{l1}", f"x_{l2}"),
        FeedbackChannel(x2, x1, g, 2 * kappa, "passive", f"x{l2}->x{l1}", f"x_{l2}", f"x_{l1}"),
        FeedbackChannel(y1, y2, g, -2 * kappa, "passive", f"y{l1}->y{l2}", f"y_{l1}", f"y_{l2}"),
        FeedbackChannel(y2, y1, g, -2 * kappa, "passive", f"y{l2}->y{l1}", f"y_{l2}", f"y_{l1}"),
    ]


def cavity_base(space: SpaceSignature, kappa: float, labels=("1", "2")) -> LindbladSpec:
    diss = [Dissipator(2 * kappa, build_generator(space, l, "a"), f"a_{l}") for l in labels]
    return LindbladSpec(space, zero(space), tuple(diss))


def squeeze_feedback(kappa: float, fock_dim: int) -> LindbladSpec:
    space = fock_pair(fock_dim)
    base = cavity_base(space, kappa)
    if kappa == 0:
        return base
    return compose_feedback(base, squeeze_channels(space, kappa))


def cross_channels(XA: Operator, XB: Operator, gamma: float, gain: float | None = None,
                   mode: str = "probe", names=("X_A", "X_B")) -> list[FeedbackChannel]:
    """The two-system setup: measure X_A and feed back on X_B, and vice versa.

    The default gain ``-2*gamma`` is the textbook choice.
    """
    lam = -2 * gamma if gain is None else gain
    return [
        FeedbackChannel(XA, XB, gamma, lam, mode, "A->B", names[0], names[1]),
        FeedbackChannel(XB, XA, gamma, lam, mode, "B->A", names[1], names[0]),
    ]


# -- discrete measurement/feedback oracle --------------------------------------

def _gh(n: int):
    s, w = np.polynomial.hermite.hermgauss(n)
    return s, w / math.sqrt(math.pi)


def _oracle_step(ch: FeedbackChannel, rho: np.ndarray, dt: float, nodes: int) -> np.ndarray:
    g, lam = ch.meas_rate, ch.gain
    xs, V = np.linalg.eigh(ch.X.mat)
    ys, W = np.linalg.eigh(ch.Y.mat)
    rt = V.conj().T @ rho @ V  # rho in the X eigenbasis
    P = W.conj().T @ V  # X basis -> Y basis
    s, w = _gh(nodes)
    d = len(xs)
    dy = ys[:, None] - ys[None, :]
    out = np.zeros((d, d), dtype=complex)
    for i in range(d):
        for j in range(d):
            if rt[i, j] == 0:
                continue
            decay = math.exp(-g * dt * (xs[i] - xs[j]) ** 2 / 2)
            xbar = (xs[i] + xs[j]) / 2
            # outcomes X_m = xbar + s / sqrt(2 g dt), Gaussian weight absorbed by GH
            xm = xbar + s / math.sqrt(2 * g * dt)
            phase = np.exp(-1j * lam * dt * np.multiply.outer(xm, dy))  # (nodes, d, d)
            avg = np.tensordot(w, phase, axes=1)
            outer = np.outer(P[:, i], P[:, j].conj())
            out += rt[i, j] * decay * avg * outer
    return W @ out @ W.conj().T


def discrete_map_oracle(ch: FeedbackChannel, rho, dt: float, nodes: int = GH_NODES,
                        check: bool = True) -> np.ndarray:
    """Average of ``U(X_m) M(X_m) rho M(X_m)^dag U(X_m)^dag`` over outcomes X_m.

    ``M(X_m)`` is the Gaussian Kraus operator ``(2 g dt/pi)^(1/4) exp(-g dt (X - X_m)^2)``
    and ``U(X_m) = exp(-i gain X_m Y dt)``.  The outcome integral is done by
    Gauss-Hermite quadrature, centered on each pair of X eigenvalues; with
    ``check`` the node count is doubled and the two results must agree to 1e-10.

    The measurement back-action is always applied, so for passive channels
    the result corresponds to the probe-mode generator.
    """
    m = rho.mat if hasattr(rho, "mat") else np.asarray(rho, dtype=complex)
    if ch.meas_rate == 0:
        return m.copy()
    out = _oracle_step(ch, m, dt, nodes)
    if check:
        out2 = _oracle_step(ch, m, dt, 2 * nodes)
        err = float(np.max(np.abs(out2 - out)))
        if err > 1e-10:
            raise QuadratureError(f"quadrature not converged: node doubling changed result by {err:.3g}")
    return out


def povm_outcome_moments(ch: FeedbackChannel, rho, dt: float, nodes: int = GH_NODES):
    """Mean and variance of the measurement outcome X_m, by quadrature."""
    m = rho.mat if hasattr(rho, "mat") else np.asarray(rho, dtype=complex)
    g = ch.meas_rate
    xs, V = np.linalg.eigh(ch.X.mat)
    p = np.real(np.diag(V.conj().T @ m @ V))
    s, w = _gh(nodes)
    # outcome density for eigenvalue x: sqrt(2 g dt/pi) exp(-2 g dt (x - X_m)^2)
    xm = xs[:, None] + s[None, :] / math.sqrt(2 * g * dt)
    total = float(np.sum(p[:, None] * w[None, :]))
    mean = float(np.sum(p[:, None] * w[None, :] * xm)) / total
    var = float(np.sum(p[:, None] * w[None, :] * (xm - mean) ** 2)) / total
    return mean, var


def oracle_generator(ch: FeedbackChannel, rho, dt: float, nodes: int = GH_NODES) -> np.ndarray:
    """Richardson-extrapolated ``(map(rho) - rho)/dt`` from steps dt, dt/2, dt/4."""
    m = rho.mat if hasattr(rho, "mat") else np.asarray(rho, dtype=complex)
    f = [(discrete_map_oracle(ch, m, h, nodes) - m) / h for h in (dt, dt / 2, dt / 4)]
    r1 = [2 * f[1] - f[0], 2 * f[2] - f[1]]
    return (4 * r1[1] - r1[0]) / 3
