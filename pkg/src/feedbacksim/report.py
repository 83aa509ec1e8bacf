"""Human-readable names for composed generators.

Composition diagonalizes a Kossakowski matrix, so its jumps come out as
normalized eigen-operators.  Here we try to rewrite the dissipative part as a
nonnegative combination of named jumps (``a_1``, ``adag_1``, channel
observables, ...) and the Hamiltonian as a short sum of recognized bilinear
forms, with coefficients shown as multiples of config parameters when possible.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import nnls

from .expr import evaluate_expr
from .lindblad import LindbladSpec, vec
from .operators import Operator, SpaceSignature

FIT_TOL = 1e-9


@dataclass(frozen=True)
class NamedDissipator:
    name: str  # expression text of the jump
    rate: float


def _traceless(mats):
    d = mats[0].shape[0]
    alphas = np.array([np.trace(m) / d for m in mats])
    return alphas, [m - a * np.eye(d) for m, a in zip(mats, alphas)]


def _identity_shift(mats, rates):
    """Hamiltonian generated by the identity parts of the jumps: sum r (i/2)(a* G - a G^dag)."""
    alphas, G = _traceless(mats)
    d = mats[0].shape[0]
    H = np.zeros((d, d), dtype=complex)
    for r, a, g in zip(rates, alphas, G):
        H += 0.5j * r * (np.conj(a) * g - a * g.conj().T)
    return H


def express_dissipators(spec: LindbladSpec, candidates: Sequence[tuple[str, Operator]],
                        tol: float = FIT_TOL):
    """Nonnegative rates on named jumps reproducing ``spec``'s dissipative part.

    Returns ``(named dissipators, Hamiltonian)`` where the Hamiltonian absorbs
    the difference in identity components, or ``None`` when no fit exists.
    """
    if not spec.dissipators:
        return [], spec.hamiltonian
    if not candidates:
        return None
    jm = [d.jump.mat for d in spec.dissipators]
    rates = [d.rate for d in spec.dissipators]
    cm = [op.mat for _, op in candidates]
    _, G = _traceless(jm + cm)
    V = np.column_stack([vec(g) for g in G])
    U, s, _ = np.linalg.svd(V, full_matrices=False)
    if s[0] == 0:
        return None
    U = U[:, s > 1e-12 * s[0]]
    C = U.conj().T @ V
    n = len(jm)
    T = sum(r * np.outer(C[:, i], C[:, i].conj()) for i, r in enumerate(rates))
    A = [np.outer(C[:, n + k], C[:, n + k].conj()) for k in range(len(cm))]
    flat = lambda M: np.concatenate([M.real.ravel(), M.imag.ravel()])
    Amat = np.column_stack([flat(a) for a in A])
    sol, _ = nnls(Amat, flat(T), maxiter=50 * Amat.shape[1])
    resid = np.linalg.norm(Amat @ sol - flat(T))
    if resid > tol * max(1.0, np.linalg.norm(flat(T))):
        return None
    scale = max(float(sol.max(initial=0.0)), 1e-300)
    named = [NamedDissipator(name, float(r)) for (name, _), r in zip(candidates, sol)
             if r > 1e-12 * scale]
    H = spec.hamiltonian.mat + _identity_shift(jm, rates) - _identity_shift(cm, list(sol))
    H = (H + H.conj().T) / 2
    return named, Operator(spec.space, H)


def jump_candidates(space: SpaceSignature, extra: Sequence[str] = ()) -> list[list[str]]:
    """Candidate jump expressions in stages: ladder/Pauli jumps first, then extras."""
    local = []
    for s in space.subsystems:
        if s.kind == "fock":
            local += [f"a_{s.label}", f"adag_{s.label}"]
        else:
            local += [f"sz_{s.label}", f"sx_{s.label}", f"sy_{s.label}"]
    seen = set()
    extra = [e for e in extra if not (e in seen or seen.add(e))]
    stages = [local]
    if extra:
        stages.append(list(extra) + [e for e in local if e not in extra])
    return stages


def hamiltonian_candidates(space: SpaceSignature, extra: Sequence[str] = ()) -> list[str]:
    """Hermitian forms tried when naming a Hamiltonian, in display preference order."""
    out = list(extra)
    subs = space.subsystems
    for s, t in itertools.combinations(subs, 2):
        i, j = s.label, t.label
        if s.kind == t.kind == "fock":
            out += [f"a_{i}*a_{j} + adag_{i}*adag_{j}", f"i*(adag_{i}*adag_{j} - a_{i}*a_{j})",
                    f"a_{i}*adag_{j} + adag_{i}*a_{j}", f"i*(adag_{i}*a_{j} - a_{i}*adag_{j})"]
        qi = ["x", "y"] if s.kind == "fock" else ["sx", "sy", "sz"]
        qj = ["x", "y"] if t.kind == "fock" else ["sx", "sy", "sz"]
        out += [f"{p}_{i}*{q}_{j}" for p in qi for q in qj]
    for s in subs:
        out += [f"n_{s.label}", f"x_{s.label}", f"y_{s.label}"] if s.kind == "fock" else \
            [f"sz_{s.label}", f"sx_{s.label}", f"sy_{s.label}"]
    seen = set()
    return [e for e in out if not (e in seen or seen.add(e))]


def match_hamiltonian(H: Operator, candidates: Sequence[str], tol: float = FIT_TOL,
                      max_terms: int = 4):
    """Express ``H`` as a real combination of candidate forms.

    Single-term matches are preferred; otherwise a least-squares fit over a
    linearly independent subset, keeping at most ``max_terms`` nonzero terms.
    Returns a list of (coefficient, expression) or ``None``.
    """
    norm = np.linalg.norm(H.mat)
    if norm == 0:
        return []
    mats = []
    for e in candidates:
        try:
            mats.append((e, evaluate_expr(e, H.space).mat))
        except Exception:
            continue
    target = vec(H.mat)
    for e, m in mats:
        v = vec(m)
        vv = np.vdot(v, v).real
        if vv == 0:
            continue
        c = np.vdot(v, target) / vv
        if abs(c.imag) <= tol * abs(c) and np.linalg.norm(target - c.real * v) <= tol * norm:
            return [(float(c.real), e)]
    # independent subset, greedy in preference order
    basis, names = [], []
    for e, m in mats:
        v = vec(m)
        trial = basis + [v]
        s = np.linalg.svd(np.column_stack(trial), compute_uv=False)
        if s[-1] > 1e-10 * s[0]:
            basis, names = trial, names + [e]
    if not basis:
        return None
    B = np.column_stack(basis)
    Br = np.concatenate([B.real, B.imag])
    tr = np.concatenate([target.real, target.imag])
    coef, *_ = np.linalg.lstsq(Br, tr, rcond=None)
    if np.linalg.norm(Br @ coef - tr) > tol * norm:
        return None
    big = max(abs(coef).max(), 1e-300)
    terms = [(float(c), n) for c, n in zip(coef, names) if abs(c) > 1e-12 * big]
    if len(terms) > max_terms:
        return None
    return terms


def format_coefficient(value: float, params: Mapping[str, float] | None = None) -> str:
    """``value`` as ``p*name`` for a small rational ``p`` when a parameter fits, else a float."""
    if value == 0:
        return "0"
    return param_expression(value, params) or _short(value)


def param_expression(value: float, params: Mapping[str, float] | None = None) -> str | None:
    """Simplest ``p*name`` equal to ``value`` to 1e-10, or None."""
    if value == 0:
        return None
    found = []
    for name, pv in (params or {}).items():
        try:
            pv = float(pv)
        except (TypeError, ValueError):
            continue
        if pv == 0:
            continue
        ratio = value / pv
        frac = Fraction(ratio).limit_denominator(16)
        if abs(float(frac) - ratio) <= 1e-10 * max(1.0, abs(ratio)):
            found.append((abs(frac.numerator) + frac.denominator, name, frac))
    if found:
        # simplest multiple wins; parameter order breaks ties
        _, name, frac = min(found, key=lambda t: t[0])
        if frac == 1:
            return name
        if frac == -1:
            return f"-{name}"
        if frac.denominator == 1:
            return f"{frac.numerator}*{name}"
        return f"{frac.numerator}/{frac.denominator}*{name}"
    return None


def _short(x: float) -> str:
    return f"{x:.12g}"


def format_terms(terms, params=None) -> str:
    parts = []
    for c, e in terms:
        parts.append(f"{format_coefficient(c, params)}*({e})")
    return " + ".join(parts) if parts else "0"


def describe_spec(spec: LindbladSpec, params: Mapping[str, float] | None = None,
                  extra_jumps: Sequence[str] = (), extra_terms: Sequence[str] = ()) -> list[str]:
    """Report lines for ``spec``: Hamiltonian form, nonzero pattern, dissipators."""
    lines = [f"space = {spec.space.describe()}"]
    named = None
    for stage in jump_candidates(spec.space, extra_jumps):
        cands = []
        for e in stage:
            try:
                cands.append((e, evaluate_expr(e, spec.space)))
            except Exception:
                continue
        named = express_dissipators(spec, cands)
        if named is not None:
            break
    H = named[1] if named is not None else spec.hamiltonian
    terms = match_hamiltonian(H, hamiltonian_candidates(spec.space, extra_terms))
    if terms is None:
        lines.append("H = <no recognized form>")
    else:
        lines.append(f"H = {format_terms(terms, params)}")
    nz = int(np.sum(np.abs(H.mat) > 1e-12 * max(1.0, np.abs(H.mat).max())))
    lines.append(f"H.nonzero = {nz}/{H.dim * H.dim}")
    lines.append(f"H.norm = {np.linalg.norm(H.mat, 2):.12g}")
    if named is not None:
        for nd in named[0]:
            lines.append(f"D[{nd.name}] rate = {format_coefficient(nd.rate, params)}")
    else:
        for k, d in enumerate(spec.dissipators):
            label = d.name or f"L{k}"
            lines.append(f"D[{label}] rate = {format_coefficient(d.rate, params)}")
    lines.append(f"dissipators = {len(named[0]) if named is not None else len(spec.dissipators)}")
    return lines
