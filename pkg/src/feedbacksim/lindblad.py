"""Lindblad generators, time integration, moments and steady states.

A generator is ``-i[H, rho] + sum_k r_k (c_k rho c_k^dag - {c_k^dag c_k, rho}/2)``.
Superoperators use column stacking: ``vec(A rho B) = (B^T kron A) vec(rho)``.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import cached_property, reduce
from typing import Mapping, Sequence, TextIO

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse import csgraph

from .operators import Operator, SpaceError, SpaceSignature, zero

SUPEROP_MAX_DIM = 100
# dense SVD is used for steady states up to this total dimension
DENSE_NULLSPACE_MAX_DIM = 20

TRACE_TOL = 1e-9
HERMITICITY_TOL = 1e-10
POSITIVITY_TOL = -1e-8


class IntegrationError(RuntimeError):
    """Non-finite or runaway state encountered during time integration."""

    def __init__(self, msg: str, step: int, t: float):
        super().__init__(f"{msg} (step {step}, t={t:.6g})")
        self.step = step
        self.t = t


class DegenerateSteadyState(RuntimeError):
    """The generator has more than one stationary state."""

    def __init__(self, multiplicity: int, basis: list[np.ndarray]):
        super().__init__(f"steady state is not unique: null space dimension {multiplicity}")
        self.multiplicity = multiplicity
        self.basis = basis


@dataclass(frozen=True)
class Dissipator:
    rate: float
    jump: Operator
    name: str = ""

    def __iter__(self):
        # allows ``for rate, c in spec.dissipators``
        yield self.rate
        yield self.jump


@dataclass(frozen=True, eq=False)
class LindbladSpec:
    space: SpaceSignature
    hamiltonian: Operator
    dissipators: tuple[Dissipator, ...] = ()

    def __post_init__(self):
        if self.hamiltonian.space != self.space:
            raise SpaceError("Hamiltonian lives on a different space")
        if not self.hamiltonian.is_hermitian(rtol=1e-10):
            raise ValueError(
                f"Hamiltonian is not Hermitian (defect {self.hamiltonian.hermiticity_defect():.3g})"
            )
        diss = []
        for d in self.dissipators:
            if not isinstance(d, Dissipator):
                rate, jump, *rest = d
                d = Dissipator(float(rate), jump, *(rest[:1]))
            if d.jump.space != self.space:
                raise SpaceError("jump operator lives on a different space")
            if not math.isfinite(d.rate) or d.rate < 0:
                raise ValueError(f"dissipator rate must be finite and >= 0, got {d.rate}")
            diss.append(d)
        object.__setattr__(self, "dissipators", tuple(diss))

    @classmethod
    def build(cls, hamiltonian: Operator | None = None, dissipators: Sequence = (),
              space: SpaceSignature | None = None) -> "LindbladSpec":
        if space is None:
            space = hamiltonian.space if hamiltonian is not None else dissipators[0][1].space
        if hamiltonian is None:
            hamiltonian = zero(space)
        return cls(space, hamiltonian, tuple(dissipators))

    @property
    def dim(self) -> int:
        return self.space.dim

    def plus(self, hamiltonian: Operator | None = None, dissipators: Sequence = ()) -> "LindbladSpec":
        h = self.hamiltonian if hamiltonian is None else self.hamiltonian + hamiltonian
        return LindbladSpec(self.space, h, self.dissipators + tuple(dissipators))

    @cached_property
    def _kernel(self):
        # non-Hermitian effective Hamiltonian absorbs the anticommutator terms
        H = self.hamiltonian.mat
        heff = H.astype(complex).copy()
        jumps, jumps_dag = [], []
        for rate, c in self.dissipators:
            if rate == 0:
                continue
            s = math.sqrt(rate)
            m = s * c.mat
            jumps.append(m)
            jumps_dag.append(m.conj().T)
            heff = heff - 0.5j * (m.conj().T @ m)
        if jumps:
            return heff, np.stack(jumps), np.stack(jumps_dag)
        return heff, None, None


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    space: SpaceSignature
    mat: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mat, dtype=complex)
        if m.shape != (self.space.dim,) * 2:
            raise SpaceError(f"density matrix shape {m.shape} does not match space dim {self.space.dim}")
        object.__setattr__(self, "mat", m)

    @classmethod
    def from_ket(cls, space: SpaceSignature, psi: np.ndarray) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(space, np.outer(psi, psi.conj()))

    def trace_error(self) -> float:
        return abs(np.trace(self.mat) - 1.0)

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.mat - self.mat.conj().T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh((self.mat + self.mat.conj().T) / 2)[0])

    def diagnostics(self) -> dict[str, float]:
        return {
            "trace_error": self.trace_error(),
            "hermiticity_defect": self.hermiticity_defect(),
            "min_eigenvalue": self.min_eigenvalue(),
        }

    def is_valid(self) -> bool:
        d = self.diagnostics()
        return (d["trace_error"] <= TRACE_TOL and d["hermiticity_defect"] <= HERMITICITY_TOL
                and d["min_eigenvalue"] >= POSITIVITY_TOL)

    def top_level_population(self) -> float:
        """Truncation metric: largest population on any Fock mode's top level."""
        return truncation_metric(self)


# -- states ----------------------------------------------------------------

def _local_states(space: SpaceSignature, locals_: Sequence[np.ndarray]) -> DensityMatrix:
    return DensityMatrix(space, reduce(np.kron, locals_))


def fock_state(space: SpaceSignature, occupations: Mapping[str, int] | None = None) -> DensityMatrix:
    """Product of number states (qubits: index 0 or 1); unspecified subsystems in 0."""
    occupations = dict(occupations or {})
    locs = []
    for s in space.subsystems:
        n = int(occupations.pop(s.label, 0))
        if not 0 <= n < s.dim:
            raise ValueError(f"occupation {n} out of range for {s.label!r} (dim {s.dim})")
        v = np.zeros(s.dim, dtype=complex)
        v[n] = 1
        locs.append(np.outer(v, v))
    if occupations:
        raise SpaceError(f"unknown labels {sorted(occupations)}")
    return _local_states(space, locs)


def vacuum(space: SpaceSignature) -> DensityMatrix:
    return fock_state(space)


def coherent_ket(dim: int, alpha: complex) -> np.ndarray:
    """Truncated coherent state, renormalized on the retained levels."""
    n = np.arange(dim)
    logfact = np.array([math.lgamma(k + 1) for k in n])
    amp = np.exp(-abs(alpha) ** 2 / 2 - 0.5 * logfact) * np.power(complex(alpha), n)
    return amp / np.linalg.norm(amp)


def bloch_state(r: Sequence[float]) -> np.ndarray:
    rx, ry, rz = r
    if rx * rx + ry * ry + rz * rz > 1 + 1e-12:
        raise ValueError(f"Bloch vector {tuple(r)} longer than 1")
    return 0.5 * np.array([[1 + rz, rx - 1j * ry], [rx + 1j * ry, 1 - rz]], dtype=complex)


def product_state(space: SpaceSignature, local: Mapping[str, np.ndarray]) -> DensityMatrix:
    """Tensor product of local density matrices (or kets); missing labels get |0><0|."""
    locs = []
    for s in space.subsystems:
        m = local.get(s.label)
        if m is None:
            m = np.zeros((s.dim, s.dim), dtype=complex)
            m[0, 0] = 1
        m = np.asarray(m, dtype=complex)
        if m.ndim == 1:
            m = np.outer(m, m.conj()) / np.vdot(m, m).real
        if m.shape != (s.dim, s.dim):
            raise SpaceError(f"local state for {s.label!r} has shape {m.shape}")
        locs.append(m)
    return _local_states(space, locs)


def truncation_metric(rho: DensityMatrix | np.ndarray, space: SpaceSignature | None = None) -> float:
    if isinstance(rho, DensityMatrix):
        space, mat = rho.space, rho.mat
    else:
        mat = rho
    pops = np.real(np.diag(mat)).reshape(space.dims)
    worst = 0.0
    for k, s in enumerate(space.subsystems):
        if s.kind != "fock":
            continue
        marginal = pops.sum(axis=tuple(j for j in range(len(space.dims)) if j != k))
        worst = max(worst, float(marginal[-1]))
    return worst


# -- generator ---------------------------------------------------------------

def _as_matrix(rho, space: SpaceSignature) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        if rho.space != space:
            raise SpaceError("state and generator live on different spaces")
        return rho.mat
    m = np.asarray(rho, dtype=complex)
    if m.shape != (space.dim, space.dim):
        raise SpaceError(f"state shape {m.shape} does not match space dim {space.dim}")
    return m


def apply_generator(spec: LindbladSpec, rho) -> np.ndarray:
    """d(rho)/dt for the given state (DensityMatrix or bare matrix)."""
    m = _as_matrix(rho, spec.space)
    heff, jumps, jumps_dag = spec._kernel
    out = -1j * (heff @ m - m @ heff.conj().T)
    if jumps is not None:
        out = out + (jumps @ m @ jumps_dag).sum(axis=0)
    return out


def superoperator_matrix(spec: LindbladSpec, max_dim: int = SUPEROP_MAX_DIM) -> np.ndarray:
    d = spec.dim
    if d > max_dim:
        raise ValueError(f"superoperator materialization is capped at dim {max_dim}, got {d}")
    heff, jumps, _ = spec._kernel
    eye = np.eye(d)
    L = -1j * np.kron(eye, heff) + 1j * np.kron(heff.conj(), eye)
    if jumps is not None:
        for c in jumps:
            L = L + np.kron(c.conj(), c)
    return L


def sparse_superoperator(spec: LindbladSpec) -> sp.csr_matrix:
    """Same as :func:`superoperator_matrix` but sparse, for larger spaces."""
    d = spec.dim
    heff, jumps, _ = spec._kernel
    eye = sp.identity(d, format="csr", dtype=complex)
    h = sp.csr_matrix(heff)
    L = -1j * sp.kron(eye, h) + 1j * sp.kron(h.conj(), eye)
    if jumps is not None:
        for c in jumps:
            cs = sp.csr_matrix(c)
            L = L + sp.kron(cs.conj(), cs)
    return sp.csr_matrix(L)


def vec(m: np.ndarray) -> np.ndarray:
    return np.asarray(m).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int) -> np.ndarray:
    return np.asarray(v).reshape((d, d), order="F")


def expectation(rho, M: Operator) -> complex:
    if isinstance(rho, DensityMatrix) and rho.space != M.space:
        raise SpaceError("state and observable live on different spaces")
    m = rho.mat if isinstance(rho, DensityMatrix) else np.asarray(rho)
    # trace(M rho) without forming the product
    return complex(np.sum(M.mat * m.T))


# -- time evolution ----------------------------------------------------------

@dataclass
class Trajectory:
    times: np.ndarray
    observables: dict[str, np.ndarray] = field(default_factory=dict)
    states: list[DensityMatrix] | None = None
    dt: float = 0.0
    halvings: int = 0
    diagnostics: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        for name, v in self.observables.items():
            if len(v) != len(self.times):
                raise ValueError(f"observable {name!r} has {len(v)} samples, expected {len(self.times)}")
        if self.states is not None and len(self.states) != len(self.times):
            raise ValueError("states and times differ in length")

    def final_state(self) -> DensityMatrix:
        if not self.states:
            raise ValueError("trajectory did not keep states")
        return self.states[-1]

    def to_csv(self, out: TextIO | None = None, columns: Sequence[str] | None = None) -> str:
        cols = list(self.observables) if columns is None else list(columns)
        buf = out if out is not None else io.StringIO()
        buf.write(",".join(["t", *cols]) + "\n")
        for i, t in enumerate(self.times):
            row = [format_float(t)] + [format_float(self.observables[c][i]) for c in cols]
            buf.write(",".join(row) + "\n")
        return buf.getvalue() if out is None else ""


def format_float(x: float) -> str:
    return format(float(x), ".17g")


GROWTH_LIMIT = 1e6


def _rk4_run(spec, rho0, n_steps, dt, record_every, observables, keep_states):
    gen = lambda r: apply_generator(spec, r)
    rho = rho0.copy()
    space = spec.space
    times = [0.0]
    obs = {k: [expectation(rho, M)] for k, M in observables.items()}
    states = [DensityMatrix(space, rho.copy())] if keep_states else None
    trace_drift = abs(np.trace(rho) - np.trace(rho0))
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    min_eig = float(np.linalg.eigvalsh((rho + rho.conj().T) / 2)[0])
    trunc = truncation_metric(rho, space)
    norm0 = max(float(np.abs(np.linalg.eigvalsh((rho + rho.conj().T) / 2)).sum()), 1e-300)
    for step in range(1, n_steps + 1):
        # overflow is caught by the finiteness check below
        with np.errstate(over="ignore", invalid="ignore"):
            k1 = gen(rho)
            k2 = gen(rho + 0.5 * dt * k1)
            k3 = gen(rho + 0.5 * dt * k2)
            k4 = gen(rho + dt * k3)
            rho = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(rho)):
            raise IntegrationError("non-finite density matrix entries", step, step * dt)
        # a trace-preserving CP flow keeps the norm at most the initial trace norm
        norm = float(np.linalg.norm(rho))
        if norm > GROWTH_LIMIT * norm0:
            raise IntegrationError(f"state norm grew to {norm:.3g} (step too large?)", step, step * dt)
        trace_drift = max(trace_drift, abs(np.trace(rho) - np.trace(rho0)))
        if step % record_every == 0:
            times.append(step * dt)
            for k, M in observables.items():
                obs[k].append(expectation(rho, M))
            if keep_states:
                states.append(DensityMatrix(space, rho.copy()))
            herm = max(herm, float(np.max(np.abs(rho - rho.conj().T))))
            min_eig = min(min_eig, float(np.linalg.eigvalsh((rho + rho.conj().T) / 2)[0]))
            trunc = max(trunc, truncation_metric(rho, space))
    diag = {
        "trace_drift": float(trace_drift),
        "hermiticity_defect": herm,
        "min_eigenvalue": min_eig,
        "truncation_metric": trunc,
    }
    return np.array(times), {k: np.array(v) for k, v in obs.items()}, states, rho, diag


def evolve(spec: LindbladSpec, rho0, t_final: float, dt: float,
           observables: Mapping[str, Operator] | None = None, stride: int = 1,
           rtol: float = 1e-8, max_halvings: int = 6, converge: bool = True,
           keep_states: bool = True) -> Trajectory:
    """Fixed-step RK4 with step halving until the recorded output settles.

    ``dt`` is rounded down so that ``t_final`` is an integer number of steps.
    Output is recorded every ``stride`` steps of the *initial* ``dt`` so the
    time grid does not change between halvings.  Convergence compares the
    recorded observables (or the recorded states when no observables are
    given) between successive halvings; no renormalization is ever applied.
    """
    if dt <= 0 or t_final <= 0:
        raise ValueError("dt and t_final must be positive")
    rho0m = _as_matrix(rho0, spec.space).copy()
    n0 = max(1, int(math.ceil(t_final / dt - 1e-9)))
    dt0 = t_final / n0
    observables = dict(observables or {})
    need_states = keep_states or not observables

    prev = None
    for h in range(max_halvings + 1):
        factor = 2 ** h
        times, obs, states, final, diag = _rk4_run(
            spec, rho0m, n0 * factor, dt0 / factor, stride * factor, observables, need_states
        )
        if not converge:
            break
        if prev is not None:
            change = _relative_change(prev, (obs, states, final))
            diag["convergence_change"] = change
            if change < rtol:
                break
        prev = (obs, states, final)
    else:
        diag["converged"] = 0.0
    diag.setdefault("converged", 1.0)
    real_obs = {}
    for k, v in obs.items():
        diag[f"max_imag[{k}]"] = float(np.max(np.abs(v.imag))) if len(v) else 0.0
        real_obs[k] = v.real.copy()
    return Trajectory(times, real_obs, states if keep_states else None,
                      dt=dt0 / factor, halvings=h, diagnostics=diag)


def _relative_change(prev, cur) -> float:
    """Largest relative change of the recorded output, the final state always included."""
    pobs, pstates, pfinal = prev
    cobs, cstates, cfinal = cur
    changes = [float(np.max(np.abs(cfinal - pfinal))) / max(float(np.max(np.abs(cfinal))), 1e-300)]
    if pobs:
        num = max(float(np.max(np.abs(cobs[k] - pobs[k]))) for k in cobs)
        den = max(float(np.max(np.abs(cobs[k]))) for k in cobs)
    else:
        num = max(float(np.max(np.abs(a.mat - b.mat))) for a, b in zip(cstates, pstates))
        den = max(float(np.max(np.abs(a.mat))) for a in cstates)
    changes.append(num / max(den, 1e-300))
    return max(changes)


# -- steady state ------------------------------------------------------------

def steady_state(spec: LindbladSpec, method: str = "auto", tol: float = 1e-8,
                 null_rtol: float = 1e-9) -> DensityMatrix:
    """Stationary state of the generator.

    ``method``: ``"svd"`` (dense null space, reports degeneracy),
    ``"sparse"`` (bordered sparse LU solve with the trace condition), or
    ``"evolve"`` (long-time integration).  ``"auto"`` uses SVD for small
    spaces and the sparse solve otherwise.
    """
    d = spec.dim
    if method == "auto":
        method = "svd" if d <= DENSE_NULLSPACE_MAX_DIM else "sparse"
    if method == "svd":
        rho = _steady_svd(spec, null_rtol)
    elif method == "sparse":
        rho = _steady_sparse(spec)
    elif method == "evolve":
        rho = _steady_evolve(spec)
    else:
        raise ValueError(f"unknown steady-state method {method!r}")
    resid = float(np.linalg.norm(apply_generator(spec, rho)))
    if resid > tol:
        raise RuntimeError(f"steady state residual {resid:.3g} exceeds {tol:.1g}")
    return DensityMatrix(spec.space, rho)


def _normalize(m: np.ndarray) -> np.ndarray:
    m = m / np.trace(m)
    return (m + m.conj().T) / 2


def _steady_svd(spec: LindbladSpec, null_rtol: float) -> np.ndarray:
    L = superoperator_matrix(spec)
    d = spec.dim
    _, s, vh = np.linalg.svd(L)
    scale = max(float(s[0]), 1e-300)
    null = np.flatnonzero(s <= null_rtol * scale)
    if len(null) == 0:
        null = np.array([len(s) - 1])
    if len(null) > 1:
        basis = [unvec(vh[k].conj(), d) for k in null]
        raise DegenerateSteadyState(len(null), basis)
    return _normalize(unvec(vh[null[0]].conj(), d))


def _steady_sparse(spec: LindbladSpec) -> np.ndarray:
    """Bordered sparse solve on the elements reachable from |0><0|.

    The reachable set is closed under the generator, so evolution from
    |0><0| never leaves it and a unique stationary state lies inside.
    Symmetries (e.g. a conserved n1 - n2) make it far smaller than d^2.
    Entries below 1e-14 of the largest are treated as round-off.
    """
    d = spec.dim
    L = sparse_superoperator(spec).tocsc()
    # composed jumps mix operators whose cross terms cancel only to round-off;
    # drop those entries so the sparsity pattern shows the true couplings
    mag = np.abs(L.data)
    L.data[mag <= 1e-14 * mag.max(initial=0.0)] = 0
    L.eliminate_zeros()
    pattern = L.T.tocsr()
    pattern.data = np.ones_like(pattern.data, dtype=float)
    keep = np.sort(csgraph.breadth_first_order(pattern, 0, directed=True,
                                               return_predecessors=False))
    Lk = L[keep][:, keep].tolil()
    # the (0,0) element equation is redundant given trace conservation
    Lk[0, :] = vec(np.eye(d))[keep].reshape(1, -1)
    b = np.zeros(len(keep), dtype=complex)
    b[0] = 1.0
    try:
        lu = spla.splu(sp.csc_matrix(Lk), permc_spec="COLAMD")
    except RuntimeError as exc:
        if d <= SUPEROP_MAX_DIM:
            return _steady_svd(spec, 1e-9)
        raise DegenerateSteadyState(-1, []) from exc
    x = np.zeros(d * d, dtype=complex)
    x[keep] = lu.solve(b)
    return _normalize(unvec(x, d))


def _steady_evolve(spec: LindbladSpec, dt: float | None = None, tol: float = 1e-10,
                   chunk: float = 1.0, max_time: float = 1e4) -> np.ndarray:
    d = spec.dim
    rho = np.eye(d, dtype=complex) / d
    if dt is None:
        # crude RK4 stability bound from the generator norm
        heff, jumps, _ = spec._kernel
        scale = np.linalg.norm(heff, 2) * 2
        if jumps is not None:
            scale += sum(np.linalg.norm(c, 2) ** 2 for c in jumps)
        dt = 1.0 / max(scale, 1e-12)
    t = 0.0
    while t < max_time:
        traj = evolve(spec, rho, chunk, dt, converge=False, keep_states=True)
        rho = traj.final_state().mat
        t += chunk
        if np.linalg.norm(apply_generator(spec, rho)) <= tol:
            return _normalize(rho)
    raise RuntimeError("steady state not reached by long-time evolution")


def spectrum(spec: LindbladSpec) -> np.ndarray:
    return np.linalg.eigvals(superoperator_matrix(spec))
