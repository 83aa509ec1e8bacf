"""Dense operators on tensor products of qubits and truncated Fock modes.

Conventions: hbar = 1, and quadratures are normalized so that ``a = x + i y``,
i.e. ``x = (a + a^dag)/2`` and ``y = (a - a^dag)/(2i)``.  The vacuum then has
``<x^2> = <y^2> = 1/4``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_RTOL = 1e-12

FOCK_GENERATORS = ("annihilate", "create", "x", "y", "number", "identity")
QUBIT_GENERATORS = ("pauli_x", "pauli_y", "pauli_z", "identity")

# short names used in expressions and reports
GENERATOR_ALIASES = {
    "a": "annihilate",
    "adag": "create",
    "n": "number",
    "sx": "pauli_x",
    "sy": "pauli_y",
    "sz": "pauli_z",
    "id": "identity",
}


class SpaceError(ValueError):
    """Operands live on different spaces, or a label/generator is invalid."""


@dataclass(frozen=True)
class Subsystem:
    label: str
    kind: str  # "qubit" or "fock"
    dim: int

    def __post_init__(self):
        if self.kind == "qubit":
            if self.dim != 2:
                raise SpaceError(f"qubit {self.label!r} must have dim 2, got {self.dim}")
        elif self.kind == "fock":
            if self.dim < 2:
                raise SpaceError(f"fock mode {self.label!r} needs dim >= 2, got {self.dim}")
        else:
            raise SpaceError(f"unknown subsystem kind {self.kind!r}")


@dataclass(frozen=True)
class SpaceSignature:
    subsystems: tuple[Subsystem, ...]

    def __post_init__(self):
        labels = [s.label for s in self.subsystems]
        if len(set(labels)) != len(labels):
            raise SpaceError(f"duplicate subsystem labels in {labels}")
        if not labels:
            raise SpaceError("a space needs at least one subsystem")

    @classmethod
    def of(cls, *specs: tuple[str, str, int] | tuple[str, str]) -> "SpaceSignature":
        """``SpaceSignature.of(("1", "fock", 8), ("A", "qubit"))``."""
        subs = []
        for spec in specs:
            if len(spec) == 2:
                label, kind = spec
                dim = 2
            else:
                label, kind, dim = spec
            subs.append(Subsystem(str(label), kind, int(dim)))
        return cls(tuple(subs))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.subsystems)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(s.label for s in self.subsystems)

    def index(self, label: str) -> int:
        for i, s in enumerate(self.subsystems):
            if s.label == label:
                return i
        raise SpaceError(f"unknown subsystem label {label!r}; have {list(self.labels)}")

    def subsystem(self, label: str) -> Subsystem:
        return self.subsystems[self.index(label)]

    def describe(self) -> str:
        return " x ".join(f"{s.label}:{s.kind}[{s.dim}]" for s in self.subsystems)


@dataclass(frozen=True, eq=False)
class Operator:
    """A dense square matrix tagged with the space it acts on."""

    space: SpaceSignature
    mat: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mat, dtype=complex)
        d = self.space.dim
        if m.shape != (d, d):
            raise SpaceError(f"matrix shape {m.shape} does not match space dim {d}")
        object.__setattr__(self, "mat", m)

    def _check(self, other: "Operator"):
        if other.space != self.space:
            raise SpaceError(
                f"space mismatch: {self.space.describe()} vs {other.space.describe()}"
            )

    def __add__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.space, self.mat + other.mat)
        return Operator(self.space, self.mat + other * np.eye(self.space.dim))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1) * other

    def __rsub__(self, other):
        return (-1) * self + other

    def __neg__(self):
        return Operator(self.space, -self.mat)

    def __mul__(self, other):
        if isinstance(other, Operator):
            return self @ other
        return Operator(self.space, self.mat * other)

    def __rmul__(self, other):
        return Operator(self.space, other * self.mat)

    def __truediv__(self, other):
        return Operator(self.space, self.mat / other)

    def __matmul__(self, other: "Operator"):
        self._check(other)
        return Operator(self.space, self.mat @ other.mat)

    def __pow__(self, n: int):
        return Operator(self.space, np.linalg.matrix_power(self.mat, n))

    def dag(self) -> "Operator":
        return Operator(self.space, self.mat.conj().T)

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.mat - self.mat.conj().T)))

    def is_hermitian(self, rtol: float = HERMITIAN_RTOL) -> bool:
        scale = float(np.max(np.abs(self.mat))) if self.mat.size else 0.0
        return self.hermiticity_defect() <= rtol * max(scale, 1e-300)

    def allclose(self, other: "Operator", atol: float = 1e-12) -> bool:
        self._check(other)
        return bool(np.max(np.abs(self.mat - other.mat), initial=0.0) <= atol)

    def interior(self, labels: Iterable[str] | None = None) -> np.ndarray:
        """Restrict to basis states with no Fock mode at its top level.

        Identities involving ``a`` and ``a^dag`` only hold on this block.
        """
        keep = interior_mask(self.space, labels)
        return self.mat[np.ix_(keep, keep)]

    @property
    def dim(self) -> int:
        return self.space.dim


def interior_mask(space: SpaceSignature, labels: Iterable[str] | None = None) -> np.ndarray:
    """Boolean mask over the product basis excluding top Fock levels."""
    wanted = set(space.labels if labels is None else labels)
    masks = []
    for s in space.subsystems:
        m = np.ones(s.dim, dtype=bool)
        if s.kind == "fock" and s.label in wanted:
            m[-1] = False
        masks.append(m)
    return reduce(lambda p, q: np.kron(p, q).astype(bool), masks)


def _local_matrix(sub: Subsystem, name: str) -> np.ndarray:
    name = GENERATOR_ALIASES.get(name, name)
    d = sub.dim
    if name == "identity":
        return np.eye(d, dtype=complex)
    if sub.kind == "fock":
        a = np.diag(np.sqrt(np.arange(1, d)), k=1).astype(complex)
        if name == "annihilate":
            return a
        if name == "create":
            return a.conj().T
        if name == "x":
            return (a + a.conj().T) / 2
        if name == "y":
            return (a - a.conj().T) / 2j
        if name == "number":
            return np.diag(np.arange(d)).astype(complex)
        raise SpaceError(f"generator {name!r} is not valid on fock mode {sub.label!r}")
    paulis = {
        "pauli_x": np.array([[0, 1], [1, 0]], dtype=complex),
        "pauli_y": np.array([[0, -1j], [1j, 0]], dtype=complex),
        "pauli_z": np.array([[1, 0], [0, -1]], dtype=complex),
    }
    if name in paulis:
        return paulis[name]
    raise SpaceError(f"generator {name!r} is not valid on qubit {sub.label!r}")


def embed(space: SpaceSignature, label: str, local: np.ndarray) -> Operator:
    """Tensor a local matrix into the full space (identity elsewhere)."""
    k = space.index(label)
    factors = [np.eye(s.dim, dtype=complex) for s in space.subsystems]
    if local.shape != (space.subsystems[k].dim,) * 2:
        raise SpaceError(f"local matrix shape {local.shape} does not fit {label!r}")
    factors[k] = np.asarray(local, dtype=complex)
    return Operator(space, reduce(np.kron, factors))


def build_generator(space: SpaceSignature, label: str, name: str) -> Operator:
    sub = space.subsystem(label)
    return embed(space, label, _local_matrix(sub, name))


def identity(space: SpaceSignature) -> Operator:
    return Operator(space, np.eye(space.dim, dtype=complex))


def zero(space: SpaceSignature) -> Operator:
    return Operator(space, np.zeros((space.dim, space.dim), dtype=complex))


def commutator(A: Operator, B: Operator) -> Operator:
    A._check(B)
    return Operator(A.space, A.mat @ B.mat - B.mat @ A.mat)


def anticommutator(A: Operator, B: Operator) -> Operator:
    A._check(B)
    return Operator(A.space, A.mat @ B.mat + B.mat @ A.mat)


def tensor(*ops: Operator) -> Operator:
    """Kronecker product of operators on disjoint spaces, in order."""
    subs: list[Subsystem] = []
    for op in ops:
        subs.extend(op.space.subsystems)
    return Operator(SpaceSignature(tuple(subs)), reduce(np.kron, [op.mat for op in ops]))


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * (z + z.conj().T) / 2


def single_space(dim: int, label: str = "s") -> SpaceSignature:
    """A one-subsystem space of arbitrary dimension, for tests on random operators.

    Modeled as a Fock mode so any ``dim >= 2`` is allowed.
    """
    return SpaceSignature((Subsystem(label, "fock", dim),))


def fock_pair(dim: int, labels: Sequence[str] = ("1", "2")) -> SpaceSignature:
    return SpaceSignature(tuple(Subsystem(l, "fock", dim) for l in labels))
