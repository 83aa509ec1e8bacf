"""Scenario files: a TOML document declaring space, generator, channels and a run.

Example::

    hamiltonian = "0"

    [[space.subsystem]]
    label = "1"
    kind = "fock"
    dim = 8

    [params]
    kappa = 1.0

    [[dissipator]]
    rate = "2*kappa"
    jump = "a_1"

    [[channel]]
    X = "x_1"
    Y = "x_2"
    meas_rate = "kappa/2"
    gain = "2*kappa"
    mode = "passive"

    [initial]
    kind = "vacuum"          # vacuum | fock | coherent | bloch | product

    [run]
    t_final = 2.0
    dt = 0.01
    stride = 10

    [run.observables]
    n1 = "n_1"

Numbers may be given as literals or as expression strings over ``[params]``.
Operator strings use the grammar of :mod:`feedbacksim.expr`.  A Hamiltonian or
jump can also be given as a matrix of ``[re, im]`` pairs (``hamiltonian_matrix``,
``jump_matrix``); the serializer falls back to that when no name is known.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
import tomli
import tomli_w

from .expr import ExprError, _eval, evaluate_expr, parse_expr
from .feedback import FeedbackChannel
from .lindblad import (
    DensityMatrix,
    Dissipator,
    LindbladSpec,
    bloch_state,
    coherent_ket,
    fock_state,
    product_state,
)
from .operators import Operator, SpaceError, SpaceSignature, Subsystem


class ConfigError(ValueError):
    def __init__(self, msg: str, line: int | None = None, col: int | None = None):
        self.line, self.col = line, col
        where = f"line {line}, column {col}: " if line is not None else ""
        super().__init__(where + msg)


Number = float | str


@dataclass
class DissipatorDecl:
    rate: Number
    jump: str | None = None
    name: str = ""
    matrix: list | None = None


@dataclass
class ChannelDecl:
    X: str
    Y: str
    meas_rate: Number
    gain: Number
    mode: str = "probe"
    name: str = ""


@dataclass
class InitialDecl:
    kind: str = "vacuum"
    data: dict = field(default_factory=dict)


@dataclass
class RunDecl:
    t_final: Number = 1.0
    dt: Number = 0.01
    stride: int = 1
    observables: dict[str, str] = field(default_factory=dict)
    out: str | None = None


@dataclass
class ScenarioConfig:
    subsystems: list[tuple[str, str, int]]
    params: dict[str, float] = field(default_factory=dict)
    hamiltonian: str = "0"
    hamiltonian_matrix: list | None = None
    dissipators: list[DissipatorDecl] = field(default_factory=list)
    channels: list[ChannelDecl] = field(default_factory=list)
    initial: InitialDecl = field(default_factory=InitialDecl)
    run: RunDecl = field(default_factory=RunDecl)
    source: str = ""  # raw text, used to locate errors

    def with_fock_dim(self, dim: int) -> "ScenarioConfig":
        subs = [(l, k, dim if k == "fock" else d) for l, k, d in self.subsystems]
        return ScenarioConfig(**{**self.__dict__, "subsystems": subs})


@dataclass
class Scenario:
    """A config evaluated on concrete matrices."""

    config: ScenarioConfig
    space: SpaceSignature
    base: LindbladSpec
    channels: list[FeedbackChannel]
    initial: DensityMatrix
    observables: dict[str, Operator]
    t_final: float
    dt: float
    stride: int

    def channel_names(self) -> list[str]:
        names = []
        for ch in self.channels:
            names += [ch.x_name, ch.y_name]
        return [n for n in names if n]

    def base_jump_names(self) -> list[str]:
        return [d.name for d in self.base.dissipators if d.name]


# -- locating errors --------------------------------------------------------------

def _locate(text: str, needle: str, offset: int = 0):
    if not text or not needle:
        return None, None
    idx = text.find(needle)
    if idx < 0:
        return None, None
    idx += offset
    line = text.count("\n", 0, idx) + 1
    col = idx - (text.rfind("\n", 0, idx) + 1) + 1
    return line, col


def _fail(cfg_text: str, msg: str, needle: str = "", offset: int = 0):
    line, col = _locate(cfg_text, needle, offset)
    raise ConfigError(msg, line, col)


# -- parsing ----------------------------------------------------------------------

def _require(d: Mapping, key: str, where: str, text: str):
    if key not in d:
        _fail(text, f"missing key {key!r} in {where}", f"[{where}")
    return d[key]


def _number(v, text: str, key: str) -> Number:
    if isinstance(v, bool) or not isinstance(v, (int, float, str)):
        _fail(text, f"{key} must be a number or an expression string", key)
    return float(v) if not isinstance(v, str) else v


def loads(text: str) -> ScenarioConfig:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        msg = str(exc).split(" (at ")[0]
        raise ConfigError(msg, getattr(exc, "lineno", None), getattr(exc, "colno", None)) from None
    known = {"hamiltonian", "hamiltonian_matrix", "space", "params", "dissipator", "channel",
             "initial", "run"}
    for k in doc:
        if k not in known:
            _fail(text, f"unknown top-level key {k!r}", k)

    space = doc.get("space")
    if not isinstance(space, dict) or "subsystem" not in space:
        _fail(text, "missing [[space.subsystem]] declarations", "space")
    subs = []
    for s in space["subsystem"]:
        label = str(_require(s, "label", "space.subsystem", text))
        kind = _require(s, "kind", "space.subsystem", text)
        dim = s.get("dim", 2 if kind == "qubit" else None)
        if dim is None:
            _fail(text, f"fock subsystem {label!r} needs dim", f'"{label}"')
        subs.append((label, kind, int(dim)))

    params = {}
    for k, v in doc.get("params", {}).items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            _fail(text, f"parameter {k!r} must be a number", k)
        params[k] = float(v)

    diss = []
    for d in doc.get("dissipator", []):
        rate = _number(_require(d, "rate", "dissipator", text), text, "rate")
        if "jump" not in d and "jump_matrix" not in d:
            _fail(text, "dissipator needs jump or jump_matrix", "[[dissipator]]")
        diss.append(DissipatorDecl(rate, d.get("jump"), str(d.get("name", d.get("jump", "")) or ""),
                                   d.get("jump_matrix")))

    chans = []
    for c in doc.get("channel", []):
        chans.append(ChannelDecl(
            str(_require(c, "X", "channel", text)), str(_require(c, "Y", "channel", text)),
            _number(_require(c, "meas_rate", "channel", text), text, "meas_rate"),
            _number(_require(c, "gain", "channel", text), text, "gain"),
            str(c.get("mode", "probe")), str(c.get("name", "")),
        ))

    init = doc.get("initial", {"kind": "vacuum"})
    initial = InitialDecl(str(init.get("kind", "vacuum")), {k: v for k, v in init.items() if k != "kind"})

    r = doc.get("run", {})
    run = RunDecl(
        _number(r.get("t_final", 1.0), text, "t_final"),
        _number(r.get("dt", 0.01), text, "dt"),
        int(r.get("stride", 1)),
        {str(k): str(v) for k, v in r.get("observables", {}).items()},
        r.get("out"),
    )
    return ScenarioConfig(subs, params, str(doc.get("hamiltonian", "0")), doc.get("hamiltonian_matrix"),
                          diss, chans, initial, run, text)


def load(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())


# -- building ---------------------------------------------------------------------

def _scalar(v: Number, params: Mapping[str, float], text: str, what: str) -> float:
    if not isinstance(v, str):
        return float(v)
    try:
        val = _eval(parse_expr(v), None, params)
    except ExprError as exc:
        _fail(text, f"{what}: {exc}", f'"{v}"', 1 + (exc.pos or 0))
    except (AttributeError, TypeError):
        _fail(text, f"{what} must be a scalar expression", f'"{v}"', 1)
    val = complex(val)
    if abs(val.imag) > 1e-14 * max(1.0, abs(val.real)):
        _fail(text, f"{what} must be real, got {val}", f'"{v}"', 1)
    return val.real


def _operator(expr: str, space: SpaceSignature, params, text: str, what: str) -> Operator:
    try:
        return evaluate_expr(expr, space, params)
    except ExprError as exc:
        _fail(text, f"{what}: {exc}", f'"{expr}"', 1 + (exc.pos or 0))


def _from_pairs(m, space: SpaceSignature, text: str, what: str) -> Operator:
    try:
        arr = np.asarray(m, dtype=float)
        mat = arr[..., 0] + 1j * arr[..., 1]
        return Operator(space, mat)
    except Exception as exc:
        _fail(text, f"{what}: bad matrix ({exc})", what)


INITIAL_KEYS = {"vacuum": set(), "fock": {"occupations"}, "coherent": {"amplitudes"},
                "bloch": {"vectors"}, "product": {"local"}}


def _initial(decl: InitialDecl, space: SpaceSignature, text: str) -> DensityMatrix:
    k, data = decl.kind, decl.data
    for key in data:
        if k in INITIAL_KEYS and key not in INITIAL_KEYS[k]:
            _fail(text, f"unknown key {key!r} for initial state kind {k!r}", key)
    try:
        if k == "vacuum":
            return fock_state(space)
        if k == "fock":
            return fock_state(space, {str(a): int(b) for a, b in data.get("occupations", {}).items()})
        if k == "coherent":
            loc = {}
            for lab, amp in data.get("amplitudes", {}).items():
                re, im = (amp, 0.0) if isinstance(amp, (int, float)) else amp
                loc[str(lab)] = coherent_ket(space.subsystem(str(lab)).dim, complex(re, im))
            return product_state(space, loc)
        if k == "bloch":
            loc = {str(lab): bloch_state(v) for lab, v in data.get("vectors", {}).items()}
            return product_state(space, loc)
        if k == "product":
            loc = {}
            for lab, spec in data.get("local", {}).items():
                sub = space.subsystem(str(lab))
                if "fock" in spec:
                    v = np.zeros(sub.dim, dtype=complex)
                    v[int(spec["fock"])] = 1
                    loc[str(lab)] = v
                elif "coherent" in spec:
                    re, im = spec["coherent"]
                    loc[str(lab)] = coherent_ket(sub.dim, complex(re, im))
                elif "bloch" in spec:
                    loc[str(lab)] = bloch_state(spec["bloch"])
                else:
                    raise ValueError(f"local state for {lab!r} needs fock, coherent or bloch")
            return product_state(space, loc)
    except (ValueError, SpaceError, IndexError) as exc:
        _fail(text, f"initial state: {exc}", "[initial")
    _fail(text, f"unknown initial state kind {k!r}", f'"{k}"')


def build(cfg: ScenarioConfig) -> Scenario:
    text = cfg.source
    try:
        space = SpaceSignature(tuple(Subsystem(l, k, d) for l, k, d in cfg.subsystems))
    except (SpaceError, ValueError) as exc:
        _fail(text, f"space: {exc}", "[[space.subsystem]]")
    p = cfg.params
    if cfg.hamiltonian_matrix is not None:
        H = _from_pairs(cfg.hamiltonian_matrix, space, text, "hamiltonian_matrix")
    else:
        H = _operator(cfg.hamiltonian, space, p, text, "hamiltonian")
    if not H.is_hermitian(rtol=1e-10):
        _fail(text, "hamiltonian is not Hermitian", "hamiltonian")
    H = Operator(space, (H.mat + H.mat.conj().T) / 2)
    diss = []
    for d in cfg.dissipators:
        rate = _scalar(d.rate, p, text, "dissipator rate")
        if rate < 0:
            _fail(text, f"negative dissipator rate {rate:g}", str(d.rate))
        if d.matrix is not None:
            jump = _from_pairs(d.matrix, space, text, "jump_matrix")
        else:
            jump = _operator(d.jump, space, p, text, "dissipator jump")
        diss.append(Dissipator(rate, jump, d.name or (d.jump or "")))
    base = LindbladSpec(space, H, tuple(diss))
    chans = []
    for c in cfg.channels:
        X = _operator(c.X, space, p, text, "channel X")
        Y = _operator(c.Y, space, p, text, "channel Y")
        try:
            chans.append(FeedbackChannel(X, Y, _scalar(c.meas_rate, p, text, "meas_rate"),
                                         _scalar(c.gain, p, text, "gain"), c.mode,
                                         c.name or f"{c.X}->{c.Y}", c.X, c.Y))
        except (ValueError, SpaceError) as exc:
            if isinstance(exc, ConfigError):
                raise
            _fail(text, f"channel: {exc}", f'"{c.X}"')
    obs = {name: _operator(e, space, p, text, f"observable {name}") for name, e in cfg.run.observables.items()}
    t_final = _scalar(cfg.run.t_final, p, text, "t_final")
    dt = _scalar(cfg.run.dt, p, text, "dt")
    if not dt > 0:
        _fail(text, "dt must be positive", "dt")
    if not t_final > 0:
        _fail(text, "t_final must be positive", "t_final")
    if cfg.run.stride < 1:
        _fail(text, "stride must be at least 1", "stride")
    return Scenario(cfg, space, base, chans, _initial(cfg.initial, space, text), obs,
                    t_final, dt, cfg.run.stride)


# -- serializing ------------------------------------------------------------------

def _pairs(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m)]


def to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    doc: dict[str, Any] = {}
    if cfg.hamiltonian_matrix is not None:
        doc["hamiltonian_matrix"] = cfg.hamiltonian_matrix
    else:
        doc["hamiltonian"] = cfg.hamiltonian
    doc["space"] = {"subsystem": [{"label": l, "kind": k, "dim": d} for l, k, d in cfg.subsystems]}
    if cfg.params:
        doc["params"] = dict(cfg.params)
    if cfg.dissipators:
        out = []
        for d in cfg.dissipators:
            e: dict[str, Any] = {"rate": d.rate}
            if d.matrix is not None:
                e["jump_matrix"] = d.matrix
            else:
                e["jump"] = d.jump
            if d.name and d.name != d.jump:
                e["name"] = d.name
            out.append(e)
        doc["dissipator"] = out
    if cfg.channels:
        doc["channel"] = [{"X": c.X, "Y": c.Y, "meas_rate": c.meas_rate, "gain": c.gain,
                           "mode": c.mode, **({"name": c.name} if c.name else {})} for c in cfg.channels]
    doc["initial"] = {"kind": cfg.initial.kind, **cfg.initial.data}
    run: dict[str, Any] = {"t_final": cfg.run.t_final, "dt": cfg.run.dt, "stride": cfg.run.stride}
    if cfg.run.out:
        run["out"] = cfg.run.out
    if cfg.run.observables:
        run["observables"] = dict(cfg.run.observables)
    doc["run"] = run
    return doc


def dumps(cfg: ScenarioConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def effective_config(cfg: ScenarioConfig, spec: LindbladSpec, named=None, hamiltonian_terms=None) -> ScenarioConfig:
    """A channel-free config whose base generator is ``spec``.

    ``named`` is the output of :func:`feedbacksim.report.express_dissipators`
    and ``hamiltonian_terms`` that of :func:`feedbacksim.report.match_hamiltonian`;
    when either is missing the corresponding part is written as a matrix.
    """
    from .report import param_expression

    # parameter multiples are written symbolically: readable, and exact on re-derive
    sym = lambda v: param_expression(float(v), cfg.params) or float(v)
    if named is not None:
        diss = [DissipatorDecl(sym(nd.rate), nd.name) for nd in named[0]]
        H = named[1]
    else:
        diss = [DissipatorDecl(float(d.rate), None, d.name or f"L{k}", _pairs(d.jump.mat))
                for k, d in enumerate(spec.dissipators)]
        H = spec.hamiltonian
    if hamiltonian_terms is not None:
        ham = " + ".join(f"({sym(c)!s})*({e})" for c, e in hamiltonian_terms) or "0"
        ham_m = None
    else:
        ham, ham_m = "0", _pairs(H.mat)
    return ScenarioConfig(list(cfg.subsystems), dict(cfg.params), ham, ham_m, diss, [],
                          cfg.initial, cfg.run, "")
