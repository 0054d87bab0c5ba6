"""Network instances and the SINR -> rate -> completion time chain."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np


class ParseError(ValueError):
    """Raised when an input document is malformed; ``field`` names the culprit."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


def db_to_linear(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def _frozen(a, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _arrays_equal(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return np.array_equal(a, b)


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    """M transmitter/receiver pairs sharing one band.

    ``G[i, j]`` is the power gain from transmitter j to receiver i. All
    quantities are linear. Tmax, when given, caps each completion time.
    """

    G: np.ndarray
    N: np.ndarray
    Pmax: np.ndarray
    L: np.ndarray
    Tmax: Optional[np.ndarray] = None

    def __post_init__(self):
        G = _frozen(self.G, 2, "G")
        M = G.shape[0]
        if G.shape != (M, M) or M < 1:
            raise ValueError(f"G must be square, got shape {G.shape}")
        object.__setattr__(self, "G", G)
        for name in ("N", "Pmax", "L"):
            v = _frozen(getattr(self, name), 1, name)
            if v.shape != (M,):
                raise ValueError(f"{name} must have length {M}, got {v.shape[0]}")
            if not np.all(v > 0) or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} entries must be finite and > 0")
            object.__setattr__(self, name, v)
        if np.any(G < 0) or not np.all(np.isfinite(G)):
            raise ValueError("G entries must be finite and >= 0")
        if np.any(np.diag(G) <= 0):
            raise ValueError("direct gains G[i, i] must be > 0")
        if self.Tmax is not None:
            Tmax = _frozen(self.Tmax, 1, "Tmax")
            if Tmax.shape != (M,):
                raise ValueError(f"Tmax must have length {M}, got {Tmax.shape[0]}")
            best = self.interference_free_times()
            bad = np.flatnonzero(~(Tmax > best))
            if bad.size:
                i = int(bad[0])
                raise ValueError(
                    f"Tmax[{i}] = {Tmax[i]:g} is not achievable even without "
                    f"interference (needs > {best[i]:g})"
                )
            object.__setattr__(self, "Tmax", Tmax)

    @property
    def M(self) -> int:
        return self.G.shape[0]

    def interference_free_times(self) -> np.ndarray:
        """Completion times each user gets alone at full power."""
        return self.L / np.log2(1.0 + np.diag(self.G) * self.Pmax / self.N)

    def replace(self, **changes) -> "NetworkInstance":
        fields = dict(G=self.G, N=self.N, Pmax=self.Pmax, L=self.L, Tmax=self.Tmax)
        fields.update(changes)
        return NetworkInstance(**fields)

    def __eq__(self, other):
        if not isinstance(other, NetworkInstance):
            return NotImplemented
        return all(
            _arrays_equal(getattr(self, k), getattr(other, k))
            for k in ("G", "N", "Pmax", "L", "Tmax")
        )

    __hash__ = None

    def to_dict(self) -> dict:
        d = {
            "units": "linear",
            "M": self.M,
            "G": self.G.tolist(),
            "N": self.N.tolist(),
            "Pmax": self.Pmax.tolist(),
            "L": self.L.tolist(),
        }
        if self.Tmax is not None:
            d["Tmax"] = self.Tmax.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkInstance":
        return cls(**instance_fields_from_dict(d))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "NetworkInstance":
        return cls.from_dict(json.loads(text))


def read_quantity(d: dict, key: str, *, required: bool = True, ndim: int = 1):
    """Read ``key`` (linear) or ``key_dB`` from ``d`` as a float array."""
    has_lin, has_db = key in d, f"{key}_dB" in d
    if has_lin and has_db:
        raise ParseError(key, f"give either '{key}' or '{key}_dB', not both")
    if not (has_lin or has_db):
        if required:
            raise ParseError(key, "missing")
        return None
    name = key if has_lin else f"{key}_dB"
    try:
        arr = np.array(d[name], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(name, f"not numeric ({exc})") from None
    if arr.ndim != ndim:
        raise ParseError(name, f"expected {ndim}-D array, got shape {arr.shape}")
    return db_to_linear(arr) if has_db else arr


def instance_fields_from_dict(d: dict) -> dict:
    if not isinstance(d, dict):
        raise ParseError("<root>", "expected a JSON object")
    units = d.get("units", "linear")
    if units != "linear":
        raise ParseError("units", f"unsupported units tag {units!r}; use *_dB keys for dB")
    fields: dict[str, Any] = {
        "G": read_quantity(d, "G", ndim=2),
        "N": read_quantity(d, "N"),
        "Pmax": read_quantity(d, "Pmax"),
        "L": read_quantity(d, "L"),
        "Tmax": read_quantity(d, "Tmax", required=False),
    }
    M = fields["G"].shape[0]
    if "M" in d and d["M"] != M:
        raise ParseError("M", f"declared M={d['M']} but G is {M}x{M}")
    for key in ("N", "Pmax", "L", "Tmax"):
        v = fields[key]
        if v is not None and v.shape != (M,):
            raise ParseError(key, f"expected length {M}, got {v.shape[0]}")
    return fields


@dataclass(frozen=True, eq=False)
class PowerAllocation:
    P: np.ndarray

    def __post_init__(self):
        P = _frozen(self.P, 1, "P")
        if np.any(P < 0):
            raise ValueError("powers must be >= 0")
        object.__setattr__(self, "P", P)

    def check(self, inst: NetworkInstance, rtol: float = 1e-12) -> None:
        if self.P.shape != (inst.M,):
            raise ValueError(f"expected {inst.M} powers, got {self.P.shape[0]}")
        if np.any(self.P > inst.Pmax * (1 + rtol)):
            raise ValueError("power exceeds Pmax")


@dataclass(frozen=True, eq=False)
class LinkState:
    S: np.ndarray
    R: np.ndarray
    T: np.ndarray


def _as_powers(P) -> np.ndarray:
    if isinstance(P, PowerAllocation):
        return P.P
    return np.asarray(P, dtype=float)


def sinr(inst: NetworkInstance, P) -> np.ndarray:
    P = _as_powers(P)
    if P.shape != (inst.M,):
        raise ValueError(f"expected {inst.M} powers, got shape {P.shape}")
    received = inst.G * P[None, :]
    signal = np.diag(received)
    interference = received.sum(axis=1) - signal
    return signal / (inst.N + interference)


def rate(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if np.any(S < 0):
        raise ValueError("SINR must be nonnegative")
    return np.log1p(S) / np.log(2.0)


def completion_time(L, R) -> np.ndarray:
    """T = L/R, with +inf for users whose rate is zero."""
    L = np.asarray(L, dtype=float)
    R = np.asarray(R, dtype=float)
    T = np.full(np.broadcast(L, R).shape, np.inf)
    pos = R > 0
    np.divide(np.broadcast_to(L, T.shape), R, out=T, where=pos)
    return T


def link_state(inst: NetworkInstance, P) -> LinkState:
    S = sinr(inst, P)
    R = rate(S)
    return LinkState(S=S, R=R, T=completion_time(inst.L, R))
