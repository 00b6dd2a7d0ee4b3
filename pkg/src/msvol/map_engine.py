"""Bivariate Markov additive process ``((xi, eta), J)``.

Between switches of ``J`` the pair ``(xi, eta)`` moves like the active
regime's Levy piece; at a switch ``i -> j`` it jumps by an independent draw
from the switch law ``F^{ij}``.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .levy_drivers import JumpLaw
from .markov_env import GeneratorMatrix, RegimePath


class InfiniteMomentError(ArithmeticError):
    """A switch-jump moment needed by a formula is infinite."""


@dataclass(frozen=True)
class BivariateLaw:
    """Law of a switch jump ``(dxi, deta)`` with independent coordinates.

    Point masses in both coordinates give a degenerate (deterministic) pair.
    """

    xi: JumpLaw = JumpLaw.zero()
    eta: JumpLaw = JumpLaw.zero()

    @classmethod
    def point_mass(cls, x: float, y: float) -> BivariateLaw:
        return cls(JumpLaw.point(x), JumpLaw.point(y))

    @property
    def is_point_mass(self) -> bool:
        return self.xi.kind == "point" and self.eta.kind == "point"

    def moment(self, k: float, n: int) -> float:
        """``E[exp(-k dxi) deta**n]``."""
        return self.xi.mgf(-k) * self.eta.moment(n)

    def to_json(self) -> dict:
        if self.xi.is_zero and self.eta.is_zero:
            return {"type": "zero"}
        if self.is_point_mass:
            return {"type": "point", "x": self.xi.a, "y": self.eta.a}
        return {"type": "product", "xi": self.xi.to_json(), "eta": self.eta.to_json()}


ZERO_LAW = BivariateLaw()


@dataclass(frozen=True)
class SwitchJumpLaw:
    """Switch laws keyed by ordered pairs ``(i, j)``, ``i != j`` (0-based).

    Pairs not listed jump by ``(0, 0)``.
    """

    n_states: int
    table: Mapping[tuple[int, int], BivariateLaw] = field(default_factory=dict)

    def __post_init__(self):
        for (i, j) in self.table:
            if i == j or not (0 <= i < self.n_states and 0 <= j < self.n_states):
                raise ValueError(f"invalid switch pair {(i + 1, j + 1)}")

    def __getitem__(self, pair: tuple[int, int]) -> BivariateLaw:
        return self.table.get(pair, ZERO_LAW)

    @classmethod
    def zero(cls, n_states: int) -> SwitchJumpLaw:
        return cls(n_states, {})

    @classmethod
    def uniform(cls, n_states: int, law: BivariateLaw) -> SwitchJumpLaw:
        """The same law on every ordered pair."""
        return cls(n_states, {(i, j): law for i in range(n_states) for j in range(n_states) if i != j})

    def check_support(self, xi_nonnegative: bool) -> None:
        """``deta >= 0`` always; ``dxi >= 0`` too when ``xi_nonnegative``."""
        for (i, j), law in self.table.items():
            if law.eta.support_min < 0:
                raise ValueError(f"switch law {i + 1}->{j + 1}: eta jumps must be >= 0")
            if xi_nonnegative and law.xi.support_min < 0:
                raise ValueError(f"switch law {i + 1}->{j + 1}: xi jumps must be >= 0")

    @property
    def has_eta_jumps(self) -> bool:
        return any(not law.eta.is_zero for law in self.table.values())

    @property
    def has_xi_jumps(self) -> bool:
        return any(not law.xi.is_zero for law in self.table.values())

    def kernel_table(self) -> np.ndarray:
        out = np.zeros((self.n_states, self.n_states, 2, 3))
        out[..., 0] = 1.0  # point mass at 0
        for (i, j), law in self.table.items():
            out[i, j, 0] = law.xi.code
            out[i, j, 1] = law.eta.code
        return out

    def to_json(self) -> dict:
        return {f"{i + 1}->{j + 1}": law.to_json() for (i, j), law in sorted(self.table.items())}


class MomentMatrices(NamedTuple):
    k: float
    n: int
    matrix: np.ndarray


def f_matrix(laws: SwitchJumpLaw, k: float, n: int, q: GeneratorMatrix | None = None) -> MomentMatrices:
    """Matrix of ``int exp(-k x) y**n dF^{ij}(x, y)``.

    The diagonal is 0, as are pairs with ``q_ij = 0`` when ``q`` is given.
    """
    size = laws.n_states
    out = np.zeros((size, size))
    for i in range(size):
        for j in range(size):
            if i == j or (q is not None and q.q[i, j] == 0):
                continue
            val = laws[i, j].moment(k, n)
            if not math.isfinite(val):
                raise InfiniteMomentError(f"int exp(-{k} x) y^{n} dF is infinite for pair {i + 1}->{j + 1}")
            out[i, j] = val
    return MomentMatrices(k, n, out)


def switch_xi_mean(laws: SwitchJumpLaw) -> np.ndarray:
    """Matrix of ``E[dxi^{ij}]`` (diagonal 0)."""
    size = laws.n_states
    out = np.zeros((size, size))
    for (i, j), law in laws.table.items():
        out[i, j] = law.xi.moment(1)
    return out


def matrix_exponent(psi_diag, q: GeneratorMatrix, laws: SwitchJumpLaw, w: float) -> np.ndarray:
    """``diag(psi) + Q^T o (E[exp(w dxi^{ij})])^T`` with a unit diagonal in the mgf matrix."""
    psi_diag = np.asarray(psi_diag, dtype=float)
    size = q.n_states
    mgf = np.ones((size, size))
    for i in range(size):
        for j in range(size):
            if i == j or q.q[i, j] == 0:
                continue
            val = laws[i, j].xi.mgf(w)
            if not math.isfinite(val):
                raise InfiniteMomentError(f"E[exp({w} dxi)] is infinite for pair {i + 1}->{j + 1}")
            mgf[i, j] = val
    return np.diag(psi_diag) + (q.q * mgf).T


def _zero_map(y: np.ndarray) -> np.ndarray:
    return np.zeros_like(y)


@dataclass(frozen=True)
class LevyPiece:
    """Regime Levy piece: drifts plus a compound-Poisson stream.

    A raw jump ``y`` moves ``(xi, eta)`` by ``(xi_jump(y), eta_jump(y))``.
    """

    xi_drift: float
    eta_drift: float
    jump_rate: float = 0.0
    jump_law: JumpLaw = JumpLaw.zero()
    xi_jump: Callable[[np.ndarray], np.ndarray] = _zero_map
    eta_jump: Callable[[np.ndarray], np.ndarray] = _zero_map


DRIVER, SWITCH = 0, 1


@dataclass(frozen=True, eq=False)
class MapPath:
    """One sampled path of the MAP, stored as a merged event log.

    ``raw`` holds the raw driver jump for driver events (NaN for switches);
    ``dxi``/``deta`` hold the increments of ``xi``/``eta`` at every event.
    """

    regime: RegimePath
    time: np.ndarray
    kind: np.ndarray
    state_from: np.ndarray
    state_to: np.ndarray
    raw: np.ndarray
    dxi: np.ndarray
    deta: np.ndarray
    xi_drift: np.ndarray
    eta_drift: np.ndarray

    @property
    def horizon(self) -> float:
        return self.regime.horizon

    def _drift_integral(self, rates: np.ndarray, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        edges = np.concatenate(([0.0], self.regime.times))
        per_seg = rates[self.regime.states]
        seg_len = np.diff(np.concatenate((edges, [np.inf])))
        cum = np.concatenate(([0.0], np.cumsum(per_seg[:-1] * seg_len[:-1])))
        idx = np.searchsorted(self.regime.times, t, side="right")
        return cum[idx] + per_seg[idx] * (t - edges[idx])

    def _jump_sum(self, values: np.ndarray, mask: np.ndarray, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        cum = np.concatenate(([0.0], np.cumsum(np.where(mask, values, 0.0))))
        return cum[np.searchsorted(self.time, t, side="right")]

    def xi_at(self, t) -> np.ndarray:
        return self.xi1_at(t) + self.xi2_at(t)

    def eta_at(self, t) -> np.ndarray:
        return self._drift_integral(self.eta_drift, t) + self._jump_sum(self.deta, np.ones_like(self.kind, bool), t)

    def xi1_at(self, t) -> np.ndarray:
        """Levy (between-switch) part of ``xi``."""
        return self._drift_integral(self.xi_drift, t) + self._jump_sum(self.dxi, self.kind == DRIVER, t)

    def xi2_at(self, t) -> np.ndarray:
        """Switch-jump part of ``xi``."""
        return self._jump_sum(self.dxi, self.kind == SWITCH, t)

    def kernel_events(self):
        a = np.where(self.kind == DRIVER, self.raw, self.dxi)
        b = np.where(self.kind == SWITCH, self.deta, 0.0)
        return self.time, self.kind, self.state_to, a, b


def kernel_driver_table(pieces: Sequence[LevyPiece]):
    rates = np.array([p.jump_rate if not p.jump_law.is_zero else 0.0 for p in pieces], dtype=float)
    laws = np.array([p.jump_law.code for p in pieces], dtype=float).reshape(len(pieces), 3)
    return rates, laws


def sample_map_path(
    pieces: Sequence[LevyPiece],
    q: GeneratorMatrix,
    laws: SwitchJumpLaw,
    j0: int,
    horizon: float,
    rng: np.random.Generator,
) -> MapPath:
    """Sample the regime path, then each regime interval's Levy piece, then the switch jumps."""
    if not horizon > 0:
        raise ValueError("horizon must be > 0")
    if len(pieces) != q.n_states or laws.n_states != q.n_states:
        raise ValueError("need one Levy piece and switch table entry per state")
    rates, drv = kernel_driver_table(pieces)
    t, kind, s_from, s_to, a, b = _kernels.sample_map(
        rng, q.exit_rates, q.jump_cdf(), int(j0), float(horizon), rates, drv, laws.kernel_table()
    )
    is_sw = kind == SWITCH
    sw_states = np.concatenate(([j0], s_to[is_sw])).astype(np.int64)
    regime = RegimePath(int(j0), t[is_sw], sw_states, float(horizon))

    raw = np.where(is_sw, np.nan, a)
    dxi = np.where(is_sw, a, 0.0)
    deta = np.where(is_sw, b, 0.0)
    for j, piece in enumerate(pieces):
        sel = (~is_sw) & (s_from == j)
        if sel.any():
            dxi[sel] = piece.xi_jump(raw[sel])
            deta[sel] = piece.eta_jump(raw[sel])
    return MapPath(
        regime,
        t,
        kind,
        s_from,
        s_to,
        raw,
        dxi,
        deta,
        np.array([p.xi_drift for p in pieces], dtype=float),
        np.array([p.eta_drift for p in pieces], dtype=float),
    )
