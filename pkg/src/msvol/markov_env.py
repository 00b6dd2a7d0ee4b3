"""The background continuous-time Markov chain ``J``.

States are 0-based inside the Python API.  Files and the CLI use 1-based
labels; conversion happens in :mod:`msvol.config` and :mod:`msvol.cli`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .numerics import NumericalError, solve

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    """Intensity matrix of an irreducible chain on ``{0, ..., N-1}``.

    Row sums within ``1e-9`` of zero are repaired through the diagonal;
    anything further off raises ``ValueError``.
    """

    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 1:
            raise ValueError(f"Q must be a non-empty square matrix, got shape {q.shape}")
        if not np.all(np.isfinite(q)):
            raise ValueError("Q has non-finite entries")
        n = q.shape[0]
        off = ~np.eye(n, dtype=bool)
        if np.any(q[off] < 0):
            raise ValueError("off-diagonal rates must be >= 0")
        rows = q.sum(axis=1)
        bad = np.flatnonzero(np.abs(rows) > ROW_SUM_TOL)
        if bad.size:
            raise ValueError(f"row {bad[0] + 1} of Q sums to {rows[bad[0]]:.3g}, not 0")
        np.fill_diagonal(q, 0.0)
        np.fill_diagonal(q, -q.sum(axis=1))
        if n > 1:
            if np.any(np.diag(q) == 0):
                row = int(np.flatnonzero(np.diag(q) == 0)[0])
                raise ValueError(f"state {row + 1} is absorbing; the chain must be ergodic")
            ncomp, _ = connected_components(q > 0, directed=True, connection="strong")
            if ncomp != 1:
                raise ValueError("Q is not irreducible")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def n_states(self) -> int:
        return self.q.shape[0]

    @property
    def exit_rates(self) -> np.ndarray:
        return -np.diag(self.q)

    def jump_cdf(self) -> np.ndarray:
        """Row-wise cumulative jump-chain probabilities (zero rows for N=1)."""
        rates = self.exit_rates
        p = np.where(rates[:, None] > 0, self.q / np.where(rates > 0, rates, 1.0)[:, None], 0.0)
        np.fill_diagonal(p, 0.0)
        cdf = np.cumsum(p, axis=1)
        cdf[rates > 0, -1] = 1.0
        return cdf

    def to_json(self) -> list[list[float]]:
        return self.q.tolist()


def stationary_distribution(q: GeneratorMatrix) -> np.ndarray:
    """The unique ``pi`` with ``pi @ Q = 0`` and ``sum(pi) = 1``."""
    n = q.n_states
    a = q.q.T.copy()
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = solve(a, b)
    except NumericalError as exc:
        raise ValueError("generator is not irreducible (singular stationary system)") from exc
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass(frozen=True, eq=False)
class RegimePath:
    """Switch times ``T_n`` with ``from -> to`` states on ``(0, horizon]``."""

    initial_state: int
    times: np.ndarray
    states: np.ndarray  # states[0] = initial_state, states[n] = state after switch n
    horizon: float

    @property
    def events(self) -> list[tuple[float, int, int]]:
        return [(float(t), int(self.states[n]), int(self.states[n + 1])) for n, t in enumerate(self.times)]

    def state_at(self, t) -> np.ndarray:
        """Right-continuous state lookup."""
        idx = np.searchsorted(self.times, t, side="right")
        return self.states[idx]

    def occupation(self, n_states: int) -> np.ndarray:
        """Time spent in each state on ``[0, horizon]``."""
        edges = np.concatenate(([0.0], self.times, [self.horizon]))
        return np.bincount(self.states, weights=np.diff(edges), minlength=n_states)

    def first_return_time(self, j: int) -> float | None:
        """``inf{t > 0: J_t = j, J_t- != j}``, or ``None`` if it is beyond the horizon."""
        hits = np.flatnonzero(self.states[1:] == j)
        return float(self.times[hits[0]]) if hits.size else None


def sample_regime_path(q: GeneratorMatrix, j0: int, horizon: float, rng: np.random.Generator) -> RegimePath:
    if not horizon > 0:
        raise ValueError("horizon must be > 0")
    if not 0 <= j0 < q.n_states:
        raise ValueError(f"initial state {j0} out of range")
    times, states = _kernels.sample_regime(rng, q.exit_rates, q.jump_cdf(), j0, float(horizon))
    return RegimePath(j0, times, states, float(horizon))
