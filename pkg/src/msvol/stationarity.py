"""Stationarity diagnostics shared by both models."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .map_engine import SwitchJumpLaw
from .markov_env import GeneratorMatrix


@dataclass
class SwitchSupEstimate:
    """MC estimate of ``E_j[log+ sup_{T_n <= tau_1(j)} exp(-xi_2(T_n)) deta_2(T_n)]`` per start state."""

    mean: np.ndarray
    stderr: np.ndarray
    n_cycles: int
    finite: bool
    closed_form_finite: bool

    def to_json(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "stderr": self.stderr.tolist(),
            "n_cycles": self.n_cycles,
            "finite": self.finite,
            "closed_form_finite": self.closed_form_finite,
        }


@dataclass
class StationarityReport:
    kappa: float
    kappa_positive: bool
    levy_log_moments: list | None
    switch_sup: SwitchSupEstimate
    stationary: bool
    notes: list[str] = field(default_factory=list)

    @property
    def verdict(self) -> str:
        return "stationary" if self.stationary else "non-stationary"

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "kappa_xi": self.kappa,
            "kappa_positive": self.kappa_positive,
            "levy_log_moments": self.levy_log_moments,
            "switch_sup_log_moment": self.switch_sup.to_json(),
            "notes": self.notes,
        }


def switch_sup_log_moment(q: GeneratorMatrix, laws: SwitchJumpLaw, n_cycles: int, rng: np.random.Generator) -> SwitchSupEstimate:
    """Simulate ``n_cycles`` return cycles of the embedded jump chain from every state.

    Only the jump chain and the switch draws matter, so holding times are
    not sampled.  All supported switch laws have finite log-moments, which is
    the closed-form shortcut for the finiteness flag.
    """
    n = q.n_states
    means, errs = np.zeros(n), np.zeros(n)
    if n > 1 and laws.has_eta_jumps and n_cycles > 0:
        cdf = q.jump_cdf()
        for j in range(n):
            vals = np.empty(n_cycles)
            for c in range(n_cycles):
                state, xi2, best = j, 0.0, 0.0
                while True:
                    nxt = int(np.searchsorted(cdf[state], rng.random(), side="right"))
                    nxt = min(nxt, n - 1)
                    law = laws[state, nxt]
                    xi2 += float(law.xi.sample(rng, 1)[0])
                    y = float(law.eta.sample(rng, 1)[0])
                    best = max(best, math.exp(-xi2) * y)
                    state = nxt
                    if state == j:
                        break
                vals[c] = math.log(best) if best > 1.0 else 0.0
            means[j] = vals.mean()
            errs[j] = vals.std(ddof=1) / math.sqrt(n_cycles) if n_cycles > 1 else 0.0
    finite = bool(np.all(np.isfinite(means)))
    return SwitchSupEstimate(means, errs, n_cycles, finite, True)
