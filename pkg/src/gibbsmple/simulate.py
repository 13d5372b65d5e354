"""Birth, death and move Metropolis-Hastings sampler for Gibbs models."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidInput
from .geometry import Window
from .models import ModelSpec, local_energy, require_theta, stability_bound
from .patterns import FINITE, INTERVAL, PointPattern

DEFAULT_MIX = (0.45, 0.45, 0.10)
DEFAULT_STEPS = 200_000
DEFAULT_BURN_IN = 100_000
_CHUNK = 1 << 16


@dataclass(frozen=True)
class SimConfig:
    """Chain settings. ``steps`` counts all iterations, burn-in included."""

    model: ModelSpec
    theta: tuple
    window: Window
    steps: int = DEFAULT_STEPS
    burn_in: int = DEFAULT_BURN_IN
    seed: int = 0
    mix: tuple = DEFAULT_MIX
    init: PointPattern | None = None

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(float(t) for t in require_theta(self.model, self.theta)))
        if not isinstance(self.steps, (int, np.integer)) or self.steps < 0:
            raise InvalidInput(f"steps must be a nonnegative integer, got {self.steps!r}")
        if not isinstance(self.burn_in, (int, np.integer)) or not 0 <= self.burn_in <= self.steps:
            raise InvalidInput(f"burn_in must be an integer in [0, steps], got {self.burn_in!r}")
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            raise InvalidInput(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        mix = tuple(float(v) for v in self.mix)
        if len(mix) != 3 or any(not (v >= 0) for v in mix) or abs(sum(mix) - 1.0) > 1e-12:
            raise InvalidInput(f"proposal mix must be 3 nonnegative probabilities summing to 1, got {self.mix!r}")
        if mix[0] > 0 and mix[1] == 0 or mix[1] > 0 and mix[0] == 0:
            raise InvalidInput("birth and death proposals must both be enabled or both disabled")
        object.__setattr__(self, "mix", mix)
        if self.init is not None and self.init.mark_space != self.model.mark_space:
            raise InvalidInput("initial pattern marks do not match the model")

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "theta": list(self.theta),
            "window": list(self.window.as_tuple()),
            "steps": int(self.steps),
            "burn_in": int(self.burn_in),
            "seed": int(self.seed),
            "mix": list(self.mix),
            "init_points": 0 if self.init is None else len(self.init),
        }


def _mark_kind(model: ModelSpec):
    ms = model.mark_space
    if ms.kind == FINITE:
        return kernels.MARK_FINITE, float(ms.M)
    if ms.kind == INTERVAL:
        return kernels.MARK_INTERVAL, float(ms.mmax)
    return kernels.MARK_UNIT, 0.0


def birth_log_ratio(model, theta, xm, phi, area, mix=DEFAULT_MIX) -> float:
    """Log Hastings ratio for adding ``xm`` to ``phi`` (``-inf`` on a hard core)."""
    pb, pd, _ = mix
    V = local_energy(model, theta, xm, phi)
    if V == math.inf:
        return -math.inf
    return math.log(pd / pb) + math.log(area) - math.log(len(phi) + 1) - V


def death_log_ratio(model, theta, i, phi, area, mix=DEFAULT_MIX) -> float:
    """Log Hastings ratio for deleting point ``i`` of ``phi``."""
    pb, pd, _ = mix
    pts = list(phi)
    rest = pts[:i] + pts[i + 1 :]
    V = local_energy(model, theta, pts[i], rest)
    return -math.log(pd / pb) + math.log(len(pts)) - math.log(area) + V


def run_chain(config: SimConfig):
    """Run the chain; returns ``(pattern, manifest)``."""
    model = config.model
    stability_bound(model, config.theta)  # rejects unstable parameter choices
    kind, param = _mark_kind(model)
    rng = np.random.Generator(np.random.PCG64(int(config.seed)))
    if config.init is not None:
        x0, y0, m0 = (np.array(a) for a in (config.init.x, config.init.y, config.init.marks))
        if not np.all(config.window.contains(x0, y0, closed=True)):
            raise InvalidInput("initial pattern has points outside the simulation window")
    else:
        x0 = y0 = m0 = np.zeros(0)
    n = len(x0)
    px, py, pm = x0.copy(), y0.copy(), m0.copy()
    counters = np.zeros(6, dtype=np.intc)
    burn_counters = np.zeros(6, dtype=np.intc)
    theta = np.asarray(config.theta, dtype=float)
    win = config.window.as_tuple()
    done = 0
    while done < config.steps:
        stop = config.burn_in if done < config.burn_in else config.steps
        c = min(_CHUNK, stop - done)
        u = rng.random((c, 6))
        if len(px) < n + c:
            grow = n + c + 1024
            px = np.concatenate([px[:n], np.zeros(grow - n)])
            py = np.concatenate([py[:n], np.zeros(grow - n)])
            pm = np.concatenate([pm[:n], np.zeros(grow - n)])
        n = kernels.run_chain(
            model.kernel_spec, theta, win, kind, param, px, py, pm, n, u, np.asarray(config.mix), counters
        )
        done += c
        if done == config.burn_in:
            burn_counters = counters.copy()
    pattern = PointPattern(px[:n], py[:n], pm[:n], config.window, model.mark_space)
    post = counters - burn_counters

    def rate(a, p):
        return float(a) / float(p) if p else None

    manifest = {
        "config": config.to_dict(),
        "n_points": int(n),
        "backend": kernels.backend(),
        "proposals": {"birth": int(counters[0]), "death": int(counters[2]), "move": int(counters[4])},
        "accepted": {"birth": int(counters[1]), "death": int(counters[3]), "move": int(counters[5])},
        "acceptance_after_burn_in": {
            "birth": rate(post[1], post[0]),
            "death": rate(post[3], post[2]),
            "move": rate(post[5], post[4]),
        },
    }
    return pattern, manifest


def simulate_mh(config: SimConfig) -> PointPattern:
    """State of the chain after ``config.steps`` iterations."""
    return run_chain(config)[0]
