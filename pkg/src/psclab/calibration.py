"""Fit the electronic noise level so the baseline MTD lands in a target band."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .cpa import RepeatabilityResult, repeatability
from .scenarios import ScenarioSpec


@dataclass
class Calibration:
    sigma: float
    result: RepeatabilityResult
    history: list[tuple[float, float]] = field(default_factory=list)  # (sigma, median MTD)

    @property
    def median_mtd(self) -> float:
        return self.result.median_mtd()


def calibrate_sigma(spec: ScenarioSpec, key, *, band: tuple[float, float] = (3900, 8100), trials: int = 10,
                    budget: int = 10_000, seed: int = 0, step: int = 100, lo: float = 5.0, hi: float = 160.0,
                    max_iter: int = 12) -> Calibration:
    """Bisect ``electronic_sigma`` (geometric midpoints) until the median MTD falls in ``band``.

    Every evaluation reuses the same trial seeds, so the median is a
    deterministic function of sigma.  A trial that misses the budget counts as
    infinite MTD and pushes sigma down.
    """
    history = []
    best = None
    for _ in range(max_iter):
        sigma = math.sqrt(lo * hi)
        res = repeatability(spec.with_noise(electronic_sigma=sigma), key, trials, budget, seed=seed, step=step)
        med = res.median_mtd()
        history.append((sigma, med))
        if band[0] <= med <= band[1]:
            return Calibration(sigma=sigma, result=res, history=history)
        if med < band[0]:
            lo = sigma
        else:
            hi = sigma
        best = Calibration(sigma=sigma, result=res, history=history)
    return best
