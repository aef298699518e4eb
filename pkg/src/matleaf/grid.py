"""Regular sample grids inside the body."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .jets import BodyDomain


@dataclass(frozen=True)
class GridSpec:
    """``n`` equispaced coordinates per axis spanning ``[c - r, c + r]``.

    Points are kept when ``core * r <= |X - c| <= (1 - shell) * r``.  The
    core exclusion keeps the degenerate centre of radial bodies out of
    stratum summaries; set it to 0 to include the centre.
    """

    n: int = 9
    core: float = 0.05
    shell: float = 0.05

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("grid needs n >= 2")
        if not (0 <= self.core < 1 and 0 <= self.shell < 1):
            raise ValueError("core and shell fractions must lie in [0, 1)")

    def axes(self, body: BodyDomain) -> list[np.ndarray]:
        return [c + np.linspace(-body.radius, body.radius, self.n) for c in body.center]

    def indexed_points(self, body: BodyDomain) -> list[tuple[tuple[int, int, int], np.ndarray]]:
        ax = self.axes(body)
        c = np.asarray(body.center)
        out = []
        for i in range(self.n):
            for j in range(self.n):
                for k in range(self.n):
                    p = np.array([ax[0][i], ax[1][j], ax[2][k]])
                    r = np.linalg.norm(p - c)
                    if self.core * body.radius <= r <= (1.0 - self.shell) * body.radius and r < body.radius:
                        out.append(((i, j, k), p))
        return out

    def points(self, body: BodyDomain) -> np.ndarray:
        pts = [p for _, p in self.indexed_points(body)]
        return np.array(pts).reshape(-1, 3)

    def to_dict(self) -> dict:
        return {"n": self.n, "core": self.core, "shell": self.shell}
