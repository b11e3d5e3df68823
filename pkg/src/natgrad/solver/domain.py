"""Rectangles and discs in the plane, with signed distance and closest-point projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Domain2D:
    shape: str
    params: tuple

    def __post_init__(self):
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        if self.shape == "rectangle":
            if len(params) != 4:
                raise ValueError("rectangle needs (x0, y0, x1, y1)")
            x0, y0, x1, y1 = params
            if not (x1 > x0 and y1 > y0):
                raise ValueError(f"rectangle has no area: {params}")
        elif self.shape == "disc":
            if len(params) != 3:
                raise ValueError("disc needs (cx, cy, r)")
            if not params[2] > 0:
                raise ValueError(f"disc radius must be positive, got {params[2]}")
        else:
            raise ValueError(f"unknown domain shape {self.shape!r}")

    @classmethod
    def rectangle(cls, x0, y0, x1, y1) -> "Domain2D":
        return cls("rectangle", (x0, y0, x1, y1))

    @classmethod
    def disc(cls, cx, cy, r) -> "Domain2D":
        return cls("disc", (cx, cy, r))

    @property
    def inradius(self) -> float:
        if self.shape == "disc":
            return self.params[2]
        x0, y0, x1, y1 = self.params
        return 0.5 * min(x1 - x0, y1 - y0)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        if self.shape == "rectangle":
            return self.params
        cx, cy, r = self.params
        return (cx - r, cy - r, cx + r, cy + r)

    def signed_distance(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.shape == "disc":
            cx, cy, r = self.params
            return np.hypot(x - cx, y - cy) - r
        x0, y0, x1, y1 = self.params
        cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
        qx = np.abs(x - cx) - 0.5 * (x1 - x0)
        qy = np.abs(y - cy) - 0.5 * (y1 - y0)
        outside = np.hypot(np.maximum(qx, 0), np.maximum(qy, 0))
        return outside + np.minimum(np.maximum(qx, qy), 0)

    def project(self, x, y):
        """Closest boundary point to each ``(x, y)``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.shape == "disc":
            cx, cy, r = self.params
            dx, dy = x - cx, y - cy
            d = np.hypot(dx, dy)
            safe = np.where(d > 0, d, 1.0)
            px = np.where(d > 0, cx + r * dx / safe, cx + r)
            py = np.where(d > 0, cy + r * dy / safe, cy)
            return px, py
        x0, y0, x1, y1 = self.params
        px = np.clip(x, x0, x1)
        py = np.clip(y, y0, y1)
        inside = (x > x0) & (x < x1) & (y > y0) & (y < y1)
        # interior points go to the nearest edge
        d = np.stack([x - x0, x1 - x, y - y0, y1 - y])
        k = np.argmin(d, axis=0)
        px = np.where(inside & (k == 0), x0, np.where(inside & (k == 1), x1, px))
        py = np.where(inside & (k == 2), y0, np.where(inside & (k == 3), y1, py))
        return px, py

    def boundary_samples(self, count: int = 512) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``count`` points spaced evenly along the boundary, with their arc-length parameter in [0, 1)."""
        s = np.arange(count) / count
        if self.shape == "disc":
            cx, cy, r = self.params
            th = 2 * np.pi * s
            return cx + r * np.cos(th), cy + r * np.sin(th), s
        return (*self.boundary_point(s), s)

    def boundary_point(self, s):
        """Boundary point at normalised arc length ``s`` (periodic, counter-clockwise)."""
        s = np.mod(np.asarray(s, dtype=float), 1.0)
        if self.shape == "disc":
            cx, cy, r = self.params
            th = 2 * np.pi * s
            return cx + r * np.cos(th), cy + r * np.sin(th)
        x0, y0, x1, y1 = self.params
        w, hgt = x1 - x0, y1 - y0
        L = s * 2 * (w + hgt)
        x = np.where(L < w, x0 + L, np.where(L < w + hgt, x1, np.where(L < 2 * w + hgt, x1 - (L - w - hgt), x0)))
        y = np.where(L < w, y0, np.where(L < w + hgt, y0 + (L - w), np.where(L < 2 * w + hgt, y1, y1 - (L - 2 * w - hgt))))
        return x, y

    def describe(self) -> str:
        return f"{self.shape}({', '.join('%g' % p for p in self.params)})"
