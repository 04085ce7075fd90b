"""Lattice geometry shared by operator storage, model builders, and oracles."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class LatticeSpec:
    """Geometry and boundary of the site lattice.

    kind:
        "thermodynamic" -- infinite lattice, operators held as one anchored
        representative per translation orbit;
        "ring"          -- 1D periodic chain of `size` sites;
        "chain"         -- 1D open chain of `size` sites;
        "torus"         -- 2D periodic `size_x` x `size_y` lattice.
    dimension: 1 or 2.
    cell: translation period along x in thermodynamic mode (2 for models
        whose unit cell spans two sites; must be 1 for dimension 2).
    """

    dimension: int = 1
    kind: str = "thermodynamic"
    size: int | None = None
    size_y: int | None = None
    cell: int = 1

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.kind not in ("thermodynamic", "ring", "chain", "torus"):
            raise ValueError(f"unknown lattice kind {self.kind!r}")
        if self.kind == "thermodynamic":
            if self.size is not None or self.size_y is not None:
                raise ValueError("thermodynamic lattice takes no size")
            if self.cell < 1:
                raise ValueError("cell period must be >= 1")
            if self.dimension == 2 and self.cell != 1:
                raise ValueError("2D thermodynamic mode supports cell=1 only")
        elif self.kind in ("ring", "chain"):
            if self.dimension != 1:
                raise ValueError(f"{self.kind} lattice is one-dimensional")
            if not self.size or self.size < 2:
                raise ValueError("ring/chain needs size >= 2")
        elif self.kind == "torus":
            if self.dimension != 2:
                raise ValueError("torus lattice is two-dimensional")
            if not self.size or not self.size_y or self.size < 2 or self.size_y < 2:
                raise ValueError("torus needs size, size_y >= 2")

    @property
    def translation_invariant(self) -> bool:
        return self.kind == "thermodynamic"

    @property
    def n_sites(self) -> int:
        if self.kind in ("ring", "chain"):
            return self.size
        if self.kind == "torus":
            return self.size * self.size_y
        raise ValueError("thermodynamic lattice has no site count")

    def sites(self) -> list[tuple]:
        """All sites of a finite lattice, in storage-column order."""
        if self.kind in ("ring", "chain"):
            return [(i,) for i in range(self.size)]
        if self.kind == "torus":
            return [(x, y) for x in range(self.size) for y in range(self.size_y)]
        raise ValueError("thermodynamic lattice has no site list")

    def site_to_col(self, site: tuple) -> int:
        if self.kind in ("ring", "chain"):
            (i,) = site
            if not 0 <= i < self.size:
                raise ValueError(f"site {site} outside lattice of {self.size} sites")
            return i
        if self.kind == "torus":
            x, y = site
            if not (0 <= x < self.size and 0 <= y < self.size_y):
                raise ValueError(f"site {site} outside {self.size}x{self.size_y} torus")
            return x * self.size_y + y
        raise ValueError("thermodynamic lattice has no fixed columns")

    def wrap(self, site: tuple) -> tuple:
        """Reduce a site modulo the periodic lengths (finite lattices only)."""
        if self.kind == "ring":
            return (site[0] % self.size,)
        if self.kind == "torus":
            return (site[0] % self.size, site[1] % self.size_y)
        if self.kind == "chain":
            return site
        raise ValueError("thermodynamic lattice has no wrap")
