"""Complex fields on rectangular phase-space grids."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import DimensionError

__all__ = ["WkbSheetValue", "SymbolGrid", "STATUS_CODES", "grid_points", "sheet_sum"]

#: Per-point classification codes stored in :attr:`SymbolGrid.status`.
STATUS_CODES = {"nonfocal": 0, "caustic": 1, "forbidden": 2, "masked": 3}


class WkbSheetValue(NamedTuple):
    """Contribution of one sheet: ``amplitude * exp(i phase / hbar - i pi maslov / 2)``."""

    phase: float
    amplitude: float
    maslov: int
    sheet_id: int


def grid_points(axes) -> np.ndarray:
    """Flattened ``ij``-ordered grid points, shape ``(N, len(axes))``."""
    mesh = np.meshgrid(*[np.asarray(a, dtype=float) for a in axes], indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, len(axes))


@dataclass(frozen=True, eq=False)
class SymbolGrid:
    """Complex field over a tensor grid.

    Attributes
    ----------
    axes : tuple of ndarray
        One coordinate array per phase-space axis ``(q.., p..)``.
    values : ndarray
        Complex array of shape ``tuple(len(a) for a in axes)``.
    t, hbar : float
    kind : str
        Producer tag, e.g. ``"schrodinger"``, ``"heisenberg"``, ``"oracle"``.
    status : ndarray of int8, optional
        Per-point classification (see :data:`STATUS_CODES`).
    sheets : list, optional
        Per flattened point, the list of :class:`WkbSheetValue`.
    meta : dict
        Free-form metadata (scenario hash, diagnostics).
    """

    axes: tuple
    values: np.ndarray
    t: float = 0.0
    hbar: float = 1.0
    kind: str = "symbol"
    status: np.ndarray | None = field(default=None, repr=False)
    sheets: list | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        shape = tuple(len(a) for a in axes)
        values = np.asarray(self.values, dtype=complex)
        if values.shape != shape:
            raise DimensionError(f"values shape {values.shape} does not match axes {shape}")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", values)
        if self.status is not None:
            st = np.asarray(self.status, dtype=np.int8)
            if st.shape != shape:
                raise DimensionError("status shape does not match axes")
            object.__setattr__(self, "status", st)

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def n(self) -> int:
        return len(self.axes) // 2

    @property
    def points(self) -> np.ndarray:
        return grid_points(self.axes)

    @property
    def spacing(self) -> np.ndarray:
        return np.array([a[1] - a[0] if len(a) > 1 else 0.0 for a in self.axes])

    def mask(self, name: str = "nonfocal") -> np.ndarray:
        """Boolean mask of points with the given status (all true without status)."""
        if self.status is None:
            return np.ones(self.shape, dtype=bool)
        return self.status == STATUS_CODES[name]

    def reassemble(self, hbar: float, cos_mode: bool = False) -> "SymbolGrid":
        """Rebuild the values from stored sheets for another ``hbar``."""
        if self.sheets is None:
            raise ValueError("grid carries no sheet data")
        flat = np.zeros(len(self.sheets), dtype=complex)
        for i, sh in enumerate(self.sheets):
            flat[i] = sheet_sum(sh, hbar, cos_mode)
        return replace(self, values=flat.reshape(self.shape), hbar=float(hbar))

    def interior(self, margin: int = 1) -> tuple:
        """Slices that drop ``margin`` points on every side."""
        return tuple(slice(margin, len(a) - margin) for a in self.axes)


def sheet_sum(sheets, hbar: float, cos_mode: bool = False) -> complex:
    """``sum_j a_j exp(i S_j / hbar - i pi m_j / 2)`` (or with ``cos(S_j / hbar)``)."""
    total = 0.0 + 0.0j
    for sv in sheets:
        maslov = np.exp(-0.5j * np.pi * sv.maslov)
        if cos_mode:
            total += sv.amplitude * np.cos(sv.phase / hbar) * maslov
        else:
            total += sv.amplitude * np.exp(1j * sv.phase / hbar) * maslov
    return complex(total)
