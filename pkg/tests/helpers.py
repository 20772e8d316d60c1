import numpy as np

from app.core.patterns import ShapeSpec, UnitCellSpec, render_unit_cell, tile


def square_cell(cell_side: int, size: int, top: int = 0, left: int = 0) -> np.ndarray:
    """Cell holding one size x size foreground square"""
    shape = ShapeSpec(kind="rectangle", center=(top + size / 2.0, left + size / 2.0), size=(size, size))
    return render_unit_cell(UnitCellSpec(cell_side=cell_side, shapes=[shape]))


def random_square_tiling(rng: np.random.Generator, p: int, cell_side: int) -> np.ndarray:
    size = int(rng.integers(1, min(cell_side // 2, 8) + 1))
    top = int(rng.integers(0, cell_side - size + 1))
    left = int(rng.integers(0, cell_side - size + 1))
    return tile(square_cell(cell_side, size, top, left), p)
