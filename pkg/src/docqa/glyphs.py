"""Bundled 5x7 bitmap glyph atlas.

Used to render synthetic documents and the id labels on crop sheets without
depending on system fonts, so output is byte-identical across machines.
Glyphs cover uppercase letters, digits, and common form punctuation; unknown
characters fall back to '?'.
"""

from __future__ import annotations

import numpy as np

from .core import BBox

GLYPH_W = 5
GLYPH_H = 7
# Horizontal advance between glyph cells, in font units (1 blank column).
GLYPH_ADVANCE = 6

_RAW = {
    "A": ("01110", "10001", "10001", "11111", "10001", "10001", "10001"),
    "B": ("11110", "10001", "11110", "10001", "10001", "10001", "11110"),
    "C": ("01110", "10001", "10000", "10000", "10000", "10001", "01110"),
    "D": ("11110", "10001", "10001", "10001", "10001", "10001", "11110"),
    "E": ("11111", "10000", "11110", "10000", "10000", "10000", "11111"),
    "F": ("11111", "10000", "11110", "10000", "10000", "10000", "10000"),
    "G": ("01110", "10001", "10000", "10111", "10001", "10001", "01111"),
    "H": ("10001", "10001", "11111", "10001", "10001", "10001", "10001"),
    "I": ("01110", "00100", "00100", "00100", "00100", "00100", "01110"),
    "J": ("00111", "00010", "00010", "00010", "00010", "10010", "01100"),
    "K": ("10001", "10010", "10100", "11000", "10100", "10010", "10001"),
    "L": ("10000", "10000", "10000", "10000", "10000", "10000", "11111"),
    "M": ("10001", "11011", "10101", "10101", "10001", "10001", "10001"),
    "N": ("10001", "11001", "10101", "10011", "10001", "10001", "10001"),
    "O": ("01110", "10001", "10001", "10001", "10001", "10001", "01110"),
    "P": ("11110", "10001", "10001", "11110", "10000", "10000", "10000"),
    "Q": ("01110", "10001", "10001", "10001", "10101", "10010", "01101"),
    "R": ("11110", "10001", "10001", "11110", "10100", "10010", "10001"),
    "S": ("01111", "10000", "10000", "01110", "00001", "00001", "11110"),
    "T": ("11111", "00100", "00100", "00100", "00100", "00100", "00100"),
    "U": ("10001", "10001", "10001", "10001", "10001", "10001", "01110"),
    "V": ("10001", "10001", "10001", "10001", "10001", "01010", "00100"),
    "W": ("10001", "10001", "10001", "10101", "10101", "11011", "10001"),
    "X": ("10001", "10001", "01010", "00100", "01010", "10001", "10001"),
    "Y": ("10001", "10001", "01010", "00100", "00100", "00100", "00100"),
    "Z": ("11111", "00001", "00010", "00100", "01000", "10000", "11111"),
    "0": ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    "1": ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    "2": ("01110", "10001", "00001", "00110", "01000", "10000", "11111"),
    "3": ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    "4": ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    "5": ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    "6": ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    "7": ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    "8": ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    "9": ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
    "&": ("01100", "10010", "10100", "01000", "10101", "10010", "01101"),
    ",": ("00000", "00000", "00000", "00000", "00110", "00100", "01000"),
    ".": ("00000", "00000", "00000", "00000", "00000", "01100", "01100"),
    ":": ("00000", "01100", "01100", "00000", "01100", "01100", "00000"),
    ";": ("00000", "01100", "01100", "00000", "01100", "00100", "01000"),
    "-": ("00000", "00000", "00000", "11111", "00000", "00000", "00000"),
    "(": ("00010", "00100", "01000", "01000", "01000", "00100", "00010"),
    ")": ("01000", "00100", "00010", "00010", "00010", "00100", "01000"),
    "/": ("00001", "00001", "00010", "00100", "01000", "10000", "10000"),
    "$": ("00100", "01111", "10100", "01110", "00101", "11110", "00100"),
    "#": ("01010", "01010", "11111", "01010", "11111", "01010", "01010"),
    "%": ("11000", "11001", "00010", "00100", "01000", "10011", "00011"),
    "'": ("00110", "00100", "01000", "00000", "00000", "00000", "00000"),
    '"': ("01010", "01010", "00000", "00000", "00000", "00000", "00000"),
    "?": ("01110", "10001", "00001", "00010", "00100", "00000", "00100"),
    "!": ("00100", "00100", "00100", "00100", "00100", "00000", "00100"),
    "+": ("00000", "00100", "00100", "11111", "00100", "00100", "00000"),
    "*": ("00000", "00100", "10101", "01110", "10101", "00100", "00000"),
    "=": ("00000", "00000", "11111", "00000", "11111", "00000", "00000"),
    "@": ("01110", "10001", "00001", "01101", "10101", "10101", "01110"),
    " ": ("00000", "00000", "00000", "00000", "00000", "00000", "00000"),
}

_MASKS: dict[str, np.ndarray] = {
    ch: np.array([[c == "1" for c in row] for row in rows], dtype=bool)
    for ch, rows in _RAW.items()
}


def glyph_mask(ch: str) -> np.ndarray:
    """Boolean 7x5 ink mask for one character (uppercased, '?' fallback)."""
    return _MASKS.get(ch.upper(), _MASKS["?"])


def text_width(text: str, scale: int) -> int:
    """Pixel width of a rendered string (trailing inter-glyph gap excluded)."""
    if not text:
        return 0
    return (len(text) * GLYPH_ADVANCE - 1) * scale


def text_height(scale: int) -> int:
    return GLYPH_H * scale


def draw_text(
    canvas: np.ndarray,
    x: int,
    y: int,
    text: str,
    scale: int = 2,
    color=(0, 0, 0),
) -> BBox | None:
    """Draw ``text`` onto a writable RGB canvas at (x, y).

    Returns the tight bounding box of the ink actually drawn, or None when the
    string produced no ink (e.g. only spaces). Pixels falling outside the
    canvas are dropped.
    """
    h, w = canvas.shape[:2]
    ink_x1 = ink_y1 = None
    ink_x2 = ink_y2 = None
    for i, ch in enumerate(text):
        mask = glyph_mask(ch)
        gx = x + i * GLYPH_ADVANCE * scale
        rows, cols = np.nonzero(mask)
        for r, c in zip(rows.tolist(), cols.tolist()):
            px = gx + c * scale
            py = y + r * scale
            x0, x1 = max(0, px), min(w, px + scale)
            y0, y1 = max(0, py), min(h, py + scale)
            if x0 >= x1 or y0 >= y1:
                continue
            canvas[y0:y1, x0:x1] = color
            ink_x1 = x0 if ink_x1 is None else min(ink_x1, x0)
            ink_y1 = y0 if ink_y1 is None else min(ink_y1, y0)
            ink_x2 = x1 if ink_x2 is None else max(ink_x2, x1)
            ink_y2 = y1 if ink_y2 is None else max(ink_y2, y1)
    if ink_x1 is None:
        return None
    return BBox(ink_x1, ink_y1, ink_x2, ink_y2)
