"""Measured kappa_1 thresholds frozen as regression anchors.

Measured once with seed 42, 1000 samples per octave rung on [1, 1e8],
K-ratio 1e3, negativity bias 0.3, and a 10^4-sample verification scan on
[T, 1e6].  A later measurement above an anchor is a regression.
"""

CELLS = ((3, 2), (4, 3), (5, 3), (5, 4), (6, 4), (6, 5))

CONJECTURE = {cell: 1.0 for cell in CELLS}
CLAIM = {("I", cell): 1.0 for cell in CELLS} | {("II", cell): 1.0 for cell in CELLS}
LEMMAS = {
    "n3.5": {cell: 1.0 for cell in CELLS},
    "hess-dominance-e2.30": {cell: 1.0 for cell in CELLS},
    "a3.6": {cell: (8.0 if cell == (6, 5) else 4.0) for cell in CELLS},
    "L-n3.8": {cell: (8.0 if cell == (6, 5) else 4.0) for cell in CELLS},
}
