"""Exact marginalization over hard alignments.

A hard-attention transducer picks one source position per output symbol.
Summing over every alignment looks exponential (|x| ** |y| terms), but each
alignment variable depends only on the output prefix, so the sum factorizes
into one logsumexp per output step.  This script checks the two against
each other and shows the costs.
"""

import itertools
import math
import time

import numpy as np

from xduct import alignment as al
from xduct.tensor import Tensor

# The 2x2 toy: alpha is the alignment distribution per output step,
# emit[i, j] the probability of the observed y_i when aligned to x_j.
alpha = np.array([[0.6, 0.4], [0.3, 0.7]])
emit = np.array([[0.9, 0.2], [0.5, 0.8]])
tables = al.AlignmentTables(Tensor(np.log(alpha)), Tensor(np.log(emit)))

print("alignment   prior x emission")
for a in itertools.product(range(2), repeat=2):
    term = np.prod([alpha[i, a[i]] * emit[i, a[i]] for i in range(2)])
    print(f"  {a}      {term:.4f}")
print(f"factorized  p(y|x) = {math.exp(al.marginalize(tables).item()):.4f}")
print(f"enumerated  p(y|x) = {math.exp(al.brute_force_log_likelihood(tables).item()):.4f}")
print(f"Jensen bound       = {math.exp(al.jensen_bound(tables).item()):.4f} (never above the marginal)")

# Random output layers: the two computations agree to rounding error,
# while enumeration grows as |x| ** |y|.
rng = np.random.default_rng(0)
print("\n|x| |y|  alignments  |DP - brute|   DP ms  brute ms")
for n_x, n_y in [(2, 2), (3, 4), (4, 5), (5, 6), (6, 7)]:
    h_dec, h_enc = rng.normal(size=(n_y, 6)), rng.normal(size=(n_x, 8))
    T, S, W = rng.normal(size=(6, 8)), rng.normal(size=(14, 10)), rng.normal(size=(10, 12))
    y = rng.integers(0, 12, n_y)
    t0 = time.perf_counter()
    tabs = al.alignment_tables(h_dec, h_enc, y, T, S, W)
    dp = al.marginalize(tabs).item()
    t1 = time.perf_counter()
    bf = al.brute_force_log_likelihood(tabs).item()
    t2 = time.perf_counter()
    print(f"{n_x:3d} {n_y:3d}  {n_x ** n_y:10d}  {abs(dp - bf):11.1e}  {1e3 * (t1 - t0):6.2f}  {1e3 * (t2 - t1):8.2f}")
