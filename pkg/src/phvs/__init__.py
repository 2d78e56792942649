"""Character sums over Z/p^m and the closed forms that predict them.

The package computes multiplicative/additive character sums of polynomial
arguments over residue rings Z/p^m both by brute-force enumeration and by
closed-form expressions (quadratic sums, critical-point formulas, Fourier
factorization of homogeneous invariants), and certifies their agreement
for a catalogue of regular relative-invariant instances.
"""

__version__ = "0.1.0"
