"""Batch distillation simulation with liquid-summation index reduction.

Subpackage map: thermo (property models), vle (NRTL + bubble points),
column (DAE residuals and Jacobians), solver (Newton, Radau collocation,
BVP, derivative-free and least-squares optimizers), initialization
(infinite-reflux and boundary-value startup), sim (time marching), study
(multiplicity case-study tools), cli (command-line front end).
"""

__version__ = "0.1.0"
