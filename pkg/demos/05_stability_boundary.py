"""Locate the empirical stability boundary of the explicit scheme and
compare it with the step bound predicted from the measured inverse constant.

Runs in a few seconds.
"""

import os

from qgdms import build_hierarchy, uniform_field
from qgdms.analysis import cfl_boundary_scan, estimate_inverse_constant
from qgdms.cem import build_auxiliary_space, build_multiscale_basis
from qgdms.fem import build_partition_of_unity
from qgdms.solver import assemble_fine_operators, check_cfl, make_reduced_space

hier = build_hierarchy(20, 20, 4, 4)
field = uniform_field(20, 20)
pou = build_partition_of_unity(hier, field, "bilinear")
aux = build_auxiliary_space(hier, field, pou, ell=2)
ops = assemble_fine_operators(hier, field, pou)
basis = build_multiscale_basis(hier, field, pou, aux, m=2,
                               operators=(ops.A_full, ops.M_full))
space = make_reduced_space(basis, ops)

alpha = 0.1
c_inv = estimate_inverse_constant(basis, hier)
predicted = check_cfl(alpha, field.beta, c_inv, hier.coarse.H, 1.0).dt_max
print(f"C_inv_emp = {c_inv:.3f}, predicted stable step = {predicted:.3e}")

factors = (0.25, 0.5, 1.0, 2.0, 4.0, 10.0)
report = cfl_boundary_scan(space, alpha, field.beta, c_inv, hier.coarse.H,
                           [f * predicted for f in factors], steps=4000)
for f, dt, blew in zip(factors, report.dt_values, report.blew_up):
    print(f"  dt = {f:5.2f} x predicted ({dt:.3e}): "
          f"{'blow-up' if blew else 'stable'}")
print(f"empirical critical step = {report.empirical_critical:.3e} "
      f"({report.empirical_critical / predicted:.2f} x predicted)")
