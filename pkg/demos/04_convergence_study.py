"""Reduced-order convergence study against the fine-grid reference.

A smoke-scale version of the shipped presets (small mesh, short horizon) so
it finishes in about a minute; bump the parameters toward presets/table2.cfg
for the full experiment.  Writes CSV and SVG under demos/out/.
"""

import os

from qgdms import generate_channels
from qgdms.analysis import StudySpec, run_convergence_study

out = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(out, exist_ok=True)

field = generate_channels(40, 40, 1.0, 1e3, seed=19)
spec = StudySpec(
    nx=40, ny=40,
    rows=[(4, 2), (8, 3)],
    alphas=[1.0, 0.1],
    source="static_sine",
    field=field,
    dt=1e-4, T=0.25, ell=2,
    cache_dir=os.path.join(out, "ref_cache"),
)
table = run_convergence_study(spec)
table.to_csv(os.path.join(out, "study.csv"))
table.plot_svg(os.path.join(out, "study_e_a.svg"), "e_a")

print("H, m rows:", table.rows)
for a in spec.alphas:
    print(f"alpha={a}: e_a per row {[f'{v:.3e}' for v in table.column(a)]}")
for row in table.meta["rows"]:
    print(f"H={row['H']:.4f}: Lambda={row['Lambda']:.3f}, "
          f"C_inv={row['c_inv_emp']:.2f}, basis {row['basis_seconds']:.1f}s")
print(f"wrote {out}/study.csv and {out}/study_e_a.svg")
