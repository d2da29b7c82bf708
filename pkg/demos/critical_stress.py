"""Homogeneous 1D bar: stress-strain response of the regularized model and
its peak, compared with the closed-form critical stress.

Run with ``python3 demos/critical_stress.py``.
"""

import numpy as np

from phasefrac import constitutive as cm

E, G_c = 32e9, 3.0

for l0 in (1e-3, 5e-4, 2.5e-4):
    eps = np.linspace(0.0, 3 * np.sqrt(G_c / (3 * l0 * E)), 2001)
    sig = cm.homogeneous_stress_1d(eps, E, G_c, l0)
    i = np.argmax(sig)
    print(f"l0 = {l0:.2e} m: peak {sig[i] / 1e6:.4f} MPa at strain {eps[i]:.3e}, "
          f"closed form {cm.critical_stress_1d(E, G_c, l0) / 1e6:.4f} MPa")

# a smaller length scale means a stronger material
print("length scale for 4.5 MPa:", cm.length_scale_from_strength(E, G_c, 4.5e6))
