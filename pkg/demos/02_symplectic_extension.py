"""
Extending a disk diffeomorphism to a symplectic map
===================================================

A diffeomorphism psi of a disk, C1-close to the identity, is turned into a
symplectic map phi of R^2n that equals psi on the disk (as a graph over the
zero section) and the identity outside a box. The C1 size of phi follows the
size of psi.
"""

import numpy as np

from symperturb.extension import extend_symplectic, extend_volume
from symperturb.families import bump_diffeo
from symperturb.interpolation import default_support_box
from symperturb.experiments import volume_box

for amp in (0.01, 0.005):
    psi = bump_diffeo(1, amp)
    res = extend_symplectic(psi, default_support_box(psi), probes=400, seed=1)
    print(f"amplitude {amp}:")
    for c in res.certificates:
        print(f"   {c.name:22s} {c.value:.3e}  {'ok' if c.passed else 'FAIL'}")

# same disk map, now a volume preserving map of R^3 (one spectator coordinate)
psi = bump_diffeo(1, 0.01)
res = extend_volume(psi, 3, volume_box(psi, 3), probes=400, seed=1)
dev = np.abs(res.meta["det_deviation"])
print("volume extension: max |det - 1| =", dev.max(), "over", len(dev), "probes")
print("probes in the partial cutoff shell:", res.meta["partial_rho_probes"])
