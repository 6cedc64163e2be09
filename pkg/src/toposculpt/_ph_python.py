"""Pure-Python union-find kernel for 0-dim superlevel-set persistence.

Fallback twin of the compiled kernel in ``_ph_core``; both implement the
same contract and must produce identical output:

* voxels with value > 0 enter in decreasing value order, ties broken by
  ascending x-fastest linear index;
* when an inserted voxel merges two components, the one whose birth voxel
  entered later dies (elder rule) and the inserted voxel is its death site;
* merges at equal birth/death values are not recorded (zero persistence);
* components that never die are reported as essential birth indices.
"""

from __future__ import annotations

import numpy as np


def kernel_ph0(values, nx, ny, nz, offsets):
    """Compute persistence pairs on a flat x-fastest value array.

    Args:
        values: float64 array of length nx*ny*nz.
        nx, ny, nz: grid dims.
        offsets: (k, 3) int64 neighbor offsets.

    Returns:
        (pair_birth, pair_death, essential_birth) linear-index arrays.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    lins = np.flatnonzero(values > 0.0)
    order = lins[np.argsort(-values[lins], kind="stable")]

    n = nx * ny * nz
    parent = np.full(n, -1, dtype=np.int64)
    comp_size = np.zeros(n, dtype=np.int64)
    comp_birth = np.zeros(n, dtype=np.int64)
    rank = np.zeros(n, dtype=np.int64)
    # plain lists: much faster element access than ndarray in the loop
    parent = parent.tolist()
    comp_size = comp_size.tolist()
    comp_birth = comp_birth.tolist()
    rank = rank.tolist()
    vals = values.tolist()

    nxy = nx * ny
    off = [(int(dx), int(dy), int(dz), int(dx + nx * (dy + ny * dz))) for dx, dy, dz in offsets]

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    pair_birth = []
    pair_death = []
    for pos, lin in enumerate(order):
        lin = int(lin)
        parent[lin] = lin
        comp_size[lin] = 1
        comp_birth[lin] = lin
        rank[lin] = pos
        x = lin % nx
        rem = lin // nx
        y = rem % ny
        z = rem // ny
        for dx, dy, dz, dl in off:
            xx = x + dx
            if xx < 0 or xx >= nx:
                continue
            yy = y + dy
            if yy < 0 or yy >= ny:
                continue
            zz = z + dz
            if zz < 0 or zz >= nz:
                continue
            nb = lin + dl
            if parent[nb] == -1:
                continue
            ra = find(lin)
            rb = find(nb)
            if ra == rb:
                continue
            if rank[comp_birth[ra]] < rank[comp_birth[rb]]:
                old, young = ra, rb
            else:
                old, young = rb, ra
            young_birth = comp_birth[young]
            if vals[young_birth] > vals[lin]:
                pair_birth.append(young_birth)
                pair_death.append(lin)
            if comp_size[ra] >= comp_size[rb]:
                keep, absorb = ra, rb
            else:
                keep, absorb = rb, ra
            parent[absorb] = keep
            comp_size[keep] += comp_size[absorb]
            comp_birth[keep] = comp_birth[old]

    seen = set()
    essential = []
    for lin in order:
        root = find(int(lin))
        if root not in seen:
            seen.add(root)
            essential.append(comp_birth[root])

    return (
        np.asarray(pair_birth, dtype=np.int64),
        np.asarray(pair_death, dtype=np.int64),
        np.asarray(essential, dtype=np.int64),
    )
