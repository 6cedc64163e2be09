# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled union-find kernel for 0-dim superlevel-set persistence.

Twin of ``_ph_python.kernel_ph0``; see that module for the contract. The
voxel loop is the hot path of every refinement run, hence the C kernel.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t i64
ctypedef cnp.float64_t f64
ctypedef cnp.uint8_t u8


cdef inline i64 _find(i64* parent, i64 i) noexcept nogil:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def kernel_ph0(values, i64 nx, i64 ny, i64 nz, offsets):
    """Compute persistence pairs on a flat x-fastest value array.

    Returns (pair_birth, pair_death, essential_birth) linear-index arrays.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    lins = np.flatnonzero(values > 0.0)
    order_np = np.ascontiguousarray(lins[np.argsort(-values[lins], kind="stable")], dtype=np.int64)

    cdef i64 n = nx * ny * nz
    cdef i64 m = order_np.shape[0]
    cdef f64[::1] vals = values
    cdef i64[::1] order = order_np

    parent_np = np.full(n, -1, dtype=np.int64)
    size_np = np.zeros(n, dtype=np.int64)
    birth_np = np.zeros(n, dtype=np.int64)
    rank_np = np.zeros(n, dtype=np.int64)
    cdef i64[::1] parent = parent_np
    cdef i64[::1] comp_size = size_np
    cdef i64[::1] comp_birth = birth_np
    cdef i64[::1] rank = rank_np

    cdef i64 k = offsets.shape[0]
    dx_np = np.ascontiguousarray(offsets[:, 0])
    dy_np = np.ascontiguousarray(offsets[:, 1])
    dz_np = np.ascontiguousarray(offsets[:, 2])
    dl_np = np.ascontiguousarray(offsets[:, 0] + nx * (offsets[:, 1] + ny * offsets[:, 2]))
    cdef i64[::1] dx = dx_np
    cdef i64[::1] dy = dy_np
    cdef i64[::1] dz = dz_np
    cdef i64[::1] dl = dl_np

    pb_np = np.empty(m, dtype=np.int64)
    pd_np = np.empty(m, dtype=np.int64)
    ess_np = np.empty(m, dtype=np.int64)
    flag_np = np.zeros(n, dtype=np.uint8)
    cdef i64[::1] pb = pb_np
    cdef i64[::1] pd = pd_np
    cdef i64[::1] ess = ess_np
    cdef u8[::1] flag = flag_np

    cdef i64 npairs = 0
    cdef i64 ness = 0
    cdef i64 pos, lin, x, y, z, rem, j, xx, yy, zz, nb
    cdef i64 ra, rb, old, young, keep, absorb, young_birth

    if m > 0:
        with nogil:
            for pos in range(m):
                lin = order[pos]
                parent[lin] = lin
                comp_size[lin] = 1
                comp_birth[lin] = lin
                rank[lin] = pos
                x = lin % nx
                rem = lin // nx
                y = rem % ny
                z = rem // ny
                for j in range(k):
                    xx = x + dx[j]
                    if xx < 0 or xx >= nx:
                        continue
                    yy = y + dy[j]
                    if yy < 0 or yy >= ny:
                        continue
                    zz = z + dz[j]
                    if zz < 0 or zz >= nz:
                        continue
                    nb = lin + dl[j]
                    if parent[nb] == -1:
                        continue
                    ra = _find(&parent[0], lin)
                    rb = _find(&parent[0], nb)
                    if ra == rb:
                        continue
                    if rank[comp_birth[ra]] < rank[comp_birth[rb]]:
                        old = ra
                        young = rb
                    else:
                        old = rb
                        young = ra
                    young_birth = comp_birth[young]
                    if vals[young_birth] > vals[lin]:
                        pb[npairs] = young_birth
                        pd[npairs] = lin
                        npairs += 1
                    if comp_size[ra] >= comp_size[rb]:
                        keep = ra
                        absorb = rb
                    else:
                        keep = rb
                        absorb = ra
                    parent[absorb] = keep
                    comp_size[keep] += comp_size[absorb]
                    comp_birth[keep] = comp_birth[old]

            for pos in range(m):
                lin = order[pos]
                ra = _find(&parent[0], lin)
                if flag[ra] == 0:
                    flag[ra] = 1
                    ess[ness] = comp_birth[ra]
                    ness += 1

    return pb_np[:npairs].copy(), pd_np[:npairs].copy(), ess_np[:ness].copy()
