"""numpy/scipy version of the compiled kernel (same signature)."""
import numpy as np
import scipy.sparse as sp


def block_matrix(blk_ptr, brow_ptr, bcol, boff, data):
    """Assemble the block-sparse operator as a CSR matrix."""
    blk_ptr = np.asarray(blk_ptr)
    n = int(blk_ptr[-1])
    rows, cols, vals = [], [], []
    for b in range(len(blk_ptr) - 1):
        s, d = blk_ptr[b], blk_ptr[b + 1] - blk_ptr[b]
        for q in range(brow_ptr[b], brow_ptr[b + 1]):
            c = bcol[q]
            sc, dc = blk_ptr[c], blk_ptr[c + 1] - blk_ptr[c]
            blk = np.asarray(data[boff[q]:boff[q] + d * dc]).reshape(dc, d).T
            ii, jj = np.meshgrid(np.arange(d), np.arange(dc), indexing="ij")
            rows.append((s + ii).ravel())
            cols.append((sc + jj).ravel())
            vals.append(blk.ravel())
    if not rows:
        return sp.csr_matrix((n, n))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


def leapfrog_blocks(blk_ptr, brow_ptr, bcol, boff, data, u_prev, u, g, tfac, dt2):
    A = block_matrix(blk_ptr, brow_ptr, bcol, boff, data)
    has_load = len(g) == len(u)
    for tf in tfac:
        r = A @ u
        if has_load:
            r -= tf * g
        un = 2.0 * u - u_prev - dt2 * r
        u_prev[:] = u
        u[:] = un
