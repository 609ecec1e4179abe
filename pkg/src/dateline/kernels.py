"""Hot loops: the weighted stage likelihood with its gradients, and Jacobi sweeps.

Each kernel has a numba loop version (``*_numba``) and a vectorised numpy
version (``*_numpy``). The dispatchers pick one according to
:mod:`dateline._accel`; both are importable directly so they can be checked
against each other.

Per-preference terms are reduced over a fixed number of contiguous chunks and
the chunk sums are added in chunk order, so the numba result does not depend
on the thread count.
"""

import itertools
import math

import numpy as np

from . import _accel
from ._accel import njit, prange
from .errors import DegenerateProfileError, EnumerationCapError

N_CHUNKS = 64


# ---------------------------------------------------------------------------
# weighted Plackett-Luce likelihood
# ---------------------------------------------------------------------------

ENUM_CAP = 8


def perm_table(K):
    """All orders of ``range(k)`` for ``k = 0..K``, concatenated.

    Returns ``(table, start)``: the orders of length ``k`` are the rows of
    ``table[start[k]:start[k + 1]].reshape(-1, k)``.
    """
    chunks, start = [], [0]
    for k in range(K + 1):
        p = np.array(list(itertools.permutations(range(k))), dtype=np.int64).reshape(-1)
        chunks.append(p if k >= 1 else np.zeros(0, np.int64))
        start.append(start[-1] + chunks[-1].size)
    return np.concatenate(chunks), np.array(start, dtype=np.int64)


@njit(cache=True)
def _order_terms(lam, pos, off, k, eta, w, gu, ge, row, want_grad):
    # log of the stage product for the order pos[off..off+k-1] of subset
    # positions; gradients land in row ``row`` of gu (subset coords) and ge.
    # Stage ratios are multiplied and logged once; per-stage logs are only
    # used when the product underflows.
    prod = 1.0
    ll = 0.0
    for i in range(k - 1):
        m = k - i
        S = 0.0
        A = 0.0
        B = 0.0
        for o in range(m):
            li = lam[pos[off + i + o]]
            S += li
            A += eta[w, o] * li
            B += eta[w, o]
        if B <= 0.0:
            return np.nan
        r = A / (B * S)
        if prod * r < 1e-280:
            ll += math.log(prod)
            prod = r
        else:
            prod *= r
        if want_grad:
            for o in range(m):
                li = lam[pos[off + i + o]]
                gu[row, pos[off + i + o]] += eta[w, o] * li / A - li / S
                ge[row, o] += li / A - 1.0 / B
    return ll + math.log(prod)


@njit(cache=True, parallel=True)
def _loglik_grad_numba(u, items, offsets, widx, eta, want_grad, normalize,
                       ptab, pstart, n_chunks):
    N = offsets.size - 1
    L = u.size
    W, K = eta.shape
    per_pref = np.zeros(N)
    chunk_ll = np.zeros(n_chunks)
    gL = L if want_grad else 1
    gW = W if want_grad else 1
    chunk_gu = np.zeros((n_chunks, gL))
    chunk_geta = np.zeros((n_chunks, gW, K))
    bad = np.full(n_chunks, -1, dtype=np.int64)
    pmax = 1
    if normalize:
        for k in range(3, K + 1):
            pmax = max(pmax, (pstart[k + 1] - pstart[k]) // k)
    ident = np.arange(K)
    for c in prange(n_chunks):
        lo = c * N // n_chunks
        hi = (c + 1) * N // n_chunks
        lam = np.empty(K)
        llp = np.empty(pmax)
        # row pmax holds the observed order, rows 0..P-1 the enumerated ones
        gup = np.zeros((pmax + 1, K))
        gep = np.zeros((pmax + 1, K))
        acc = 0.0
        for n in range(lo, hi):
            start = offsets[n]
            k = offsets[n + 1] - start
            w = widx[n]
            mx = -np.inf
            for t in range(k):
                if u[items[start + t]] > mx:
                    mx = u[items[start + t]]
            for t in range(k):
                lam[t] = math.exp(u[items[start + t]] - mx)
            for t in range(K):
                gup[pmax, t] = 0.0
                gep[pmax, t] = 0.0
            ll = _order_terms(lam, ident, 0, k, eta, w, gup, gep, pmax, want_grad)
            if np.isnan(ll):
                if bad[c] < 0:
                    bad[c] = n
                continue
            if normalize and k >= 3:
                P = (pstart[k + 1] - pstart[k]) // k
                zmax = -np.inf
                for p in range(P):
                    for t in range(K):
                        gup[p, t] = 0.0
                        gep[p, t] = 0.0
                    llp[p] = _order_terms(lam, ptab, pstart[k] + p * k, k, eta, w,
                                          gup, gep, p, want_grad)
                    if llp[p] > zmax:
                        zmax = llp[p]
                z = 0.0
                for p in range(P):
                    llp[p] = math.exp(llp[p] - zmax)
                    z += llp[p]
                ll -= zmax + math.log(z)
                if want_grad:
                    for p in range(P):
                        wp = llp[p] / z
                        for t in range(K):
                            gup[pmax, t] -= wp * gup[p, t]
                            gep[pmax, t] -= wp * gep[p, t]
            if want_grad:
                for t in range(k):
                    chunk_gu[c, items[start + t]] += gup[pmax, t]
                for t in range(K):
                    chunk_geta[c, w, t] += gep[pmax, t]
            per_pref[n] = ll
            acc += ll
        chunk_ll[c] = acc
    total = 0.0
    gu_out = np.zeros(gL)
    geta = np.zeros((gW, K))
    first_bad = -1
    for c in range(n_chunks):
        total += chunk_ll[c]
        gu_out += chunk_gu[c]
        geta += chunk_geta[c]
        if first_bad < 0 and bad[c] >= 0:
            first_bad = bad[c]
    return total, gu_out, geta, per_pref, first_bad


def _stages_numpy(lam, E, want_grad):
    """Stage product for rows of ``lam`` (already in reported order).

    Returns ``(ll, G, Ge, dead)`` with gradients in the column coordinates of
    ``lam`` and ``E``.
    """
    n, k = lam.shape
    ll = np.zeros(n)
    G = np.zeros((n, k))
    Ge = np.zeros_like(E)
    dead = np.zeros(n, dtype=bool)
    for i in range(k - 1):
        m = k - i
        lr = lam[:, i:]
        Em = E[:, :m]
        S = lr.sum(axis=1)
        A = (Em * lr).sum(axis=1)
        B = Em.sum(axis=1)
        d = B <= 0.0
        dead |= d
        A = np.where(d, 1.0, A)
        B = np.where(d, 1.0, B)
        ll += np.log(A) - np.log(B) - np.log(S)
        if want_grad:
            G[:, i:] += Em * lr / A[:, None] - lr / S[:, None]
            Ge[:, :m] += lr / A[:, None] - 1.0 / B[:, None]
    return ll, G, Ge, dead


def _loglik_grad_numpy(u, items, offsets, widx, eta, want_grad, normalize,
                       ptab=None, pstart=None, n_chunks=N_CHUNKS):
    N = offsets.size - 1
    L = u.size
    W, K = eta.shape
    per_pref = np.zeros(N)
    gu = np.zeros(L)
    geta = np.zeros((W, K))
    lengths = np.diff(offsets)
    first_bad = -1
    for k in np.unique(lengths):
        k = int(k)
        rows = np.flatnonzero(lengths == k)
        idx = items[offsets[rows][:, None] + np.arange(k)]
        w = widx[rows]
        U = u[idx]
        lam = np.exp(U - U.max(axis=1, keepdims=True))
        E = eta[w]
        ll, G, Ge, dead = _stages_numpy(lam, E, want_grad)
        if dead.any():
            hit = int(rows[np.argmax(dead)])
            first_bad = hit if first_bad < 0 else min(first_bad, hit)
        if normalize and k >= 3:
            perms = np.array(list(itertools.permutations(range(k))), dtype=np.int64)
            P = perms.shape[0]
            lp = lam[:, perms].reshape(-1, k)
            llp, Gp, Gep, _ = _stages_numpy(lp, np.repeat(E, P, axis=0), want_grad)
            llp = llp.reshape(-1, P)
            zmax = llp.max(axis=1, keepdims=True)
            wts = np.exp(llp - zmax)
            z = wts.sum(axis=1, keepdims=True)
            ll = ll - (zmax[:, 0] + np.log(z[:, 0]))
            if want_grad:
                wts /= z
                inv = np.argsort(perms, axis=1)
                Gp = np.take_along_axis(Gp.reshape(-1, P, k), inv[None, :, :], axis=2)
                G -= np.einsum("np,npk->nk", wts, Gp)
                Ge -= np.einsum("np,npk->nk", wts, Gep.reshape(-1, P, K))
        per_pref[rows] = np.where(dead, 0.0, ll)
        if want_grad:
            live = ~dead[:, None]
            gu += np.bincount(idx.ravel(), weights=np.where(live, G, 0.0).ravel(), minlength=L)
            np.add.at(geta, w, np.where(live, Ge, 0.0))
    bounds = np.arange(n_chunks + 1) * N // n_chunks
    total = 0.0
    for c in range(n_chunks):
        total += per_pref[bounds[c]:bounds[c + 1]].sum()
    if not want_grad:
        gu = np.zeros(1)
        geta = np.zeros((1, K))
    return total, gu, geta, per_pref, first_bad


_PERMS = {}


def _perm_table_cached(K):
    if K not in _PERMS:
        _PERMS[K] = perm_table(K)
    return _PERMS[K]


def weighted_loglik(u, packed, eta, want_grad=True, normalize=True, backend=None):
    """Weighted stage log-likelihood summed over a packed set of rankings.

    Args:
        u: log-scores, one per object.
        packed: ``(items, offsets, worker_index)`` as from ``Dataset.packed``.
        eta: ``(W, K)`` array of uncertainty vectors, row per worker.
        want_grad: also return gradients.
        normalize: divide each ranking's stage product by its sum over all
            orders of the same objects. Without it the stage product is
            returned as is, which is a distribution over orders only for
            ``k = 2`` or for expert and uniform profiles.
        backend: ``"numba"``, ``"numpy"`` or None for the active default.

    Returns:
        ``(total, grad_u, grad_eta, per_preference)``. The gradients are with
        respect to ``u`` and to the raw entries of ``eta``.
    """
    items, offsets, widx = packed
    u = np.ascontiguousarray(u, dtype=np.float64)
    eta = np.ascontiguousarray(eta, dtype=np.float64)
    K = eta.shape[1]
    lengths = np.diff(offsets)
    kmax = int(lengths.max()) if lengths.size else 0
    if kmax > K:
        raise ValueError(f"ranking of length {kmax} but uncertainty vectors have length {K}")
    if normalize and kmax > ENUM_CAP:
        raise EnumerationCapError(kmax, ENUM_CAP)
    if backend is None:
        backend = _accel.backend()
    args = (u, np.asarray(items, np.int64), np.asarray(offsets, np.int64),
            np.asarray(widx, np.int64), eta, bool(want_grad), bool(normalize))
    if backend == "numba":
        ptab, pstart = _perm_table_cached(K if normalize else 2)
        out = _loglik_grad_numba(*args, ptab, pstart, N_CHUNKS)
    else:
        out = _loglik_grad_numpy(*args)
    total, gu, geta, per_pref, bad = out
    if bad >= 0:
        raise DegenerateProfileError(
            f"preference {bad}: uncertainty vector has zero mass on the active entries"
        )
    if not want_grad:
        return total, None, None, per_pref
    return total, gu, geta, per_pref


# ---------------------------------------------------------------------------
# cyclic Jacobi eigenvalue sweeps
# ---------------------------------------------------------------------------


@njit(cache=True)
def _jacobi_numba(a, tol, max_sweeps):
    n = a.shape[0]
    a = a.copy()
    v = np.eye(n)
    off = 0.0
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += 2.0 * a[p, q] * a[p, q]
        off = math.sqrt(off)
        if off < tol or sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for r in range(n):
                    arp = a[r, p]
                    arq = a[r, q]
                    a[r, p] = c * arp - s * arq
                    a[r, q] = s * arp + c * arq
                for r in range(n):
                    apr = a[p, r]
                    aqr = a[q, r]
                    a[p, r] = c * apr - s * aqr
                    a[q, r] = s * apr + c * aqr
                for r in range(n):
                    vrp = v[r, p]
                    vrq = v[r, q]
                    v[r, p] = c * vrp - s * vrq
                    v[r, q] = s * vrp + c * vrq
    return np.diag(a).copy(), v, off


def _jacobi_numpy(a, tol, max_sweeps):
    n = a.shape[0]
    a = np.array(a, dtype=np.float64)
    v = np.eye(n)
    off = 0.0
    for sweep in range(max_sweeps + 1):
        off = math.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
        if off < tol or sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0)), theta)
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p], a[:, q] = c * cp - s * cq, s * cp + c * cq
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :], a[q, :] = c * rp - s * rq, s * rp + c * rq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p], v[:, q] = c * vp - s * vq, s * vp + c * vq
    return np.diag(a).copy(), v, off


def jacobi_eigh(a, tol=1e-12, max_sweeps=100, backend=None):
    """Eigenvalues and eigenvectors of a symmetric matrix by cyclic Jacobi.

    Sweeps stop once the off-diagonal Frobenius norm drops below
    ``tol * max(1, ||a||_F)``. Returns ``(w, V, off)`` with ``w`` ascending and
    ``V[:, i]`` the eigenvector for ``w[i]``.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    scale = max(1.0, float(np.linalg.norm(a)))
    if backend is None:
        backend = _accel.backend()
    fn = _jacobi_numba if backend == "numba" else _jacobi_numpy
    w, v, off = fn(a, tol * scale, int(max_sweeps))
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order], off
