"""Matrix product operators: construction from local terms, compression, application.

MPO site tensors have index order (left bond, out, in, right bond).
"""

from __future__ import annotations

import numpy as np

from .linalg import DEFAULT_FLOOR, TruncationLog, qr_positive, truncated_svd
from .mps import MPS, compress


class MPO:
    def __init__(self, tensors):
        self.tensors = [np.asarray(t, dtype=complex) for t in tensors]
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[3] != 1:
            raise ValueError("boundary bonds must have dimension 1")
        for a, b in zip(self.tensors, self.tensors[1:]):
            if a.shape[3] != b.shape[0]:
                raise ValueError(f"bond mismatch {a.shape} vs {b.shape}")

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[3] for t in self.tensors[:-1]]

    def to_dense(self) -> np.ndarray:
        out = self.tensors[0][0]  # (out, in, right)
        dim_o, dim_i = out.shape[0], out.shape[1]
        for t in self.tensors[1:]:
            out = np.einsum("oir,rpqs->opiqs", out, t)
            dim_o *= t.shape[1]
            dim_i *= t.shape[2]
            out = out.reshape(dim_o, dim_i, t.shape[3])
        return out[:, :, 0]

    @classmethod
    def identity(cls, n: int, d: int) -> "MPO":
        return cls([np.eye(d, dtype=complex).reshape(1, d, d, 1) for _ in range(n)])

    def copy(self) -> "MPO":
        return MPO([t.copy() for t in self.tensors])


def fsm_mpo(terms, n_sites: int, d: int | None = None):
    """Upper-triangular (finite-state-machine) MPO of a sum of local terms.

    Bond index 0 is "nothing placed yet" and the last index is "term
    completed"; the indices in between are open channels, one per product
    component of every two-site term that straddles the bond. Returns
    ``(mpo, blocks)`` where ``blocks[s]`` holds the per-site ``(A, B, C, D)``
    blocks (channel->channel, channel->done, start->channel, start->done)
    used by the W^II propagator.
    """
    if d is None:
        d = terms[0].local_dim
    onsite = [np.zeros((d, d), dtype=complex) for _ in range(n_sites)]
    channels = []  # (start site, end site, left factor, right factor)
    for t in terms:
        if any(not 0 <= s < n_sites for s in t.sites):
            raise IndexError(f"term support {t.sites} outside chain of {n_sites}")
        if len(t.sites) == 1:
            onsite[t.sites[0]] = onsite[t.sites[0]] + t.matrix
        else:
            i, j = t.sites
            if i >= j:
                raise ValueError("two-site term sites must be ascending")
            for a, b in t.factors:
                channels.append((i, j, a, b))

    # channels open across bond b (between sites b-1 and b)
    open_at = [[c for c, ch in enumerate(channels) if ch[0] < b <= ch[1]] for b in range(n_sites + 1)]
    eye = np.eye(d, dtype=complex)
    tensors, blocks = [], []
    for s in range(n_sites):
        left = open_at[s]
        right = open_at[s + 1]
        nl, nr = len(left), len(right)
        A = np.zeros((nl, nr, d, d), dtype=complex)
        B = np.zeros((nl, d, d), dtype=complex)
        C = np.zeros((nr, d, d), dtype=complex)
        D = onsite[s]
        for a, c in enumerate(left):
            i, j, fa, fb = channels[c]
            if j == s:
                B[a] = fb
            else:
                A[a, right.index(c)] = eye
        for b, c in enumerate(right):
            i, j, fa, fb = channels[c]
            if i == s:
                C[b] = fa
        w = np.zeros((nl + 2, d, d, nr + 2), dtype=complex)
        w[0, :, :, 0] = eye
        w[-1, :, :, -1] = eye
        w[0, :, :, -1] = D
        for b in range(nr):
            w[0, :, :, 1 + b] = C[b]
            for a in range(nl):
                w[1 + a, :, :, 1 + b] = A[a, b]
        for a in range(nl):
            w[1 + a, :, :, -1] = B[a]
        tensors.append(w)
        blocks.append((A, B, C, D))
    tensors[0] = tensors[0][:1]
    tensors[-1] = tensors[-1][..., -1:]
    return MPO(tensors), blocks


def compress_mpo(mpo: MPO, tol: float = 1e-13, chi_max: int | None = None):
    """SVD-compress an MPO viewed as a tensor train over (out, in) pairs.

    Singular values below ``tol`` times the largest at each bond are dropped.
    Returns ``(mpo, log)``.
    """
    shapes = [t.shape for t in mpo.tensors]
    as_mps = MPS([t.reshape(t.shape[0], t.shape[1] * t.shape[2], t.shape[3]) for t in mpo.tensors])
    # sweep left-to-right with QR, then right-to-left with truncated SVD
    tensors = [t.copy() for t in as_mps.tensors]
    for k in range(len(tensors) - 1):
        cl, p, cr = tensors[k].shape
        q, r = qr_positive(tensors[k].reshape(cl * p, cr))
        tensors[k] = q.reshape(cl, p, -1)
        tensors[k + 1] = np.tensordot(r, tensors[k + 1], axes=(1, 0))
    log = TruncationLog()
    for k in range(len(tensors) - 1, 0, -1):
        cl, p, cr = tensors[k].shape
        u, s, vh, rep = truncated_svd(tensors[k].reshape(cl, p * cr), chi_max, tol)
        log.add(rep)
        tensors[k] = vh.reshape(-1, p, cr)
        tensors[k - 1] = np.tensordot(tensors[k - 1], u * s[None, :], axes=(2, 0))
    out = [
        t.reshape(t.shape[0], sh[1], sh[2], t.shape[2]) for t, sh in zip(tensors, shapes)
    ]
    return MPO(out), log


def mpo_from_terms(terms, n_sites: int, compress_tol: float | None = 1e-13) -> MPO:
    """MPO of a sum of one- and two-site terms, optionally SVD-compressed.

    ``compress_tol=None`` returns the uncompressed finite-state-machine form.
    """
    if not terms:
        raise ValueError("empty term list")
    mpo, _ = fsm_mpo(terms, n_sites)
    if compress_tol is None:
        return mpo
    return compress_mpo(mpo, compress_tol)[0]


def apply_mpo(mpo: MPO, state: MPS, chi_max: int | None = None, floor: float = DEFAULT_FLOOR):
    """Contract ``mpo`` onto ``state`` and recompress; returns ``(state, log)``."""
    if mpo.n_sites != state.n_sites:
        raise ValueError("MPO and state lengths differ")
    tensors = []
    for w, a in zip(mpo.tensors, state.tensors):
        t = np.einsum("lopr,apb->laorb", w, a)
        wl, ca, d, wr, cb = t.shape
        tensors.append(t.reshape(wl * ca, d, wr * cb))
    out = type(state)(tensors)
    return compress(out, chi_max, floor)
