"""First and second derivatives of polar power expressions.

All Hessian helpers return the four blocks ``(aa, av, va, vv)`` where ``a``
is voltage angle and ``v`` voltage magnitude, rows first.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def _diag(v: np.ndarray) -> sp.csr_matrix:
    return sp.diags(v, format="csr")


def dsbr_dv(Ybr: sp.csr_matrix, end: np.ndarray, V: np.ndarray
            ) -> tuple[sp.csr_matrix, sp.csr_matrix, np.ndarray]:
    """Branch end flows ``S = V[end] conj(Ybr V)`` and their derivatives (angle, magnitude)."""
    nl, nb = Ybr.shape
    I = Ybr @ V
    Vn = V / np.abs(V)
    rows = np.arange(nl)
    CV = sp.csr_matrix((V[end], (rows, end)), shape=(nl, nb))
    CVn = sp.csr_matrix((Vn[end], (rows, end)), shape=(nl, nb))
    dS_dVa = 1j * (_diag(np.conj(I)) @ CV - _diag(V[end]) @ (Ybr @ _diag(V)).conj())
    dS_dVm = _diag(V[end]) @ (Ybr @ _diag(Vn)).conj() + _diag(np.conj(I)) @ CVn
    S = V[end] * np.conj(I)
    return dS_dVa.tocsr(), dS_dVm.tocsr(), S


def d2sbus_dv2(Ybus: sp.csr_matrix, V: np.ndarray, lam: np.ndarray):
    """Hessian blocks of ``lam' S(V)`` with ``S = V conj(Ybus V)`` (complex)."""
    Ibus = Ybus @ V
    A = _diag(lam * V)
    B = Ybus @ _diag(V)
    C = A @ B.conj()
    D = Ybus.conj().T @ _diag(V)
    E = _diag(V).conj() @ (D @ _diag(lam) - _diag(D @ lam))
    F = C - A @ _diag(np.conj(Ibus))
    G = _diag(1.0 / np.abs(V))
    Gaa = E + F
    Gva = 1j * G @ (E - F)
    Gav = Gva.T
    Gvv = G @ (C + C.T) @ G
    return Gaa, Gav, Gva, Gvv


def d2sbr_dv2(Cbr: sp.csr_matrix, Ybr: sp.csr_matrix, V: np.ndarray, lam: np.ndarray):
    """Hessian blocks of ``lam' S_br(V)`` with ``S_br = (Cbr V) conj(Ybr V)`` (complex)."""
    A = Ybr.conj().T @ _diag(lam) @ Cbr
    B = _diag(V).conj() @ A @ _diag(V)
    D = _diag((A @ V) * np.conj(V))
    E = _diag((A.T @ np.conj(V)) * V)
    F = B + B.T
    G = _diag(1.0 / np.abs(V))
    Haa = F - D - E
    Hva = 1j * G @ (B - B.T - D + E)
    Hav = Hva.T
    Hvv = G @ F @ G
    return Haa, Hav, Hva, Hvv


def d2asbr_dv2(dS_dVa, dS_dVm, S, Cbr, Ybr, V, mu, second_order: bool = True):
    """Hessian blocks of ``mu' |S_br|^2`` (real)."""
    dmu = _diag(mu)
    outer_aa = dS_dVa.T @ dmu @ dS_dVa.conj()
    outer_va = dS_dVm.T @ dmu @ dS_dVa.conj()
    outer_av = dS_dVa.T @ dmu @ dS_dVm.conj()
    outer_vv = dS_dVm.T @ dmu @ dS_dVm.conj()
    if second_order:
        Saa, Sav, Sva, Svv = d2sbr_dv2(Cbr, Ybr, V, np.conj(S) * mu)
    else:
        Saa = Sav = Sva = Svv = 0
    return (2 * (Saa + outer_aa).real, 2 * (Sav + outer_av).real,
            2 * (Sva + outer_va).real, 2 * (Svv + outer_vv).real)
