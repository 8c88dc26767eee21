"""Guessing probability and conditional min-entropy with certified brackets.

The central object is a classical-quantum ensemble: a label X distributed
with probabilities p_x, and a side-information operator rho_x per label. The
guessing probability p_guess(X|B) is the optimum of a semidefinite program;
we return a two-sided bracket whose certificates (an explicitly feasible POVM
for the lower end, an explicitly dual-feasible operator for the upper end)
are re-verified with plain numpy, so no solver is trusted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import log2
from typing import Hashable, Sequence

import numpy as np

from .quantum import partial_trace, trace_norm_hermitian

MAX_DIM = 64
DEFAULT_GAP = 1e-6
CERT_ATOL = 1e-9  # how much certificate infeasibility we tolerate when re-verifying


@dataclass
class CqEnsemble:
    """Classical label with quantum side information; zero-weight labels are dropped."""

    labels: list[Hashable]
    probs: np.ndarray
    states: list[np.ndarray]

    def __post_init__(self) -> None:
        if not (len(self.labels) == len(self.probs) == len(self.states)):
            raise ValueError("labels, probs, states must align")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate labels")
        probs = np.asarray(self.probs, dtype=float)
        if probs.min() < -1e-12:
            raise ValueError("negative probability")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {probs.sum()}, not 1")
        keep = [i for i, p in enumerate(probs) if p > 0.0]
        if not keep:
            raise ValueError("empty ensemble")
        self.labels = [self.labels[i] for i in keep]
        self.probs = probs[keep]
        dim = np.asarray(self.states[keep[0]]).shape[0]
        if dim > MAX_DIM:
            raise ValueError(f"side information dimension {dim} exceeds cap {MAX_DIM}")
        states = []
        for i in keep:
            rho = np.asarray(self.states[i], dtype=np.complex128)
            if rho.shape != (dim, dim):
                raise ValueError("states must share one dimension")
            if not np.allclose(rho, rho.conj().T, atol=CERT_ATOL):
                raise ValueError("state not hermitian")
            if abs(np.trace(rho).real - 1.0) > 1e-8:
                raise ValueError("state trace != 1")
            if float(np.linalg.eigvalsh(rho).min()) < -CERT_ATOL:
                raise ValueError("state not positive semidefinite")
            states.append(rho)
        self.states = states

    @property
    def dim(self) -> int:
        return self.states[0].shape[0]

    def weighted(self) -> list[np.ndarray]:
        return [p * rho for p, rho in zip(self.probs, self.states)]

    def trace_out_last_factor(self, keep_dim: int, drop_dim: int) -> "CqEnsemble":
        """Same ensemble with the trailing tensor factor of each state removed."""
        if keep_dim * drop_dim != self.dim:
            raise ValueError("factor dimensions do not multiply to the state dimension")
        reduced = [partial_trace(rho, [keep_dim, drop_dim], [0]) for rho in self.states]
        return CqEnsemble(list(self.labels), self.probs.copy(), reduced)


@dataclass
class GuessBracket:
    """Certified two-sided estimate of a guessing probability."""

    lower: float
    upper: float
    povm: list[np.ndarray]
    sigma: np.ndarray
    converged: bool
    iterations: int

    @property
    def gap(self) -> float:
        return self.upper - self.lower


def assert_povm(povm: Sequence[np.ndarray], dim: int, atol: float = CERT_ATOL) -> None:
    """Raise unless the elements are PSD and sum to the identity."""
    total = np.zeros((dim, dim), dtype=np.complex128)
    for e in povm:
        e = np.asarray(e)
        if e.shape != (dim, dim):
            raise ValueError("POVM element shape mismatch")
        if float(np.linalg.eigvalsh(0.5 * (e + e.conj().T)).min()) < -atol:
            raise ValueError("POVM element not positive semidefinite")
        total = total + e
    if np.abs(total - np.eye(dim)).max() > 1e-7:
        raise ValueError("POVM does not sum to the identity")


def _psd_pinv_sqrt(m: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(m)
    cut = max(vals.max(), 0.0) * 1e-13
    inv = np.where(vals > cut, 1.0 / np.sqrt(np.maximum(vals, cut)), 0.0)
    return (vecs * inv) @ vecs.conj().T


def _pgm(weighted: list[np.ndarray]) -> list[np.ndarray]:
    """Pretty-good measurement, padded to a complete POVM off the support."""
    avg = np.sum(weighted, axis=0)
    root = _psd_pinv_sqrt(avg)
    povm = [root @ w @ root for w in weighted]
    defect = np.eye(avg.shape[0]) - np.sum(povm, axis=0)
    return [e + defect / len(povm) for e in povm]


def _repair_povm(povm: list[np.ndarray]) -> list[np.ndarray]:
    """Clip negative eigenvalues, then renormalize symmetrically to sum to I."""
    clipped = []
    for e in povm:
        h = 0.5 * (np.asarray(e) + np.asarray(e).conj().T)
        vals, vecs = np.linalg.eigh(h)
        clipped.append((vecs * np.maximum(vals, 0.0)) @ vecs.conj().T)
    total = np.sum(clipped, axis=0)
    # the total is close to I by construction, so the inverse root is benign
    root = _psd_pinv_sqrt(total + 1e-14 * np.eye(total.shape[0]))
    return [root @ e @ root for e in clipped]


def _primal_value(weighted: list[np.ndarray], povm: list[np.ndarray]) -> float:
    return float(sum(np.trace(w @ e).real for w, e in zip(weighted, povm)))


def _dual_from_povm(weighted: list[np.ndarray], povm: list[np.ndarray]) -> np.ndarray:
    """Dual-feasible certificate built from a primal iterate by an identity shift."""
    sigma = np.zeros_like(weighted[0])
    for w, e in zip(weighted, povm):
        sigma = sigma + w @ e
    sigma = 0.5 * (sigma + sigma.conj().T)
    shift = max(float(np.linalg.eigvalsh(w - sigma).max()) for w in weighted)
    if shift > 0.0:
        sigma = sigma + shift * np.eye(sigma.shape[0])
    return sigma


def _ascend(weighted: list[np.ndarray], povm: list[np.ndarray], steps: int) -> tuple[list[np.ndarray], int]:
    """Fixed-point ascent for the discrimination value, stopping when stalled."""
    best = _primal_value(weighted, povm)
    stall = 0
    done = 0
    for done in range(1, steps + 1):
        g = np.zeros_like(weighted[0])
        for w, e in zip(weighted, povm):
            g = g + w @ e @ w
        root = _psd_pinv_sqrt(0.5 * (g + g.conj().T))
        nxt = [root @ (w @ e @ w) @ root for w, e in zip(weighted, povm)]
        defect = np.eye(g.shape[0]) - np.sum(nxt, axis=0)
        nxt = [e + defect / len(nxt) for e in nxt]
        val = _primal_value(weighted, nxt)
        if val >= best - 1e-15:
            povm = nxt
        if val - best < 1e-14:
            stall += 1
            if stall >= 25:
                break
        else:
            stall = 0
        best = max(best, val)
    return povm, done


def _dual_via_sdp(weighted: list[np.ndarray]) -> tuple[np.ndarray | None, list[np.ndarray] | None]:
    """Solve min tr(sigma) s.t. sigma >= W_x; also return the constraint duals
    (the optimal POVM up to solver accuracy). Returns (None, None) on failure."""
    try:
        import cvxpy as cp
    except Exception:
        return None, None
    dim = weighted[0].shape[0]
    complex_data = any(np.abs(w.imag).max() > 0 for w in weighted)
    sigma = cp.Variable((dim, dim), hermitian=True) if complex_data else cp.Variable((dim, dim), symmetric=True)
    cons = []
    for w in weighted:
        wmat = w if complex_data else w.real
        cons.append(sigma - wmat >> 0)
    prob = cp.Problem(cp.Minimize(cp.real(cp.trace(sigma))), cons)
    try:
        for solver in ("CLARABEL", "SCS", "CVXOPT"):
            try:
                prob.solve(solver=solver)
            except Exception:
                continue
            if sigma.value is not None:
                break
    except Exception:
        return None, None
    if sigma.value is None:
        return None, None
    duals = []
    for c in cons:
        d = c.dual_value
        if d is None:
            duals = None
            break
        duals.append(np.asarray(d, dtype=np.complex128))
    sig = np.asarray(sigma.value, dtype=np.complex128)
    return 0.5 * (sig + sig.conj().T), duals


def _feasible_dual(weighted: list[np.ndarray], sigma: np.ndarray) -> np.ndarray:
    shift = max(float(np.linalg.eigvalsh(w - sigma).max()) for w in weighted)
    if shift > 0.0:
        sigma = sigma + (shift + 1e-14) * np.eye(sigma.shape[0])
    return sigma


def _verify_certificates(
    weighted: list[np.ndarray], povm: list[np.ndarray], sigma: np.ndarray
) -> tuple[float, float]:
    """Recompute both bracket ends from the certificates alone."""
    dim = weighted[0].shape[0]
    assert_povm(povm, dim)
    worst = min(float(np.linalg.eigvalsh(sigma - w).min()) for w in weighted)
    if worst < -CERT_ATOL:
        raise ValueError(f"dual certificate infeasible by {worst}")
    lower = _primal_value(weighted, povm)
    upper = float(np.trace(sigma).real)
    return lower, upper


def pguess(ensemble: CqEnsemble, gap: float = DEFAULT_GAP, iteration_cap: int = 100_000) -> GuessBracket:
    """Certified bracket on the optimal guessing probability of the label.

    Lower certificate: a feasible POVM seeded by the pretty-good measurement
    and improved by fixed-point ascent (plus, when available, the repaired
    dual-optimal measurement). Upper certificate: a dual-feasible sigma.
    """
    weighted = ensemble.weighted()
    dim = ensemble.dim
    if len(weighted) == 1:
        e = [np.eye(dim, dtype=np.complex128)]
        return GuessBracket(1.0, 1.0, e, weighted[0], True, 0)

    povm = _pgm(weighted)
    iters_used = 0
    # cheap route first: ascent plus the shifted-iterate dual certificate
    povm, used = _ascend(weighted, povm, min(400, iteration_cap))
    iters_used += used
    povm = _repair_povm(povm)
    sigma = _feasible_dual(weighted, _dual_from_povm(weighted, povm))
    lower, upper = _verify_certificates(weighted, povm, sigma)

    if upper - lower > gap:
        # accurate route: interior-point dual plus its complementary POVM
        sdp_sigma, sdp_povm = _dual_via_sdp(weighted)
        if sdp_sigma is not None:
            cand_sigma = _feasible_dual(weighted, sdp_sigma)
            if float(np.trace(cand_sigma).real) < upper:
                sigma = cand_sigma
        if sdp_povm is not None:
            cand = _repair_povm(sdp_povm)
            if _primal_value(weighted, cand) > _primal_value(weighted, povm):
                povm = cand
        remaining = max(iteration_cap - iters_used, 0)
        if remaining:
            raw, used = _ascend(weighted, povm, min(2000, remaining))
            iters_used += used
            raw = _repair_povm(raw)
            if _primal_value(weighted, raw) > _primal_value(weighted, povm):
                povm = raw
        cand_sigma = _feasible_dual(weighted, _dual_from_povm(weighted, povm))
        if float(np.trace(cand_sigma).real) < float(np.trace(sigma).real):
            sigma = cand_sigma
        lower, upper = _verify_certificates(weighted, povm, sigma)

    return GuessBracket(lower, upper, povm, sigma, upper - lower <= gap, iters_used)


def hmin(ensemble: CqEnsemble, gap: float = DEFAULT_GAP) -> tuple[float, float]:
    """Bracket [lower, upper] on H_min(X|B) = -log2 p_guess."""
    b = pguess(ensemble, gap=gap)
    return -log2(b.upper), -log2(b.lower)


def helstrom_binary(p0: float, rho0: np.ndarray, p1: float, rho1: np.ndarray) -> float:
    """Closed-form optimal guessing probability for two hypotheses."""
    if abs(p0 + p1 - 1.0) > 1e-10 or min(p0, p1) < 0:
        raise ValueError("priors must be a distribution over two labels")
    diff = p0 * np.asarray(rho0, dtype=np.complex128) - p1 * np.asarray(rho1, dtype=np.complex128)
    return 0.5 * (1.0 + trace_norm_hermitian(diff))


@dataclass
class ChainRuleResult:
    """Outcome of a certified chain-rule comparison H(A|BZ) >= H(A|B) - log2|Z|."""

    holds: bool
    decided: bool
    lhs_bits: tuple[float, float]
    rhs_bits: tuple[float, float]
    z_dim: int


def chain_rule_check(ensemble_bz: CqEnsemble, z_dim: int, gap: float = DEFAULT_GAP) -> ChainRuleResult:
    """Certified check that conditioning on a |Z|-dimensional extra register
    costs at most log2|Z| bits of min-entropy.

    The ensemble's states live on B tensor Z with Z the trailing factor.
    Returns decided=False when the two brackets are too wide to separate.
    """
    if z_dim < 1 or ensemble_bz.dim % z_dim != 0:
        raise ValueError("z_dim must divide the side-information dimension")
    b_dim = ensemble_bz.dim // z_dim
    lhs = hmin(ensemble_bz, gap=gap)
    reduced = ensemble_bz.trace_out_last_factor(b_dim, z_dim)
    rhs = hmin(reduced, gap=gap)
    budget = log2(z_dim)
    slack = 1e-9
    if lhs[0] >= rhs[1] - budget - slack:
        return ChainRuleResult(True, True, lhs, rhs, z_dim)
    if lhs[1] < rhs[0] - budget - slack:
        return ChainRuleResult(False, True, lhs, rhs, z_dim)
    return ChainRuleResult(True, False, lhs, rhs, z_dim)
