"""Hybrid RF + baseband filter design.

Two routes: (a) projected-gradient factorization of a digital target stack
under the unit-modulus RF constraint, with Eckart-Young truncation as both
bound and initializer; (b) direct alternating minimization that never forms
a digital solution.

Target stacks are indexed (user, subcarrier, antenna, stream); the per-block
amplitude beta_uk controls the power convention ("budget" for precoders,
"target-norm" for combiners).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .digital import waterfill
from .linalg import nullspace_basis, pinv, svd
from .metrics import ul_mse_from_corr

__all__ = [
    "HybridFilter",
    "FactorizationTrace",
    "phase_project",
    "budget_betas",
    "norm_betas",
    "stack_blocks",
    "unstack_blocks",
    "ls_baseband",
    "distortion",
    "distortion_gradient",
    "hd_pg",
    "eckart_young",
    "am_rf_precoder",
    "am_precoder_baseband",
    "am_combiner",
]

STEP_FLOOR = 1e-12


@dataclass
class HybridFilter:
    """Frequency-flat unit-modulus RF matrix plus per-(user, subcarrier)
    baseband matrices. side records which power convention applies."""

    rf: np.ndarray   # (n_ant, l_chains), |entry| = 1
    bb: np.ndarray   # (U, K, l_chains, n_streams)
    side: str        # "bs_combiner" | "ms_precoder"

    def composed(self, u, k):
        return self.rf @ self.bb[u, k]

    def composed_all(self):
        return np.einsum("al,ukls->ukas", self.rf, self.bb)


@dataclass
class FactorizationTrace:
    """Accepted outer iterations of a projected-gradient run."""

    iterations: list = field(default_factory=list)
    distortion: list = field(default_factory=list)
    step: list = field(default_factory=list)

    def append(self, it, dist, step):
        self.iterations.append(it)
        self.distortion.append(dist)
        self.step.append(step)

    def to_csv(self):
        lines = ["iteration,distortion,step"]
        for it, d, s in zip(self.iterations, self.distortion, self.step):
            lines.append(f"{it},{d!r},{s!r}")
        return "\n".join(lines) + "\n"


def phase_project(mat):
    """Entrywise unit-modulus projection; zero entries map to 1."""
    return np.exp(1j * np.angle(mat))


def budget_betas(power, n_users, n_subcarriers):
    """Per-block amplitudes sqrt(power) for a fixed per-(u, k) budget."""
    return np.full((n_users, n_subcarriers), np.sqrt(power))


def norm_betas(targets):
    """Per-block amplitudes matching each target block's Frobenius norm."""
    return np.linalg.norm(targets, axis=(2, 3))


def stack_blocks(targets):
    """(U, K, n, s) -> n x (U*K*s), blocks ordered user-major."""
    u, k, n, s = targets.shape
    return targets.transpose(2, 0, 1, 3).reshape(n, u * k * s)


def unstack_blocks(stacked, n_users, n_subcarriers):
    n = stacked.shape[0]
    s = stacked.shape[1] // (n_users * n_subcarriers)
    return stacked.reshape(n, n_users, n_subcarriers, s).transpose(1, 2, 0, 3)


def _rf_basis(f_rf):
    q, _ = np.linalg.qr(f_rf)
    return q


def _block_span_norms(stacked, q, n_blocks):
    """Per-block Frobenius norms of the targets projected on span(q)."""
    z = q.conj().T @ stacked
    return np.linalg.norm(z.reshape(z.shape[0], n_blocks, -1), axis=(0, 2))


def ls_baseband(targets, f_rf, betas, side="bs_combiner"):
    """Least-squares baseband blocks for a fixed RF matrix, rescaled so each
    composed block has Frobenius norm beta_uk. Returns (filter, thetas)."""
    n_users, k_sub = targets.shape[:2]
    rf_pinv = pinv(f_rf)
    bb = np.einsum("la,ukas->ukls", rf_pinv, targets)
    thetas = np.empty((n_users, k_sub))
    for u in range(n_users):
        for k in range(k_sub):
            norm = np.linalg.norm(f_rf @ bb[u, k])
            if norm == 0.0:
                raise ValueError(
                    f"composed block (user {u}, subcarrier {k}) has zero norm"
                )
            thetas[u, k] = betas[u, k] / norm
            bb[u, k] *= thetas[u, k]
    return HybridFilter(rf=f_rf, bb=bb, side=side), thetas


def distortion(targets, f_rf, betas):
    """Residual of the scaled LS factorization, summed over (user, subcarrier):
    d_uk = ||F_uk||^2 - 2 beta_uk ||A_uk|| + beta_uk^2 with
    A_uk the target block expressed on the RF column space."""
    n_blocks = targets.shape[0] * targets.shape[1]
    stacked = stack_blocks(targets)
    a_norms = _block_span_norms(stacked, _rf_basis(f_rf), n_blocks)
    t_norms_sq = (np.linalg.norm(targets, axis=(2, 3)) ** 2).reshape(-1)
    b = np.asarray(betas, dtype=float).reshape(-1)
    return float(np.sum(t_norms_sq - 2.0 * b * a_norms + b**2))


def distortion_gradient(targets, f_rf, betas):
    """Conjugate (Wirtinger) gradient of the distortion w.r.t. the RF matrix:
    sum_uk (beta/||A_uk||) (Pi - I) F_uk F_uk^H F_rf (F_rf^H F_rf)^{-1}.

    Blocks with ||A_uk|| = 0 contribute a removable singularity and are
    skipped with a warning.
    """
    u, k, _, s = targets.shape
    n_blocks = u * k
    q = _rf_basis(f_rf)
    stacked = stack_blocks(targets)
    a_norms = _block_span_norms(stacked, q, n_blocks)
    weights = np.zeros(n_blocks)
    degenerate = a_norms == 0.0
    if np.any(degenerate):
        warnings.warn(
            f"{int(degenerate.sum())} target block(s) orthogonal to the RF "
            "span; gradient terms skipped"
        )
    weights[~degenerate] = (
        np.asarray(betas, dtype=float).reshape(-1)[~degenerate]
        / a_norms[~degenerate]
    )
    weighted = (stacked * np.repeat(weights, s)[None, :]) @ stacked.conj().T
    gram = f_rf.conj().T @ f_rf
    right = f_rf @ np.linalg.inv(gram)
    wr = weighted @ right
    return q @ (q.conj().T @ wr) - wr


def hd_pg(targets, betas, l_chains=None, init="random", s0=1.0,
          delta_rel=1e-6, max_iter=200, rng=None, side="bs_combiner"):
    """Projected-gradient factorization of a digital target stack.

    Takes descent steps on the distortion, halving the step until the move
    does not increase it, then projects every RF entry back to unit modulus.
    Stops once the improvement falls below delta_rel times the initial
    distortion or after max_iter accepted iterations, and finishes with the
    scaled LS baseband blocks. init is "random" (needs rng), "eckart_young",
    or an explicit RF seed array.
    """
    if isinstance(init, np.ndarray):
        f_rf = phase_project(init)
    elif init == "random":
        if l_chains is None or rng is None:
            raise ValueError("random init needs l_chains and rng")
        f_rf = random_rf(targets.shape[2], l_chains, rng)
    elif init == "eckart_young":
        if l_chains is None:
            raise ValueError("eckart_young init needs l_chains")
        _, f_rf = eckart_young(targets, l_chains)
    else:
        raise ValueError(f"unknown init: {init!r}")

    d_prev = distortion(targets, f_rf, betas)
    delta = delta_rel * d_prev
    trace = FactorizationTrace()
    trace.append(0, d_prev, float("nan"))
    for it in range(1, max_iter + 1):
        grad = distortion_gradient(targets, f_rf, betas)
        s = s0
        while True:
            cand = phase_project(f_rf - s * grad)
            d_new = distortion(targets, cand, betas)
            if d_new <= d_prev:
                break
            s *= 0.5
            if s < STEP_FLOOR:
                cand, d_new = f_rf, d_prev
                break
        f_rf = cand
        trace.append(it, d_new, s)
        improvement = d_prev - d_new
        d_prev = d_new
        if improvement < delta:
            break
    hybrid, _ = ls_baseband(targets, f_rf, betas, side=side)
    return hybrid, trace


def random_rf(n_ant, l_chains, rng):
    return np.exp(2j * np.pi * rng.uniform(size=(n_ant, l_chains)))


def eckart_young(targets, l_chains):
    """Best rank-l approximation of the stacked target and the matching RF
    seed (phases of the leading left singular vectors)."""
    stacked = stack_blocks(targets)
    u, s, v = svd(stacked)
    rank = min(l_chains, len(s))
    truncated = (u[:, :rank] * s[:rank]) @ v[:, :rank].conj().T
    rf_seed = phase_project(u[:, :l_chains]) if u.shape[1] >= l_chains else \
        np.hstack([phase_project(u), np.ones((u.shape[0],
                                              l_chains - u.shape[1]))])
    n_users, k_sub = targets.shape[:2]
    return unstack_blocks(truncated, n_users, k_sub), rf_seed


def am_rf_precoder(freq_u, l_ms):
    """Frequency-flat RF precoder for one MS: phases of the leading right
    singular vectors of the uplink channels stacked across subcarriers."""
    stacked = np.vstack([freq_u[k].conj().T for k in range(freq_u.shape[0])])
    _, _, v = svd(stacked)
    return phase_project(v[:, :l_ms])


def am_precoder_baseband(freq_u, t_rf, n_streams, power, noise_var):
    """Water-filled baseband precoders on the equivalent channel H^H T_rf,
    rescaled so every composed block meets the power budget exactly."""
    k_sub = freq_u.shape[0]
    l_ms = t_rf.shape[1]
    bb = np.zeros((k_sub, l_ms, n_streams), dtype=complex)
    for k in range(k_sub):
        h_eq = freq_u[k].conj().T @ t_rf  # n_bs x l_ms
        _, s, v = svd(h_eq)
        count = min(n_streams, len(s))
        sv = np.zeros(n_streams)
        sv[:count] = s[:count]
        gains = sv**2 / noise_var
        if not np.any(gains > 0):
            continue
        alloc = waterfill(gains, power)
        cols = np.zeros((l_ms, n_streams), dtype=complex)
        cols[:, :count] = v[:, :count]
        cand = cols @ np.diag(np.sqrt(alloc))
        norm = np.linalg.norm(t_rf @ cand)
        if norm > 0:
            bb[k] = cand * (np.sqrt(power) / norm)
    return bb


def _correlations(freq_csi, t_hybrid_composed, noise_var):
    """Desired-signal and interference-plus-noise matrices per subcarrier."""
    n_u, k_sub = freq_csi.shape[:2]
    n_bs = freq_csi.shape[3]
    r_d = np.zeros((n_u, k_sub, n_bs, t_hybrid_composed.shape[3]), dtype=complex)
    r_i = np.zeros((k_sub, n_bs, n_bs), dtype=complex)
    for k in range(k_sub):
        r_i[k] = noise_var * np.eye(n_bs)
        for u in range(n_u):
            h_ul = freq_csi[u, k].conj().T
            ht = h_ul @ t_hybrid_composed[u, k]
            r_d[u, k] = ht
            r_i[k] += ht @ ht.conj().T
    return r_d, r_i


def am_combiner(freq_csi, t_rf, t_bb, noise_var, variant="mmse", l_bs=None,
                max_iter=50, tol=1e-6, nullspace_tol=1e-10):
    """Alternating hybrid combiner design for fixed uplink hybrid precoders.

    Alternates the closed-form RF update (phases of the summed desired-signal
    correlations) with the per-variant baseband update, tracks the sum-MSE,
    and returns the best iterate seen since monotonicity is not guaranteed.
    """
    n_u, k_sub = freq_csi.shape[:2]
    n_streams = t_bb.shape[3]
    composed_t = np.einsum("ual,ukls->ukas", t_rf, t_bb)
    r_d, r_i = _correlations(freq_csi, composed_t, noise_var)
    if l_bs is None:
        l_bs = n_u * n_streams
    # interference-only correlations for the cb variant
    r_bar = np.zeros((n_u, k_sub, r_i.shape[1], r_i.shape[1]), dtype=complex)
    for u in range(n_u):
        for k in range(k_sub):
            r_bar[u, k] = r_i[k] - noise_var * np.eye(r_i.shape[1]) \
                - r_d[u, k] @ r_d[u, k].conj().T

    stacked = np.hstack([r_d[u, k] for u in range(n_u) for k in range(k_sub)])
    u_lead, _, _ = svd(stacked)
    if u_lead.shape[1] < l_bs:
        u_lead = np.hstack([u_lead, np.ones((u_lead.shape[0],
                                             l_bs - u_lead.shape[1]))])
    f_rf = phase_project(u_lead[:, :l_bs])

    best = None
    best_mse = np.inf
    prev_mse = np.inf
    trace = []
    for _ in range(max_iter):
        f_bb = _am_baseband(f_rf, r_d, r_i, r_bar, noise_var, variant,
                            nullspace_tol)
        total = 0.0
        for u in range(n_u):
            for k in range(k_sub):
                f = f_rf @ f_bb[u, k]
                total += ul_mse_from_corr(r_d[u, k], r_i[k], f, n_streams)
        trace.append(total)
        if total < best_mse:
            best_mse = total
            best = (f_rf.copy(), f_bb.copy())
        if abs(prev_mse - total) < tol:
            break
        prev_mse = total
        f_rf = phase_project(
            sum(r_d[u, k] @ f_bb[u, k].conj().T
                for u in range(n_u) for k in range(k_sub))
        )
    f_rf, f_bb = best
    return HybridFilter(rf=f_rf, bb=f_bb, side="bs_combiner"), trace


def _am_baseband(f_rf, r_d, r_i, r_bar, noise_var, variant, nullspace_tol):
    n_u, k_sub = r_d.shape[:2]
    l_bs = f_rf.shape[1]
    n_streams = r_d.shape[3]
    f_bb = np.zeros((n_u, k_sub, l_bs, n_streams), dtype=complex)
    for k in range(k_sub):
        gram_i = f_rf.conj().T @ r_i[k] @ f_rf
        for u in range(n_u):
            rhs = f_rf.conj().T @ r_d[u, k]
            if variant == "mmse":
                f_bb[u, k] = np.linalg.solve(gram_i, rhs)
            elif variant == "mrc":
                gram_n = noise_var * (f_rf.conj().T @ f_rf)
                f_bb[u, k] = pinv(gram_n) @ rhs
            elif variant == "cb":
                gram_bar = f_rf.conj().T @ r_bar[u, k] @ f_rf
                basis = nullspace_basis(gram_bar, nullspace_tol)
                if basis.shape[1] == 0:
                    warnings.warn("projected interference spans the RF space; "
                                  "using the identity projection")
                    proj = np.eye(l_bs, dtype=complex)
                else:
                    proj = basis @ basis.conj().T
                f_bb[u, k] = proj @ rhs
            else:
                raise ValueError(f"unknown am variant: {variant!r}")
    return f_bb
