"""Fast invariant suite behind the `selftest` subcommand.

Each check is a small self-contained function returning (ok, detail); the
runner prints one line per check and reports overall success. Everything
here must finish well under a minute.
"""

import numpy as np

from . import channel, digital, estimation, hybrid, linalg, metrics
from .config import desk_scale

__all__ = ["finite_difference_gradient", "check_gradient", "run_selftest"]


def _rand_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def finite_difference_gradient(fun, mat, h=1e-6):
    """Central-difference Wirtinger gradient d fun / d conj(mat) of a
    real-valued function of a complex matrix."""
    grad = np.zeros(mat.shape, dtype=complex)
    for idx in np.ndindex(*mat.shape):
        e = np.zeros(mat.shape, dtype=complex)
        e[idx] = h
        d_re = (fun(mat + e) - fun(mat - e)) / (2 * h)
        d_im = (fun(mat + 1j * e) - fun(mat - 1j * e)) / (2 * h)
        grad[idx] = (d_re + 1j * d_im) / 2.0
    return grad


def check_gradient(seeds=(0, 1, 2), shape=(12, 3), blocks=(2, 3), n_streams=2,
                   tol=1e-5, gradient_fn=None):
    """Max relative error of the analytic distortion gradient against central
    finite differences. gradient_fn is injectable so a broken gradient can be
    demonstrated to fail."""
    if gradient_fn is None:
        gradient_fn = hybrid.distortion_gradient
    worst = 0.0
    for seed in seeds:
        rng = np.random.default_rng(seed)
        n_users, k_sub = blocks
        targets = _rand_complex(rng, n_users, k_sub, shape[0], n_streams)
        betas = hybrid.budget_betas(1.0 / n_users, n_users, k_sub)
        f_rf = hybrid.random_rf(shape[0], shape[1], rng)
        analytic = gradient_fn(targets, f_rf, betas)
        numeric = finite_difference_gradient(
            lambda m: hybrid.distortion(targets, m, betas), f_rf
        )
        err = np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric)
        worst = max(worst, float(err))
    return worst <= tol, f"max rel err {worst:.2e}"


def _check_svd():
    rng = np.random.default_rng(7)
    a = _rand_complex(rng, 8, 4)
    u, s, v = linalg.svd(a)
    resid = np.linalg.norm(a - (u * s) @ v.conj().T) / np.linalg.norm(a)
    orth = max(
        np.linalg.norm(u.conj().T @ u - np.eye(4)),
        np.linalg.norm(v.conj().T @ v - np.eye(4)),
    )
    ok = resid <= 1e-10 and orth <= 1e-10 and np.all(np.diff(s) <= 0)
    return ok, f"resid {resid:.1e}, orth {orth:.1e}"


def _check_pinv():
    rng = np.random.default_rng(3)
    a = _rand_complex(rng, 6, 2)
    p = linalg.pinv(a)
    checks = [
        np.linalg.norm(a @ p @ a - a) / np.linalg.norm(a),
        np.linalg.norm(p @ a @ p - p) / np.linalg.norm(p),
        np.linalg.norm((a @ p).conj().T - a @ p) / np.linalg.norm(a @ p),
        np.linalg.norm((p @ a).conj().T - p @ a) / np.linalg.norm(p @ a),
    ]
    worst = max(checks)
    return worst <= 1e-9, f"worst Penrose residual {worst:.1e}"


def _check_cholesky():
    rng = np.random.default_rng(5)
    f = _rand_complex(rng, 8, 4)
    c = f.conj().T @ f
    d = linalg.cholesky_upper(c)
    resid = np.linalg.norm(d.conj().T @ d - c) / np.linalg.norm(c)
    upper = np.allclose(d, np.triu(d))
    return resid <= 1e-10 and upper, f"resid {resid:.1e}"


def _check_nullspace():
    rng = np.random.default_rng(11)
    u1 = _rand_complex(rng, 6)
    u2 = _rand_complex(rng, 6)
    a = np.outer(u1, u1.conj()) + np.outer(u2, u2.conj())
    basis = linalg.nullspace_basis(a)
    resid = np.linalg.norm(a @ basis) / np.linalg.norm(a)
    return basis.shape[1] == 4 and resid <= 1e-8, \
        f"dim {basis.shape[1]}, resid {resid:.1e}"


def _check_kron_khatri_rao():
    rng = np.random.default_rng(13)
    a = _rand_complex(rng, 2, 2)
    b = _rand_complex(rng, 2, 2)
    manual = np.empty((4, 4), dtype=complex)
    for i in range(2):
        for j in range(2):
            manual[2 * i:2 * i + 2, 2 * j:2 * j + 2] = a[i, j] * b
    ok = np.allclose(linalg.kron(a, b), manual)
    kr = linalg.khatri_rao(a, b)
    for j in range(2):
        ok &= np.allclose(kr[:, j], np.kron(a[:, j], b[:, j]))
    return ok, "elementwise expansion matches"


def _check_array_model():
    v = channel.steering_vector(4, np.pi / 6)
    expect = np.exp(1j * np.pi * np.arange(4) * 0.5) / 2.0
    ok = np.allclose(v, expect)
    ok &= np.isclose(channel.raised_cosine(0.0, 0.8), 1.0)
    ok &= np.allclose(channel.raised_cosine(np.arange(1, 5), 0.8), 0.0)
    return ok, "steering + raised-cosine closed forms"


def _check_channel_dft():
    cfg = desk_scale(n_bs=8, n_ms=4, g_bs=16, g_ms=8, n_subcarriers=8,
                     n_delay_taps=4)
    rng = np.random.default_rng(17)
    chan = channel.generate_channel(cfg, rng)
    k = np.arange(cfg.n_subcarriers)
    d = np.arange(cfg.n_delay_taps)
    dft = np.exp(-2j * np.pi * np.outer(k, d) / cfg.n_subcarriers)
    rebuilt = np.einsum("kd,udmn->ukmn", dft, chan.taps)
    err = np.max(np.abs(rebuilt - chan.freq))
    return err <= 1e-12, f"max defect {err:.1e}"


def _check_waterfill():
    alloc = digital.waterfill(np.array([2.0, 1.0, 0.25]), 1.0)
    levels = [alloc[i] + 1.0 / g for i, g in enumerate([2.0, 1.0, 0.25])
              if alloc[i] > 0]
    ok = abs(sum(alloc) - 1.0) <= 1e-12
    ok &= max(levels) - min(levels) <= 1e-9
    return ok, f"budget defect {abs(sum(alloc) - 1.0):.1e}"


def _check_mmse_optimality():
    cfg = desk_scale(n_bs=8, n_ms=4, g_bs=16, g_ms=8, n_subcarriers=2,
                     l_bs=4, l_ms=2)
    rng = np.random.default_rng(19)
    chan = channel.generate_channel(cfg, rng)
    filt = digital.design_digital(chan.freq, cfg, "mmse")
    mrc = digital.design_digital(chan.freq, cfg, "mrc")
    cb = digital.design_digital(chan.freq, cfg, "cb")
    ok = True
    for u in range(cfg.n_users):
        for k in range(cfg.n_subcarriers):
            base = metrics.ul_mse(chan.freq, filt.precoders,
                                  filt.combiners[u, k], cfg.noise_var, u, k)
            for other in (mrc, cb):
                ok &= base <= metrics.ul_mse(
                    chan.freq, filt.precoders, other.combiners[u, k],
                    cfg.noise_var, u, k) + 1e-9
    return ok, "mmse <= mrc, cb on every (user, subcarrier)"


def _check_hd_pg():
    rng = np.random.default_rng(23)
    targets = _rand_complex(rng, 2, 4, 12, 2)
    betas = hybrid.norm_betas(targets)
    hyb, trace = hybrid.hd_pg(targets, betas, l_chains=3, init="random",
                              rng=rng, max_iter=60)
    monotone = np.all(np.diff(trace.distortion) <= 1e-12)
    _, s, _ = linalg.svd(hybrid.stack_blocks(targets))
    bound = float(np.sum(s[3:] ** 2))
    ok = bool(monotone) and trace.distortion[-1] >= bound - 1e-9
    ok &= np.allclose(np.abs(hyb.rf), 1.0)
    return ok, f"final {trace.distortion[-1]:.3e} >= EY {bound:.3e}"


def _check_swomp_oracle():
    from itertools import combinations

    rng = np.random.default_rng(29)
    ups = _rand_complex(rng, 8, 12)
    true = sorted(rng.choice(12, size=2, replace=False))
    gains = _rand_complex(rng, 4, 2)
    y = gains @ ups[:, true].T
    est = estimation.sw_omp(y, ups, epsilon=1e-18, max_support=8)
    best, best_res = None, np.inf
    for subset in combinations(range(12), 2):
        cols = ups[:, subset]
        sol, _, _, _ = np.linalg.lstsq(cols, y.T, rcond=None)
        res = float(np.sum(np.abs(y.T - cols @ sol) ** 2))
        if res < best_res:
            best, best_res = subset, res
    ok = sorted(est.support.tolist()) == list(best) == true
    return ok, f"support {sorted(est.support.tolist())}"


def _check_exact_recovery():
    cfg = desk_scale(n_bs=8, n_ms=4, g_bs=16, g_ms=8, n_subcarriers=4,
                     n_frames=24, seed=31)
    rng = np.random.default_rng(cfg.seed)
    chan = channel.generate_channel(cfg, rng)
    freq_hat, est, _ = estimation.estimate_uplink(
        cfg, chan, np.random.default_rng(1), np.random.default_rng(2),
        noise_var=0.0,
    )
    err = estimation.nmse(freq_hat, chan.freq)
    expected = sorted(
        int(u * cfg.g_bs * cfg.g_ms + s)
        for u in range(cfg.n_users)
        for s in channel.virtual_support(chan.paths[u], cfg)
    )
    ok = sorted(est.support.tolist()) == expected and err <= 1e-8
    return ok, f"nmse {10 * np.log10(max(err, 1e-300)):.1f} dB"


def _check_mse_bound():
    rng = np.random.default_rng(37)
    ok = True
    for _ in range(20):
        h = _rand_complex(rng, 6, 6)
        t = _rand_complex(rng, 6, 2) / 3
        r_d = h @ t
        r_i = r_d @ r_d.conj().T + 0.5 * np.eye(6)
        f_mmse = np.linalg.solve(r_i, r_d)
        mmse_val = metrics.ul_mse_from_corr(r_d, r_i, f_mmse, 2)
        f_hyb = hybrid.phase_project(_rand_complex(rng, 6, 3)) @ \
            _rand_complex(rng, 3, 2) / 3
        mse = metrics.ul_mse_from_corr(r_d, r_i, f_hyb, 2)
        e = f_mmse - f_hyb
        bound = mmse_val + np.linalg.norm(e) ** 2 * np.real(np.trace(r_i))
        ok &= mse <= bound + 1e-9
    return ok, "hybrid MSE within the MMSE + distortion bound"


def _check_sum_rate():
    # scalar Shannon case
    h = np.array([[[[0.8 + 0.3j]]]])
    p = np.array([[[[1.0 + 0j]]]])
    w = np.array([[[[1.0 + 0j]]]])
    r = metrics.sum_rate(h, p, w, 0.1)
    expect = np.log2(1 + abs(0.8 + 0.3j) ** 2 / 0.1)
    ok = np.isclose(r, expect)
    # combiner scale invariance
    rng = np.random.default_rng(41)
    h2 = _rand_complex(rng, 2, 2, 4, 8)
    p2 = _rand_complex(rng, 2, 2, 8, 2) / 4
    w2 = _rand_complex(rng, 2, 2, 4, 2)
    base = metrics.sum_rate(h2, p2, w2, 0.3)
    for scale in (0.1, 10.0):
        ok &= np.isclose(base, metrics.sum_rate(h2, p2, w2 * scale, 0.3))
    return ok, f"scalar rate {r:.3f} = {expect:.3f}"


def _check_crlb():
    cfg = desk_scale(n_bs=8, n_ms=4, g_bs=16, g_ms=8, n_subcarriers=4,
                     n_frames=16, seed=43)
    chan = channel.generate_channel(cfg, np.random.default_rng(0))
    from .training import generate_training

    ens = generate_training(cfg, np.random.default_rng(1))
    g1 = estimation.crlb(chan, ens, 0.1, cfg)
    g2 = estimation.crlb(chan, ens, 0.2, cfg)
    return np.isclose(g2, 2 * g1), f"doubling noise scales bound by {g2 / g1:.6f}"


CHECKS = [
    ("svd reconstruction/orthonormality", _check_svd),
    ("pinv Penrose identities", _check_pinv),
    ("cholesky roundtrip", _check_cholesky),
    ("nullspace residual", _check_nullspace),
    ("kron / khatri-rao expansion", _check_kron_khatri_rao),
    ("array + pulse closed forms", _check_array_model),
    ("channel tap-DFT identity", _check_channel_dft),
    ("water-filling KKT", _check_waterfill),
    ("mmse combiner optimality", _check_mmse_optimality),
    ("distortion gradient vs finite diff", check_gradient),
    ("hd-pg monotone + EY bound", _check_hd_pg),
    ("sw-omp exhaustive oracle", _check_swomp_oracle),
    ("noiseless on-grid exact recovery", _check_exact_recovery),
    ("hybrid MSE upper bound", _check_mse_bound),
    ("sum-rate closed form/invariance", _check_sum_rate),
    ("crlb noise scaling", _check_crlb),
]


def run_selftest(out=print):
    failures = 0
    width = max(len(name) for name, _ in CHECKS)
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:
            ok, detail = False, f"raised {exc!r}"
        status = "pass" if ok else "FAIL"
        failures += 0 if ok else 1
        out(f"{name:<{width}}  {status}  {detail}")
    out(f"{len(CHECKS) - failures}/{len(CHECKS)} checks passed")
    return failures
