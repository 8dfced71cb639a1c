"""Seeded Monte-Carlo experiment engine.

One experiment sweeps a single variable (SNR, training frames, or BS RF
chains) over a list of values, runs `trials` independent channel draws per
point, and aggregates per-method means and standard errors. Every trial's
randomness derives from (seed, trial index, named substream), so results do
not depend on scheduling and paired comparisons across methods share the
same channels.
"""

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import generate_channel
from .digital import design_digital, dl_filters_from_ul
from .estimation import crlb, crlb_downlink, estimate_downlink, estimate_uplink, nmse
from .hybrid import (
    am_combiner,
    am_precoder_baseband,
    am_rf_precoder,
    budget_betas,
    eckart_young,
    hd_pg,
    norm_betas,
)
from .metrics import sum_rate
from .training import generate_downlink_training, generate_training

__all__ = [
    "DESIGN_METHODS",
    "ESTIMATION_METHODS",
    "ExperimentResult",
    "run_experiment",
    "rng_stream",
]

DESIGN_METHODS = (
    "digital-mmse",
    "digital-mrc",
    "digital-cb",
    "hd-pg",
    "hd-pg-ey",
    "eckart-young-bound",
    "am-mmse",
    "am-mrc",
    "am-cb",
)
ESTIMATION_METHODS = ("ul-nmse", "dl-nmse", "crlb-ul", "crlb-dl")

SWEEP_FIELDS = {"snr": "snr_db", "frames": "n_frames", "rfchains": "l_bs"}

# named RNG substreams
_CHANNEL, _TRAIN, _NOISE, _DL_TRAIN, _DL_NOISE, _DESIGN = range(6)


def rng_stream(seed, trial, tag):
    return np.random.default_rng([seed, trial, tag])


def normalize_method(method, default_csi="perfect"):
    """'digital-mmse' -> 'digital-mmse:perfect'; estimation metrics pass
    through unchanged. Unknown names raise ValueError listing valid ones."""
    if method in ESTIMATION_METHODS:
        return method
    name, _, csi = method.partition(":")
    csi = csi or default_csi
    if name not in DESIGN_METHODS or csi not in ("perfect", "estimated"):
        valid = ", ".join(DESIGN_METHODS + ESTIMATION_METHODS)
        raise ValueError(f"unknown method {method!r}; valid names: {valid}")
    return f"{name}:{csi}"


@dataclass
class PointStat:
    mean: float
    stderr: float
    trials: int
    failures: int


@dataclass
class ExperimentResult:
    sweep_var: str
    sweep_values: list
    methods: list
    stats: dict                      # (method, value) -> PointStat
    samples: dict                    # (method, value) -> per-trial values
    config: object
    traces: dict = field(default_factory=dict)

    def to_csv(self):
        lines = ["method,sweep_var,sweep_value,mean,stderr,trials"]
        for method in self.methods:
            for value in self.sweep_values:
                st = self.stats[(method, value)]
                lines.append(
                    f"{method},{self.sweep_var},{value!r},{st.mean!r},"
                    f"{st.stderr!r},{st.trials}"
                )
        return "\n".join(lines) + "\n"

    def to_json_dict(self):
        rows = []
        for method in self.methods:
            for value in self.sweep_values:
                st = self.stats[(method, value)]
                rows.append(
                    {
                        "method": method,
                        "sweep_var": self.sweep_var,
                        "sweep_value": value,
                        "mean": st.mean,
                        "stderr": st.stderr,
                        "trials": st.trials,
                        "failures": st.failures,
                    }
                )
        return {"config": self.config.to_dict(), "results": rows}


def _design_rates(cfg, channels, methods, freq_hat, rng_design, want_traces):
    """Sum-rates for every requested design method on one channel draw."""
    noise_var = cfg.noise_var
    out, traces = {}, {}
    digital_cache = {}

    def digital(kind, csi):
        key = (kind, csi)
        if key not in digital_cache:
            src = channels.freq if csi == "perfect" else freq_hat
            digital_cache[key] = design_digital(src, cfg, kind, noise_var)
        return digital_cache[key]

    def rate(dl_p, dl_w):
        return sum_rate(channels.freq, dl_p, dl_w, noise_var)

    for method in methods:
        name, _, csi = method.partition(":")
        csi_channels = channels.freq if csi == "perfect" else freq_hat
        if name.startswith("digital-"):
            filt = digital(name.split("-", 1)[1], csi)
            out[method] = rate(*dl_filters_from_ul(filt.precoders,
                                                   filt.combiners, cfg))
        elif name in ("hd-pg", "hd-pg-ey", "eckart-young-bound"):
            filt = digital("mmse", csi)
            comb_targets = filt.combiners
            prec_targets = filt.precoders
            if name == "eckart-young-bound":
                comb, _ = eckart_young(comb_targets, cfg.l_bs)
                precs = _truncate_precoders(prec_targets, cfg.l_ms)
                out[method] = rate(*dl_filters_from_ul(precs, comb, cfg))
                continue
            init = "random" if name == "hd-pg" else "eckart_young"
            targets = comb_targets
            if name == "hd-pg-ey":
                targets, _ = eckart_young(comb_targets, cfg.l_bs)
            hyb_comb, trace = hd_pg(
                targets,
                norm_betas(targets),
                l_chains=cfg.l_bs,
                init=init,
                rng=rng_design,
                side="bs_combiner",
            )
            hyb_prec = _factorize_precoders(prec_targets, cfg, init,
                                            rng_design)
            if want_traces:
                traces[method] = trace
            out[method] = rate(*dl_filters_from_ul(
                hyb_prec, hyb_comb.composed_all(), cfg))
        elif name.startswith("am-"):
            variant = name.split("-", 1)[1]
            t_rf = np.stack(
                [am_rf_precoder(csi_channels[u], cfg.l_ms)
                 for u in range(cfg.n_users)]
            )
            t_bb = np.stack(
                [am_precoder_baseband(csi_channels[u], t_rf[u], cfg.n_streams,
                                      cfg.p_tx / cfg.n_users, noise_var)
                 for u in range(cfg.n_users)]
            )
            hyb_comb, _ = am_combiner(csi_channels, t_rf, t_bb, noise_var,
                                      variant=variant, l_bs=cfg.l_bs)
            prec = np.einsum("ual,ukls->ukas", t_rf, t_bb)
            out[method] = rate(*dl_filters_from_ul(
                prec, hyb_comb.composed_all(), cfg))
        else:
            raise ValueError(f"unknown design method {method!r}")
    return out, traces


def _factorize_precoders(prec_targets, cfg, init, rng):
    """Per-user projected-gradient factorization of the uplink precoders."""
    n_u = prec_targets.shape[0]
    composed = np.zeros_like(prec_targets)
    for u in range(n_u):
        targets = prec_targets[u][None]  # single-user stack
        if init == "eckart_young":
            targets, _ = eckart_young(targets, cfg.l_ms)
        hyb, _ = hd_pg(
            targets,
            budget_betas(cfg.p_tx / cfg.n_users, 1, cfg.n_subcarriers),
            l_chains=cfg.l_ms,
            init=init,
            rng=rng,
            side="ms_precoder",
        )
        composed[u] = hyb.composed_all()[0]
    return composed


def _truncate_precoders(prec_targets, l_ms):
    out = np.zeros_like(prec_targets)
    for u in range(prec_targets.shape[0]):
        trunc, _ = eckart_young(prec_targets[u][None], l_ms)
        out[u] = trunc[0]
    return out


def _run_trial(cfg, trial, methods, want_traces=False):
    """All requested metrics for one trial; failures recorded per method."""
    channels = generate_channel(cfg, rng_stream(cfg.seed, trial, _CHANNEL))
    noise_var = cfg.noise_var
    out, errors, traces = {}, {}, {}

    design = [m for m in methods if m.partition(":")[0] in DESIGN_METHODS]
    need_ul_est = any(m.endswith(":estimated") for m in design)
    need_ul_est |= "ul-nmse" in methods

    freq_hat = None
    ul_ens = None
    if need_ul_est:
        try:
            freq_hat, _, ul_ens = estimate_uplink(
                cfg, channels,
                rng_stream(cfg.seed, trial, _TRAIN),
                rng_stream(cfg.seed, trial, _NOISE),
            )
        except Exception as exc:  # estimation failure poisons dependents
            for m in methods:
                if m == "ul-nmse" or m.endswith(":estimated"):
                    errors[m] = repr(exc)
            freq_hat = None

    if "ul-nmse" in methods and "ul-nmse" not in errors and freq_hat is not None:
        out["ul-nmse"] = nmse(freq_hat, channels.freq)
    if "crlb-ul" in methods:
        try:
            ens = ul_ens or generate_training(
                cfg, rng_stream(cfg.seed, trial, _TRAIN))
            out["crlb-ul"] = crlb(channels, ens, noise_var, cfg) \
                / channels.total_energy()
        except Exception as exc:
            errors["crlb-ul"] = repr(exc)
    if "dl-nmse" in methods:
        try:
            freq_hat_dl, _, _ = estimate_downlink(
                cfg, channels,
                rng_stream(cfg.seed, trial, _DL_TRAIN),
                rng_stream(cfg.seed, trial, _DL_NOISE),
            )
            out["dl-nmse"] = nmse(freq_hat_dl, channels.freq)
        except Exception as exc:
            errors["dl-nmse"] = repr(exc)
    if "crlb-dl" in methods:
        try:
            dl_ens = generate_downlink_training(
                cfg, rng_stream(cfg.seed, trial, _DL_TRAIN))
            out["crlb-dl"] = crlb_downlink(channels, dl_ens, noise_var, cfg) \
                / channels.total_energy()
        except Exception as exc:
            errors["crlb-dl"] = repr(exc)

    runnable = [m for m in design if m not in errors]
    if runnable:
        try:
            rates, traces = _design_rates(
                cfg, channels, runnable, freq_hat,
                rng_stream(cfg.seed, trial, _DESIGN), want_traces,
            )
            out.update(rates)
        except Exception as exc:
            for m in runnable:
                if m not in out:
                    errors[m] = repr(exc)
    return out, errors, traces


def _point_worker(args):
    cfg, trial, methods, want_traces = args
    return trial, _run_trial(cfg, trial, methods, want_traces)


def run_experiment(cfg, sweep_var, sweep_values, methods, trials,
                   default_csi="perfect", workers=1, collect_traces=False):
    """Sweep one variable over the given values and aggregate per-method
    statistics over seeded trials. Failed trials are excluded from the means
    and counted per point."""
    if sweep_var not in SWEEP_FIELDS:
        raise ValueError(f"sweep_var must be one of {sorted(SWEEP_FIELDS)}")
    methods = [normalize_method(m, default_csi) for m in methods]
    field_name = SWEEP_FIELDS[sweep_var]

    stats, samples, traces = {}, {}, {}
    for value in sweep_values:
        cfg_pt = cfg.with_(**{field_name: value})
        jobs = [(cfg_pt, t, methods, collect_traces and t == 0)
                for t in range(trials)]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = dict(
                    (t, r) for t, r in pool.map(_point_worker, jobs)
                )
        else:
            results = dict(_point_worker(job) for job in jobs)
        per_method = {m: [] for m in methods}
        fail = {m: 0 for m in methods}
        for t in range(trials):
            out, errors, tr = results[t]
            for m in methods:
                if m in out:
                    per_method[m].append(out[m])
                else:
                    fail[m] += 1
                    if m in errors:
                        warnings.warn(
                            f"trial {t} failed for {m} at {sweep_var}="
                            f"{value}: {errors[m]}"
                        )
            for m, trace in tr.items():
                traces[(m, value)] = trace
        for m in methods:
            vals = np.asarray(per_method[m], dtype=float)
            n = len(vals)
            mean = float(vals.mean()) if n else float("nan")
            stderr = float(vals.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
            stats[(m, value)] = PointStat(mean, stderr, n, fail[m])
            samples[(m, value)] = vals
    return ExperimentResult(
        sweep_var=sweep_var,
        sweep_values=list(sweep_values),
        methods=methods,
        stats=stats,
        samples=samples,
        config=cfg,
        traces=traces,
    )
