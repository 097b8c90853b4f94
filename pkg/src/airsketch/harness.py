"""Monte Carlo driver: streams, estimates, result rows, summaries and CSV."""

from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import dataclass, fields, astuple
import io
import json
import logging
import math
import os

import numpy as np
from scipy import stats
from threadpoolctl import threadpool_limits

from . import rng
from .baselines import (BOOTSTRAP_TAG, UploadChannel, alignment_svd_dtd,
                        centroid_svd_dtd, local_eigenspaces, one_shot_cost)
from .bounds import BoundInputs, delta_diagnostics, dtd_error, error_decomposition, expected_error_bound
from .channel import aircomp_round, draw_slot, pinned_beamformer, transmit_powers
from .detector import WhiteningContext, accumulate, ml_subspace, right_covariance, whiten
from .selection import choose_slots
from .sketch import slot_sketches
from .tensor import partition_columns, synth_unfolding

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResultRow:
    trial: int
    slot: int
    communication_time: int
    mode: str
    error: float
    sketch_term: float
    residual_term: float
    expected_error_bound: float = None
    delta_ok: float = None
    delta_mean: float = None
    M_tilde: int = None
    eta_th: float = None
    fallback: int = None


COLUMNS = tuple(f.name for f in fields(ResultRow))


@dataclass
class TrialOutput:
    rows: list
    resampled: int = 0
    power_excess: float = 0.0     # max over slots/devices of power / (I P) - 1
    binding_gap: float = 0.0      # max over slots of |1 - max_k power / (I P)|


@dataclass(frozen=True)
class Problem:
    """Per-run fixed data: the planted unfolding and its column split."""

    X: np.ndarray
    truth: object
    partition: object


def make_problem(cfg):
    X, truth = synth_unfolding(cfg.I, cfg.J, cfg.r, cfg.xi, cfg.root_seed)
    return Problem(X, truth, partition_columns(X, cfg.K, cfg.root_seed))


def trial_seed(cfg, trial):
    return rng.derive_seed(cfg.root_seed, rng.TRIAL, trial)


def _estimate_row(trial, t, mode, cfg, prob, symbols, etas, included, sigma2, decision=None):
    ctx = WhiteningContext(sigma2, prob.partition.global_trace, etas, cfg.M, cfg.I)
    obs = whiten(accumulate([symbols[i] for i in included]), right_covariance(ctx, included), included)
    est = ml_subspace(obs, cfg.r, slot=t)
    err = dtd_error(est.U, prob.X)
    sketch_term, residual = error_decomposition(est.U, prob.truth)
    inputs = BoundInputs(prob.truth.singular_values, cfg.r, cfg.M, sigma2, [etas[i] for i in included])
    delta = delta_diagnostics(obs.Phi, inputs)
    extra = {}
    if decision is not None:
        extra = dict(M_tilde=decision.M_tilde, eta_th=decision.threshold, fallback=int(decision.fallback))
    return ResultRow(trial, t, t * cfg.I, mode, err, sketch_term, residual,
                     expected_error_bound(inputs), delta.fraction_ok, delta.mean, **extra)


def stream_trial(cfg, prob, trial, modes):
    """One streamed trial; estimates for every mode in ``modes`` share its symbols."""
    seed = trial_seed(cfg, trial)
    sigma2 = cfg.noise_var
    part = prob.partition
    schedule = set(cfg.schedule)
    pinned = cfg.mode == "fig3-validation" or modes == ("fig3-validation",)
    out = TrialOutput([])
    IP = cfg.I * cfg.P
    symbols, etas = [], []
    for t in range(1, cfg.T_max + 1):
        sketches = slot_sketches(seed, t, part.blocks, cfg.M)
        if pinned:
            channels, bf = None, pinned_beamformer(t, cfg.M, cfg.N_r, sigma2)
        else:
            channels, bf, n = draw_slot(seed, t, cfg.K, cfg.N_r, cfg.N_t, cfg.M, part.traces,
                                        cfg.P, cfg.I, cfg.gamma_shape, cfg.gamma_scale)
            out.resampled += n
            power = transmit_powers(bf.A, channels, part.traces) / IP
            out.power_excess = max(out.power_excess, float(power.max() - 1.0))
            out.binding_gap = max(out.binding_gap, float(abs(1.0 - power.max())))
        symbols.append(aircomp_round(sketches, channels, bf, sigma2, seed))
        etas.append(bf.eta)
        if t not in schedule:
            continue
        for mode in modes:
            if mode == "flycom+selection":
                dec = choose_slots(etas, cfg.r, sigma2, part.global_trace, cfg.M)
                out.rows.append(_estimate_row(trial, t, mode, cfg, prob, symbols, etas,
                                              dec.selected_slots, sigma2, dec))
            else:
                out.rows.append(_estimate_row(trial, t, mode, cfg, prob, symbols, etas,
                                              tuple(range(t)), sigma2))
    return out


def baseline_trial(cfg, prob, trial):
    seed = trial_seed(cfg, trial)
    locals_ = local_eigenspaces(prob.partition.blocks, cfg.r)
    audit = []
    ctx = UploadChannel(seed, cfg.M, cfg.noise_var, cfg.P, cfg.N_r, cfg.N_t,
                        cfg.gamma_shape, cfg.gamma_scale, audit=audit)
    if cfg.mode == "centroid":
        est = centroid_svd_dtd(locals_, ctx, cfg.r)
        cols = cfg.I
    else:
        reference = centroid_svd_dtd(locals_, ctx, cfg.r, tag=BOOTSTRAP_TAG).U
        est = alignment_svd_dtd(locals_, ctx, cfg.r, reference)
        cols = cfg.r
    err = dtd_error(est.U, prob.X)
    sketch_term, residual = error_decomposition(est.U, prob.truth)
    blocks = math.ceil(cols / cfg.M)
    row = ResultRow(trial, blocks, one_shot_cost(cfg.I, cols, cfg.M), cfg.mode, err, sketch_term, residual)
    peaks = np.array([p.max() for p in audit])
    return TrialOutput([row], power_excess=float(np.max(peaks) - 1.0),
                       binding_gap=float(np.max(np.abs(1.0 - peaks))))


def _run_trials(cfg, fn, threads):
    trials = range(cfg.trials)
    with threadpool_limits(limits=1):
        if threads <= 1:
            return [fn(i) for i in trials]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, trials))


@dataclass
class RunResult:
    config: object
    rows: list
    resampled: int
    power_excess: float
    binding_gap: float

    def summary(self):
        return summarize(self.rows)


def run_experiment(cfg, threads=1, problem=None):
    """Every trial of ``cfg``; rows ordered by trial, then slot."""
    prob = problem or make_problem(cfg)
    if cfg.mode in ("centroid", "alignment"):
        outs = _run_trials(cfg, lambda i: baseline_trial(cfg, prob, i), threads)
    else:
        outs = _run_trials(cfg, lambda i: stream_trial(cfg, prob, i, (cfg.mode,)), threads)
    return _collect(cfg, outs)


def _collect(cfg, outs):
    rows = [row for o in outs for row in o.rows]
    return RunResult(cfg, rows, sum(o.resampled for o in outs),
                     max(o.power_excess for o in outs), max(o.binding_gap for o in outs))


def compare_selection(cfg, threads=1, problem=None):
    """Streamed estimates with and without selection on identical streams.

    Returns ``(run_result, paired)`` where ``paired`` holds, per slot, the
    mean error difference (selection minus none), its 95% CI and the
    one-sided paired t-test p-value for "selection is better".
    """
    prob = problem or make_problem(cfg)
    modes = ("flycom", "flycom+selection")
    outs = _run_trials(cfg, lambda i: stream_trial(cfg, prob, i, modes), threads)
    res = _collect(cfg.replace(mode="flycom+selection"), outs)
    return res, paired_summary(res.rows, *modes)


def paired_summary(rows, base_mode, test_mode):
    errs = {}
    for row in rows:
        errs.setdefault(row.slot, {}).setdefault(row.mode, {})[row.trial] = row.error
    out = []
    for slot in sorted(errs):
        a, b = errs[slot].get(base_mode, {}), errs[slot].get(test_mode, {})
        trials = sorted(set(a) & set(b))
        x = np.array([a[i] for i in trials])
        y = np.array([b[i] for i in trials])
        diff = y - x
        lo, hi = _ci(diff)
        if len(trials) > 1 and np.any(diff != 0):
            p = float(stats.ttest_rel(y, x, alternative="less").pvalue)
        else:
            p = math.nan
        out.append(dict(slot=slot, n=len(trials), mean_without=float(x.mean()),
                        mean_with=float(y.mean()), mean_diff=float(diff.mean()),
                        ci_low=lo, ci_high=hi, p_value=p))
    return out


def _ci(x, level=0.95):
    x = np.asarray(x, dtype=float)
    m = float(x.mean())
    if x.size < 2:
        return m, m
    half = stats.t.ppf(0.5 + level / 2, x.size - 1) * x.std(ddof=1) / math.sqrt(x.size)
    return m - half, m + half


def summarize(rows):
    """Per (mode, slot): trial count, mean error with 95% CI, mean bound and delta."""
    groups = {}
    for row in rows:
        groups.setdefault((row.mode, row.slot), []).append(row)
    out = []
    for (mode, slot), rs in sorted(groups.items()):
        err = np.array([r.error for r in rs])
        lo, hi = _ci(err)
        bound = [r.expected_error_bound for r in rs if r.expected_error_bound is not None]
        delta = [r.delta_mean for r in rs if r.delta_mean is not None]
        out.append(dict(mode=mode, slot=slot, communication_time=rs[0].communication_time,
                        n=len(rs), mean_error=float(err.mean()), ci_low=lo, ci_high=hi,
                        residual=rs[0].residual_term,
                        expected_error_bound=float(np.mean(bound)) if bound else None,
                        delta_mean=float(np.mean(delta)) if delta else None,
                        delta_ok=float(np.mean([r.delta_ok for r in rs]))
                        if rs[0].delta_ok is not None else None))
    return out


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_table(records, columns, path):
    """Bit-stable CSV: fixed columns, 17 significant digits, LF endings."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for rec in records:
        vals = astuple(rec) if hasattr(rec, "__dataclass_fields__") else [rec.get(c) for c in columns]
        w.writerow([_fmt(v) for v in vals])
    data = buf.getvalue().encode()
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(data)
    return data


def emit_csv(rows, path):
    return write_table(rows, COLUMNS, path)


SUMMARY_COLUMNS = ("mode", "slot", "communication_time", "n", "mean_error", "ci_low", "ci_high",
                   "residual", "expected_error_bound", "delta_mean", "delta_ok")
PAIRED_COLUMNS = ("slot", "n", "mean_without", "mean_with", "mean_diff", "ci_low", "ci_high",
                  "p_value")


def sidecar(path, suffix):
    root, _ = os.path.splitext(path)
    return root + suffix


def write_manifest(result, path, outputs):
    cfg = result.config
    manifest = dict(config_sha256=cfg.digest(), root_seed=cfg.root_seed, trials=cfg.trials,
                    mode=cfg.mode, outputs=outputs, zf_resamples=result.resampled,
                    max_power_excess=result.power_excess, max_binding_gap=result.binding_gap)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def cost_table(I=100, M=4, sample_sizes=(50, 100, 200, 500, 1000, 1500, 2000, 3000, 5000),
               ranks=(1, 5, 10, 15, 20, 25, 30)):
    """Closed-form device cost: sketch flops ``I J M`` vs SVD ``min(I,J)^2 max(I,J)``,
    and raw-data memory passes 1 vs ``r``."""
    rows = []
    for J in sample_sizes:
        sk, svd = I * J * M, min(I, J) ** 2 * max(I, J)
        rows.append(dict(table="flops", parameter="J", value=J, sketching=sk, svd=svd, ratio=svd / sk))
    for r in ranks:
        rows.append(dict(table="memory_passes", parameter="r", value=r, sketching=1, svd=r,
                         ratio=float(r)))
    return rows


COST_COLUMNS = ("table", "parameter", "value", "sketching", "svd", "ratio")
