"""MC-dropout predictive distributions, intervals, calibration and E@k.

The predictive variance follows the MC-dropout decomposition: sample
variance of the stochastic forward passes plus the model-uncertainty floor
tau_inv. Each of the T passes draws its masks from an independent RNG
stream derived from (seed, t), so passes are order-independent and may run
concurrently while the aggregate stays deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import kernels, nn
from .errors import OutOfRange, UnsupportedFamily
from .grades import clip_grade
from .metrics import mae as mae_metric
from .metrics import tick_errors

MC_FAMILIES = ("MLP", "LSTM")  # LSTM MC dropout is a beyond-paper extension
DEFAULT_SAMPLES = 100
CALIBRATION_LEVELS = (0.5, 0.8, 0.9, 0.95)


@dataclass
class PredictiveDistribution:
    samples: np.ndarray
    mean: float
    variance: float
    tau_inv: float

    @property
    def n_samples(self):
        return int(self.samples.size)

    @property
    def std(self):
        return float(np.sqrt(self.variance))

    def with_tau(self, tau_inv):
        """Same MC samples with a different model-uncertainty floor."""
        return _aggregate(self.samples, tau_inv)


@dataclass
class PredictionInterval:
    level: float
    lower: float
    upper: float

    def clipped(self):
        return PredictionInterval(self.level, clip_grade(self.lower),
                                  clip_grade(self.upper))

    @property
    def width(self):
        return self.upper - self.lower


def _aggregate(samples, tau_inv):
    samples = np.asarray(samples, dtype=np.float64)
    mean = float(np.mean(samples))
    # max(0, .) guards float noise so variance never dips below tau_inv.
    sample_var = max(0.0, float(np.mean(samples * samples) - mean * mean))
    return PredictiveDistribution(samples=samples, mean=mean,
                                  variance=tau_inv + sample_var,
                                  tau_inv=tau_inv)


def _mc_sample(art, example, rng):
    p = art.params
    rate = art.dropout
    if art.family == "MLP":
        masks = nn.mlp_masks(rate, p["bh"].shape[0] + 1, p["W0"].shape[0],
                             rng if rate > 0 else None)
        out, _, _ = kernels.mlp_fwd(p["W0"], p["b0"], p["Wh"], p["bh"],
                                    p["wo"], float(p["bo"]), example.static, masks)
        return float(out)
    X = example.sequence_matrix()
    masks = nn.lstm_masks(rate, X.shape[0], p["Wx0"].shape[1],
                          p["B"].shape[0], p["Wh0"].shape[1],
                          rng if rate > 0 else None)
    out = kernels.lstm_fwd(p["Wx0"], p["Wh0"], p["Wxd"], p["Whd"], p["B"],
                           p["wo"], float(p["bo"]), X, *masks)
    return float(out[0])


def predict_mc(art, example, n_samples=DEFAULT_SAMPLES, tau_inv=0.0, seed=0):
    """T stochastic forward passes with per-sample seeded mask streams."""
    if art.family not in MC_FAMILIES:
        raise UnsupportedFamily(
            f"MC dropout needs a dropout-trained family, not {art.family}")
    if n_samples < 2:
        raise OutOfRange(f"need at least 2 MC samples, got {n_samples}")
    if tau_inv < 0:
        raise OutOfRange(f"tau_inv must be >= 0, got {tau_inv}")
    samples = np.empty(n_samples)
    for t in range(n_samples):
        rng = np.random.default_rng(np.random.SeedSequence((seed, t)))
        samples[t] = _mc_sample(art, example, rng)
    return _aggregate(samples, tau_inv)


def predict_mc_dataset(art, ds, n_samples=DEFAULT_SAMPLES, tau_inv=0.0, seed=0):
    """Per-example distributions; example i uses stream seed (seed, i)."""
    return [predict_mc(art, ex, n_samples=n_samples, tau_inv=tau_inv,
                       seed=int(np.random.SeedSequence((seed, i)).generate_state(1)[0]))
            for i, ex in enumerate(ds.examples)]


def interval(dist, level):
    """Normal-quantile prediction interval; unclipped (coverage math)."""
    if not (0.0 < level < 1.0):
        raise OutOfRange(f"interval level {level} outside (0, 1)")
    z = float(ndtri(0.5 + level / 2.0))
    sigma = dist.std
    return PredictionInterval(level, dist.mean - z * sigma, dist.mean + z * sigma)


def calibration_curve(dists, labels, levels=CALIBRATION_LEVELS):
    """Empirical coverage of the alpha-interval per requested level."""
    labels = np.asarray(labels, dtype=np.float64)
    if len(dists) == 0 or labels.size != len(dists):
        raise OutOfRange("need one label per distribution")
    out = []
    for level in levels:
        hits = 0
        for dist, y in zip(dists, labels):
            iv = interval(dist, level)
            if iv.lower <= y <= iv.upper:
                hits += 1
        out.append((float(level), hits / len(dists)))
    return out


def confidence_ranking(dists):
    """Example indices ordered most-confident (lowest variance) first."""
    keyed = sorted(range(len(dists)), key=lambda i: (dists[i].variance, i))
    return keyed


def error_at_k(dists, labels, k, metric="mae"):
    """Error over the k most confident predictions (clipped means)."""
    labels = np.asarray(labels, dtype=np.float64)
    n = len(dists)
    if not (1 <= k <= n):
        raise OutOfRange(f"k={k} outside 1..{n}")
    order = confidence_ranking(dists)[:k]
    preds = np.array([clip_grade(dists[i].mean) for i in order])
    ys = labels[np.array(order)]
    if metric == "mae":
        return mae_metric(preds, ys)
    if metric == "tick":
        return float(np.mean(tick_errors(preds, ys)))
    raise OutOfRange(f"unknown metric {metric!r}")


def error_at_k_curve(dists, labels, n_bins=10, metric="mae"):
    """E@k at decile cut points; returns [(k, error), ...]."""
    n = len(dists)
    ks = sorted({max(1, int(round(n * frac / n_bins))) for frac in range(1, n_bins + 1)})
    return [(k, error_at_k(dists, labels, k, metric=metric)) for k in ks]


def risk_confidence_curves(dists, labels, threshold=2.0, n_bins=10):
    """FNR/FPR over increasingly inclusive confidence subsets.

    Cut i keeps the i/n_bins most confident examples (variance quantile).
    Rates over empty denominators (no positives / no negatives retained)
    are reported as 0.0.
    """
    labels = np.asarray(labels, dtype=np.float64)
    order = confidence_ranking(dists)
    n = len(dists)
    rows = []
    for b in range(1, n_bins + 1):
        keep = order[:max(1, int(round(n * b / n_bins)))]
        y = labels[np.array(keep)]
        preds = np.array([clip_grade(dists[i].mean) for i in keep])
        pos_true = y < threshold
        pos_pred = preds < threshold
        tp = int(np.sum(pos_true & pos_pred))
        fn = int(np.sum(pos_true & ~pos_pred))
        fp = int(np.sum(~pos_true & pos_pred))
        tn = int(np.sum(~pos_true & ~pos_pred))
        fnr = fn / (fn + tp) if fn + tp > 0 else 0.0
        fpr = fp / (fp + tn) if fp + tn > 0 else 0.0
        rows.append({"cut": b / n_bins, "fnr": float(fnr), "fpr": float(fpr),
                     "coverage": len(keep) / n})
    return rows


def per_bin_error(dists, labels, n_bins=10, metric="mae"):
    """Non-cumulative per-decile error, most confident bin first."""
    labels = np.asarray(labels, dtype=np.float64)
    order = confidence_ranking(dists)
    n = len(dists)
    edges = [int(round(n * b / n_bins)) for b in range(n_bins + 1)]
    out = []
    for b in range(n_bins):
        idx = order[edges[b]:edges[b + 1]]
        if not idx:
            continue
        preds = np.array([clip_grade(dists[i].mean) for i in idx])
        ys = labels[np.array(idx)]
        if metric == "mae":
            out.append(mae_metric(preds, ys))
        else:
            out.append(float(np.mean(tick_errors(preds, ys))))
    return out


def tune_tau(dists, labels, tau_grid, levels=CALIBRATION_LEVELS):
    """Pick tau_inv minimizing mean |coverage - alpha|; ties to smaller tau."""
    if len(tau_grid) == 0:
        raise OutOfRange("empty tau grid")
    best = None
    for tau in sorted(tau_grid):
        adjusted = [d.with_tau(tau) for d in dists]
        curve = calibration_curve(adjusted, labels, levels)
        score = float(np.mean([abs(cov - lvl) for lvl, cov in curve]))
        if best is None or score < best[0]:
            best = (score, tau)
    return best[1]
