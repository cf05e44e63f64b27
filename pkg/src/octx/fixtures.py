"""Seeded score/label fixtures for the threshold search.

``calibrated_scores`` places the uncertain band between the two reference
operating points so converged thresholds can be compared with them. The band
starts with a lesion exactly at ``band_low`` and ends with a background point
just under ``band_high``; since F1 ignores true negatives, the best low
threshold sits just under the first lesion and the best high threshold just
over the last background point.
"""

from __future__ import annotations

import numpy as np

from .fdtgs import SHORT_RUN_AVG, LONG_RUN_AVG

CALIBRATED_BAND = ((SHORT_RUN_AVG[0] + LONG_RUN_AVG[0]) / 2, (SHORT_RUN_AVG[1] + LONG_RUN_AVG[1]) / 2)


def two_cluster_scores(seed=0, n=2000, pos_frac=0.3, centers=(0.2, 0.9), sd=0.02):
    rng = np.random.default_rng(seed)
    n_pos = int(round(pos_frac * n))
    s = np.r_[rng.normal(centers[0], sd, n - n_pos), rng.normal(centers[1], sd, n_pos)]
    g = np.r_[np.zeros(n - n_pos, bool), np.ones(n_pos, bool)]
    return np.clip(s, 0.0, 1.0), g


def calibrated_scores(seed=0, n=2000, band=CALIBRATED_BAND, frac=(0.45, 0.10, 0.45)):
    """Negatives on ``[0, lo)``, a 50/50 band on ``[lo, hi)``, positives on ``[hi, 1]``."""
    rng = np.random.default_rng(seed)
    lo, hi = band
    n_neg, n_band = int(frac[0] * n), int(frac[1] * n)
    n_pos = n - n_neg - n_band
    neg = rng.uniform(0.0, lo, n_neg)
    mid = rng.uniform(lo, hi, n_band)
    pos = rng.uniform(hi, 1.0, n_pos)
    mid_lab = rng.random(n_band) < 0.5
    mid[0], mid_lab[0] = lo, True
    mid[1], mid_lab[1] = hi - 1e-4, False
    s = np.r_[neg, mid, pos]
    g = np.r_[np.zeros(n_neg, bool), mid_lab, np.ones(n_pos, bool)]
    return s, g


def overlapping_scores(seed=0, n=5000, pos_frac=0.2):
    """Beta-distributed classes with heavy overlap."""
    rng = np.random.default_rng(seed)
    n_pos = int(round(pos_frac * n))
    s = np.r_[rng.beta(2.0, 5.0, n - n_pos), rng.beta(5.0, 2.0, n_pos)]
    g = np.r_[np.zeros(n - n_pos, bool), np.ones(n_pos, bool)]
    return s, g


def shipped_score_sets(seed=0):
    return {
        "two_cluster": two_cluster_scores(seed),
        "calibrated": calibrated_scores(seed),
        "overlapping": overlapping_scores(seed),
    }
