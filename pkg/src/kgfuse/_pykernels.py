"""Pure numpy implementations of the DistMult hot loops.

Same signatures as the compiled ``_ckernels`` module.
"""

import numpy as np

NAME = "python"


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sgd_step(ent, rel, heads, rels, tails, labels, lr, renorm):
    """One mini-batch SGD step of DistMult under logistic loss.

    Gradients are taken at the pre-step table and summed per row.  Returns
    the summed loss of the batch (before the step).
    """
    h = ent[heads].astype(np.float64)
    r = rel[rels].astype(np.float64)
    t = ent[tails].astype(np.float64)
    y = labels.astype(np.float64)
    sigma = np.sum(r * h * t, axis=1)
    loss = _softplus(-y * sigma)
    scale = (-y * _sigmoid(-y * sigma))[:, None]
    if lr != 0.0:
        dtype = ent.dtype
        np.add.at(ent, heads, (-lr * scale * r * t).astype(dtype))
        np.add.at(ent, tails, (-lr * scale * r * h).astype(dtype))
        np.add.at(rel, rels, (-lr * scale * h * t).astype(dtype))
        if renorm:
            rows = np.unique(np.concatenate([heads, tails]))
            norms = np.sqrt(np.sum(ent[rows].astype(np.float64) ** 2, axis=1))
            norms[norms == 0.0] = 1.0
            ent[rows] = (ent[rows] / norms[:, None]).astype(dtype)
    return float(loss.sum())


def filtered_ranks(scores, targets, filt_ptr, filt_idx):
    """Rank of each target among its row, skipping filtered candidates.

    ``filt_ptr``/``filt_idx`` hold, CSR style, the candidates excluded for
    each query.  Ties rank the lower entity index first.
    """
    n_q, n = scores.shape
    excluded = np.zeros((n_q, n), dtype=bool)
    rows = np.repeat(np.arange(n_q), np.diff(filt_ptr))
    excluded[rows, filt_idx] = True
    true_scores = scores[np.arange(n_q), targets][:, None]
    cols = np.arange(n)[None, :]
    better = (scores > true_scores) | ((scores == true_scores) & (cols < targets[:, None]))
    better &= ~excluded
    better[np.arange(n_q), targets] = False
    return 1 + better.sum(axis=1).astype(np.int64)
