"""ESIM sentence-pair classifier in numpy with hand-written backpropagation.

Pipeline per pair: shared BiLSTM encoder, soft alignment by dot-product
attention, enhancement ``tanh(W [a; a~; a - a~; a * a~] + b)``, shared
BiLSTM composition, max and mean pooling, one tanh hidden layer and a
3-way softmax.  All arithmetic is float64.

Sequences are padded to a common length per batch and carried with prefix
masks; padded positions never influence unpadded outputs.
"""

from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass, field, asdict
from typing import Sequence, TextIO

import numpy as np

log = logging.getLogger(__name__)

LABELS = ("entailment", "contradiction", "neutral")
LABEL_INDEX = {name: i for i, name in enumerate(LABELS)}
OPTIMIZERS = ("sgd", "adam")


@dataclass
class EsimConfig:
    hidden: int = 500
    dropout: float = 0.5
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 64
    patience: int = 5
    seed: int = 0
    clip_norm: float = 5.0
    optimizer: str = "sgd"
    max_premise_len: int = 202
    max_hypothesis_len: int = 20

    def __post_init__(self):
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")


# -- parameters -------------------------------------------------------------

def param_shapes(input_dim: int, hidden: int) -> dict[str, tuple[int, ...]]:
    H = hidden
    shapes = {}
    for block, din in (("enc", input_dim), ("comp", H)):
        for direction in ("f", "b"):
            shapes[f"{block}_{direction}_Wx"] = (din, 4 * H)
            shapes[f"{block}_{direction}_Wh"] = (H, 4 * H)
            shapes[f"{block}_{direction}_b"] = (4 * H,)
    shapes["proj_W"] = (8 * H, H)
    shapes["proj_b"] = (H,)
    shapes["cls_W1"] = (8 * H, H)
    shapes["cls_b1"] = (H,)
    shapes["cls_W2"] = (H, 3)
    shapes["cls_b2"] = (3,)
    return shapes


@dataclass
class EsimParams:
    input_dim: int
    hidden: int
    arrays: dict[str, np.ndarray]

    def __post_init__(self):
        expected = param_shapes(self.input_dim, self.hidden)
        if set(expected) != set(self.arrays):
            raise ValueError("parameter names do not match the architecture")
        for name, shape in expected.items():
            if self.arrays[name].shape != shape:
                raise ValueError(f"{name}: shape {self.arrays[name].shape}, expected {shape}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def copy(self) -> "EsimParams":
        return EsimParams(self.input_dim, self.hidden, {k: v.copy() for k, v in self.arrays.items()})

    def lstm(self, block: str, direction: str):
        p = f"{block}_{direction}_"
        return self.arrays[p + "Wx"], self.arrays[p + "Wh"], self.arrays[p + "b"]


def init_params(input_dim: int, hidden: int, rng: np.random.Generator) -> EsimParams:
    """Weights uniform in +-1/sqrt(fan_in); biases zero."""
    arrays = {}
    for name, shape in param_shapes(input_dim, hidden).items():
        if len(shape) == 1:
            arrays[name] = np.zeros(shape)
        else:
            bound = 1.0 / math.sqrt(shape[0])
            arrays[name] = rng.uniform(-bound, bound, size=shape)
    return EsimParams(input_dim, hidden, arrays)


# -- batching ---------------------------------------------------------------

@dataclass
class PaddedBatch:
    premise: np.ndarray      # B x Tp x D
    premise_mask: np.ndarray  # B x Tp
    hypothesis: np.ndarray
    hypothesis_mask: np.ndarray
    labels: np.ndarray       # B, int

    @property
    def size(self) -> int:
        return len(self.labels)


@dataclass
class EncodedPair:
    premise: np.ndarray
    hypothesis: np.ndarray
    label: int = -1


def _pad(seqs: Sequence[np.ndarray], width: int, min_len: int = 1):
    T = max([len(s) for s in seqs] + [min_len])
    out = np.zeros((len(seqs), T, width))
    mask = np.zeros((len(seqs), T))
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
        mask[i, :len(s)] = 1.0
    return out, mask


def make_batch(pairs: Sequence[EncodedPair], pad_to: tuple[int, int] | None = None) -> PaddedBatch:
    width = pairs[0].premise.shape[1]
    p, mp = _pad([x.premise for x in pairs], width, pad_to[0] if pad_to else 1)
    h, mh = _pad([x.hypothesis for x in pairs], width, pad_to[1] if pad_to else 1)
    return PaddedBatch(p, mp, h, mh, np.array([x.label for x in pairs], dtype=np.int64))


def truncate(pair: EncodedPair, config: EsimConfig) -> EncodedPair:
    p, h = pair.premise, pair.hypothesis
    if len(p) > config.max_premise_len or len(h) > config.max_hypothesis_len:
        log.warning("truncating pair of lengths (%d, %d) to (%d, %d)", len(p), len(h),
                    config.max_premise_len, config.max_hypothesis_len)
        p, h = p[:config.max_premise_len], h[:config.max_hypothesis_len]
    return EncodedPair(p, h, pair.label)


# -- LSTM -------------------------------------------------------------------

def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_forward(x, mask, Wx, Wh, b):
    """Masked LSTM over B x T x D input, gates ordered (input, forget, output, cell)."""
    B, T, _ = x.shape
    H = Wh.shape[0]
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    out = np.zeros((B, T, H))
    xw = x @ Wx + b
    cache = {"x": x, "mask": mask, "Wx": Wx, "Wh": Wh,
             "h_prev": np.zeros((T, B, H)), "c_prev": np.zeros((T, B, H)),
             "gates": np.zeros((T, B, 4 * H)), "tc": np.zeros((T, B, H))}
    for t in range(T):
        z = xw[:, t] + h @ Wh
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        o = _sigmoid(z[:, 2 * H:3 * H])
        g = np.tanh(z[:, 3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        m = mask[:, t, None]
        cache["h_prev"][t] = h
        cache["c_prev"][t] = c
        cache["gates"][t] = np.concatenate([i, f, o, g], axis=1)
        cache["tc"][t] = tc
        out[:, t] = m * h_new
        h = m * h_new + (1.0 - m) * h
        c = m * c_new + (1.0 - m) * c
    return out, cache


def lstm_backward(dout, cache):
    x, mask, Wx, Wh = cache["x"], cache["mask"], cache["Wx"], cache["Wh"]
    B, T, _ = x.shape
    H = Wh.shape[0]
    dWh = np.zeros_like(Wh)
    dz_all = np.zeros((B, T, 4 * H))
    dh_carry = np.zeros((B, H))
    dc_carry = np.zeros((B, H))
    for t in reversed(range(T)):
        m = mask[:, t, None]
        gates = cache["gates"][t]
        i, f, o, g = gates[:, :H], gates[:, H:2 * H], gates[:, 2 * H:3 * H], gates[:, 3 * H:]
        tc = cache["tc"][t]
        dh_new = m * (dout[:, t] + dh_carry)
        dc_new = m * dc_carry + dh_new * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc_new * g * i * (1.0 - i),
            dc_new * cache["c_prev"][t] * f * (1.0 - f),
            dh_new * tc * o * (1.0 - o),
            dc_new * i * (1.0 - g * g),
        ], axis=1)
        dz_all[:, t] = dz
        dWh += cache["h_prev"][t].T @ dz
        dh_carry = (1.0 - m) * dh_carry + dz @ Wh.T
        dc_carry = (1.0 - m) * dc_carry + dc_new * f
    dx = dz_all @ Wx.T
    dWx = np.einsum("btd,btg->dg", x, dz_all)
    db = dz_all.sum(axis=(0, 1))
    return dx, dWx, dWh, db


def _reverse_index(mask):
    B, T = mask.shape
    lengths = mask.sum(axis=1).astype(np.int64)[:, None]
    t = np.arange(T)[None, :]
    return np.where(t < lengths, lengths - 1 - t, t)


def _gather(x, idx):
    return x[np.arange(x.shape[0])[:, None], idx]


def bilstm_forward(x, mask, fwd, bwd):
    """Concatenated forward and backward hidden states, B x T x 2H.

    The backward cell reads each sequence from its last unpadded position.
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
        mask = np.ones((1, x.shape[1])) if mask is None else np.asarray(mask, dtype=np.float64)[None]
    if x.shape[2] != fwd[0].shape[0]:
        raise ValueError(f"input width {x.shape[2]} does not match cell input {fwd[0].shape[0]}")
    if x.shape[1] == 0:
        out = np.zeros((x.shape[0], 0, 2 * fwd[1].shape[0]))
        return (out[0] if squeeze else out), None
    idx = _reverse_index(mask)
    of, cf = lstm_forward(x, mask, *fwd)
    ob_rev, cb = lstm_forward(_gather(x, idx), mask, *bwd)
    out = np.concatenate([of, _gather(ob_rev, idx)], axis=2)
    cache = (cf, cb, idx)
    return (out[0] if squeeze else out), cache


def bilstm_backward(dout, cache):
    cf, cb, idx = cache
    H = cf["Wh"].shape[0]
    dxf, *gf = lstm_backward(dout[:, :, :H], cf)
    dxb_rev, *gb = lstm_backward(_gather(dout[:, :, H:], idx), cb)
    return dxf + _gather(dxb_rev, idx), gf, gb


# -- attention, enhancement, pooling ----------------------------------------

def _masked_softmax(e, mask):
    """Softmax over the last axis; entries with mask 0 get -inf."""
    e = np.where(mask > 0, e, -np.inf)
    e = e - e.max(axis=-1, keepdims=True)
    w = np.exp(e)
    return w / w.sum(axis=-1, keepdims=True)


def attend(a, b, mask_a, mask_b):
    """Soft alignment. Returns (a_aligned, b_aligned, e, cache); e[i, j] = a_i . b_j."""
    e = a @ np.swapaxes(b, -1, -2)
    wa = _masked_softmax(e, mask_b[..., None, :])
    wb = _masked_softmax(np.swapaxes(e, -1, -2), mask_a[..., None, :])
    a_al = wa @ b
    b_al = wb @ a
    return a_al, b_al, e, (a, b, wa, wb)


def attend_backward(da_al, db_al, cache):
    a, b, wa, wb = cache
    dwa = da_al @ np.swapaxes(b, -1, -2)
    db = np.swapaxes(wa, -1, -2) @ da_al
    dwb = db_al @ np.swapaxes(a, -1, -2)
    da = np.swapaxes(wb, -1, -2) @ db_al
    de = wa * (dwa - np.sum(dwa * wa, axis=-1, keepdims=True))
    de_t = wb * (dwb - np.sum(dwb * wb, axis=-1, keepdims=True))
    de = de + np.swapaxes(de_t, -1, -2)
    da += de @ b
    db += np.swapaxes(de, -1, -2) @ a
    return da, db


def enhance(a, a_al, W, bias):
    m = np.concatenate([a, a_al, a - a_al, a * a_al], axis=-1)
    y = np.tanh(m @ W + bias)
    return y, (a, a_al, m, y, W)


def enhance_backward(dy, cache):
    a, a_al, m, y, W = cache
    dz = dy * (1.0 - y * y)
    dW = m.reshape(-1, m.shape[-1]).T @ dz.reshape(-1, dz.shape[-1])
    dbias = dz.reshape(-1, dz.shape[-1]).sum(axis=0)
    dm = dz @ W.T
    k = a.shape[-1]
    d0, d1, d2, d3 = dm[..., :k], dm[..., k:2 * k], dm[..., 2 * k:3 * k], dm[..., 3 * k:]
    da = d0 + d2 + d3 * a_al
    da_al = d1 - d2 + d3 * a
    return da, da_al, dW, dbias


def pool(v, mask):
    """[max over unmasked t; mean over unmasked t] per sequence, B x 4H."""
    lengths = mask.sum(axis=1)
    if np.any(lengths == 0):
        raise ValueError("empty sequence")
    masked = np.where(mask[..., None] > 0, v, -np.inf)
    arg = masked.argmax(axis=1)
    vmax = np.take_along_axis(v, arg[:, None, :], axis=1)[:, 0]
    vavg = (v * mask[..., None]).sum(axis=1) / lengths[:, None]
    return np.concatenate([vmax, vavg], axis=1), (arg, mask, lengths, v.shape)


def pool_backward(dfeat, cache):
    arg, mask, lengths, shape = cache
    k = shape[2]
    dv = np.zeros(shape)
    np.put_along_axis(dv, arg[:, None, :], dfeat[:, None, :k], axis=1)
    dv += mask[..., None] * (dfeat[:, None, k:] / lengths[:, None, None])
    return dv


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=-1, keepdims=True)


def classify(features, params: EsimParams):
    h1 = np.tanh(features @ params["cls_W1"] + params["cls_b1"])
    logits = h1 @ params["cls_W2"] + params["cls_b2"]
    return softmax(logits), logits, h1


# -- full model -------------------------------------------------------------

def _dropout_mask(rng, shape, rate):
    keep = 1.0 - rate
    return (rng.random(shape) < keep) / keep


def compose_and_pool(enh_p, enh_h, params: EsimParams, mask_p, mask_h, drop=None):
    vp, cp = bilstm_forward(enh_p, mask_p, params.lstm("comp", "f"), params.lstm("comp", "b"))
    vh, ch = bilstm_forward(enh_h, mask_h, params.lstm("comp", "f"), params.lstm("comp", "b"))
    if drop is not None:
        vp, vh = vp * drop[0], vh * drop[1]
    fp, pp = pool(vp, mask_p)
    fh, ph = pool(vh, mask_h)
    return np.concatenate([fp, fh], axis=1), (cp, ch, pp, ph)


def forward(params: EsimParams, batch: PaddedBatch, dropout: float = 0.0,
            rng: np.random.Generator | None = None):
    """Class probabilities (B x 3) and the cache needed for backward."""
    if batch.premise.shape[2] != params.input_dim:
        raise ValueError(f"input width {batch.premise.shape[2]} does not match model width {params.input_dim}")
    mp, mh = batch.premise_mask, batch.hypothesis_mask
    if np.any(mp.sum(axis=1) == 0) or np.any(mh.sum(axis=1) == 0):
        raise ValueError("empty sequence")
    H = params.hidden
    enc = (params.lstm("enc", "f"), params.lstm("enc", "b"))
    a, ca = bilstm_forward(batch.premise, mp, *enc)
    b, cb = bilstm_forward(batch.hypothesis, mh, *enc)
    drop_enc = drop_comp = None
    if dropout > 0.0 and rng is not None:
        B, Tp, Th = batch.size, mp.shape[1], mh.shape[1]
        drop_enc = (_dropout_mask(rng, (B, Tp, 2 * H), dropout), _dropout_mask(rng, (B, Th, 2 * H), dropout))
        drop_comp = (_dropout_mask(rng, (B, Tp, 2 * H), dropout), _dropout_mask(rng, (B, Th, 2 * H), dropout))
        a, b = a * drop_enc[0], b * drop_enc[1]
    a_al, b_al, _, c_att = attend(a, b, mp, mh)
    yp, c_ep = enhance(a, a_al, params["proj_W"], params["proj_b"])
    yh, c_eh = enhance(b, b_al, params["proj_W"], params["proj_b"])
    feats, c_comp = compose_and_pool(yp, yh, params, mp, mh, drop_comp)
    probs, logits, h1 = classify(feats, params)
    cache = dict(ca=ca, cb=cb, drop_enc=drop_enc, drop_comp=drop_comp, c_att=c_att,
                 c_ep=c_ep, c_eh=c_eh, c_comp=c_comp, feats=feats, h1=h1, logits=logits)
    return probs, cache


def cross_entropy(logits, labels) -> float:
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-np.mean(logp[np.arange(len(labels)), labels]))


def _accumulate_lstm(grads, block, direction, g):
    p = f"{block}_{direction}_"
    for name, val in zip(("Wx", "Wh", "b"), g):
        grads[p + name] += val


def backward(params: EsimParams, batch: PaddedBatch, probs, cache) -> dict[str, np.ndarray]:
    H = params.hidden
    grads = {k: np.zeros_like(v) for k, v in params.arrays.items()}
    B = batch.size
    dlogits = probs.copy()
    dlogits[np.arange(B), batch.labels] -= 1.0
    dlogits /= B
    h1, feats = cache["h1"], cache["feats"]
    grads["cls_W2"] = h1.T @ dlogits
    grads["cls_b2"] = dlogits.sum(axis=0)
    dz1 = (dlogits @ params["cls_W2"].T) * (1.0 - h1 * h1)
    grads["cls_W1"] = feats.T @ dz1
    grads["cls_b1"] = dz1.sum(axis=0)
    dfeat = dz1 @ params["cls_W1"].T

    cp, ch, pp, ph = cache["c_comp"]
    dvp = pool_backward(dfeat[:, :4 * H], pp)
    dvh = pool_backward(dfeat[:, 4 * H:], ph)
    if cache["drop_comp"] is not None:
        dvp, dvh = dvp * cache["drop_comp"][0], dvh * cache["drop_comp"][1]
    dyp, gf, gb = bilstm_backward(dvp, cp)
    _accumulate_lstm(grads, "comp", "f", gf)
    _accumulate_lstm(grads, "comp", "b", gb)
    dyh, gf, gb = bilstm_backward(dvh, ch)
    _accumulate_lstm(grads, "comp", "f", gf)
    _accumulate_lstm(grads, "comp", "b", gb)

    da, da_al, dW, dbias = enhance_backward(dyp, cache["c_ep"])
    grads["proj_W"] += dW
    grads["proj_b"] += dbias
    db, db_al, dW, dbias = enhance_backward(dyh, cache["c_eh"])
    grads["proj_W"] += dW
    grads["proj_b"] += dbias
    da2, db2 = attend_backward(da_al, db_al, cache["c_att"])
    da += da2
    db += db2
    if cache["drop_enc"] is not None:
        da, db = da * cache["drop_enc"][0], db * cache["drop_enc"][1]
    _, gf, gb = bilstm_backward(da, cache["ca"])
    _accumulate_lstm(grads, "enc", "f", gf)
    _accumulate_lstm(grads, "enc", "b", gb)
    _, gf, gb = bilstm_backward(db, cache["cb"])
    _accumulate_lstm(grads, "enc", "f", gf)
    _accumulate_lstm(grads, "enc", "b", gb)
    return grads


def loss_and_backward(batch: PaddedBatch, params: EsimParams, config: EsimConfig | None = None,
                      rng: np.random.Generator | None = None, train: bool = True):
    """Mean cross-entropy of the gold labels and its gradient for every parameter.

    Dropout is applied only when ``train`` is set and an rng is given.
    """
    rate = config.dropout if (config is not None and train) else 0.0
    probs, cache = forward(params, batch, rate, rng)
    loss = cross_entropy(cache["logits"], batch.labels)
    return loss, backward(params, batch, probs, cache)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def sgd_update(params: EsimParams, grads: dict[str, np.ndarray], lr: float) -> None:
    for name, g in grads.items():
        params.arrays[name] -= lr * g


class Adam:
    """Adam with the usual bias correction (beta1=0.9, beta2=0.999)."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: EsimParams, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params.arrays[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# -- training ---------------------------------------------------------------

@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    dev_loss: list[float] = field(default_factory=list)
    dev_accuracy: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,dev_loss,dev_accuracy"]
        for i, (tl, dl, da) in enumerate(zip(self.train_loss, self.dev_loss, self.dev_accuracy), start=1):
            lines.append(f"{i},{tl:.9g},{dl:.9g},{da:.9g}")
        return "\n".join(lines) + "\n"


class EarlyStopping:
    """Stop once the dev loss has not improved for ``patience`` epochs in a row."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = math.inf
        self.best_epoch = 0
        self.epoch = 0
        self.bad_epochs = 0

    def update(self, dev_loss: float) -> bool:
        """Record one epoch; True means this epoch is the new best."""
        self.epoch += 1
        if dev_loss < self.best_loss:
            self.best_loss = dev_loss
            self.best_epoch = self.epoch
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


def _batches(pairs, batch_size):
    for start in range(0, len(pairs), batch_size):
        yield make_batch(pairs[start:start + batch_size])


def evaluate(params: EsimParams, pairs: Sequence[EncodedPair], batch_size: int = 64):
    """(mean loss, accuracy, probabilities) with dropout off."""
    probs_all = []
    for batch in _batches(list(pairs), batch_size):
        probs, _ = forward(params, batch)
        probs_all.append(probs)
    probs = np.concatenate(probs_all)
    labels = np.array([p.label for p in pairs])
    eps = np.finfo(np.float64).tiny
    loss = float(-np.mean(np.log(np.maximum(probs[np.arange(len(labels)), labels], eps))))
    acc = float(np.mean(np.argmax(probs, axis=1) == labels))
    return loss, acc, probs


def train_nli(train: Sequence[EncodedPair], dev: Sequence[EncodedPair], config: EsimConfig,
              params: EsimParams | None = None):
    """Mini-batch SGD with gradient clipping and early stopping on dev loss.

    Returns the parameters of the best dev-loss epoch and a TrainReport.
    """
    if not train or not dev:
        raise ValueError("train and dev splits must be non-empty")
    train = [truncate(p, config) for p in train]
    dev = [truncate(p, config) for p in dev]
    width = train[0].premise.shape[1]
    init_rng = np.random.default_rng([config.seed, 0])
    shuffle_rng = np.random.default_rng([config.seed, 1])
    dropout_rng = np.random.default_rng([config.seed, 2])
    if params is None:
        params = init_params(width, config.hidden, init_rng)
    params = params.copy()
    best = params.copy()
    stopper = EarlyStopping(config.patience)
    adam = Adam(config.lr) if config.optimizer == "adam" else None
    report = TrainReport()
    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(len(train))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = make_batch([train[i] for i in order[start:start + config.batch_size]])
            loss, grads = loss_and_backward(batch, params, config, dropout_rng)
            clip_gradients(grads, config.clip_norm)
            if adam is not None:
                adam.step(params, grads)
            else:
                sgd_update(params, grads, config.lr)
            total += loss * batch.size
        dev_loss, dev_acc, _ = evaluate(params, dev)
        report.train_loss.append(total / len(train))
        report.dev_loss.append(dev_loss)
        report.dev_accuracy.append(dev_acc)
        if stopper.update(dev_loss):
            best = params.copy()
        log.info("epoch %d train %.4f dev %.4f acc %.4f", epoch, report.train_loss[-1], dev_loss, dev_acc)
        report.stopped_epoch = epoch
        if stopper.should_stop:
            break
    report.best_epoch = stopper.best_epoch
    return best, report


def predict(premise: np.ndarray, hypothesis: np.ndarray, params: EsimParams):
    """(label, probabilities) for one pair; ties go to the lower class index."""
    for m in (premise, hypothesis):
        if m.ndim != 2 or m.shape[1] != params.input_dim:
            raise ValueError(f"input width {m.shape[-1]} does not match model width {params.input_dim}")
    probs, _ = forward(params, make_batch([EncodedPair(premise, hypothesis, 0)]))
    return LABELS[int(np.argmax(probs[0]))], probs[0]


# -- checkpoints ------------------------------------------------------------

def save_model(params: EsimParams, stream: TextIO, config: EsimConfig | None = None,
               extra: dict | None = None) -> None:
    meta = {"input_dim": params.input_dim, "hidden": params.hidden,
            "config": asdict(config) if config else None, "extra": extra or {}}
    stream.write("esim 1\n")
    stream.write(json.dumps(meta, sort_keys=True) + "\n")
    for name in sorted(params.arrays):
        arr = params.arrays[name]
        mat = arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr.reshape(1, -1)
        stream.write(f"param {name} {' '.join(str(s) for s in arr.shape)}\n")
        for row in mat:
            stream.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_model(stream: TextIO | str) -> tuple[EsimParams, dict]:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    if stream.readline().split() != ["esim", "1"]:
        raise ValueError("not an esim checkpoint")
    meta = json.loads(stream.readline())
    expected = param_shapes(meta["input_dim"], meta["hidden"])
    arrays = {}
    while True:
        header = stream.readline()
        if not header:
            break
        if not header.strip():
            continue
        parts = header.split()
        if parts[0] != "param" or len(parts) < 3:
            raise ValueError(f"bad parameter header {header.strip()!r}")
        name, shape = parts[1], tuple(int(s) for s in parts[2:])
        if expected.get(name) != shape:
            raise ValueError(f"{name}: stored shape {shape} does not match architecture")
        n_rows = shape[0] if len(shape) > 1 else 1
        rows = [[float(v) for v in stream.readline().split()] for _ in range(n_rows)]
        arr = np.array(rows, dtype=np.float64)
        if arr.size != math.prod(shape):
            raise ValueError(f"{name}: wrong number of values")
        arrays[name] = arr.reshape(shape)
    return EsimParams(meta["input_dim"], meta["hidden"], arrays), meta
