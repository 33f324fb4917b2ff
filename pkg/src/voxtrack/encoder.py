"""Per-pixel embedding encoder with gated recurrence along a stream.

The network is a small hand-rolled stack: three 3x3 convolutions
(1 -> 8 -> 16 -> 15 channels, tanh between them) followed by a 1x1 gate
that blends each step's features into a running hidden state:

    h_i = sigmoid(g_i) * h_{i-1} + (1 - sigmoid(g_i)) * f_i,  h_{-1} = 0

Channels 0..13 of the hidden state, L2-normalized per pixel, are the
embedding; channel 14 through a logistic is the foreground score.
Forward and backward passes are written out in numpy; all gradients are
exact and verified against central finite differences in the tests.

Training pulls each instance's pixel embeddings toward the instance
mean (cosine toward 1), pushes means of nearby instances toward
orthogonality (cosine toward 0), and fits the foreground channel with
binary cross-entropy.
"""

import csv
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .core import CONTEXT14, TEMPORAL14, EmbeddingField, concat_embeddings
from .streams import extract_sample, temporal_paths, zigzag_paths

EMBED_DIM = 14
FEATURE_DIM = 15  # embedding channels plus one foreground logit

PARAM_SHAPES = {
    "conv1_w": (8, 1, 3, 3),
    "conv1_b": (8,),
    "conv2_w": (16, 8, 3, 3),
    "conv2_b": (16,),
    "conv3_w": (FEATURE_DIM, 16, 3, 3),
    "conv3_b": (FEATURE_DIM,),
    "gate_w": (FEATURE_DIM, FEATURE_DIM),
    "gate_b": (FEATURE_DIM,),
}

_NORM_FLOOR = 1e-8  # below this, embeddings fall back to the unit e1 direction


class DivergenceError(RuntimeError):
    """Raised when activations or the loss stop being finite."""


@dataclass
class EncoderParams:
    """The encoder's weight tensors, keyed by layer name."""

    tensors: dict

    def __post_init__(self):
        if set(self.tensors) != set(PARAM_SHAPES):
            raise ValueError(f"expected tensors {sorted(PARAM_SHAPES)}, got {sorted(self.tensors)}")
        converted = {}
        for name, shape in PARAM_SHAPES.items():
            arr = np.asarray(self.tensors[name], dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            converted[name] = arr
        self.tensors = converted

    @classmethod
    def zeros(cls):
        return cls({name: np.zeros(shape) for name, shape in PARAM_SHAPES.items()})

    @classmethod
    def random(cls, rng, gain=1.0):
        tensors = {}
        for name, shape in PARAM_SHAPES.items():
            if name.endswith("_b"):
                tensors[name] = np.zeros(shape)
            else:
                fan_in = int(np.prod(shape[1:]))
                tensors[name] = rng.normal(0.0, gain / math.sqrt(fan_in), size=shape)
        return cls(tensors)

    def copy(self):
        return EncoderParams({name: arr.copy() for name, arr in self.tensors.items()})


@dataclass
class TrainConfig:
    """Training schedule and loss shape."""

    iterations: int = 2000
    lr_initial: float = 1e-4
    lr_after_half: float = 1e-5
    window: int = 8
    pull_weight: float = 1.0
    push_weight: float = 1.0
    neighbor_radius: float = 10.0  # pixels; push only acts between nearby instances
    rng_seed: int = 0
    shared_weights: bool = True

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValueError(f"iterations must be positive, got {self.iterations}")
        if self.lr_initial <= 0 or self.lr_after_half <= 0:
            raise ValueError("learning rates must be positive")
        if self.window < 1:
            raise ValueError("window must be positive")
        if self.neighbor_radius <= 0:
            raise ValueError("neighbor_radius must be positive")


@dataclass
class StreamParams:
    """Trained weights for the two streams (one object when shared)."""

    temporal: EncoderParams
    context: EncoderParams
    shared: bool
    window: int


# ---------------------------------------------------------------------------
# Convolution primitives (cross-correlation, 3x3, zero-padded "same").
# The three stack layers dilate their 3x3 kernels by 1, 4 and 12, growing
# the receptive field to 35x35: wide enough that a pixel sees its whole
# cell plus the frame border, whose zero padding is the only cue that
# separates identically shaped cells at different positions.

DILATIONS = (1, 4, 12)


def _im2col3(x, dilation):
    c, ny, nx = x.shape
    pad = dilation
    padded = np.zeros((c, ny + 2 * pad, nx + 2 * pad))
    padded[:, pad:-pad, pad:-pad] = x
    patches = np.empty((c, 3, 3, ny, nx))
    for ky in range(3):
        for kx in range(3):
            patches[:, ky, kx] = padded[:, ky * dilation : ky * dilation + ny, kx * dilation : kx * dilation + nx]
    return patches.reshape(c * 9, ny * nx)


def _conv3(x, w, b, dilation=1):
    n_out = w.shape[0]
    cols = _im2col3(x, dilation)
    out = w.reshape(n_out, -1) @ cols + b[:, None]
    return out.reshape(n_out, x.shape[1], x.shape[2])


def _conv3_backward(d_out, x, w, dilation=1):
    """Weight/bias/input gradients for _conv3."""
    n_out = w.shape[0]
    cols = _im2col3(x, dilation)
    d_mat = d_out.reshape(n_out, -1)
    d_w = (d_mat @ cols.T).reshape(w.shape)
    d_b = d_mat.sum(axis=1)
    w_t = np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    d_x = _conv3(d_out, w_t, np.zeros(w.shape[1]), dilation)
    return d_w, d_b, d_x


def _sigmoid(x):
    # clipping at +-500 is exact in float64 and keeps exp() in range
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500.0, 500.0)))


# ---------------------------------------------------------------------------
# Forward / backward through one stream window


def _forward_frame(params, frame):
    p = params.tensors
    z1 = np.tanh(_conv3(frame[None], p["conv1_w"], p["conv1_b"], DILATIONS[0]))
    z2 = np.tanh(_conv3(z1, p["conv2_w"], p["conv2_b"], DILATIONS[1]))
    f = _conv3(z2, p["conv3_w"], p["conv3_b"], DILATIONS[2])
    flat = f.reshape(FEATURE_DIM, -1)
    g = (p["gate_w"] @ flat + p["gate_b"][:, None]).reshape(f.shape)
    return z1, z2, f, _sigmoid(g)


def _normalize_embedding(h):
    """Unit-normalize the embedding channels; tiny norms use e1."""
    pre = h[:EMBED_DIM]
    norms = np.sqrt((pre * pre).sum(axis=0))
    fallback = norms < _NORM_FLOOR
    safe = np.where(fallback, 1.0, norms)
    emb = pre / safe
    if fallback.any():
        emb[:, fallback] = 0.0
        emb[0, fallback] = 1.0
    return emb, norms, fallback


def _forward_window(params, frames):
    steps = []
    h_prev = np.zeros((FEATURE_DIM,) + frames.shape[1:])
    embeddings = np.empty((len(frames), EMBED_DIM) + frames.shape[1:])
    fg_scores = np.empty(frames.shape)
    for i, frame in enumerate(frames):
        z1, z2, f, s = _forward_frame(params, frame)
        h = s * h_prev + (1.0 - s) * f
        if not np.all(np.isfinite(h)):
            raise DivergenceError(f"non-finite activations at window step {i}")
        emb, norms, fallback = _normalize_embedding(h)
        embeddings[i] = emb
        fg_scores[i] = _sigmoid(h[EMBED_DIM])
        steps.append({"frame": frame, "z1": z1, "z2": z2, "f": f, "s": s,
                      "h_prev": h_prev, "h": h, "norms": norms, "fallback": fallback})
        h_prev = h
    return embeddings, fg_scores, steps


def _backward_window(params, steps, embeddings, fg_scores, d_emb, d_fg):
    p = params.tensors
    grads = {name: np.zeros_like(arr) for name, arr in p.items()}
    carry = np.zeros_like(steps[0]["h"])
    for i in range(len(steps) - 1, -1, -1):
        step = steps[i]
        d_h = carry.copy()
        # embedding channels, through the per-pixel normalization
        emb = embeddings[i]
        dot = (emb * d_emb[i]).sum(axis=0)
        safe = np.where(step["fallback"], 1.0, step["norms"])
        d_pre = (d_emb[i] - emb * dot) / safe
        d_pre[:, step["fallback"]] = 0.0
        d_h[:EMBED_DIM] += d_pre
        # foreground channel through its logistic
        fg = fg_scores[i]
        d_h[EMBED_DIM] += d_fg[i] * fg * (1.0 - fg)

        s = step["s"]
        d_s = d_h * (step["h_prev"] - step["f"])
        d_f = d_h * (1.0 - s)
        carry = d_h * s  # flows into h_{i-1}

        d_g = d_s * s * (1.0 - s)
        g_mat = d_g.reshape(FEATURE_DIM, -1)
        f_mat = step["f"].reshape(FEATURE_DIM, -1)
        grads["gate_w"] += g_mat @ f_mat.T
        grads["gate_b"] += g_mat.sum(axis=1)
        d_f += (p["gate_w"].T @ g_mat).reshape(d_f.shape)

        d_w3, d_b3, d_z2 = _conv3_backward(d_f, step["z2"], p["conv3_w"], DILATIONS[2])
        grads["conv3_w"] += d_w3
        grads["conv3_b"] += d_b3
        d_a2 = d_z2 * (1.0 - step["z2"] ** 2)
        d_w2, d_b2, d_z1 = _conv3_backward(d_a2, step["z1"], p["conv2_w"], DILATIONS[1])
        grads["conv2_w"] += d_w2
        grads["conv2_b"] += d_b2
        d_a1 = d_z1 * (1.0 - step["z1"] ** 2)
        d_w1, d_b1, _ = _conv3_backward(d_a1, step["frame"][None], p["conv1_w"], DILATIONS[0])
        grads["conv1_w"] += d_w1
        grads["conv1_b"] += d_b1
    return grads


def embed_window(params, sample):
    """Embed one stream window: (T, 14, Y, X) unit embeddings + fg scores."""
    frames = np.asarray(sample.frames, dtype=np.float64)
    if frames.min() < 0.0 or frames.max() > 1.0:
        raise ValueError("frames must lie in [0, 1]")
    embeddings, fg_scores, _ = _forward_window(params, frames)
    return embeddings, fg_scores


def cosine_similarity(a, b):
    """cos(A, B) = A.B / (|A| |B|); requires nonzero norms."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"vector lengths differ: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity is undefined for zero-norm vectors")
    return float(a @ b / (na * nb))


# ---------------------------------------------------------------------------
# Loss


def _min_pair_distance(coords_a, coords_b):
    best = np.inf
    for lo in range(0, len(coords_a), 512):
        chunk = coords_a[lo : lo + 512]
        d2 = ((chunk[:, None, :] - coords_b[None, :, :]) ** 2).sum(axis=-1)
        best = min(best, float(d2.min()))
    return math.sqrt(best)


def _neighbor_pairs(labels_flat, yx_coords, instance_ids, radius):
    """Instance pairs whose (y, x) footprints come within `radius` pixels."""
    coords = {}
    for pos, inst in enumerate(instance_ids):
        coords[pos] = yx_coords[labels_flat == inst]
    pairs = []
    for a in range(len(instance_ids)):
        for b in range(a + 1, len(instance_ids)):
            if _min_pair_distance(coords[a], coords[b]) <= radius:
                pairs.append((a, b))
    return pairs


def _bincount_rows(indices, values, n_bins):
    return np.stack(
        [np.bincount(indices, weights=values[:, d], minlength=n_bins) for d in range(values.shape[1])],
        axis=1,
    )


def label_context(labels, valid_label_mask, neighbor_radius):
    """Label-derived quantities of one window, reusable across steps."""
    labels = np.asarray(labels)
    valid = np.asarray(valid_label_mask, dtype=bool)
    frames = np.flatnonzero(valid)
    if frames.size == 0:
        raise ValueError("no valid labeled frames in this window")
    ny, nx = labels.shape[1:]
    lab = labels[frames].reshape(-1)
    target = (lab > 0).astype(np.float64)
    instance_ids, inverse = np.unique(lab[lab > 0], return_inverse=True)
    fg_idx = np.flatnonzero(lab > 0)
    counts = np.bincount(inverse).astype(np.float64) if instance_ids.size else np.empty(0)
    yy, xx = np.unravel_index(np.arange(ny * nx), (ny, nx))
    yx_all = np.tile(np.stack([yy, xx], axis=1).astype(np.float64), (frames.size, 1))
    pairs = _neighbor_pairs(lab, yx_all, instance_ids, neighbor_radius)
    return {
        "frames": frames,
        "lab": lab,
        "target": target,
        "instance_ids": instance_ids,
        "inverse": inverse,
        "fg_idx": fg_idx,
        "counts": counts,
        "pairs": pairs,
    }


def embedding_loss(embeddings, fg_scores, labels, valid_label_mask, cfg, ctx=None):
    """Pull/push/foreground loss over the labeled frames of one window.

    Returns ``(loss, d_embeddings, d_fg_scores)``; the gradients are the
    exact derivatives of the returned value.  ``ctx`` may carry a cached
    :func:`label_context` for the same labels and config.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    fg_scores = np.asarray(fg_scores, dtype=np.float64)
    if ctx is None:
        ctx = label_context(labels, valid_label_mask, cfg.neighbor_radius)
    frames = ctx["frames"]
    n_steps, _, ny, nx = embeddings.shape

    # flatten labeled frames to pixels
    emb = embeddings[frames].transpose(0, 2, 3, 1).reshape(-1, EMBED_DIM)
    fg = fg_scores[frames].reshape(-1)
    lab = ctx["lab"]
    target = ctx["target"]

    d_emb_flat = np.zeros_like(emb)
    d_fg_flat = np.zeros_like(fg)
    loss = 0.0

    instance_ids = ctx["instance_ids"]
    inverse = ctx["inverse"]
    fg_idx = ctx["fg_idx"]
    if instance_ids.size:
        counts = ctx["counts"]
        mu = _bincount_rows(inverse, emb[fg_idx], instance_ids.size) / counts[:, None]
        mu_norm = np.maximum(np.linalg.norm(mu, axis=1), 1e-12)

        # pull: embeddings toward their instance mean (cosine to 1)
        vec = emb[fg_idx]
        vec_norm = np.maximum(np.linalg.norm(vec, axis=1), 1e-12)
        m = mu[inverse]
        m_norm = mu_norm[inverse]
        cos = (vec * m).sum(axis=1) / (vec_norm * m_norm)
        n_fg = float(fg_idx.size)
        loss += cfg.pull_weight * float(((1.0 - cos) ** 2).mean())
        coef = cfg.pull_weight * (-2.0) * (1.0 - cos) / n_fg
        d_vec = coef[:, None] * (m / (vec_norm * m_norm)[:, None] - cos[:, None] * vec / (vec_norm**2)[:, None])
        d_mu = _bincount_rows(
            inverse,
            coef[:, None] * (vec / (vec_norm * m_norm)[:, None] - cos[:, None] * m / (m_norm**2)[:, None]),
            instance_ids.size,
        )

        # push: means of nearby instances toward orthogonality (cosine to 0)
        pairs = ctx["pairs"]
        if pairs:
            push = 0.0
            for a, b in pairs:
                cos_ab = float(mu[a] @ mu[b] / (mu_norm[a] * mu_norm[b]))
                push += cos_ab**2
                pcoef = cfg.push_weight * 2.0 * cos_ab / len(pairs)
                d_mu[a] += pcoef * (mu[b] / (mu_norm[a] * mu_norm[b]) - cos_ab * mu[a] / mu_norm[a] ** 2)
                d_mu[b] += pcoef * (mu[a] / (mu_norm[a] * mu_norm[b]) - cos_ab * mu[b] / mu_norm[b] ** 2)
            loss += cfg.push_weight * push / len(pairs)

        d_emb_flat[fg_idx] = d_vec + d_mu[inverse] / counts[inverse, None]

    # foreground binary cross-entropy, class-balanced so the sparse
    # foreground is not swamped by the background pixel count
    eps = 1e-12
    p = fg
    n_fg_px = float(target.sum())
    n_bg_px = float(p.size - n_fg_px)
    fg_term = -target * np.log(np.maximum(p, eps))
    bg_term = -(1.0 - target) * np.log(np.maximum(1.0 - p, eps))
    terms = []
    if n_fg_px > 0:
        terms.append(float(fg_term.sum()) / n_fg_px)
        d_fg_flat += -target / np.maximum(p, eps) / n_fg_px
    if n_bg_px > 0:
        terms.append(float(bg_term.sum()) / n_bg_px)
        d_fg_flat += (1.0 - target) / np.maximum(1.0 - p, eps) / n_bg_px
    loss += sum(terms) / len(terms)
    d_fg_flat /= len(terms)

    d_embeddings = np.zeros_like(embeddings)
    d_fg_scores = np.zeros_like(fg_scores)
    d_embeddings[frames] = d_emb_flat.reshape(frames.size, ny, nx, EMBED_DIM).transpose(0, 3, 1, 2)
    d_fg_scores[frames] = d_fg_flat.reshape(frames.size, ny, nx)
    return float(loss), d_embeddings, d_fg_scores


def window_loss_and_gradients(params, sample, cfg, ctx=None):
    """Loss of one window and its exact gradients w.r.t. the parameters."""
    frames = np.asarray(sample.frames, dtype=np.float64)
    embeddings, fg_scores, steps = _forward_window(params, frames)
    loss, d_emb, d_fg = embedding_loss(
        embeddings, fg_scores, sample.labels, sample.valid_label_mask, cfg, ctx=ctx
    )
    grads = _backward_window(params, steps, embeddings, fg_scores, d_emb, d_fg)
    return loss, grads


# ---------------------------------------------------------------------------
# Training


def _eligible_samples(grid, labeling, paths, neighbor_radius):
    """Pre-extracted samples with cached label context, labeled ones only."""
    samples = []
    for path in paths:
        sample = extract_sample(grid, labeling, path)
        if sample.valid_label_mask.any():
            ctx = label_context(sample.labels, sample.valid_label_mask, neighbor_radius)
            samples.append((sample, ctx))
    return samples


def train(grid, labeling, cfg):
    """Stochastic gradient descent over random temporal + zigzag windows.

    Each iteration draws one window of either stream, accumulates both
    windows' gradients (into one parameter set when shared, else into
    per-stream sets), and applies the step;  the learning rate drops by
    10x at the half-way iteration.  Returns ``(StreamParams, history)``
    where history holds one mean window loss per iteration.
    """
    if labeling is None or labeling.annotated_frames is not None and not labeling.annotated_frames:
        raise ValueError("training requires at least one annotated frame")
    temporal = _eligible_samples(
        grid, labeling, temporal_paths(grid.dims, cfg.window, cfg.window), cfg.neighbor_radius
    )
    context = _eligible_samples(
        grid, labeling, zigzag_paths(grid.dims, cfg.window, cfg.window), cfg.neighbor_radius
    )
    if not temporal or not context:
        raise ValueError("no training windows contain an annotated frame")

    rng = np.random.default_rng(cfg.rng_seed)
    params_t = EncoderParams.random(rng, gain=1.0)
    params_c = params_t if cfg.shared_weights else EncoderParams.random(rng, gain=1.0)

    history = np.empty(cfg.iterations)
    half = cfg.iterations // 2
    for iteration in range(cfg.iterations):
        lr = cfg.lr_initial if iteration < half or cfg.iterations == 1 else cfg.lr_after_half
        sample_t, ctx_t = temporal[rng.integers(len(temporal))]
        sample_c, ctx_c = context[rng.integers(len(context))]
        loss_t, grads_t = window_loss_and_gradients(params_t, sample_t, cfg, ctx=ctx_t)
        loss_c, grads_c = window_loss_and_gradients(params_c, sample_c, cfg, ctx=ctx_c)
        mean_loss = (loss_t + loss_c) / 2.0
        if not np.isfinite(mean_loss):
            raise DivergenceError(f"training diverged at iteration {iteration}")
        if cfg.shared_weights:
            for name in grads_t:
                params_t.tensors[name] -= lr * (grads_t[name] + grads_c[name])
        else:
            for name in grads_t:
                params_t.tensors[name] -= lr * grads_t[name]
                params_c.tensors[name] -= lr * grads_c[name]
        history[iteration] = mean_loss

    stream = StreamParams(temporal=params_t, context=params_c, shared=cfg.shared_weights, window=cfg.window)
    return stream, history


# ---------------------------------------------------------------------------
# Inference


def _slice_features(params, grid):
    """Per-slice conv features and gates, shared by all windows."""
    n_t, n_z = grid.dims[0], grid.dims[1]
    f_all = np.empty((n_t, n_z, FEATURE_DIM) + grid.dims[2:])
    s_all = np.empty_like(f_all)
    for t in range(n_t):
        for z in range(n_z):
            _, _, f, s = _forward_frame(params, grid.data[t, z].astype(np.float64))
            f_all[t, z] = f
            s_all[t, z] = s
    return f_all, s_all


def _recur(coords, f_all, s_all):
    """Hidden states along a path, from the cached per-slice features."""
    h = None
    out = []
    for t, z in coords:
        f = f_all[t, z]
        s = s_all[t, z]
        h = (1.0 - s) * f if h is None else s * h + (1.0 - s) * f
        out.append(h)
    return out


def _field_arrays(dims):
    vectors = np.zeros(dims + (EMBED_DIM,), dtype=np.float64)
    fg = np.zeros(dims, dtype=np.float64)
    filled = np.zeros(dims[:2], dtype=bool)
    return vectors, fg, filled


def _store(vectors, fg, filled, t, z, h):
    emb, _, _ = _normalize_embedding(h)
    vectors[t, z] = emb.transpose(1, 2, 0)
    fg[t, z] = _sigmoid(h[EMBED_DIM])
    filled[t, z] = True


def _temporal_field(params, grid, window):
    from .streams import window_starts

    n_t, n_z = grid.dims[0], grid.dims[1]
    f_all, s_all = _slice_features(params, grid)
    vectors, fg, filled = _field_arrays(grid.dims)
    last = n_t - window
    for z in range(n_z):
        for t0 in range(last + 1):
            coords = [(t0 + i, z) for i in range(window)]
            hidden = _recur(coords, f_all, s_all)
            _store(vectors, fg, filled, t0, z, hidden[0])
            if t0 == last:
                for i in range(1, window):
                    _store(vectors, fg, filled, t0 + i, z, hidden[i])
    assert filled.all()
    return EmbeddingField(vectors=vectors.astype(np.float32), fg_score=fg.astype(np.float32), dim_kind=TEMPORAL14)


def _context_field(params, grid, window):
    from .streams import zigzag_z

    n_t, n_z = grid.dims[0], grid.dims[1]
    f_all, s_all = _slice_features(params, grid)
    vectors, fg, filled = _field_arrays(grid.dims)
    last = n_t - window
    for z0 in range(n_z):
        for t0 in range(last + 1):
            coords = [(t0 + i, zigzag_z(z0, i, n_z)) for i in range(window)]
            hidden = _recur(coords, f_all, s_all)
            _store(vectors, fg, filled, t0, z0, hidden[0])
    # tail frames reuse the last full window: each step of the final
    # windows lands on its own (t, z); the lowest base layer that visits
    # a slice provides its embedding
    for z0 in range(n_z):
        coords = [(last + i, zigzag_z(z0, i, n_z)) for i in range(window)]
        hidden = _recur(coords, f_all, s_all)
        for i in range(1, window):
            t, z = coords[i]
            if not filled[t, z]:
                _store(vectors, fg, filled, t, z, hidden[i])
    assert filled.all()
    return EmbeddingField(vectors=vectors.astype(np.float32), fg_score=fg.astype(np.float32), dim_kind=CONTEXT14)


def infer_field(stream_params, grid):
    """Fused 28-d embedding field of a whole grid.

    Each slice's temporal embedding comes from the fixed-z window whose
    first frame is that slice (tail slices read the final full window at
    their offset); the context embedding likewise from the zigzag window
    anchored there.
    """
    window = stream_params.window
    if grid.dims[0] < window:
        raise ValueError(f"grid has {grid.dims[0]} frames but the stream window is {window}")
    temporal = _temporal_field(stream_params.temporal, grid, window)
    context = _context_field(stream_params.context, grid, window)
    return concat_embeddings(temporal, context)


# ---------------------------------------------------------------------------
# Parameter serialization (.vxp) and loss history


def save_params(stream_params, path):
    names = sorted(PARAM_SHAPES)
    header = {
        "format": "vxp",
        "window": stream_params.window,
        "shared": stream_params.shared,
        "tensors": [{"name": n, "shape": list(PARAM_SHAPES[n])} for n in names],
    }
    blobs = [stream_params.temporal.tensors[n] for n in names]
    if not stream_params.shared:
        blobs += [stream_params.context.tensors[n] for n in names]
    payload = np.concatenate([b.ravel() for b in blobs]).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload.tobytes())


def load_params(path):
    from .core import VxgFormatError, _read_header

    with open(path, "rb") as fh:
        header = _read_header(fh, path)
        if header.get("format") != "vxp":
            raise VxgFormatError(f"{path}: not a parameter file")
        window = int(header.get("window", 0))
        shared = bool(header.get("shared", True))
        names = [entry["name"] for entry in header.get("tensors", [])]
        if sorted(names) != sorted(PARAM_SHAPES):
            raise VxgFormatError(f"{path}: unexpected tensor list {names}")
        per_set = sum(int(np.prod(PARAM_SHAPES[n])) for n in names)
        count = per_set if shared else 2 * per_set
        payload = fh.read()
        if len(payload) != count * 4:
            raise VxgFormatError(f"{path}: expected {count * 4} payload bytes, got {len(payload)}")
        flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)

    def unpack(offset):
        tensors = {}
        for name in names:
            size = int(np.prod(PARAM_SHAPES[name]))
            tensors[name] = flat[offset : offset + size].reshape(PARAM_SHAPES[name])
            offset += size
        return EncoderParams(tensors), offset

    temporal, offset = unpack(0)
    context = temporal if shared else unpack(offset)[0]
    return StreamParams(temporal=temporal, context=context, shared=shared, window=window)


def save_loss_history(history, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss"])
        for i, value in enumerate(history):
            writer.writerow([i, f"{value:.10g}"])
