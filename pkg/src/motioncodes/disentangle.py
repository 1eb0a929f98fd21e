"""Losses that separate coarse-layer content from fine-layer style.

Two penalties act on the residual stream around the quantizer:

* a multi-positive contrastive loss pulls together pooled residuals of
  clips sharing a style label, computed on the residual entering the
  first style codebook;
* a mutual-information loss drives the soft code assignment of each
  content codebook toward independence from the style label.

Both return the loss value together with explicit gradients, since the
surrounding model does not use an autograd framework.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, StructuralError, UndefinedResultError


def pool_style_embedding(trace, layer):
    """Mean-pool the residual entering codebook ``layer`` over time slots.

    ``trace.r[layer]`` has shape [..., K, d]; the result drops the slot
    axis. Raises when the trace was not quantized deep enough for that
    residual to exist.
    """
    if not 0 <= layer <= trace.n_layers:
        raise ConfigurationError(
            f"residual {layer} not available from a {trace.n_layers}-layer pass"
        )
    return trace.r[layer].mean(axis=-2)


def multipos_contrastive(embeddings, labels, tau):
    """Contrastive loss with every same-label element as a positive.

    For each anchor the remaining batch entries form the candidate set;
    the target distribution is uniform over candidates sharing the
    anchor's label. Anchors with no positive are skipped; if no anchor
    has one the loss is undefined and an error is raised.

    Returns ``(loss, grad_embeddings)``.
    """
    e = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    if e.ndim != 2 or labels.shape != (e.shape[0],):
        raise StructuralError("expected embeddings [B, d] with one label per row")
    if tau <= 0.0:
        raise ConfigurationError(f"temperature must be positive, got {tau}")
    b = e.shape[0]
    sims = e @ e.T / tau
    np.fill_diagonal(sims, -np.inf)
    pos = labels[:, None] == labels[None, :]
    np.fill_diagonal(pos, False)
    counts = pos.sum(axis=1)
    counted = counts > 0
    if not counted.any():
        raise UndefinedResultError("no anchor has a positive; all labels are unique")

    m = sims.max(axis=1, keepdims=True)
    log_probs = sims - (m + np.log(np.sum(np.exp(sims - m), axis=1, keepdims=True)))
    targets = np.zeros_like(sims)
    targets[counted] = pos[counted] / counts[counted, None]
    picked = np.where(pos, log_probs, 0.0)  # avoid 0 * -inf on the diagonal
    per_anchor = -(targets * picked).sum(axis=1)
    n_anchors = int(counted.sum())
    loss = float(per_anchor[counted].sum() / n_anchors)

    grad_sims = np.zeros_like(sims)
    grad_sims[counted] = (np.exp(log_probs[counted]) - targets[counted]) / n_anchors
    grad_e = (grad_sims @ e + grad_sims.T @ e) / tau
    return loss, grad_e.astype(embeddings.dtype, copy=False)


def mutual_info_loss(residuals, labels, codes, tau):
    """Mutual information between soft code assignment and labels.

    Each residual is softly assigned to the codebook rows through
    ``softmax(-dist^2 / tau)``; the empirical joint of (code, label) over
    the batch defines the mutual information, which minimization pushes
    toward zero so code usage carries no label information.

    Returns ``(mi, grad_residuals, grad_codes)``. At least two distinct
    labels are required; with one the information is undefined.
    """
    r = np.asarray(residuals, dtype=np.float64)
    c = np.asarray(codes, dtype=np.float64)
    labels = np.asarray(labels)
    if r.ndim != 2 or c.ndim != 2 or r.shape[1] != c.shape[1]:
        raise StructuralError("expected residuals [M, d] and codes [X, d]")
    if labels.shape != (r.shape[0],):
        raise StructuralError("one label per residual required")
    if tau <= 0.0:
        raise ConfigurationError(f"temperature must be positive, got {tau}")
    m = r.shape[0]
    if m == 0:
        raise StructuralError("empty batch")

    _, compact = np.unique(labels, return_inverse=True)
    n_labels = int(compact.max()) + 1
    if n_labels == 1:
        raise UndefinedResultError("mutual information needs at least 2 distinct labels")

    d2 = (
        np.sum(r * r, axis=1, keepdims=True)
        - 2.0 * (r @ c.T)
        + np.sum(c * c, axis=1)[None, :]
    )
    s = -d2 / tau
    s -= s.max(axis=1, keepdims=True)
    q = np.exp(s)
    q /= q.sum(axis=1, keepdims=True)  # [M, X], strictly positive

    onehot = np.zeros((m, n_labels))
    onehot[np.arange(m), compact] = 1.0
    joint = q.T @ onehot / m  # [X, L]
    p_code = joint.sum(axis=1)
    p_label = joint.sum(axis=0)
    # assignments can underflow to exact zero; those cells contribute
    # nothing to the information and see only zero-weight gradients.
    # log joint - log marginals, not log(joint / marginal): the marginal
    # product underflows for near-empty cells while its logarithm stays finite
    xi, yi = np.nonzero(joint > 0.0)
    log_ratio = np.log(joint[xi, yi]) - np.log(p_code[xi]) - np.log(p_label[yi])
    mi = float(np.sum(joint[xi, yi] * log_ratio))

    d_joint = np.zeros_like(joint)
    d_joint[xi, yi] = log_ratio - 1.0
    d_q = d_joint[:, compact].T / m  # [M, X]
    d_s = q * (d_q - np.sum(q * d_q, axis=1, keepdims=True))
    # s_i = -|r - c_i|^2 / tau
    row = d_s.sum(axis=1, keepdims=True)
    grad_r = (-2.0 / tau) * (r * row - d_s @ c)
    grad_c = (2.0 / tau) * (d_s.T @ r - d_s.sum(axis=0)[:, None] * c)
    return (
        mi,
        grad_r.astype(residuals.dtype, copy=False),
        grad_c.astype(codes.dtype, copy=False),
    )
