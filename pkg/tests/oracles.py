"""Independent loop-based reference implementations used to check the
vectorized code. Pure Python / plain numpy only; no torch."""

from __future__ import annotations

import math

import numpy as np


# ---------------------------------------------------------------------------
# graph convolution
# ---------------------------------------------------------------------------

def oracle_normalize_adjacency(A: np.ndarray) -> np.ndarray:
    p = A.shape[0]
    A_tilde = [[A[i][j] + (1.0 if i == j else 0.0) for j in range(p)] for i in range(p)]
    deg = [sum(row) for row in A_tilde]
    out = np.zeros((p, p))
    for i in range(p):
        for j in range(p):
            out[i, j] = A_tilde[i][j] / math.sqrt(deg[i] * deg[j])
    return out


def oracle_gcn_layer(H: np.ndarray, A: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Brute-force per-node neighbor aggregation: relu(sum_j A_hat_ij H_j W)."""
    A_hat = oracle_normalize_adjacency(A)
    p, f_in = H.shape
    f_out = W.shape[1]
    out = np.zeros((p, f_out))
    for i in range(p):
        agg = np.zeros(f_in)
        for j in range(p):
            agg += A_hat[i, j] * H[j]
        for f in range(f_out):
            val = sum(agg[k] * W[k, f] for k in range(f_in))
            out[i, f] = max(0.0, val)
    return out


def oracle_gcn_forward(X: np.ndarray, A: np.ndarray, W1: np.ndarray, W2: np.ndarray) -> np.ndarray:
    return oracle_gcn_layer(oracle_gcn_layer(X, A, W1), A, W2)


# ---------------------------------------------------------------------------
# box-graph reconstruction loss
# ---------------------------------------------------------------------------

def oracle_presence_nll(D, l) -> float:
    p = len(D)
    total = 0.0
    for k in range(p):
        d = min(max(D[k], 1e-7), 1 - 1e-7)
        total += l[k] * math.log(d) + (1 - l[k]) * math.log(1 - d)
    return -total / p


def oracle_iou(b_hat, b) -> float:
    ix = max(0.0, min(b_hat[2], b[2]) - max(b_hat[0], b[0]))
    iy = max(0.0, min(b_hat[3], b[3]) - max(b_hat[1], b[1]))
    inter = ix * iy
    a_hat = max(0.0, b_hat[2] - b_hat[0]) * max(0.0, b_hat[3] - b_hat[1])
    a = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (a_hat + a - inter)


def oracle_iou_loss(b_hat, b) -> float:
    return -math.log(max(oracle_iou(b_hat, b), 1e-6))


def oracle_box_mse(b_hat, b) -> float:
    return sum((b_hat[j] - b[j]) ** 2 for j in range(4))


def oracle_pairwise_center(boxes_hat, boxes, presence) -> float:
    p = len(boxes)

    def center(b):
        return ((b[0] + b[2]) / 2.0, (b[1] + b[3]) / 2.0)

    def dist(b1, b2):
        c1, c2 = center(b1), center(b2)
        return math.sqrt((c1[0] - c2[0]) ** 2 + (c1[1] - c2[1]) ** 2)

    total = 0.0
    for m in range(p):
        for n in range(p):
            if m == n or not (presence[m] and presence[n]):
                continue
            total += (dist(boxes[m], boxes[n]) - dist(boxes_hat[m], boxes_hat[n])) ** 2
    return total / (p * (p - 1))


def oracle_adjacency_bce(probs, A) -> float:
    p = len(A)
    total = 0.0
    for m in range(p):
        for n in range(p):
            q = min(max(probs[m][n], 1e-7), 1 - 1e-7)
            total += -(A[m][n] * math.log(q) + (1 - A[m][n]) * math.log(1 - q))
    return total / (p * p)


def oracle_recon_loss(presence_probs, boxes_hat, adjacency_probs, X, A) -> dict:
    """Full reconstruction loss from raw lists; mirrors the published form
    term by term."""
    p = len(X)
    presence = [row[0] for row in X]
    boxes = [row[1:5] for row in X]
    term_presence = oracle_presence_nll(presence_probs, presence)
    box_total = 0.0
    for i in range(p):
        if presence[i]:
            box_total += oracle_box_mse(boxes_hat[i], boxes[i])
            box_total += oracle_iou_loss(boxes_hat[i], boxes[i])
    term_boxes = box_total / p
    term_centers = oracle_pairwise_center(boxes_hat, boxes, presence)
    term_adjacency = oracle_adjacency_bce(adjacency_probs, A)
    return {
        "presence": term_presence,
        "boxes": term_boxes,
        "centers": term_centers,
        "adjacency": term_adjacency,
        "total": term_presence + term_boxes + term_centers + term_adjacency,
    }


# ---------------------------------------------------------------------------
# masks / KL / mixtures
# ---------------------------------------------------------------------------

def oracle_mask_ce(logits: np.ndarray, targets: np.ndarray, presence) -> float:
    """Mean per-pixel two-class cross-entropy over present parts.

    logits: (p, 2, h, w); targets: (p, h, w)."""
    p, _, h, w = logits.shape
    total = 0.0
    n_present = 0
    for k in range(p):
        if not presence[k]:
            continue
        n_present += 1
        part = 0.0
        for r in range(h):
            for c in range(w):
                a, b = logits[k, 0, r, c], logits[k, 1, r, c]
                m = max(a, b)
                logz = m + math.log(math.exp(a - m) + math.exp(b - m))
                t = targets[k, r, c]
                part += -(t * (b - logz) + (1 - t) * (a - logz))
        total += part / (h * w)
    return total / max(1, n_present)


def oracle_kl_mc(mu: np.ndarray, log_var: np.ndarray, n: int = 1_000_000,
                 seed: int = 0) -> float:
    """Monte-Carlo KL(q || N(0, I)) via draws from q."""
    rng = np.random.default_rng(seed)
    std = np.exp(0.5 * log_var)
    z = mu + std * rng.standard_normal((n, len(mu)))
    log_q = (-0.5 * ((z - mu) / std) ** 2 - 0.5 * math.log(2 * math.pi) - 0.5 * log_var).sum(axis=1)
    log_p = (-0.5 * z**2 - 0.5 * math.log(2 * math.pi)).sum(axis=1)
    return float(np.mean(log_q - log_p))


def oracle_gmm_nll(weights, means, log_scales, box) -> float:
    """Negative log-likelihood of one box under a K-component diagonal GMM."""
    k_comp = len(weights)
    comps = []
    for k in range(k_comp):
        log_pdf = 0.0
        for j in range(4):
            s = math.exp(log_scales[k][j])
            log_pdf += -0.5 * ((box[j] - means[k][j]) / s) ** 2 - math.log(s) \
                - 0.5 * math.log(2 * math.pi)
        comps.append(math.log(weights[k]) + log_pdf)
    m = max(comps)
    return -(m + math.log(sum(math.exp(c - m) for c in comps)))


def oracle_softmax(h) -> np.ndarray:
    e = np.exp(np.asarray(h, dtype=np.float64) - np.max(h))
    return e / e.sum()


def oracle_resize_half(mask: np.ndarray) -> np.ndarray:
    """Exact 2x decimation: 2x2 block average then threshold at 0.5."""
    h, w = mask.shape
    out = np.zeros((h // 2, w // 2), dtype=np.uint8)
    for r in range(h // 2):
        for c in range(w // 2):
            block = mask[2 * r : 2 * r + 2, 2 * c : 2 * c + 2].astype(float)
            out[r, c] = 1 if block.mean() >= 0.5 else 0
    return out
