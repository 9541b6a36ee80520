"""The four unsupervised losses and the clustering step feeding the
contrastive interference loss.

All losses are torch ops so gradients flow back into the network.  Cluster
assignment runs on detached, z-normalized traces (Euclidean distance on
z-normalized signals is monotone in Pearson correlation) and only the
resulting labels enter the loss graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .signals import HR_BAND_HZ


class LossError(ValueError):
    pass


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    K: int
    centroids: np.ndarray


@dataclass
class LossReport:
    l_nc: float
    l_kcn: float
    l_cr_hat: float
    l_dcr: float
    total: torch.Tensor
    stage: int

    def as_row(self):
        return {
            "l_nc": self.l_nc,
            "l_kcn": self.l_kcn,
            "l_cr_hat": self.l_cr_hat,
            "l_dcr": self.l_dcr,
            "total": float(self.total.detach()),
            "stage": self.stage,
        }


def negative_pearson_t(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """1 - Pearson correlation for 1-D torch tensors."""
    da = a - a.mean()
    db = b - b.mean()
    sa = torch.sqrt((da * da).sum())
    sb = torch.sqrt((db * db).sum())
    if sa == 0 or sb == 0:
        raise LossError("zero-variance trace in negative Pearson")
    return 1.0 - (da * db).sum() / (sa * sb)


def psd_features(traces: torch.Tensor, fs: float, band=HR_BAND_HZ) -> torch.Tensor:
    """Band-limited, L1-normalized power spectra of (N, T) traces."""
    if traces.ndim != 2:
        raise LossError("expected (N, T) traces")
    n = traces.shape[1]
    x = traces - traces.mean(dim=1, keepdim=True)
    spec = torch.fft.rfft(x, dim=1)
    power = spec.real**2 + spec.imag**2
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    sel = torch.as_tensor((freqs >= band[0]) & (freqs <= band[1]))
    if not bool(sel.any()):
        raise LossError("no PSD bins inside band; trace too short for fs/band")
    power = power[:, sel]
    totals = power.sum(dim=1, keepdim=True)
    if bool((totals == 0).any()):
        raise LossError("zero-energy trace has no in-band PSD")
    return power / totals


def loss_nc(n_fg: torch.Tensor, n_bg: torch.Tensor) -> torch.Tensor:
    """Mean negative Pearson over paired fg/bg interference estimates."""
    if n_fg.shape != n_bg.shape:
        raise LossError("fg/bg interference sets must pair up")
    terms = [negative_pearson_t(a, b) for a, b in zip(n_fg, n_bg)]
    return torch.stack(terms).mean()


def _znorm_rows(x: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=1, keepdims=True)
    sd = x.std(axis=1, keepdims=True)
    if np.any(sd == 0):
        raise LossError("constant trace cannot be z-normalized for clustering")
    return (x - mu) / sd


def cluster_interference(traces, K: int, seed: int = 0) -> ClusterAssignment:
    """K-Means over z-normalized traces.

    Initialization is a deterministic farthest-first traversal (data-driven,
    so permuting the inputs permutes the labels); Lloyd iterations are capped.
    The seed parameter is kept for interface stability but the procedure is
    fully deterministic.
    """
    x = np.asarray([np.asarray(t, dtype=np.float64) for t in traces])
    H = x.shape[0]
    if K < 1:
        raise LossError("K must be at least 1")
    if K > H:
        raise LossError(f"K={K} exceeds number of traces {H}")
    z = _znorm_rows(x)

    # Farthest-first seeding, starting from the trace farthest from the mean.
    center_idx = [int(np.argmax(np.linalg.norm(z - z.mean(axis=0), axis=1)))]
    while len(center_idx) < K:
        d = np.min(
            np.stack([np.linalg.norm(z - z[i], axis=1) for i in center_idx]), axis=0
        )
        center_idx.append(int(np.argmax(d)))
    centroids = z[center_idx].copy()

    labels = np.zeros(H, dtype=int)
    for _ in range(100):
        dists = np.linalg.norm(z[:, None, :] - centroids[None, :, :], axis=2)
        new_labels = np.argmin(dists, axis=1)
        for k in range(K):
            if not np.any(new_labels == k):
                # Re-seed an empty cluster with the worst-assigned point.
                far = int(np.argmax(dists[np.arange(H), new_labels]))
                new_labels[far] = k
        if np.array_equal(new_labels, labels) and _ > 0:
            break
        labels = new_labels
        for k in range(K):
            centroids[k] = z[labels == k].mean(axis=0)
    return ClusterAssignment(labels=labels, K=K, centroids=centroids)


def loss_kcn(all_traces: torch.Tensor, assignment: ClusterAssignment) -> torch.Tensor:
    """Contrastive interference loss over same-cluster pairs.

    For each ordered same-cluster pair (i, j):
    log(exp(NP(n_i, n_j)) / sum_h exp(NP(n_i, n_h)) + 1), the sum running
    over every trace including i itself.
    """
    H = all_traces.shape[0]
    if assignment.labels.shape[0] != H:
        raise LossError("assignment does not cover all traces")
    np_matrix = torch.zeros((H, H), dtype=all_traces.dtype, device=all_traces.device)
    for i in range(H):
        for j in range(H):
            np_matrix[i, j] = negative_pearson_t(all_traces[i], all_traces[j])
    denom = torch.exp(np_matrix).sum(dim=1)
    terms = []
    for i in range(H):
        for j in range(H):
            if i != j and assignment.labels[i] == assignment.labels[j]:
                terms.append(torch.log(torch.exp(np_matrix[i, j]) / denom[i] + 1.0))
    if not terms:
        raise LossError("no cluster has two members; loss undefined")
    return torch.stack(terms).mean()


def _contrastive_psd_loss(traces, pos_pairs, fs, band, interference=None):
    feats = psd_features(traces, fs, band)
    H = feats.shape[0]
    dists = torch.cdist(feats, feats)
    exp_d = torch.exp(dists)
    denom = exp_d.sum(dim=1) - torch.diagonal(exp_d)  # self-term excluded
    if interference is not None and interference.shape[0] > 0:
        n_feats = psd_features(interference, fs, band)
        denom = denom + torch.exp(torch.cdist(feats, n_feats)).sum(dim=1)
    terms = []
    for i, j in pos_pairs:
        if not (0 <= i < H and 0 <= j < H) or i == j:
            raise LossError(f"bad positive pair ({i}, {j})")
        terms.append(torch.log(exp_d[i, j] / denom[i] + 1.0))
        terms.append(torch.log(exp_d[j, i] / denom[j] + 1.0))
    if not terms:
        raise LossError("no positive pairs")
    return torch.stack(terms).mean()


def loss_cr_hat(traces: torch.Tensor, pos_pairs, fs: float, band=HR_BAND_HZ) -> torch.Tensor:
    """Contrastive rPPG loss on PSD distances (Euclidean, band-limited)."""
    return _contrastive_psd_loss(traces, pos_pairs, fs, band)


def loss_dcr(
    traces: torch.Tensor,
    pos_pairs,
    n_fg: torch.Tensor,
    fs: float,
    band=HR_BAND_HZ,
) -> torch.Tensor:
    """De-interfered contrastive loss: interference PSDs join the denominator."""
    return _contrastive_psd_loss(traces, pos_pairs, fs, band, interference=n_fg)


@dataclass
class LossWeights:
    nc: float = 1.0
    kcn: float = 1.0
    cr_hat: float = 1.0
    dcr: float = 1.0


def total_loss(
    bundle,
    stage: int,
    weights: LossWeights = None,
    K: int = 4,
    seed: int = 0,
    band=HR_BAND_HZ,
) -> LossReport:
    """Combine the four losses; stage 1 leaves the de-interfered term out."""
    if stage not in (1, 2):
        raise LossError(f"stage must be 1 or 2, got {stage}")
    weights = weights or LossWeights()
    fs = bundle.fps

    l_nc = loss_nc(bundle.n_fg, bundle.n_bg)
    all_n = torch.cat([bundle.n_fg, bundle.n_bg], dim=0)
    k = min(K, all_n.shape[0])
    assignment = cluster_interference(all_n.detach().cpu().numpy(), K=k, seed=seed)
    l_kcn = loss_kcn(all_n, assignment)

    L = bundle.n_fg.shape[0]
    pos_pairs = [(i, i + L) for i in range(L)]
    l_cr_hat = loss_cr_hat(bundle.r_hat, pos_pairs, fs, band)
    l_dcr = loss_dcr(bundle.r, pos_pairs, bundle.n_fg, fs, band)

    total = weights.cr_hat * l_cr_hat + weights.nc * l_nc + weights.kcn * l_kcn
    if stage == 2:
        total = total + weights.dcr * l_dcr
    return LossReport(
        l_nc=float(l_nc.detach()),
        l_kcn=float(l_kcn.detach()),
        l_cr_hat=float(l_cr_hat.detach()),
        l_dcr=float(l_dcr.detach()),
        total=total,
        stage=stage,
    )
