"""Convergence diagnostics for multi-chain MCMC output.

Implements the split potential scale reduction factor and a multi-chain
effective sample size with Geyer's initial-positive-sequence truncation.
Input convention throughout: ``chains`` has shape (n_chains, n_draws) for
one scalar parameter, or (n_chains, n_draws, n_params) for many.
"""

from __future__ import annotations

import numpy as np


def _split(chains):
    """Split each chain in half, doubling the chain count."""
    chains = np.asarray(chains, dtype=np.float64)
    if chains.ndim != 2:
        raise ValueError("expected (n_chains, n_draws)")
    n = chains.shape[1] // 2
    if n < 2:
        raise ValueError("need at least 4 draws per chain")
    return np.vstack([chains[:, :n], chains[:, chains.shape[1] - n:]])


def split_rhat(chains) -> float:
    """Split potential scale reduction factor for one scalar parameter.

    Each chain is halved (so a trend inside a chain shows up as
    between-sequence variance), then the usual ratio of pooled to
    within-sequence variance is returned.  1.0 means indistinguishable
    sequences; values above about 1.1 mean keep sampling.
    """
    seqs = _split(chains)
    m, n = seqs.shape
    means = seqs.mean(axis=1)
    variances = seqs.var(axis=1, ddof=1)
    W = variances.mean()
    B = n * means.var(ddof=1)
    if W <= 0:
        return 1.0 if B <= 0 else np.inf
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))


def _autocov(x):
    """Biased autocovariance of one sequence via FFT, lags 0..n-1."""
    x = x - x.mean()
    n = x.shape[0]
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conjugate(f), size)[:n].real
    return acov / n


def ess(chains) -> float:
    """Multi-chain effective sample size for one scalar parameter.

    Combines per-chain autocovariances into pooled autocorrelations,
    sums them in adjacent pairs, and truncates at the first nonpositive
    pair (Geyer's initial positive sequence), which guards against the
    noisy tail of the empirical autocorrelation.
    """
    seqs = _split(chains)
    m, n = seqs.shape
    means = seqs.mean(axis=1)
    variances = seqs.var(axis=1, ddof=1)
    W = variances.mean()
    B = n * means.var(ddof=1) if m > 1 else 0.0
    var_plus = (n - 1) / n * W + B / n
    if var_plus <= 0:
        return float(m * n)

    acov = np.vstack([_autocov(seqs[j]) for j in range(m)])
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0

    tau = 0.0
    t = 1
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair <= 0:
            break
        tau += pair
        t += 2
    out = m * n / (1.0 + 2.0 * tau)
    return float(min(out, m * n))


def summarize(chains_3d, names=None) -> dict:
    """Per-parameter R-hat and ESS for an (n_chains, n_draws, P) array."""
    arr = np.asarray(chains_3d, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError("expected (n_chains, n_draws, n_params)")
    P = arr.shape[2]
    if names is None:
        names = [f"p{j}" for j in range(P)]
    if len(names) != P:
        raise ValueError("one name per parameter required")
    return {str(names[j]): {"rhat": split_rhat(arr[:, :, j]),
                            "ess": ess(arr[:, :, j])}
            for j in range(P)}
