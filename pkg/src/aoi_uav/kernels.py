"""Hot numeric kernels: dense-net forward/backward, Adam, and DP backups.

Every kernel has two interchangeable implementations:

* a numba ``@njit`` build (default), and
* a pure-numpy fallback.

Selection is made once at import time from the environment variable
``AOI_UAV_BACKEND`` (``"numba"`` or ``"numpy"``; default ``"numba"``, falling
back to numpy when numba is unavailable).  Both implementations of each
kernel stay importable for cross-checking and benchmarking.  Results agree
to floating-point rounding, not bit-for-bit: reduction order differs
between the builds, so reproducibility guarantees hold per backend.
"""

from __future__ import annotations

import os

import numpy as np

_REQUESTED = os.environ.get("AOI_UAV_BACKEND", "numba").strip().lower()
if _REQUESTED not in ("numba", "numpy"):
    raise RuntimeError(f"AOI_UAV_BACKEND must be 'numba' or 'numpy', got {_REQUESTED!r}")

_HAVE_NUMBA = False
if _REQUESTED == "numba":
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:
        _HAVE_NUMBA = False


def active_backend() -> str:
    return "numba" if _HAVE_NUMBA else "numpy"


def param_count(dims) -> int:
    """Total parameter count of a dense net with the given layer widths."""
    n = 0
    for l in range(len(dims) - 1):
        n += int(dims[l]) * int(dims[l + 1]) + int(dims[l + 1])
    return n


# --------------------------------------------------------------------------- #
# forward pass (single source, compiled twin)
# --------------------------------------------------------------------------- #

def _forward_impl(theta, dims, X):
    """Dense net forward: affine + ReLU hidden layers, identity output."""
    n_layers = dims.shape[0] - 1
    a = X
    off = 0
    for l in range(n_layers):
        nin = dims[l]
        nout = dims[l + 1]
        W = theta[off:off + nin * nout].reshape(nin, nout)
        off += nin * nout
        b = theta[off:off + nout]
        off += nout
        z = a @ W + b
        if l < n_layers - 1:
            z = np.maximum(z, 0.0)
        a = z
    return a


forward_numpy = _forward_impl
forward_numba = njit(cache=True)(_forward_impl) if _HAVE_NUMBA else None


# --------------------------------------------------------------------------- #
# TD loss and analytic gradient
# --------------------------------------------------------------------------- #

def _loss_grad_loops(theta, target_theta, dims, S, A, R, S2, DONE,
                     gamma, huber_delta, use_mse):
    B = S.shape[0]
    n_layers = dims.shape[0] - 1

    # bootstrap targets from the frozen net; done samples cut the bootstrap
    q2 = _forward_impl(target_theta, dims, S2)
    y = np.empty(B, dtype=np.float64)
    for i in range(B):
        mx = q2[i, 0]
        for j in range(1, q2.shape[1]):
            if q2[i, j] > mx:
                mx = q2[i, j]
        y[i] = R[i] + gamma * mx * (1.0 - DONE[i])

    # online forward, keeping post-activations for the backward pass
    acts = [S]
    a = S
    off = 0
    for l in range(n_layers):
        nin = dims[l]
        nout = dims[l + 1]
        W = theta[off:off + nin * nout].reshape(nin, nout)
        off += nin * nout
        b = theta[off:off + nout]
        off += nout
        z = a @ W + b
        if l < n_layers - 1:
            z = np.maximum(z, 0.0)
        a = z
        acts.append(a)
    q = acts[n_layers]

    loss = 0.0
    dq = np.zeros_like(q)
    for i in range(B):
        diff = q[i, A[i]] - y[i]
        if use_mse:
            loss += diff * diff
            g = 2.0 * diff / B
        else:
            ad = abs(diff)
            if ad <= huber_delta:
                loss += 0.5 * diff * diff
                g = diff / B
            else:
                loss += huber_delta * (ad - 0.5 * huber_delta)
                g = (huber_delta if diff > 0.0 else -huber_delta) / B
        dq[i, A[i]] = g
    loss /= B

    offs = np.empty(n_layers, dtype=np.int64)
    o = 0
    for l in range(n_layers):
        offs[l] = o
        o += dims[l] * dims[l + 1] + dims[l + 1]

    grad = np.zeros(theta.shape[0], dtype=np.float64)
    delta = dq
    for l in range(n_layers - 1, -1, -1):
        nin = dims[l]
        nout = dims[l + 1]
        base = offs[l]
        dW = np.ascontiguousarray(acts[l].T) @ delta
        grad[base:base + nin * nout] = dW.ravel()
        db = grad[base + nin * nout:base + nin * nout + nout]
        for i in range(B):
            for j in range(nout):
                db[j] += delta[i, j]
        if l > 0:
            W = theta[base:base + nin * nout].reshape(nin, nout)
            dpost = delta @ np.ascontiguousarray(W.T)
            delta = dpost * (acts[l] > 0.0)

    return loss, grad


def loss_grad_numpy(theta, target_theta, dims, S, A, R, S2, DONE,
                    gamma, huber_delta, use_mse):
    B = S.shape[0]
    n_layers = dims.shape[0] - 1

    q2 = _forward_impl(target_theta, dims, S2)
    y = R + gamma * q2.max(axis=1) * (1.0 - DONE)

    acts = [S]
    a = S
    off = 0
    for l in range(n_layers):
        nin, nout = int(dims[l]), int(dims[l + 1])
        W = theta[off:off + nin * nout].reshape(nin, nout)
        off += nin * nout
        b = theta[off:off + nout]
        off += nout
        z = a @ W + b
        if l < n_layers - 1:
            z = np.maximum(z, 0.0)
        a = z
        acts.append(a)
    q = acts[-1]

    rows = np.arange(B)
    diff = q[rows, A] - y
    if use_mse:
        loss = float(np.mean(diff * diff))
        g = 2.0 * diff / B
    else:
        ad = np.abs(diff)
        small = ad <= huber_delta
        loss = float(np.mean(np.where(small, 0.5 * diff * diff,
                                      huber_delta * (ad - 0.5 * huber_delta))))
        g = np.where(small, diff, huber_delta * np.sign(diff)) / B
    dq = np.zeros_like(q)
    dq[rows, A] = g

    offs = []
    o = 0
    for l in range(n_layers):
        offs.append(o)
        o += int(dims[l]) * int(dims[l + 1]) + int(dims[l + 1])

    grad = np.zeros(theta.shape[0], dtype=np.float64)
    delta = dq
    for l in range(n_layers - 1, -1, -1):
        nin, nout = int(dims[l]), int(dims[l + 1])
        base = offs[l]
        dW = acts[l].T @ delta
        grad[base:base + nin * nout] = dW.ravel()
        grad[base + nin * nout:base + nin * nout + nout] = delta.sum(axis=0)
        if l > 0:
            W = theta[base:base + nin * nout].reshape(nin, nout)
            delta = (delta @ W.T) * (acts[l] > 0.0)

    return loss, grad


loss_grad_numba = njit(cache=True)(_loss_grad_loops) if _HAVE_NUMBA else None


# --------------------------------------------------------------------------- #
# Adam update; returns False when any parameter goes non-finite
# --------------------------------------------------------------------------- #

def _adam_apply_loops(theta, grad, m, v, t, lr, beta1, beta2, eps):
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    ok = True
    for k in range(theta.shape[0]):
        gk = grad[k]
        m[k] = beta1 * m[k] + (1.0 - beta1) * gk
        v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk
        theta[k] -= lr * (m[k] / bc1) / (np.sqrt(v[k] / bc2) + eps)
        if not np.isfinite(theta[k]):
            ok = False
    return ok


def adam_apply_numpy(theta, grad, m, v, t, lr, beta1, beta2, eps):
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    theta -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return bool(np.isfinite(theta).all())


adam_apply_numba = njit(cache=True)(_adam_apply_loops) if _HAVE_NUMBA else None


# --------------------------------------------------------------------------- #
# finite-horizon DP backup over tabulated transitions
# --------------------------------------------------------------------------- #

def dp_backup_numpy(V, NEXT, REW, CONT, TERM_STATE):
    """One Bellman backup: V'[s] = max_a REW[s,a] + CONT[s,a] * V[NEXT[s,a]].

    TERM_STATE marks absorbing states whose value stays zero; CONT is zero
    where the transition itself ends the episode.
    """
    cand = REW + CONT * V[NEXT]
    out = cand.max(axis=1)
    out[TERM_STATE] = 0.0
    return out


def _dp_backup_loops(V, NEXT, REW, CONT, TERM_STATE):
    n_states, n_actions = NEXT.shape
    out = np.empty(n_states, dtype=np.float64)
    for s in range(n_states):
        if TERM_STATE[s]:
            out[s] = 0.0
            continue
        best = REW[s, 0] + CONT[s, 0] * V[NEXT[s, 0]]
        for a in range(1, n_actions):
            c = REW[s, a] + CONT[s, a] * V[NEXT[s, a]]
            if c > best:
                best = c
        out[s] = best
    return out


dp_backup_numba = njit(cache=True)(_dp_backup_loops) if _HAVE_NUMBA else None


def dp_greedy_numpy(V, NEXT, REW, CONT):
    """Greedy action per state against V, lowest index on ties."""
    cand = REW + CONT * V[NEXT]
    return cand.argmax(axis=1).astype(np.int64)


def _dp_greedy_loops(V, NEXT, REW, CONT):
    n_states, n_actions = NEXT.shape
    out = np.empty(n_states, dtype=np.int64)
    for s in range(n_states):
        best = REW[s, 0] + CONT[s, 0] * V[NEXT[s, 0]]
        arg = 0
        for a in range(1, n_actions):
            c = REW[s, a] + CONT[s, a] * V[NEXT[s, a]]
            if c > best:
                best = c
                arg = a
        out[s] = arg
    return out


dp_greedy_numba = njit(cache=True)(_dp_greedy_loops) if _HAVE_NUMBA else None


# active aliases
if _HAVE_NUMBA:
    forward = forward_numba
    loss_grad = loss_grad_numba
    adam_apply = adam_apply_numba
    dp_backup = dp_backup_numba
    dp_greedy = dp_greedy_numba
else:
    forward = forward_numpy
    loss_grad = loss_grad_numpy
    adam_apply = adam_apply_numpy
    dp_backup = dp_backup_numpy
    dp_greedy = dp_greedy_numpy
