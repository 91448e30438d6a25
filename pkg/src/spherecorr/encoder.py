"""Attention encoder over sphere anchors, with its own reverse-mode engine.

Architecture per layer (no layer norm, single head):

    Q = K = F + E_pos,  V = F
    S = (Q Wq)(K Wk)^T / sqrt(C),  P = row-softmax(S)
    F_hat = P (V Wv) + F
    F_out = MLP(F_hat) + F_hat        MLP: C -> H -> C, exact-erf GeLU

One E_pos (M x C) is shared by all layers; its gradient accumulates across
them. The NOCS head is a C -> H -> 3 MLP whose rows are L2-normalized with a
1e-12 floor (zero rows are possible at init; the floor turns the normalize
into a benign linear map there and the forward counts the occurrences).

All forward/backward math is plain numpy in double precision. The backward
pass consumes the cache produced by its matching forward; gradients are
checked against central finite differences in the tests, so any change here
must keep the two passes in lockstep.
"""

from __future__ import annotations

import json

import numpy as np
from scipy.special import erf

from .errors import NumericError

SQRT2 = np.sqrt(2.0)
INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
NORM_EPS = 1e-12


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / SQRT2))


def gelu_grad(x):
    return 0.5 * (1.0 + erf(x / SQRT2)) + x * np.exp(-0.5 * x * x) * INV_SQRT_2PI


def init_params(seed: int, m: int, c: int, h: int, n_layers: int) -> dict:
    """Gaussian fan-in init; E_pos at sigma = 0.02; zero biases."""
    rng = np.random.default_rng(seed)
    params = {"epos": 0.02 * rng.standard_normal((m, c))}
    for i in range(n_layers):
        for name in ("wq", "wk", "wv"):
            params[f"layer{i}.{name}"] = rng.standard_normal((c, c)) / np.sqrt(c)
        params[f"layer{i}.w1"] = rng.standard_normal((c, h)) / np.sqrt(c)
        params[f"layer{i}.b1"] = np.zeros(h)
        params[f"layer{i}.w2"] = rng.standard_normal((h, c)) / np.sqrt(h)
        params[f"layer{i}.b2"] = np.zeros(c)
    params["head.w1"] = rng.standard_normal((c, h)) / np.sqrt(c)
    params["head.b1"] = np.zeros(h)
    params["head.w2"] = rng.standard_normal((h, 3)) / np.sqrt(h)
    params["head.b2"] = np.zeros(3)
    return params


def n_layers_of(params: dict) -> int:
    idx = (int(k[5 : k.index(".")]) for k in params if k.startswith("layer"))
    return 1 + max(idx, default=-1)


def expected_param_count(n_layers: int, m: int, c: int, h: int) -> int:
    per_layer = 3 * c * c + c * h + h + h * c + c
    head = c * h + h + h * 3 + 3
    return m * c + n_layers * per_layer + head


def count_params(params: dict) -> int:
    return sum(v.size for v in params.values())


def _as_batch(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        return x[None], True
    return x, False


def encoder_forward(params: dict, f0: np.ndarray, cache: list | None = None) -> np.ndarray:
    """Run the attention layers; (M,C) or (B,M,C) in, same shape out."""
    f, squeeze = _as_batch(f0)
    c = f.shape[-1]
    scale = 1.0 / np.sqrt(c)
    epos = params["epos"]
    for i in range(n_layers_of(params)):
        q = f + epos
        qp = q @ params[f"layer{i}.wq"]
        kp = q @ params[f"layer{i}.wk"]
        vp = f @ params[f"layer{i}.wv"]
        s = (qp @ kp.transpose(0, 2, 1)) * scale
        s -= s.max(axis=-1, keepdims=True)
        p = np.exp(s)
        p /= p.sum(axis=-1, keepdims=True)
        f1 = p @ vp + f
        u = f1 @ params[f"layer{i}.w1"] + params[f"layer{i}.b1"]
        g = gelu(u)
        f2 = g @ params[f"layer{i}.w2"] + params[f"layer{i}.b2"] + f1
        if not np.all(np.isfinite(f2)):
            raise NumericError(f"non-finite activations in layer {i}")
        if cache is not None:
            cache.append({"f": f, "q": q, "qp": qp, "kp": kp, "vp": vp, "p": p, "f1": f1, "u": u, "g": g})
        f = f2
    return f[0] if squeeze else f


def nocs_head(params: dict, f: np.ndarray, cache: dict | None = None):
    """L2-normalized head output; returns (coords, zero_row_count)."""
    x, squeeze = _as_batch(f)
    u = x @ params["head.w1"] + params["head.b1"]
    g = gelu(u)
    z = g @ params["head.w2"] + params["head.b2"]
    norm = np.linalg.norm(z, axis=-1, keepdims=True)
    denom = np.maximum(norm, NORM_EPS)
    o = z / denom
    n_zero = int((norm < NORM_EPS).sum())
    if cache is not None:
        cache.update({"f": x, "u": u, "g": g, "z": z, "denom": denom, "clamped": norm < NORM_EPS})
    return (o[0] if squeeze else o), n_zero


def forward(params: dict, f0: np.ndarray):
    """Full forward for training: (o, cache, zero_row_count)."""
    f, _ = _as_batch(f0)
    layer_cache: list = []
    f_enc = encoder_forward(params, f, cache=layer_cache)
    head_cache: dict = {}
    o, n_zero = nocs_head(params, f_enc, cache=head_cache)
    return o, {"layers": layer_cache, "head": head_cache, "f_enc": f_enc}, n_zero


def backward(params: dict, cache: dict, d_o: np.ndarray) -> dict:
    """Gradients of every parameter given d(loss)/d(head output rows)."""
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    hc = cache["head"]
    d_o = np.asarray(d_o, dtype=float)
    if d_o.ndim == 2:
        d_o = d_o[None]

    # Normalize backward: o = z/denom; where clamped, denom is a constant.
    z, denom = hc["z"], hc["denom"]
    zdot = (d_o * z).sum(axis=-1, keepdims=True)
    dz = d_o / denom - np.where(hc["clamped"], 0.0, z * zdot / denom**3)
    dg = dz @ params["head.w2"].T
    grads["head.w2"] = np.einsum("bmh,bmc->hc", hc["g"], dz)
    grads["head.b2"] = dz.sum(axis=(0, 1))
    du = dg * gelu_grad(hc["u"])
    grads["head.w1"] = np.einsum("bmc,bmh->ch", hc["f"], du)
    grads["head.b1"] = du.sum(axis=(0, 1))
    df = du @ params["head.w1"].T

    scale = 1.0 / np.sqrt(params["epos"].shape[-1])
    for i in reversed(range(n_layers_of(params))):
        lc = cache["layers"][i]
        # f2 = g @ w2 + b2 + f1
        dg = df @ params[f"layer{i}.w2"].T
        grads[f"layer{i}.w2"] = np.einsum("bmh,bmc->hc", lc["g"], df)
        grads[f"layer{i}.b2"] = df.sum(axis=(0, 1))
        du = dg * gelu_grad(lc["u"])
        grads[f"layer{i}.w1"] = np.einsum("bmc,bmh->ch", lc["f1"], du)
        grads[f"layer{i}.b1"] = du.sum(axis=(0, 1))
        df1 = df + du @ params[f"layer{i}.w1"].T

        # f1 = p @ vp + f
        dp = df1 @ lc["vp"].transpose(0, 2, 1)
        dvp = lc["p"].transpose(0, 2, 1) @ df1
        ds = lc["p"] * (dp - (dp * lc["p"]).sum(axis=-1, keepdims=True))
        dqp = ds @ lc["kp"] * scale
        dkp = ds.transpose(0, 2, 1) @ lc["qp"] * scale
        grads[f"layer{i}.wq"] = np.einsum("bmc,bmd->cd", lc["q"], dqp)
        grads[f"layer{i}.wk"] = np.einsum("bmc,bmd->cd", lc["q"], dkp)
        grads[f"layer{i}.wv"] = np.einsum("bmc,bmd->cd", lc["f"], dvp)
        dq = dqp @ params[f"layer{i}.wq"].T + dkp @ params[f"layer{i}.wk"].T
        dv = dvp @ params[f"layer{i}.wv"].T
        grads["epos"] += dq.sum(axis=0)
        df = dq + dv + df1
    return grads


def save_params(path, params: dict, meta: dict | None = None) -> None:
    """Versioned npz checkpoint; meta (config hash etc.) rides along as JSON."""
    payload = dict(params)
    payload["__meta__"] = np.frombuffer(
        json.dumps({"format": 1, **(meta or {})}).encode(), dtype=np.uint8
    )
    np.savez(path, **payload)


def load_params(path) -> tuple[dict, dict]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode()) if "__meta__" in data else {}
        params = {k: data[k].copy() for k in data.files if k != "__meta__"}
    return params, meta
