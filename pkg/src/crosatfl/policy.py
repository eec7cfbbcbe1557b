"""Masked attention actor-critic for sequential cluster assignment.

One decision step scores K_max "join cluster k" actions plus one "open new
cluster" action from the current satellite's features and an attention
summary of the open clusters. The network is deliberately tiny (hundreds of
parameters) and both forward and backward passes are written out by hand in
numpy so the gradient can be checked against finite differences.

Masking follows the usual invalid-action trick: infeasible logits are pinned
to a large negative constant before the softmax, so they carry zero
probability and zero gradient.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

MASK_FILL = -1e9

# Fixed parameter order; serialization and gradient vectors rely on it.
_PARAM_KEYS = ("Wq", "Wk", "Wv", "W1", "b1", "W2", "b2", "Wc1", "bc1", "wc2", "bc2")

POLICY_FORMAT = "starmask-policy/1"


@dataclass
class ForwardCache:
    x: np.ndarray
    summaries: np.ndarray
    mask: np.ndarray
    attn: np.ndarray
    q: np.ndarray
    keys: np.ndarray
    vals: np.ndarray
    z: np.ndarray
    u: np.ndarray
    h: np.ndarray
    hc: np.ndarray
    logits: np.ndarray
    probs: np.ndarray
    logp: np.ndarray
    value: float


class MaskedPolicy:
    """Actor-critic over K_max + 1 actions with dot-product attention."""

    def __init__(self, k_max: int, d_sat: int, d_sum: int, d_model: int = 8,
                 hidden: int = 16, seed: int = 0) -> None:
        if k_max < 1:
            raise ValueError("k_max must be >= 1")
        self.k_max = k_max
        self.d_sat = d_sat
        self.d_sum = d_sum
        self.d_model = d_model
        self.hidden = hidden
        self.n_actions = k_max + 1
        d_u = d_sat + d_model
        rng = np.random.default_rng(seed)

        def init(shape: tuple[int, ...]) -> np.ndarray:
            fan_in = shape[0] if shape else 1
            return rng.standard_normal(shape) / np.sqrt(fan_in)

        self.params: dict[str, np.ndarray] = {
            "Wq": init((d_sat, d_model)),
            "Wk": init((d_sum, d_model)),
            "Wv": init((d_sum, d_model)),
            "W1": init((d_u, hidden)),
            "b1": np.zeros(hidden),
            "W2": init((hidden, self.n_actions)),
            "b2": np.zeros(self.n_actions),
            "Wc1": init((d_u, hidden)),
            "bc1": np.zeros(hidden),
            "wc2": init((hidden,)),
            "bc2": np.zeros(()),
        }

    # --- forward/backward -------------------------------------------------

    def forward(self, x: np.ndarray, summaries: np.ndarray, mask: np.ndarray) -> ForwardCache:
        """Masked action log-probabilities and state value for one step."""
        x = np.asarray(x, dtype=float)
        summaries = np.asarray(summaries, dtype=float)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (self.n_actions,):
            raise ValueError(f"mask must have shape ({self.n_actions},)")
        if not mask.any():
            raise ValueError("mask admits no action")
        p = self.params

        q = x @ p["Wq"]
        keys = summaries @ p["Wk"]
        vals = summaries @ p["Wv"]
        scores = keys @ q / np.sqrt(self.d_model)
        scores = scores - scores.max()
        attn = np.exp(scores)
        attn /= attn.sum()
        z = attn @ vals

        u = np.concatenate([x, z])
        h = np.tanh(u @ p["W1"] + p["b1"])
        logits = h @ p["W2"] + p["b2"]
        masked = np.where(mask, logits, MASK_FILL)
        shifted = masked - masked.max()
        expd = np.exp(shifted)
        probs = expd / expd.sum()
        logp = shifted - np.log(expd.sum())

        hc = np.tanh(u @ p["Wc1"] + p["bc1"])
        value = float(hc @ p["wc2"] + p["bc2"])

        return ForwardCache(x=x, summaries=summaries, mask=mask, attn=attn, q=q,
                            keys=keys, vals=vals, z=z, u=u, h=h, hc=hc,
                            logits=logits, probs=probs, logp=logp, value=value)

    def backward(self, cache: ForwardCache, action: int, advantage: float,
                 reward: float, entropy_coef: float = 0.0,
                 value_coef: float = 0.5) -> dict[str, np.ndarray]:
        """Gradient (ascent direction) of
        advantage * log pi(action) + entropy_coef * H(pi)
        - 0.5 * value_coef * (V - reward)^2.
        """
        p = self.params
        probs = cache.probs
        mask = cache.mask

        dlogits = advantage * (np.eye(self.n_actions)[action] - probs)
        if entropy_coef:
            safe_logp = np.where(probs > 0, cache.logp, 0.0)
            entropy = -float(probs @ safe_logp)
            dlogits += entropy_coef * (-probs * (safe_logp + entropy))
        dlogits = np.where(mask, dlogits, 0.0)

        grads: dict[str, np.ndarray] = {}
        grads["W2"] = np.outer(cache.h, dlogits)
        grads["b2"] = dlogits
        dh = p["W2"] @ dlogits
        dpre1 = dh * (1.0 - cache.h**2)
        grads["W1"] = np.outer(cache.u, dpre1)
        grads["b1"] = dpre1
        du = p["W1"] @ dpre1

        dv = value_coef * (reward - cache.value)
        grads["wc2"] = dv * cache.hc
        grads["bc2"] = np.asarray(dv)
        dhc = dv * p["wc2"]
        dprec = dhc * (1.0 - cache.hc**2)
        grads["Wc1"] = np.outer(cache.u, dprec)
        grads["bc1"] = dprec
        du = du + p["Wc1"] @ dprec

        dz = du[self.d_sat:]
        dvals = np.outer(cache.attn, dz)
        grads["Wv"] = cache.summaries.T @ dvals
        dattn = cache.vals @ dz
        dscores = cache.attn * (dattn - float(cache.attn @ dattn))
        dscores /= np.sqrt(self.d_model)
        dq = cache.keys.T @ dscores
        grads["Wq"] = np.outer(cache.x, dq)
        dkeys = np.outer(dscores, cache.q)
        grads["Wk"] = cache.summaries.T @ dkeys
        return grads

    def objective(self, cache: ForwardCache, action: int, advantage: float,
                  reward: float, entropy_coef: float = 0.0,
                  value_coef: float = 0.5) -> float:
        """Scalar whose gradient backward() returns; used by the gradcheck."""
        probs = cache.probs
        safe_logp = np.where(probs > 0, cache.logp, 0.0)
        entropy = -float(probs @ safe_logp)
        return (advantage * float(cache.logp[action]) + entropy_coef * entropy
                - 0.5 * value_coef * (cache.value - reward) ** 2)

    # --- action selection ---------------------------------------------------

    def sample(self, cache: ForwardCache, rng: np.random.Generator) -> int:
        return int(rng.choice(self.n_actions, p=cache.probs))

    @staticmethod
    def argmax(cache: ForwardCache) -> int:
        return int(np.argmax(cache.probs))

    # --- flat-vector serialization -------------------------------------------

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in _PARAM_KEYS])

    def from_vector(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=float)
        off = 0
        for k in _PARAM_KEYS:
            size = self.params[k].size
            self.params[k] = vec[off:off + size].reshape(self.params[k].shape).copy()
            off += size
        if off != vec.size:
            raise ValueError(f"vector length {vec.size} does not match {off} parameters")

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def header(self) -> dict:
        return {
            "format": POLICY_FORMAT,
            "k_max": self.k_max,
            "d_sat": self.d_sat,
            "d_sum": self.d_sum,
            "d_model": self.d_model,
            "hidden": self.hidden,
        }


def save_policy(policy: MaskedPolicy, path: str, extra_header: dict | None = None) -> None:
    """Versioned policy file: one JSON header line, then the parameter vector
    as little-endian float64."""
    header = policy.header()
    if extra_header:
        header.update(extra_header)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(policy.to_vector().astype("<f8").tobytes())


def load_policy(path: str) -> tuple[MaskedPolicy, dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        raw = fh.read()
    if header.get("format") != POLICY_FORMAT:
        raise ValueError(f"unsupported policy format: {header.get('format')!r}")
    policy = MaskedPolicy(k_max=header["k_max"], d_sat=header["d_sat"],
                          d_sum=header["d_sum"], d_model=header["d_model"],
                          hidden=header["hidden"], seed=0)
    vec = np.frombuffer(raw, dtype="<f8")
    policy.from_vector(vec)
    return policy, header


class AdamState:
    """Per-parameter Adam accumulator for the training loop."""

    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Ascent step along grads."""
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] = params[k] + self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)
