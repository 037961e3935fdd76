"""From-scratch fully connected networks for mean-variance regression.

Two small MLPs carry the fit: a mean net with an identity head and a
precision net whose softplus head keeps the predicted precision positive
(predictive sd = precision**-0.5).  Reverse-mode gradients are written out
by hand; the losses mirror the lattice solver's objective with the
smoothness penalty replaced by weighted L2 on the parameters, and the same
Adam / cyclic-LR / clipping stack drives training.

Training runs in two phases: the first fits only the mean net while the
precision output is held at its initial value, the second trains both nets
jointly.
"""

import csv
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .rng import stream
from .solver import cyclic_lr

__all__ = [
    "Mlp",
    "TrainConfig",
    "TrainResult",
    "mlp_forward",
    "mlp_backward",
    "input_gradient",
    "map_rho_gamma",
    "l2_penalty",
    "loss_rho_gamma",
    "loss_alpha_beta",
    "loss_beta_nll",
    "loss_plain_mle",
    "predict",
    "mle_ensemble_predict",
    "train_two_phase",
    "geometric_complexity",
    "save_checkpoint",
    "load_checkpoint",
    "save_predictions_csv",
]

CHECKPOINT_VERSION = "mvreg-net-1"

LOSS_KINDS = ("rho-gamma", "alpha-beta", "beta-nll", "plain")


@dataclass
class Mlp:
    """Affine -> leaky-ReLU stack with a final affine and optional softplus.

    weights[i] has shape (fan_in, fan_out); an Mlp with a single weight
    matrix is just an affine map under the head.
    """

    weights: list
    biases: list
    slope: float = 0.01
    head: str = "identity"

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need matching, nonempty weight and bias lists")
        if not 0.0 < self.slope < 1.0:
            raise ValueError(f"leaky slope must be in (0, 1), got {self.slope}")
        if self.head not in ("identity", "softplus"):
            raise ValueError(f"unknown head {self.head!r}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i > 0 and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i - 1}->{i} dimension mismatch")

    @classmethod
    def init(cls, layer_sizes, seed: int, index: int = 0,
             head: str = "identity", slope: float = 0.01) -> "Mlp":
        """He-style Normal(0, 2/fan_in) weights, zero biases, seeded."""
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2:
            raise ValueError("layer_sizes needs at least input and output dims")
        rng = stream(seed, "init", index)
        weights = [
            rng.normal(0.0, np.sqrt(2.0 / sizes[i]), size=(sizes[i], sizes[i + 1]))
            for i in range(len(sizes) - 1)
        ]
        biases = [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)]
        return cls(weights, biases, slope=slope, head=head)

    @property
    def layer_sizes(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                   slope=self.slope, head=self.head)

    def params(self) -> list:
        """Flat list view [W0, b0, W1, b1, ...] of the live arrays."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


def _as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x.reshape(x.shape[0], -1) if x.ndim != 2 else x


def mlp_forward(net: Mlp, x):
    """Evaluate the net on a batch; returns (outputs (n,), cache)."""
    X = _as_matrix(x)
    if X.shape[1] != net.weights[0].shape[0]:
        raise ValueError(
            f"input dimension {X.shape[1]} does not match net input "
            f"{net.weights[0].shape[0]}"
        )
    acts = [X]
    zs = []
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = acts[-1] @ w + b
        zs.append(z)
        acts.append(np.where(z > 0.0, z, net.slope * z))
    z_out = acts[-1] @ net.weights[-1] + net.biases[-1]
    zs.append(z_out)
    pre = z_out[:, 0]
    if net.head == "softplus":
        # floor at the smallest normal float so the head is always > 0 even
        # when softplus underflows at very negative preactivations
        out = np.maximum(np.logaddexp(0.0, pre), np.finfo(float).tiny)
    else:
        out = pre
    return out, (X, zs, acts)


def mlp_backward(net: Mlp, cache, upstream):
    """Exact reverse-mode gradients of sum_i upstream_i * f(x_i).

    Returns parameter gradients in the same flat order as Mlp.params().
    """
    X, zs, acts = cache
    up = np.asarray(upstream, dtype=float)
    if up.shape != (X.shape[0],):
        raise ValueError("upstream must have one entry per cached batch row")
    d = up[:, None]
    if net.head == "softplus":
        d = d * expit(zs[-1])
    grads = [None] * (2 * len(net.weights))
    grads[-2] = acts[-1].T @ d
    grads[-1] = d.sum(axis=0)
    g = d @ net.weights[-1].T
    for i in range(len(net.weights) - 2, -1, -1):
        g = g * np.where(zs[i] > 0.0, 1.0, net.slope)
        grads[2 * i] = acts[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        if i > 0:
            g = g @ net.weights[i].T
    return grads


def input_gradient(net: Mlp, x) -> np.ndarray:
    """df/dx per batch row, shape (n, d); exact reverse mode."""
    out, (X, zs, acts) = mlp_forward(net, x)
    d = np.ones((X.shape[0], 1))
    if net.head == "softplus":
        d = d * expit(zs[-1])
    g = d @ net.weights[-1].T
    for i in range(len(net.weights) - 2, -1, -1):
        g = g * np.where(zs[i] > 0.0, 1.0, net.slope)
        g = g @ net.weights[i].T
    return g


def geometric_complexity(net: Mlp, x) -> float:
    """Mean squared Frobenius norm of the input Jacobian over the points;
    the data-sampled analogue of the lattice Dirichlet energy."""
    g = input_gradient(net, x)
    return float(np.mean(np.sum(g * g, axis=1)))


def map_rho_gamma(rho: float, gamma: float):
    """Convert the (rho, gamma) weights to classical penalty coefficients
    alpha = (1-rho) gamma / rho and beta = (1-rho)(1-gamma) / rho."""
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must be in (0, 1), got {rho}")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    scale = (1.0 - rho) / rho
    return scale * gamma, scale * (1.0 - gamma)


def l2_penalty(net: Mlp, penalize_hidden_biases: bool = True):
    """Squared L2 norm of the parameters and its gradient list.

    The final-layer bias is never penalized; hidden biases are penalized by
    default (switchable).
    """
    last = len(net.weights) - 1
    value = 0.0
    grads = []
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        value += float(np.sum(w * w))
        gw = 2.0 * w
        if i != last and penalize_hidden_biases:
            value += float(b @ b)
            gb = 2.0 * b
        else:
            gb = np.zeros_like(b)
        grads.extend((gw, gb))
    return value, grads


def _nll_terms(lam, r):
    # per-point negative log likelihood up to constants: (lam r^2 - log lam)/2
    return 0.5 * (lam * r * r - np.log(lam))


def _check_finite(values):
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise FloatingPointError(f"non-finite loss at batch index {bad[0]}")


def _data_term(mean_net, prec_net, x, y, held_lam=None, point_scale=None):
    """Shared likelihood piece of every loss.

    held_lam freezes the precision at a supplied vector (phase-1 training);
    point_scale multiplies each point's contribution without being
    differentiated (the beta-NLL detached factor).  Returns the scalar value
    and the two parameter-gradient lists.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    mu, mean_cache = mlp_forward(mean_net, x)
    if held_lam is None:
        lam, prec_cache = mlp_forward(prec_net, x)
    else:
        lam = np.asarray(held_lam, dtype=float)
    r = mu - y
    terms = _nll_terms(lam, r)
    w = np.ones(n) if point_scale is None else np.asarray(point_scale, dtype=float)
    _check_finite(w * terms)
    value = float(np.mean(w * terms))
    up_mu = w * lam * r / n
    gmean = mlp_backward(mean_net, mean_cache, up_mu)
    if held_lam is None:
        up_lam = w * 0.5 * (r * r - 1.0 / lam) / n
        gprec = mlp_backward(prec_net, prec_cache, up_lam)
    else:
        gprec = [np.zeros_like(a) for a in prec_net.params()]
    return value, gmean, gprec


def _axpy(glist, coef, plist):
    for g, p in zip(glist, plist):
        g += coef * p


def loss_plain_mle(mean_net, prec_net, x, y, held_lam=None):
    """Average Gaussian NLL, no penalty: the unregularized baseline."""
    return _data_term(mean_net, prec_net, x, y, held_lam=held_lam)


def loss_alpha_beta(mean_net, prec_net, x, y, alpha, beta,
                    held_lam=None, penalize_hidden_biases=True):
    """NLL + alpha ||theta||^2 + beta ||phi||^2 (classical weight decay)."""
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be >= 0")
    value, gmean, gprec = _data_term(mean_net, prec_net, x, y, held_lam=held_lam)
    pm, gm = l2_penalty(mean_net, penalize_hidden_biases)
    value += alpha * pm
    _axpy(gmean, alpha, gm)
    pp, gp = l2_penalty(prec_net, penalize_hidden_biases)
    value += beta * pp
    if held_lam is None:
        _axpy(gprec, beta, gp)
    return value, gmean, gprec


def loss_rho_gamma(mean_net, prec_net, x, y, rho, gamma,
                   held_lam=None, penalize_hidden_biases=True):
    """rho * NLL + (1-rho) [gamma ||theta||^2 + (1-gamma) ||phi||^2].

    rho=1 is exactly the plain MLE loss; for interior rho the gradients are
    rho times those of the (alpha, beta) form under map_rho_gamma.
    """
    if not 0.0 <= rho <= 1.0 or not 0.0 <= gamma <= 1.0:
        raise ValueError("rho and gamma must be in [0, 1]")
    value, gmean, gprec = _data_term(mean_net, prec_net, x, y, held_lam=held_lam)
    value *= rho
    for g in gmean:
        g *= rho
    for g in gprec:
        g *= rho
    rbar = 1.0 - rho
    pm, gm = l2_penalty(mean_net, penalize_hidden_biases)
    value += rbar * gamma * pm
    _axpy(gmean, rbar * gamma, gm)
    pp, gp = l2_penalty(prec_net, penalize_hidden_biases)
    value += rbar * (1.0 - gamma) * pp
    if held_lam is None:
        _axpy(gprec, rbar * (1.0 - gamma), gp)
    return value, gmean, gprec


def loss_beta_nll(mean_net, prec_net, x, y, beta=0.5, held_lam=None):
    """Per-point NLL scaled by the detached predicted variance **beta.

    beta=0 reduces to the plain MLE loss; beta=1 rescales each point's
    mean-gradient to plain-MSE form.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if held_lam is None:
        lam, _ = mlp_forward(prec_net, x)
    else:
        lam = np.asarray(held_lam, dtype=float)
    scale = lam ** (-beta)  # (sigma^2)^beta, treated as a constant
    return _data_term(mean_net, prec_net, x, y, held_lam=held_lam, point_scale=scale)


@dataclass(frozen=True)
class TrainConfig:
    """Two-phase training settings for the network pair.

    loss selects the objective: 'rho-gamma' and 'alpha-beta' are the two
    parameterizations of weighted L2 regularization, 'beta-nll' and 'plain'
    are the unpenalized baselines.  batch_size 0 means full batch.
    """

    loss: str = "rho-gamma"
    rho: float = 0.5
    gamma: float = 0.5
    alpha: float = 0.5
    beta: float = 0.5
    beta_exp: float = 0.5
    epochs: int = 50_000
    phase_split: float = 0.5
    batch_size: int = 0
    min_lr: float = 1e-4
    max_lr: float = 1e-2
    cycle_len: int = 5_000
    clip_threshold: float = 1_000.0
    hidden: tuple = (64, 64, 64)
    slope: float = 0.01
    seed: int = 0
    penalize_hidden_biases: bool = True

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")
        if not 0.0 <= self.phase_split <= 1.0:
            raise ValueError("phase_split must be in [0, 1]")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 0:
            raise ValueError("batch_size must be >= 0 (0 = full batch)")
        if self.loss == "rho-gamma" and not (0.0 <= self.rho <= 1.0 and 0.0 <= self.gamma <= 1.0):
            raise ValueError("rho and gamma must be in [0, 1]")
        if self.loss == "alpha-beta" and (self.alpha < 0 or self.beta < 0):
            raise ValueError("alpha and beta must be >= 0")

    @classmethod
    def paper_preset(cls, **overrides) -> "TrainConfig":
        """Full-scale settings: 3x128 nets, 600k epochs, 50k-epoch cycles."""
        base = dict(hidden=(128, 128, 128), epochs=600_000,
                    phase_split=250_000 / 600_000, cycle_len=50_000)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def desk_preset(cls, **overrides) -> "TrainConfig":
        """Laptop-scale settings: 3x64 nets, 50k epochs, 5k-epoch cycles."""
        base = dict(hidden=(64, 64, 64), epochs=50_000,
                    phase_split=0.5, cycle_len=5_000)
        base.update(overrides)
        return cls(**base)

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=int(seed))


@dataclass
class TrainResult:
    """Trained nets plus the per-epoch record (loss at the epoch start)."""

    mean_net: Mlp
    prec_net: Mlp
    loss: np.ndarray
    lr: np.ndarray
    phase1_epochs: int
    converged: bool
    flag: str | None
    epochs_run: int


def _loss_and_grads(cfg: TrainConfig, mean_net, prec_net, x, y, held_lam=None):
    if cfg.loss == "rho-gamma":
        return loss_rho_gamma(mean_net, prec_net, x, y, cfg.rho, cfg.gamma,
                              held_lam=held_lam,
                              penalize_hidden_biases=cfg.penalize_hidden_biases)
    if cfg.loss == "alpha-beta":
        return loss_alpha_beta(mean_net, prec_net, x, y, cfg.alpha, cfg.beta,
                               held_lam=held_lam,
                               penalize_hidden_biases=cfg.penalize_hidden_biases)
    if cfg.loss == "beta-nll":
        return loss_beta_nll(mean_net, prec_net, x, y, beta=cfg.beta_exp,
                             held_lam=held_lam)
    return loss_plain_mle(mean_net, prec_net, x, y, held_lam=held_lam)


def _adam_update(params, grads, m, v, t, lr, clip_threshold):
    norm = np.sqrt(sum(float(g.ravel() @ g.ravel()) for g in grads))
    if norm > clip_threshold:
        scale = clip_threshold / norm
        grads = [g * scale for g in grads]
    c1 = 1.0 - 0.9**t
    c2 = 1.0 - 0.999**t
    for p, g, mi, vi in zip(params, grads, m, v):
        mi *= 0.9
        mi += 0.1 * g
        vi *= 0.999
        vi += 0.001 * g * g
        p -= lr * (mi / c1) / (np.sqrt(vi / c2) + 1e-8)


def train_two_phase(data_x, data_y, cfg: TrainConfig,
                    mean_net: Mlp | None = None, prec_net: Mlp | None = None) -> TrainResult:
    """Train the (mean, precision) pair.

    Phase 1 (phase_split of the epochs) updates only the mean net, with the
    precision output held at its initial forward value so the loss is
    continuous across the phase boundary; phase 2 trains both nets jointly.
    Fresh nets are initialized from the config seed when not supplied (init
    stream indices 2 and 3; the lattice solver owns 0 and 1).
    """
    X = _as_matrix(data_x)
    y = np.asarray(data_y, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ValueError("x and y row counts differ")
    d = X.shape[1]
    if mean_net is None:
        mean_net = Mlp.init([d, *cfg.hidden, 1], cfg.seed, index=2, slope=cfg.slope)
    else:
        mean_net = mean_net.copy()
    if prec_net is None:
        prec_net = Mlp.init([d, *cfg.hidden, 1], cfg.seed, index=3,
                            head="softplus", slope=cfg.slope)
    else:
        prec_net = prec_net.copy()

    held_lam_full, _ = mlp_forward(prec_net, X)
    phase1 = int(round(cfg.phase_split * cfg.epochs))
    shuffle_rng = stream(cfg.seed, "shuffle")
    n = y.shape[0]

    mean_params = mean_net.params()
    prec_params = prec_net.params()
    m_mean = [np.zeros_like(p) for p in mean_params]
    v_mean = [np.zeros_like(p) for p in mean_params]
    m_prec = [np.zeros_like(p) for p in prec_params]
    v_prec = [np.zeros_like(p) for p in prec_params]

    loss_hist = np.empty(cfg.epochs)
    lr_hist = np.empty(cfg.epochs)
    flag = None
    step = 0
    epoch = 0
    for epoch in range(cfg.epochs):
        lr = cyclic_lr(epoch, cfg.min_lr, cfg.max_lr, cfg.cycle_len)
        in_phase1 = epoch < phase1
        if cfg.batch_size and cfg.batch_size < n:
            order = shuffle_rng.permutation(n)
            batches = [order[i:i + cfg.batch_size] for i in range(0, n, cfg.batch_size)]
        else:
            batches = [slice(None)]
        epoch_loss = 0.0
        try:
            for idx in batches:
                held = held_lam_full[idx] if in_phase1 else None
                value, gmean, gprec = _loss_and_grads(
                    cfg, mean_net, prec_net, X[idx], y[idx], held_lam=held)
                epoch_loss += value
                step += 1
                if in_phase1:
                    _adam_update(mean_params, gmean, m_mean, v_mean, step, lr,
                                 cfg.clip_threshold)
                else:
                    _adam_update(mean_params + prec_params, gmean + gprec,
                                 m_mean + m_prec, v_mean + v_prec, step, lr,
                                 cfg.clip_threshold)
        except FloatingPointError:
            flag = "nonfinite"
            loss_hist[epoch] = np.nan
            lr_hist[epoch] = lr
            break
        loss_hist[epoch] = epoch_loss / len(batches)
        lr_hist[epoch] = lr
        if not np.isfinite(epoch_loss):
            flag = "nonfinite"
            break

    ran = epoch + 1
    return TrainResult(
        mean_net=mean_net,
        prec_net=prec_net,
        loss=loss_hist[:ran].copy(),
        lr=lr_hist[:ran].copy(),
        phase1_epochs=phase1,
        converged=flag is None,
        flag=flag,
        epochs_run=ran,
    )


def predict(mean_net: Mlp, prec_net: Mlp, x):
    """Evaluate the pair: returns (mu_hat, sd_hat) with sd = precision**-0.5."""
    mu, _ = mlp_forward(mean_net, x)
    lam, _ = mlp_forward(prec_net, x)
    return mu, lam**-0.5


def mle_ensemble_predict(members, x):
    """Moment-match a mixture of Gaussian predictors to one Gaussian.

    members are callables x -> (mean, sd).  The result has the exact mixture
    mean and variance: mu* = avg(mu_m), var* = avg(sd_m^2 + mu_m^2) - mu*^2.
    """
    if not members:
        raise ValueError("need at least one ensemble member")
    means, sds = zip(*(m(x) for m in members))
    means = np.asarray(means, dtype=float)
    sds = np.asarray(sds, dtype=float)
    mu = means.mean(axis=0)
    second = (sds * sds + means * means).mean(axis=0)
    var = np.maximum(second - mu * mu, 0.0)
    return mu, np.sqrt(var)


def _net_to_npz_dict(prefix: str, net: Mlp) -> dict:
    out = {
        f"{prefix}_slope": np.asarray(net.slope),
        f"{prefix}_head": np.asarray(net.head),
        f"{prefix}_layers": np.asarray(len(net.weights)),
    }
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        out[f"{prefix}_w{i}"] = w
        out[f"{prefix}_b{i}"] = b
    return out


def _net_from_npz(prefix: str, data) -> Mlp:
    layers = int(data[f"{prefix}_layers"])
    weights = [data[f"{prefix}_w{i}"] for i in range(layers)]
    biases = [data[f"{prefix}_b{i}"] for i in range(layers)]
    return Mlp(weights, biases, slope=float(data[f"{prefix}_slope"]),
               head=str(data[f"{prefix}_head"]))


def save_checkpoint(path, mean_net: Mlp, prec_net: Mlp) -> None:
    """Persist both nets as a flat key-value npz archive with a version tag."""
    payload = {"version": np.asarray(CHECKPOINT_VERSION)}
    payload.update(_net_to_npz_dict("mean", mean_net))
    payload.update(_net_to_npz_dict("prec", prec_net))
    np.savez(path, **payload)


def load_checkpoint(path):
    """Load a (mean_net, prec_net) pair saved by save_checkpoint."""
    with np.load(path, allow_pickle=False) as data:
        version = str(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version!r}")
        return _net_from_npz("mean", data), _net_from_npz("prec", data)


def save_predictions_csv(path, x, mu, sd) -> None:
    """Write predictions with columns x..., mu_hat, sd_hat."""
    X = _as_matrix(x)
    cols = (["x"] if X.shape[1] == 1 else [f"x{j}" for j in range(X.shape[1])])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols + ["mu_hat", "sd_hat"])
        for i in range(X.shape[0]):
            row = [repr(float(v)) for v in X[i]]
            row.extend((repr(float(mu[i])), repr(float(sd[i]))))
            w.writerow(row)
