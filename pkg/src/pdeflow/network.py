"""MLP with sinusoidal input features and hand-rolled differentiation.

The network is a fixed-architecture multilayer perceptron acting on a
per-coordinate sinusoidal featurization of the input point.  Everything the
rest of the package needs is computed analytically here, without an autodiff
framework:

* ``forward``      -- batched evaluation N(x, theta)
* ``spatial_jet``  -- exact derivatives of N with respect to x up to 2nd order
* ``param_jvp``    -- directional derivative J v in parameter space
* ``param_vjp``    -- adjoint product J^T u in parameter space

Parameters live in a single flat float64 vector with layout
(W1, b1, W2, b2, ..., W_last, b_last), each weight matrix row-major.  The
last-layer block is the contiguous tail of the vector, which lets the fitting
code swap it out in place.

All arithmetic is float64.  Operations are pure functions of
(spec, theta, inputs) and safe to call concurrently on shared arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ConfigError

ACTIVATIONS = ("swish", "tanh", "relu")
ENVELOPES = ("none", "dirichlet_cube")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description; the parameter layout is a pure function of it.

    Attributes
    ----------
    input_dim : spatial dimension D of the points fed to the network.
    output_dim : number of output components k.
    hidden_widths : widths of the hidden layers; may be empty, giving a
        linear model on the sinusoidal features.
    embed_L : highest frequency power in the featurization (frequencies
        2^0 .. 2^L times pi/2).
    embed_alpha : decay exponent; the k-th frequency block is scaled by
        2^(-alpha*k) so that spatial derivatives of the features stay bounded.
    embed_scale : overall multiplier applied to every feature.
    activation : one of "swish", "tanh", "relu".
    envelope : "none", or "dirichlet_cube" to multiply the output by
        prod_i (1 - x_i^2) so it vanishes on the boundary of [-1, 1]^D.
    """

    input_dim: int
    output_dim: int = 1
    hidden_widths: tuple[int, ...] = (100, 100, 100)
    embed_L: int = 5
    embed_alpha: float = 1.0
    embed_scale: float = 1.5
    activation: str = "swish"
    envelope: str = "none"

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigError("input_dim and output_dim must be >= 1")
        if any(w < 1 for w in self.hidden_widths):
            raise ConfigError("hidden widths must be >= 1")
        if self.embed_L < 0:
            raise ConfigError("embed_L must be >= 0")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.envelope not in ENVELOPES:
            raise ConfigError(f"unknown envelope {self.envelope!r}")

    @property
    def embedded_dim(self) -> int:
        return 2 * (self.embed_L + 1) * self.input_dim

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.embedded_dim, *self.hidden_widths, self.output_dim)

    @property
    def num_layers(self) -> int:
        return len(self.hidden_widths) + 1

    @property
    def param_count(self) -> int:
        dims = self.layer_dims
        return sum(dims[i + 1] * dims[i] + dims[i + 1] for i in range(len(dims) - 1))

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "hidden_widths": list(self.hidden_widths),
            "embed_L": self.embed_L,
            "embed_alpha": self.embed_alpha,
            "embed_scale": self.embed_scale,
            "activation": self.activation,
            "envelope": self.envelope,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(**{k: (tuple(v) if k == "hidden_widths" else v) for k, v in d.items()})


def param_slices(spec: NetworkSpec) -> list[tuple[slice, slice, tuple[int, int]]]:
    """(weight slice, bias slice, (out, in)) for each layer, in order."""
    out = []
    dims = spec.layer_dims
    pos = 0
    for l in range(len(dims) - 1):
        n_in, n_out = dims[l], dims[l + 1]
        w = slice(pos, pos + n_out * n_in)
        pos += n_out * n_in
        b = slice(pos, pos + n_out)
        pos += n_out
        out.append((w, b, (n_out, n_in)))
    return out


def last_layer_slice(spec: NetworkSpec) -> slice:
    """Contiguous tail slice holding (W_last, b_last)."""
    w, b, _ = param_slices(spec)[-1]
    return slice(w.start, b.stop)


def unpack_params(spec: NetworkSpec, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views (W, b) per layer into the flat vector; no copies."""
    theta = _check_theta(spec, theta)
    return [(theta[w].reshape(shape), theta[b]) for w, b, shape in param_slices(spec)]


def init_params(spec: NetworkSpec, seed: int) -> np.ndarray:
    """Variance-preserving fan-in Gaussian weights, zero biases.

    Deterministic for a fixed seed: layers are drawn in order from a single
    generator stream.
    """
    rng = np.random.default_rng(seed)
    theta = np.zeros(spec.param_count)
    for w, _b, (n_out, n_in) in param_slices(spec):
        theta[w] = rng.normal(0.0, 1.0 / np.sqrt(n_in), size=n_out * n_in)
    return theta


def _check_theta(spec: NetworkSpec, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (spec.param_count,):
        raise ConfigError(
            f"parameter vector has shape {theta.shape}, expected ({spec.param_count},)"
        )
    return theta


def _check_points(spec: NetworkSpec, x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ConfigError(f"points have shape {x.shape}, expected (n, {spec.input_dim})")
    return x, single


# ---------------------------------------------------------------------------
# sinusoidal featurization
# ---------------------------------------------------------------------------

def _embed_jet(X: np.ndarray, spec: NetworkSpec, order: int):
    """Features and their derivatives with respect to the owning coordinate.

    Feature layout is coordinate-major: for each input coordinate, the L+1
    sine features (k = 0..L) followed by the L+1 cosine features.  Every
    feature depends on exactly one coordinate, so first and second derivative
    arrays carry one value per feature.

    Returns (gamma, dgamma, d2gamma), each of shape (n, 2(L+1)D); the
    derivative entries are None beyond the requested order.
    """
    n, D = X.shape
    L = spec.embed_L
    k = np.arange(L + 1)
    omega = (np.pi / 2.0) * 2.0 ** k
    amp = spec.embed_scale * 2.0 ** (-spec.embed_alpha * k)
    arg = X[:, :, None] * omega  # (n, D, L+1)
    s = np.sin(arg)
    c = np.cos(arg)
    gamma = np.concatenate([amp * s, amp * c], axis=2).reshape(n, spec.embedded_dim)
    dgamma = d2gamma = None
    if order >= 1:
        dgamma = np.concatenate([amp * omega * c, -amp * omega * s], axis=2).reshape(
            n, spec.embedded_dim
        )
    if order >= 2:
        w2 = amp * omega ** 2
        d2gamma = np.concatenate([-w2 * s, -w2 * c], axis=2).reshape(n, spec.embedded_dim)
    return gamma, dgamma, d2gamma


def embed(x: np.ndarray, spec: NetworkSpec) -> np.ndarray:
    """Sinusoidal features of a point (or batch of points)."""
    X, single = _check_points(spec, x)
    gamma, _, _ = _embed_jet(X, spec, order=0)
    return gamma[0] if single else gamma


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def _act_jet(z: np.ndarray, kind: str, order: int):
    """Activation value and elementwise derivatives up to ``order``."""
    if kind == "swish":
        s = expit(z)
        a = z * s
        if order == 0:
            return a, None, None
        sp = s * (1.0 - s)
        fp = s + z * sp
        if order == 1:
            return a, fp, None
        fpp = sp * (2.0 + z * (1.0 - 2.0 * s))
        return a, fp, fpp
    if kind == "tanh":
        a = np.tanh(z)
        if order == 0:
            return a, None, None
        fp = 1.0 - a * a
        if order == 1:
            return a, fp, None
        return a, fp, -2.0 * a * fp
    if kind == "relu":
        pos = z > 0.0
        a = np.where(pos, z, 0.0)
        if order == 0:
            return a, None, None
        fp = pos.astype(np.float64)
        if order == 1:
            return a, fp, None
        return a, fp, np.zeros_like(z)
    raise ConfigError(f"unknown activation {kind!r}")


# ---------------------------------------------------------------------------
# boundary envelope
# ---------------------------------------------------------------------------

def _envelope_jet(X: np.ndarray, order: int):
    """prod_i (1 - x_i^2) and its spatial derivatives.

    Products excluding one or two coordinates are accumulated multiplicatively
    instead of dividing by the excluded factors, so points with |x_i| = 1 are
    exact.
    """
    n, D = X.shape
    p = 1.0 - X * X  # (n, D)
    E = p.prod(axis=1)
    if order == 0:
        return E, None, None
    pref = np.ones((n, D + 1))
    np.cumprod(p, axis=1, out=pref[:, 1:])
    suf = np.ones((n, D + 1))
    np.cumprod(p[:, ::-1], axis=1, out=suf[:, 1:])
    suf = suf[:, ::-1]
    excl = pref[:, :D] * suf[:, 1:]  # prod over j != i
    dp = -2.0 * X
    GE = dp * excl
    if order == 1:
        return E, GE, None
    # prod over j not in {i, k}, accumulated one coordinate at a time
    excl2 = np.ones((n, D, D))
    keep = ~np.eye(D, dtype=bool)
    for j in range(D):
        mask = np.outer(keep[j], keep[j])
        excl2 *= np.where(mask, p[:, j, None, None], 1.0)
    HE = dp[:, :, None] * dp[:, None, :] * excl2
    idx = np.arange(D)
    HE[:, idx, idx] = -2.0 * excl
    return E, GE, HE


# ---------------------------------------------------------------------------
# forward evaluation and spatial derivatives
# ---------------------------------------------------------------------------

@dataclass
class SpatialJet:
    """Network value and spatial derivatives at one point or a batch.

    ``value`` has shape (..., k), ``grad`` (..., k, D) and ``hess``
    (..., k, D, D); ``grad``/``hess`` are None beyond the computed order.
    The Hessian is analytically symmetric in its last two indices.
    """

    value: np.ndarray
    grad: np.ndarray | None = None
    hess: np.ndarray | None = None


def forward(spec: NetworkSpec, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate N(x, theta); x may be a single point (D,) or a batch (n, D)."""
    theta = _check_theta(spec, theta)
    X, single = _check_points(spec, x)
    a = _embed_jet(X, spec, order=0)[0]
    layers = unpack_params(spec, theta)
    for W, b in layers[:-1]:
        a = _act_jet(a @ W.T + b, spec.activation, order=0)[0]
    W, b = layers[-1]
    out = a @ W.T + b
    if spec.envelope == "dirichlet_cube":
        out = out * _envelope_jet(X, order=0)[0][:, None]
    return out[0] if single else out


def spatial_jet(spec: NetworkSpec, theta: np.ndarray, x: np.ndarray, order: int) -> SpatialJet:
    """Exact derivatives of N with respect to x, up to ``order`` (0, 1 or 2).

    Derivatives are propagated analytically through the featurization, every
    layer, and the envelope; nothing is approximated by finite differences.
    """
    if order not in (0, 1, 2):
        raise ConfigError("order must be 0, 1 or 2")
    theta = _check_theta(spec, theta)
    X, single = _check_points(spec, x)
    n, D = X.shape
    L1 = 2 * (spec.embed_L + 1)

    gamma, dgamma, d2gamma = _embed_jet(X, spec, order)
    layers = unpack_params(spec, theta)

    a = gamma
    Ga = Ha = None
    for li, (W, b) in enumerate(layers):
        z = a @ W.T + b
        h = W.shape[0]
        if order >= 1:
            if li == 0:
                # features are coordinate-major: view W as (h, D, per-coord)
                Wv = W.reshape(h, D, L1)
                Gz = np.einsum("hdf,ndf->nhd", Wv, dgamma.reshape(n, D, L1))
                if order >= 2:
                    Hz = np.zeros((n, h, D, D))
                    idx = np.arange(D)
                    Hz[:, :, idx, idx] = np.einsum(
                        "hdf,ndf->nhd", Wv, d2gamma.reshape(n, D, L1)
                    )
            else:
                Gz = np.moveaxis(np.tensordot(Ga, W, axes=([1], [1])), -1, 1)
                if order >= 2:
                    Hz = np.moveaxis(np.tensordot(Ha, W, axes=([1], [1])), -1, 1)
        if li < len(layers) - 1:
            a, fp, fpp = _act_jet(z, spec.activation, order)
            if order >= 2:
                Ha = fpp[:, :, None, None] * (Gz[:, :, :, None] * Gz[:, :, None, :]) \
                    + fp[:, :, None, None] * Hz
            if order >= 1:
                Ga = fp[:, :, None] * Gz
        else:
            a = z
            if order >= 1:
                Ga = Gz
            if order >= 2:
                Ha = Hz

    value, grad, hess = a, Ga, Ha
    if hess is not None:
        # mixed partials are analytically symmetric; pin down BLAS ulp noise
        hess = 0.5 * (hess + np.swapaxes(hess, -1, -2))
    if spec.envelope == "dirichlet_cube":
        E, GE, HE = _envelope_jet(X, order)
        if order >= 2:
            cross = grad[:, :, :, None] * GE[:, None, None, :]
            cross = cross + cross.transpose(0, 1, 3, 2)  # symmetric before summing
            hess = (
                hess * E[:, None, None, None]
                + cross
                + value[:, :, None, None] * HE[:, None, :, :]
            )
        if order >= 1:
            grad = grad * E[:, None, None] + value[:, :, None] * GE[:, None, :]
        value = value * E[:, None]

    if single:
        return SpatialJet(
            value[0],
            None if grad is None else grad[0],
            None if hess is None else hess[0],
        )
    return SpatialJet(value, grad, hess)


# ---------------------------------------------------------------------------
# parameter-space differentiation
# ---------------------------------------------------------------------------

@dataclass
class ForwardCache:
    """Saved forward pass over a fixed batch, reused by JVP/VJP calls.

    Building the cache once and running many JVP/VJP products against it is
    what makes repeated mass-matrix products cheap.
    """

    spec: NetworkSpec
    X: np.ndarray
    acts: list  # a_0 = features, a_1..a_m hidden activations
    dacts: list  # activation derivative at each hidden layer
    env: np.ndarray | None
    out: np.ndarray = field(repr=False, default=None)


def forward_cache(spec: NetworkSpec, theta: np.ndarray, X: np.ndarray) -> ForwardCache:
    """Run the forward pass over a batch, saving activations for JVP/VJP."""
    theta = _check_theta(spec, theta)
    X, _ = _check_points(spec, X)
    gamma = _embed_jet(X, spec, order=0)[0]
    layers = unpack_params(spec, theta)
    acts = [gamma]
    dacts = []
    a = gamma
    for W, b in layers[:-1]:
        a, fp, _ = _act_jet(a @ W.T + b, spec.activation, order=1)
        acts.append(a)
        dacts.append(fp)
    W, b = layers[-1]
    out = a @ W.T + b
    env = None
    if spec.envelope == "dirichlet_cube":
        env = _envelope_jet(X, order=0)[0]
        out = out * env[:, None]
    return ForwardCache(spec=spec, X=X, acts=acts, dacts=dacts, env=env, out=out)


def _dense_dot(A2: np.ndarray, B: np.ndarray) -> np.ndarray:
    # (m, n, i) x (o, i) -> (m, n, o) as one GEMM
    m, n, i = A2.shape
    return (A2.reshape(m * n, i) @ B.T).reshape(m, n, -1)


def param_jvp(
    spec: NetworkSpec,
    theta: np.ndarray,
    v: np.ndarray,
    X: np.ndarray,
    cache: ForwardCache | None = None,
) -> np.ndarray:
    """Directional derivative of the batched outputs along v in parameter space.

    v may be a single direction (p,), returning (n, k), or a stack (m, p),
    returning (m, n, k).
    """
    if cache is None:
        cache = forward_cache(spec, theta, X)
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    V = v[None, :] if single else v
    if V.shape[1] != spec.param_count:
        raise ConfigError(f"direction has length {V.shape[-1]}, expected {spec.param_count}")
    m = V.shape[0]
    slices = param_slices(spec)
    layers = unpack_params(spec, theta)

    dA = None
    for li, ((ws, bs, shape), (W, _b)) in enumerate(zip(slices, layers)):
        dW = V[:, ws].reshape(m, *shape)
        db = V[:, bs]
        a_prev = cache.acts[li]
        n = a_prev.shape[0]
        # dZ = a_prev dW^T + dA W^T + db
        dZ = (a_prev @ dW.reshape(m * shape[0], shape[1]).T).reshape(n, m, shape[0])
        dZ = dZ.transpose(1, 0, 2) + db[:, None, :]
        if dA is not None:
            dZ += _dense_dot(dA, W)
        if li < len(layers) - 1:
            dA = cache.dacts[li][None] * dZ
        else:
            dA = dZ
    if cache.env is not None:
        dA = dA * cache.env[None, :, None]
    return dA[0] if single else dA


def param_vjp(
    spec: NetworkSpec,
    theta: np.ndarray,
    u: np.ndarray,
    X: np.ndarray,
    cache: ForwardCache | None = None,
) -> np.ndarray:
    """Adjoint product: accumulate u against the batched output Jacobian.

    u may be a single adjoint batch (n, k), returning (p,), or a stack
    (m, n, k), returning (m, p).
    """
    if cache is None:
        cache = forward_cache(spec, theta, X)
    u = np.asarray(u, dtype=np.float64)
    single = u.ndim == 2
    U = u[None] if single else u
    n = cache.acts[0].shape[0]
    if U.shape[1:] != (n, spec.output_dim):
        raise ConfigError(
            f"adjoint has shape {u.shape}, expected ({n}, {spec.output_dim}) or stacked"
        )
    m = U.shape[0]
    slices = param_slices(spec)
    layers = unpack_params(spec, theta)

    delta = U * cache.env[None, :, None] if cache.env is not None else U.copy()
    g = np.empty((m, spec.param_count))
    for li in range(len(layers) - 1, -1, -1):
        ws, bs, shape = slices[li]
        W, _b = layers[li]
        a_prev = cache.acts[li]
        gW = np.matmul(delta.transpose(0, 2, 1), a_prev)  # (m, out, in)
        g[:, ws] = gW.reshape(m, -1)
        g[:, bs] = delta.sum(axis=1)
        if li > 0:
            delta = _dense_dot(delta, W.T) * cache.dacts[li - 1][None]
    return g[0] if single else g


def penultimate_features(
    spec: NetworkSpec, theta: np.ndarray, X: np.ndarray
) -> tuple[np.ndarray, np.ndarray | None]:
    """Last hidden activations and envelope values over a batch.

    These are the regression features for exact last-layer refitting: the
    network output is env * (W_last a + b_last).
    """
    cache = forward_cache(spec, theta, X)
    return cache.acts[-1], cache.env
