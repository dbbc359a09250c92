"""Pool of 17 activation functions with learnable per-channel parameters.

Each kind applies elementwise, carries zero or more learnable scalars per
channel, and knows its derivative with respect to both the input and the
parameters (parameter gradients are summed over batch and spatial axes).
At non-differentiable points the right-hand derivative is used.

Kinds and their per-channel parameter rows (in storage order):

    relu             --                       max(0, x)
    leaky_relu       --                       x>0: x, else 0.01*x
    elu              --                       x>0: x, else exp(x)-1
    prelu            a                        x>0: x, else a*x
    srelu            t_l, a_l, t_r, a_r       three-piece linear
    aplu             a_1..a_3                 relu + sum a_s*max(0, b_s - x)
    melu4 / melu8    c_0, c_1..c_{k-1}        prelu(c_0) + sum c_j * hat_j(x)
    galu4 / galu8    c_0, c_1..c_{k-1}        prelu(c_0) + sum c_j * wave_j(x)
    pdelu            alpha                    x>0: x, else alpha*(clamp(1+0.1x)^10 - 1)
    swish_fixed      --                       x * sigmoid(x)
    swish_learnable  beta                     x * sigmoid(beta*x)
    soft_root_sign   alpha, beta              x / (x/alpha + exp(-x/beta))
    mish_fixed       --                       x * tanh(softplus(x))
    mish_learnable   beta                     x * tanh(softplus(beta*x))
    soft_learnable   beta                     softplus(beta*x) / beta

Hat/wave centers and widths follow a dyadic schedule over [0, 2*MAX_INPUT];
APLU hinge locations are evenly spaced in [-MAX_INPUT, MAX_INPUT]. Inputs
are normalized to [0, 1] upstream, so MAX_INPUT = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

MAX_INPUT = 1.0
LEAKY_SLOPE = 0.01
PRELU_INIT = 0.25
APLU_HINGE_COUNT = 3
PDELU_SLOPE = 0.1  # 1 - t with t = 0.9
PDELU_POWER = 10.0  # 1 / (1 - t)
SRS_ALPHA_INIT = 2.0
SRS_BETA_INIT = 3.0
_EXP_CLAMP = 60.0  # keeps exp() finite in float32 far outside the data range


class ActivationKind(str, Enum):
    RELU = "relu"
    LEAKY_RELU = "leaky_relu"
    ELU = "elu"
    PRELU = "prelu"
    SRELU = "srelu"
    APLU = "aplu"
    MELU4 = "melu4"
    MELU8 = "melu8"
    GALU4 = "galu4"
    GALU8 = "galu8"
    PDELU = "pdelu"
    SWISH_FIXED = "swish_fixed"
    SWISH_LEARNABLE = "swish_learnable"
    SOFT_ROOT_SIGN = "soft_root_sign"
    MISH_FIXED = "mish_fixed"
    MISH_LEARNABLE = "mish_learnable"
    SOFT_LEARNABLE = "soft_learnable"


POOL_ORDER: tuple[ActivationKind, ...] = (
    ActivationKind.RELU,
    ActivationKind.LEAKY_RELU,
    ActivationKind.ELU,
    ActivationKind.PRELU,
    ActivationKind.SRELU,
    ActivationKind.APLU,
    ActivationKind.MELU4,
    ActivationKind.MELU8,
    ActivationKind.GALU4,
    ActivationKind.GALU8,
    ActivationKind.PDELU,
    ActivationKind.SWISH_FIXED,
    ActivationKind.SWISH_LEARNABLE,
    ActivationKind.SOFT_ROOT_SIGN,
    ActivationKind.MISH_FIXED,
    ActivationKind.MISH_LEARNABLE,
    ActivationKind.SOFT_LEARNABLE,
)


def default_pool() -> list[ActivationKind]:
    """The full pool in documented order; callers may truncate a prefix."""
    return list(POOL_ORDER)


PARAM_COUNTS: dict[ActivationKind, int] = {
    ActivationKind.RELU: 0,
    ActivationKind.LEAKY_RELU: 0,
    ActivationKind.ELU: 0,
    ActivationKind.PRELU: 1,
    ActivationKind.SRELU: 4,
    ActivationKind.APLU: APLU_HINGE_COUNT,
    ActivationKind.MELU4: 4,
    ActivationKind.MELU8: 8,
    ActivationKind.GALU4: 4,
    ActivationKind.GALU8: 8,
    ActivationKind.PDELU: 1,
    ActivationKind.SWISH_FIXED: 0,
    ActivationKind.SWISH_LEARNABLE: 1,
    ActivationKind.SOFT_ROOT_SIGN: 2,
    ActivationKind.MISH_FIXED: 0,
    ActivationKind.MISH_LEARNABLE: 1,
    ActivationKind.SOFT_LEARNABLE: 1,
}

# Dyadic (center, width) schedule over [0, 2*MAX_INPUT]; melu4/galu4 take the
# first 3 rows, melu8/galu8 all 7.
_HAT_SCHEDULE = np.array(
    [
        [1.0, 1.0],
        [0.5, 0.5],
        [1.5, 0.5],
        [0.25, 0.25],
        [0.75, 0.25],
        [1.25, 0.25],
        [1.75, 0.25],
    ]
) * MAX_INPUT

_APLU_HINGES = np.linspace(-MAX_INPUT, MAX_INPUT, APLU_HINGE_COUNT)


@dataclass
class ActivationState:
    """One activation site: a kind plus its learnable per-channel scalars."""

    kind: ActivationKind
    channels: int
    params: np.ndarray  # (param_count, channels); mutated in place by training
    consts: dict = field(default_factory=dict)  # fixed schedule constants


def act_init(kind: ActivationKind, channels: int, dtype=np.float32) -> ActivationState:
    """Freshly initialized state for ``kind`` over ``channels`` channels."""
    if channels < 1:
        raise ValueError(f"channels must be >= 1, got {channels}")
    kind = ActivationKind(kind)
    p = PARAM_COUNTS[kind]
    params = np.zeros((p, channels), dtype=dtype)
    consts: dict = {}
    if kind == ActivationKind.PRELU:
        params[0] = PRELU_INIT
    elif kind == ActivationKind.SRELU:
        params[2] = MAX_INPUT  # t_r
        params[3] = 1.0  # a_r
    elif kind == ActivationKind.APLU:
        consts["hinges"] = _APLU_HINGES.copy()
    elif kind in (
        ActivationKind.MELU4,
        ActivationKind.MELU8,
        ActivationKind.GALU4,
        ActivationKind.GALU8,
    ):
        params[0] = PRELU_INIT
        sched = _HAT_SCHEDULE[: p - 1]
        consts["centers"] = sched[:, 0].copy()
        consts["widths"] = sched[:, 1].copy()
    elif kind == ActivationKind.PDELU:
        params[0] = 1.0
    elif kind in (ActivationKind.SWISH_LEARNABLE, ActivationKind.MISH_LEARNABLE,
                  ActivationKind.SOFT_LEARNABLE):
        params[0] = 1.0
    elif kind == ActivationKind.SOFT_ROOT_SIGN:
        params[0] = SRS_ALPHA_INIT
        params[1] = SRS_BETA_INIT
    return ActivationState(kind=kind, channels=channels, params=params, consts=consts)


def _bc(state: ActivationState, row: int) -> np.ndarray:
    """Parameter row broadcast to (1, C, 1, 1)."""
    return state.params[row].reshape(1, state.channels, 1, 1)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(np.zeros((), dtype=z.dtype), z)


def _sum_cnhw(a: np.ndarray) -> np.ndarray:
    """Reduce (n, c, h, w) to per-channel totals (c,)."""
    return a.sum(axis=(0, 2, 3))


# --- piecewise building blocks (right-derivative slopes) ---


def _hat(x, center, width):
    return np.maximum(width - np.abs(x - center), 0.0)


def _hat_slope(x, center, width):
    up = (x >= center - width) & (x < center)
    down = (x >= center) & (x < center + width)
    return up.astype(x.dtype) - down.astype(x.dtype)


def _wave(x, center, width):
    # triangular hat followed by an inverted hat two widths to the right
    return _hat(x, center, width) + np.minimum(np.abs(x - center - 2 * width) - width, 0.0)


def _wave_slope(x, center, width):
    c2 = center + 2 * width
    down = (x >= center + width) & (x < c2)
    up = (x >= c2) & (x < center + 3 * width)
    return _hat_slope(x, center, width) - down.astype(x.dtype) + up.astype(x.dtype)


def _prelu_fwd(x, a):
    return np.where(x >= 0, x, a * x)


def _prelu_dx(x, a):
    return np.where(x >= 0, np.ones_like(x), np.broadcast_to(a, x.shape).astype(x.dtype))


# --- per-kind forward / backward ---


def _fwd_relu(x, st):
    return np.maximum(x, 0.0)


def _bwd_relu(x, st, up):
    return up * (x >= 0), None


def _fwd_leaky(x, st):
    return np.where(x >= 0, x, LEAKY_SLOPE * x)


def _bwd_leaky(x, st, up):
    return up * np.where(x >= 0, 1.0, LEAKY_SLOPE).astype(x.dtype), None


def _fwd_elu(x, st):
    out = x.copy()
    neg = x < 0
    out[neg] = np.expm1(x[neg])
    return out


def _bwd_elu(x, st, up):
    d = np.ones_like(x)
    neg = x < 0
    d[neg] = np.exp(x[neg])
    return up * d, None


def _fwd_prelu(x, st):
    return _prelu_fwd(x, _bc(st, 0))


def _bwd_prelu(x, st, up):
    dx = up * _prelu_dx(x, _bc(st, 0))
    da = _sum_cnhw(up * x * (x < 0))
    return dx, da[None, :]


def _fwd_srelu(x, st):
    tl, al, tr, ar = (_bc(st, i) for i in range(4))
    return np.where(x < tl, tl + al * (x - tl), np.where(x >= tr, tr + ar * (x - tr), x))


def _bwd_srelu(x, st, up):
    tl, al, tr, ar = (_bc(st, i) for i in range(4))
    left = x < tl  # takes precedence if thresholds ever cross during training
    right = (x >= tr) & ~left
    slope = np.where(left, al, np.where(right, ar, 1.0)).astype(x.dtype)
    dtl = _sum_cnhw(up * (1.0 - al) * left)
    dal = _sum_cnhw(up * (x - tl) * left)
    dtr = _sum_cnhw(up * (1.0 - ar) * right)
    dar = _sum_cnhw(up * (x - tr) * right)
    return up * slope, np.stack([dtl, dal, dtr, dar])


def _fwd_aplu(x, st):
    hinges = st.consts["hinges"]
    y = np.maximum(x, 0.0)
    for s in range(len(hinges)):
        y = y + _bc(st, s) * np.maximum(hinges[s] - x, 0.0)
    return y


def _bwd_aplu(x, st, up):
    hinges = st.consts["hinges"]
    d = (x >= 0).astype(x.dtype)
    dparams = np.empty((len(hinges), st.channels), dtype=st.params.dtype)
    for s in range(len(hinges)):
        d = d - _bc(st, s) * (x < hinges[s])
        dparams[s] = _sum_cnhw(up * np.maximum(hinges[s] - x, 0.0))
    return up * d, dparams


def _bump_fns(kind):
    if kind in (ActivationKind.MELU4, ActivationKind.MELU8):
        return _hat, _hat_slope
    return _wave, _wave_slope


def _fwd_melu_galu(x, st):
    bump, _ = _bump_fns(st.kind)
    centers, widths = st.consts["centers"], st.consts["widths"]
    y = _prelu_fwd(x, _bc(st, 0))
    for j in range(len(centers)):
        y = y + _bc(st, j + 1) * bump(x, centers[j], widths[j])
    return y


def _bwd_melu_galu(x, st, up):
    bump, bump_slope = _bump_fns(st.kind)
    centers, widths = st.consts["centers"], st.consts["widths"]
    d = _prelu_dx(x, _bc(st, 0))
    dparams = np.empty((len(centers) + 1, st.channels), dtype=st.params.dtype)
    dparams[0] = _sum_cnhw(up * x * (x < 0))
    for j in range(len(centers)):
        d = d + _bc(st, j + 1) * bump_slope(x, centers[j], widths[j])
        dparams[j + 1] = _sum_cnhw(up * bump(x, centers[j], widths[j]))
    return up * d, dparams


def _fwd_pdelu(x, st):
    alpha = np.broadcast_to(_bc(st, 0), x.shape)
    neg = x < 0
    base = np.maximum(1.0 + PDELU_SLOPE * x[neg], 0.0)
    out = x.copy()
    out[neg] = alpha[neg] * (base**PDELU_POWER - 1.0)
    return out


def _bwd_pdelu(x, st, up):
    alpha = np.broadcast_to(_bc(st, 0), x.shape)
    neg = x < 0
    base = np.maximum(1.0 + PDELU_SLOPE * x, 0.0)
    d = np.ones_like(x)
    d[neg] = (alpha * base ** (PDELU_POWER - 1.0))[neg]
    dalpha = _sum_cnhw(up * (base**PDELU_POWER - 1.0) * neg)
    return up * d, dalpha[None, :]


def _swish_parts(x, beta):
    s = _sigmoid(beta * x)
    return s, x * s


def _fwd_swish_fixed(x, st):
    return _swish_parts(x, 1.0)[1]


def _bwd_swish_fixed(x, st, up):
    s, y = _swish_parts(x, 1.0)
    return up * (s + y * (1.0 - s)), None


def _fwd_swish_learn(x, st):
    return _swish_parts(x, _bc(st, 0))[1]


def _bwd_swish_learn(x, st, up):
    beta = _bc(st, 0)
    s, y = _swish_parts(x, beta)
    dx = up * (s + beta * y * (1.0 - s))
    dbeta = _sum_cnhw(up * x * y * (1.0 - s))
    return dx, dbeta[None, :]


def _fwd_srs(x, st):
    alpha, beta = _bc(st, 0), _bc(st, 1)
    e = np.exp(np.minimum(-x / beta, _EXP_CLAMP))
    return x / (x / alpha + e)


def _bwd_srs(x, st, up):
    alpha, beta = _bc(st, 0), _bc(st, 1)
    z = -x / beta
    clamped = z > _EXP_CLAMP
    e = np.exp(np.minimum(z, _EXP_CLAMP))
    live = (~clamped).astype(x.dtype)
    denom = x / alpha + e
    inv2 = 1.0 / (denom * denom)
    d_denom_dx = 1.0 / alpha - (e / beta) * live
    dx = up * (denom - x * d_denom_dx) * inv2
    dalpha = _sum_cnhw(up * (x * x) * inv2 / (alpha * alpha))
    dbeta = _sum_cnhw(up * (-(x * x) * e * live) * inv2 / (beta * beta))
    return dx, np.stack([dalpha, dbeta])


def _mish_parts(x, beta):
    s = _sigmoid(beta * x)
    u = np.tanh(_softplus(beta * x))
    return s, u


def _fwd_mish_fixed(x, st):
    return x * _mish_parts(x, 1.0)[1]


def _bwd_mish_fixed(x, st, up):
    s, u = _mish_parts(x, 1.0)
    return up * (u + x * (1.0 - u * u) * s), None


def _fwd_mish_learn(x, st):
    return x * _mish_parts(x, _bc(st, 0))[1]


def _bwd_mish_learn(x, st, up):
    beta = _bc(st, 0)
    s, u = _mish_parts(x, beta)
    dx = up * (u + beta * x * (1.0 - u * u) * s)
    dbeta = _sum_cnhw(up * x * x * (1.0 - u * u) * s)
    return dx, dbeta[None, :]


def _fwd_soft_learn(x, st):
    beta = _bc(st, 0)
    return _softplus(beta * x) / beta


def _bwd_soft_learn(x, st, up):
    beta = _bc(st, 0)
    s = _sigmoid(beta * x)
    sp = _softplus(beta * x)
    dx = up * s
    dbeta = _sum_cnhw(up * (x * s / beta - sp / (beta * beta)))
    return dx, dbeta[None, :]


_FORWARD = {
    ActivationKind.RELU: _fwd_relu,
    ActivationKind.LEAKY_RELU: _fwd_leaky,
    ActivationKind.ELU: _fwd_elu,
    ActivationKind.PRELU: _fwd_prelu,
    ActivationKind.SRELU: _fwd_srelu,
    ActivationKind.APLU: _fwd_aplu,
    ActivationKind.MELU4: _fwd_melu_galu,
    ActivationKind.MELU8: _fwd_melu_galu,
    ActivationKind.GALU4: _fwd_melu_galu,
    ActivationKind.GALU8: _fwd_melu_galu,
    ActivationKind.PDELU: _fwd_pdelu,
    ActivationKind.SWISH_FIXED: _fwd_swish_fixed,
    ActivationKind.SWISH_LEARNABLE: _fwd_swish_learn,
    ActivationKind.SOFT_ROOT_SIGN: _fwd_srs,
    ActivationKind.MISH_FIXED: _fwd_mish_fixed,
    ActivationKind.MISH_LEARNABLE: _fwd_mish_learn,
    ActivationKind.SOFT_LEARNABLE: _fwd_soft_learn,
}

_BACKWARD = {
    ActivationKind.RELU: _bwd_relu,
    ActivationKind.LEAKY_RELU: _bwd_leaky,
    ActivationKind.ELU: _bwd_elu,
    ActivationKind.PRELU: _bwd_prelu,
    ActivationKind.SRELU: _bwd_srelu,
    ActivationKind.APLU: _bwd_aplu,
    ActivationKind.MELU4: _bwd_melu_galu,
    ActivationKind.MELU8: _bwd_melu_galu,
    ActivationKind.GALU4: _bwd_melu_galu,
    ActivationKind.GALU8: _bwd_melu_galu,
    ActivationKind.PDELU: _bwd_pdelu,
    ActivationKind.SWISH_FIXED: _bwd_swish_fixed,
    ActivationKind.SWISH_LEARNABLE: _bwd_swish_learn,
    ActivationKind.SOFT_ROOT_SIGN: _bwd_srs,
    ActivationKind.MISH_FIXED: _bwd_mish_fixed,
    ActivationKind.MISH_LEARNABLE: _bwd_mish_learn,
    ActivationKind.SOFT_LEARNABLE: _bwd_soft_learn,
}


def _check_channels(x: np.ndarray, state: ActivationState) -> None:
    if x.ndim != 4:
        raise ValueError(f"input must be 4-D (n, c, h, w), got ndim {x.ndim}")
    if x.shape[1] != state.channels:
        raise ValueError(
            f"input channels {x.shape[1]} != state channels {state.channels}"
        )


def act_forward(x: np.ndarray, state: ActivationState) -> np.ndarray:
    """Apply the state's activation elementwise."""
    _check_channels(x, state)
    return _FORWARD[state.kind](x, state)


def act_backward(x: np.ndarray, state: ActivationState, upstream: np.ndarray):
    """Input gradient and per-channel parameter gradients.

    Returns ``(dx, dparams)`` where ``dparams`` has the same (p, channels)
    shape as ``state.params`` (or is empty for parameter-free kinds).
    """
    _check_channels(x, state)
    if upstream.shape != x.shape:
        raise ValueError(f"upstream shape {upstream.shape} != input shape {x.shape}")
    dx, dparams = _BACKWARD[state.kind](x, state, upstream)
    if dparams is None:
        dparams = np.zeros((0, state.channels), dtype=state.params.dtype)
    else:
        dparams = np.asarray(dparams, dtype=state.params.dtype)
    return dx, dparams


def kink_points(state: ActivationState) -> np.ndarray:
    """Locations where the function is non-smooth (channel 0's parameters)."""
    k = state.kind
    p = state.params[:, 0] if state.params.size else np.zeros(0)
    if k in (ActivationKind.RELU, ActivationKind.LEAKY_RELU, ActivationKind.ELU,
             ActivationKind.PRELU):
        pts = [0.0]
    elif k == ActivationKind.SRELU:
        pts = [float(p[0]), float(p[2])]
    elif k == ActivationKind.APLU:
        pts = [0.0] + [float(b) for b in state.consts["hinges"]]
    elif k in (ActivationKind.MELU4, ActivationKind.MELU8):
        pts = [0.0]
        for c, w in zip(state.consts["centers"], state.consts["widths"]):
            pts += [c - w, c, c + w]
    elif k in (ActivationKind.GALU4, ActivationKind.GALU8):
        pts = [0.0]
        for c, w in zip(state.consts["centers"], state.consts["widths"]):
            pts += [c - w, c, c + w, c + 2 * w, c + 3 * w]
    elif k == ActivationKind.PDELU:
        pts = [0.0, -1.0 / PDELU_SLOPE]
    else:
        pts = []
    return np.unique(np.asarray(pts, dtype=np.float64))
