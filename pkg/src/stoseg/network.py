"""Small encoder-decoder segmentation network with a dilated-conv pyramid.

Topology (activation sites A1..A7 for the default three-dilation config):

    stem   3x3 conv, 3 -> stem_width, pad 1              + A1
    down1  3x3 conv, stride 2, stem -> down_width        + A2
    down2  3x3 conv, stride 2, down -> down_width        + A3
    pyramid: one 3x3 conv per dilation d (pad d),
             down -> aspp_width                          + A4..A(3+k)
    concat branches, 1x1 conv -> fuse_width              + A(4+k)
    bilinear upsample x4, 1x1 conv -> num_classes, softmax

Gradients are exchanged as a "GradMap": a plain dict from parameter name
("stem.w", "act0.params", ...) to an array of the parameter's shape.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .activations import ActivationKind, ActivationState, PARAM_COUNTS, act_backward, act_forward, act_init
from .rng import SplitMix64

CHECKPOINT_FORMAT = "stoseg-model"
CHECKPOINT_VERSION = 1

ASSIGNMENT_MODES = ("act", "sto", "relu")


@dataclass(frozen=True)
class NetworkConfig:
    input_size: int = 64
    stem_width: int = 16
    down_width: int = 32
    aspp_width: int = 16
    fuse_width: int = 32
    aspp_dilations: tuple[int, ...] = (1, 2, 4)
    num_classes: int = 2

    def __post_init__(self):
        if self.input_size < 8 or self.input_size % 4 != 0:
            raise ValueError(
                f"input_size must be >= 8 and divisible by 4, got {self.input_size}"
            )
        for w in (self.stem_width, self.down_width, self.aspp_width, self.fuse_width):
            if w < 1:
                raise ValueError("channel widths must be >= 1")
        if not self.aspp_dilations or any(d < 1 for d in self.aspp_dilations):
            raise ValueError(f"dilations must be positive, got {self.aspp_dilations}")
        if self.num_classes != 2:
            raise ValueError("only binary segmentation (2 classes) is supported")

    @property
    def site_count(self) -> int:
        return 4 + len(self.aspp_dilations)

    def site_channels(self) -> tuple[int, ...]:
        return (
            self.stem_width,
            self.down_width,
            self.down_width,
            *([self.aspp_width] * len(self.aspp_dilations)),
            self.fuse_width,
        )


def _conv_layers(cfg: NetworkConfig) -> list[tuple[str, ops.ConvSpec]]:
    layers = [
        ("stem", ops.ConvSpec(cfg.stem_width, 3, 3, 3, stride=1, padding=1)),
        ("down1", ops.ConvSpec(cfg.down_width, cfg.stem_width, 3, 3, stride=2, padding=1)),
        ("down2", ops.ConvSpec(cfg.down_width, cfg.down_width, 3, 3, stride=2, padding=1)),
    ]
    for i, d in enumerate(cfg.aspp_dilations):
        layers.append(
            (f"aspp{i}", ops.ConvSpec(cfg.aspp_width, cfg.down_width, 3, 3,
                                      stride=1, padding=d, dilation=d))
        )
    cat = cfg.aspp_width * len(cfg.aspp_dilations)
    layers.append(("fuse", ops.ConvSpec(cfg.fuse_width, cat, 1, 1)))
    layers.append(("head", ops.ConvSpec(cfg.num_classes, cfg.fuse_width, 1, 1)))
    return layers


def assign_activations(
    mode: str,
    pool: list[ActivationKind],
    site_count: int,
    member_index: int,
    seed: int,
) -> tuple[ActivationKind, ...]:
    """Per-site activation kinds for one ensemble member.

    ``act``: every site gets pool[member_index]. ``sto``: each site is an
    independent uniform draw from the pool, seeded by ``seed``. ``relu``:
    every site is ReLU regardless of the other arguments.
    """
    if mode not in ASSIGNMENT_MODES:
        raise ValueError(f"unknown assignment mode {mode!r}")
    if mode == "relu":
        return tuple([ActivationKind.RELU] * site_count)
    if mode == "act":
        if not 0 <= member_index < len(pool):
            raise ValueError(
                f"member_index {member_index} out of range for pool of {len(pool)}"
            )
        return tuple([pool[member_index]] * site_count)
    rng = SplitMix64(seed)
    return tuple(pool[rng.below(len(pool))] for _ in range(site_count))


@dataclass
class Model:
    config: NetworkConfig
    assignment: tuple[ActivationKind, ...]
    params: dict[str, np.ndarray]  # "<layer>.w" / "<layer>.b"
    acts: list[ActivationState]
    init_seed: int
    _layers: list[tuple[str, ops.ConvSpec]] = field(repr=False, default=None)

    def __post_init__(self):
        if self._layers is None:
            self._layers = _conv_layers(self.config)

    @property
    def dtype(self):
        return self.params["stem.w"].dtype

    def parameters(self) -> dict[str, np.ndarray]:
        """All trainable arrays by name; values alias the live storage."""
        out = dict(self.params)
        for i, st in enumerate(self.acts):
            if st.params.size:
                out[f"act{i}.params"] = st.params
        return out


def build_model(
    config: NetworkConfig,
    assignment: tuple[ActivationKind, ...],
    init_seed: int,
    dtype=np.float32,
) -> Model:
    """Deterministically construct a model from (config, assignment, seed).

    Conv weights are normal with std sqrt(2 / fan_in) drawn layer by layer
    from a SplitMix64 stream seeded with ``init_seed``; biases start at 0.
    """
    assignment = tuple(ActivationKind(k) for k in assignment)
    if len(assignment) != config.site_count:
        raise ValueError(
            f"assignment length {len(assignment)} != site count {config.site_count}"
        )
    rng = SplitMix64(init_seed)
    params: dict[str, np.ndarray] = {}
    for name, spec in _conv_layers(config):
        fan_in = spec.in_channels * spec.kernel_h * spec.kernel_w
        shape = (spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w)
        w = rng.normal_array(shape) * np.sqrt(2.0 / fan_in)
        params[f"{name}.w"] = w.astype(dtype)
        params[f"{name}.b"] = np.zeros(spec.out_channels, dtype=dtype)
    acts = [
        act_init(kind, ch, dtype=dtype)
        for kind, ch in zip(assignment, config.site_channels())
    ]
    return Model(config=config, assignment=assignment, params=params,
                 acts=acts, init_seed=init_seed)


def forward(model: Model, images: np.ndarray):
    """Batched forward pass: (n, 3, S, S) -> probabilities (n, 2, S, S).

    Returns ``(probs, cache)`` where the cache holds the intermediates the
    backward pass needs.
    """
    cfg = model.config
    if images.ndim != 4 or images.shape[1] != 3:
        raise ValueError(f"expected (n, 3, h, w) input, got {images.shape}")
    if images.shape[2] != cfg.input_size or images.shape[3] != cfg.input_size:
        raise ValueError(
            f"input spatial size {images.shape[2:]} != config input_size {cfg.input_size}"
        )
    specs = dict(model._layers)
    p = model.params
    cache: dict = {"x": images}

    def conv(name, x):
        return ops.conv2d(x, p[f"{name}.w"], p[f"{name}.b"], specs[name])

    z0 = conv("stem", images)
    a0 = act_forward(z0, model.acts[0])
    z1 = conv("down1", a0)
    a1 = act_forward(z1, model.acts[1])
    z2 = conv("down2", a1)
    a2 = act_forward(z2, model.acts[2])
    branches = []
    branch_pre = []
    for i in range(len(cfg.aspp_dilations)):
        zb = conv(f"aspp{i}", a2)
        branch_pre.append(zb)
        branches.append(act_forward(zb, model.acts[3 + i]))
    cat = np.concatenate(branches, axis=1)
    zf = conv("fuse", cat)
    af = act_forward(zf, model.acts[3 + len(cfg.aspp_dilations)])
    up = ops.upsample_bilinear(af, 4)
    logits = conv("head", up)
    probs = ops.softmax_channel(logits)

    cache.update(
        z0=z0, a0=a0, z1=z1, a1=a1, z2=z2, a2=a2,
        branch_pre=branch_pre, cat=cat, zf=zf, af=af, up=up, probs=probs,
    )
    return probs, cache


def backward(model: Model, cache: dict, dprobs: np.ndarray) -> dict[str, np.ndarray]:
    """GradMap for every conv weight/bias and activation parameter array."""
    cfg = model.config
    specs = dict(model._layers)
    p = model.params
    grads: dict[str, np.ndarray] = {}

    def conv_back(name, g, x):
        dx, dw, db = ops.conv2d_backward(g, x, p[f"{name}.w"], specs[name])
        grads[f"{name}.w"] = dw
        grads[f"{name}.b"] = db
        return dx

    def act_back(site, g, z):
        dz, dpar = act_backward(z, model.acts[site], g)
        if dpar.size:
            grads[f"act{site}.params"] = dpar
        return dz

    n_branch = len(cfg.aspp_dilations)
    dlogits = ops.softmax_channel_backward(dprobs, cache["probs"])
    dup = conv_back("head", dlogits, cache["up"])
    af = cache["af"]
    daf = ops.upsample_bilinear_backward(dup, af.shape[2], af.shape[3], 4)
    dzf = act_back(3 + n_branch, daf, cache["zf"])
    dcat = conv_back("fuse", dzf, cache["cat"])

    da2 = np.zeros_like(cache["a2"])
    w = cfg.aspp_width
    for i in range(n_branch):
        dbranch = dcat[:, i * w : (i + 1) * w]
        dzb = act_back(3 + i, dbranch, cache["branch_pre"][i])
        da2 += conv_back(f"aspp{i}", dzb, cache["a2"])

    dz2 = act_back(2, da2, cache["z2"])
    da1 = conv_back("down2", dz2, cache["a1"])
    dz1 = act_back(1, da1, cache["z1"])
    da0 = conv_back("down1", dz1, cache["a0"])
    dz0 = act_back(0, da0, cache["z0"])
    conv_back("stem", dz0, cache["x"])
    return grads


def predict_batch(model: Model, images: np.ndarray) -> np.ndarray:
    probs, _ = forward(model, images.astype(model.dtype, copy=False))
    return probs


def predict(model: Model, image: np.ndarray) -> np.ndarray:
    """Probability map (2, S, S) for a single (3, S, S) image in [0, 1]."""
    if image.ndim != 3:
        raise ValueError(f"expected (3, h, w) image, got shape {image.shape}")
    return predict_batch(model, image[None])[0]


def save_model(path, model: Model) -> None:
    """Write a versioned checkpoint; round-trips bit-exactly."""
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": {
            "input_size": model.config.input_size,
            "stem_width": model.config.stem_width,
            "down_width": model.config.down_width,
            "aspp_width": model.config.aspp_width,
            "fuse_width": model.config.fuse_width,
            "aspp_dilations": list(model.config.aspp_dilations),
            "num_classes": model.config.num_classes,
        },
        "assignment": [k.value for k in model.assignment],
        "init_seed": model.init_seed,
        "dtype": str(np.dtype(model.dtype)),
    }
    arrays = {f"param:{k}": v for k, v in model.params.items()}
    for i, st in enumerate(model.acts):
        arrays[f"act:{i}"] = st.params
    np.savez(path, __meta__=np.array(json.dumps(meta)), **arrays)


def load_model(path) -> Model:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not a model checkpoint")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        cfg_d = meta["config"]
        cfg_d["aspp_dilations"] = tuple(cfg_d["aspp_dilations"])
        config = NetworkConfig(**cfg_d)
        assignment = tuple(ActivationKind(v) for v in meta["assignment"])
        dtype = np.dtype(meta["dtype"])
        params = {k[len("param:"):]: data[k] for k in data.files if k.startswith("param:")}
        acts = []
        for i, (kind, ch) in enumerate(zip(assignment, config.site_channels())):
            st = act_init(kind, ch, dtype=dtype)
            stored = data[f"act:{i}"]
            if stored.shape != (PARAM_COUNTS[kind], ch):
                raise ValueError(f"{path}: activation {i} parameter shape mismatch")
            st.params = stored
            acts.append(st)
    return Model(config=config, assignment=assignment, params=params,
                 acts=acts, init_seed=int(meta["init_seed"]))
