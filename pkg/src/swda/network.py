"""Baseline classification network with hand-derived backprop.

Architecture: tanh MLP generator -> linear bottleneck -> constant-norm
feature scaling (each feature row rescaled to norm tau) -> bias-free
prototype classifier whose logits are inner products between the scaled
feature and each class prototype row.

Also provides the momentum-SGD optimizer and the inverse-power
learning-rate decay used by every trainer, plus an optional gradient sign
reversal between the classifier and the rest of the network so a single
loss can be minimized by the classifier while the feature path ascends it.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, InvalidInputError
from .mathutils import Array, as_float_array, softmax


@dataclass
class NetworkConfig:
    input_dim: int
    num_classes: int
    generator_hidden_dims: tuple[int, ...] = (64,)
    bottleneck_dim: int = 32
    tau: float = 20.0

    def __post_init__(self):
        self.generator_hidden_dims = tuple(int(h) for h in self.generator_hidden_dims)
        dims = (self.input_dim, self.num_classes, self.bottleneck_dim, *self.generator_hidden_dims)
        if any(d < 1 for d in dims):
            raise InvalidInputError("all network dimensions must be >= 1")
        if self.tau <= 0.0:
            raise InvalidInputError("tau must be positive")


@dataclass
class Linear:
    weight: Array  # (out, in)
    bias: Array  # (out,)


@dataclass
class ParamTree:
    """Parameter container; also reused for gradients and momentum buffers.

    tau rides along with the parameters so forward() needs no extra
    argument; it is not a learnable leaf and is skipped by flatten/unflatten.
    """

    generator: list[Linear]
    bottleneck: Linear
    classifier: Array  # (num_classes, bottleneck_dim) prototype rows, no bias
    tau: float = 20.0

    def copy(self) -> "ParamTree":
        return copy.deepcopy(self)


NetworkParams = ParamTree
Gradients = ParamTree


def tree_map(fn, *trees: ParamTree) -> ParamTree:
    """Apply ``fn`` leaf-wise across structurally identical trees."""
    gen = [
        Linear(fn(*[t.generator[i].weight for t in trees]), fn(*[t.generator[i].bias for t in trees]))
        for i in range(len(trees[0].generator))
    ]
    bottleneck = Linear(
        fn(*[t.bottleneck.weight for t in trees]), fn(*[t.bottleneck.bias for t in trees])
    )
    classifier = fn(*[t.classifier for t in trees])
    return ParamTree(gen, bottleneck, classifier, trees[0].tau)


def zeros_like_tree(tree: ParamTree) -> ParamTree:
    return tree_map(np.zeros_like, tree)


def add_trees(a: ParamTree, b: ParamTree) -> ParamTree:
    return tree_map(np.add, a, b)


def scale_tree(tree: ParamTree, factor: float) -> ParamTree:
    return tree_map(lambda x: factor * x, tree)


def tree_leaves(tree: ParamTree) -> list[Array]:
    leaves = []
    for layer in tree.generator:
        leaves.extend([layer.weight, layer.bias])
    leaves.extend([tree.bottleneck.weight, tree.bottleneck.bias, tree.classifier])
    return leaves


def flatten_tree(tree: ParamTree) -> Array:
    return np.concatenate([leaf.ravel() for leaf in tree_leaves(tree)])


def unflatten_tree(vec: Array, like: ParamTree) -> ParamTree:
    vec = as_float_array(vec, ndim=1)
    out = zeros_like_tree(like)
    total = sum(leaf.size for leaf in tree_leaves(out))
    if vec.size != total:
        raise InvalidInputError(f"flat vector has {vec.size} entries, tree needs {total}")
    offset = 0
    for leaf in tree_leaves(out):
        n = leaf.size
        leaf[...] = vec[offset : offset + n].reshape(leaf.shape)
        offset += n
    return out


def init_params(config: NetworkConfig, seed: int) -> NetworkParams:
    """Symmetric uniform init with bound sqrt(3)/sqrt(fan_in); biases start at zero."""
    rng = np.random.default_rng(seed)

    def uniform(out_dim: int, in_dim: int) -> Array:
        bound = np.sqrt(3.0) / np.sqrt(in_dim)
        return rng.uniform(-bound, bound, size=(out_dim, in_dim))

    gen = []
    fan_in = config.input_dim
    for hidden in config.generator_hidden_dims:
        gen.append(Linear(uniform(hidden, fan_in), np.zeros(hidden)))
        fan_in = hidden
    bottleneck = Linear(uniform(config.bottleneck_dim, fan_in), np.zeros(config.bottleneck_dim))
    classifier = uniform(config.num_classes, config.bottleneck_dim)
    return ParamTree(gen, bottleneck, classifier, config.tau)


@dataclass
class ForwardResult:
    inputs: Array  # (n, input_dim)
    hidden: list[Array]  # tanh outputs of each generator layer
    raw_features: Array  # (n, d) bottleneck output before norm scaling
    feature_norms: Array  # (n,)
    norm_features: Array  # (n, d), every row has norm tau
    logits: Array  # (n, k)
    probs: Array  # (n, k)


def forward(params: NetworkParams, inputs) -> ForwardResult:
    """Full forward pass, caching every intermediate needed by backward()."""
    x = as_float_array(inputs)
    if x.ndim == 1:
        x = x[None, :]
    in_dim = params.generator[0].weight.shape[1] if params.generator else params.bottleneck.weight.shape[1]
    if x.shape[1] != in_dim:
        raise InvalidInputError(f"inputs have {x.shape[1]} columns, network expects {in_dim}")

    hidden = []
    act = x
    for layer in params.generator:
        act = np.tanh(act @ layer.weight.T + layer.bias)
        hidden.append(act)
    raw = act @ params.bottleneck.weight.T + params.bottleneck.bias
    norms = np.linalg.norm(raw, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateInputError("a bottleneck feature row has zero norm; cannot scale to tau")
    norm_features = raw * (params.tau / norms)[:, None]
    logits = norm_features @ params.classifier.T
    probs = softmax(logits)
    return ForwardResult(x, hidden, raw, norms, norm_features, logits, probs)


def backward(
    params: NetworkParams,
    fwd: ForwardResult,
    loss_grad_wrt_logits,
    reverse_below_classifier: bool = False,
) -> Gradients:
    """Exact chain-rule gradients for every parameter.

    With ``reverse_below_classifier`` set, the gradient flowing from the
    classifier into the bottleneck and generator is multiplied by -1; the
    classifier's own gradient is untouched.
    """
    g_logits = as_float_array(loss_grad_wrt_logits)
    if g_logits.shape != fwd.logits.shape:
        raise InvalidInputError(
            f"loss gradient shape {g_logits.shape} does not match logits {fwd.logits.shape}"
        )
    tau = params.tau

    d_classifier = g_logits.T @ fwd.norm_features
    d_v = g_logits @ params.classifier
    if reverse_below_classifier:
        d_v = -d_v

    # norm-scaling backward: v = tau * u / |u| with u the raw feature row
    raw, norms = fwd.raw_features, fwd.feature_norms
    row_dot = np.sum(d_v * raw, axis=1)
    d_raw = (tau / norms)[:, None] * (d_v - (row_dot / norms**2)[:, None] * raw)

    gen_input = fwd.hidden[-1] if params.generator else fwd.inputs
    d_bottleneck = Linear(d_raw.T @ gen_input, d_raw.sum(axis=0))
    d_act = d_raw @ params.bottleneck.weight

    d_gen: list[Linear] = []
    for i in reversed(range(len(params.generator))):
        d_z = d_act * (1.0 - fwd.hidden[i] ** 2)
        below = fwd.hidden[i - 1] if i > 0 else fwd.inputs
        d_gen.append(Linear(d_z.T @ below, d_z.sum(axis=0)))
        d_act = d_z @ params.generator[i].weight
    d_gen.reverse()
    return ParamTree(d_gen, d_bottleneck, d_classifier, tau)


@dataclass
class OptimizerState:
    buffers: ParamTree
    momentum: float = 0.9
    iteration: int = 0


def init_optimizer_state(params: NetworkParams, momentum: float = 0.9) -> OptimizerState:
    return OptimizerState(zeros_like_tree(params), momentum)


def sgd_step(
    params: NetworkParams,
    grads: Gradients,
    state: OptimizerState,
    lr: float,
    generator_lr: float | None = None,
) -> None:
    """In-place momentum update: buffer <- m*buffer + grad; param <- param - lr*buffer.

    ``generator_lr`` overrides the step size for the generator subtree so the
    feature extractor can train slower than the bottleneck and classifier.
    """
    if lr <= 0.0:
        raise InvalidInputError("learning rate must be positive")
    gen_lr = lr if generator_lr is None else generator_lr
    m = state.momentum

    def update(param: Array, grad: Array, buf: Array, step: float) -> None:
        buf *= m
        buf += grad
        param -= step * buf

    for p_layer, g_layer, b_layer in zip(params.generator, grads.generator, state.buffers.generator):
        update(p_layer.weight, g_layer.weight, b_layer.weight, gen_lr)
        update(p_layer.bias, g_layer.bias, b_layer.bias, gen_lr)
    update(params.bottleneck.weight, grads.bottleneck.weight, state.buffers.bottleneck.weight, lr)
    update(params.bottleneck.bias, grads.bottleneck.bias, state.buffers.bottleneck.bias, lr)
    update(params.classifier, grads.classifier, state.buffers.classifier, lr)
    state.iteration += 1


def lr_schedule(q: float, eta0: float, a: float = 10.0, b: float = 0.75) -> float:
    """Inverse-power decay eta0 / (1 + a*q)^b over training progress q in [0, 1]."""
    if not 0.0 <= q <= 1.0:
        raise InvalidInputError(f"training progress q={q} outside [0, 1]")
    return eta0 / (1.0 + a * q) ** b
