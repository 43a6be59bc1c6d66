"""A small fully connected classifier trained by hand-written backprop.

The last hidden layer is the *feature layer*. Its post-activation outputs are
what the diversity regularizer sees, and the regularizer's gradient is added
to the upstream gradient at exactly that point during the backward pass.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from . import data as data_mod
from .diversity import j_direct, wld_reg_loss
from .errors import DimensionMismatch, LabelOutOfRange
from .linalg import matmul
from .similarity import pairwise_similarity


class Activation(str, enum.Enum):
    RELU = "relu"
    TANH = "tanh"
    IDENTITY = "identity"

    def __call__(self, z):
        if self is Activation.RELU:
            return np.maximum(z, 0.0)
        if self is Activation.TANH:
            return np.tanh(z)
        return z

    def backward(self, pre, post, upstream):
        """Gradient w.r.t. the pre-activation given ``upstream`` on the output."""
        if self is Activation.RELU:
            return upstream * (pre > 0)
        if self is Activation.TANH:
            return upstream * (1.0 - post * post)
        return upstream


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: Activation = Activation.RELU

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError(f"layer dims must be >= 1, got {self.input_dim}->{self.output_dim}")
        object.__setattr__(self, "activation", Activation(self.activation))


@dataclass
class Layer:
    spec: LayerSpec
    weight: np.ndarray  # (input_dim, output_dim)
    bias: np.ndarray  # (output_dim,)


class Mlp:
    """Chain of dense layers; the output layer produces logits."""

    def __init__(self, layers):
        if len(layers) < 2:
            raise ValueError("need at least one hidden layer and an output layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.spec.output_dim != nxt.spec.input_dim:
                raise DimensionMismatch(
                    f"layer dims do not chain: {prev.spec.output_dim} -> {nxt.spec.input_dim}"
                )
        for layer in layers:
            if layer.weight.shape != (layer.spec.input_dim, layer.spec.output_dim):
                raise DimensionMismatch(f"weight shape {layer.weight.shape} != spec")
            if layer.bias.shape != (layer.spec.output_dim,):
                raise DimensionMismatch(f"bias shape {layer.bias.shape} != spec")
        self.layers = list(layers)

    @classmethod
    def build(cls, dims, activation=Activation.RELU, seed=0):
        """Random init: He-uniform for ReLU layers, Xavier-uniform otherwise.

        ``dims`` lists input, hidden and output widths; the output layer is
        linear. Biases start at zero.
        """
        activation = Activation(activation)
        rng = np.random.default_rng(seed)
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
            act = activation if i < len(dims) - 2 else Activation.IDENTITY
            if act is Activation.RELU:
                limit = np.sqrt(6.0 / fan_in)
            else:
                limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            layers.append(Layer(LayerSpec(fan_in, fan_out, act), w, np.zeros(fan_out)))
        return cls(layers)

    @property
    def feature_layer_index(self):
        return len(self.layers) - 2

    @property
    def input_dim(self):
        return self.layers[0].spec.input_dim

    @property
    def num_classes(self):
        return self.layers[-1].spec.output_dim

    def params(self):
        return [(layer.weight, layer.bias) for layer in self.layers]

    def snapshot(self):
        return [(w.copy(), b.copy()) for w, b in self.params()]

    def restore(self, snap):
        for layer, (w, b) in zip(self.layers, snap):
            layer.weight = w.copy()
            layer.bias = b.copy()

    def copy(self):
        return Mlp([Layer(l.spec, l.weight.copy(), l.bias.copy()) for l in self.layers])


@dataclass
class ForwardTrace:
    inputs: np.ndarray
    pre: list
    post: list
    feature_index: int

    @property
    def logits(self):
        return self.post[-1]

    @property
    def features(self):
        return self.post[self.feature_index]


def forward(model, batch):
    x = np.ascontiguousarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise DimensionMismatch(f"batch shape {x.shape} does not match input dim {model.input_dim}")
    pre, post = [], []
    h = x
    for layer in model.layers:
        z = matmul(h, layer.weight) + layer.bias
        h = layer.spec.activation(z)
        pre.append(z)
        post.append(h)
    return ForwardTrace(x, pre, post, model.feature_layer_index)


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    m, k = logits.shape
    if labels.shape != (m,):
        raise DimensionMismatch(f"labels shape {labels.shape} != ({m},)")
    if m and (labels.min() < 0 or labels.max() >= k):
        raise LabelOutOfRange(f"labels must lie in [0, {k})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(m)
    loss = float(np.mean(log_z - shifted[rows, labels]))
    grad = np.exp(shifted - log_z[:, None])
    grad[rows, labels] -= 1.0
    return loss, grad / m


def backward(model, trace, loss_grad, reg_grad_feature=None):
    """Backpropagate ``loss_grad`` (on the logits) through the network.

    ``reg_grad_feature`` is added to the gradient arriving at the feature
    layer's outputs before it continues downward. Returns ``[(dW, db), ...]``
    in layer order.
    """
    fi = model.feature_layer_index
    if reg_grad_feature is not None and reg_grad_feature.shape != trace.features.shape:
        raise DimensionMismatch(
            f"regularizer gradient {reg_grad_feature.shape} != features {trace.features.shape}"
        )
    if loss_grad.shape != trace.logits.shape:
        raise DimensionMismatch(f"loss gradient {loss_grad.shape} != logits {trace.logits.shape}")
    grads = [None] * len(model.layers)
    upstream = loss_grad
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        if i == fi and reg_grad_feature is not None:
            upstream = upstream + reg_grad_feature
        delta = layer.spec.activation.backward(trace.pre[i], trace.post[i], upstream)
        below = trace.inputs if i == 0 else trace.post[i - 1]
        grads[i] = (matmul(below.T, delta), delta.sum(axis=0))
        if i:
            upstream = matmul(delta, layer.weight.T)
    return grads


@dataclass
class OptimizerState:
    """SGD hyperparameters plus momentum buffers. Weight decay skips biases.

    ``schedule`` holds ``(epoch, multiplier)`` milestones; from each listed
    epoch on, the learning rate is multiplied by that factor (cumulatively).
    """

    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    schedule: list = field(default_factory=list)
    velocity: list = field(default_factory=list)

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if not self.weight_decay >= 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        self.schedule = sorted((int(e), float(f)) for e, f in self.schedule)

    def lr_at(self, epoch):
        lr = self.learning_rate
        for milestone, factor in self.schedule:
            if epoch >= milestone:
                lr *= factor
        return lr


def sgd_step(model, grads, opt, epoch):
    """``v <- mu*v - lr*(g + wd*w); w <- w + v``, in place. Biases get no decay."""
    if not opt.velocity:
        opt.velocity = [(np.zeros_like(w), np.zeros_like(b)) for w, b in model.params()]
    lr = opt.lr_at(epoch)
    mu = opt.momentum
    new_velocity = []
    for layer, (gw, gb), (vw, vb) in zip(model.layers, grads, opt.velocity):
        if gw.shape != layer.weight.shape or gb.shape != layer.bias.shape:
            raise DimensionMismatch("gradient shapes do not match the model")
        vw = mu * vw - lr * (gw + opt.weight_decay * layer.weight)
        vb = mu * vb - lr * gb
        layer.weight = layer.weight + vw
        layer.bias = layer.bias + vb
        new_velocity.append((vw, vb))
    opt.velocity = new_velocity


@dataclass
class BatchRecord:
    task_loss: float
    reg_loss: float
    aug_loss: float
    diversity: float
    penalty: float


@dataclass
class EpochMetrics:
    epoch: int
    task_loss: float
    reg_loss: float
    aug_loss: float
    train_error: float  # percent, measured on the fly over the epoch's batches
    feature_similarity: float  # mean Direct J of the feature layer
    batches: list = field(default_factory=list, repr=False)


def train_epoch(model, dataset, spec, opt, rng_seed, epoch, batch_size=128,
                track_similarity=True):
    """One pass over shuffled mini-batches of the augmented loss.

    Per batch: forward, cross-entropy, regularizer on the feature activations,
    backward with the regularizer gradient injected at the feature layer,
    then an SGD step.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    records = []
    wrong = 0
    sim_sum = 0.0
    for xb, yb in data_mod.batches(dataset, batch_size, rng_seed, epoch):
        trace = forward(model, xb)
        task, dlogits = cross_entropy(trace.logits, yb)
        reg = wld_reg_loss(trace.features, spec)
        grads = backward(model, trace, dlogits, reg.grad_acts)
        sgd_step(model, grads, opt, epoch)

        wrong += int(np.sum(trace.logits.argmax(axis=1) != yb))
        if track_similarity and trace.features.shape[1] >= 2:
            sim_sum += j_direct(pairwise_similarity(trace.features, spec.gamma))[0]
        records.append(BatchRecord(task, reg.loss, task + reg.loss, reg.diversity, reg.penalty))

    n = len(records)
    return EpochMetrics(
        epoch=epoch,
        task_loss=sum(r.task_loss for r in records) / n,
        reg_loss=sum(r.reg_loss for r in records) / n,
        aug_loss=sum(r.aug_loss for r in records) / n,
        train_error=100.0 * wrong / len(dataset),
        feature_similarity=sim_sum / n,
        batches=records,
    )


def predict(model, features):
    return forward(model, features).logits.argmax(axis=1)


def error_rate(model, dataset):
    """Misclassification rate in percent (0 for an empty dataset)."""
    if len(dataset) == 0:
        return 0.0
    return 100.0 * float(np.mean(predict(model, dataset.features) != dataset.labels))
