'''
A small differentiable classifier runtime.

The network works on single samples (no batch axis): an image is a
``C x H x W`` float64 array, the output is a vector of ``class_count``
logits.  Each layer implements a forward pass returning its output and a
cache, and a backward pass turning the gradient of its output into the
gradient of its input and of its parameters.  Caches are returned, never
stored, so a :class:`Network` can be shared between threads.

The loss is the softmax cross-entropy.  Its gradient with respect to the
*input* is the gradient oracle of the attribution engines.

A model is described by a :class:`ModelSpec`, usually loaded from a JSON
file such as ``data/shapes_cnn.json``::

    {"input_shape": [1, 32, 32], "class_count": 4,
     "layers": [{"kind": "conv2d", "in_ch": 1, "out_ch": 6, "k": 5, "stride": 1, "pad": 2},
                {"kind": "relu"}, {"kind": "avgpool2d", "k": 4},
                {"kind": "flatten"}, {"kind": "dense", "in": 384, "out": 4}]}
'''

from dataclasses import dataclass
import json
import math

import numpy as np
import scipy.special
from numpy.lib.stride_tricks import sliding_window_view
from tqdm import tqdm

from fampe.engine import rng
from fampe.engine.exceptions import ConfigError, DatasetError, ShapeError, check_finite

import fampe.utils.app_properties as app
_logger = app.Properties.get_logger(__name__)


class Layer(object):
    ''' Base class of the layers; parameterless by default.'''

    kind = None

    def param_shapes(self):
        ''' Ordered ``{name: shape}`` of the parameters.'''
        return {}

    def output_shape(self, input_shape):
        return tuple(input_shape)

    def fan_in(self):
        return 1

    def forward(self, params, x):
        raise NotImplementedError

    def backward(self, params, cache, grad_out):
        raise NotImplementedError

    def to_dict(self):
        return {'kind': self.kind}

    def _need(self, input_shape, ndim):
        if len(input_shape) != ndim:
            raise ShapeError(''.join(('Layer <', self.kind, '> expects a ', str(ndim), '-D input, got shape ',
                                      str(tuple(input_shape)), '.')))


class Dense(Layer):
    ''' ``y = W x + b`` with W of shape (out, in).'''

    kind = 'dense'

    def __init__(self, n_in, n_out):
        self.n_in = int(n_in)
        self.n_out = int(n_out)

    def param_shapes(self):
        return {'weight': (self.n_out, self.n_in), 'bias': (self.n_out,)}

    def output_shape(self, input_shape):
        self._need(input_shape, 1)
        if input_shape[0] != self.n_in:
            raise ShapeError('Dense layer expects {} inputs, got shape {}.'.format(self.n_in, tuple(input_shape)))
        return (self.n_out,)

    def fan_in(self):
        return self.n_in

    def forward(self, params, x):
        return params['weight'] @ x + params['bias'], x

    def backward(self, params, cache, grad_out):
        x = cache
        return params['weight'].T @ grad_out, {'weight': np.outer(grad_out, x), 'bias': grad_out.copy()}

    def to_dict(self):
        return {'kind': self.kind, 'in': self.n_in, 'out': self.n_out}


class Conv2d(Layer):
    ''' 2-D cross-correlation with zero padding, weight of shape (out_ch, in_ch, k, k).'''

    kind = 'conv2d'

    def __init__(self, in_ch, out_ch, k, stride=1, pad=0):
        self.in_ch = int(in_ch)
        self.out_ch = int(out_ch)
        self.k = int(k)
        self.stride = int(stride)
        self.pad = int(pad)
        if self.k < 1 or self.stride < 1 or self.pad < 0:
            raise ConfigError('Conv2d needs k >= 1, stride >= 1 and pad >= 0.')

    def param_shapes(self):
        return {'weight': (self.out_ch, self.in_ch, self.k, self.k), 'bias': (self.out_ch,)}

    def output_shape(self, input_shape):
        self._need(input_shape, 3)
        channels, height, width = input_shape
        if channels != self.in_ch:
            raise ShapeError('Conv2d expects {} input channels, got shape {}.'.format(self.in_ch, tuple(input_shape)))
        out_h = (height + 2 * self.pad - self.k) // self.stride + 1
        out_w = (width + 2 * self.pad - self.k) // self.stride + 1
        if out_h < 1 or out_w < 1:
            raise ShapeError('Conv2d kernel {} does not fit input shape {}.'.format(self.k, tuple(input_shape)))
        return (self.out_ch, out_h, out_w)

    def fan_in(self):
        return self.in_ch * self.k * self.k

    def _windows(self, x):
        padded = np.pad(x, ((0, 0), (self.pad, self.pad), (self.pad, self.pad)))
        windows = sliding_window_view(padded, (self.k, self.k), axis=(1, 2))
        return padded.shape, windows[:, ::self.stride, ::self.stride]

    def forward(self, params, x):
        padded_shape, windows = self._windows(x)
        out = np.einsum('chwpq,ocpq->ohw', windows, params['weight'])
        out += params['bias'][:, None, None]
        return out, (x.shape, padded_shape, windows)

    def backward(self, params, cache, grad_out):
        x_shape, padded_shape, windows = cache
        weight = params['weight']
        grad_w = np.einsum('ohw,chwpq->ocpq', grad_out, windows)
        grad_b = grad_out.sum(axis=(1, 2))
        out_h, out_w = grad_out.shape[1:]
        span_h = self.stride * (out_h - 1) + 1
        span_w = self.stride * (out_w - 1) + 1
        grad_padded = np.zeros(padded_shape)
        for p in range(self.k):
            for q in range(self.k):
                grad_padded[:, p:p + span_h:self.stride, q:q + span_w:self.stride] += \
                    np.einsum('ohw,oc->chw', grad_out, weight[:, :, p, q])
        height, width = x_shape[1:]
        grad_x = grad_padded[:, self.pad:self.pad + height, self.pad:self.pad + width]
        return grad_x, {'weight': grad_w, 'bias': grad_b}

    def to_dict(self):
        return {'kind': self.kind, 'in_ch': self.in_ch, 'out_ch': self.out_ch, 'k': self.k,
                'stride': self.stride, 'pad': self.pad}


class ReLU(Layer):
    ''' Rectifier; the derivative at 0 is 0.'''

    kind = 'relu'

    def forward(self, params, x):
        return np.maximum(x, 0.0), x

    def backward(self, params, cache, grad_out):
        return grad_out * (cache > 0.0), {}


class Flatten(Layer):
    ''' Row-major flattening to a vector.'''

    kind = 'flatten'

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, params, x):
        return x.reshape(-1), x.shape

    def backward(self, params, cache, grad_out):
        return grad_out.reshape(cache), {}


class AvgPool2d(Layer):
    ''' Non-overlapping k x k average pooling; trailing rows/columns are dropped.'''

    kind = 'avgpool2d'

    def __init__(self, k):
        self.k = int(k)
        if self.k < 1:
            raise ConfigError('AvgPool2d needs k >= 1.')

    def output_shape(self, input_shape):
        self._need(input_shape, 3)
        channels, height, width = input_shape
        if height < self.k or width < self.k:
            raise ShapeError('AvgPool2d window {} does not fit input shape {}.'.format(self.k, tuple(input_shape)))
        return (channels, height // self.k, width // self.k)

    def forward(self, params, x):
        channels, height, width = x.shape
        out_h, out_w = height // self.k, width // self.k
        cropped = x[:, :out_h * self.k, :out_w * self.k]
        return cropped.reshape(channels, out_h, self.k, out_w, self.k).mean(axis=(2, 4)), x.shape

    def backward(self, params, cache, grad_out):
        grad_x = np.zeros(cache)
        out_h, out_w = grad_out.shape[1:]
        spread = np.repeat(np.repeat(grad_out, self.k, axis=1), self.k, axis=2) / (self.k * self.k)
        grad_x[:, :out_h * self.k, :out_w * self.k] = spread
        return grad_x, {}

    def to_dict(self):
        return {'kind': self.kind, 'k': self.k}


_LAYERS = {
    'dense':     lambda d: Dense(d['in'], d['out']),
    'conv2d':    lambda d: Conv2d(d['in_ch'], d['out_ch'], d['k'], d.get('stride', 1), d.get('pad', 0)),
    'relu':      lambda d: ReLU(),
    'flatten':   lambda d: Flatten(),
    'avgpool2d': lambda d: AvgPool2d(d['k']),
    }
'''Layer constructors from their JSON description, keyed by kind.'''


@dataclass
class ModelSpec:
    ''' Ordered layers, input shape and class count of a classifier.

    Args:
        input_shape (tuple): shape of one input sample, e.g. (C, H, W).
        layers (list of Layer): the layers, applied in order.
        class_count (int): length of the output.

    Raises:
        ShapeError: if the layer shapes do not compose, or the output length
            is not ``class_count``.
    '''
    input_shape: tuple
    layers: list
    class_count: int

    def __post_init__(self):
        self.input_shape = tuple(int(n) for n in self.input_shape)
        if not self.input_shape or min(self.input_shape) < 1:
            raise ShapeError(''.join(('Input shape must have positive extents, got ', str(self.input_shape), '.')))
        if self.class_count < 1:
            raise ConfigError('Class count must be >= 1.')
        self.shapes = [self.input_shape]
        for layer in self.layers:
            self.shapes.append(layer.output_shape(self.shapes[-1]))
        if self.shapes[-1] != (self.class_count,):
            raise ShapeError('Model output shape {} does not match class count {}.'
                             .format(self.shapes[-1], self.class_count))

    def param_shapes(self):
        ''' ``[(layer_index, name, shape), ...]`` in storage order.'''
        return [(index, name, shape) for index, layer in enumerate(self.layers)
                for name, shape in layer.param_shapes().items()]

    def to_dict(self):
        return {'input_shape': list(self.input_shape), 'class_count': self.class_count,
                'layers': [layer.to_dict() for layer in self.layers]}

    @classmethod
    def from_dict(cls, jsondict):
        ''' Builds the spec from its JSON description.

        Raises:
            ConfigError: missing objects or unknown layer kinds.
        '''
        for key in ('input_shape', 'class_count', 'layers'):
            if key not in jsondict:
                raise ConfigError(''.join(('Model description has no object <', key, '>.')))
        layers = []
        for index, entry in enumerate(jsondict['layers']):
            try: build = _LAYERS[entry['kind']]
            except KeyError:
                raise ConfigError(''.join(('Layer ', str(index), ' has no valid <kind>: <',
                                           str(entry.get('kind')), '>.')))
            try: layers.append(build(entry))
            except KeyError as err:
                raise ConfigError(''.join(('Layer ', str(index), ' <', entry['kind'], '> misses ', str(err), '.')))
        return cls(tuple(jsondict['input_shape']), layers, int(jsondict['class_count']))

    @classmethod
    def from_file(cls, path):
        ''' Loads the spec from a JSON file.'''
        try:
            with open(path, 'r') as json_file:
                jsondict = json.load(json_file)
        except ValueError as err:
            raise ConfigError(''.join(('Can\'t JSON-parse <', path, '>: ', str(err))))
        return cls.from_dict(jsondict)


def init_params(spec, seed):
    ''' He-normal weights and zero biases, deterministic in ``seed``.

    Returns:
        list of dict: one ``{name: array}`` per layer.
    '''
    generator = rng.stream(seed, 0)
    params = []
    for layer in spec.layers:
        layer_params = {}
        for name, shape in layer.param_shapes().items():
            if name == 'bias':
                layer_params[name] = np.zeros(shape)
            else:
                layer_params[name] = generator.normal(0.0, math.sqrt(2.0 / layer.fan_in()), size=shape)
        params.append(layer_params)
    return params


def loss(logits, y):
    ''' Softmax cross-entropy of the logits for class ``y``.

    ``log_softmax`` subtracts the largest logit before exponentiating.
    '''
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= y < logits.shape[0]:
        raise ConfigError('Label {} is out of range for {} classes.'.format(y, logits.shape[0]))
    return float(max(-scipy.special.log_softmax(logits)[y], 0.0))


class Network(object):
    ''' A :class:`ModelSpec` with its weights.

    Args:
        spec (ModelSpec): the architecture.
        params (list of dict): one ``{name: array}`` per layer; copied.
    '''

    def __init__(self, spec, params):
        self.spec = spec
        if len(params) != len(spec.layers):
            raise ShapeError('Got parameters for {} layers, the model has {}.'.format(len(params), len(spec.layers)))
        self.params = []
        for index, (layer, layer_params) in enumerate(zip(spec.layers, params)):
            expected = layer.param_shapes()
            if set(expected) != set(layer_params):
                raise ShapeError('Layer {} expects parameters {}, got {}.'
                                 .format(index, sorted(expected), sorted(layer_params)))
            copied = {}
            for name, shape in expected.items():
                array = np.array(layer_params[name], dtype=np.float64)
                if array.shape != tuple(shape):
                    raise ShapeError('Layer {} parameter <{}> has shape {}, expected {}.'
                                     .format(index, name, array.shape, tuple(shape)))
                array.setflags(write=False)
                copied[name] = array
            self.params.append(copied)

    @classmethod
    def initialise(cls, spec, seed):
        return cls(spec, init_params(spec, seed))

    @property
    def class_count(self):
        return self.spec.class_count

    def tensors(self):
        ''' Parameter arrays in storage order (weight before bias, layer by layer).'''
        return [self.params[index][name] for index, name, _ in self.spec.param_shapes()]

    @classmethod
    def from_tensors(cls, spec, tensors):
        ''' Inverse of :meth:`tensors`.'''
        slots = spec.param_shapes()
        if len(tensors) != len(slots):
            raise ShapeError('Got {} tensors, the model has {}.'.format(len(tensors), len(slots)))
        params = [{} for _ in spec.layers]
        for (index, name, _), tensor in zip(slots, tensors):
            params[index][name] = tensor
        return cls(spec, params)

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.spec.input_shape:
            raise ShapeError('Input shape {} does not match the model input shape {}.'
                             .format(x.shape, self.spec.input_shape))
        check_finite(x, 'model input')
        return x

    def _forward(self, x):
        caches = []
        for layer, layer_params in zip(self.spec.layers, self.params):
            x, cache = layer.forward(layer_params, x)
            caches.append(cache)
        return x, caches

    def _backward(self, caches, grad_logits):
        grad = grad_logits
        grad_params = [None] * len(self.spec.layers)
        for index in reversed(range(len(self.spec.layers))):
            layer = self.spec.layers[index]
            grad, grad_params[index] = layer.backward(self.params[index], caches[index], grad)
        return grad, grad_params

    def logits(self, x):
        ''' Forward pass.

        Raises:
            ShapeError: the input shape does not match the model input shape.
        '''
        out, _ = self._forward(self._check_input(x))
        return out

    forward = logits

    def probabilities(self, x):
        return scipy.special.softmax(self.logits(x))

    def activations(self, x):
        ''' Input of every layer followed by the logits, for inspection.'''
        values = [self._check_input(x)]
        for layer, layer_params in zip(self.spec.layers, self.params):
            values.append(layer.forward(layer_params, values[-1])[0])
        return values

    def loss(self, x, y):
        return loss(self.logits(x), y)

    def loss_and_gradients(self, x, y):
        ''' Loss, its gradient with respect to the input and to every parameter.'''
        logits, caches = self._forward(self._check_input(x))
        value = loss(logits, y)
        grad_logits = scipy.special.softmax(logits)
        grad_logits[y] -= 1.0
        grad_x, grad_params = self._backward(caches, grad_logits)
        return value, grad_x, grad_params

    def input_gradient(self, x, y):
        ''' Exact gradient of the cross-entropy loss with respect to the input.'''
        return self.loss_and_gradients(x, y)[1]

    def logit_gradient(self, x, y):
        ''' Gradient of the pre-softmax logit of class ``y`` with respect to the input.'''
        logits, caches = self._forward(self._check_input(x))
        if not 0 <= y < logits.shape[0]:
            raise ConfigError('Label {} is out of range for {} classes.'.format(y, logits.shape[0]))
        seed = np.zeros_like(logits)
        seed[y] = 1.0
        return self._backward(caches, seed)[0]

    def predict(self, x):
        return int(np.argmax(self.logits(x)))


def forward(model, x):
    ''' Logits of ``model`` on ``x``.'''
    return model.logits(x)


def input_gradient(model, x, y):
    ''' Gradient of the loss of ``model`` at ``(x, y)`` with respect to ``x``.'''
    return model.input_gradient(x, y)


@dataclass
class LabeledSample:
    ''' An image in [0,1] and its class index.'''
    image: np.ndarray
    label: int

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float64)
        check_finite(self.image, 'sample image')
        if self.image.size and (self.image.min() < 0.0 or self.image.max() > 1.0):
            raise DatasetError('Sample image values must lie in [0,1].')
        self.label = int(self.label)
        if self.label < 0:
            raise DatasetError('Sample label must be >= 0.')


def accuracy(model, dataset):
    ''' Fraction of samples whose arg-max logit is the label.'''
    if not dataset: return 0.0
    hits = sum(1 for sample in dataset if model.predict(sample.image) == sample.label)
    return hits / len(dataset)


def train_sgd(model, dataset, epochs, learning_rate, seed, progress=False):
    ''' Per-sample stochastic gradient descent on the cross-entropy loss.

    The visiting order of each epoch is a seeded permutation, so the trained
    weights are a deterministic function of the arguments.

    Args:
        model (Network): the starting point; left untouched.
        dataset (list of LabeledSample): non-empty, with at least 2 classes.
        epochs (int): number of passes, >= 0.
        learning_rate (float): SGD step.
        seed (int): seed of the visiting order.
        progress (bool): show a progress bar.

    Returns:
        (Network, float): the trained model and its accuracy on ``dataset``.

    Raises:
        DatasetError: empty dataset, labels out of range, or a single class.
    '''
    if not dataset:
        raise DatasetError('Training dataset is empty.')
    labels = {sample.label for sample in dataset}
    if len(labels) < 2:
        raise DatasetError('Training needs at least 2 classes, found {}.'.format(len(labels)))
    if max(labels) >= model.class_count:
        raise DatasetError('Label {} is out of range for {} classes.'.format(max(labels), model.class_count))
    if epochs < 0:
        raise ConfigError('Epochs must be >= 0.')
    params = [{name: array.copy() for name, array in layer.items()} for layer in model.params]
    trained = Network(model.spec, params)
    order_stream = rng.stream(seed, 1)
    for epoch in tqdm(range(epochs), desc='train', disable=not progress):
        total = 0.0
        for index in order_stream.permutation(len(dataset)):
            sample = dataset[index]
            value, _, grads = trained.loss_and_gradients(sample.image, sample.label)
            total += value
            for layer_params, layer_grads in zip(params, grads):
                for name in layer_params:
                    layer_params[name] -= learning_rate * layer_grads[name]
            trained = Network(model.spec, params)
        _logger.info('Epoch %d: mean loss %.6f.', epoch + 1, total / len(dataset))
    acc = accuracy(trained, dataset)
    _logger.info('Training accuracy %.4f after %d epochs.', acc, epochs)
    return trained, acc
