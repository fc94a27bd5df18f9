'''
Readers and writers of every file the package produces or consumes.

Binary formats are little-endian, without padding:

- weights (FAMW): ``"FAMW" | version u32 = 1 | tensor count u32 | per tensor:
  ndim u32, dims u32 x ndim, payload f64 x prod(dims)``;
- attribution maps (FAMA): ``"FAMA" | version u32 = 1 | C, H, W u32 |
  payload f64 x C*H*W | aggregation byte`` (0 = sum, 1 = abs-sum).

Images are binary PGM (P5) for one channel and PPM (P6) for three, read and
written with Pillow; PNG is accepted on input.  Every output file is written
once, to a temporary file in the target directory that is then renamed.
'''

import csv
import io
import json
import os
import struct
import tempfile

import numpy as np
from PIL import Image

from fampe.engine.attribution import AGGREGATIONS, AttributionMap
from fampe.engine.exceptions import DatasetError, FormatError, ShapeError
from fampe.engine.model import LabeledSample, Network

import fampe.utils.app_properties as app
_logger = app.Properties.get_logger(__name__)

WEIGHTS_MAGIC = b'FAMW'
MAP_MAGIC = b'FAMA'
FORMAT_VERSION = 1
LABELS_FILE = 'labels.csv'
SCORE_HEADER = ('sample_id', 'alpha', 'insertion', 'deletion', 'cutoff')

_U32 = struct.Struct('<I')


def atomic_write(path, data):
    ''' Writes bytes (or text, as UTF-8) to ``path`` through a temporary file and a rename.'''
    if isinstance(data, str): data = data.encode('utf-8')
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    handle, temppath = tempfile.mkstemp(dir=directory, prefix='.tmp-')
    try:
        with os.fdopen(handle, 'wb') as temp_file:
            temp_file.write(data)
        os.replace(temppath, path)
    except BaseException:
        if os.path.exists(temppath): os.remove(temppath)
        raise
    _logger.debug(''.join(('Wrote <', path, '> (', str(len(data)), ' bytes).')))


def _read_bytes(path):
    with open(path, 'rb') as binary_file:
        return binary_file.read()


class _Reader(object):
    ''' Cursor over a byte string that reports truncation in bytes.'''

    def __init__(self, data, path):
        self.data = data
        self.path = path
        self.offset = 0

    def take(self, count):
        end = self.offset + count
        if end > len(self.data):
            raise FormatError('File <{}> is truncated: expected at least {} bytes, found {}.'
                              .format(self.path, end, len(self.data)))
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def u32(self):
        return _U32.unpack(self.take(4))[0]

    def header(self, magic):
        found = self.take(len(magic))
        if found != magic:
            raise FormatError('File <{}> has magic {!r}, expected {!r}.'.format(self.path, found, magic))
        version = self.u32()
        if version != FORMAT_VERSION:
            raise FormatError('File <{}> has format version {}, expected {}.'.format(self.path, version, FORMAT_VERSION))

    def done(self):
        if self.offset != len(self.data):
            raise FormatError('File <{}> has {} trailing bytes.'.format(self.path, len(self.data) - self.offset))


def weights_bytes(tensors):
    ''' FAMW encoding of a list of arrays.'''
    parts = [WEIGHTS_MAGIC, _U32.pack(FORMAT_VERSION), _U32.pack(len(tensors))]
    for tensor in tensors:
        tensor = np.asarray(tensor, dtype='<f8')
        parts.append(_U32.pack(tensor.ndim))
        parts.extend(_U32.pack(dim) for dim in tensor.shape)
        parts.append(tensor.tobytes(order='C'))
    return b''.join(parts)


def save_weights(model, path):
    ''' Writes the weights of a :class:`Network` as a FAMW file.'''
    atomic_write(path, weights_bytes(model.tensors()))


def load_weights(path, spec=None):
    ''' Reads a FAMW file.

    Args:
        path (string): the file.
        spec (ModelSpec): if given, the tensors are checked against it and a
            :class:`Network` is returned.

    Returns:
        list of numpy.ndarray, or Network if ``spec`` is given.

    Raises:
        FormatError: wrong magic or version, truncation, trailing bytes.
        ShapeError: tensors not matching ``spec``.
    '''
    reader = _Reader(_read_bytes(path), path)
    reader.header(WEIGHTS_MAGIC)
    count = reader.u32()
    tensors = []
    for _ in range(count):
        ndim = reader.u32()
        dims = tuple(reader.u32() for _ in range(ndim))
        size = int(np.prod(dims, dtype=np.int64))
        payload = reader.take(8 * size)
        tensors.append(np.frombuffer(payload, dtype='<f8').astype(np.float64).reshape(dims))
    reader.done()
    if spec is None: return tensors
    expected = spec.param_shapes()
    if len(expected) != len(tensors):
        raise ShapeError('File <{}> holds {} tensors, the model needs {}.'.format(path, len(tensors), len(expected)))
    for (index, name, shape), tensor in zip(expected, tensors):
        if tensor.shape != tuple(shape):
            raise ShapeError('File <{}>: layer {} <{}> has shape {}, the model needs {}.'
                             .format(path, index, name, tensor.shape, tuple(shape)))
    return Network.from_tensors(spec, tensors)


def map_bytes(amap):
    ''' FAMA encoding of an :class:`AttributionMap`.'''
    values = np.asarray(amap.values, dtype='<f8')
    if values.ndim != 3:
        raise ShapeError('Attribution map must be C x H x W, got shape {}.'.format(values.shape))
    parts = [MAP_MAGIC, _U32.pack(FORMAT_VERSION)]
    parts.extend(_U32.pack(dim) for dim in values.shape)
    parts.append(values.tobytes(order='C'))
    parts.append(bytes((AGGREGATIONS.index(amap.channel_aggregation),)))
    return b''.join(parts)


def save_attribution_map(amap, path):
    atomic_write(path, map_bytes(amap))


def read_attribution_map(path):
    ''' Reads a FAMA file back into an :class:`AttributionMap`.'''
    reader = _Reader(_read_bytes(path), path)
    reader.header(MAP_MAGIC)
    shape = (reader.u32(), reader.u32(), reader.u32())
    payload = reader.take(8 * int(np.prod(shape, dtype=np.int64)))
    rule = reader.take(1)[0]
    reader.done()
    if rule >= len(AGGREGATIONS):
        raise FormatError('File <{}> has unknown aggregation byte {}.'.format(path, rule))
    values = np.frombuffer(payload, dtype='<f8').astype(np.float64).reshape(shape)
    return AttributionMap(values, AGGREGATIONS[rule])


def map_text(amap):
    ''' Plain-text export, one ``c h w value`` line per entry.'''
    values = np.asarray(amap.values)
    lines = ['{} {} {} {!r}'.format(c, h, w, float(values[c, h, w])) for c, h, w in np.ndindex(*values.shape)]
    return ''.join(line + '\n' for line in lines)


def read_image(path):
    ''' Reads a PGM, PPM or PNG file as a C x H x W float64 array in [0,1].

    Raises:
        FormatError: the file is not a grayscale or RGB image.
    '''
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode in ('1', 'P', 'LA', 'RGBA'):
                img = img.convert('RGB' if mode in ('P', 'RGBA') else 'L')
                mode = img.mode
            if mode not in ('L', 'RGB'):
                raise FormatError('Image <{}> has unsupported mode {}.'.format(path, mode))
            array = np.asarray(img, dtype=np.float64) / 255.0
    except Image.UnidentifiedImageError as err:
        raise FormatError('Image <{}> can not be read: {}'.format(path, err))
    if array.ndim == 2: return array[np.newaxis]
    return np.transpose(array, (2, 0, 1)).copy()


def quantise(image):
    ''' Rounds a [0,1] image to the 8-bit grid, returned as uint8 H x W (x 3).'''
    image = np.asarray(image, dtype=np.float64)
    levels = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    if levels.shape[0] == 1: return levels[0]
    if levels.shape[0] == 3: return np.transpose(levels, (1, 2, 0))
    raise ShapeError('Only 1- or 3-channel images can be written, got shape {}.'.format(image.shape))


def image_bytes(image):
    ''' PGM (1 channel) or PPM (3 channels) encoding of a C x H x W image in [0,1].'''
    levels = quantise(image)
    buffer = io.BytesIO()
    Image.fromarray(levels).save(buffer, format='PPM')
    return buffer.getvalue()


def write_image(path, image):
    atomic_write(path, image_bytes(image))


def heatmap(amap):
    ''' Channel-aggregated map, min-max normalised to 0..255 (uint8 H x W).

    A constant map gives an all-zero heatmap.
    '''
    plane = amap.aggregate()
    low, high = float(plane.min()), float(plane.max())
    if high <= low:
        return np.zeros(plane.shape, dtype=np.uint8)
    return np.round((plane - low) / (high - low) * 255.0).astype(np.uint8)


def write_heatmap(path, amap):
    buffer = io.BytesIO()
    Image.fromarray(heatmap(amap)).save(buffer, format='PPM')
    atomic_write(path, buffer.getvalue())


def write_dataset(directory, samples, extension):
    ''' Writes the images and ``labels.csv`` (``filename,label``).

    Args:
        directory (string): target directory, created if needed.
        samples (list of LabeledSample): the samples.
        extension (string): ``.pgm`` or ``.ppm``.

    Returns:
        list of string: the file names, in sample order.
    '''
    os.makedirs(directory, exist_ok=True)
    names = []
    for index, sample in enumerate(samples):
        name = 'img_{:05d}{}'.format(index, extension)
        write_image(os.path.join(directory, name), sample.image)
        names.append(name)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(('filename', 'label'))
    for name, sample in zip(names, samples):
        writer.writerow((name, sample.label))
    atomic_write(os.path.join(directory, LABELS_FILE), buffer.getvalue())
    return names


def read_dataset(directory):
    ''' Reads a dataset directory written by :func:`write_dataset`.

    Returns:
        list of (string, LabeledSample): file names and samples, in file order.

    Raises:
        DatasetError: missing directory or labels file, malformed rows.
    '''
    labels_path = os.path.join(directory, LABELS_FILE)
    if not os.path.isdir(directory):
        raise DatasetError(''.join(('Dataset directory <', directory, '> does not exist.')))
    if not os.path.isfile(labels_path):
        raise DatasetError(''.join(('Dataset labels file <', labels_path, '> does not exist.')))
    entries = []
    with open(labels_path, 'r', newline='') as csv_file:
        reader = csv.reader(csv_file)
        header = next(reader, None)
        if header != ['filename', 'label']:
            raise DatasetError(''.join(('Labels file <', labels_path, '> has no header <filename,label>.')))
        for line, row in enumerate(reader, start=2):
            if not row: continue
            if len(row) != 2:
                raise DatasetError('Labels file <{}> line {} is malformed.'.format(labels_path, line))
            try: label = int(row[1])
            except ValueError:
                raise DatasetError('Labels file <{}> line {} has a non-integer label.'.format(labels_path, line))
            image = read_image(os.path.join(directory, row[0]))
            entries.append((row[0], LabeledSample(image, label)))
    if not entries:
        raise DatasetError(''.join(('Dataset <', directory, '> is empty.')))
    return entries


def csv_text(header, rows):
    ''' CSV text with ``\\n`` line ends; floats written with ``repr``.'''
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow(['' if value is None else repr(value) if isinstance(value, float) else value
                         for value in row])
    return buffer.getvalue()


def summary_text(method, mean_insertion, mean_deletion, n_samples, alpha_grid, **extra):
    ''' Dataset summary as a JSON object, fields in a fixed order.'''
    summary = {'method': method, 'mean_insertion': mean_insertion, 'mean_deletion': mean_deletion,
               'n_samples': n_samples, 'alpha_grid': list(alpha_grid)}
    summary.update(extra)
    return json.dumps(summary, indent=2) + '\n'
