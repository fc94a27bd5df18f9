'''
Frequency-domain machinery: 2-D FFT and its inverse, the centering shift,
the orthonormal 2-D DCT, Gaussian frequency masks and the energy-based cutoff.

Conventions, used everywhere in the package:

- the forward FFT is unnormalised and the inverse carries the ``1/(H*W)``
  factor, so that ``sum|x|^2 == sum|F|^2 / (H*W)`` (Parseval);
- after :func:`fftshift` the zero-frequency bin sits at ``(H//2, W//2)``,
  for even and odd sizes alike; masks are built in that centered layout;
- the DCT is the orthonormal type-II, its inverse the orthonormal type-III.

All functions are pure.
'''

from dataclasses import dataclass
import functools
import math

import numpy as np
import scipy.fft

from fampe.engine.exceptions import (ConfigError, DegenerateSpectrumError, LayoutError,
                                     ShapeError, check_finite)

import fampe.utils.app_properties as app
_logger = app.Properties.get_logger(__name__)

LOWPASS = 'lowpass'
HIGHPASS = 'highpass'


@dataclass(frozen=True)
class Spectrum:
    ''' Complex spectrum of one spatial channel.

    Args:
        data (numpy.ndarray): complex grid, same shape as the channel.
        shifted (bool): True when the zero-frequency bin is at the grid center.
    '''
    data: np.ndarray
    shifted: bool = False

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class CutoffRadius:
    ''' Radius separating low from high frequencies, in frequency bins.'''
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value < 0:
            raise ConfigError(''.join(('Cutoff radius must be a finite value >= 0, got <',
                                       str(self.value), '>.')))

    def check_grid(self, height, width):
        ''' Raises ConfigError if the radius exceeds the largest integer radius of the grid.

        Integer radii round the largest distance up, hence the ceiling.
        '''
        if self.value > math.ceil(max_radius(height, width)):
            raise ConfigError('Cutoff radius {:g} exceeds the maximum radius {:g} of a {}x{} grid.'
                              .format(self.value, max_radius(height, width), height, width))


@dataclass(frozen=True)
class FrequencyMask:
    ''' Real mask in [0,1], in the centered layout.'''
    data: np.ndarray
    kind: str
    cutoff: CutoffRadius


def max_radius(height, width):
    ''' Largest radial distance of a ``height x width`` grid, sqrt((H/2)^2 + (W/2)^2).'''
    return math.sqrt((height / 2.0) ** 2 + (width / 2.0) ** 2)


def _check_channel(channel):
    channel = np.asarray(channel)
    if channel.ndim != 2 or channel.size == 0:
        raise ShapeError(''.join(('Expected a non-empty 2-D grid, got shape ', str(channel.shape), '.')))
    check_finite(channel, 'channel')
    return channel


def fft2d(channel):
    ''' Forward 2-D FFT of a real channel, unnormalised.

    Args:
        channel (numpy.ndarray): real 2-D grid, finite.

    Returns:
        Spectrum: un-shifted spectrum.

    Raises:
        ShapeError: not a non-empty 2-D grid.
        NonFiniteError: the grid contains NaN or infinity.
    '''
    channel = _check_channel(channel)
    return Spectrum(scipy.fft.fft2(channel.astype(np.float64)), shifted=False)


def ifft2d(spec, return_residual=False):
    ''' Inverse 2-D FFT, keeping the real part.

    Multiplicative noise breaks the Hermitian symmetry of a spectrum so the
    inverse transform is complex in general; the imaginary part is dropped and
    its largest magnitude is the residual.

    Args:
        spec (Spectrum): un-shifted spectrum.
        return_residual (bool): also return the imaginary residual.

    Returns:
        numpy.ndarray, or (numpy.ndarray, float) if ``return_residual``.

    Raises:
        LayoutError: the spectrum is still shifted.
    '''
    if spec.shifted:
        raise LayoutError('Inverse FFT needs an un-shifted spectrum; call ifftshift first.')
    check_finite(spec.data, 'spectrum')
    full = scipy.fft.ifft2(spec.data)
    residual = float(np.max(np.abs(full.imag))) if full.size else 0.0
    _logger.debug('Inverse FFT imaginary residual %.3e.', residual)
    if return_residual:
        return full.real.copy(), residual
    return full.real.copy()


def fftshift(spec):
    ''' Moves the zero-frequency bin to ``(H//2, W//2)``.'''
    if spec.shifted:
        raise LayoutError('Spectrum is already shifted.')
    return Spectrum(scipy.fft.fftshift(spec.data), shifted=True)


def ifftshift(spec):
    ''' Moves the zero-frequency bin back to ``(0, 0)``.'''
    if not spec.shifted:
        raise LayoutError('Spectrum is not shifted.')
    return Spectrum(scipy.fft.ifftshift(spec.data), shifted=False)


@functools.lru_cache(maxsize=64)
def radial_distance(height, width):
    ''' Euclidean distance of every bin to the centered DC bin ``(H//2, W//2)``.

    The returned array is shared between callers and read-only.
    '''
    crow, ccol = height // 2, width // 2
    rows, cols = np.ogrid[-crow:height - crow, -ccol:width - ccol]
    distance = np.sqrt(rows * rows + cols * cols).astype(np.float64)
    distance.setflags(write=False)
    return distance


def _cutoff(cutoff):
    if not isinstance(cutoff, CutoffRadius): cutoff = CutoffRadius(float(cutoff))
    return cutoff


@functools.lru_cache(maxsize=256)
def _lowpass_data(height, width, value):
    distance = radial_distance(height, width)
    data = np.exp(-(distance ** 2) / (2.0 * value ** 2))
    data.setflags(write=False)
    return data


def gaussian_lowpass_mask(height, width, cutoff):
    ''' Gaussian low-pass mask ``exp(-D^2 / (2 c^2))`` in the centered layout.

    Args:
        height (int): grid height.
        width (int): grid width.
        cutoff (CutoffRadius or float): the radius c, > 0.

    Returns:
        FrequencyMask: value 1.0 at the DC bin, decreasing with the distance.

    Raises:
        ConfigError: cutoff <= 0 or beyond the grid.
    '''
    cutoff = _cutoff(cutoff)
    if cutoff.value <= 0:
        raise ConfigError(''.join(('Gaussian mask needs a cutoff > 0, got <', str(cutoff.value), '>.')))
    cutoff.check_grid(height, width)
    return FrequencyMask(_lowpass_data(int(height), int(width), float(cutoff.value)), LOWPASS, cutoff)


def highpass_mask(height, width, cutoff):
    ''' Complement of :func:`gaussian_lowpass_mask`: ``1 - lowpass``, elementwise.'''
    low = gaussian_lowpass_mask(height, width, cutoff)
    data = 1.0 - low.data
    data.setflags(write=False)
    return FrequencyMask(data, HIGHPASS, low.cutoff)


def _radius_from_power(power, tau):
    ''' Minimum integer radius enclosing a fraction tau of the non-DC power.

    Bins are grouped by ``ceil(D)``, so bin k holds the distances in (k-1, k];
    the cumulative sum over k is then the energy within radius k.  The total is
    the last cumulative value so that tau = 1 lands exactly on the outermost
    non-empty radius.
    '''
    if not 0.0 < tau <= 1.0:
        raise ConfigError(''.join(('Energy fraction tau must be in (0,1], got <', str(tau), '>.')))
    height, width = power.shape
    distance = radial_distance(height, width)
    rings = np.ceil(distance).astype(np.int64)
    n_rings = int(math.ceil(max_radius(height, width)))
    energy = np.bincount(rings.ravel(), weights=power.ravel(), minlength=n_rings + 1)
    dc_energy = energy[0]
    energy[0] = 0.0
    cumulative = np.cumsum(energy[1:])
    total = cumulative[-1]
    # rounding leaves ~1e-32 relative energy around the DC bin of a constant image
    if total <= 1e-20 * (total + dc_energy):
        raise DegenerateSpectrumError('All the spectral energy is in the DC bin (constant image).')
    radius = int(np.argmax(cumulative >= tau * total)) + 1
    return CutoffRadius(float(radius))


def energy_cutoff(spec, tau):
    ''' Cutoff radius enclosing a fraction ``tau`` of the non-DC spectral energy.

    Returns the minimum integer radius r >= 1 with
    ``sum_{0 < D <= r} |F|^2 >= tau * sum_{D > 0} |F|^2``.

    Args:
        spec (Spectrum): shifted spectrum.
        tau (float): energy fraction in (0,1].

    Returns:
        CutoffRadius

    Raises:
        LayoutError: the spectrum is not shifted.
        DegenerateSpectrumError: no energy outside the DC bin.
    '''
    if not spec.shifted:
        raise LayoutError('Energy cutoff needs a shifted spectrum; call fftshift first.')
    return _radius_from_power(np.abs(spec.data) ** 2, tau)


def image_energy_cutoff(image, tau):
    ''' One cutoff for a C x H x W image, from the mean of the channel power spectra.'''
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2: image = image[np.newaxis]
    power = np.mean([np.abs(fftshift(fft2d(channel)).data) ** 2 for channel in image], axis=0)
    return _radius_from_power(power, tau)


def dct2d(channel):
    ''' Orthonormal type-II 2-D DCT.'''
    channel = _check_channel(channel)
    return scipy.fft.dctn(channel.astype(np.float64), type=2, norm='ortho')


def idct2d(coefficients):
    ''' Orthonormal inverse of :func:`dct2d` (type-III).'''
    coefficients = _check_channel(coefficients)
    return scipy.fft.idctn(coefficients.astype(np.float64), type=2, norm='ortho')
