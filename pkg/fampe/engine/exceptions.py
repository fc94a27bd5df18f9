'''
Exceptions definitions for the fampe package.

All are inherited from :class:`AnyError`, which carries a short machine code
used by the command line to print ``error: <code>: <message>``.

Types of Errors:

* ConfigError: a parameter out of its domain, or an unusable configuration.
* ShapeError: arrays whose shapes do not compose (model input, baselines...).
* NonFiniteError: NaN or infinity found in an input or an intermediate result.
* LayoutError: a spectrum shifted twice, or un-shifted when it is not shifted.
* DegenerateSpectrumError: no spectral energy outside the DC bin.
* FormatError: a file that does not follow its binary or text format.
* DatasetError: a dataset that is missing, empty or inconsistent.
'''

import numpy as np

class AnyError(Exception):
    ''' Root of the package errors.'''
    code = 'fampe'

class ConfigError(AnyError):
    ''' Parameter out of its domain.'''
    code = 'config'

class ShapeError(AnyError):
    ''' Shapes that do not match.'''
    code = 'shape'

class NonFiniteError(AnyError):
    ''' NaN or infinity where finite values are required.'''
    code = 'nonfinite'

class LayoutError(AnyError):
    ''' Spectrum layout flag in the wrong state for the operation.'''
    code = 'layout'

class DegenerateSpectrumError(AnyError):
    ''' All the non-DC spectral energy is zero.'''
    code = 'degenerate'

class FormatError(AnyError):
    ''' File content not following its format.'''
    code = 'format'

class DatasetError(AnyError):
    ''' Dataset missing, empty or inconsistent.'''
    code = 'dataset'

def check_finite(array, name='input'):
    ''' Raises :class:`NonFiniteError` naming the first non-finite index, if any.

    Args:
        array (numpy.ndarray): the array to check.
        name (string): what the array is, for the message.
    '''
    bad = np.argwhere(~np.isfinite(array))
    if bad.size:
        index = tuple(int(i) for i in bad[0])
        raise NonFiniteError(''.join(('Non-finite value <', str(array[index]), '> in ', name,
                                      ' at index ', str(index), '.')))
