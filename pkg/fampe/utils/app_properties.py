'''
Application-wide properties: the application name, its working directory,
its root logger and the helpers to name child loggers and resolve file paths.

Every module of the package gets its logger with::

    import fampe.utils.app_properties as app
    _logger = app.Properties.get_logger(__name__)

The properties are usable as soon as this module is imported (name ``fampe``,
current directory as path).  The launcher calls :func:`Properties.init` to
anchor relative paths somewhere else.
'''

from collections import namedtuple
import logging
import os.path
import sys

_THIS = sys.modules[__name__]

_APP_NAME = 'fampe'
_DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.realpath(__file__))), 'data')

AppProperties = namedtuple('AppProperties', ('name', 'path', 'root_logger', 'init', 'get_path', 'get_logger'))

def __get_logger(fullmodulename):
    ''' Logger ``fampe.<last part of the module name>``; the launcher shares the root one.'''
    root = _THIS.Properties.name
    modulename = fullmodulename.rpartition('.')[2]
    if fullmodulename in ('__main__', root) or not modulename:
        return logging.getLogger(root)
    return logging.getLogger('.'.join((root, modulename)))

def __get_path(path_given):
    ''' Absolute normalised path; ``~`` is expanded and relative paths hang
    from the application directory.'''
    path = os.path.expanduser(path_given.strip())
    if not os.path.isabs(path):
        path = os.path.join(_THIS.Properties.path, path)
    return os.path.normpath(path)

def __init_properties(full_path=None):
    ''' Re-anchors the application directory.

    Args:
        full_path (string): a file or directory path; relative paths are then
            resolved against its directory. None means the current directory.
    '''
    if full_path is None: path = os.getcwd()
    elif os.path.isdir(full_path): path = os.path.realpath(full_path)
    else: path = os.path.realpath(os.path.dirname(full_path))
    _THIS.Properties = _THIS.Properties._replace(path=path)

def data_path(filename):
    ''' Full path of a file shipped in the package ``data`` directory.'''
    return os.path.join(_DATA_DIR, filename)

Properties = AppProperties(_APP_NAME, os.getcwd(), logging.getLogger(_APP_NAME),
                           __init_properties, __get_path, __get_logger)
