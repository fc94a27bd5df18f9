'''
Installs the handlers of the application logger.

Progress bars of the long commands are drawn by tqdm on stderr; the stderr
handler writes through ``tqdm.write`` so that warnings never break a bar.
'''

import sys
import logging.handlers

from tqdm import tqdm

LOG_FILE_BYTES = 50000
LOG_FILE_BACKUPS = 3

_LEVELNAMES = {
    'CRITICAL': logging.CRITICAL,
    'ERROR': logging.ERROR,
    'WARN': logging.WARNING,
    'WARNING': logging.WARNING,
    'INFO': logging.INFO,
    'DEBUG': logging.DEBUG,
    'NOTSET': logging.NOTSET
    }

_STDERR_FORMAT = '%(name)-24s %(levelname)-8s: %(message)s'
_CONSOLE_FORMAT = '%(asctime)s %(name)-24s %(levelname)-8s: %(message)s'
_FILE_FORMAT = '%(asctime)s %(module)-16s %(levelname)-8s: %(message)s'


class TqdmStreamHandler(logging.StreamHandler):
    ''' Stream handler that prints around the active tqdm progress bars.'''

    def emit(self, record):
        try:
            tqdm.write(self.format(record), file=self.stream)
        except Exception: # pylint: disable=broad-except
            self.handleError(record)


def _handler(handler, level, fmt):
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(fmt))
    return handler


def _clear(logger):
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()


def initlogger(logger, logfiledata):
    '''
    Initialises the application root logger; the module loggers
    ``fampe.<module>`` propagate to it.  Handlers installed by a previous call
    are closed first, so every command run in the same process starts afresh.

    The handlers are:

    - stderr, through tqdm, always at WARN and above;
    - stdout at ``consolelevel``, absent if the level is ``NONE`` or unknown;
    - a rotating file (50kB, 3 backups) at DEBUG if ``log_debug`` is set,
      INFO otherwise; if the file cannot be opened the error goes to stderr
      and the run continues without it.

    Args:
        logger: the logger to initialise.
        logfiledata (tuple): (logfilepath or None, log_debug, consolelevel).
    '''
    logfilepath, log_debug, consolelevel = logfiledata
    _clear(logger)
    logger.propagate = False
    stderr_handler = _handler(TqdmStreamHandler(sys.stderr), logging.WARNING, _STDERR_FORMAT)
    logger.addHandler(stderr_handler)

    levels = [logging.WARNING]
    console = _LEVELNAMES.get(consolelevel)
    if console is not None:
        logger.addHandler(_handler(logging.StreamHandler(sys.stdout), console, _CONSOLE_FORMAT))
        if console != logging.NOTSET: levels.append(console)

    if logfilepath is not None:
        file_level = logging.DEBUG if log_debug else logging.INFO
        try:
            file_handler = logging.handlers.RotatingFileHandler(logfilepath, maxBytes=LOG_FILE_BYTES,
                                                                backupCount=LOG_FILE_BACKUPS)
        except OSError as err:
            logger.setLevel(logging.WARNING)
            logger.error(''.join(('Cannot log to file <', logfilepath, '>: ', str(err), '. No file used.')))
        else:
            logger.addHandler(_handler(file_handler, file_level, _FILE_FORMAT))
            levels.append(file_level)

    logger.setLevel(min(levels))
    logger.debug(''.join(('Logger <', logger.name, '> initialised at level ',
                          logging.getLevelName(logger.level), '.')))
