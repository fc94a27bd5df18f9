'''
Function to facilitate the loading of configuration parameters.
Based on configparser.
'''

import configparser
import os.path

import fampe.utils.app_properties as app
_logger = app.Properties.get_logger(__name__)

_FLAT_SECTION = 'FLAT'

def _read_file(cfg_filepath):
    ''' Reads a configuration file, with or without section headers.

    A file made only of ``key = value`` lines is read as if it had a single
    section named ``FLAT``.
    '''
    with open(cfg_filepath, 'r') as file_handle:
        text = file_handle.read()
    cfg_file = configparser.RawConfigParser()
    try:
        cfg_file.read_string(text, source=cfg_filepath)
    except configparser.MissingSectionHeaderError:
        cfg_file = configparser.RawConfigParser()
        cfg_file.read_string(''.join(('[', _FLAT_SECTION, ']\n', text)), source=cfg_filepath)
    return cfg_file

def loadconfig(cfg_dflt_string, cfg_filepath, preset=None):
    '''
    The configuration is loaded with the help of the python library configparser
    and the following convention.

    The default configuration is represented by the string passed as argument
    ``cfg_dflt_string``. This string is expected to have all the necessary
    sections and options that the application will need, with their default
    values.  All options need to be listed there, even the ones that have no
    default value.

    The function 'loads' this default configuration, applies the ``preset``
    values (typically environment overrides, which rank below the file), then
    checks if the configuration file is available, and if found it grabs only
    the values from the file that are also present in the default
    configuration.  Anything else in the file is ignored (and logged).  A file
    without any section header is accepted: each ``key = value`` line is
    matched with the section of the default configuration that declares
    ``key``.

    Finally, the function updates the option 'location' in the section
    [CONFIG] with the full path of the configuration file used.  It also
    'logs' the error in the 'error' option of the same section, if any OS
    exception occurred while opening or reading the configuration file.

    Args:
        cfg_dflt_string (string): represents the default configuration.
        cfg_filepath (string): the path of the configuration file; None or
            empty means that only the defaults (and presets) are used.
        preset (dict): {section: {option: value}} applied on top of the defaults.

    Returns:
        configparser.RawConfigParser object: object loaded with the parameters.
    '''

    # Load the default configuration
    cfg_dflt = configparser.RawConfigParser(allow_no_value=True)
    cfg_dflt.read_string(cfg_dflt_string) # should not throw any errors

    for section, options in (preset or {}).items():
        for option, value in options.items():
            if value is not None and cfg_dflt.has_option(section, option):
                cfg_dflt.set(section, option, str(value))

    if not cfg_filepath: return cfg_dflt

    try:
        cfg_file = _read_file(cfg_filepath)
    except (OSError, configparser.Error) as err:
        # 'log' the error in the configparser object, if possible
        try: cfg_dflt.set('CONFIG', 'error', ''.join(('Error <', str(err),
                                                      '> with configuration file <', cfg_filepath, '>.')))
        except configparser.NoSectionError: pass
        # return the default configuration as there was a problem reading the file
        return cfg_dflt

    # 'merge' it with the default configuration
    owner = {}
    for section in cfg_dflt.sections():
        for option in cfg_dflt.options(section):
            owner.setdefault(option, section)
    for section in cfg_file.sections():
        for option in cfg_file.options(section):
            if section == _FLAT_SECTION:
                target = owner.get(option)
            elif cfg_dflt.has_option(section, option):
                target = section
            else:
                target = None
            if target is None:
                _logger.info(''.join(('Option <', option, '> in <', cfg_filepath, '> is unknown. Ignored.')))
                continue
            cfg_dflt.set(target, option, cfg_file.get(section, option))

    # Create or overwrite the 'location' option in section [CONFIG] if the section exists.
    try: cfg_dflt.set('CONFIG', 'location', os.path.realpath(cfg_filepath))
    except configparser.NoSectionError: pass

    return cfg_dflt
