'''
The command-line surface.

- :mod:`start_fampe.py` parses the arguments, loads the configuration,
  initialises the logger and dispatches to a command;
- :mod:`commands.py` holds one function per command;
- :mod:`configuration.py` contains the default configuration as a string
  and its typed form.
'''
