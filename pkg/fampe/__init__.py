'''
Root package for the **fampe** project.

Sub-packages:

- :mod:`fampe.utils` holds the application properties, the logger
  initialisation and the configuration loader;
- :mod:`fampe.engine` holds the spectral machinery, the classifier runtime,
  the attribution engines and the insertion/deletion evaluation;
- :mod:`fampe.cli` holds the command-line surface.
'''
