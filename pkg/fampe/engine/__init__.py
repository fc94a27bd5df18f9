'''
The package representing the *core* of the application.

There are 8 modules:

- :mod:`spectral.py` holds the FFT, DCT, frequency masks and energy cutoff;
- :mod:`model.py` holds the layers, the network and the trainer;
- :mod:`attribution.py` holds the frequency-aware, all-pass and integrated
  gradients engines and the alpha sweep;
- :mod:`evaluation.py` holds the insertion and deletion scores and their
  aggregation;
- :mod:`rng.py` derives the noise streams from indices;
- :mod:`shapes.py` generates the synthetic shapes dataset;
- :mod:`fileformats.py` reads and writes every file of the package;
- :mod:`exceptions.py` defines the errors.
'''
