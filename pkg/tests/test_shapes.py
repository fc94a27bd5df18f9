'''Tests of the synthetic shapes dataset.'''

import hashlib
import os

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from fampe.engine import fileformats, shapes
from fampe.engine.exceptions import ConfigError
from fampe.engine.spectral import fft2d


def digest(directory):
    sha = hashlib.sha256()
    for name in sorted(os.listdir(directory)):
        sha.update(name.encode('utf-8'))
        with open(os.path.join(directory, name), 'rb') as data:
            sha.update(data.read())
    return sha.hexdigest()


class TestShapes:

    def test_default_dataset_files(self, tmp_path):
        spec = shapes.SyntheticShapesSpec()
        names = fileformats.write_dataset(str(tmp_path), shapes.generate(spec), spec.extension)
        assert len(names) == 200
        assert len(os.listdir(str(tmp_path))) == 201
        labels = [sample.label for _, sample in fileformats.read_dataset(str(tmp_path))]
        assert labels == [k % 4 for k in range(200)]

    def test_bytewise_deterministic(self, tmp_path):
        spec = shapes.SyntheticShapesSpec(size=16, samples_per_class=5)
        for run in ('first', 'second'):
            fileformats.write_dataset(str(tmp_path / run), shapes.generate(spec), spec.extension)
        assert digest(str(tmp_path / 'first')) == digest(str(tmp_path / 'second'))

    def test_seed_changes_the_images(self):
        first = shapes.render(shapes.SyntheticShapesSpec(seed=1), 0, 0)
        second = shapes.render(shapes.SyntheticShapesSpec(seed=2), 0, 0)
        assert not np.array_equal(first, second)

    @pytest.mark.parametrize('label', range(len(shapes.CLASS_NAMES)))
    def test_every_class_has_non_dc_energy(self, label):
        spec = shapes.SyntheticShapesSpec(size=24, class_count=len(shapes.CLASS_NAMES))
        for index in range(5):
            image = shapes.render(spec, label, index)
            assert image.min() >= 0.0 and image.max() <= 1.0
            spectrum = fft2d(image[0]).data.copy()
            spectrum[0, 0] = 0
            assert np.sum(np.abs(spectrum) ** 2) > 1e-6

    def test_images_survive_the_file_roundtrip(self, tmp_path):
        spec = shapes.SyntheticShapesSpec(size=12, channels=3, samples_per_class=2)
        samples = shapes.generate(spec)
        fileformats.write_dataset(str(tmp_path), samples, spec.extension)
        for (name, sample), original in zip(fileformats.read_dataset(str(tmp_path)), samples):
            assert name.endswith('.ppm')
            assert sample.image.shape == (3, 12, 12)
            assert_array_equal(sample.image, original.image)

    @pytest.mark.parametrize('changes', [dict(size=4), dict(class_count=1), dict(class_count=7),
                                         dict(channels=2), dict(samples_per_class=0), dict(noise=-0.1),
                                         dict(seed=-3)])
    def test_invalid_spec(self, changes):
        with pytest.raises(ConfigError):
            shapes.SyntheticShapesSpec(**changes)
