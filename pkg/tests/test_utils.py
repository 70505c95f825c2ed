"""Tests for utils module."""

import csv
import os
from tempfile import TemporaryDirectory

import numpy as np
import pytest

from blap import utils


def test_compute_sha256():
    digest = utils.compute_sha256('')
    assert digest == (
        'e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855')


def test_compute_file_sha256():
    with TemporaryDirectory(prefix='blap_') as tmp_dir:
        fpath = os.path.join(tmp_dir, 'sample.txt')
        with open(fpath, 'w') as f:
            f.write('bourguignon')
        assert utils.compute_file_sha256(fpath) == utils.compute_sha256(
            'bourguignon')


def test_to_csv():
    rows = [{'index': 0, 'eigenvalue': 0.1, 'oracle_value': None},
            {'index': 1, 'eigenvalue': 2.0, 'oracle_value': 2.0}]
    with TemporaryDirectory(prefix='blap_') as tmp_dir:
        fpath = utils.to_csv(rows, os.path.join(tmp_dir, 'spectrum.csv'))
        with open(fpath) as f:
            records = list(csv.DictReader(f))
    assert records[0] == {'index': '0', 'eigenvalue': '0.1',
                          'oracle_value': ''}
    assert float(records[1]['eigenvalue']) == 2.0


def test_matrix_file():
    layout_hash = utils.compute_sha256('sym2:2:64')
    rows, cols = np.array([0, 3, 5]), np.array([1, 3, 0])
    values = np.array([1.5, -2.0, 1e-300])
    with TemporaryDirectory(prefix='blap_') as tmp_dir:
        fpath = os.path.join(tmp_dir, 'op.blap1')
        utils.write_matrix(fpath, layout_hash, (6, 4), rows, cols, values)
        assert os.path.getsize(fpath) == 5 + 56 + 3 * 24
        digest, shape, r, c, v = utils.read_matrix(fpath)
    assert digest == layout_hash
    assert shape == (6, 4)
    assert np.array_equal(r, rows) and np.array_equal(c, cols)
    assert np.array_equal(v, values)


def test_read_matrix_rejects_garbage():
    with TemporaryDirectory(prefix='blap_') as tmp_dir:
        fpath = os.path.join(tmp_dir, 'bad.blap1')
        with open(fpath, 'wb') as f:
            f.write(b'NOTAMATRIX')
        with pytest.raises(ValueError):
            utils.read_matrix(fpath)


def test_loglog_svg():
    series = {'round-sphere-2': [(0.2, 1e-3), (0.1, 6e-5), (0.05, 4e-6)]}
    with TemporaryDirectory(prefix='blap_') as tmp_dir:
        fpath = utils.loglog_svg(series, os.path.join(tmp_dir, 'conv.svg'))
        with open(fpath) as f:
            text = f.read()
    assert text.startswith('<svg')
    assert text.rstrip().endswith('</svg>')
    assert 'round-sphere-2' in text
