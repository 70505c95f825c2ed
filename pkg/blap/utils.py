import csv
import hashlib
import os
import struct

import numpy as np


MAGIC = b'BLAP1'
_HEADER = struct.Struct('<32sQQQ')


def compute_sha256(text):
    """Get hexadecimal SHA-256 hash of a string."""
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def compute_file_sha256(fpath):
    """Get hexadecimal SHA-256 hash of a file."""
    with open(fpath, 'rb') as f:
        h = hashlib.sha256(f.read())
    return h.hexdigest()


def to_csv(rows, fpath, fieldnames=None):
    """Write a list of dictionaries to a CSV file."""
    if fieldnames is None:
        fieldnames = list(rows[0].keys()) if rows else []
    with open(fpath, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _cell(row.get(key)) for key in fieldnames})
    return fpath


def _cell(value):
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(value)
    return value


def write_matrix(fpath, layout_hash, shape, rows, cols, values):
    """Write COO triplets to a BLAP1 binary file.

    Layout: magic bytes, then the 32-byte layout hash, row count, column
    count and nnz as 64-bit little-endian unsigned integers, then one
    (u64 row, u64 col, f64 value) record per entry.
    """
    rows = np.asarray(rows, dtype='<u8')
    cols = np.asarray(cols, dtype='<u8')
    values = np.asarray(values, dtype='<f8')
    records = np.empty(len(values), dtype=[('row', '<u8'), ('col', '<u8'),
                                           ('value', '<f8')])
    records['row'], records['col'], records['value'] = rows, cols, values
    os.makedirs(os.path.dirname(fpath) or '.', exist_ok=True)
    with open(fpath, 'wb') as f:
        f.write(MAGIC)
        f.write(_HEADER.pack(bytes.fromhex(layout_hash), shape[0], shape[1],
                             len(values)))
        f.write(records.tobytes())
    return fpath


def read_matrix(fpath):
    """Read a BLAP1 file.

    Returns
    -------
    layout_hash : str
    shape : tuple of int
    rows, cols, values : 1d arrays
    """
    with open(fpath, 'rb') as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError('File %s is not a BLAP1 matrix.' % fpath)
        digest, nrows, ncols, nnz = _HEADER.unpack(f.read(_HEADER.size))
        records = np.frombuffer(
            f.read(), dtype=[('row', '<u8'), ('col', '<u8'), ('value', '<f8')])
    if len(records) != nnz:
        raise ValueError('File %s is truncated.' % fpath)
    return (digest.hex(), (nrows, ncols), records['row'].astype(np.int64),
            records['col'].astype(np.int64), records['value'].copy())


def loglog_svg(series, fpath, xlabel='grid spacing', ylabel='error',
               width=480, height=360):
    """Write a minimal log-log line plot as SVG.

    Parameters
    ----------
    series : dict
        Label -> list of (x, y) points with positive coordinates.
    fpath : str
        Output path.
    """
    margin = 60
    points = [(x, y) for pts in series.values() for x, y in pts
              if x > 0 and y > 0]
    if points:
        lx = np.log10([p[0] for p in points])
        ly = np.log10([p[1] for p in points])
    else:
        lx = ly = np.array([0.0, 1.0])
    xmin, xmax = np.floor(lx.min()), np.ceil(lx.max())
    ymin, ymax = np.floor(ly.min()), np.ceil(ly.max())
    xmax, ymax = max(xmax, xmin + 1), max(ymax, ymin + 1)

    def sx(x):
        return margin + (np.log10(x) - xmin) / (xmax - xmin) * (width - 2 * margin)

    def sy(y):
        return height - margin - (np.log10(y) - ymin) / (ymax - ymin) * (
            height - 2 * margin)

    colors = ['#1f77b4', '#d62728', '#2ca02c', '#9467bd', '#ff7f0e']
    out = ['<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d">'
           % (width, height),
           '<rect width="100%" height="100%" fill="white"/>']
    x0, y0 = margin, height - margin
    out.append('<line x1="%d" y1="%d" x2="%d" y2="%d" stroke="black"/>'
               % (x0, y0, width - margin, y0))
    out.append('<line x1="%d" y1="%d" x2="%d" y2="%d" stroke="black"/>'
               % (x0, y0, x0, margin))
    for e in range(int(xmin), int(xmax) + 1):
        x = sx(10.0 ** e)
        out.append('<text x="%.1f" y="%d" font-size="11" text-anchor="middle">'
                   '1e%d</text>' % (x, y0 + 16, e))
    for e in range(int(ymin), int(ymax) + 1):
        y = sy(10.0 ** e)
        out.append('<text x="%d" y="%.1f" font-size="11" text-anchor="end">'
                   '1e%d</text>' % (x0 - 6, y + 4, e))
    out.append('<text x="%d" y="%d" font-size="12" text-anchor="middle">%s</text>'
               % (width // 2, height - 15, xlabel))
    out.append('<text x="15" y="%d" font-size="12" transform="rotate(-90 15 %d)" '
               'text-anchor="middle">%s</text>' % (height // 2, height // 2, ylabel))
    for i, (label, pts) in enumerate(series.items()):
        color = colors[i % len(colors)]
        pts = [(sx(x), sy(y)) for x, y in pts if x > 0 and y > 0]
        if len(pts) > 1:
            out.append('<polyline fill="none" stroke="%s" points="%s"/>' % (
                color, ' '.join('%.1f,%.1f' % p for p in pts)))
        for x, y in pts:
            out.append('<circle cx="%.1f" cy="%.1f" r="3" fill="%s"/>'
                       % (x, y, color))
        out.append('<text x="%d" y="%d" font-size="11" fill="%s">%s</text>'
                   % (width - margin - 100, margin + 14 * (i + 1), color, label))
    out.append('</svg>')
    with open(fpath, 'w') as f:
        f.write('\n'.join(out))
    return fpath
