"""
Checkpoint Files
Human-readable JSON manifest (name, shape, byte offset) followed by raw little-endian float64 data.
"""
import json
import os
from collections import OrderedDict

import numpy as np

from errors import CheckpointError

MAGIC = b'CHARMLAB-CKPT 1\n'
FLOAT = np.dtype('<f8')


def save_checkpoint(path, arrays, meta=None):
    """Write named arrays bit-exactly; `meta` is any JSON-serializable dict"""
    manifest, offset = [], 0
    for name, value in arrays.items():
        value = np.asarray(value, dtype=np.float64)
        manifest.append({'name': name, 'shape': list(value.shape), 'offset': offset})
        offset += value.size * FLOAT.itemsize
    header = json.dumps({'meta': meta or {}, 'tensors': manifest}, indent=1, sort_keys=True).encode()

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = f'{path}.tmp'
    with open(tmp, 'wb') as fh:
        fh.write(MAGIC)
        fh.write(f'{len(header)}\n'.encode())
        fh.write(header)
        fh.write(b'\n')
        for value in arrays.values():
            fh.write(np.ascontiguousarray(value, dtype=FLOAT).tobytes())
    os.replace(tmp, path)


def load_checkpoint(path):
    """Return (arrays, meta) from a file written by save_checkpoint"""
    if not os.path.isfile(path):
        raise CheckpointError(f'checkpoint not found: {path}')
    with open(path, 'rb') as fh:
        if fh.readline() != MAGIC:
            raise CheckpointError(f'not a checkpoint file: {path}')
        try:
            size = int(fh.readline())
            header = json.loads(fh.read(size))
        except ValueError as exc:
            raise CheckpointError(f'corrupt checkpoint header in {path}', details=str(exc)) from None
        fh.read(1)
        blob = fh.read()

    arrays = OrderedDict()
    for entry in header['tensors']:
        count = int(np.prod(entry['shape'], dtype=np.int64))
        end = entry['offset'] + count * FLOAT.itemsize
        if end > len(blob):
            raise CheckpointError(f'checkpoint truncated at "{entry["name"]}"')
        data = np.frombuffer(blob, dtype=FLOAT, count=count, offset=entry['offset'])
        arrays[entry['name']] = data.astype(np.float64).reshape(entry['shape'])
    return arrays, header['meta']
