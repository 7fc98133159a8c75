import functools
import inspect
import math
import zlib
from pathlib import Path

import h5py
import numpy as np
from joblib import Parallel, delayed
from termcolor import colored


def pretty_repr(_cls):
    """Replace the repr of a report class with a coloured field summary.
    Arrays are summarised by shape so that large reports stay readable.
    """

    def _summary(value):
        if isinstance(value, np.ndarray):
            return f"array{value.shape}"
        if isinstance(value, (list, tuple)) and len(value) > 6:
            return f"{type(value).__name__}[{len(value)}]"
        return repr(value)

    def _repr(self):
        title = colored(type(self).__name__, "red")
        fields = getattr(self, "__dataclass_fields__", {})
        lines = [f"{title}("]
        for name in fields:
            key = colored(name, "cyan")
            lines.append(f"  {key}={_summary(getattr(self, name))},")
        lines.append(")")
        return "\n".join(lines)

    _cls.__repr__ = _repr
    return _cls


def requires_kind(*kinds):
    """Check that the leftmost argument of the wrapped function is a model
    of one of ``kinds``.
    """

    def decorator(func):
        first = next(iter(inspect.signature(func).parameters))
        if first != "m":
            raise TypeError("First argument needs to be 'm'.")

        @functools.wraps(func)
        def wrapper(m, *args, **kwargs):
            if m.kind not in kinds:
                from .fragscope import InputError

                raise InputError(
                    f"{func.__name__}() needs a model of kind {kinds}, got '{m.kind}'."
                )
            return func(m, *args, **kwargs)

        return wrapper

    return decorator


# fixed stream identifiers so that seeds for different purposes never collide
_PURPOSES = ("resample", "train", "coalitions", "background", "sharp", "split", "rows")


def derive_seeds(seed, count, purpose):
    """Split a master seed into ``count`` child seeds for one purpose.
    Children depend only on (seed, purpose, position) so results are the same
    for any number of workers.
    """

    stream = _PURPOSES.index(purpose)
    children = np.random.SeedSequence(entropy=int(seed), spawn_key=(stream,)).spawn(
        count
    )
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]


def rng_for(seed, purpose):
    return np.random.default_rng(derive_seeds(seed, 1, purpose)[0])


def parallel_map(func, items, n_jobs=1):
    """Map ``func`` over ``items`` with joblib, keeping input order."""

    items = list(items)
    if n_jobs == 1 or len(items) < 2:
        return [func(item) for item in items]
    return Parallel(n_jobs=n_jobs)(delayed(func)(item) for item in items)


def echo(message, color=None, quiet=False, **kwargs):
    if quiet:
        return
    if color:
        message = colored(message, color, **kwargs)
    print(message)


def slugify(name):
    return name.replace(" ", "_").lower()


def jsonable(value):
    """Convert numpy containers and non-finite floats to JSON-safe values.
    Infinities are written as the string ``"inf"``.
    """

    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return None
        return value
    if isinstance(value, Path):
        return str(value)
    return value


def checksum(array):
    return format(zlib.crc32(np.ascontiguousarray(array).tobytes()), "08x")


def _savearrays(h5file, group, arrays):
    with h5py.File(h5file, "a") as f:
        grp = f.require_group(group)
        for key, value in arrays.items():
            if key in grp:
                del grp[key]
            grp.create_dataset(key, data=np.asarray(value))


def _savefilesource(h5file, path):
    with h5py.File(h5file, "a") as f:
        with open(path, "rb") as pf:
            lines = pf.readlines()
        name = Path(path).name
        if name in f:
            del f[name]
        f.create_dataset(name, data=lines)
