import json
import os
from datetime import datetime
from pathlib import Path

import h5py
import jinja2 as j2

from . import utils
from ._version import __version__


class FragscopeError(Exception):
    """Base error class for fragscope. ``exit_code`` is what the CLI returns."""

    exit_code = 3


class InputError(FragscopeError, ValueError):
    """Bad files, schemas, shapes or violated preconditions on inputs."""

    exit_code = 2


class ValidationError(FragscopeError):
    """A gate failed, e.g. the audit flagged severe multicollinearity."""

    exit_code = 1


class NumericalError(FragscopeError, ArithmeticError):
    """Diverging losses, singular designs and other numerical failures."""

    exit_code = 3


class Attributes(dict):
    """Light dict wrapper to serve as a container of run configuration."""

    def save(self, filename):
        with h5py.File(filename, "a") as f:
            f.attrs.update({k: json.dumps(utils.jsonable(v)) for k, v in self.items()})

    def load(self, filename):
        with h5py.File(filename, "r") as f:
            return {k: json.loads(v) for k, v in f.attrs.items()}

    def provenance(self):
        """The subset of attributes that determines a run's results."""

        keys = (
            "seed",
            "vif_thresh",
            "rho_thresh",
            "resamples",
            "sample_size",
            "model",
            "hidden",
            "lam",
            "k_interval",
            "aggregation",
            "method",
            "epsilon",
            "epochs",
            "lr",
            "batch_size",
            "test_fraction",
            "sample_rows",
            "eval_rows",
            "standardized",
            "version",
        )
        return {k: self[k] for k in keys if k in self}


class Study:
    """Output directory, configuration and report writers for one run.

    Every report goes to ``<directory>/<name>/``. ``execute`` runs a command
    once; at the end all written files and the attributes are archived into
    ``<name>.h5`` in the same folder.
    """

    def __init__(self, name="fragscope", directory=None, **attrs):
        # slugify 'name' to use for the folder and archive
        name = utils.slugify(name)

        self.attrs = Attributes()
        self.attrs["name"] = name
        self.attrs["seed"] = 0
        self.attrs["vif_thresh"] = 10.0
        self.attrs["rho_thresh"] = 0.85
        self.attrs["resamples"] = 10
        self.attrs["sample_size"] = 10000
        self.attrs["sample_rows"] = 5000
        self.attrs["model"] = "logistic"
        self.attrs["hidden"] = [16]
        self.attrs["lam"] = 0.5
        self.attrs["k_interval"] = 1
        self.attrs["aggregation"] = "mean"
        self.attrs["method"] = "linear"
        self.attrs["epsilon"] = 1e-8
        self.attrs["epochs"] = 20
        self.attrs["lr"] = 0.1
        self.attrs["batch_size"] = 64
        self.attrs["test_fraction"] = 0.2
        self.attrs["eval_rows"] = 200
        self.attrs["standardized"] = True
        self.attrs["jobs"] = 1
        self.attrs["quiet"] = False
        self.attrs["version"] = __version__
        self.attrs.update(attrs)

        directory = Path(directory) if directory else Path.cwd() / name
        directory = directory.resolve()
        directory.mkdir(exist_ok=True, parents=True)
        self.attrs["directory"] = os.fspath(directory)

        self.outputs = []
        self.arrays = {}
        # run facts that vary between identical runs, e.g. wall times
        self.metadata = {}

    @property
    def directory(self):
        return Path(self.attrs["directory"])

    def echo(self, message, color=None, **kwargs):
        utils.echo(message, color, quiet=self.attrs["quiet"], **kwargs)

    def write_json(self, filename, payload):
        """Write a report with a provenance block, keys sorted.
        Identical configurations produce byte-identical files.
        """

        payload = {"provenance": self.attrs.provenance(), **payload}
        path = self.directory / filename
        with open(path, "w", encoding="utf-8") as f:
            json.dump(utils.jsonable(payload), f, sort_keys=True, indent=2)
            f.write("\n")
        self.register(path)
        return path

    def write_frame(self, filename, frame):
        path = self.directory / filename
        frame.to_csv(path, index=False)
        self.register(path)
        return path

    def render(self, template, filename, **context):
        env = j2.Environment(
            loader=j2.PackageLoader("fragscope", "templates"),
            trim_blocks=True,
            lstrip_blocks=True,
        )
        rendered = env.get_template(template).render({**self.attrs, **context})

        path = self.directory / filename
        with open(path, "w", encoding="utf-8") as f:
            f.write(rendered)
        self.register(path)
        self.echo(rendered.rstrip("\n"))
        return path

    def keep_arrays(self, group, **arrays):
        self.arrays.setdefault(group, {}).update(arrays)

    def register(self, path):
        if path not in self.outputs:
            self.outputs.append(path)
        self.echo(f"Wrote {path.name}", "green")

    def execute(self, command):
        """Run ``command(self)`` once and archive the results.
        ``command`` returns the exit code.
        """

        if getattr(self, "_hasexecuted", False):
            raise FragscopeError("Study has executed already. Do not run it again.")

        started = datetime.now()
        code = command(self)
        self._hasexecuted = True

        # timestamps stay out of the reports so they can be compared byte by byte
        metadata = {
            "started": started.isoformat(),
            "finished": datetime.now().isoformat(),
            "exit_code": code,
            **self.metadata,
        }
        path = self.directory / "metadata.json"
        with open(path, "w", encoding="utf-8") as f:
            json.dump(utils.jsonable(metadata), f, sort_keys=True, indent=2)
        self.outputs.append(path)

        self._save_attributes_and_files()
        return code

    def _save_attributes_and_files(self):
        h5file = self.directory / (self.attrs["name"] + ".h5")
        with h5py.File(h5file, "w") as f:  # noqa: F841
            pass

        self.attrs.save(h5file)
        for group, arrays in self.arrays.items():
            utils._savearrays(h5file, group, arrays)
        for path in self.outputs:
            utils._savefilesource(h5file, path)
