"""Run configuration and the append-only store of run outputs"""
import datetime
import hashlib
import json
import logging
import os
import shutil
import tempfile

import pandas as pd

from . import __version__
from .exceptions import ConfigError

logger = logging.getLogger(__name__)

OUTPUT_DIR_VARIABLE = "RRRFLOW_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "rrrflow-results"


def _floats(value):
    return isinstance(value, list) and len(value) > 0 and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)


def _ints(value):
    return isinstance(value, list) and len(value) > 0 and all(
        isinstance(v, int) and not isinstance(v, bool) for v in value)


def _number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _integer(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _point(value):
    return value is None or _floats(value)


def _mode(value):
    return value is None or value in ("smooth", "piecewise")


def _nullable_int(value):
    return value is None or _integer(value)


_checks = {
    "number": (_number, "a number"),
    "integer": (_integer, "an integer"),
    "numbers": (_floats, "a nonempty list of numbers"),
    "integers": (_ints, "a nonempty list of integers"),
    "point": (_point, "null or a list of numbers"),
    "mode": (_mode, "null, 'smooth' or 'piecewise'"),
    "string": (lambda v: isinstance(v, str), "a string"),
    "bool": (lambda v: isinstance(v, bool), "true or false"),
    "optional_integer": (_nullable_int, "null or an integer"),
}

# Parameters of each command with their kind and default
SCHEMA = {
    "linearize": {"instance": ("string", "orthogonal-lines"), "point": ("point", None), "theta": ("point", None)},
    "flow": {"instance": ("string", "orthogonal-lines"), "x0": ("point", None), "T": ("number", 10.0),
             "mode": ("mode", None), "step": ("number", 1e-3), "window": ("point", None)},
    "hitting": {"instance": ("string", "orthogonal-lines"), "x0": ("point", None), "delta": ("number", 0.1),
                "eps": ("numbers", [0.01, 0.005, 0.0025]), "k_max": ("optional_integer", None),
                "mode": ("mode", None)},
    "wdomain": {"instance": ("string", "planar-sliding"), "x0": ("point", None), "T": ("number", 10.0),
                "margin": ("number", 10.0)},
    "meso": {"instance": ("string", "finite-1d"), "beta": ("numbers", [0.5]), "box": ("point", None),
             "samples": ("integer", 100000), "seeds": ("integers", [0]), "tau": ("number", 0.0),
             "percolate": ("bool", False), "nontrivial_only": ("bool", False)},
    "ledm-run": {"m": ("integer", 4), "beta": ("numbers", [0.1, 0.2, 0.3]), "trials": ("integer", 20),
                 "k_max": ("integer", 20000), "delta_enter": ("number", 1e-2), "delta_solve": ("number", 3e-2),
                 "beta_max": ("number", 0.3)},
    "ledm-heatmap": {"m": ("integers", [2, 3, 4]), "beta": ("numbers", [0.1, 0.2, 0.3]),
                     "trials": ("integer", 20), "k_max": ("integer", 20000), "delta_enter": ("number", 1e-2),
                     "delta_solve": ("number", 3e-2), "bins": ("integer", 20),
                     "burn_in": ("optional_integer", None)},
    "selftest": {"quick": ("bool", True)},
}


class RunConfig:
    """A validated run configuration: a command, its parameters, a seed, an output path and a format"""

    def __init__(self, command, params=None, seed=0, out=None, format="csv"):
        self.command = command
        self.params = dict(params or {})
        self.seed = seed
        self.out = out
        self.format = format
        self.validate()
        defaults = {key: default for key, (_, default) in SCHEMA[self.command].items()}
        self.params = {**defaults, **self.params}

    def validate(self):
        """Raise ConfigError listing every invalid field"""
        diagnostics = []
        if self.command not in SCHEMA:
            raise ConfigError("Invalid configuration", [("command", "unknown command %r (expected one of %s)" %
                                                         (self.command, ", ".join(sorted(SCHEMA))))])
        if not _integer(self.seed) or self.seed < 0:
            diagnostics.append(("seed", "must be a nonnegative integer"))
        if self.format not in ("csv", "json"):
            diagnostics.append(("format", "must be 'csv' or 'json'"))
        if self.out is not None and not isinstance(self.out, str):
            diagnostics.append(("out", "must be a path"))
        schema = SCHEMA[self.command]
        for key, value in self.params.items():
            if key not in schema:
                diagnostics.append(("params.%s" % key, "unknown parameter for %s" % self.command))
                continue
            check, description = _checks[schema[key][0]]
            if not check(value):
                diagnostics.append(("params.%s" % key, "must be %s, got %r" % (description, value)))
        if diagnostics:
            raise ConfigError("Invalid configuration", diagnostics)

    def to_dict(self):
        return {"command": self.command, "params": self.params, "seed": self.seed, "out": self.out,
                "format": self.format}

    def canonical_bytes(self):
        """The stored form of the configuration, hashed by manifests"""
        return (json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n").encode("utf-8")

    @staticmethod
    def from_dict(d, **overrides):
        """Build a configuration from a parsed document, with non-None overrides taking precedence.

        Parameter overrides go in ``overrides["params"]``; the other keys override top-level fields.
        """
        if not isinstance(d, dict):
            raise ConfigError("Invalid configuration", [("<root>", "must be a JSON object")])
        unknown = set(d) - {"command", "params", "seed", "out", "format"}
        if unknown:
            raise ConfigError("Invalid configuration", [(k, "unknown field") for k in sorted(unknown)])
        params = d.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("Invalid configuration", [("params", "must be a JSON object")])
        params = {**params, **{k: v for k, v in overrides.pop("params", {}).items() if v is not None}}
        fields = {**{k: v for k, v in d.items() if k != "params"},
                  **{k: v for k, v in overrides.items() if v is not None}}
        if "command" not in fields:
            raise ConfigError("Invalid configuration", [("command", "missing")])
        return RunConfig(fields["command"], params, fields.get("seed", 0), fields.get("out"),
                         fields.get("format", "csv"))

    @staticmethod
    def load(path, **overrides):
        """Read a JSON configuration file, reporting syntax errors with their line and column"""
        with open(path) as f:
            text = f.read()
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError("Invalid JSON in %s" % path, [("line %d column %d" % (e.lineno, e.colno), e.msg)])
        return RunConfig.from_dict(d, **overrides)

    def __repr__(self):
        return "RunConfig(%r, seed=%d)" % (self.command, self.seed)


def sha256_bytes(data):
    return hashlib.sha256(data).hexdigest()


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def frame_to_csv_bytes(frame):
    """CSV bytes of a table: comma separated, '.' decimal, header row, LF line endings"""
    return frame.to_csv(index=False, lineterminator="\n").encode("utf-8")


def to_json_bytes(obj):
    return (json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n").encode("utf-8")


def _json_default(obj):
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if isinstance(obj, pd.DataFrame):
        return obj.to_dict(orient="records")
    raise TypeError("Not serializable: %r" % type(obj))


def _manifest(config_bytes, artifacts, command):
    return {"config_sha256": sha256_bytes(config_bytes),
            "created": datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
            "version": __version__,
            "command": command,
            "artifacts": {name: sha256_bytes(data) for name, data in sorted(artifacts.items())}}


class ResultStore:
    """An append-only directory of runs. Each run directory holds config.json, manifest.json and its artifacts.

    Runs are assembled in a temporary directory and renamed into place, so a failed run leaves nothing behind and an
    existing run is never overwritten.
    """

    def __init__(self, root=None):
        self.root = root or os.environ.get(OUTPUT_DIR_VARIABLE) or DEFAULT_OUTPUT_DIR

    def runs(self):
        if not os.path.isdir(self.root):
            return []
        return sorted(d for d in os.listdir(self.root)
                      if os.path.isfile(os.path.join(self.root, d, "manifest.json")))

    def commit(self, config, artifacts):
        """Store a finished run.

        Args:
            config (RunConfig): The configuration of the run.
            artifacts (dict): File name to bytes.

        Returns:
            str: Path of the run directory.

        """
        os.makedirs(self.root, exist_ok=True)
        config_bytes = config.canonical_bytes()
        manifest = _manifest(config_bytes, artifacts, config.command)
        stem = "%s-%s-%s" % (config.command, manifest["created"].replace(":", "").replace("-", ""),
                             manifest["config_sha256"][:8])
        staging = tempfile.mkdtemp(prefix=".staging-", dir=self.root)
        try:
            for name, data in artifacts.items():
                with open(os.path.join(staging, name), "wb") as f:
                    f.write(data)
            with open(os.path.join(staging, "config.json"), "wb") as f:
                f.write(config_bytes)
            with open(os.path.join(staging, "manifest.json"), "wb") as f:
                f.write(to_json_bytes(manifest))
            target = os.path.join(self.root, stem)
            suffix = 1
            while os.path.exists(target):
                target = os.path.join(self.root, "%s.%d" % (stem, suffix))
                suffix += 1
            os.rename(staging, target)
        except BaseException:
            shutil.rmtree(staging, ignore_errors=True)
            raise
        logger.info("Stored run in %s", target)
        return target


def commit_file(path, data, config):
    """Write a single artifact to path with its manifest in path + '.manifest.json'. Existing files are kept"""
    for target in (path, path + ".manifest.json"):
        if os.path.exists(target):
            raise FileExistsError("Refusing to overwrite %s" % target)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    manifest = _manifest(config.canonical_bytes(), {os.path.basename(path): data}, config.command)
    manifest["config"] = config.to_dict()
    for target, payload in ((path, data), (path + ".manifest.json", to_json_bytes(manifest))):
        fd, tmp = tempfile.mkstemp(prefix=".staging-", dir=directory)
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(payload)
            os.replace(tmp, target)
        except BaseException:
            os.remove(tmp)
            raise
    return path


def verify_manifest(run_dir):
    """Check that a run directory matches its manifest byte for byte.

    Returns:
        list of str: Problems found, empty when the run is intact.

    """
    problems = []
    with open(os.path.join(run_dir, "manifest.json")) as f:
        manifest = json.load(f)
    if sha256_file(os.path.join(run_dir, "config.json")) != manifest.get("config_sha256"):
        problems.append("config.json does not match its hash")
    for name, digest in manifest.get("artifacts", {}).items():
        path = os.path.join(run_dir, name)
        if not os.path.isfile(path):
            problems.append("%s is missing" % name)
        elif sha256_file(path) != digest:
            problems.append("%s does not match its hash" % name)
    return problems
