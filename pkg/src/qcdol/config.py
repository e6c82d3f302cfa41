"""
Run configuration: flat ``key = value`` text with ``#`` comments.

Matrices come from sidecar files holding whitespace-separated ``re im`` pairs
in row-major order; relative paths resolve against the config file's
directory. Unknown keys are rejected so typos do not pass silently.
"""

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .control_model import AffineProtocol, BilinearSystem
from .errors import ConfigError
from .integrators import ButcherTableau, tableau
from .linalg_core import density_matrix
from .pipeline import OVERSAMPLE, TOL_REF
from .twoqubit import RHO_D, default_setup, twoqubit_system


@dataclass(frozen=True)
class RunConfig:
    """
    Everything a CLI command needs.

    The threshold fields hold values pinned by oracle runs on the two-qubit
    defaults (see ``DEFAULT_CONFIG_TEXT``).
    """

    system: str = "twoqubit"
    T: float = 1.0
    K: float = 1.0
    grids: tuple = (64, 128, 256, 512, 1024, 2048, 4096)
    orders: tuple = (1, 2, 3, 4, 5)
    oversample: int = OVERSAMPLE
    tol_ref: float = TOL_REF
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)
    seed: int = 0
    out: str = "."
    rho0: str = "default"
    sigma0: str = "default"
    h0_file: str = ""
    control_files: tuple = ()
    protocol_files: tuple = ()
    protocol_offsets: tuple = ()
    rho0_file: str = ""
    sigma0_file: str = ""
    eps_pass: float = 1e-3
    decrease_factor: float = 16.0
    jitter: float = 0.05
    slope_min: float = -1.4
    slope_max: float = -0.6
    slope_from: int = 256
    limit_tol: float = 0.10
    overlap_tol: float = 0.05
    overlap_from: int = 512
    vacuous_below: float = 1e-8
    appendix_a_tol: float = 1e-5
    appendix_b_tol: float = 1e-8
    appendix_samples: int = 16
    appendix_pairs: int = 50
    t_long: float = 0.29
    trace_steps: int = 2900
    v_threshold: float = 0.01
    tableaux: dict = field(default_factory=dict)
    base_dir: str = "."

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError("T must be positive")
        if not self.K > 0:
            raise ConfigError("K must be positive")
        if not self.orders:
            raise ConfigError("orders must be nonempty")
        if any(o not in (1, 2, 3, 4, 5) for o in self.orders):
            raise ConfigError("orders must be a subset of 1..5")
        if not self.grids or any(n < 1 for n in self.grids):
            raise ConfigError("grids must be positive integers")
        if self.oversample < 1:
            raise ConfigError("oversample must be a positive integer")
        if self.n_ref % 2:
            raise ConfigError("oversample * max(grids) must be even")
        bad = [n for n in self.grids if self.n_ref % n]
        if bad:
            raise ConfigError(f"grids {bad} do not divide oversample * max(grids) = {self.n_ref}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.system not in ("twoqubit", "file"):
            raise ConfigError("system must be 'twoqubit' or 'file'")
        if not self.t_long > 0 or self.trace_steps < 1:
            raise ConfigError("t_long and trace_steps must be positive")

    @property
    def n_ref(self):
        return self.oversample * max(self.grids)

    def path(self, name):
        p = Path(name)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def build_system(self):
        if self.system == "twoqubit":
            return twoqubit_system(self.K)
        if not self.h0_file or not self.control_files:
            raise ConfigError("file systems need h0_file and control_files")
        if len(self.protocol_files) != len(self.control_files):
            raise ConfigError("need one protocol file per control file")
        offsets = self.protocol_offsets or (0.0,) * len(self.control_files)
        if len(offsets) != len(self.control_files):
            raise ConfigError("need one protocol offset per control file")
        try:
            h0 = load_matrix(self.path(self.h0_file))
            hk = [load_matrix(self.path(f)) for f in self.control_files]
            ps = [AffineProtocol(load_matrix(self.path(f)), c) for f, c in zip(self.protocol_files, offsets)]
            return BilinearSystem(h0, hk, ps)
        except ValueError as err:
            raise ConfigError(str(err)) from err

    def initial_states(self):
        """``(rho0, sigma0)`` as validated density matrices."""
        setup = default_setup(self.K, self.T) if self.system == "twoqubit" else None

        def pick(choice, path, default, rho0=None):
            if path:
                return load_matrix(self.path(path))
            if choice == "default":
                if default is None:
                    raise ConfigError("file systems need explicit initial-state files")
                return default
            if choice == "target" and setup is not None:
                return RHO_D.copy()
            if choice == "rho0" and rho0 is not None:
                return rho0.copy()
            raise ConfigError(f"unsupported initial state choice {choice!r}")

        rho0 = pick(self.rho0, self.rho0_file, None if setup is None else setup.rho0)
        sigma0 = pick(self.sigma0, self.sigma0_file, None if setup is None else setup.sigma0, rho0)
        try:
            return density_matrix(rho0), density_matrix(sigma0)
        except ValueError as err:
            raise ConfigError(f"invalid initial state: {err}") from err

    def tableau(self, order):
        return self.tableaux.get(order, tableau(order))


def load_matrix(path):
    """
    Square complex matrix from a sidecar file of ``re im`` pairs, row-major.

    Raises
    ------
    ConfigError
        When the file is missing or does not hold a square number of pairs.
    """
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read matrix file {path}: {err}") from err
    tokens = []
    for line in text.splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    try:
        vals = np.array([float(t) for t in tokens])
    except ValueError as err:
        raise ConfigError(f"non-numeric entry in {path}") from err
    if vals.size % 2:
        raise ConfigError(f"{path}: odd number of values, expected re im pairs")
    n = vals.size // 2
    d = int(round(np.sqrt(n)))
    if d < 1 or d * d != n:
        raise ConfigError(f"{path}: {n} entries do not form a square matrix")
    return (vals[0::2] + 1j * vals[1::2]).reshape(d, d)


def save_matrix(path, a):
    """Inverse of :func:`load_matrix`; one matrix row per line."""
    a = np.asarray(a, dtype=complex)
    lines = ["  ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in row) for row in a]
    Path(path).write_text("\n".join(lines) + "\n")


_FLOATS = {
    "T", "K", "tol_ref", "eps_pass", "decrease_factor", "jitter", "slope_min", "slope_max",
    "limit_tol", "overlap_tol", "vacuous_below", "appendix_a_tol", "appendix_b_tol", "t_long", "v_threshold",
}
_INTS = {"oversample", "workers", "seed", "slope_from", "overlap_from", "appendix_samples", "appendix_pairs", "trace_steps"}
_STRS = {"system", "out", "rho0", "sigma0", "h0_file", "rho0_file", "sigma0_file"}
_INT_LISTS = {"grids", "orders"}
_STR_LISTS = {"control_files", "protocol_files"}
_FLOAT_LISTS = {"protocol_offsets"}


def _float_list(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


def _tableau_override(tables, key, value):
    # tableau<order>_<part> = ...; rows of a are separated by ';'
    head, _, part = key.partition("_")
    try:
        order = int(head[len("tableau"):])
        base = tableau(order)
    except ValueError as err:
        raise ConfigError(f"bad tableau key {key!r}") from err
    cur = tables.setdefault(order, {"a": base.a, "b": base.b, "c": base.c})
    if part == "a":
        rows = [_float_list(r) for r in value.split(";")]
        s = len(rows)
        a = np.zeros((s, s))
        for i, r in enumerate(rows):
            a[i, : len(r)] = r
        cur["a"] = a
    elif part in ("b", "c"):
        cur[part] = np.array(_float_list(value))
    else:
        raise ConfigError(f"bad tableau key {key!r}")


def parse_config(text, base_dir="."):
    """Build a :class:`RunConfig` from config text."""
    kw = {}
    tabs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key in _FLOATS:
                kw[key] = float(value)
            elif key in _INTS:
                kw[key] = int(value)
            elif key in _STRS:
                kw[key] = value
            elif key in _INT_LISTS:
                kw[key] = tuple(sorted(set(int(x) for x in value.replace(",", " ").split())))
            elif key in _STR_LISTS:
                kw[key] = tuple(x for x in value.replace(",", " ").split())
            elif key in _FLOAT_LISTS:
                kw[key] = _float_list(value)
            elif key.startswith("tableau"):
                _tableau_override(tabs, key, value)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {value!r}") from err
    kw["tableaux"] = {o: ButcherTableau(o, **parts) for o, parts in tabs.items()}
    return RunConfig(base_dir=str(base_dir), **kw)


def load_config(path=None, **overrides):
    """Read a config file (defaults when ``path`` is ``None``) and apply overrides."""
    if path is None:
        cfg = RunConfig()
    else:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
        cfg = parse_config(text, p.parent)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **overrides) if overrides else cfg


DEFAULT_CONFIG_TEXT = """\
# Two-qubit Bell-state preparation, oracle-pinned thresholds.
system = twoqubit
T = 1.0
K = 1.0
grids = 64, 128, 256, 512, 1024, 2048, 4096
orders = 1, 2, 3, 4, 5
oversample = 64
tol_ref = 1e-9

# largest ||F(4096, 1)|| observed is 6.56e-4 (orders 3-5)
eps_pass = 1e-3
decrease_factor = 16
jitter = 0.05
slope_min = -1.4
slope_max = -0.6
limit_tol = 0.10
overlap_tol = 0.05

# V(t) = (1 - tanh 8t) / 2 crosses 0.01 at t = 0.2872
t_long = 0.29
trace_steps = 2900
v_threshold = 0.01
"""
